"""Sampling token strings whose decoding extends a character prompt.

:func:`conditional_token_generation` draws a covering member in proportion
to its prefix probability and then continues ancestrally, which samples from
the token distribution conditioned on the decoding starting with the prompt.
:func:`rejection_oracle` is the slow ground truth, :func:`token_healing` the
common heuristic it is compared against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .charlm import sample_index, state_for
from .covering import CoverState, logsumexp
from .errors import HealingFailed, OracleRequiresCap, UndefinedConditional
from .lm import CappedLM, TableLM, TokenLM, enumerate_token_strings
from .vocab import Vocabulary, as_bytes, greedy_encode


@dataclass(frozen=True)
class CoverCategorical:
    """Covering members weighted by ``p(y) / Z`` with ``Z`` the prompt's prefix prob."""

    ys: tuple
    weights: np.ndarray
    log_z: float

    @property
    def z(self) -> float:
        return math.exp(self.log_z)

    @classmethod
    def from_items(cls, items) -> "CoverCategorical":
        items = sorted(items, key=lambda it: it.y)
        log_z = logsumexp([it.logp for it in items])
        if log_z == -math.inf:
            raise UndefinedConditional("the prompt has probability zero")
        w = np.array([math.exp(it.logp - log_z) for it in items])
        return cls(tuple(it.y for it in items), w / w.sum(), log_z)

    def as_dict(self) -> dict:
        return dict(zip(self.ys, self.weights.tolist()))

    def sample(self, rng: np.random.Generator) -> tuple:
        return self.ys[sample_index(rng, self.weights)]

    def top(self) -> tuple:
        order = sorted(range(len(self.ys)), key=lambda i: (-self.weights[i], self.ys[i]))
        return self.ys[order[0]]


def _state_items(state) -> list:
    return list(state.items) if isinstance(state, CoverState) else state.items()


def cover_categorical(lm, v, x, mode="exact") -> CoverCategorical:
    return CoverCategorical.from_items(_state_items(state_for(lm, v, x, mode)))


def sample_completion(lm: TokenLM, y=(), rng=None, *, max_tokens: int | None = None) -> tuple:
    """Append tokens drawn from the LM until EOS; ``max_tokens`` caps the total length."""
    rng = np.random.default_rng(rng)
    y = list(y)
    eos = lm.vocab_size
    while max_tokens is None or len(y) < max_tokens:
        t = sample_index(rng, lm.next(y).probs)
        if t == eos:
            break
        y.append(t)
    return tuple(y)


def conditional_token_generation(lm, v, x, mode="exact", rng=None) -> tuple:
    """A token string ``y`` with ``decode(y)`` starting with ``x``, drawn from
    the LM's distribution conditioned on that event.
    """
    rng = np.random.default_rng(rng)
    head = cover_categorical(lm, v, x, mode).sample(rng)
    return sample_completion(lm, head, rng)


def _require_cap(lm) -> int:
    cap = getattr(lm, "cap", None)
    if not isinstance(lm, (TableLM, CappedLM)) or cap is None:
        raise OracleRequiresCap("this oracle needs an LM with a token cap")
    return cap


def rejection_oracle(lm, v, x, rng=None, *, max_trials: int = 10_000_000,
                     return_trials: bool = False):
    """Sample from the LM until the decoding starts with ``x``."""
    _require_cap(lm)
    rng = np.random.default_rng(rng)
    x = as_bytes(x)
    for trial in range(1, max_trials + 1):
        y = sample_completion(lm, (), rng)
        if v.decode(y).startswith(x):
            return (y, trial) if return_trials else y
    raise UndefinedConditional(f"no accepted sample in {max_trials} trials")


def healing_candidates(lm, v, x) -> tuple:
    """``(base, [(token, weight)])``: the greedy encoding minus its last token
    and the renormalised tokens whose decoding starts with the rest of ``x``.
    """
    x = as_bytes(x)
    if not x:
        raise HealingFailed("token healing needs a non-empty prompt")
    base = greedy_encode(v, x)[:-1]
    suffix = x[len(v.decode(base)):]
    probs = lm.next(base).token_probs
    cands = [(t, float(probs[t])) for t, e in enumerate(v.entries)
             if e.startswith(suffix) and probs[t] > 0.0]
    total = sum(p for _, p in cands)
    if not cands:
        raise HealingFailed(f"no token continues {suffix!r} after backing up")
    return base, [(t, p / total) for t, p in cands]


def token_healing(lm, v, x, rng=None) -> tuple:
    rng = np.random.default_rng(rng)
    base, cands = healing_candidates(lm, v, x)
    t = cands[sample_index(rng, np.array([p for _, p in cands]))][0]
    return sample_completion(lm, base + (t,), rng)


def naive_generation(lm, v, x, rng=None) -> tuple:
    """Continue the greedy encoding of ``x`` with no boundary correction."""
    return sample_completion(lm, greedy_encode(v, as_bytes(x)), rng)


# ---------------------------------------------------------------------------
# Exact output distributions (for capped models)
# ---------------------------------------------------------------------------


def enumerate_completions(lm, prefix, max_tokens: int) -> Iterator[tuple]:
    """``(prefix∘z, p(z | prefix) · p(EOS | prefix∘z))`` for every completion."""
    stack = [(tuple(prefix), 1.0)]
    while stack:
        y, p = stack.pop()
        dist = lm.next(y)
        stop = 1.0 if len(y) >= max_tokens else dist.eos
        if p * stop > 0.0:
            yield y, p * stop
        if len(y) >= max_tokens:
            continue
        probs = dist.token_probs
        for t in np.flatnonzero(probs)[::-1]:
            stack.append((y + (int(t),), p * probs[t]))


def first_stage_distribution(first_stage: dict, lm, max_tokens: int) -> dict:
    out: dict = {}
    for head, w in first_stage.items():
        for y, p in enumerate_completions(lm, head, max_tokens):
            out[y] = out.get(y, 0.0) + w * p
    return out


def conditional_output_distribution(lm, v, x, mode="exact") -> dict:
    """Exact law of :func:`conditional_token_generation` as ``{y: prob}``."""
    cap = _require_cap(lm)
    return first_stage_distribution(cover_categorical(lm, v, x, mode).as_dict(), lm, cap)


def healing_output_distribution(lm, v, x) -> dict:
    cap = _require_cap(lm)
    base, cands = healing_candidates(lm, v, x)
    return first_stage_distribution({base + (t,): p for t, p in cands}, lm, cap)


def conditioned_distribution(lm, v, x) -> dict:
    """Reference law ``Pr[Y = y | decode(Y) starts with x]`` by full enumeration."""
    cap = _require_cap(lm)
    x = as_bytes(x)
    kept = {y: p for y, p in enumerate_token_strings(lm, cap) if v.decode(y).startswith(x)}
    z = sum(kept.values())
    if z <= 0.0:
        raise UndefinedConditional(f"prompt {x!r} has probability zero")
    return {y: p / z for y, p in kept.items()}


def prefix_mass(first_stage: dict, target, lm) -> float:
    """Probability that a sampler with the given first stage emits a string
    starting with the token string ``target``.
    """
    target = tuple(target)
    total = 0.0
    for head, w in first_stage.items():
        head = tuple(head)
        if head[: len(target)] == target:
            total += w
        elif target[: len(head)] == head:
            p = 1.0
            for i in range(len(head), len(target)):
                p *= lm.next(target[:i]).probs[target[i]]
            total += w * p
    return total


def tv_distance(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def empirical(samples) -> dict:
    out: dict = {}
    for s in samples:
        out[s] = out.get(s, 0) + 1
    n = len(samples)
    return {k: c / n for k, c in out.items()}


def heal_report(lm, v, x, mode="exact", rng=None) -> dict:
    """Side-by-side naive, healed and covering-based continuations of ``x``."""
    x = as_bytes(x)
    rng = np.random.default_rng(rng)
    cat = cover_categorical(lm, v, x, mode)
    top = cat.top()
    base, cands = healing_candidates(lm, v, x)
    healing_stage = {base + (t,): p for t, p in cands}
    naive = naive_generation(lm, v, x, rng)
    healed = token_healing(lm, v, x, rng)
    exact = conditional_token_generation(lm, v, x, mode, rng)
    return {
        "prompt": x,
        "greedy_encoding": greedy_encode(v, x),
        "cover_top": top,
        "cover_top_weight": float(cat.as_dict()[top]),
        "healing_first_stage": healing_stage,
        "healing_mass_on_cover_top": prefix_mass(healing_stage, top, lm),
        "conditional_mass_on_cover_top": prefix_mass(cat.as_dict(), top, lm),
        "naive": naive,
        "healed": healed,
        "conditional": exact,
    }
