"""Character-level language model on top of a token-level one.

Every query runs through a *state* for a character prefix; the mode decides
which engine backs it:

``exact``
    the full covering, no pruning;
``bucket:K``
    the covering with top-K bucket pruning;
``bundled:K``
    the bundled beam of width K (the default, K=32).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .beam import BeamState
from .covering import CoverState, prune_nothing, prune_top_K_buckets
from .distributions import EOS_BYTE, N_BYTES, NextCharDistribution
from .errors import UndefinedConditional
from .lm import TokenLM
from .vocab import Vocabulary, as_bytes

MODE_KINDS = ("exact", "bucket", "bundled")
DEFAULT_K = 32


@dataclass(frozen=True)
class Mode:
    kind: str = "bundled"
    K: int | None = DEFAULT_K

    def __post_init__(self):
        if self.kind not in MODE_KINDS:
            raise ValueError(f"unknown mode {self.kind!r}")
        if self.kind == "exact" and self.K is not None:
            object.__setattr__(self, "K", None)
        if self.K is not None and self.K < 1:
            raise ValueError("beam width must be >= 1")

    @classmethod
    def parse(cls, text: str, K: int | None = None) -> "Mode":
        """``"exact"``, ``"bucket"``, ``"bundled:16"``; ``K`` fills a missing width."""
        kind, _, width = str(text).partition(":")
        kind = kind.strip().lower()
        if width:
            K = None if width in ("inf", "none") else int(width)
        elif kind != "exact" and K is None:
            K = DEFAULT_K
        return cls(kind, K)

    @classmethod
    def exact(cls) -> "Mode":
        return cls("exact", None)

    def prune(self) -> Callable:
        if self.kind == "bucket" and self.K is not None:
            return prune_top_K_buckets(self.K)
        return prune_nothing

    def __str__(self):
        if self.kind == "exact":
            return "exact"
        return f"{self.kind}:{'inf' if self.K is None else self.K}"


def as_mode(mode) -> Mode | Callable:
    """Accept a :class:`Mode`, its string form, or a bare prune function."""
    if mode is None:
        return Mode()
    if isinstance(mode, Mode):
        return mode
    if isinstance(mode, str):
        return Mode.parse(mode)
    if callable(mode):
        return mode
    raise TypeError(f"cannot interpret {mode!r} as a mode")


def initial_state(lm: TokenLM, v: Vocabulary, mode=None):
    mode = as_mode(mode)
    if not isinstance(mode, Mode):
        return CoverState(lm, v, mode)
    if mode.kind == "bundled":
        return BeamState(lm, v, mode.K)
    return CoverState(lm, v, mode.prune())


def state_for(lm: TokenLM, v: Vocabulary, x, mode=None):
    return initial_state(lm, v, mode).extend(as_bytes(x))


def log_prefix_prob(lm, v, x, mode=None) -> float:
    return state_for(lm, v, x, mode).log_prefix_prob()


def prefix_prob(lm, v, x, mode=None) -> float:
    return math.exp(log_prefix_prob(lm, v, x, mode))


def log_full_prob(lm, v, x, mode=None) -> float:
    return state_for(lm, v, x, mode).log_full_prob()


def full_prob(lm, v, x, mode=None) -> float:
    return math.exp(log_full_prob(lm, v, x, mode))


def log_cond_prefix_prob(lm, v, x, x2, mode=None) -> float:
    state = state_for(lm, v, x, mode)
    denom = state.log_prefix_prob()
    if denom == -math.inf:
        raise UndefinedConditional(f"prefix {as_bytes(x)!r} has probability zero")
    return state.extend(as_bytes(x2)).log_prefix_prob() - denom


def cond_prefix_prob(lm, v, x, x2, mode=None) -> float:
    """Probability of continuing with ``x2`` given that the string starts with ``x``."""
    return math.exp(log_cond_prefix_prob(lm, v, x, x2, mode))


def eos_prob(lm, v, x, mode=None) -> float:
    """Probability that the string ends right after ``x``, given prefix ``x``."""
    state = state_for(lm, v, x, mode)
    denom = state.log_prefix_prob()
    if denom == -math.inf:
        raise UndefinedConditional(f"prefix {as_bytes(x)!r} has probability zero")
    return math.exp(state.log_full_prob() - denom)


def next_char_dist_slow(lm, v, x, mode="exact") -> NextCharDistribution:
    """One independent prefix query per alphabet byte, plus one for EOS."""
    x = as_bytes(x)
    z = prefix_prob(lm, v, x, mode)
    if z <= 0.0:
        raise UndefinedConditional(f"prefix {x!r} has probability zero")
    masses = np.zeros(N_BYTES + 1)
    for c in v.alphabet:
        masses[c] = prefix_prob(lm, v, x + bytes([c]), mode)
    masses[EOS_BYTE] = full_prob(lm, v, x, mode)
    return NextCharDistribution.from_masses(masses)


def next_char_dist(lm, v, x, mode=None) -> NextCharDistribution:
    """Distribution of the next byte (or EOS) from a single pass over the covering."""
    state = state_for(lm, v, x, mode)
    masses = state.next_char_masses()
    if not masses.sum() > 0:
        raise UndefinedConditional(f"prefix {as_bytes(x)!r} has probability zero")
    return NextCharDistribution.from_masses(masses)


def sample_index(rng: np.random.Generator, probs: np.ndarray) -> int:
    """Inverse-CDF draw; avoids platform-dependent paths in ``Generator.choice``."""
    cdf = np.cumsum(probs)
    u = rng.random() * cdf[-1]
    return int(min(np.searchsorted(cdf, u, side="right"), probs.size - 1))


def generate_chars(lm, v, prompt=b"", mode=None, rng=None, *, max_chars: int | None = None,
                   return_logprob: bool = False):
    """Sample characters after ``prompt`` until EOS (or ``max_chars`` new bytes).

    Returns ``prompt + continuation``; with ``return_logprob`` also the summed
    log probability of the sampled steps, EOS included when it was drawn.
    """
    rng = np.random.default_rng(rng)
    prompt = as_bytes(prompt)
    state = state_for(lm, v, prompt, mode)
    out = bytearray(prompt)
    logprob = 0.0
    produced = 0
    while max_chars is None or produced < max_chars:
        dist = state.next_char_dist()
        idx = sample_index(rng, dist.probs)
        logprob += math.log(dist.probs[idx])
        if idx == EOS_BYTE:
            break
        out.append(idx)
        produced += 1
        state = state.advance(idx)
    return (bytes(out), logprob) if return_logprob else bytes(out)


class CharLM:
    """Convenience wrapper binding a token LM, a vocabulary and a mode."""

    def __init__(self, lm: TokenLM, vocab: Vocabulary, mode=None):
        self.lm = lm
        self.vocab = vocab
        self.mode = as_mode(mode)

    def state(self, x=b""):
        return state_for(self.lm, self.vocab, x, self.mode)

    def prefix_prob(self, x) -> float:
        return prefix_prob(self.lm, self.vocab, x, self.mode)

    def full_prob(self, x) -> float:
        return full_prob(self.lm, self.vocab, x, self.mode)

    def cond_prefix_prob(self, x, x2) -> float:
        return cond_prefix_prob(self.lm, self.vocab, x, x2, self.mode)

    def eos_prob(self, x) -> float:
        return eos_prob(self.lm, self.vocab, x, self.mode)

    def next_char_dist(self, x) -> NextCharDistribution:
        return next_char_dist(self.lm, self.vocab, x, self.mode)

    def generate(self, prompt=b"", rng=None, **kw):
        return generate_chars(self.lm, self.vocab, prompt, self.mode, rng, **kw)
