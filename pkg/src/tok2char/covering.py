"""Enumeration of the covering of a character string.

The covering C(x) is the set of token strings y whose decoding has x as a
prefix while dropping the last token of y decodes to a strict prefix of x.
Summing token-level prefix probabilities over C(x) gives the character-level
prefix probability of x.  Enumeration proceeds one character at a time and
an optional prune function bounds the work per step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .distributions import EOS_BYTE, N_BYTES, NextCharDistribution
from .errors import DeadEnd
from .lm import TokenLM
from .vocab import Vocabulary, as_bytes


@dataclass(frozen=True)
class CoverItem:
    """A covering member: token string ``y``, its decoding and log prefix prob."""

    logp: float
    x_decoded: bytes
    y: tuple

    @property
    def p(self) -> float:
        return math.exp(self.logp)

    def key(self) -> tuple:
        return (self.y, self.x_decoded)


PruneFn = Callable[[bytes, list], list]


def prune_nothing(x: bytes, items: list) -> list:
    return items


def bucket_key(item: CoverItem, n: int) -> tuple:
    """Exact matches are their own bucket; over-matches group by ``y[:-1]``."""
    return item.y if len(item.x_decoded) == n else item.y[:-1]


def logsumexp(values: Sequence[float]) -> float:
    if not values:
        return -math.inf
    m = max(values)
    if m == -math.inf:
        return m
    return m + math.log(sum(math.exp(v - m) for v in values))


class prune_top_K_buckets:
    """Keep the items of the ``K`` buckets with the largest total probability.

    Ties are broken by the lexicographically smallest bucket key.
    """

    def __init__(self, K: int):
        if int(K) < 1:
            raise ValueError("K must be >= 1")
        self.K = int(K)

    def __repr__(self):
        return f"prune_top_K_buckets({self.K})"

    def __call__(self, x: bytes, items: list) -> list:
        n = len(x)
        buckets: dict = {}
        for it in items:
            buckets.setdefault(bucket_key(it, n), []).append(it)
        if len(buckets) <= self.K:
            return list(items)
        totals = {k: logsumexp([it.logp for it in b]) for k, b in buckets.items()}
        ranked = sorted(buckets, key=lambda k: (-rank_score(totals[k]), k))[: self.K]
        return [it for k in ranked for it in buckets[k]]


def rank_score(logp: float) -> float:
    """Log probabilities equal to 10 decimals count as ties.

    Mathematically equal totals (for example permutations of the same
    tokens under a unigram model) differ in the last bits depending on
    summation order; quantising lets the lexicographic tie-break apply.
    """
    return round(logp, 10) if logp != -math.inf else logp


def n_buckets(x: bytes, items: list) -> int:
    return len({bucket_key(it, len(x)) for it in items})


class CoverState:
    """The (possibly pruned) covering of a prefix, advanced character by character.

    ``pruned`` records whether pruning has ever discarded an item on the way
    here; an empty covering is then a dead end rather than a true zero.
    """

    __slots__ = ("lm", "vocab", "prune", "x", "items", "pruned", "lm_calls")

    def __init__(self, lm: TokenLM, vocab: Vocabulary, prune: PruneFn = prune_nothing,
                 x: bytes = b"", items: list | None = None, pruned: bool = False):
        vocab.require_monotone()
        self.lm = lm
        self.vocab = vocab
        self.prune = prune
        self.x = x
        self.items = [CoverItem(0.0, b"", ())] if items is None else items
        self.pruned = pruned
        self.lm_calls = 0

    def candidates(self, c: int) -> list:
        """Unpruned successors of every item for next character ``c``."""
        n = len(self.x) + 1
        short = [it for it in self.items if len(it.x_decoded) < n]
        dists = iter(self.lm.batched_next([it.y for it in short]) if short else ())
        self.lm_calls = len(short)
        matching = np.flatnonzero(self.vocab.first_bytes == c)
        entries = self.vocab.entries
        out = []
        for it in self.items:
            if len(it.x_decoded) >= n:
                if it.x_decoded[n - 1] == c:
                    out.append(it)
                continue
            lp = next(dists).logprobs
            for t in matching:
                step = lp[t]
                if step == -math.inf:
                    continue
                out.append(CoverItem(it.logp + float(step), it.x_decoded + entries[t], it.y + (int(t),)))
        return out

    def advance(self, c: int) -> "CoverState":
        c = int(c)
        cands = self.candidates(c)
        x = self.x + bytes([c])
        if not cands:
            if self.pruned:
                raise DeadEnd(len(self.x))
            kept = []
        else:
            kept = self.prune(x, cands)
            if not kept:
                raise DeadEnd(len(self.x))
        state = CoverState(self.lm, self.vocab, self.prune, x, kept,
                           self.pruned or len(kept) < len(cands))
        state.lm_calls = self.lm_calls
        return state

    def extend(self, text: bytes) -> "CoverState":
        state = self
        for c in as_bytes(text):
            state = state.advance(c)
        return state

    def log_prefix_prob(self) -> float:
        return logsumexp([it.logp for it in self.items])

    def exact_items(self) -> list:
        return [it for it in self.items if len(it.x_decoded) == len(self.x)]

    def log_full_prob(self) -> float:
        return log_full_from_items(self.lm, self.exact_items())

    def next_char_masses(self) -> np.ndarray:
        """Unnormalised masses over bytes + EOS, scaled by the largest item.

        Exact items contribute their EOS mass and the first byte of every
        next token; over-matched items contribute their next decoded byte.
        """
        out = np.zeros(N_BYTES + 1)
        if not self.items:
            return out
        n = len(self.x)
        top = max(it.logp for it in self.items)
        exact = self.exact_items()
        first = self.vocab.first_bytes
        dists = self.lm.batched_next([it.y for it in exact]) if exact else []
        for it, dist in zip(exact, dists):
            w = math.exp(it.logp - top)
            out[:N_BYTES] += w * np.bincount(first, weights=dist.token_probs, minlength=N_BYTES)
            out[EOS_BYTE] += w * dist.eos
        for it in self.items:
            if len(it.x_decoded) > n:
                out[it.x_decoded[n]] += math.exp(it.logp - top)
        return out

    def next_char_dist(self) -> NextCharDistribution:
        return NextCharDistribution.from_masses(self.next_char_masses())

    def reseeded(self, ref: "CoverState") -> "CoverState":
        """This state's pruning applied to the items of ``ref``."""
        kept = self.prune(ref.x, list(ref.items))
        return CoverState(self.lm, self.vocab, self.prune, ref.x, kept,
                          ref.pruned or len(kept) < len(ref.items))


def enumerate_cover(lm: TokenLM, v: Vocabulary, x, prune: PruneFn = prune_nothing) -> list:
    """The covering of ``x``, pruned at every character step by ``prune``."""
    return CoverState(lm, v, prune).extend(as_bytes(x)).items


def log_char_prefix_prob(lm, v, x, prune: PruneFn = prune_nothing) -> float:
    return logsumexp([it.logp for it in enumerate_cover(lm, v, x, prune)])


def char_prefix_prob(lm, v, x, prune: PruneFn = prune_nothing) -> float:
    """Probability that the character string starts with ``x``."""
    return math.exp(log_char_prefix_prob(lm, v, x, prune))


def encodings(lm, v, x, prune: PruneFn = prune_nothing) -> set:
    x = as_bytes(x)
    return {it.y for it in enumerate_cover(lm, v, x, prune) if it.x_decoded == x}


def log_full_from_items(lm: TokenLM, exact: list) -> float:
    if not exact:
        return -math.inf
    dists = lm.batched_next([it.y for it in exact])
    vals = [it.logp + float(d.logprobs[-1]) for it, d in zip(exact, dists)]
    return logsumexp(vals)


def log_char_full_prob(lm, v, x, prune: PruneFn = prune_nothing) -> float:
    state = CoverState(lm, v, prune).extend(as_bytes(x))
    return log_full_from_items(lm, state.exact_items())


def char_full_prob(lm, v, x, prune: PruneFn = prune_nothing) -> float:
    """Probability that the character string is exactly ``x``.

    Under pruning this is an underestimate whenever some exact encodings were
    discarded.
    """
    return math.exp(log_char_full_prob(lm, v, x, prune))


def count_cover(v: Vocabulary, x) -> tuple:
    """``(|C(x)|, |E(x)|)`` as exact integers, without a language model.

    ``ways[j]`` counts the token strings decoding exactly to ``x[:j]``.  A
    covering member is such a string followed by one token whose decoding
    starts with the rest of ``x``.
    """
    x = as_bytes(x)
    v.require_monotone()
    n = len(x)
    if n == 0:
        return 1, 1
    trie = v.trie
    children = trie.children
    ends = trie.end_counts
    below = trie.subtree_counts
    ways = [0] * (n + 1)
    ways[0] = 1
    cover = 0
    for j in range(n):
        w = ways[j]
        if not w:
            continue
        node = 0
        for d in range(j, n):
            node = children[node].get(x[d], -1)
            if node < 0:
                break
            if d + 1 == n:
                cover += w * int(below[node])
                ways[n] += w * int(ends[node])
            else:
                ways[d + 1] += w * int(ends[node])
    return cover, ways[n]
