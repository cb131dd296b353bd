"""Bundled beam over the covering.

A bundle stands for every covering item that shares a token prefix ``y`` and
whose last token has matched ``x_rel`` so far; the items themselves are only
materialised by :func:`unbundle`.  There are three kinds:

* exact: ``x_rel`` is empty and the bundle is the single item ``y`` whose
  decoding ends exactly at the current position;
* pending: the tokens ``δ`` at or below the trie node of ``x_rel``; this is
  the transient result of :func:`bundle_filter`;
* strict pending: as above but only tokens strictly below the node, which is
  what is left of a pending bundle once :func:`bundle_extend` has split off
  the tokens that end at the node.

With this split every bundle in a beam corresponds to exactly one bucket of
:func:`~tok2char.covering.prune_top_K_buckets`, so keeping the top ``K``
bundles keeps the same items as bucket pruning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .covering import CoverItem, logsumexp, rank_score
from .distributions import EOS_BYTE, N_BYTES, NextCharDistribution
from .errors import DeadEnd
from .lm import TokenLM
from .trie import ProbabilityTrie
from .vocab import Vocabulary, as_bytes


def _log(p: float) -> float:
    return math.log(p) if p > 0.0 else -math.inf


@dataclass(frozen=True)
class Bundle:
    logp: float  # log of the total prefix mass of the represented items
    logprefix: float  # log prefix probability of y
    y: tuple
    decoded: bytes  # decode(y)
    x_rel: bytes = b""
    node: int = 0
    strict: bool = False
    trie: Optional[ProbabilityTrie] = None

    @property
    def p(self) -> float:
        return math.exp(self.logp)

    @property
    def is_exact(self) -> bool:
        return not self.x_rel

    def rank_key(self) -> tuple:
        return (-rank_score(self.logp), self.y)


def root_bundle() -> Bundle:
    return Bundle(0.0, 0.0, (), b"")


def build_trie(lm: TokenLM, v: Vocabulary, y) -> ProbabilityTrie:
    y = tuple(y)
    return ProbabilityTrie(v.trie, lm.next(y), y)


def _attach_tries(lm: TokenLM, v: Vocabulary, bundles: list, cache: dict) -> list:
    """Give every exact bundle its trie, using one batched LM call."""
    need = [b.y for b in bundles if b.is_exact and b.trie is None and b.y not in cache]
    need = list(dict.fromkeys(need))
    if need:
        for y, dist in zip(need, lm.batched_next(need)):
            cache[y] = ProbabilityTrie(v.trie, dist, y)
    return [replace(b, trie=cache[b.y]) if b.is_exact and b.trie is None else b for b in bundles]


def bundle_filter(b: Bundle, c: int) -> Optional[Bundle]:
    """Restrict ``b`` to items whose next character is ``c``.

    The pending-token mass ``p(y)·mass(x_rel)`` is scaled by ``trie.p(c | x_rel)``.
    """
    if b.trie is None:
        raise ValueError("bundle has no trie attached")
    trie = b.trie
    child = trie.shape.children[b.node].get(int(c), -1)
    if child < 0:
        return None
    mass = float(trie.mass[child])
    if mass <= 0.0:
        return None
    return Bundle(b.logprefix + math.log(mass), b.logprefix, b.y, b.decoded,
                  b.x_rel + bytes([int(c)]), child, False, trie)


def bundle_extend(b: Bundle, v: Vocabulary) -> list:
    """Exact bundles ``y∘δ`` for the tokens decoding exactly to ``x_rel``."""
    if b.is_exact or b.strict:
        return []
    out = []
    probs = b.trie.dist.probs
    for t in b.trie.shape.tokens_at(b.node):
        p = float(probs[t])
        if p <= 0.0:
            continue
        lp = b.logprefix + math.log(p)
        out.append(Bundle(lp, lp, b.y + (int(t),), b.decoded + v.entries[t]))
    return out


def bundle_pending(b: Bundle) -> Optional[Bundle]:
    """The part of a pending bundle whose last token is still incomplete."""
    if b.is_exact:
        return None
    mass = b.trie.deeper_mass(b.node)
    if mass <= 0.0:
        return None
    return replace(b, logp=b.logprefix + math.log(mass), strict=True)


def unbundle(b: Bundle, v: Vocabulary) -> list:
    if b.is_exact:
        return [CoverItem(b.logprefix, b.decoded, b.y)]
    trie = b.trie
    probs = trie.dist.probs
    out = []
    for node, _ in trie.shape.subtree(b.node):
        if b.strict and node == b.node:
            continue
        for t in trie.shape.tokens_at(node):
            p = float(probs[t])
            if p > 0.0:
                out.append(CoverItem(b.logprefix + math.log(p), b.decoded + v.entries[t],
                                     b.y + (int(t),)))
    return out


def unbundle_beam(bundles, v: Vocabulary) -> list:
    return [it for b in bundles for it in unbundle(b, v)]


def _top_k(bundles: list, K) -> list:
    if K is None or len(bundles) <= K:
        return sorted(bundles, key=Bundle.rank_key)
    return sorted(bundles, key=Bundle.rank_key)[: int(K)]


class BeamState:
    """Top-``K`` bundles for the prefix ``x``; ``K=None`` disables pruning."""

    __slots__ = ("lm", "vocab", "K", "x", "bundles", "pruned", "lm_calls")

    def __init__(self, lm: TokenLM, vocab: Vocabulary, K=None, x: bytes = b"",
                 bundles: list | None = None, pruned: bool = False):
        vocab.require_monotone()
        if K is not None and (K == math.inf):
            K = None
        if K is not None and int(K) < 1:
            raise ValueError("K must be >= 1")
        self.lm = lm
        self.vocab = vocab
        self.K = None if K is None else int(K)
        self.x = x
        self.pruned = pruned
        self.lm_calls = 0
        bundles = [root_bundle()] if bundles is None else bundles
        before = sum(1 for b in bundles if b.is_exact and b.trie is None)
        self.bundles = _attach_tries(lm, vocab, bundles, {})
        self.lm_calls = before

    def candidates(self, c: int) -> list:
        out = []
        for b in self.bundles:
            f = bundle_filter(b, c)
            if f is None:
                continue
            out.extend(bundle_extend(f, self.vocab))
            rest = bundle_pending(f)
            if rest is not None:
                out.append(rest)
        return out

    def advance(self, c: int) -> "BeamState":
        c = int(c)
        cands = self.candidates(c)
        if not cands and self.pruned:
            raise DeadEnd(len(self.x))
        kept = _top_k(cands, self.K)
        return BeamState(self.lm, self.vocab, self.K, self.x + bytes([c]), kept,
                         self.pruned or len(kept) < len(cands))

    def extend(self, text) -> "BeamState":
        state = self
        for c in as_bytes(text):
            state = state.advance(c)
        return state

    def reseeded(self, ref: "BeamState") -> "BeamState":
        """This beam's width applied to the bundles of ``ref``."""
        kept = _top_k(list(ref.bundles), self.K)
        return BeamState(self.lm, self.vocab, self.K, ref.x, kept,
                         ref.pruned or len(kept) < len(ref.bundles))

    def items(self) -> list:
        return unbundle_beam(self.bundles, self.vocab)

    def log_prefix_prob(self) -> float:
        return logsumexp([b.logp for b in self.bundles])

    def log_full_prob(self) -> float:
        vals = [b.logp + _log(b.trie.dist.eos) for b in self.bundles if b.is_exact]
        return logsumexp(vals)

    def next_char_masses(self) -> np.ndarray:
        """Unnormalised masses over bytes + EOS, scaled by the largest bundle."""
        out = np.zeros(N_BYTES + 1)
        if not self.bundles:
            return out
        top = max(b.logp for b in self.bundles)
        for b in self.bundles:
            scale = math.exp(b.logprefix - top)
            trie = b.trie
            children = trie.shape.children[b.node]
            if children:
                keys = np.fromiter(children.keys(), dtype=np.int64, count=len(children))
                vals = trie.mass[np.fromiter(children.values(), dtype=np.int64, count=len(children))]
                out[keys] += scale * vals
            if b.is_exact:
                out[EOS_BYTE] += scale * trie.dist.eos
        return out

    def next_char_dist(self) -> NextCharDistribution:
        return NextCharDistribution.from_masses(self.next_char_masses())


def beam(lm: TokenLM, v: Vocabulary, x, K) -> list:
    """Bundles surviving top-``K`` selection after every character of ``x``."""
    return BeamState(lm, v, K).extend(as_bytes(x)).bundles


def next_char_dist_bundled(lm: TokenLM, v: Vocabulary, x, K) -> NextCharDistribution:
    return BeamState(lm, v, K).extend(as_bytes(x)).next_char_dist()
