"""Character tries over vocabulary decodings.

:class:`VocabTrie` is the shape of the trie, shared by every context because
the decoder is multiplicative.  :class:`ProbabilityTrie` attaches the
next-token probabilities of one context to that shape.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np

from . import _kernels


class _EOTType:
    __slots__ = ()

    def __repr__(self):
        return "EOT"


EOT = _EOTType()


class VocabTrie:
    """Byte trie of all vocabulary entries; node 0 is the root."""

    def __init__(self, vocab):
        children = [{}]
        parent = [-1]
        depth = [0]
        token_node = np.empty(len(vocab), dtype=np.int64)
        for tid, entry in enumerate(vocab.entries):
            node = 0
            for b in entry:
                nxt = children[node].get(b)
                if nxt is None:
                    nxt = len(children)
                    children[node][b] = nxt
                    children.append({})
                    parent.append(node)
                    depth.append(depth[node] + 1)
                node = nxt
            token_node[tid] = node
        self.children = children
        self.n_nodes = len(children)
        self.parent = np.asarray(parent, dtype=np.int64)
        self.depth = np.asarray(depth, dtype=np.int64)
        self.token_node = token_node

        # CSR layout of the token ids ending at each node, ids ascending
        by_node = np.lexsort((np.arange(len(vocab)), token_node))
        self._tok_ids = by_node
        self._tok_ptr = np.zeros(self.n_nodes + 1, dtype=np.int64)
        np.add.at(self._tok_ptr, token_node + 1, 1)
        np.cumsum(self._tok_ptr, out=self._tok_ptr)

        order = np.argsort(-self.depth, kind="stable")
        self.order = order[self.depth[order] > 0]
        max_depth = int(self.depth.max()) if self.n_nodes else 0
        self.levels = [np.flatnonzero(self.depth == d) for d in range(max_depth, 0, -1)]

    def tokens_at(self, node: int) -> np.ndarray:
        return self._tok_ids[self._tok_ptr[node] : self._tok_ptr[node + 1]]

    def child(self, node: int, byte: int) -> int:
        return self.children[node].get(byte, -1)

    def walk(self, path: bytes, node: int = 0) -> int:
        """Node reached by following ``path`` from ``node``; -1 if absent."""
        for b in path:
            node = self.children[node].get(b, -1)
            if node < 0:
                return -1
        return node

    def accumulate(self, weights):
        """``(eot, mass)`` per node for per-token ``weights``."""
        return _kernels.accumulate_masses(
            self.token_node, weights, self.parent, self.order, self.levels, self.n_nodes
        )

    @cached_property
    def subtree_counts(self) -> np.ndarray:
        """Number of tokens decoding to the node's path or an extension of it."""
        _, mass = self.accumulate(np.ones(self.token_node.size))
        out = np.rint(mass).astype(np.int64)
        out.setflags(write=False)
        return out

    @cached_property
    def end_counts(self) -> np.ndarray:
        return np.diff(self._tok_ptr)

    def subtree(self, node: int):
        """Yield ``(node, relative_path)`` for ``node`` and all descendants."""
        stack = [(node, b"")]
        while stack:
            u, path = stack.pop()
            yield u, path
            for b, v in sorted(self.children[u].items(), reverse=True):
                stack.append((v, path + bytes([b])))


class ProbabilityTrie:
    """Next-token distribution of one context, spread over character paths.

    ``mass[u]`` is the total probability of tokens whose decoding runs through
    node ``u``; ``eot[u]`` the part that ends exactly there.  EOS is not in
    the trie.  :meth:`p` returns conditionals normalised over the node's
    children *including* EOT.
    """

    __slots__ = ("shape", "dist", "eot", "mass", "context")

    def __init__(self, shape: VocabTrie, dist, context=()):
        self.shape = shape
        self.dist = dist
        self.context = tuple(context)
        self.eot, self.mass = shape.accumulate(dist.token_probs)

    @property
    def root_mass(self) -> float:
        return float(self.mass[0])

    def node(self, path: bytes) -> int:
        return self.shape.walk(path)

    def p(self, symbol, node: int = 0) -> float:
        """Conditional probability of ``symbol`` (a byte or ``EOT``) at ``node``."""
        total = self.mass[node]
        if total <= 0.0:
            return 0.0
        if symbol is EOT:
            return float(self.eot[node] / total)
        child = self.shape.children[node].get(symbol, -1)
        if child < 0:
            return 0.0
        return float(self.mass[child] / total)

    def conditionals(self, node: int = 0) -> dict:
        """``{byte | EOT: p}`` over the non-empty children of ``node``."""
        out = {}
        total = self.mass[node]
        if total <= 0.0:
            return out
        if self.eot[node] > 0.0:
            out[EOT] = float(self.eot[node] / total)
        for b, child in sorted(self.shape.children[node].items()):
            if self.mass[child] > 0.0:
                out[b] = float(self.mass[child] / total)
        return out

    def tokens(self, node: int) -> list:
        """``[(token_id, p(token | context))]`` for tokens ending at ``node``."""
        probs = self.dist.probs
        return [(int(t), float(probs[t])) for t in self.shape.tokens_at(node)]

    def deeper_mass(self, node: int) -> float:
        """Mass of tokens strictly extending the node's path."""
        return float(sum(self.mass[c] for c in self.shape.children[node].values()))

    def char_masses(self, node: int) -> np.ndarray:
        """Absolute mass per next byte below ``node`` (length 256)."""
        out = np.zeros(256)
        for b, child in self.shape.children[node].items():
            out[b] = self.mass[child]
        return out
