"""Numeric inner loops, each with a numba version and a pure-numpy fallback.

Set ``TOK2CHAR_DISABLE_NUMBA=1`` to force the numpy path.  Both paths are
importable directly (``*_numpy`` / ``*_numba``) so tests and the kernel
benchmark can compare them.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    njit = None

NUMBA_AVAILABLE = njit is not None
NUMBA_DISABLED = os.environ.get("TOK2CHAR_DISABLE_NUMBA", "").strip().lower() in (
    "1",
    "true",
    "yes",
)
USE_NUMBA = NUMBA_AVAILABLE and not NUMBA_DISABLED
BACKEND = "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# Trie mass accumulation
# ---------------------------------------------------------------------------


def accumulate_masses_numpy(token_node, weights, parent, levels, n_nodes):
    """Per-node token mass: ``eot[u]`` sums tokens ending at ``u``, ``mass[u]``
    sums tokens ending at or below ``u``.

    ``levels`` lists node-id arrays by depth, deepest first, root excluded.
    """
    eot = np.bincount(token_node, weights=weights, minlength=n_nodes)
    mass = eot.copy()
    for nodes in levels:
        mass += np.bincount(parent[nodes], weights=mass[nodes], minlength=n_nodes)
    return eot, mass


def _accumulate_masses_loop(token_node, weights, parent, order, n_nodes):
    eot = np.zeros(n_nodes)
    for t in range(token_node.shape[0]):
        eot[token_node[t]] += weights[t]
    mass = eot.copy()
    # order: non-root nodes, deepest first
    for i in range(order.shape[0]):
        u = order[i]
        mass[parent[u]] += mass[u]
    return eot, mass


if NUMBA_AVAILABLE:
    accumulate_masses_numba = njit(cache=True, nogil=True)(_accumulate_masses_loop)
else:  # pragma: no cover
    accumulate_masses_numba = None


def accumulate_masses(token_node, weights, parent, order, levels, n_nodes):
    weights = np.asarray(weights, dtype=np.float64)
    if USE_NUMBA:
        return accumulate_masses_numba(token_node, weights, parent, order, n_nodes)
    return accumulate_masses_numpy(token_node, weights, parent, levels, n_nodes)


# ---------------------------------------------------------------------------
# Exhaustive enumeration of capped finite-state token LMs
# ---------------------------------------------------------------------------
#
# The string tree over an alphabet of size A uses heap indexing:
# root 0, child(u, a) = u * A + a + 1.  ``tok_syms[t, j]`` is the alphabet
# index of byte j of token t, ``tok_len[t]`` its length.


def string_tree_size(alphabet_size: int, max_len: int) -> int:
    return sum(alphabet_size**k for k in range(max_len + 1))


def _propagate_up(acc, alphabet_size):
    for u in range(acc.shape[0] - 1, 0, -1):
        acc[(u - 1) // alphabet_size] += acc[u]
    return acc


def _brute_force_loop(probs, trans, tok_syms, tok_len, cap, alphabet_size, max_len):
    n_tokens = trans.shape[1]
    eos = probs.shape[1] - 1
    acc = np.zeros(string_tree_size_jit(alphabet_size, max_len))
    st = np.zeros(cap + 1, np.int64)
    pr = np.zeros(cap + 1)
    cd = np.zeros(cap + 1, np.int64)
    cl = np.zeros(cap + 1, np.int64)
    nxt = np.zeros(cap + 1, np.int64)
    pr[0] = 1.0
    stop = probs[0, eos] if cap > 0 else 1.0
    acc[0] += stop
    d = 0
    while d >= 0:
        if d == cap or nxt[d] == n_tokens:
            d -= 1
            continue
        t = nxt[d]
        nxt[d] += 1
        p = pr[d] * probs[st[d], t]
        if p == 0.0:
            continue
        s = trans[st[d], t]
        code = cd[d]
        clen = cl[d]
        for j in range(tok_len[t]):
            if clen >= max_len:
                break
            code = code * alphabet_size + tok_syms[t, j] + 1
            clen += 1
        d += 1
        st[d] = s
        pr[d] = p
        cd[d] = code
        cl[d] = clen
        nxt[d] = 0
        stop = 1.0 if d == cap else probs[s, eos]
        acc[code] += p * stop
    return _propagate_up_jit(acc, alphabet_size)


def brute_force_numpy(probs, trans, tok_syms, tok_len, cap, alphabet_size, max_len):
    """Level-by-level vectorised version of the depth-first enumeration."""
    n_states, n_tokens = trans.shape
    eos = probs.shape[1] - 1
    acc = np.zeros(string_tree_size(alphabet_size, max_len))
    state = np.zeros(1, np.int64)
    prob = np.ones(1)
    code = np.zeros(1, np.int64)
    clen = np.zeros(1, np.int64)
    stop = probs[state, eos] if cap > 0 else np.ones(1)
    np.add.at(acc, code, prob * stop)
    munch = tok_syms.shape[1]
    for depth in range(1, cap + 1):
        if prob.size == 0:
            break
        tok = np.tile(np.arange(n_tokens), prob.size)
        rep = np.repeat(np.arange(prob.size), n_tokens)
        p = prob[rep] * probs[state[rep], tok]
        keep = p != 0.0
        tok, rep, p = tok[keep], rep[keep], p[keep]
        s = trans[state[rep], tok]
        c = code[rep].copy()
        cln = clen[rep].copy()
        for j in range(munch):
            m = (j < tok_len[tok]) & (cln < max_len)
            c[m] = c[m] * alphabet_size + tok_syms[tok[m], j] + 1
            cln[m] += 1
        stop = np.ones(p.size) if depth == cap else probs[s, eos]
        acc += np.bincount(c, weights=p * stop, minlength=acc.size)
        state, prob, code, clen = s, p, c, cln
    # children have larger indices than parents, so a descending sweep works
    for length in range(max_len, 0, -1):
        lo = string_tree_size(alphabet_size, length - 1)
        hi = string_tree_size(alphabet_size, length)
        idx = np.arange(lo, hi)
        np.add.at(acc, (idx - 1) // alphabet_size, acc[idx])
    return acc


if NUMBA_AVAILABLE:

    @njit(cache=True)
    def string_tree_size_jit(alphabet_size, max_len):
        total = 0
        width = 1
        for _ in range(max_len + 1):
            total += width
            width *= alphabet_size
        return total

    _propagate_up_jit = njit(cache=True)(_propagate_up)
    brute_force_numba = njit(cache=True)(_brute_force_loop)
else:  # pragma: no cover
    brute_force_numba = None


def brute_force(probs, trans, tok_syms, tok_len, cap, alphabet_size, max_len):
    args = (
        np.ascontiguousarray(probs, dtype=np.float64),
        np.ascontiguousarray(trans, dtype=np.int64),
        np.ascontiguousarray(tok_syms, dtype=np.int64),
        np.ascontiguousarray(tok_len, dtype=np.int64),
        int(cap),
        int(alphabet_size),
        int(max_len),
    )
    if USE_NUMBA:
        return brute_force_numba(*args)
    return brute_force_numpy(*args)
