"""Token-level language models behind a next-token-distribution contract.

Any object with ``next(y)``, ``batched_next(ys)`` and ``vocab_size`` works
with the rest of the package.  :class:`TableLM` is a finite n-gram table
whose quantities can all be computed exactly, which is what the test oracles
rely on.
"""

from __future__ import annotations

import json
import math
import shlex
import subprocess
import threading
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from . import _kernels
from .distributions import EOS_KEY, NextTokenDistribution
from .errors import LMFormatError, OracleRequiresCap
from .vocab import Vocabulary, as_bytes


class TokenLM(ABC):
    """Conditional next-token distributions p(· | y) over Δ ∪ {EOS}."""

    vocab_size: int

    @abstractmethod
    def next(self, y: Sequence[int]) -> NextTokenDistribution:
        ...

    def batched_next(self, ys: Sequence[Sequence[int]]) -> list:
        return [self.next(y) for y in ys]


class TableLM(TokenLM):
    """n-gram table LM: the distribution depends on the last ``order - 1`` ids.

    Near the start of a string the context is shorter.  A context missing
    from the table backs off by dropping its oldest token.  With ``cap`` set,
    any string of ``cap`` or more tokens is followed by EOS with probability 1.
    """

    def __init__(self, vocab_size: int, order: int, table: Mapping, cap: int | None = None):
        if order < 1:
            raise LMFormatError("order must be >= 1")
        if cap is not None and cap < 0:
            raise LMFormatError("cap must be >= 0")
        self.vocab_size = int(vocab_size)
        self.order = int(order)
        self.cap = None if cap is None else int(cap)
        self.table = {}
        for ctx, dist in table.items():
            ctx = tuple(int(t) for t in ctx)
            if len(ctx) > self.order - 1:
                raise LMFormatError(f"context {ctx} longer than order - 1")
            if not isinstance(dist, NextTokenDistribution):
                dist = NextTokenDistribution(dist)
            if dist.vocab_size != self.vocab_size:
                raise LMFormatError(f"context {ctx}: wrong distribution size")
            self.table[ctx] = dist
        self._eos_only = NextTokenDistribution.eos_only(self.vocab_size)

    def context_of(self, y: Sequence[int]) -> tuple:
        k = self.order - 1
        return tuple(y[len(y) - k :]) if k and len(y) >= k else (tuple(y) if k else ())

    def next(self, y: Sequence[int]) -> NextTokenDistribution:
        if self.cap is not None and len(y) >= self.cap:
            return self._eos_only
        ctx = self.context_of(y)
        while True:
            dist = self.table.get(ctx)
            if dist is not None:
                return dist
            if not ctx:
                raise LMFormatError("no distribution for the empty context")
            ctx = ctx[1:]

    def with_cap(self, cap: int | None) -> "TableLM":
        return TableLM(self.vocab_size, self.order, self.table, cap)

    def as_automaton(self):
        """``(probs[S, |Δ|+1], trans[S, |Δ|])`` over reachable raw contexts.

        State 0 is the empty context.  The cap is not part of the automaton.
        """
        k = self.order - 1
        states = {(): 0}
        queue = [()]
        rows = []
        trans = []
        while len(rows) < len(queue):
            ctx = queue[len(rows)]
            rows.append(self.next_uncapped(ctx).probs)
            row = np.empty(self.vocab_size, dtype=np.int64)
            for t in range(self.vocab_size):
                nxt = (ctx + (t,))[-k:] if k else ()
                if nxt not in states:
                    states[nxt] = len(queue)
                    queue.append(nxt)
                row[t] = states[nxt]
            trans.append(row)
        return np.vstack(rows), np.vstack(trans)

    def next_uncapped(self, y: Sequence[int]) -> NextTokenDistribution:
        ctx = self.context_of(y)
        while ctx not in self.table:
            if not ctx:
                raise LMFormatError("no distribution for the empty context")
            ctx = ctx[1:]
        return self.table[ctx]

    # -- serialisation -----------------------------------------------------

    def to_json(self) -> dict:
        return {
            "order": self.order,
            "cap": self.cap,
            "vocab_size": self.vocab_size,
            "contexts": [
                {"ctx": list(ctx), "probs": dist.to_mapping()}
                for ctx, dist in sorted(self.table.items())
            ],
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1), encoding="utf-8")

    @classmethod
    def from_json(cls, obj: dict, vocab_size: int | None = None) -> "TableLM":
        try:
            order = obj["order"]
            cap = obj.get("cap")
            contexts = obj["contexts"]
            size = obj.get("vocab_size", vocab_size)
            if size is None:
                size = 1 + max(
                    (int(k) for c in contexts for k in c["probs"] if k != EOS_KEY),
                    default=-1,
                )
            if vocab_size is not None and size != vocab_size:
                raise LMFormatError(f"LM has vocab_size {size}, vocabulary has {vocab_size}")
            table = {
                tuple(c["ctx"]): NextTokenDistribution.from_mapping(c["probs"], size)
                for c in contexts
            }
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, LMFormatError):
                raise
            raise LMFormatError(str(exc)) from None
        return cls(size, order, table, cap)

    @classmethod
    def load(cls, path, vocab_size: int | None = None) -> "TableLM":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh), vocab_size)


class CappedLM(TokenLM):
    """Forces EOS once a token string reaches ``cap`` tokens."""

    def __init__(self, lm: TokenLM, cap: int):
        self.lm = lm
        self.cap = int(cap)
        self.vocab_size = lm.vocab_size
        self._eos_only = NextTokenDistribution.eos_only(self.vocab_size)

    def next(self, y):
        return self._eos_only if len(y) >= self.cap else self.lm.next(y)

    def batched_next(self, ys):
        short = [y for y in ys if len(y) < self.cap]
        dists = iter(self.lm.batched_next(short) if short else [])
        return [self._eos_only if len(y) >= self.cap else next(dists) for y in ys]


class CountingLM(TokenLM):
    """Counts evaluated contexts and batch calls of the wrapped model."""

    def __init__(self, lm: TokenLM):
        self.lm = lm
        self.vocab_size = lm.vocab_size
        self.calls = 0
        self.batches = 0
        self._lock = threading.Lock()

    def next(self, y):
        with self._lock:
            self.calls += 1
            self.batches += 1
        return self.lm.next(y)

    def batched_next(self, ys):
        with self._lock:
            self.calls += len(ys)
            self.batches += 1
        return self.lm.batched_next(ys)

    def reset(self):
        self.calls = 0
        self.batches = 0


class StdioLM(TokenLM):
    """Client for an external model speaking newline-delimited JSON.

    Request: ``{"contexts": [[ids], ...]}``; reply: ``{"dists": [{"id" |
    "EOS": p}, ...]}``, one reply line per request line.  Replies are cached
    per context since models are deterministic.
    """

    def __init__(self, command, vocab_size: int, *, cache: bool = True):
        args = shlex.split(command) if isinstance(command, str) else list(command)
        self.vocab_size = int(vocab_size)
        self._proc = subprocess.Popen(
            args,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        self._lock = threading.Lock()
        self._cache = {} if cache else None

    def next(self, y):
        return self.batched_next([y])[0]

    def batched_next(self, ys):
        keys = [tuple(int(t) for t in y) for y in ys]
        missing = keys if self._cache is None else [k for k in dict.fromkeys(keys) if k not in self._cache]
        fetched = dict(zip(missing, self._request(missing))) if missing else {}
        if self._cache is not None:
            self._cache.update(fetched)
            return [self._cache[k] for k in keys]
        return [fetched[k] for k in keys]

    def _request(self, contexts):
        line = json.dumps({"contexts": [list(c) for c in contexts]})
        with self._lock:
            if self._proc.poll() is not None:
                raise LMFormatError("LM adapter process has exited")
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
            reply = self._proc.stdout.readline()
        if not reply:
            raise LMFormatError("LM adapter closed its output")
        try:
            dists = json.loads(reply)["dists"]
        except (ValueError, KeyError, TypeError) as exc:
            raise LMFormatError(f"bad adapter reply: {exc}") from None
        if len(dists) != len(contexts):
            raise LMFormatError("adapter returned the wrong number of distributions")
        return [NextTokenDistribution.from_mapping(d, self.vocab_size) for d in dists]

    def close(self):
        if self._proc.poll() is None:
            self._proc.stdin.close()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def serve_stdio(lm: TokenLM, stdin, stdout) -> None:
    """Answer adapter-protocol requests from ``stdin`` until EOF."""
    for line in stdin:
        if not line.strip():
            continue
        contexts = json.loads(line)["contexts"]
        dists = lm.batched_next([tuple(c) for c in contexts])
        stdout.write(json.dumps({"dists": [d.to_mapping() for d in dists]}) + "\n")
        stdout.flush()


# ---------------------------------------------------------------------------
# Token-level probabilities
# ---------------------------------------------------------------------------


def log_prefix_prob_tokens(lm: TokenLM, y: Sequence[int]) -> float:
    total = 0.0
    for t in range(len(y)):
        p = lm.next(y[:t]).probs[y[t]]
        if p == 0.0:
            return -math.inf
        total += math.log(p)
    return total


def prefix_prob_tokens(lm: TokenLM, y: Sequence[int]) -> float:
    """Probability that a string drawn from ``lm`` starts with ``y``."""
    return math.exp(log_prefix_prob_tokens(lm, tuple(y)))


def full_prob_tokens(lm: TokenLM, y: Sequence[int]) -> float:
    y = tuple(y)
    return prefix_prob_tokens(lm, y) * lm.next(y).eos


def enumerate_token_strings(lm: TokenLM, max_tokens: int) -> Iterator[tuple]:
    """Yield ``(y, full_prob(y))`` for every y with ``|y| <= max_tokens`` and
    positive probability, depth first.  Strings at ``max_tokens`` are treated
    as ended regardless of their EOS probability, so pass the model's cap.
    """
    stack = [((), 1.0)]
    while stack:
        y, p = stack.pop()
        dist = lm.next(y)
        stop = 1.0 if len(y) == max_tokens else dist.eos
        if p * stop > 0.0:
            yield y, p * stop
        if len(y) == max_tokens:
            continue
        probs = dist.token_probs
        for t in np.flatnonzero(probs)[::-1]:
            stack.append((y + (int(t),), p * probs[t]))


def _oracle_inputs(lm, v: Vocabulary):
    if not isinstance(lm, TableLM) or lm.cap is None:
        raise OracleRequiresCap("brute-force enumeration needs a TableLM with a cap")
    if lm.vocab_size != len(v):
        raise LMFormatError("LM and vocabulary sizes differ")
    alphabet = v.alphabet
    index = {b: i for i, b in enumerate(alphabet)}
    munch = max(1, int(v.lengths.max()) if len(v) else 1)
    tok_syms = np.zeros((len(v), munch), dtype=np.int64)
    for t, e in enumerate(v.entries):
        tok_syms[t, : len(e)] = [index[b] for b in e]
    probs, trans = lm.as_automaton()
    return alphabet, index, probs, trans, tok_syms, v.lengths


def brute_force_prefix_table(lm: TableLM, v: Vocabulary, max_len: int) -> dict:
    """Exhaustive prefix probabilities of every character string up to
    ``max_len`` over the vocabulary's alphabet, summing ``full_prob(y)`` over
    all ``y`` in Δ^{≤cap}.
    """
    alphabet, _, probs, trans, tok_syms, tok_len = _oracle_inputs(lm, v)
    size = max(1, len(alphabet))
    acc = _kernels.brute_force(probs, trans, tok_syms, tok_len, lm.cap, size, max_len)
    out = {}
    strings = [b""]
    pos = 0
    for s in strings:
        out[s] = float(acc[pos])
        pos += 1
        if len(s) < max_len:
            strings.extend(s + bytes([b]) for b in alphabet)
    if not alphabet:
        out = {b"": out[b""]}
    return out


def brute_force_char_prefix(lm: TableLM, v: Vocabulary, x) -> float:
    """Σ of ``full_prob(y)`` over y ∈ Δ^{≤cap} with ``decode(y)`` starting with x."""
    x = as_bytes(x)
    alphabet, index, probs, trans, tok_syms, tok_len = _oracle_inputs(lm, v)
    if any(b not in index for b in x):
        return 0.0
    size = max(1, len(alphabet))
    acc = _kernels.brute_force(probs, trans, tok_syms, tok_len, lm.cap, size, len(x))
    node = 0
    for b in x:
        node = node * size + index[b] + 1
    return float(acc[node])
