"""Next-token and next-character distributions.

Both are dense float arrays with the end-of-string outcome stored in the last
slot: ``|Δ| + 1`` entries for tokens, ``256 + 1`` for bytes.
"""

from __future__ import annotations

from typing import Iterator, Mapping

import numpy as np

from .errors import InvalidDistribution

NORMALIZATION_TOL = 1e-9


class _EOSType:
    __slots__ = ()

    def __repr__(self):
        return "EOS"

    def __reduce__(self):
        return (_eos, ())


def _eos():
    return EOS


EOS = _EOSType()
EOS_KEY = "EOS"

N_BYTES = 256
EOS_BYTE = N_BYTES  # index of EOS in a NextCharDistribution array


class NextTokenDistribution:
    """p(· | y) over token ids ``0..|Δ|-1`` plus EOS at index ``|Δ|``."""

    __slots__ = ("probs", "_logprobs")

    def __init__(self, probs, *, validate: bool = True):
        probs = np.array(probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size < 1:
            raise InvalidDistribution("expected a 1-d probability vector")
        if validate:
            _check_normalized(probs)
        probs.setflags(write=False)
        self.probs = probs
        self._logprobs = None

    @classmethod
    def from_mapping(cls, mapping: Mapping, vocab_size: int) -> "NextTokenDistribution":
        """Build from ``{token_id | "EOS": p}``; missing entries are zero."""
        probs = np.zeros(vocab_size + 1)
        for key, p in mapping.items():
            if key is EOS or key == EOS_KEY:
                probs[vocab_size] = p
            else:
                idx = int(key)
                if not 0 <= idx < vocab_size:
                    raise InvalidDistribution(f"token id {key!r} out of range")
                probs[idx] = p
        return cls(probs)

    @classmethod
    def eos_only(cls, vocab_size: int) -> "NextTokenDistribution":
        probs = np.zeros(vocab_size + 1)
        probs[-1] = 1.0
        return cls(probs, validate=False)

    @property
    def vocab_size(self) -> int:
        return self.probs.size - 1

    @property
    def eos(self) -> float:
        return float(self.probs[-1])

    @property
    def token_probs(self) -> np.ndarray:
        return self.probs[:-1]

    @property
    def logprobs(self) -> np.ndarray:
        if self._logprobs is None:
            with np.errstate(divide="ignore"):
                lp = np.log(self.probs)
            lp.setflags(write=False)
            self._logprobs = lp
        return self._logprobs

    def __getitem__(self, key) -> float:
        if key is EOS or key == EOS_KEY:
            return self.eos
        return float(self.probs[int(key)])

    def to_mapping(self, *, drop_zeros: bool = True) -> dict:
        out = {}
        for i in np.flatnonzero(self.probs) if drop_zeros else range(self.probs.size):
            key = EOS_KEY if i == self.vocab_size else str(int(i))
            out[key] = float(self.probs[i])
        return out

    def __eq__(self, other):
        if not isinstance(other, NextTokenDistribution):
            return NotImplemented
        return np.array_equal(self.probs, other.probs)

    def __hash__(self):
        return hash(self.probs.tobytes())

    def __repr__(self):
        return f"NextTokenDistribution({self.to_mapping()})"


def _char_key(byte: int) -> str:
    return bytes([byte]).decode("latin-1")


class NextCharDistribution:
    """p(· | x) over the 256 byte values plus EOS (index 256).

    Lookups accept an ``int`` byte, a length-1 ``bytes``/``str``, ``EOS`` or
    ``"EOS"``.  ``str`` keys are single latin-1 code points, so every byte has
    a one-character JSON key.
    """

    __slots__ = ("probs",)

    def __init__(self, probs, *, validate: bool = True):
        probs = np.array(probs, dtype=np.float64)
        if probs.shape != (N_BYTES + 1,):
            raise InvalidDistribution("expected 257 entries (256 bytes + EOS)")
        if validate:
            _check_normalized(probs)
        probs.setflags(write=False)
        self.probs = probs

    @classmethod
    def from_masses(cls, masses) -> "NextCharDistribution":
        """Normalise non-negative masses; raises ZeroDivision-like error on 0."""
        from .errors import UndefinedConditional

        masses = np.asarray(masses, dtype=np.float64)
        total = masses.sum()
        if not total > 0:
            raise UndefinedConditional("next-character masses sum to zero")
        return cls(masses / total)

    @classmethod
    def from_mapping(cls, mapping: Mapping) -> "NextCharDistribution":
        probs = np.zeros(N_BYTES + 1)
        for key, p in mapping.items():
            probs[_index(key)] += p
        return cls(probs)

    @staticmethod
    def index(key) -> int:
        return _index(key)

    @property
    def eos(self) -> float:
        return float(self.probs[EOS_BYTE])

    def __getitem__(self, key) -> float:
        return float(self.probs[_index(key)])

    def support(self) -> Iterator:
        for i in np.flatnonzero(self.probs):
            yield EOS if i == EOS_BYTE else int(i)

    def to_mapping(self, *, drop_zeros: bool = True) -> dict:
        out = {}
        for i in range(N_BYTES + 1):
            p = float(self.probs[i])
            if drop_zeros and p == 0.0:
                continue
            out[EOS_KEY if i == EOS_BYTE else _char_key(i)] = p
        return out

    def __repr__(self):
        items = ", ".join(f"{k!r}: {v:.6g}" for k, v in self.to_mapping().items())
        return f"NextCharDistribution({{{items}}})"


def _index(key) -> int:
    if key is EOS or (isinstance(key, str) and key == EOS_KEY):
        return EOS_BYTE
    if isinstance(key, (bytes, bytearray)):
        if len(key) != 1:
            raise KeyError(key)
        return key[0]
    if isinstance(key, str):
        if len(key) != 1:
            raise KeyError(key)
        code = ord(key)
        if code >= N_BYTES:
            raise KeyError(key)
        return code
    idx = int(key)
    if not 0 <= idx < N_BYTES:
        raise KeyError(key)
    return idx


def _check_normalized(probs: np.ndarray) -> None:
    if not np.all(np.isfinite(probs)) or np.any(probs < 0):
        raise InvalidDistribution("probabilities must be finite and non-negative")
    total = probs.sum()
    if abs(total - 1.0) > NORMALIZATION_TOL:
        raise InvalidDistribution(f"probabilities sum to {total!r}, not 1")
