"""Byte-level vocabularies and the multiplicative decoder.

Characters are bytes.  A vocabulary maps dense token ids ``0..|Δ|-1`` to
byte strings; decoding a token string concatenates the entries.
"""

from __future__ import annotations

import base64
import gzip
import json
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    ErasingVocabulary,
    InvalidToken,
    UnencodableByte,
    VocabFormatError,
)

TokenString = tuple  # tuple[int, ...]


def as_bytes(x) -> bytes:
    """Coerce user input to a byte string; ``str`` is UTF-8 encoded."""
    if isinstance(x, str):
        return x.encode("utf-8")
    return bytes(x)


class Vocabulary:
    """Immutable table ``token id -> byte string``.

    Entries may repeat (the decoder need not be injective).  Empty entries are
    representable so that :func:`is_strict_prefix_monotone` can report them,
    but every algorithm over coverings rejects such vocabularies.
    """

    def __init__(self, entries: Iterable):
        self._entries = tuple(as_bytes(e) for e in entries)

    @property
    def entries(self) -> tuple:
        return self._entries

    def __len__(self):
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def __getitem__(self, token_id) -> bytes:
        try:
            idx = int(token_id)
        except (TypeError, ValueError):
            raise InvalidToken(token_id) from None
        if not 0 <= idx < len(self._entries):
            raise InvalidToken(token_id)
        return self._entries[idx]

    def __eq__(self, other):
        if not isinstance(other, Vocabulary):
            return NotImplemented
        return self._entries == other._entries

    def __hash__(self):
        return hash(self._entries)

    def __repr__(self):
        head = ", ".join(f"{i}:{e!r}" for i, e in enumerate(self._entries[:6]))
        more = ", ..." if len(self) > 6 else ""
        return f"Vocabulary({len(self)} entries: {head}{more})"

    def decode(self, y: Sequence[int]) -> bytes:
        return b"".join(self[t] for t in y)

    @cached_property
    def lengths(self) -> np.ndarray:
        out = np.fromiter((len(e) for e in self._entries), dtype=np.int64, count=len(self))
        out.setflags(write=False)
        return out

    @cached_property
    def first_bytes(self) -> np.ndarray:
        """First byte of each entry, ``-1`` for empty entries."""
        out = np.fromiter(
            (e[0] if e else -1 for e in self._entries), dtype=np.int64, count=len(self)
        )
        out.setflags(write=False)
        return out

    @cached_property
    def alphabet(self) -> bytes:
        """Sorted bytes occurring in at least one entry."""
        seen = set()
        for e in self._entries:
            seen.update(e)
        return bytes(sorted(seen))

    @cached_property
    def trie(self):
        from .trie import VocabTrie

        return VocabTrie(self)

    @cached_property
    def _monotone(self) -> tuple:
        return is_strict_prefix_monotone(self)

    def require_monotone(self) -> None:
        ok, bad = self._monotone
        if not ok:
            raise ErasingVocabulary(f"token {bad} decodes to the empty string")

    # -- serialisation -----------------------------------------------------

    @classmethod
    def load(cls, path) -> "Vocabulary":
        """Read the JSON Lines format ``{"id": int, "bytes": "<hex>"}``.

        Files ending in ``.gz`` are decompressed transparently.
        """
        path = Path(path)
        opener = gzip.open if path.suffix == ".gz" else open
        with opener(path, "rt", encoding="utf-8") as fh:
            return cls.from_jsonl(fh)

    @classmethod
    def from_jsonl(cls, lines: Iterable[str]) -> "Vocabulary":
        table = {}
        for lineno, line in enumerate(lines, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                idx = obj["id"]
                raw = bytes.fromhex(obj["bytes"])
            except (ValueError, KeyError, TypeError) as exc:
                raise VocabFormatError(f"line {lineno}: {exc}") from None
            if not isinstance(idx, int) or isinstance(idx, bool) or idx < 0:
                raise VocabFormatError(f"line {lineno}: bad id {idx!r}")
            if idx in table:
                raise VocabFormatError(f"line {lineno}: duplicate id {idx}")
            table[idx] = raw
        if sorted(table) != list(range(len(table))):
            raise VocabFormatError("token ids must be dense in [0, |Δ|)")
        return cls(table[i] for i in range(len(table)))

    def to_jsonl(self) -> str:
        return "".join(
            json.dumps({"id": i, "bytes": e.hex()}) + "\n" for i, e in enumerate(self._entries)
        )

    def save(self, path) -> None:
        path = Path(path)
        data = self.to_jsonl()
        if path.suffix == ".gz":
            with gzip.open(path, "wt", encoding="utf-8") as fh:
                fh.write(data)
        else:
            path.write_text(data, encoding="utf-8")


def decode(v: Vocabulary, y: Sequence[int]) -> bytes:
    return v.decode(y)


def is_strict_prefix_monotone(v: Vocabulary) -> tuple:
    """``(True, None)`` if no entry is empty, else ``(False, offending_id)``.

    For a multiplicative decoder non-erasure is exactly what makes every
    appended token strictly lengthen the decoded string.
    """
    for i, e in enumerate(v.entries):
        if not e:
            return False, i
    return True, None


def greedy_encode(v: Vocabulary, x) -> TokenString:
    """Left-to-right longest-match segmentation (not BPE merge order).

    Among ids with identical bytes the smallest id is used.
    """
    x = as_bytes(x)
    trie = v.trie
    out = []
    i = 0
    while i < len(x):
        node = 0
        best = -1
        best_len = 0
        j = i
        while j < len(x):
            node = trie.children[node].get(x[j], -1)
            if node < 0:
                break
            j += 1
            toks = trie.tokens_at(node)
            if toks.size:
                best = int(toks[0])
                best_len = j - i
        if best < 0:
            raise UnencodableByte(i, x[i])
        out.append(best)
        i += best_len
    return tuple(out)


# ---------------------------------------------------------------------------
# Converters from common dumps
# ---------------------------------------------------------------------------


def _bytes_to_unicode() -> dict:
    """The printable-character byte mapping used by GPT-2 style vocab.json."""
    bs = (
        list(range(ord("!"), ord("~") + 1))
        + list(range(ord("¡"), ord("¬") + 1))
        + list(range(ord("®"), ord("ÿ") + 1))
    )
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return dict(zip(bs, map(chr, cs)))


def vocab_from_tiktoken(lines: Iterable[str], specials: dict | None = None) -> Vocabulary:
    """Parse ``<base64 bytes> <rank>`` lines; ``specials`` maps text -> id."""
    table = {}
    for line in lines:
        line = line.strip()
        if not line:
            continue
        tok, rank = line.split()
        table[int(rank)] = base64.b64decode(tok)
    for text, idx in (specials or {}).items():
        table[int(idx)] = as_bytes(text)
    if sorted(table) != list(range(len(table))):
        raise VocabFormatError("ranks must be dense in [0, |Δ|)")
    return Vocabulary(table[i] for i in range(len(table)))


def vocab_from_hf_json(obj: dict) -> Vocabulary:
    """Parse a byte-level BPE ``vocab.json`` (token string -> id)."""
    decoder = {c: b for b, c in _bytes_to_unicode().items()}
    table = {}
    for text, idx in obj.items():
        try:
            table[int(idx)] = bytes(decoder[c] for c in text)
        except KeyError:
            # special tokens such as <|endoftext|> are plain text
            table[int(idx)] = as_bytes(text)
    if sorted(table) != list(range(len(table))):
        raise VocabFormatError("ids must be dense in [0, |Δ|)")
    return Vocabulary(table[i] for i in range(len(table)))


DATA_DIR = Path(__file__).resolve().parent / "data"
GPT2_VOCAB_PATH = DATA_DIR / "gpt2.vocab.jsonl.gz"


@lru_cache(maxsize=1)
def load_gpt2_vocab() -> Vocabulary:
    """The bundled 50,257-entry GPT-2 byte-level vocabulary (loaded once)."""
    return Vocabulary.load(GPT2_VOCAB_PATH)
