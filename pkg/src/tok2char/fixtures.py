"""Named vocabulary/LM fixtures and random fixture generators.

FIX1 is the running toy example: ``1 -> "a"``, ``2 -> "b"``, ``3 -> "ab"``
with a unigram LM ``p(1)=0.2, p(2)=0.1, p(3)=0.4, p(EOS)=0.3``.  Id 0 is a
padding entry (byte 0x00) with probability zero so that ids stay dense.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lm import TableLM
from .vocab import Vocabulary


@dataclass(frozen=True)
class Fixture:
    name: str
    vocab: Vocabulary
    lm: TableLM
    prompt: bytes = b""
    description: str = ""


FIX1_VOCAB = Vocabulary([b"\x00", b"a", b"b", b"ab"])
FIX1_PROBS = np.array([0.0, 0.2, 0.1, 0.4, 0.3])


def fix1_lm(cap: int | None = None) -> TableLM:
    return TableLM(len(FIX1_VOCAB), 1, {(): FIX1_PROBS}, cap=cap)


def fix1(cap: int | None = None) -> Fixture:
    return Fixture("fix1" if cap is None else f"fix1-cap{cap}", FIX1_VOCAB, fix1_lm(cap))


# ---------------------------------------------------------------------------
# Prompt-boundary demo
# ---------------------------------------------------------------------------

DEMO_HW_ENTRIES = [
    "H", "e", "l", "o", ",", " ", "w", "r", "d", "i",
    "Hello", " wor", " world", "wide", "ld", "Hell", "s", ".",
]
_T = {tok: i for i, tok in enumerate(DEMO_HW_ENTRIES)}
DEMO_HW_PROMPT = b"Hello, worl"


def _demo_row(weights: dict, eos: float, background: float = 1e-3) -> np.ndarray:
    row = np.full(len(DEMO_HW_ENTRIES) + 1, background)
    for tok, w in weights.items():
        row[_T[tok]] = w
    row[-1] = eos
    return row / row.sum()


def demo_hw(cap: int | None = 8) -> Fixture:
    """Trigram LM where the greedy encoding of "Hello, worl" ends in
    ``[" wor", "l"]`` but the model overwhelmingly writes ``" world"``.

    Backing up one token leaves ``" wor"`` in place, so token healing can
    only continue with ``"l"``/``"ld"``; the covering's best member instead
    uses the single token ``" world"``.
    """
    v = Vocabulary(DEMO_HW_ENTRIES)
    table = {
        (): _demo_row({"Hello": 0.5, "Hell": 0.05, "H": 0.02}, eos=0.05, background=0.01),
        (_T["Hello"],): _demo_row({",": 0.8, " world": 0.05}, eos=0.05),
        (_T["Hell"],): _demo_row({"o": 0.8}, eos=0.05),
        (_T["Hello"], _T[","]): _demo_row({" world": 0.8, " wor": 0.01, " ": 0.02}, eos=0.02),
        (_T[","], _T[" world"]): _demo_row({".": 0.5}, eos=0.45),
        (_T[","], _T[" wor"]): _demo_row({"l": 0.6, "ld": 0.02, "d": 0.05}, eos=0.02),
        (_T[" wor"], _T["l"]): _demo_row({"wide": 0.8, "d": 0.05, "s": 0.05}, eos=0.02),
        (_T[" wor"], _T["ld"]): _demo_row({".": 0.5}, eos=0.4),
        (_T["l"], _T["wide"]): _demo_row({".": 0.5}, eos=0.45),
        (_T["."],): _demo_row({}, eos=0.9),
    }
    return Fixture(
        "demo-hw", v, TableLM(len(v), 3, table, cap=cap), DEMO_HW_PROMPT,
        "token healing vs covering-based conditioning",
    )


# ---------------------------------------------------------------------------
# Random fixtures
# ---------------------------------------------------------------------------


def random_vocab(
    rng: np.random.Generator,
    max_size: int = 12,
    max_len: int = 3,
    alphabet: bytes = b"abc",
    duplicate_rate: float = 0.05,
) -> Vocabulary:
    """Every alphabet byte as a token, plus random strings up to ``max_len``."""
    entries = [bytes([b]) for b in alphabet]
    size = int(rng.integers(len(entries), max_size + 1))
    while len(entries) < size:
        if entries and rng.random() < duplicate_rate:
            entries.append(entries[int(rng.integers(len(entries)))])
            continue
        n = int(rng.integers(1, max_len + 1))
        entries.append(bytes(alphabet[int(i)] for i in rng.integers(len(alphabet), size=n)))
    order = rng.permutation(len(entries))
    return Vocabulary([entries[i] for i in order])


def random_table_lm(
    rng: np.random.Generator,
    vocab_size: int,
    order: int | None = None,
    cap: int | None = 6,
    concentration: float = 0.7,
) -> TableLM:
    """Dirichlet rows for every context of length < ``order``."""
    if order is None:
        order = int(rng.integers(1, 4))
    contexts = [()]
    frontier = [()]
    for _ in range(order - 1):
        frontier = [c + (t,) for c in frontier for t in range(vocab_size)]
        contexts.extend(frontier)
    table = {}
    for ctx in contexts:
        row = rng.dirichlet(np.full(vocab_size + 1, concentration))
        row = np.maximum(row, 1e-12)
        table[ctx] = row / row.sum()
    return TableLM(vocab_size, order, table, cap=cap)


def random_fixture(seed: int, *, cap: int = 6, max_size: int = 12, max_len: int = 3,
                   alphabet: bytes = b"abc", order: int | None = None) -> Fixture:
    rng = np.random.default_rng(seed)
    v = random_vocab(rng, max_size=max_size, max_len=max_len, alphabet=alphabet)
    lm = random_table_lm(rng, len(v), order=order, cap=cap)
    return Fixture(f"random-{seed}", v, lm)


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------


def get_fixture(name: str) -> Fixture:
    if name == "fix1":
        return fix1()
    if name.startswith("fix1-cap"):
        return fix1(int(name[len("fix1-cap"):]))
    if name == "demo-hw":
        return demo_hw()
    if name == "bench":
        from .bench import bench_fixture

        return bench_fixture()
    if name.startswith("random-"):
        return random_fixture(int(name[len("random-"):]))
    raise KeyError(f"unknown fixture {name!r}")


FIXTURE_NAMES = ("fix1", "fix1-cap4", "demo-hw", "bench", "random-<seed>")
