"""Size bounds for coverings.

Fertility is the largest number of token ids sharing one decoding and munch
the longest decoding.  Together they bound the covering size through the
recurrence ``C(n) = F * sum(C(n-M .. n-1))``.  All counts are Python ints.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass, field

from .covering import count_cover
from .vocab import Vocabulary, as_bytes


def fertility(v: Vocabulary) -> int:
    """Maximum number of distinct ids that decode to the same bytes."""
    counts = Counter(v.entries)
    return max(counts.values(), default=0)


def munch(v: Vocabulary) -> int:
    return max((len(e) for e in v.entries), default=0)


def cover_bound_table(F: int, M: int, n: int) -> list:
    """``[C(0), ..., C(n)]``."""
    if F < 1 or M < 1:
        raise ValueError("F and M must be >= 1")
    table = [1]
    for k in range(1, n + 1):
        table.append(F * sum(table[max(0, k - M):k]))
    return table


def verify_bound(v: Vocabulary, x) -> bool:
    x = as_bytes(x)
    cover, _ = count_cover(v, x)
    return cover <= cover_bound_table(fertility(v), munch(v), len(x))[len(x)]


def lower_bound_construction(N: int) -> tuple:
    """``(vocab {a, aa}, a^N, |E(a^N)|)``."""
    if N < 1:
        raise ValueError("N must be >= 1")
    v = Vocabulary([b"a", b"aa"])
    x = b"a" * N
    return v, x, count_cover(v, x)[1]


def fib(n: int, order: int = 2) -> int:
    """``order``-step Fibonacci with ``fib(1) = 1`` and zero before it."""
    if n <= 0:
        return 0
    seq = [1]
    for k in range(1, n):
        seq.append(sum(seq[max(0, k - order):k]))
    return seq[-1]


@dataclass
class Discrepancy:
    claim: str
    claimed: list
    computed: list
    note: str


@dataclass
class BoundReport:
    fertility: int
    munch: int
    table: list
    discrepancies: list = field(default_factory=list)

    def to_json(self) -> dict:
        out = asdict(self)
        # big integers travel as decimal strings
        out["table"] = [str(c) for c in self.table]
        for d in out["discrepancies"]:
            d["claimed"] = [str(c) for c in d["claimed"]]
            d["computed"] = [str(c) for c in d["computed"]]
        return out


def closed_form_discrepancies(max_n: int = 12, fertilities=(1, 2, 3)) -> list:
    """Compare the published closed forms with the recurrence and construction."""
    ns = range(1, max_n + 1)
    out = [
        Discrepancy(
            "M = N and F = 1 gives C(N) = 2^N",
            [2 ** n for n in ns],
            [cover_bound_table(1, n, n)[n] for n in ns],
            "the recurrence gives 2^(N-1)",
        ),
    ]
    for F in fertilities:
        out.append(Discrepancy(
            f"M = N gives C(N) = F(1+F)^N (F = {F})",
            [F * (1 + F) ** n for n in ns],
            [cover_bound_table(F, n, n)[n] for n in ns],
            "the recurrence gives F(1+F)^(N-1)",
        ))
    for F, M in ((2, 2), (2, 3), (3, 2)):
        claimed = [F ** n * fib(n, M) for n in ns]
        computed = [cover_bound_table(F, M, n)[n] for n in ns]
        if claimed != computed:
            out.append(Discrepancy(
                f"C(N) = F^N Fib(N, M) (F = {F}, M = {M})", claimed, computed,
                "Fib(N, M) taken as the M-step Fibonacci number with Fib(1) = 1",
            ))
    construction = [lower_bound_construction(n)[2] for n in ns]
    out.append(Discrepancy(
        "the {a, aa} construction has |E(a^N)| in Omega(2^N)",
        [2 ** n for n in ns],
        construction,
        "exact counts are Fib(N+1), growing like 1.618^N",
    ))
    out.append(Discrepancy(
        "the number of solutions (n, m) of m + 2n = N grows like Omega(2^N)",
        [2 ** n for n in ns],
        [n // 2 + 1 for n in ns],
        "unordered solutions grow linearly; ordered token strings are Fib(N+1)",
    ))
    return out


def bounds_report(v: Vocabulary, n: int = 16, *, max_n: int = 12) -> BoundReport:
    F, M = fertility(v), munch(v)
    return BoundReport(F, M, cover_bound_table(F, M, n), closed_form_discrepancies(max_n))
