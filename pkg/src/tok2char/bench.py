"""Per-character approximation error and throughput over a corpus.

For each corpus position the beam under test and a wider reference beam both
predict the next character; the Jensen-Shannon distance between the two
predictions is recorded together with the wall time of the beam under test.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .charlm import Mode, initial_state
from .distributions import NextCharDistribution
from .errors import DeadEnd
from .fixtures import Fixture
from .lm import TableLM
from .vocab import Vocabulary, as_bytes

# Uniquely decodable but not prefix-free: parses stay ambiguous for a few
# characters (so narrow beams must prune) yet the exact covering stays small.
BENCH_ENTRIES = [b"a", b"aab", b"ac", b"bb", b"bca", b"cba", b"ccc"]
BENCH_EOS = 1e-3


def bench_fixture(seed: int = 0) -> Fixture:
    """Bigram LM over :data:`BENCH_ENTRIES` with Dirichlet rows."""
    rng = np.random.default_rng(seed)
    v = Vocabulary(BENCH_ENTRIES)
    size = len(v)
    table = {}
    for ctx in [()] + [(t,) for t in range(size)]:
        row = np.maximum(rng.dirichlet(np.full(size, 0.8)), 1e-3)
        row = row / row.sum() * (1.0 - BENCH_EOS)
        table[ctx] = np.append(row, BENCH_EOS)
    return Fixture("bench", v, TableLM(size, 2, table), b"",
                   "uniquely decodable code with delayed parses")


def bench_corpus(n: int = 2000, seed: int = 0, fixture: Fixture | None = None) -> bytes:
    """``n`` characters decoded from tokens sampled without EOS."""
    fx = fixture or bench_fixture()
    rng = np.random.default_rng(seed)
    y: list = []
    out = bytearray()
    while len(out) < n:
        p = fx.lm.next(y).token_probs
        t = int(rng.choice(p.size, p=p / p.sum()))
        y.append(t)
        out += fx.vocab[t]
    return bytes(out[:n])


def _as_dist(p) -> NextCharDistribution:
    return p if isinstance(p, NextCharDistribution) else NextCharDistribution(p)


def jsd(p, q) -> float:
    """Jensen-Shannon distance with base-2 logarithms, in ``[0, 1]``."""
    p = _as_dist(p).probs
    q = _as_dist(q).probs
    m = 0.5 * (p + q)
    kp = p > 0
    kq = q > 0
    div = 0.5 * (np.sum(p[kp] * np.log2(p[kp] / m[kp])) + np.sum(q[kq] * np.log2(q[kq] / m[kq])))
    return math.sqrt(min(max(div, 0.0), 1.0))


def bootstrap_ci(values, statistic=np.mean, n_boot: int = 1000, seed: int = 0,
                 level: float = 0.95) -> tuple:
    """Percentile interval from resampling positions with replacement."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return (math.nan, math.nan)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, values.size, size=(n_boot, values.size))
    stats = np.array([statistic(values[row]) for row in idx])
    alpha = (1.0 - level) / 2
    return (float(np.quantile(stats, alpha)), float(np.quantile(stats, 1 - alpha)))


def _rate(seconds: np.ndarray) -> float:
    total = seconds.sum()
    return float(seconds.size / total) if total > 0 else math.inf


@dataclass
class BenchResult:
    per_char_jsd: list
    mean_jsd: float
    chars_per_sec: float
    dead_end_positions: list
    config: dict
    per_char_seconds: list = field(default_factory=list)
    gaps: list = field(default_factory=list)
    max_reference_width: int = 0
    ci: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["position", "jsd", "seconds", "dead_end"])
        dead = set(self.dead_end_positions)
        for t, (d, s) in enumerate(zip(self.per_char_jsd, self.per_char_seconds)):
            w.writerow([t, repr(d), repr(s), int(t in dead)])
        return buf.getvalue()


def gnuplot_dump(results) -> str:
    """Two columns, mean JSD and chars/sec, one line per configuration."""
    lines = ["# K mean_jsd chars_per_sec"]
    for r in results:
        lines.append(f"# K={r.config['K']}")
        lines.append(f"{float(r.mean_jsd)!r} {float(r.chars_per_sec)!r}")
    return "\n".join(lines) + "\n"


def _width(state) -> int:
    return len(state.bundles) if hasattr(state, "bundles") else len(state.items)


def run_bench(lm, v: Vocabulary, corpus, K, K_ref=None, *, kind: str = "bundled",
              model_id: str = "", corpus_id: str = "", n_boot: int = 1000,
              seed: int = 0) -> BenchResult:
    """Compare width ``K`` against width ``K_ref`` (``None`` = unpruned) on ``corpus``.

    Position ``t`` scores the prediction of ``corpus[t]``; the end of the
    corpus is not scored.  If the beam under test hits a dead end it
    is first rebuilt from scratch; if that fails too, it is re-seeded from the
    reference beam after the failing character and the position is logged as
    a gap.
    """
    corpus = as_bytes(corpus)
    if K is not None and K_ref is not None and K > K_ref:
        raise ValueError("K must not exceed K_ref")
    test_mode = Mode(kind, K) if kind != "exact" else Mode.exact()
    ref_mode = Mode(kind, K_ref) if kind != "exact" else Mode.exact()
    ref = initial_state(lm, v, ref_mode)
    cur = initial_state(lm, v, test_mode)
    per_jsd, per_sec, dead, gaps = [], [], [], []
    max_width = _width(ref)
    for t, c in enumerate(corpus):
        start = time.perf_counter()
        p = cur.next_char_dist()
        spent = time.perf_counter() - start
        q = ref.next_char_dist()
        per_jsd.append(jsd(p, q))
        ref = ref.advance(c)
        max_width = max(max_width, _width(ref))
        start = time.perf_counter()
        try:
            cur = cur.advance(c)
        except DeadEnd:
            dead.append(t)
            try:
                cur = initial_state(lm, v, test_mode).extend(corpus[: t + 1])
            except DeadEnd:
                gaps.append(t)
                cur = cur.reseeded(ref)
        spent += time.perf_counter() - start
        per_sec.append(spent)
    jsd_arr = np.array(per_jsd)
    sec_arr = np.array(per_sec)
    config = {"K": K, "K_ref": K_ref, "kind": kind, "model": model_id,
              "corpus": corpus_id, "n_chars": len(corpus)}
    ci = {
        "mean_jsd": list(bootstrap_ci(jsd_arr, np.mean, n_boot, seed)),
        "chars_per_sec": list(bootstrap_ci(sec_arr, _rate, n_boot, seed)),
        "level": 0.95,
        "replicates": n_boot,
    }
    return BenchResult(
        per_char_jsd=jsd_arr.tolist(),
        mean_jsd=float(jsd_arr.mean()) if jsd_arr.size else 0.0,
        chars_per_sec=_rate(sec_arr),
        dead_end_positions=dead,
        config=config,
        per_char_seconds=sec_arr.tolist(),
        gaps=gaps,
        max_reference_width=max_width,
        ci=ci,
    )


def _run_one(args):
    lm, v, corpus, K, K_ref, kw = args
    return run_bench(lm, v, corpus, K, K_ref, **kw)


def run_bench_grid(lm, v, corpus, Ks, K_ref=None, *, jobs: int = 1, **kw) -> list:
    """One :class:`BenchResult` per width in ``Ks``, optionally in parallel processes."""
    tasks = [(lm, v, corpus, K, K_ref, kw) for K in Ks]
    if jobs <= 1 or len(tasks) <= 1:
        return [_run_one(a) for a in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_one, tasks))
