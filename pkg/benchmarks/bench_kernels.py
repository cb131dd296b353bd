#!/usr/bin/env python3
"""Time the numba kernels against their numpy fallbacks.

Kernels:
  accumulate   trie mass accumulation over the GPT-2 vocabulary trie
  brute_force  exhaustive enumeration of a capped random TableLM

Both implementations are called directly, so the TOK2CHAR_DISABLE_NUMBA flag
does not matter here.  Numba compile time is excluded by a warm-up call.

Usage:
  python benchmarks/bench_kernels.py [--repeat 20] [--json out.json]
"""

import argparse
import json
import statistics
import sys
import time

import numpy as np

from tok2char import _kernels
from tok2char.fixtures import random_fixture
from tok2char.lm import _oracle_inputs
from tok2char.vocab import load_gpt2_vocab


def timeit(fn, repeat):
    fn()  # warm-up (JIT compile, caches)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return out, times


def summarize(times):
    return {
        "median_s": statistics.median(times),
        "min_s": min(times),
        "mean_s": statistics.fmean(times),
    }


def bench_accumulate(repeat):
    trie = load_gpt2_vocab().trie
    rng = np.random.default_rng(0)
    w = rng.dirichlet(np.ones(trie.token_node.size))
    args = (trie.token_node, w, trie.parent)
    out_np, t_np = timeit(
        lambda: _kernels.accumulate_masses_numpy(*args, trie.levels, trie.n_nodes), repeat
    )
    out_nb, t_nb = timeit(
        lambda: _kernels.accumulate_masses_numba(*args, trie.order, trie.n_nodes), repeat
    )
    diff = max(float(np.max(np.abs(a - b))) for a, b in zip(out_np, out_nb))
    return {"size": int(trie.n_nodes), "numpy": summarize(t_np), "numba": summarize(t_nb),
            "max_abs_diff": diff}


def bench_brute_force(repeat, max_len=5):
    f = random_fixture(7, cap=6, max_size=10)
    alphabet, _, probs, trans, tok_syms, tok_len = _oracle_inputs(f.lm, f.vocab)
    args = (probs, trans, tok_syms, np.asarray(tok_len, dtype=np.int64), f.lm.cap,
            len(alphabet), max_len)
    out_np, t_np = timeit(lambda: _kernels.brute_force_numpy(*args), repeat)
    out_nb, t_nb = timeit(lambda: _kernels.brute_force_numba(*args), repeat)
    return {"size": len(f.vocab), "cap": f.lm.cap, "numpy": summarize(t_np),
            "numba": summarize(t_nb), "max_abs_diff": float(np.max(np.abs(out_np - out_nb)))}


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--json", default=None, help="write results to this file")
    args = parser.parse_args()

    if not _kernels.NUMBA_AVAILABLE:
        print("numba is not installed; nothing to compare", file=sys.stderr)
        return 1

    results = {
        "accumulate": bench_accumulate(args.repeat),
        "brute_force": bench_brute_force(max(1, args.repeat // 4)),
    }
    print(f"{'kernel':<12} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8} {'max diff':>10}")
    for name, r in results.items():
        a = r["numpy"]["median_s"] * 1e3
        b = r["numba"]["median_s"] * 1e3
        print(f"{name:<12} {a:>10.3f} {b:>10.3f} {a / b:>7.1f}x {r['max_abs_diff']:>10.2e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
