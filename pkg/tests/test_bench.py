import csv
import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tok2char.bench import (
    BenchResult,
    bench_corpus,
    bench_fixture,
    bootstrap_ci,
    gnuplot_dump,
    jsd,
    run_bench,
    run_bench_grid,
)
from tok2char.distributions import EOS_BYTE, NextCharDistribution
from tok2char.errors import InvalidDistribution
from tok2char.fixtures import fix1


def dist(mapping):
    return NextCharDistribution.from_mapping(mapping)


def random_dist(rng, support=4):
    probs = np.zeros(EOS_BYTE + 1)
    idx = rng.choice(EOS_BYTE + 1, size=support, replace=False)
    probs[idx] = rng.dirichlet(np.ones(support))
    return NextCharDistribution(probs)


def jsd_scipy(p, q):
    from scipy.spatial.distance import jensenshannon

    return float(jensenshannon(p.probs, q.probs, base=2))


class TestJSD:
    def test_identity(self):
        p = dist({"a": 0.3, "b": 0.7})
        assert jsd(p, p) == 0.0

    def test_disjoint_point_masses(self):
        assert jsd(dist({"a": 1.0}), dist({"b": 1.0})) == pytest.approx(1.0)

    def test_rejects_unnormalised(self):
        with pytest.raises(InvalidDistribution):
            jsd(np.full(EOS_BYTE + 1, 1.0), dist({"a": 1.0}))

    @settings(max_examples=100)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_symmetric_bounded_and_matches_scipy(self, seed):
        rng = np.random.default_rng(seed)
        p, q = random_dist(rng), random_dist(rng)
        d = jsd(p, q)
        assert 0.0 <= d <= 1.0
        assert d == pytest.approx(jsd(q, p), abs=1e-12)
        assert d == pytest.approx(jsd_scipy(p, q), abs=1e-7)


class TestBootstrap:
    def test_contains_mean(self):
        values = np.random.default_rng(0).normal(1.0, 0.1, size=500)
        lo, hi = bootstrap_ci(values, n_boot=500)
        assert lo < values.mean() < hi
        assert hi - lo == pytest.approx(2 * 1.96 * 0.1 / math.sqrt(500), rel=0.25)

    def test_deterministic(self):
        values = np.arange(50.0)
        assert bootstrap_ci(values, seed=3) == bootstrap_ci(values, seed=3)

    def test_empty(self):
        assert all(math.isnan(v) for v in bootstrap_ci([]))


@pytest.fixture(scope="module")
def fix1_results():
    f = fix1()
    corpus = b"ab" * 8
    return {K: run_bench(f.lm, f.vocab, corpus, K, None, n_boot=200) for K in (1, 2, 8, None)}


@pytest.fixture(scope="module")
def result():
    f = fix1()
    return run_bench(f.lm, f.vocab, b"abab", 1, None, n_boot=20, model_id="fix1", corpus_id="abab")


class TestRunBench:
    def test_same_width_gives_zero(self):
        f = fix1()
        r = run_bench(f.lm, f.vocab, b"abab", 2, 2, n_boot=50)
        assert r.mean_jsd == 0.0 and set(r.per_char_jsd) == {0.0}

    def test_fix1_wider_beam_is_closer(self, fix1_results):
        assert fix1_results[8].mean_jsd <= fix1_results[1].mean_jsd
        assert fix1_results[1].mean_jsd > 0.0
        assert fix1_results[None].mean_jsd == 0.0

    def test_result_fields(self, fix1_results):
        r = fix1_results[1]
        assert len(r.per_char_jsd) == len(r.per_char_seconds) == 16
        assert all(0.0 <= d <= 1.0 for d in r.per_char_jsd)
        assert r.chars_per_sec > 0
        assert r.config["K"] == 1 and r.config["K_ref"] is None
        lo, hi = r.ci["mean_jsd"]
        assert lo <= r.mean_jsd <= hi
        assert r.ci["level"] == 0.95 and r.ci["replicates"] == 200

    def test_bench_fixture_exact_at_max_width(self):
        fx = bench_fixture()
        corpus = bench_corpus(300, fixture=fx)
        ref = run_bench(fx.lm, fx.vocab, corpus, None, None, n_boot=10)
        width = ref.max_reference_width
        wide = run_bench(fx.lm, fx.vocab, corpus, width, None, n_boot=10)
        narrow = run_bench(fx.lm, fx.vocab, corpus, 1, None, n_boot=10)
        assert wide.mean_jsd == 0.0 and not wide.dead_end_positions
        assert narrow.mean_jsd > 0.0

    def test_dead_ends_are_recorded_and_run_continues(self):
        fx = bench_fixture()
        corpus = bench_corpus(300, fixture=fx)
        r = run_bench(fx.lm, fx.vocab, corpus, 1, None, n_boot=10)
        assert len(r.per_char_jsd) == 300
        assert r.dead_end_positions
        assert set(r.gaps) <= set(r.dead_end_positions)

    def test_rejects_K_above_reference(self):
        f = fix1()
        with pytest.raises(ValueError):
            run_bench(f.lm, f.vocab, b"ab", 4, 2)

    def test_bucket_and_bundled_agree(self):
        f = fix1()
        a = run_bench(f.lm, f.vocab, b"abab", 1, None, n_boot=10)
        b = run_bench(f.lm, f.vocab, b"abab", 1, None, kind="bucket", n_boot=10)
        np.testing.assert_allclose(a.per_char_jsd, b.per_char_jsd, atol=1e-6)


class TestSerialisation:
    def test_json(self, result):
        obj = json.loads(result.dumps())
        assert obj["config"]["model"] == "fix1"
        assert BenchResult(**obj).mean_jsd == result.mean_jsd

    def test_csv(self, result):
        rows = list(csv.reader(io.StringIO(result.to_csv())))
        assert rows[0] == ["position", "jsd", "seconds", "dead_end"]
        assert len(rows) == 5
        assert float(rows[1][1]) == result.per_char_jsd[0]

    def test_gnuplot(self, result):
        lines = gnuplot_dump([result]).splitlines()
        data = [ln for ln in lines if not ln.startswith("#")]
        assert len(data) == 1
        jsd_val, rate = map(float, data[0].split())
        assert jsd_val == result.mean_jsd and rate == result.chars_per_sec

    def test_grid_in_processes(self):
        f = fix1()
        serial = run_bench_grid(f.lm, f.vocab, b"abab", [1, 2], None, n_boot=10)
        parallel = run_bench_grid(f.lm, f.vocab, b"abab", [1, 2], None, jobs=2, n_boot=10)
        assert [r.per_char_jsd for r in serial] == [r.per_char_jsd for r in parallel]
