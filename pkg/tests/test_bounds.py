import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import all_strings
from tok2char.bounds import (
    bounds_report,
    closed_form_discrepancies,
    cover_bound_table,
    fertility,
    fib,
    lower_bound_construction,
    munch,
    verify_bound,
)
from tok2char.covering import count_cover
from tok2char.fixtures import FIX1_VOCAB, random_vocab
from tok2char.vocab import Vocabulary, load_gpt2_vocab


def fib_plain(n):
    a, b = 0, 1
    for _ in range(n):
        a, b = b, a + b
    return a


class TestFertilityMunch:
    def test_fix1(self):
        assert fertility(FIX1_VOCAB) == 1
        assert munch(FIX1_VOCAB) == 2

    def test_duplicates(self):
        assert fertility(Vocabulary([b"a", b"a", b"b"])) == 2

    def test_single_bytes(self):
        assert munch(Vocabulary([b"a", b"b", b"c"])) == 1

    def test_gpt2(self):
        v = load_gpt2_vocab()
        assert fertility(v) == 1
        assert munch(v) == 128


class TestCoverBoundTable:
    def test_fibonacci(self):
        assert cover_bound_table(1, 2, 5) == [1, 1, 2, 3, 5, 8]

    def test_degenerate(self):
        assert cover_bound_table(1, 1, 10) == [1] * 11

    def test_powers_of_two(self):
        assert cover_bound_table(2, 1, 12) == [2 ** n for n in range(13)]

    def test_big_integers(self):
        table = cover_bound_table(3, 4, 200)
        assert isinstance(table[-1], int) and table[-1] > 2 ** 64

    @settings(max_examples=50)
    @given(st.integers(1, 4), st.integers(1, 5), st.integers(0, 25))
    def test_monotone_in_n_F_M(self, F, M, n):
        t = cover_bound_table(F, M, n)
        assert all(a <= b for a, b in zip(t, t[1:]))
        assert t[n] <= cover_bound_table(F + 1, M, n)[n]
        assert t[n] <= cover_bound_table(F, M + 1, n)[n]

    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError):
            cover_bound_table(0, 2, 3)


class TestVerifyBound:
    def test_fix1(self):
        assert count_cover(FIX1_VOCAB, "ab")[0] == 2 == cover_bound_table(1, 2, 2)[2]
        assert verify_bound(FIX1_VOCAB, "ab")
        assert count_cover(FIX1_VOCAB, "aa")[0] == 2
        assert verify_bound(FIX1_VOCAB, "aa")

    def test_single_character_counterexample(self):
        # "a" is covered by both "a" and "ab", but the recurrence allows F * C(0) = 1
        assert count_cover(FIX1_VOCAB, "a") == (2, 1)
        assert cover_bound_table(1, 2, 1)[1] == 1
        assert not verify_bound(FIX1_VOCAB, "a")

    def test_gpt2_counterexample(self):
        v = load_gpt2_vocab()
        assert count_cover(v, "Hello, worl")[0] == 36608
        assert cover_bound_table(fertility(v), munch(v), 11)[11] == 1024
        assert not verify_bound(v, "Hello, worl")

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 10_000), st.binary(max_size=6).map(lambda b: bytes(97 + c % 3 for c in b)))
    def test_bound_on_random_vocabularies(self, seed, x):
        v = random_vocab(np.random.default_rng(seed), duplicate_rate=0.3)
        assert verify_bound(v, x)

    @pytest.mark.parametrize("seed", range(30))
    def test_recurrence_bounds_exact_encodings(self, seed):
        v = random_vocab(np.random.default_rng(seed), duplicate_rate=0.3)
        table = cover_bound_table(fertility(v), munch(v), 6)
        for x in all_strings(b"abc", 6):
            assert count_cover(v, x)[1] <= table[len(x)]


class TestLowerBoundConstruction:
    @pytest.mark.parametrize("N,count", [(2, 2), (4, 5), (10, 89)])
    def test_examples(self, N, count):
        v, x, n = lower_bound_construction(N)
        assert v.entries == (b"a", b"aa") and x == b"a" * N
        assert n == count

    def test_fibonacci_up_to_30(self):
        for N in range(1, 31):
            assert lower_bound_construction(N)[2] == fib_plain(N + 1)

    def test_fib_helper(self):
        assert [fib(n) for n in range(1, 9)] == [1, 1, 2, 3, 5, 8, 13, 21]
        assert [fib(n, 3) for n in range(1, 8)] == [1, 1, 2, 4, 7, 13, 24]


@pytest.fixture(scope="module")
def by_claim():
    return {d.claim: d for d in closed_form_discrepancies(12)}


class TestDiscrepancies:
    def test_power_of_two_claim(self, by_claim):
        d = by_claim["M = N and F = 1 gives C(N) = 2^N"]
        assert d.computed == [2 ** (n - 1) for n in range(1, 13)]
        assert d.claimed == [2 ** n for n in range(1, 13)]

    @pytest.mark.parametrize("F", [1, 2, 3])
    def test_full_munch_claim(self, by_claim, F):
        d = by_claim[f"M = N gives C(N) = F(1+F)^N (F = {F})"]
        assert d.computed == [F * (1 + F) ** (n - 1) for n in range(1, 13)]

    def test_construction_claim(self, by_claim):
        d = by_claim["the {a, aa} construction has |E(a^N)| in Omega(2^N)"]
        assert d.computed == [fib_plain(n + 1) for n in range(1, 13)]

    def test_solution_count_claim(self, by_claim):
        d = by_claim["the number of solutions (n, m) of m + 2n = N grows like Omega(2^N)"]
        assert d.computed == [n // 2 + 1 for n in range(1, 13)]

    def test_multi_step_fibonacci_claims(self, by_claim):
        keys = [k for k in by_claim if k.startswith("C(N) = F^N Fib")]
        assert keys
        for k in keys:
            d = by_claim[k]
            assert d.claimed != d.computed

    def test_report_json(self):
        report = bounds_report(FIX1_VOCAB, n=40)
        obj = json.loads(json.dumps(report.to_json()))
        assert obj["fertility"] == 1 and obj["munch"] == 2
        assert obj["table"][40] == str(fib_plain(41))
        assert len(obj["discrepancies"]) == len(closed_form_discrepancies(12))
