import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import all_strings
from tok2char.charlm import (
    CharLM,
    Mode,
    cond_prefix_prob,
    eos_prob,
    full_prob,
    generate_chars,
    next_char_dist,
    next_char_dist_slow,
    prefix_prob,
)
from tok2char.distributions import EOS_BYTE, NextCharDistribution
from tok2char.errors import DeadEnd, InvalidDistribution, UndefinedConditional
from tok2char.fixtures import random_fixture

short_text = st.binary(max_size=3).map(lambda b: bytes(97 + c % 3 for c in b))
MODES = ["exact", "bucket:inf", "bundled:inf"]


class TestMode:
    @pytest.mark.parametrize("text,kind,K", [
        ("exact", "exact", None), ("bucket", "bucket", 32), ("bundled:16", "bundled", 16),
        ("bundled:inf", "bundled", None), ("bucket:2", "bucket", 2),
    ])
    def test_parse(self, text, kind, K):
        m = Mode.parse(text)
        assert (m.kind, m.K) == (kind, K)
        assert Mode.parse(str(m)) == m

    def test_default_is_bundled_32(self):
        assert Mode() == Mode("bundled", 32)

    @pytest.mark.parametrize("text", ["beam", "bucket:0", "bundled:x"])
    def test_rejects(self, text):
        with pytest.raises(ValueError):
            Mode.parse(text)


class TestConditionals:
    def test_cond_prefix(self, fx1):
        assert cond_prefix_prob(fx1.lm, fx1.vocab, "a", "b", "exact") == pytest.approx(0.7)
        assert cond_prefix_prob(fx1.lm, fx1.vocab, "ab", "", "exact") == pytest.approx(1.0)
        assert cond_prefix_prob(fx1.lm, fx1.vocab, "", "a", "exact") == pytest.approx(0.6)

    def test_eos(self, fx1):
        assert eos_prob(fx1.lm, fx1.vocab, "a", "exact") == pytest.approx(0.1)
        assert eos_prob(fx1.lm, fx1.vocab, "", "exact") == pytest.approx(0.3)

    def test_eos_without_exact_encoding(self):
        f = random_fixture(0)
        v_no_exact = [x for x in all_strings(b"abc", 3)
                      if prefix_prob(f.lm, f.vocab, x, "exact") > 0
                      and full_prob(f.lm, f.vocab, x, "exact") == 0]
        for x in v_no_exact:
            assert eos_prob(f.lm, f.vocab, x, "exact") == 0.0

    def test_zero_prefix_is_undefined(self, fx1):
        with pytest.raises(UndefinedConditional):
            cond_prefix_prob(fx1.lm, fx1.vocab, "ax", "a", "exact")
        with pytest.raises(UndefinedConditional):
            eos_prob(fx1.lm, fx1.vocab, "x", "exact")
        with pytest.raises(ZeroDivisionError):
            next_char_dist(fx1.lm, fx1.vocab, "x", "exact")

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 1000), short_text, short_text, st.sampled_from(MODES))
    def test_chain_rule(self, seed, x, x2, mode):
        f = random_fixture(seed)
        px = prefix_prob(f.lm, f.vocab, x, mode)
        if px == 0.0:
            return
        joint = prefix_prob(f.lm, f.vocab, x + x2, mode)
        cond = cond_prefix_prob(f.lm, f.vocab, x, x2, mode)
        assert joint == pytest.approx(px * cond, rel=1e-9, abs=1e-300)

    @pytest.mark.parametrize("seed", range(6))
    def test_whitespace_boundary_identity(self, seed):
        f = random_fixture(seed, alphabet=b"on e", max_size=14)
        for x in all_strings(b"on e", 2):
            if prefix_prob(f.lm, f.vocab, x, "exact") == 0.0:
                continue
            whole = cond_prefix_prob(f.lm, f.vocab, x, " one", "exact")
            if prefix_prob(f.lm, f.vocab, x + b" ", "exact") == 0.0:
                assert whole == 0.0
                continue
            split = (cond_prefix_prob(f.lm, f.vocab, x, " ", "exact")
                     * cond_prefix_prob(f.lm, f.vocab, x + b" ", "one", "exact"))
            assert whole == pytest.approx(split, rel=1e-9, abs=1e-300)


class TestNextCharDist:
    def test_fix1_after_a(self, fx1):
        d = next_char_dist(fx1.lm, fx1.vocab, "a", "exact")
        assert d.to_mapping() == pytest.approx({"a": 0.2, "b": 0.7, "EOS": 0.1})

    def test_fix1_empty(self, fx1):
        d = next_char_dist(fx1.lm, fx1.vocab, "", "exact")
        assert d.to_mapping() == pytest.approx({"a": 0.6, "b": 0.1, "EOS": 0.3})

    @pytest.mark.parametrize("x", list(all_strings(b"ab", 4)))
    def test_slow_equals_fused_on_fix1(self, fx1, x):
        try:
            slow = next_char_dist_slow(fx1.lm, fx1.vocab, x, "exact")
        except UndefinedConditional:
            with pytest.raises(UndefinedConditional):
                next_char_dist(fx1.lm, fx1.vocab, x, "exact")
            return
        fused = next_char_dist(fx1.lm, fx1.vocab, x, "exact")
        np.testing.assert_allclose(fused.probs, slow.probs, rtol=1e-9, atol=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 1000), short_text, st.sampled_from(MODES + ["bucket:2", "bundled:2"]))
    def test_normalised(self, seed, x, mode):
        f = random_fixture(seed)
        try:
            d = next_char_dist(f.lm, f.vocab, x, mode)
        except (UndefinedConditional, DeadEnd):
            return
        assert d.probs.sum() == pytest.approx(1.0, abs=1e-9)
        assert (d.probs >= 0).all()

    @pytest.mark.parametrize("seed", range(8))
    def test_telescoping(self, seed):
        f = random_fixture(seed)
        for x in all_strings(b"abc", 4):
            if prefix_prob(f.lm, f.vocab, x, "exact") == 0.0:
                continue
            logp = 0.0
            for t in range(len(x)):
                logp += math.log(next_char_dist(f.lm, f.vocab, x[:t], "exact")[x[t]])
            end = next_char_dist(f.lm, f.vocab, x, "exact").eos
            full = full_prob(f.lm, f.vocab, x, "exact")
            assert math.exp(logp) * end == pytest.approx(full, rel=1e-9, abs=1e-300)

    def test_rejects_unnormalised(self):
        with pytest.raises(InvalidDistribution):
            NextCharDistribution(np.full(EOS_BYTE + 1, 0.5))


class TestGenerateChars:
    def test_next_char_frequencies(self, fx1_uncapped):
        f = fx1_uncapped
        rng = np.random.default_rng(2024)
        n = 20000
        counts = {"a": 0, "b": 0, "EOS": 0}
        for _ in range(n):
            out = generate_chars(f.lm, f.vocab, "a", "bundled:8", rng, max_chars=1)
            counts["EOS" if out == b"a" else chr(out[1])] += 1
        for key, p in {"a": 0.2, "b": 0.7, "EOS": 0.1}.items():
            sigma = math.sqrt(n * p * (1 - p))
            assert abs(counts[key] - n * p) <= 3 * sigma, (key, counts)

    def test_dead_end_prompt(self, fx1):
        with pytest.raises(DeadEnd):
            generate_chars(fx1.lm, fx1.vocab, "aa", "bucket:1", rng=0)

    @pytest.mark.parametrize("seed", range(5))
    def test_logprob_bookkeeping(self, fx1, seed):
        out, logp = generate_chars(fx1.lm, fx1.vocab, "", "exact", seed, return_logprob=True)
        assert logp == pytest.approx(math.log(full_prob(fx1.lm, fx1.vocab, out, "exact")),
                                     rel=1e-9)

    def test_seeded_determinism(self, fx1):
        a = generate_chars(fx1.lm, fx1.vocab, "a", "exact", 7)
        b = generate_chars(fx1.lm, fx1.vocab, "a", "exact", 7)
        assert a == b and a.startswith(b"a")

    def test_facade(self, fx1):
        lm = CharLM(fx1.lm, fx1.vocab, "exact")
        assert lm.prefix_prob("ab") == pytest.approx(0.42)
        assert lm.full_prob("ab") == pytest.approx(0.126)
        assert lm.eos_prob("a") == pytest.approx(0.1)
        assert lm.next_char_dist("a")["b"] == pytest.approx(0.7)
        assert lm.generate("ab", rng=1).startswith(b"ab")
