import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tok2char.beam import build_trie
from tok2char.fixtures import random_fixture
from tok2char.trie import EOT


class TestFix1Trie:
    @pytest.fixture
    def trie(self, fx1):
        return build_trie(fx1.lm, fx1.vocab, ())

    def test_path_masses(self, trie):
        assert trie.mass[trie.node(b"a")] == pytest.approx(0.6)
        assert trie.mass[trie.node(b"b")] == pytest.approx(0.1)
        assert trie.mass[trie.node(b"ab")] == pytest.approx(0.4)
        assert trie.root_mass == pytest.approx(0.7)

    def test_token_lists(self, trie):
        assert trie.tokens(trie.node(b"a")) == [(1, pytest.approx(0.2))]
        assert trie.tokens(trie.node(b"ab")) == [(3, pytest.approx(0.4))]
        assert trie.tokens(trie.node(b"b")) == [(2, pytest.approx(0.1))]

    def test_conditional_normalised_over_non_eos_mass(self, trie):
        assert trie.p(ord("a")) == pytest.approx(0.6 / 0.7)
        assert trie.p(ord("b")) == pytest.approx(0.1 / 0.7)
        a = trie.node(b"a")
        assert trie.p(EOT, a) == pytest.approx(0.2 / 0.6)
        assert trie.p(ord("b"), a) == pytest.approx(0.4 / 0.6)
        assert trie.p(ord("x")) == 0.0

    def test_deeper_mass(self, trie):
        assert trie.deeper_mass(trie.node(b"a")) == pytest.approx(0.4)
        assert trie.deeper_mass(0) == pytest.approx(0.7)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 500), st.lists(st.integers(0, 11), max_size=3))
def test_mass_conservation_and_normalisation(seed, y):
    f = random_fixture(seed)
    y = [t % len(f.vocab) for t in y]
    trie = build_trie(f.lm, f.vocab, y)
    assert trie.root_mass == pytest.approx(1.0 - f.lm.next(y).eos, abs=1e-12)
    for node in range(trie.shape.n_nodes):
        children = sum(trie.mass[c] for c in trie.shape.children[node].values())
        assert trie.mass[node] == pytest.approx(trie.eot[node] + children, abs=1e-12)
        eot = sum(p for _, p in trie.tokens(node))
        assert trie.eot[node] == pytest.approx(eot, abs=1e-12)
        cond = trie.conditionals(node)
        if trie.mass[node] > 0:
            assert sum(cond.values()) == pytest.approx(1.0, abs=1e-9)


def test_subtree_counts_match_entries():
    f = random_fixture(11)
    shape = f.vocab.trie
    for node, _ in shape.subtree(0):
        path = b""
        u = node
        while u > 0:
            parent = shape.parent[u]
            path = bytes([b for b, c in shape.children[parent].items() if c == u]) + path
            u = parent
        expected = sum(1 for e in f.vocab.entries if e.startswith(path))
        assert shape.subtree_counts[node] == expected
    np.testing.assert_array_equal(shape.end_counts.sum(), len(f.vocab))
