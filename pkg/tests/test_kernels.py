import os
import subprocess
import sys

import numpy as np
import pytest

from tok2char import _kernels
from tok2char.fixtures import random_fixture
from tok2char.lm import _oracle_inputs

needs_numba = pytest.mark.skipif(not _kernels.NUMBA_AVAILABLE, reason="numba not installed")


@needs_numba
class TestParity:
    @pytest.mark.parametrize("seed", range(5))
    def test_accumulate(self, seed):
        f = random_fixture(seed, max_size=12)
        trie = f.vocab.trie
        w = np.random.default_rng(seed).random(len(f.vocab))
        a = _kernels.accumulate_masses_numpy(trie.token_node, w, trie.parent, trie.levels,
                                             trie.n_nodes)
        b = _kernels.accumulate_masses_numba(trie.token_node, w, trie.parent, trie.order,
                                             trie.n_nodes)
        for x, y in zip(a, b):
            np.testing.assert_allclose(x, y, rtol=1e-12, atol=1e-15)

    @pytest.mark.parametrize("seed", range(5))
    def test_brute_force(self, seed):
        f = random_fixture(seed, cap=4, max_size=8)
        alphabet, _, probs, trans, syms, lens = _oracle_inputs(f.lm, f.vocab)
        args = (probs, trans, syms, np.asarray(lens, dtype=np.int64), f.lm.cap,
                len(alphabet), 3)
        np.testing.assert_allclose(_kernels.brute_force_numpy(*args),
                                   _kernels.brute_force_numba(*args), rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("flag,backend", [("1", "numpy"), ("0", "numba" if _kernels.NUMBA_AVAILABLE else "numpy")])
def test_env_flag_selects_backend(flag, backend):
    env = dict(os.environ, TOK2CHAR_DISABLE_NUMBA=flag)
    code = ("from tok2char import _kernels, charlm;"
            "from tok2char.fixtures import fix1;"
            "f = fix1(cap=4);"
            "print(_kernels.BACKEND, round(charlm.prefix_prob(f.lm, f.vocab, 'ab', 'exact'), 12))")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True, timeout=120)
    assert out.stdout.split() == [backend, "0.42"]
