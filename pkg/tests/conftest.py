import itertools

import pytest

from tok2char.fixtures import fix1, random_fixture


def all_strings(alphabet: bytes, max_len: int):
    """Every byte string over ``alphabet`` up to ``max_len``, shortest first."""
    for n in range(max_len + 1):
        for combo in itertools.product(alphabet, repeat=n):
            yield bytes(combo)


@pytest.fixture(scope="session")
def fx1():
    return fix1(cap=4)


@pytest.fixture(scope="session")
def fx1_uncapped():
    return fix1()


@pytest.fixture(scope="session")
def random_fixtures():
    return [random_fixture(seed) for seed in range(20)]
