import numpy as np
import pytest

from nested_bandits.envs import red_blue_bus_tree


def random_strategy(rng: np.random.Generator, n: int) -> np.ndarray:
    x = rng.random(n) + 0.05
    return x / x.sum()


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def bus_tree():
    return red_blue_bus_tree(2)
