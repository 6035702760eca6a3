import pathlib

import pytest
import numpy as np

from pympg.game import TabularStochasticGame
from pympg.counterexample import DiscretizationConfig, discretize, reproduce_report

DATA = pathlib.Path(__file__).parent / 'data'


@pytest.fixture(scope='module')
def data():
    return DATA


@pytest.fixture
def random_game():
    def _make(seed, action_counts=(2, 3), state_count=2, discount=0.8):
        rng = np.random.default_rng(seed)
        J = int(np.prod(action_counts))
        kernel = rng.uniform(0.1, 1, size=(state_count, J, state_count))
        return TabularStochasticGame(
            payoffs=rng.uniform(-1, 1, size=(len(action_counts), state_count, J)),
            transitions=kernel / kernel.sum(axis=2, keepdims=True),
            discount=discount,
            action_counts=action_counts)
    return _make


@pytest.fixture(scope='session')
def counterexample3():
    return discretize(DiscretizationConfig(3))


@pytest.fixture(scope='session')
def counterexample11():
    return discretize(DiscretizationConfig(11))


@pytest.fixture(scope='session')
def counterexample101():
    return discretize(DiscretizationConfig(101))


@pytest.fixture(scope='session')
def report101():
    return reproduce_report(DiscretizationConfig(101))
