import math
import itertools

import pytest
import numpy as np
from csvw.dsv import reader

from pympg.util import ShapeError, joint_action_table
from pympg.game import TabularStochasticGame, JointPolicy, Trajectory, sample_trajectory
from pympg.learning import *
from pympg.learning import CSV_COLUMNS


@pytest.fixture
def bandit():
    return TabularStochasticGame(
        payoffs=[[[1.0, 0.0]]], transitions=[[[1.0], [1.0]]], discount=0.5, action_counts=[2])


def test_LearnerConfig(bandit):
    config = LearnerConfig(learning_rate=0.1, batch_length=4, iterations=10)
    assert batch_steps(config) == 5
    np.testing.assert_allclose(config.initial_states(bandit), [1.0])
    with pytest.raises(ValueError):
        LearnerConfig(learning_rate=-1, batch_length=4, iterations=10)
    with pytest.raises(ValueError):
        LearnerConfig(learning_rate=0.1, batch_length=0, iterations=10)
    with pytest.raises(ShapeError):
        LearnerConfig(0.1, 4, 10, initial_distribution=[0.5, 0.5]).initial_states(bandit)
    with pytest.raises(ValueError):
        LearnerConfig(0.1, 4, 10, initial_distribution=[0.5]).initial_states(bandit)


@pytest.mark.parametrize(
    'actions,payoffs,expected',
    [
        ([0], [2.0], 4.0),
        ([0, 0], [1.0, 1.0], 8.0),
        ([0, 1], [0.0, 0.0], 0.0),
    ]
)
def test_psga_gradient_estimate(actions, payoffs, expected):
    trajectory = Trajectory(
        states=[0] * (len(actions) + 1), joint_actions=actions, payoffs=[payoffs])
    policy = JointPolicy([[[0.5, 0.5]]])
    gradient = psga_gradient_estimate(trajectory, policy, 0)
    assert gradient[0, 0] == expected
    assert np.count_nonzero(gradient) == (1 if expected else 0)


def test_psga_gradient_estimate_zero_probability():
    trajectory = Trajectory(states=[0, 0], joint_actions=[1], payoffs=[[1.0]])
    with pytest.raises(ValueError):
        psga_gradient_estimate(trajectory, JointPolicy([[[1.0, 0.0]]]), 0)


@pytest.mark.parametrize(
    'vector,expected',
    [
        ([0.3, 0.7], [0.3, 0.7]),
        ([0.2, 0.2], [0.5, 0.5]),
        ([0.5, 0.5, 1.5], [0.0, 0.0, 1.0]),
        ([-1.0, 3.0], [0.0, 1.0]),
    ]
)
def test_project_to_simplex(vector, expected):
    np.testing.assert_allclose(project_to_simplex(vector), expected, atol=1e-12)


def test_project_to_simplex_unchanged():
    vector = np.array([0.1, 0.2, 0.7])
    assert np.array_equal(project_to_simplex(vector), vector)
    with pytest.raises(ValueError):
        project_to_simplex([np.nan, 1.0])


def test_project_rows_brute_force():
    rng = np.random.default_rng(0)
    grid = np.array([
        (a, b, 1 - a - b)
        for a, b in itertools.product(np.linspace(0, 1, 201), repeat=2) if a + b <= 1 + 1e-12])
    grid = np.maximum(grid, 0)
    for vector in rng.normal(size=(100, 3)):
        projected = project_to_simplex(vector)
        assert projected.min() >= 0 and projected.sum() == pytest.approx(1)
        best = np.min(((grid - vector) ** 2).sum(axis=1))
        assert ((projected - vector) ** 2).sum() <= best + 1e-12
    rows = rng.normal(size=(5, 4))
    np.testing.assert_allclose(
        project_rows(rows), np.array([project_to_simplex(r) for r in rows]))


def test_run_psga_null_step(random_game):
    game = random_game(0)
    trace = run_psga(game, LearnerConfig(0, 3, 20, gap_check_every=5))
    assert trace.logged_iterations == [5, 10, 15, 20]
    for snapshot in trace.snapshots:
        for table, uniform in zip(snapshot.tables, JointPolicy.uniform(game).tables):
            np.testing.assert_allclose(table, uniform)
    assert trace.batch_returns.shape == (20, 2)
    assert len(trace) == 20


def test_run_psga_reproducible(random_game):
    game = random_game(1)
    config = LearnerConfig(0.01, 4, 30, seed=3, gap_check_every=10)
    a, b = run_psga(game, config), run_psga(game, config)
    assert np.array_equal(a.batch_returns, b.batch_returns)
    assert a.nash_gaps == b.nash_gaps
    assert a.final_policy.is_valid()


def test_run_psga_bandit(bandit):
    trace = run_psga(bandit, LearnerConfig(0.001, 8, 2000, seed=7, gap_check_every=500))
    assert trace.final_policy.tables[0][0, 0] > 0.99
    assert trace.nash_gaps[-1] < 0.02


def test_expected_update_recursion():
    # Mean field of the bandit run: the expected gradient difference of the two actions is the
    # number of batch steps, whatever the policy.
    steps, p, iterations = 9, 0.5, 0
    visits = np.arange(steps + 1)
    binomial = np.array([math.comb(steps, k) for k in visits], dtype=float)
    while p < 0.99:
        weights = binomial * p ** visits * (1 - p) ** (steps - visits)
        g0 = (weights * visits * visits / p).sum()
        g1 = (weights * visits * (steps - visits) / (1 - p)).sum()
        assert g0 - g1 == pytest.approx(steps)
        p = project_to_simplex([p + 0.001 * g0, 1 - p + 0.001 * g1])[0]
        iterations += 1
    assert iterations < 200


def test_LearningTrace_csv(tmp_path, random_game):
    game = random_game(2)
    trace = run_psga(game, LearnerConfig(0.01, 2, 6, gap_check_every=3))
    path = trace.write_csv(tmp_path / 'trace.csv')
    rows = list(reader(path, dicts=True))
    assert list(rows[0].keys()) == CSV_COLUMNS
    assert len(rows) == 6 * game.agent_count
    assert len([r for r in rows if r['nash_gap']]) == 6 // 3
    assert [r['iteration'] for r in rows if r['nash_gap']] == ['3', '6']
    assert all(r['agent'] == '0' for r in rows if r['nash_gap'])


def _enumerate_batches(game, policy, start, steps):
    """
    Yield all batch trajectories from `start` with their probabilities.
    """
    profiles = joint_action_table(game.action_counts)
    joint = np.prod(
        [table[:, profiles[:, j]] for j, table in enumerate(policy.tables)], axis=0)
    kernel = game.dense_transitions()
    moves = list(itertools.product(range(game.joint_action_count), range(game.state_count)))
    for path in itertools.product(moves, repeat=steps):
        states, prob = [start], 1.0
        for a, t in path:
            prob *= joint[states[-1], a] * kernel[states[-1], a, t]
            states.append(t)
        if prob > 0:
            actions = [a for a, _ in path]
            yield prob, Trajectory(
                states=states,
                joint_actions=actions,
                payoffs=game.payoffs[:, states[:-1], actions])


@pytest.mark.slow
def test_psga_gradient_estimate_unbiased(random_game):
    game = random_game(4, action_counts=(2, 2), state_count=2)
    policy = JointPolicy([[[0.3, 0.7], [0.6, 0.4]], [[0.5, 0.5], [0.2, 0.8]]])
    steps = batch_steps(LearnerConfig(0.01, 3, 1))

    def expected_return(p):
        return sum(
            prob * trajectory.payoffs[0].sum()
            for prob, trajectory in _enumerate_batches(game, p, 0, steps))

    exact = sum(
        prob * psga_gradient_estimate(trajectory, policy, 0)
        for prob, trajectory in _enumerate_batches(game, policy, 0, steps))

    # The expected return is a polynomial in the table entries; the estimator's mean is its
    # gradient.
    h = 1e-4
    derivative = np.zeros_like(policy.tables[0])
    for index in np.ndindex(*derivative.shape):
        up, down = policy.tables[0].copy(), policy.tables[0].copy()
        up[index] += h
        down[index] -= h
        derivative[index] = (
            expected_return(policy.replace(0, up)) - expected_return(policy.replace(0, down))
        ) / (2 * h)
    np.testing.assert_allclose(exact, derivative, atol=1e-6)

    rng = np.random.default_rng(2024)
    estimates = np.array([
        psga_gradient_estimate(sample_trajectory(game, policy, 0, steps, rng), policy, 0)
        for _ in range(100000)])
    error = np.abs(estimates.mean(axis=0) - exact)
    standard_error = estimates.std(axis=0, ddof=1) / math.sqrt(len(estimates))
    assert np.all(error <= 3 * standard_error)
