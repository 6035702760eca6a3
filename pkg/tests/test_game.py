import pytest
import numpy as np

from pympg.util import ShapeError, ConvergenceError, encode_joint_action
from pympg.game import *
from pympg.game import solve_linear_values
from pympg.counterexample import DiscretizationConfig, known_policies


@pytest.fixture(scope='module')
def policies():
    dual, nash = known_policies(DiscretizationConfig(11))
    return dual.to_joint_policy((11, 11)), nash.to_joint_policy((11, 11))


def test_TabularStochasticGame():
    game = TabularStochasticGame(
        payoffs=[[[1.0]]], transitions=[[[1.0]]], discount=0.5, action_counts=[1])
    assert game.agent_count == 1 and game.state_count == 1 and game.joint_action_count == 1
    assert game.validate()
    assert 'agents=1' in repr(game)
    np.testing.assert_allclose(evaluate_policy(game, JointPolicy.uniform(game), 0).values, [2.0])


def test_transition_row(counterexample11):
    game, _ = counterexample11
    next_states, probs = game.transition_row(0, encode_joint_action((10, 3), (11, 11)))
    assert list(next_states) == [10]
    assert list(probs) == [1.0]
    assert game.dense_transitions().shape == (11, 121, 11)


def test_JointPolicy(random_game):
    game = random_game(1)
    policy = JointPolicy.uniform(game)
    policy.check(game)
    assert policy.is_valid() and not policy.is_deterministic
    probs = policy.joint_action_probabilities()
    assert probs.shape == (2, 6)
    np.testing.assert_allclose(probs.sum(axis=1), 1)
    np.testing.assert_allclose(policy.joint_action_probabilities(skip=0), 1 / 3)

    table = np.array([[1.0, 0.0], [0.0, 1.0]])
    deviation = policy.replace(0, table)
    assert np.array_equal(deviation.tables[0], table)
    assert np.array_equal(policy.tables[0], np.full((2, 2), 0.5))
    probs = deviation.joint_action_probabilities()
    assert probs[1, encode_joint_action((1, 2), (2, 3))] == pytest.approx(1 / 3)
    assert probs[1, encode_joint_action((0, 2), (2, 3))] == 0

    bad = JointPolicy([[[0.5, 0.6], [0.5, 0.5]], [[1 / 3] * 3] * 2])
    assert bad.violations()[0].startswith('tables[0][0] sums to 1.1')
    assert not bad.is_valid()
    with pytest.raises(ShapeError):
        JointPolicy([[[1.0]]]).check(game)
    with pytest.raises(ShapeError):
        JointPolicy([[[0.5, 0.5]], [[1.0, 0, 0]]]).check(game)


def test_evaluate_policy(counterexample11, policies):
    game, _ = counterexample11
    dual, nash = policies
    assert evaluate_policy(game, nash, 0)[0] == pytest.approx(-20.0, abs=1e-8)
    assert evaluate_policy(game, nash, 1)[0] == pytest.approx(0.0, abs=1e-8)
    assert evaluate_policy(game, dual, 0)[0] == pytest.approx(-29.0, abs=1e-8)
    assert evaluate_policy(game, dual, 0).source_tag == '0'
    with pytest.raises(ValueError):
        evaluate_policy(game, dual, 0, tolerance=0)
    with pytest.raises(ShapeError):
        evaluate_policy(game, dual, 2)


def test_evaluate_policy_truncated_sum(counterexample11, policies):
    game, _ = counterexample11
    dual, _ = policies
    trajectory = sample_trajectory(game, dual, 0, 400, rng_seed=0)
    oracle = (trajectory.payoffs[0] * game.discount ** np.arange(400)).sum()
    assert evaluate_policy(game, dual, 0)[0] == pytest.approx(oracle, abs=1e-8)


def test_potential_value(counterexample11, policies):
    game, potential = counterexample11
    dual, nash = policies
    res = potential_value(game, potential, dual)
    assert res.source_tag == 'potential'
    assert res[0] == pytest.approx(9.0, abs=1e-8)
    assert potential_value(game, potential.table, nash)[0] == pytest.approx(0.0, abs=1e-8)
    with pytest.raises(ShapeError):
        potential_value(game, np.zeros((2, 2)), nash)


def test_finite_horizon_value(counterexample11, policies):
    game, potential = counterexample11
    dual, _ = policies
    assert finite_horizon_value(game, 0, dual, 2)[0] == pytest.approx(-4.7)
    assert finite_horizon_value(game, 0, dual, 0)[0] == 0
    assert finite_horizon_value(game, potential, dual, 1)[0] == pytest.approx(0.0)
    with pytest.raises(ValueError):
        finite_horizon_value(game, 0, dual, -1)


@pytest.mark.parametrize('seed', range(5))
def test_finite_horizon_tail_bound(random_game, seed):
    game = random_game(seed)
    policy = JointPolicy.uniform(game)
    bound_scale = np.abs(game.payoffs[0]).max() / (1 - game.discount)
    for horizon in [0, 1, 5, 20]:
        gap = truncation_gap(game, 0, policy, horizon)
        assert gap <= game.discount ** horizon * bound_scale + 1e-9


@pytest.mark.parametrize('seed', range(3))
def test_horizon_cauchy(random_game, seed):
    game = random_game(seed)
    policy = JointPolicy.uniform(game)
    h = horizon_for_epsilon(0.01, game.discount, np.abs(game.payoffs[0]).max())
    a = finite_horizon_value(game, 0, policy, h).values
    b = finite_horizon_value(game, 0, policy, h + 50).values
    assert np.abs(a - b).max() < 0.01


@pytest.mark.parametrize(
    'epsilon,gamma,h_max,horizon',
    [
        (0.01, 0.9, 3, 76),
        (0.01, 0.9, 0, 0),
        (10, 0.5, 1, 1),
        # ratio 0.25 with |ln 0.25 / ln 0.5| = 2 exactly rounds up
        (0.5, 0.5, 1, 3),
    ]
)
def test_horizon_for_epsilon(epsilon, gamma, h_max, horizon):
    assert horizon_for_epsilon(epsilon, gamma, h_max) == horizon


@pytest.mark.parametrize('args', [(0, 0.9, 1), (0.1, 1.0, 1), (0.1, 0.9, -1)])
def test_horizon_for_epsilon_errors(args):
    with pytest.raises(ValueError):
        horizon_for_epsilon(*args)


def test_k_step_transition(counterexample11, policies):
    game, _ = counterexample11
    dual, _ = policies
    assert np.array_equal(k_step_transition(game, dual, 0), np.eye(11))
    step = k_step_transition(game, dual, 1)
    assert step[0, 10] == 1 and step[0].sum() == 1
    with pytest.raises(ValueError):
        k_step_transition(game, dual, -1)


def test_k_step_transition_sum(random_game):
    game = random_game(3)
    policy = JointPolicy.uniform(game)
    np.testing.assert_allclose(
        k_step_transition(game, policy, 3),
        k_step_transition(game, policy, 1) @ k_step_transition(game, policy, 2))
    np.testing.assert_allclose(k_step_transition(game, policy, 4).sum(axis=1), 1)


def test_sample_trajectory(counterexample11, policies):
    game, _ = counterexample11
    dual, _ = policies
    trajectory = sample_trajectory(game, dual, 0, 3, rng_seed=5)
    assert trajectory.states == [0, 10, 10, 10]
    np.testing.assert_allclose(trajectory.payoffs[0], [-2, -3, -3])
    assert list(trajectory.agent_actions(0, game.action_counts)) == [10, 10, 10]
    assert trajectory.seed_record == 5
    assert trajectory.is_consistent(game)
    assert len(trajectory) == 3

    broken = Trajectory([0, 3], trajectory.joint_actions[:1], trajectory.payoffs[:, :1])
    assert not broken.is_consistent(game)
    with pytest.raises(ShapeError):
        Trajectory([0], [1], [[1.0]])
    with pytest.raises(ShapeError):
        sample_trajectory(game, dual, 11, 3)


def test_sample_trajectory_reproducible(random_game):
    game = random_game(2)
    policy = JointPolicy.uniform(game)
    a = sample_trajectory(game, policy, 0, 50, rng_seed=3)
    b = sample_trajectory(game, policy, 0, 50, rng_seed=3)
    assert a.states == b.states and a.joint_actions == b.joint_actions
    assert a.is_consistent(game)
    rng = np.random.default_rng(3)
    assert sample_trajectory(game, policy, 1, 5, rng_seed=rng).seed_record is None


def test_marginalize_opponents(counterexample11, policies):
    game, _ = counterexample11
    _, nash = policies
    reward, kernel = marginalize_opponents(game, nash, 0, game.payoffs[0])
    s = np.linspace(0, 1, 11)
    np.testing.assert_allclose(reward, np.repeat((s - 4 / (2 - s))[:, None], 11, axis=1))
    assert kernel.shape == (121, 11)
    np.testing.assert_allclose(np.asarray(kernel.sum(axis=1)).ravel(), 1)


def test_Mdp():
    mdp = Mdp(reward=[[1.0, 0.0]], transitions=[[1.0], [1.0]], discount=0.5)
    assert mdp.state_count == 1 and mdp.decision_space_size == 2
    assert not mdp.violations()
    np.testing.assert_allclose(mdp.lookahead(np.array([2.0])), [[2.0, 1.0]])
    assert Mdp(reward=[[1.0]], transitions=[[0.5]], discount=1.0).violations()
    with pytest.raises(ShapeError):
        Mdp(reward=[[1.0, 0.0]], transitions=[[1.0]], discount=0.5)


def test_solve_linear_values_iterative(mocker, random_game):
    game = random_game(4)
    policy = JointPolicy.uniform(game)
    direct = evaluate_policy(game, policy, 1).values
    mocker.patch('pympg.game.DIRECT_SOLVE_MAX_STATES', 0)
    np.testing.assert_allclose(evaluate_policy(game, policy, 1).values, direct, atol=1e-9)
    with pytest.raises(ConvergenceError):
        solve_linear_values(
            np.ones(2), np.eye(2) * 1.0, 0.9, tolerance=1e-10, max_iterations=2)


def test_average_payoff(counterexample11, policies):
    game, potential = counterexample11
    dual, nash = policies
    values = evaluate_policy(game, nash, 0)
    assert average_payoff(values, game.discount)[0] == pytest.approx(-2.0)
    assert cycle_average_payoff(game, nash, 0, 0) == pytest.approx(-2.0)
    assert cycle_average_payoff(game, dual, 0, 0) == pytest.approx(-3.0)
    assert cycle_average_payoff(game, dual, potential, 0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        cycle_average_payoff(game, JointPolicy.uniform(game), 0, 0)


def _random_policy(rng, game):
    return JointPolicy([
        rng.dirichlet(np.ones(n), size=game.state_count) for n in game.action_counts])


@pytest.mark.slow
@pytest.mark.parametrize('epsilon', [1e-2, 1e-4])
def test_truncated_value_within_epsilon(random_game, epsilon):
    rng = np.random.default_rng(17)
    for seed in range(10):
        game = random_game(
            seed, action_counts=(2, 3), state_count=3, discount=rng.uniform(0.5, 0.95))
        policy = _random_policy(rng, game)
        horizon = horizon_for_epsilon(epsilon, game.discount, np.abs(game.payoffs).max())
        for agent in range(game.agent_count):
            assert truncation_gap(game, agent, policy, horizon) < epsilon


@pytest.mark.slow
def test_k_step_transition_laws(random_game):
    rng = np.random.default_rng(23)
    for seed in range(20):
        game = random_game(seed, state_count=int(rng.integers(2, 5)))
        policy = _random_policy(rng, game)
        steps = [k_step_transition(game, policy, k) for k in range(6)]
        for step in steps:
            np.testing.assert_allclose(step.sum(axis=1), 1, atol=1e-10)
        for k1 in range(6):
            for k2 in range(6 - k1):
                np.testing.assert_allclose(steps[k1] @ steps[k2], steps[k1 + k2], atol=1e-10)
