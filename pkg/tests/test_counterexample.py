import pytest
import numpy as np

from pympg.util import encode_joint_action, to_json
from pympg.learning import LearnerConfig, run_psga
from pympg.counterexample import *


@pytest.mark.parametrize(
    's,a2,r1,phi',
    [
        (0.5, 0.5, -2.1666667, 0.5),
        (1.0, 1.0, -3.0, 1.0),
        (0.0, 0.0, -2.0, 0.0),
    ]
)
def test_closed_form(s, a2, r1, phi):
    for a1 in [0.0, 0.3, 1.0]:
        res = closed_form(s, a1, a2)
        assert res[0] == pytest.approx(r1, abs=1e-7)
        assert res[1] == pytest.approx(phi) and res[2] == pytest.approx(phi)


@pytest.mark.parametrize('args', [(1.5, 0, 0), (0, -0.1, 0), (0, 0, np.nan)])
def test_closed_form_range(args):
    with pytest.raises(ValueError):
        closed_form(*args)


def test_best_response_reward_oracle():
    assert best_response_reward_oracle(0.0) == pytest.approx(-2.0)
    assert best_response_reward_oracle(1.0) == pytest.approx(-3.0)
    assert all(is_strictly_decreasing(n) for n in [2, 11, 101, 1001])


@pytest.mark.parametrize(
    'value,grid_size,index',
    [(0.0, 11, 0), (1.0, 11, 10), (0.24, 5, 1), (0.125, 5, 0), (0.375, 5, 1), (0.5, 2, 0)])
def test_snap_to_grid(value, grid_size, index):
    assert snap_to_grid(value, grid_size) == index


def test_DiscretizationConfig():
    config = DiscretizationConfig(11)
    assert config.discount == 0.9
    assert config.gap_oracle == pytest.approx(9.0)
    assert config.grid[5] == 0.5
    with pytest.raises(ValueError):
        DiscretizationConfig(1)
    with pytest.raises(ValueError):
        DiscretizationConfig(11, 1.0)


def test_discretize_grid2():
    game, potential = discretize(DiscretizationConfig(2))
    assert game.state_count == 2 and game.action_counts == (2, 2)
    assert game.validate()
    assert game.payoffs[0, 0, encode_joint_action((1, 0), (2, 2))] == pytest.approx(-2.0)
    next_states, probs = game.transition_row(0, encode_joint_action((1, 0), (2, 2)))
    assert list(next_states) == [1] and list(probs) == [1.0]
    assert potential.verification_residual < 1e-12


def test_known_policies():
    dual, nash = known_policies(DiscretizationConfig(3))
    assert [list(c) for c in dual.choices] == [[2, 2, 2], [0, 1, 2]]
    assert [list(c) for c in nash.choices] == [[0, 0, 0], [0, 1, 2]]


def test_reproduce_report(report101):
    assert report101.verdicts == EXPECTED_VERDICTS
    assert report101.matches_expected()
    assert report101.dual_matches_known
    assert report101.dual_ties == []
    assert report101.potential.verification_residual < 1e-12
    assert report101.conditions['C3_state_transitivity'].max_residual < 1e-12
    assert report101.conditions['CST_complete'].max_residual == pytest.approx(2.0, abs=1e-9)
    assert report101.dual_nash.per_agent_gap[0] == pytest.approx(9.0, abs=0.01)
    assert report101.dual_nash.witness == (0, 0)
    assert report101.known_nash.passed
    assert report101.alignment.misalignment == pytest.approx(18.0, abs=1e-6)
    np.testing.assert_allclose(report101.dual_values.values, np.linspace(0, 1, 101) + 9.0)

    averages = report101.average_payoffs
    assert averages['dual_optimum']['cycle'] == pytest.approx([-3.0, 1.0])
    assert averages['known_nash']['cycle'] == pytest.approx([-2.0, 0.0])
    assert averages['known_nash']['normalized'][0] == pytest.approx(-2.0)
    assert averages['dual_optimum']['normalized'][0] == pytest.approx(-2.9)

    res = to_json(report101)
    assert res['matches_expected'] is True
    assert res['verdicts']['C2'] is False
    assert res['gap_oracle'] == pytest.approx(9.0)


@pytest.mark.parametrize('grid_size', [2, 11, 51])
def test_reproduce_report_grid(grid_size):
    report = reproduce_report(DiscretizationConfig(grid_size))
    assert report.matches_expected()
    assert report.dual_nash.per_agent_gap[0] == pytest.approx(9.0, abs=1e-6)


def test_reproduce_report_discount():
    report = reproduce_report(DiscretizationConfig(11, 0.5))
    assert report.dual_nash.per_agent_gap[0] == pytest.approx(1.0, abs=0.01)
    assert report.matches_expected()


@pytest.mark.parametrize('seed', [0, 1, 2])
def test_learning_does_not_converge(counterexample11, seed):
    game, _ = counterexample11
    trace = run_psga(game, LearnerConfig(0.01, 8, 2000, seed=seed, gap_check_every=250))
    assert min(trace.nash_gaps) >= 0.1


@pytest.mark.slow
@pytest.mark.parametrize('seed', [0, 1, 2])
def test_learning_does_not_converge_long_run(counterexample11, seed):
    game, _ = counterexample11
    trace = run_psga(game, LearnerConfig(0.01, 8, 20000, seed=seed, gap_check_every=500))
    assert len(trace.nash_gaps) == 40
    assert min(trace.nash_gaps) >= 0.1
