"""
A one-shot potential game satisfying state transitivity whose dual MDP optimum is not a Nash
equilibrium.

The continuous game has state space `S = [0, 1]`, actions `a1, a2 ∈ [0, 1]`, deterministic
transitions `s' = a1` and payoffs

    r1(s, a1, a2) = s - (s - a2)^2 - 4 / (2 - a2)
    r2(s, a1, a2) = s - (s - a2)^2 = Φ(s, a1, a2)

It is discretized on a shared uniform grid `{0, 1/(N-1), ..., 1}` for states and both action
spaces, so that `s' = a1` and `a2 = s` are exact. Agent 1 of the continuous game is agent
index 0 of the discretized game.
"""
import typing
import logging

import attr
import numpy as np
from scipy import sparse

from pympg.util import CHECKER_TOLERANCE, SOLVER_TOLERANCE, joint_action_table
from pympg.game import (
    TabularStochasticGame, JointPolicy, ValueFunction, average_payoff, cycle_average_payoff,
)
from pympg.potential import (
    OneShotPotential, AlignmentReport,
    find_one_shot_potential, verify_potential, calibrate_state_offsets,
    check_agent_independent_transitions, check_dummy_terms, check_state_transitivity,
    check_complete_state_transitivity, check_value_potential_alignment,
)
from pympg.equilibrium import (
    DeterministicJointPolicy, NashReport,
    build_dual_mdp, value_iteration, greedy_ties, extract_joint_policy, verify_nash,
)

__all__ = [
    'DiscretizationConfig', 'CounterexampleReport', 'EXPECTED_VERDICTS',
    'closed_form', 'best_response_reward_oracle', 'is_strictly_decreasing', 'snap_to_grid',
    'discretize', 'known_policies', 'reproduce_report']

log = logging.getLogger(__name__)

EXPECTED_VERDICTS = {
    'OPSG': True,
    'C1': False,
    'C2': False,
    'C3': True,
    'CST': False,
    'dual_optimum_nash': False,
    'known_nash': True,
}


def _valid_grid_size(instance, attribute, value):
    if value < 2:
        raise ValueError('grid_size must be at least 2')


def _valid_discount(instance, attribute, value):
    if not 0 < value < 1:
        raise ValueError('discount must lie in (0, 1)')


@attr.s
class DiscretizationConfig:
    grid_size = attr.ib(converter=int, validator=_valid_grid_size)
    discount = attr.ib(default=0.9, converter=float, validator=_valid_discount)

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0, 1, self.grid_size)

    @property
    def gap_oracle(self) -> float:
        """
        The dual optimum's Nash gap `γ / (1 - γ)`.
        """
        return self.discount / (1 - self.discount)


def _check_range(*values):
    for v in values:
        v = np.asarray(v, dtype=float)
        if np.any(~np.isfinite(v)) or np.any(v < 0) or np.any(v > 1):
            raise ValueError('arguments must lie in [0, 1]')


def closed_form(s, a1, a2) -> typing.Tuple[typing.Any, typing.Any, typing.Any]:
    """
    :return: Triple `(r1, r2, Φ)` evaluated at `(s, a1, a2)`; accepts scalars or arrays.
    """
    _check_range(s, a1, a2)
    s, a2 = np.asarray(s, dtype=float), np.asarray(a2, dtype=float)
    phi = s - (s - a2) ** 2
    return phi - 4 / (2 - a2), phi, phi


def best_response_reward_oracle(s):
    """
    Agent 1's reward `s - 4 / (2 - s)` when agent 2 plays `a2 = s`.
    """
    _check_range(s)
    s = np.asarray(s, dtype=float)
    return s - 4 / (2 - s)


def is_strictly_decreasing(grid_size: int) -> bool:
    return bool(np.all(np.diff(best_response_reward_oracle(np.linspace(0, 1, grid_size))) < 0))


def snap_to_grid(value: float, grid_size: int) -> int:
    """
    Index of the grid point nearest to `value`; ties go to the lower index.
    """
    _check_range(value)
    return int(np.ceil(value * (grid_size - 1) - 0.5))


def discretize(
        config: DiscretizationConfig) -> typing.Tuple[TabularStochasticGame, OneShotPotential]:
    N, grid = config.grid_size, config.grid
    profiles = joint_action_table((N, N))
    s = grid[:, None]
    r1, r2, phi = closed_form(s, grid[profiles[:, 0]][None, :], grid[profiles[:, 1]][None, :])
    J = N * N
    # One unit entry per row: from any state, joint action a leads to the state of index a1.
    kernel = sparse.csr_matrix(
        (np.ones(N * J), np.tile(profiles[:, 0], N), np.arange(N * J + 1)), shape=(N * J, N))
    game = TabularStochasticGame(
        payoffs=np.stack([r1, r2]),
        transitions=kernel,
        discount=config.discount,
        action_counts=(N, N),
        state_labels=grid)
    return game, OneShotPotential(phi, verification_residual=verify_potential(game, phi))


def known_policies(
        config: DiscretizationConfig,
) -> typing.Tuple[DeterministicJointPolicy, DeterministicJointPolicy]:
    """
    :return: Pair `(dual_optimal, nash)`: `(a1 = 1, a2 = s)` and `(a1 = 0, a2 = s)`.
    """
    N = config.grid_size
    return (
        DeterministicJointPolicy([np.full(N, N - 1), np.arange(N)]),
        DeterministicJointPolicy([np.zeros(N, dtype=int), np.arange(N)]))


@attr.s(eq=False)
class CounterexampleReport:
    config = attr.ib()
    potential = attr.ib()
    conditions = attr.ib()
    dual_values = attr.ib(validator=attr.validators.instance_of(ValueFunction))
    dual_policy = attr.ib()
    dual_matches_known = attr.ib(converter=bool)
    dual_ties = attr.ib()
    dual_nash = attr.ib(validator=attr.validators.instance_of(NashReport))
    known_nash = attr.ib(validator=attr.validators.instance_of(NashReport))
    alignment = attr.ib(validator=attr.validators.instance_of(AlignmentReport))
    average_payoffs = attr.ib()

    @property
    def potential_found(self) -> bool:
        return self.potential.found

    @property
    def verdicts(self) -> typing.Dict[str, bool]:
        return {
            'OPSG': self.potential_found,
            'C1': self.conditions['C1_agent_independent'].passed,
            'C2': self.conditions['C2_dummy_terms'].passed,
            'C3': self.conditions['C3_state_transitivity'].passed,
            'CST': self.conditions['CST_complete'].passed,
            'dual_optimum_nash': self.dual_nash.passed,
            'known_nash': self.known_nash.passed,
        }

    def matches_expected(self) -> bool:
        return self.verdicts == EXPECTED_VERDICTS

    def as_dict(self) -> dict:
        return dict(
            grid_size=self.config.grid_size,
            discount=self.config.discount,
            verdicts=self.verdicts,
            expected_verdicts=EXPECTED_VERDICTS,
            matches_expected=self.matches_expected(),
            potential_residual=self.potential.verification_residual,
            conditions=self.conditions,
            dual_values=self.dual_values.values,
            dual_policy=self.dual_policy,
            dual_matches_known=self.dual_matches_known,
            dual_ties=self.dual_ties,
            dual_nash=self.dual_nash,
            known_nash=self.known_nash,
            gap_oracle=self.config.gap_oracle,
            alignment=self.alignment,
            average_payoffs=self.average_payoffs)


def _average_payoffs(game, report: NashReport, policy: JointPolicy, state=0):
    """
    Both readings of "average payoff" at `state`: the normalized discounted value `(1 - γ) V`
    and the exact per-step average over the cycle the deterministic chain ends up in.
    """
    return {
        'normalized': [
            float(average_payoff(ValueFunction(values, str(i)), game.discount)[state])
            for i, values in enumerate(report.values)],
        'cycle': [
            cycle_average_payoff(game, policy, i, state) for i in range(game.agent_count)],
    }


def reproduce_report(
        config: DiscretizationConfig,
        dual_epsilon: float = 0.5,
        nash_epsilon: float = 1e-6,
        tolerance: float = CHECKER_TOLERANCE,
        solver_tolerance: float = SOLVER_TOLERANCE,
        log: logging.Logger = log) -> CounterexampleReport:
    """
    Run the whole chain of checks on the discretized game:

    1. recover and calibrate the one-shot potential,
    2. decide the four qualification conditions,
    3. solve the dual MDP and compare its greedy policy with the known dual optimum,
    4. verify both known policies as Nash equilibria,
    5. measure the value/potential misalignment of agent 1 deviating from the dual optimum to
       `a1 = 0`.
    """
    game, _ = discretize(config)
    log.info('discretized game on a grid of {} points, discount {}'.format(
        config.grid_size, config.discount))

    found = find_one_shot_potential(game, tolerance, log=log)
    if not found.found:
        raise ValueError('no one-shot potential found: cycle sum {}'.format(found.cycle_sum))
    potential = calibrate_state_offsets(game, found)

    conditions = {
        r.condition_id: r for r in [
            check_agent_independent_transitions(game, tolerance),
            check_dummy_terms(game, potential, tolerance=tolerance),
            check_state_transitivity(game, potential, tolerance),
            check_complete_state_transitivity(game, potential, tolerance, log=log),
        ]}
    for r in conditions.values():
        log.info('{}: {} (residual {})'.format(
            r.condition_id, 'pass' if r.passed else 'fail', r.max_residual))

    dual = build_dual_mdp(game, potential)
    dual_values, decisions = value_iteration(dual, solver_tolerance, log=log)
    greedy = extract_joint_policy(decisions, game)
    dual_optimal, nash = known_policies(config)

    dual_nash = verify_nash(game, dual_optimal, dual_epsilon, solver_tolerance, log=log)
    known_nash = verify_nash(game, nash, nash_epsilon, solver_tolerance, log=log)
    log.info('dual optimum: Nash gap {} at agent, state {}'.format(
        dual_nash.max_gap, dual_nash.witness))

    dual_policy = dual_optimal.to_joint_policy(game.action_counts)
    nash_policy = nash.to_joint_policy(game.action_counts)
    alignment = check_value_potential_alignment(
        game, potential, dual_policy, 0, dual_policy.replace(0, nash_policy.tables[0]),
        start_state=0, tolerance=solver_tolerance)

    return CounterexampleReport(
        config=config,
        potential=potential,
        conditions=conditions,
        dual_values=dual_values,
        dual_policy=greedy,
        dual_matches_known=greedy == dual_optimal,
        dual_ties=greedy_ties(dual, dual_values, tolerance),
        dual_nash=dual_nash,
        known_nash=known_nash,
        alignment=alignment,
        average_payoffs={
            'dual_optimum': _average_payoffs(game, dual_nash, dual_policy),
            'known_nash': _average_payoffs(game, known_nash, nash_policy),
        })
