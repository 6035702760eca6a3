"""
Dual MDPs, best responses and ε-Nash verification.

The dual MDP of a one-shot potential game lets a single decision maker choose joint actions to
maximize the discounted potential. Whether its optimum is a Nash equilibrium of the game is
decided by :func:`verify_nash`, which solves each agent's best-response MDP against the
other agents' policies.
"""
import typing
import logging

import attr
import numpy as np

from pympg.util import (
    SOLVER_TOLERANCE, MAX_ITERATIONS, ShapeError, ConvergenceError, joint_action_count,
    joint_action_table, first_argmax,
)
from pympg.game import (
    TabularStochasticGame, JointPolicy, Mdp, ValueFunction, evaluate_policy, reward_table,
    marginalize_opponents,
)

__all__ = [
    'DeterministicJointPolicy', 'NashReport',
    'build_dual_mdp', 'value_iteration', 'greedy_ties', 'extract_joint_policy',
    'best_response_mdp', 'verify_nash', 'nash_gap']

log = logging.getLogger(__name__)


@attr.s(eq=False)
class DeterministicJointPolicy:
    """
    Per agent, the action index chosen at each state.
    """
    choices = attr.ib(converter=lambda cs: [np.asarray(c, dtype=int) for c in cs])

    @classmethod
    def from_flat(cls, decisions, action_counts) -> 'DeterministicJointPolicy':
        """
        Un-flatten joint decisions `decisions[state]` via the mixed-radix law.
        """
        decisions = np.asarray(decisions, dtype=int)
        if decisions.size and not (
                0 <= decisions.min() and decisions.max() < joint_action_count(action_counts)):
            raise ShapeError('joint decisions out of range')
        return cls(list(joint_action_table(action_counts)[decisions].T))

    def flat_actions(self, action_counts) -> np.ndarray:
        radix = np.cumprod((1,) + tuple(action_counts)[:-1])
        return sum(r * c for r, c in zip(radix, self.choices))

    def to_joint_policy(self, action_counts) -> JointPolicy:
        tables = []
        for c, n in zip(self.choices, action_counts):
            if c.size and not (0 <= c.min() and c.max() < n):
                raise ShapeError('action choice out of range [0, {})'.format(n))
            tables.append(np.eye(n)[c])
        return JointPolicy(tables)

    def __eq__(self, other):
        return isinstance(other, DeterministicJointPolicy) \
            and len(self.choices) == len(other.choices) \
            and all(np.array_equal(a, b) for a, b in zip(self.choices, other.choices))

    def as_dict(self) -> dict:
        return {'choices': self.choices}


@attr.s(eq=False)
class NashReport:
    """
    :ivar per_agent_gap: `max_s (V_i^BR(s) - V_i^π(s))` per agent.
    :ivar witness: `(agent, state)` attaining the overall maximal gap.
    :ivar gaps: The per-state gap table of shape `(agent_count, state_count)`.
    """
    epsilon = attr.ib(converter=float)
    per_agent_gap = attr.ib(converter=lambda v: [float(x) for x in v])
    witness = attr.ib(converter=tuple)
    passed = attr.ib(converter=bool)
    gaps = attr.ib(converter=np.asarray)
    values = attr.ib(converter=np.asarray)
    best_response_values = attr.ib(converter=np.asarray)
    tolerance = attr.ib(default=SOLVER_TOLERANCE, converter=float)

    @property
    def max_gap(self) -> float:
        return max(self.per_agent_gap)

    def as_dict(self) -> dict:
        res = attr.asdict(self, recurse=False)
        res['max_gap'] = self.max_gap
        return res


def build_dual_mdp(game: TabularStochasticGame, potential) -> Mdp:
    """
    The MDP `(S, A, Φ, p)` over flat joint actions, sharing the game's kernel.
    """
    table, _ = reward_table(game, potential)
    return Mdp(reward=table, transitions=game.transitions, discount=game.discount)


def value_iteration(
        mdp: Mdp,
        tolerance: float = SOLVER_TOLERANCE,
        max_iterations: int = MAX_ITERATIONS,
        log: logging.Logger = log) -> typing.Tuple[ValueFunction, np.ndarray]:
    """
    Solve the Bellman optimality equation to value accuracy `tolerance`.

    :return: Pair `(values, decisions)` where `decisions[s]` is the greedy decision at `s`, ties \
    going to the lowest index.
    :raises ConvergenceError: if the iterates do not settle within `max_iterations`.
    """
    if tolerance <= 0:
        raise ValueError('tolerance must be positive')
    threshold = tolerance * (1 - mdp.discount) / (2 * mdp.discount)
    values = np.zeros(mdp.state_count)
    for iteration in range(1, max_iterations + 1):
        new = mdp.lookahead(values).max(axis=1)
        diff = np.abs(new - values).max()
        values = new
        if diff < threshold:
            log.debug('value iteration converged after {} iterations'.format(iteration))
            break
    else:
        raise ConvergenceError(
            'value iteration did not converge in {} iterations'.format(max_iterations))
    return ValueFunction(values, 'optimal'), mdp.lookahead(values).argmax(axis=1)


def greedy_ties(mdp: Mdp, values, tolerance: float = SOLVER_TOLERANCE) -> typing.List[int]:
    """
    :return: The states at which more than one decision attains the lookahead maximum within \
    `tolerance`.
    """
    q = mdp.lookahead(np.asarray(getattr(values, 'values', values), dtype=float))
    counts = (q >= q.max(axis=1, keepdims=True) - tolerance).sum(axis=1)
    return [int(s) for s in np.flatnonzero(counts > 1)]


def extract_joint_policy(decisions, game: TabularStochasticGame) -> DeterministicJointPolicy:
    return DeterministicJointPolicy.from_flat(decisions, game.action_counts)


def best_response_mdp(game: TabularStochasticGame, policy: JointPolicy, agent: int) -> Mdp:
    """
    Agent `agent`'s MDP over its own actions when the opponents play `policy`.
    """
    reward, kernel = marginalize_opponents(game, policy, agent, game.payoffs[agent])
    return Mdp(reward=reward, transitions=kernel, discount=game.discount)


def verify_nash(
        game: TabularStochasticGame,
        policy: typing.Union[JointPolicy, DeterministicJointPolicy],
        epsilon: float,
        tolerance: float = SOLVER_TOLERANCE,
        log: logging.Logger = log) -> NashReport:
    """
    Check that no agent can improve its value at any state by more than `epsilon` by deviating
    unilaterally.
    """
    if epsilon < 0:
        raise ValueError('epsilon must be non-negative')
    if isinstance(policy, DeterministicJointPolicy):
        policy = policy.to_joint_policy(game.action_counts)
    policy.check(game)

    values, best = [], []
    for agent in range(game.agent_count):
        best.append(value_iteration(
            best_response_mdp(game, policy, agent), tolerance=tolerance, log=log)[0].values)
        values.append(evaluate_policy(game, policy, agent, tolerance).values)
    values, best = np.array(values), np.array(best)
    gaps = best - values
    per_agent = gaps.max(axis=1)
    # Gaps within solver accuracy of the maximum count as ties.
    witness = first_argmax(gaps, tolerance=2 * tolerance / (1 - game.discount))
    passed = per_agent.max() <= epsilon + tolerance
    log.debug('Nash gap {} at agent {}, state {}'.format(per_agent.max(), *witness))
    return NashReport(
        epsilon=epsilon,
        per_agent_gap=per_agent,
        witness=witness,
        passed=passed,
        gaps=gaps,
        values=values,
        best_response_values=best,
        tolerance=tolerance)


def nash_gap(
        game: TabularStochasticGame,
        policy: typing.Union[JointPolicy, DeterministicJointPolicy],
        tolerance: float = SOLVER_TOLERANCE) -> float:
    """
    `max_i max_s (V_i^BR(s) - V_i^π(s))`.
    """
    return verify_nash(game, policy, 0.0, tolerance=tolerance).max_gap
