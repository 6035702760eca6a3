"""
Independent learning by projected stochastic gradient ascent (PSGA) with direct tabular policy
parameterization.

In each iteration all agents observe one shared batch trajectory. Each agent then estimates the
gradient of its value from its own payoffs and actions and takes a projected step

    π_i <- P_Δ(π_i + η ∇_i)

where the projection acts independently on each state's row.
"""
import typing
import logging
import pathlib

import attr
import numpy as np
from csvw.dsv import UnicodeWriter

from pympg.util import STRUCTURAL_TOLERANCE, ShapeError, draw_index
from pympg.game import TabularStochasticGame, JointPolicy, Trajectory, sample_trajectory
from pympg.equilibrium import nash_gap

__all__ = [
    'LearnerConfig', 'LearningTrace',
    'psga_gradient_estimate', 'project_to_simplex', 'project_rows', 'batch_steps', 'run_psga']

log = logging.getLogger(__name__)

CSV_COLUMNS = ['iteration', 'agent', 'batch_return', 'mean_action', 'nash_gap']


def _positive(instance, attribute, value):
    if value < 1:
        raise ValueError('{} must be a positive integer'.format(attribute.name))


def _non_negative(instance, attribute, value):
    if not value >= 0:
        raise ValueError('{} must be non-negative'.format(attribute.name))


def _as_distribution(value):
    return None if value is None else np.asarray(value, dtype=float)


@attr.s
class LearnerConfig:
    """
    :ivar learning_rate: Step size η.
    :ivar batch_length: Batch size `T`; a batch trajectory has `T + 1` steps.
    :ivar initial_distribution: Distribution of the initial state of each batch (default: \
    uniform over states).
    :ivar gap_check_every: Stride (in iterations) of Nash gap evaluation and policy snapshots.
    """
    learning_rate = attr.ib(converter=float, validator=_non_negative)
    batch_length = attr.ib(converter=int, validator=_positive)
    iterations = attr.ib(converter=int, validator=_positive)
    initial_distribution = attr.ib(default=None, converter=_as_distribution, eq=False)
    seed = attr.ib(default=0, converter=int)
    gap_check_every = attr.ib(default=100, converter=int, validator=_positive)

    def initial_states(self, game: TabularStochasticGame) -> np.ndarray:
        if self.initial_distribution is None:
            return np.full(game.state_count, 1 / game.state_count)
        if self.initial_distribution.shape != (game.state_count,):
            raise ShapeError('initial distribution must have one entry per state')
        if self.initial_distribution.min() < 0 \
                or abs(self.initial_distribution.sum() - 1) > STRUCTURAL_TOLERANCE:
            raise ValueError('initial distribution is not a probability vector')
        return self.initial_distribution


@attr.s(eq=False)
class LearningTrace:
    """
    :ivar logged_iterations: 1-based iteration numbers at which the Nash gap was evaluated.
    :ivar snapshots: The joint policy after each logged iteration.
    :ivar batch_returns: `R_i` per iteration and agent, shape `(iterations, agent_count)`.
    :ivar mean_actions: Mean realized action index per iteration and agent.
    """
    config = attr.ib()
    logged_iterations = attr.ib(default=attr.Factory(list))
    snapshots = attr.ib(default=attr.Factory(list))
    nash_gaps = attr.ib(default=attr.Factory(list))
    batch_returns = attr.ib(default=attr.Factory(list))
    mean_actions = attr.ib(default=attr.Factory(list))
    final_policy = attr.ib(default=None)

    def __len__(self):
        return len(self.batch_returns)

    def iterrows(self) -> typing.Generator[list, None, None]:
        """
        Rows of the CSV trace, one per iteration and agent. The Nash gap of a logged iteration is
        written on the row of agent 0 and left empty otherwise.
        """
        gaps = dict(zip(self.logged_iterations, self.nash_gaps))
        for t, (returns, actions) in enumerate(zip(self.batch_returns, self.mean_actions), start=1):
            for agent, (r, a) in enumerate(zip(returns, actions)):
                gap = gaps.get(t) if agent == 0 else None
                yield [t, agent, repr(float(r)), repr(float(a)), '' if gap is None else repr(gap)]

    def write_csv(self, path: typing.Union[str, pathlib.Path]) -> pathlib.Path:
        path = pathlib.Path(path)
        with UnicodeWriter(path) as writer:
            writer.writerow(CSV_COLUMNS)
            writer.writerows(self.iterrows())
        return path


def batch_steps(config: LearnerConfig) -> int:
    """
    Number of steps of a batch trajectory: the returns and log-gradients sum over `k = 0, ..., T`.
    """
    return config.batch_length + 1


def psga_gradient_estimate(trajectory: Trajectory, policy: JointPolicy, agent: int) -> np.ndarray:
    """
    `R_i * Σ_k ∇ log π_i(a_{i,k} | s_k)` for the direct parameterization, i.e. entry `(s, a)` is
    `R_i * visits(s, a) / π_i(a | s)` where `R_i` is agent i's undiscounted batch return.

    :raises ValueError: if the trajectory visits an own action of probability zero.
    """
    table = policy.tables[agent]
    action_counts = [t.shape[1] for t in policy.tables]
    states = np.asarray(trajectory.states[:-1], dtype=int)
    actions = trajectory.agent_actions(agent, action_counts)
    if len(states) and np.any(table[states, actions] <= 0):
        raise ValueError('trajectory visits an action of probability zero')

    visits = np.zeros_like(table)
    np.add.at(visits, (states, actions), 1)
    res = np.zeros_like(table)
    visited = visits > 0
    res[visited] = trajectory.payoffs[agent].sum() * visits[visited] / table[visited]
    return res


def project_rows(table: np.ndarray) -> np.ndarray:
    """
    Euclidean projection of every row of `table` onto the probability simplex.

    Rows already on the simplex are returned unchanged.
    """
    table = np.atleast_2d(np.asarray(table, dtype=float))
    n = table.shape[1]
    ordered = -np.sort(-table, axis=1)
    cumulative = np.cumsum(ordered, axis=1)
    positive = ordered - (cumulative - 1) / np.arange(1, n + 1) > 0
    rho = n - 1 - np.argmax(positive[:, ::-1], axis=1)
    theta = (cumulative[np.arange(len(table)), rho] - 1) / (rho + 1)
    res = np.maximum(table - theta[:, None], 0)
    on_simplex = (table.min(axis=1) >= 0) & (np.abs(table.sum(axis=1) - 1) <= STRUCTURAL_TOLERANCE)
    res[on_simplex] = table[on_simplex]
    return res


def project_to_simplex(vector) -> np.ndarray:
    """
    .. code-block:: python

        >>> project_to_simplex([0.5, 0.5, 1.5])
        array([0., 0., 1.])
    """
    vector = np.asarray(vector, dtype=float)
    if not np.all(np.isfinite(vector)):
        raise ValueError('entries must be finite')
    return project_rows(vector[None, :])[0]


def run_psga(
        game: TabularStochasticGame,
        config: LearnerConfig,
        log: logging.Logger = log) -> LearningTrace:
    """
    Run PSGA from uniform policies. The run is a pure function of `(game, config)`: a single
    random stream seeded with `config.seed` drives initial states and trajectories.
    """
    rng = np.random.default_rng(config.seed)
    initial = config.initial_states(game)
    policy = JointPolicy.uniform(game)
    trace = LearningTrace(config=config)

    for t in range(1, config.iterations + 1):
        trajectory = sample_trajectory(
            game, policy, draw_index(rng, initial), batch_steps(config), rng)
        gradients = [
            psga_gradient_estimate(trajectory, policy, i) for i in range(game.agent_count)]
        policy = JointPolicy([
            project_rows(table + config.learning_rate * gradient)
            for table, gradient in zip(policy.tables, gradients)])

        trace.batch_returns.append(trajectory.payoffs.sum(axis=1))
        trace.mean_actions.append([
            trajectory.agent_actions(i, game.action_counts).mean()
            for i in range(game.agent_count)])
        if t % config.gap_check_every == 0:
            gap = nash_gap(game, policy)
            trace.logged_iterations.append(t)
            trace.snapshots.append(policy)
            trace.nash_gaps.append(gap)
            log.debug('iteration {}: Nash gap {}'.format(t, gap))

    trace.batch_returns = np.array(trace.batch_returns)
    trace.mean_actions = np.array(trace.mean_actions)
    trace.final_policy = policy
    return trace
