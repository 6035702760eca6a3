"""
Tabular stochastic games and the evaluation primitives everything else builds on.

A game with `n` agents, `S` states and action counts `(n_0, ..., n_{n-1})` has
`J = n_0 * ... * n_{n-1}` joint actions, indexed according to :mod:`pympg.util`. Payoffs are a
dense array of shape `(n, S, J)`; the transition kernel is a sparse CSR matrix of shape
`(S * J, S)` whose row `s * J + a` holds `p(. | s, a)`.

.. code-block:: python

    >>> from pympg.game import TabularStochasticGame, JointPolicy, evaluate_policy
    >>> game = TabularStochasticGame(
    ...     payoffs=[[[1.0]]], transitions=[[[1.0]]], discount=0.5, action_counts=[1])
    >>> evaluate_policy(game, JointPolicy.uniform(game), 0).values
    array([2.])
"""
import typing
import logging

import attr
import numpy as np
from scipy import sparse
from clldutils.misc import log_or_raise

from pympg.util import (
    STRUCTURAL_TOLERANCE, SOLVER_TOLERANCE, DIRECT_SOLVE_MAX_STATES, MAX_ITERATIONS,
    ShapeError, ConvergenceError, joint_action_count, joint_action_table, draw_index,
)
from pympg.validators import VALIDATORS, ValidationReport

__all__ = [
    'TabularStochasticGame', 'JointPolicy', 'ValueFunction', 'Mdp', 'Trajectory',
    'validate_game', 'evaluate_policy', 'potential_value', 'finite_horizon_value',
    'k_step_transition', 'horizon_for_epsilon', 'sample_trajectory',
    'average_payoff', 'cycle_average_payoff', 'truncation_gap',
    'marginal_kernel', 'marginalize_opponents', 'reward_table']

log = logging.getLogger(__name__)

RewardSource = typing.Union[int, np.ndarray, typing.Any]


def _as_kernel(value) -> sparse.csr_matrix:
    if sparse.issparse(value):
        if value.format == 'csr' and value.dtype == np.float64:
            return value
        return sparse.csr_matrix(value, dtype=float)
    value = np.asarray(value, dtype=float)
    if value.ndim == 3:
        value = value.reshape(value.shape[0] * value.shape[1], value.shape[2])
    if value.ndim != 2:
        raise ShapeError('transitions must be nested as [state][joint_action][next_state]')
    return sparse.csr_matrix(value)


def _as_labels(value):
    return None if value is None else np.asarray(value, dtype=float)


@attr.s(eq=False, repr=False)
class TabularStochasticGame:
    """
    An n-agent stochastic game `(N, S, A, r, p, γ)` with finite states and actions.

    :ivar payoffs: `numpy.ndarray` of shape `(agent_count, state_count, joint_action_count)`.
    :ivar transitions: `scipy.sparse.csr_matrix` of shape `(state_count * J, state_count)`.
    :ivar discount: The discount factor γ.
    :ivar action_counts: Number of actions per agent.
    :ivar state_labels: Optional real coordinate per state.
    """
    payoffs = attr.ib(converter=lambda v: np.asarray(v, dtype=float))
    transitions = attr.ib(converter=_as_kernel)
    discount = attr.ib(converter=float)
    action_counts = attr.ib(converter=lambda v: tuple(int(n) for n in v))
    state_labels = attr.ib(default=None, converter=_as_labels)

    @property
    def agent_count(self) -> int:
        return len(self.action_counts)

    @property
    def state_count(self) -> int:
        return self.transitions.shape[1]

    @property
    def joint_action_count(self) -> int:
        return joint_action_count(self.action_counts)

    def __repr__(self):
        return '<{} agents={} states={} actions={} discount={}>'.format(
            self.__class__.__name__,
            self.agent_count, self.state_count, self.action_counts, self.discount)

    def dense_transitions(self) -> np.ndarray:
        """
        :return: The kernel as dense array of shape `(S, J, S)` - only sensible for small games.
        """
        return self.transitions.toarray().reshape(
            self.state_count, self.joint_action_count, self.state_count)

    def transition_row(
            self, state: int, joint_action: int) -> typing.Tuple[np.ndarray, np.ndarray]:
        """
        :return: Pair `(next_states, probabilities)` of the non-zero entries of `p(. | s, a)`.
        """
        row = state * self.joint_action_count + joint_action
        start, end = self.transitions.indptr[row], self.transitions.indptr[row + 1]
        return self.transitions.indices[start:end], self.transitions.data[start:end]

    def validate(
            self, log: logging.Logger = None, tolerance: float = STRUCTURAL_TOLERANCE) -> bool:
        """
        Check the game's invariants.

        :param log: a `logging.Logger` to write WARNINGs to. If `None`, an exception \
        will be raised at the first problem.
        :raises ValueError: if a violation is encountered (and `log` is `None`).
        :return: Flag signaling whether the game is valid.
        """
        success = True
        for violation in validate_game(self, tolerance=tolerance):
            success = False
            log_or_raise(str(violation), log=log)
        return success


def validate_game(
        game: TabularStochasticGame, tolerance: float = STRUCTURAL_TOLERANCE) -> ValidationReport:
    """
    :return: Every invariant violation of `game`, with tensor indices. Empty if the game is valid.
    """
    res = ValidationReport()
    for _, validator in VALIDATORS:
        res.extend(validator(game, tolerance))
    return res


@attr.s(eq=False)
class JointPolicy:
    """
    A stationary product policy: one table `π_i[state][action]` per agent.
    """
    tables = attr.ib(converter=lambda ts: [np.array(t, dtype=float) for t in ts])

    @classmethod
    def uniform(cls, game: TabularStochasticGame) -> 'JointPolicy':
        return cls([np.full((game.state_count, n), 1 / n) for n in game.action_counts])

    @property
    def agent_count(self) -> int:
        return len(self.tables)

    @property
    def state_count(self) -> int:
        return self.tables[0].shape[0]

    def check(self, game: TabularStochasticGame):
        """
        :raises ShapeError: if the table shapes do not match the game.
        """
        if self.agent_count != game.agent_count:
            raise ShapeError('policy for {} agents, game has {}'.format(
                self.agent_count, game.agent_count))
        for i, (table, n) in enumerate(zip(self.tables, game.action_counts)):
            if table.shape != (game.state_count, n):
                raise ShapeError('policy table of agent {} has shape {}, expected {}'.format(
                    i, table.shape, (game.state_count, n)))

    def violations(self, tolerance: float = STRUCTURAL_TOLERANCE) -> typing.List[str]:
        """
        :return: Descriptions of all rows which are not probability vectors.
        """
        res = []
        for i, table in enumerate(self.tables):
            for s, row in enumerate(table):
                if not np.all(np.isfinite(row)) or row.min() < 0:
                    res.append('tables[{}][{}] has negative or non-finite entries'.format(i, s))
                elif abs(row.sum() - 1) > tolerance:
                    res.append('tables[{}][{}] sums to {!r}'.format(i, s, float(row.sum())))
        return res

    def is_valid(self, tolerance: float = STRUCTURAL_TOLERANCE) -> bool:
        return not self.violations(tolerance)

    @property
    def is_deterministic(self) -> bool:
        return all(np.all(t.max(axis=1) == 1.0) for t in self.tables)

    def replace(self, agent: int, table) -> 'JointPolicy':
        """
        :return: The unilateral deviation of `agent` to `table`.
        """
        tables = list(self.tables)
        tables[agent] = table
        return self.__class__(tables)

    def joint_action_probabilities(self, skip: typing.Optional[int] = None) -> np.ndarray:
        """
        Probabilities of the flat joint actions at every state, shape `(S, J)`.

        :param skip: Agent whose table is replaced by ones, i.e. the result holds the weights \
        `π_{-i}(a_{-i} | s)` of the opponents of agent `skip`.
        """
        tables = [
            np.ones_like(t) if i == skip else t for i, t in enumerate(self.tables)]
        res = tables[0]
        for table in tables[1:]:
            res = (table[:, :, None] * res[:, None, :]).reshape(res.shape[0], -1)
        return res

    def as_dict(self) -> dict:
        return {'tables': self.tables}


@attr.s(eq=False)
class ValueFunction:
    """
    State values together with a tag recording which reward was evaluated (the agent index as
    string, or "potential").
    """
    values = attr.ib(converter=lambda v: np.asarray(v, dtype=float))
    source_tag = attr.ib(converter=str)

    def __getitem__(self, state):
        return self.values[state]

    def __len__(self):
        return len(self.values)

    def as_dict(self) -> dict:
        return {'source': self.source_tag, 'values': self.values}


@attr.s(eq=False)
class Mdp:
    """
    A single decision maker's MDP `(S, A, r, p, γ)` with transitions stored like a game's kernel,
    i.e. row `s * A + a` holds `p(. | s, a)`.
    """
    reward = attr.ib(converter=lambda v: np.asarray(v, dtype=float))
    transitions = attr.ib(converter=_as_kernel)
    discount = attr.ib(converter=float)

    def __attrs_post_init__(self):
        if self.reward.ndim != 2:
            raise ShapeError('reward must be a [state][action] table')
        if self.transitions.shape != (self.reward.size, self.reward.shape[0]):
            raise ShapeError('transitions of shape {} do not match rewards of shape {}'.format(
                self.transitions.shape, self.reward.shape))

    @property
    def state_count(self) -> int:
        return self.reward.shape[0]

    @property
    def decision_space_size(self) -> int:
        return self.reward.shape[1]

    def violations(self, tolerance: float = STRUCTURAL_TOLERANCE) -> typing.List[str]:
        res = []
        if not 0 < self.discount < 1:
            res.append('discount {} not in (0, 1)'.format(self.discount))
        if not np.all(np.isfinite(self.reward)):
            res.append('rewards must be finite')
        sums = np.asarray(self.transitions.sum(axis=1)).ravel()
        for row in np.flatnonzero(np.abs(sums - 1) > tolerance):
            res.append('transition row {} sums to {!r}'.format(
                divmod(int(row), self.decision_space_size), float(sums[row])))
        return res

    def lookahead(self, values: np.ndarray) -> np.ndarray:
        """
        One-step lookahead `Q(s, a) = r(s, a) + γ Σ_s' p(s'|s, a) V(s')`.
        """
        return self.reward + self.discount * (self.transitions @ values).reshape(
            self.reward.shape)


@attr.s(eq=False)
class Trajectory:
    """
    A sampled path `s_0, a_0, s_1, ..., s_T` with the per-agent payoffs `r_i(s_t, a_t)`.
    """
    states = attr.ib(converter=list)
    joint_actions = attr.ib(converter=list)
    payoffs = attr.ib(converter=lambda v: np.asarray(v, dtype=float))
    seed_record = attr.ib(default=None)

    def __attrs_post_init__(self):
        if len(self.states) != len(self.joint_actions) + 1 \
                or self.payoffs.shape[-1] != len(self.joint_actions):
            raise ShapeError('inconsistent trajectory lengths')

    def __len__(self):
        return len(self.joint_actions)

    def agent_actions(self, agent: int, action_counts) -> np.ndarray:
        return joint_action_table(action_counts)[np.asarray(self.joint_actions, dtype=int), agent]

    def is_consistent(self, game: TabularStochasticGame) -> bool:
        """
        Whether every step `(s_t, a_t, s_{t+1})` has positive probability in `game`.
        """
        for s, a, s_next in zip(self.states, self.joint_actions, self.states[1:]):
            next_states, probs = game.transition_row(s, a)
            if not np.any((next_states == s_next) & (probs > 0)):
                return False
        return True


def reward_table(
        game: TabularStochasticGame,
        reward_source: RewardSource) -> typing.Tuple[np.ndarray, str]:
    """
    Resolve a reward source - an agent index or a potential (object with a `table` attribute or
    array) - to a `(S, J)` table and a source tag.
    """
    if isinstance(reward_source, (int, np.integer)):
        if not 0 <= reward_source < game.agent_count:
            raise ShapeError('no agent {}'.format(reward_source))
        return game.payoffs[reward_source], str(int(reward_source))
    table = np.asarray(getattr(reward_source, 'table', reward_source), dtype=float)
    if table.shape != (game.state_count, game.joint_action_count):
        raise ShapeError('potential of shape {} does not match game {}'.format(
            table.shape, (game.state_count, game.joint_action_count)))
    return table, 'potential'


def marginal_kernel(game: TabularStochasticGame, policy: JointPolicy) -> sparse.csr_matrix:
    """
    The state-to-state kernel `P^π(s, s') = Σ_a π(a|s) p(s'|s, a)` as sparse `(S, S)` matrix.
    """
    S, J = game.state_count, game.joint_action_count
    weights = sparse.csr_matrix(
        (policy.joint_action_probabilities().ravel(),
         (np.repeat(np.arange(S), J), np.arange(S * J))),
        shape=(S, S * J))
    return (weights @ game.transitions).tocsr()


def marginalize_opponents(
        game: TabularStochasticGame,
        policy: JointPolicy,
        agent: int,
        table: np.ndarray) -> typing.Tuple[np.ndarray, sparse.csr_matrix]:
    """
    Average a `(S, J)` reward table and the kernel over the opponents' actions `a_{-i} ~ π_{-i}`.

    :return: Pair `(reward, transitions)` of shapes `(S, n_i)` and `(S * n_i, S)`.
    """
    policy.check(game)
    S, J, n = game.state_count, game.joint_action_count, game.action_counts[agent]
    own = joint_action_table(game.action_counts)[:, agent]
    weights = sparse.csr_matrix(
        (policy.joint_action_probabilities(skip=agent).ravel(),
         ((np.arange(S)[:, None] * n + own[None, :]).ravel(), np.arange(S * J))),
        shape=(S * n, S * J))
    weights.eliminate_zeros()
    reward = (weights @ np.asarray(table, dtype=float).ravel()).reshape(S, n)
    return reward, (weights @ game.transitions).tocsr()


def _policy_terms(game, reward_source, policy):
    policy.check(game)
    table, tag = reward_table(game, reward_source)
    r_pi = (policy.joint_action_probabilities() * table).sum(axis=1)
    return r_pi, marginal_kernel(game, policy), tag


def solve_linear_values(
        r_pi: np.ndarray,
        kernel: sparse.spmatrix,
        discount: float,
        tolerance: float = SOLVER_TOLERANCE,
        max_iterations: int = MAX_ITERATIONS) -> np.ndarray:
    """
    Solve `V = r + γ P V` such that the sup-norm Bellman residual is at most `tolerance`.

    Small systems are solved directly, larger ones by iterative policy evaluation.
    """
    S = len(r_pi)
    if S <= DIRECT_SOLVE_MAX_STATES:
        values = np.linalg.solve(np.eye(S) - discount * kernel.toarray(), r_pi)
    else:
        values = r_pi.copy()
        for _ in range(max_iterations):
            new = r_pi + discount * (kernel @ values)
            diff = np.abs(new - values).max()
            values = new
            if discount * diff <= tolerance:
                break
        else:
            raise ConvergenceError(
                'policy evaluation did not converge in {} iterations'.format(max_iterations))
    residual = np.abs(r_pi + discount * (kernel @ values) - values).max()
    if residual > tolerance:
        raise ConvergenceError('Bellman residual {} exceeds tolerance {}'.format(
            residual, tolerance))
    return values


def evaluate_policy(
        game: TabularStochasticGame,
        policy: JointPolicy,
        agent: int,
        tolerance: float = SOLVER_TOLERANCE) -> ValueFunction:
    """
    The discounted value `V_i^π(s) = E_π[Σ_t γ^t r_i(s_t, a_t) | s_0 = s]`.

    :raises ShapeError: if policy and game dimensions do not match.
    """
    if tolerance <= 0:
        raise ValueError('tolerance must be positive')
    r_pi, kernel, tag = _policy_terms(game, agent, policy)
    return ValueFunction(solve_linear_values(r_pi, kernel, game.discount, tolerance), tag)


def potential_value(
        game: TabularStochasticGame,
        potential,
        policy: JointPolicy,
        tolerance: float = SOLVER_TOLERANCE) -> ValueFunction:
    """
    The discounted potential `B^π(s) = E_π[Σ_t γ^t Φ(s_t, a_t) | s_0 = s]`.
    """
    if tolerance <= 0:
        raise ValueError('tolerance must be positive')
    r_pi, kernel, tag = _policy_terms(game, potential, policy)
    return ValueFunction(solve_linear_values(r_pi, kernel, game.discount, tolerance), tag)


def finite_horizon_value(
        game: TabularStochasticGame,
        reward_source: RewardSource,
        policy: JointPolicy,
        horizon: int) -> ValueFunction:
    """
    `E_π[Σ_{t=0}^{T-1} γ^t reward(s_t, a_t) | s_0 = s]` by exact backward recursion.

    :param reward_source: An agent index or a potential.
    """
    if horizon < 0:
        raise ValueError('horizon must be non-negative')
    r_pi, kernel, tag = _policy_terms(game, reward_source, policy)
    values = np.zeros(game.state_count)
    for _ in range(horizon):
        values = r_pi + game.discount * (kernel @ values)
    return ValueFunction(values, tag)


def truncation_gap(
        game: TabularStochasticGame,
        reward_source: RewardSource,
        policy: JointPolicy,
        horizon: int,
        tolerance: float = SOLVER_TOLERANCE) -> float:
    """
    Sup-norm distance between the horizon-`horizon` value and the converged discounted value.
    """
    r_pi, kernel, _ = _policy_terms(game, reward_source, policy)
    converged = solve_linear_values(r_pi, kernel, game.discount, tolerance)
    return float(np.abs(
        finite_horizon_value(game, reward_source, policy, horizon).values - converged).max())


def k_step_transition(game: TabularStochasticGame, policy: JointPolicy, k: int) -> np.ndarray:
    """
    `P^{k,π}`: the probability of reaching `s'` from `s` in exactly `k` steps under `policy`.
    """
    if k < 0:
        raise ValueError('k must be non-negative')
    policy.check(game)
    return np.linalg.matrix_power(marginal_kernel(game, policy).toarray(), k)


def horizon_for_epsilon(epsilon: float, gamma: float, h_max: float) -> int:
    """
    Smallest integer `T'` with `T' > |ln(ε(1-γ)/h_max) / ln γ|`.

    Truncations of a discounted sum of rewards bounded by `h_max` at any two horizons beyond
    `T'` differ by less than `epsilon`.
    """
    if epsilon <= 0 or not 0 < gamma < 1 or h_max < 0:
        raise ValueError('need epsilon > 0, 0 < gamma < 1 and h_max >= 0')
    if h_max == 0:
        return 0
    ratio = epsilon * (1 - gamma) / h_max
    if ratio >= 1:
        return 1
    # Rounding absorbs log noise, so that integral ratios still round up.
    return int(np.floor(round(abs(np.log(ratio) / np.log(gamma)), 9))) + 1


def sample_trajectory(
        game: TabularStochasticGame,
        policy: JointPolicy,
        initial_state: int,
        length: int,
        rng_seed: typing.Union[int, np.random.Generator, None] = None) -> Trajectory:
    """
    Sample `length` steps: `a_t ~ π(.|s_t)` agent by agent, then `s_{t+1} ~ p(.|s_t, a_t)`.

    :param rng_seed: Seed for `numpy.random.default_rng` or a `Generator` to draw from, in \
    which case the caller owns the random stream.
    """
    if length < 0:
        raise ValueError('length must be non-negative')
    if not 0 <= initial_state < game.state_count:
        raise ShapeError('no state {}'.format(initial_state))
    policy.check(game)
    if isinstance(rng_seed, np.random.Generator):
        rng, seed_record = rng_seed, None
    else:
        rng, seed_record = np.random.default_rng(rng_seed), rng_seed

    radix = np.cumprod((1,) + game.action_counts[:-1])
    states, actions, payoffs = [initial_state], [], []
    s = initial_state
    for _ in range(length):
        a = int(sum(r * draw_index(rng, table[s]) for r, table in zip(radix, policy.tables)))
        next_states, probs = game.transition_row(s, a)
        actions.append(a)
        payoffs.append(game.payoffs[:, s, a])
        s = int(next_states[draw_index(rng, probs)])
        states.append(s)
    return Trajectory(
        states=states,
        joint_actions=actions,
        payoffs=np.array(payoffs).T.reshape(game.agent_count, length),
        seed_record=seed_record)


def average_payoff(value_function: ValueFunction, discount: float) -> ValueFunction:
    """
    The normalized discounted value `(1 - γ) V`.
    """
    return ValueFunction((1 - discount) * value_function.values, value_function.source_tag)


def cycle_average_payoff(
        game: TabularStochasticGame,
        policy: JointPolicy,
        reward_source: RewardSource,
        start_state: int) -> float:
    """
    The exact per-step reward averaged over the cycle that a deterministic policy on a
    deterministic kernel eventually enters from `start_state`.

    :raises ValueError: if the policy or the visited transitions are stochastic.
    """
    policy.check(game)
    if not policy.is_deterministic:
        raise ValueError('cycle averages need a deterministic policy')
    table, _ = reward_table(game, reward_source)
    choices = policy.joint_action_probabilities().argmax(axis=1)
    seen, rewards, s = {}, [], start_state
    while s not in seen:
        seen[s] = len(rewards)
        rewards.append(table[s, choices[s]])
        next_states, probs = game.transition_row(s, choices[s])
        next_states = next_states[probs > 0]
        if len(next_states) != 1:
            raise ValueError('transition from state {} is stochastic'.format(s))
        s = int(next_states[0])
    return float(np.mean(rewards[seen[s]:]))
