"""
One-shot potentials and the conditions under which a one-shot potential stochastic game is a
Markov potential game.

A one-shot potential `Φ(s, a)` turns every stage game into an exact potential game, i.e.
`r_i(s, a) - Φ(s, a)` does not depend on agent i's own action. The checkers in this module
decide the qualification conditions on the residual tensor `d_i = r_i - Φ`:

- `C1_agent_independent`: transitions do not depend on the joint action,
- `C2_dummy_terms`: the dummy terms `d_i` have equal policy gradients,
- `C3_state_transitivity`: `d_i(., a)` is constant across states,
- `CST_complete`: `d_i` is a single constant (complete state transitivity).

All checkers return a :class:`ConditionReport` with the maximal residual and the indices
attaining it; ties go to the lowest index.
"""
import typing
import logging
import itertools

import attr
import numpy as np

from pympg.util import (
    CHECKER_TOLERANCE, SOLVER_TOLERANCE, FD_STEP,
    ShapeError, joint_action_count, joint_action_table, joint_axes, encode_joint_action,
    first_argmax,
)
from pympg.game import (
    TabularStochasticGame, JointPolicy, evaluate_policy, potential_value, finite_horizon_value,
    marginal_kernel, marginalize_opponents,
)

__all__ = [
    'OneShotPotential', 'NotPotential', 'ResidualTensor', 'ConditionReport', 'AlignmentReport',
    'FiniteHorizonReport', 'NonUnilateralDeviation',
    'find_one_shot_potential', 'verify_potential', 'calibrate_state_offsets', 'residual_table',
    'check_agent_independent_transitions', 'check_dummy_terms', 'check_state_transitivity',
    'check_complete_state_transitivity', 'check_value_potential_alignment',
    'check_finite_horizon_identities', 'alignment_truncation_bound',
    'generate_cst_game', 'generate_agent_independent_game', 'CONDITIONS']

log = logging.getLogger(__name__)

CONDITIONS = [
    'C1_agent_independent', 'C2_dummy_terms', 'C3_state_transitivity', 'CST_complete']


class NonUnilateralDeviation(ValueError):
    pass


def _as_table(value):
    return np.asarray(value, dtype=float)


def _as_profile(value):
    return None if value is None else tuple(int(a) for a in value)


@attr.s(eq=False)
class OneShotPotential:
    """
    :ivar table: `Φ[state][joint_action]`.
    :ivar anchor_profile: The joint action (as agent-action tuple) at which `Φ` was normalized \
    to zero, or `None` for potentials which were not constructed from an anchor.
    :ivar verification_residual: Max violation of the exact potential property.
    """
    table = attr.ib(converter=_as_table)
    anchor_profile = attr.ib(default=None, converter=_as_profile)
    verification_residual = attr.ib(default=0.0, converter=float)
    tolerance = attr.ib(default=CHECKER_TOLERANCE, converter=float)
    found = True

    def check(self, game: TabularStochasticGame):
        if self.table.shape != (game.state_count, game.joint_action_count):
            raise ShapeError('potential of shape {} does not match game {}'.format(
                self.table.shape, (game.state_count, game.joint_action_count)))

    def as_dict(self) -> dict:
        return dict(
            table=self.table,
            anchor_profile=self.anchor_profile,
            verification_residual=self.verification_residual,
            tolerance=self.tolerance)


@attr.s(eq=False)
class NotPotential:
    """
    Failure outcome of :func:`find_one_shot_potential`: a four-step unilateral deviation cycle
    `(x, y) -> (x', y) -> (x', y') -> (x, y') -> (x, y)` of agents `agents[0]` and `agents[1]`,
    whose sum of deviator payoff differences does not vanish.

    :ivar cycle: The four flat joint actions of the cycle in visiting order.
    """
    state = attr.ib(converter=int)
    agents = attr.ib(converter=tuple)
    cycle = attr.ib(converter=tuple)
    cycle_sum = attr.ib(converter=float)
    verification_residual = attr.ib(converter=float)
    found = False

    def as_dict(self) -> dict:
        return attr.asdict(self)


@attr.s(eq=False)
class ResidualTensor:
    """
    `d[agent][state][joint_action] = r_i(s, a) - Φ(s, a)`.
    """
    table = attr.ib(converter=_as_table)

    def __getitem__(self, agent):
        return self.table[agent]


@attr.s(eq=False)
class ConditionReport:
    condition_id = attr.ib(validator=attr.validators.in_(CONDITIONS))
    passed = attr.ib(converter=bool)
    max_residual = attr.ib(converter=float)
    witness = attr.ib(default=None)
    tolerance = attr.ib(default=CHECKER_TOLERANCE, converter=float)
    vacuous = attr.ib(default=False, converter=bool)
    details = attr.ib(default=attr.Factory(dict))

    def as_dict(self) -> dict:
        return attr.asdict(self, recurse=False)


@attr.s(eq=False)
class AlignmentReport:
    delta_value = attr.ib(converter=float)
    delta_potential = attr.ib(converter=float)
    agent = attr.ib(default=None)
    start_state = attr.ib(default=None)

    @property
    def misalignment(self) -> float:
        return abs(self.delta_value - self.delta_potential)

    def as_dict(self) -> dict:
        res = attr.asdict(self)
        res['misalignment'] = self.misalignment
        return res


@attr.s(eq=False)
class FiniteHorizonReport:
    """
    :ivar deviation_residual: `max_s |(V_i^T - B^T)^π(s) - (V_i^T - B^T)^π'(s)|`.
    :ivar state_residual: `max_{s, s'} |(V_i^T - B^T)^π(s) - (V_i^T - B^T)^π(s')|`.
    """
    deviation_residual = attr.ib(converter=float)
    state_residual = attr.ib(converter=float)
    horizon = attr.ib(default=None)


def _report(condition_id, residual, witness, tolerance, **kw):
    return ConditionReport(
        condition_id=condition_id,
        passed=residual <= tolerance,
        max_residual=residual,
        witness=witness,
        tolerance=tolerance,
        **kw)


def _own_action_spread(game: TabularStochasticGame, d: np.ndarray) -> np.ndarray:
    """
    Per agent `i`, the variation of `d[i]` along agent i's own action, shape `(n, S, J / n_i)`.
    """
    res = []
    for i in range(game.agent_count):
        ptp = np.ptp(joint_axes(d[i], game.action_counts), axis=1 + i)
        res.append(ptp.reshape(game.state_count, -1))
    return res


def verify_potential(game: TabularStochasticGame, table) -> float:
    """
    Max over `(i, s, a, a'_i)` of the violation of
    `r_i(s, a) - r_i(s, a'_i, a_-i) = Φ(s, a) - Φ(s, a'_i, a_-i)`.
    """
    table = np.asarray(getattr(table, 'table', table), dtype=float)
    if table.shape != (game.state_count, game.joint_action_count):
        raise ShapeError('potential table of shape {}'.format(table.shape))
    return float(max(
        (spread.max(initial=0.0) for spread in _own_action_spread(game, game.payoffs - table)),
        default=0.0))


def _path_potential(game: TabularStochasticGame) -> np.ndarray:
    # Move agents one at a time, in index order, from the all-zero anchor to the target profile.
    profiles = joint_action_table(game.action_counts)
    radix = np.cumprod((1,) + game.action_counts[:-1])
    table = np.zeros((game.state_count, game.joint_action_count))
    previous = np.zeros(game.joint_action_count, dtype=int)
    for i in range(game.agent_count):
        current = (profiles * (np.arange(game.agent_count) <= i)) @ radix
        table += game.payoffs[i][:, current] - game.payoffs[i][:, previous]
        previous = current
    return table


def _deviation_cycle(game: TabularStochasticGame, residual: float) -> NotPotential:
    # Cycles through the corner (x, y) = (0, 0): the pair (i, j) admits a potential iff all of
    # them vanish.
    best = None
    for i, j in itertools.combinations(range(game.agent_count), 2):
        e = joint_axes(game.payoffs[i] - game.payoffs[j], game.action_counts)
        e = np.moveaxis(e, (1 + i, 1 + j), (1, 2))
        sums = e[:, :, :1] - e[:, :1, :1] - e + e[:, :1, :]
        index = first_argmax(np.abs(sums))
        if best is None or abs(sums[index]) > abs(best[0]):
            best = (float(sums[index]), i, j, index)
    if best is None:
        return NotPotential(
            state=0, agents=(), cycle=(), cycle_sum=0.0, verification_residual=residual)

    value, i, j, (s, x, y, *rest) = best
    others = [k for k in range(game.agent_count) if k not in (i, j)]

    def encode(ai, aj):
        profile = [0] * game.agent_count
        profile[i], profile[j] = ai, aj
        for k, a in zip(others, rest):
            profile[k] = a
        return encode_joint_action(profile, game.action_counts)

    return NotPotential(
        state=s,
        agents=(i, j),
        cycle=(encode(0, 0), encode(x, 0), encode(x, y), encode(0, y)),
        cycle_sum=value,
        verification_residual=residual)


def find_one_shot_potential(
        game: TabularStochasticGame,
        tolerance: float = CHECKER_TOLERANCE,
        log: logging.Logger = log) -> typing.Union[OneShotPotential, NotPotential]:
    """
    Construct `Φ` by summing unilateral deviation payoff differences along a path from the
    all-zero anchor profile, then verify it exhaustively.

    :return: A :class:`OneShotPotential` with `Φ(s, anchor) = 0` or, if the verification fails, \
    a :class:`NotPotential` with the deviation cycle of largest absolute sum.
    """
    table = _path_potential(game)
    residual = verify_potential(game, table)
    if residual <= tolerance:
        return OneShotPotential(
            table=table,
            anchor_profile=(0,) * game.agent_count,
            verification_residual=residual,
            tolerance=tolerance)
    log.debug('potential verification residual {} exceeds {}'.format(residual, tolerance))
    return _deviation_cycle(game, residual)


def calibrate_state_offsets(
        game: TabularStochasticGame, potential: OneShotPotential) -> OneShotPotential:
    """
    Shift `Φ(s, .)` by a per-state constant `κ(s)`, such that agent 0's residual at the anchor
    profile is the same at every state and `κ(0) = 0`.
    """
    potential.check(game)
    anchor = encode_joint_action(
        potential.anchor_profile or (0,) * game.agent_count, game.action_counts)
    d0 = game.payoffs[0][:, anchor] - potential.table[:, anchor]
    offsets = d0 - d0[0]
    return OneShotPotential(
        table=potential.table + offsets[:, None],
        anchor_profile=potential.anchor_profile,
        verification_residual=potential.verification_residual,
        tolerance=potential.tolerance)


def residual_table(game: TabularStochasticGame, potential: OneShotPotential) -> ResidualTensor:
    potential.check(game)
    return ResidualTensor(game.payoffs - potential.table[None, :, :])


def check_agent_independent_transitions(
        game: TabularStochasticGame, tolerance: float = CHECKER_TOLERANCE) -> ConditionReport:
    """
    Max over `(s, a, b, s')` of `|p(s'|s, a) - p(s'|s, b)|`.

    The witness is `(s, a, b, s')` with `p(s'|s, a)` maximal and `p(s'|s, b)` minimal.
    """
    S, J = game.state_count, game.joint_action_count
    residual, witness = 0.0, None
    for s in range(S):
        block = game.transitions[s * J:(s + 1) * J].toarray()
        spread = np.ptp(block, axis=0)
        t = int(np.argmax(spread))
        if witness is None or spread[t] > residual:
            residual = float(spread[t])
            witness = (s, int(np.argmax(block[:, t])), int(np.argmin(block[:, t])), t)
    return _report('C1_agent_independent', residual, witness, tolerance)


def _probe_policies(game, count, seed, fd_step):
    for n in game.action_counts:
        if 1 / (2 * n) < 2 * fd_step:
            raise ValueError(
                'fd_step {} too large for the simplex interior of {} actions'.format(fd_step, n))
    yield JointPolicy.uniform(game)
    rng = np.random.default_rng(seed)
    for _ in range(count):
        # Mixing with the uniform policy keeps every entry >= 1 / (2 n_i).
        yield JointPolicy([
            0.5 * rng.dirichlet(np.ones(n), size=game.state_count) + 0.5 / n
            for n in game.action_counts])


def _dummy_gradients(game, d, policy, agent, fd_step):
    """
    Central differences of `U_i(s)` along `e_a - e_0` of `π_i(.|s)`, shape `(S, n_i - 1)`.

    `U_i` at the perturbed policies is evaluated exactly: perturbing the row of a single state
    is a rank-one update of `I - γ P`.
    """
    S, gamma, n = game.state_count, game.discount, game.action_counts[agent]
    reward, kernel = marginalize_opponents(game, policy, agent, d[agent])
    table = policy.tables[agent]
    G = np.linalg.inv(np.eye(S) - gamma * marginal_kernel(game, policy).toarray())
    U = G @ (table * reward).sum(axis=1)
    g_ss = np.diag(G)

    kU = (kernel @ U).reshape(S, n)
    kG = (kernel @ G).reshape(S, n, S)[np.arange(S), :, np.arange(S)]
    dr, dkU, dkG = [x[:, 1:] - x[:, :1] for x in (reward, kU, kG)]

    def perturbed(h):
        rho, qU, qg = h * dr, h * dkU, h * dkG
        return g_ss[:, None] * (rho + gamma * (qU + rho * qg) / (1 - gamma * qg))

    return (perturbed(fd_step) - perturbed(-fd_step)) / (2 * fd_step)


def check_dummy_terms(
        game: TabularStochasticGame,
        potential: OneShotPotential,
        fd_step: float = FD_STEP,
        tolerance: float = CHECKER_TOLERANCE,
        probes: int = 3,
        seed: int = 0) -> ConditionReport:
    """
    Two sub-checks, both must pass:

    - structural: each `d_i` is independent of agent i's own action,
    - gradient: for each agent `i` and state `s`, all partial derivatives of
      `U_i^π(s) = E_π[Σ_t γ^t d_i(s_t, a_t) | s_0 = s]` with respect to `π_i(.|s)` are equal.

    Gradients are estimated by central differences of step `fd_step` at the uniform policy and
    at `probes` seeded random interior product policies.

    :raises ValueError: if `fd_step` is too large for the interior of some agent's simplex.
    """
    potential.check(game)
    d = residual_table(game, potential).table

    structural, structural_witness = 0.0, None
    for i, spread in enumerate(_own_action_spread(game, d)):
        s, rest = first_argmax(spread)
        if structural_witness is None or spread[s, rest] > structural:
            structural, structural_witness = float(spread[s, rest]), (i, s)

    gradient, gradient_witness = 0.0, None
    for p, policy in enumerate(_probe_policies(game, probes, seed, fd_step)):
        for i in range(game.agent_count):
            if game.action_counts[i] < 2:
                continue
            D = _dummy_gradients(game, d, policy, i, fd_step)
            # Directions e_a - e_b have derivative D_a - D_b, with D_0 = 0.
            spread = np.maximum(D.max(axis=1), 0) - np.minimum(D.min(axis=1), 0)
            s = int(np.argmax(spread))
            if gradient_witness is None or spread[s] > gradient:
                gradient, gradient_witness = float(spread[s]), (i, s, p)

    residual = max(structural, gradient)
    return _report(
        'C2_dummy_terms',
        residual,
        structural_witness if structural >= gradient else gradient_witness,
        tolerance,
        details=dict(
            structural_residual=structural,
            structural_witness=structural_witness,
            gradient_residual=gradient,
            gradient_witness=gradient_witness,
            fd_step=fd_step,
            probes=probes + 1))


def check_state_transitivity(
        game: TabularStochasticGame,
        potential: OneShotPotential,
        tolerance: float = CHECKER_TOLERANCE) -> ConditionReport:
    """
    Max over `(i, s, s', a)` of `|d_i(s, a) - d_i(s', a)|`; the witness is `(i, s, s', a)`.

    The potential must be calibrated, see :func:`calibrate_state_offsets`.
    """
    d = residual_table(game, potential).table
    spread = np.ptp(d, axis=1)
    i, a = first_argmax(spread)
    witness = (i, int(np.argmax(d[i, :, a])), int(np.argmin(d[i, :, a])), a)
    return _report('C3_state_transitivity', float(spread[i, a]), witness, tolerance)


def check_complete_state_transitivity(
        game: TabularStochasticGame,
        potential: OneShotPotential,
        tolerance: float = CHECKER_TOLERANCE,
        spot_checks: int = 100,
        seed: int = 0,
        log: logging.Logger = log) -> ConditionReport:
    """
    Max over `(i, s != s', a, b)` of `|d_i(s, a) - d_i(s', b)|`.

    Over product deterministic policies the condition reduces to this spread. It is spot-checked
    against the expectation form `E_{a ~ π(.|s)}[d_i(s, a)] = E_{a ~ π(.|s')}[d_i(s', a)]` for
    `spot_checks` seeded random stochastic policies; the result is recorded in `details`.

    A single-state game passes vacuously.
    """
    d = residual_table(game, potential).table
    if game.state_count < 2:
        return _report('CST_complete', 0.0, None, tolerance, vacuous=True)

    upper, lower = d.max(axis=2), d.min(axis=2)
    spread = upper[:, :, None] - lower[:, None, :]
    diagonal = np.arange(game.state_count)
    spread[:, diagonal, diagonal] = -np.inf
    i, s, t = first_argmax(spread)
    residual = float(spread[i, s, t])
    witness = (i, s, int(np.argmax(d[i, s])), t, int(np.argmin(d[i, t])))

    rng = np.random.default_rng(seed)
    failures = 0
    for _ in range(spot_checks):
        policy = JointPolicy([
            rng.dirichlet(np.ones(n), size=game.state_count) for n in game.action_counts])
        expected = (policy.joint_action_probabilities()[None, :, :] * d).sum(axis=2)
        if np.ptp(expected, axis=1).max() > tolerance:
            failures += 1
    passed = residual <= tolerance
    agrees = (failures == 0) if passed else (failures > 0 or spot_checks == 0)
    if not agrees:
        log.warning('expectation form spot checks disagree with the deterministic verdict')
    return _report(
        'CST_complete', residual, witness, tolerance,
        details=dict(spot_checks=spot_checks, spot_check_failures=failures, agrees=agrees))


def check_value_potential_alignment(
        game: TabularStochasticGame,
        potential: OneShotPotential,
        policy: JointPolicy,
        agent: int,
        deviation_policy: JointPolicy,
        start_state: int = 0,
        tolerance: float = SOLVER_TOLERANCE) -> AlignmentReport:
    """
    Compare the value change `V_i^π(s) - V_i^π'(s)` of a unilateral deviation with the change
    `B^π(s) - B^π'(s)` of the discounted potential.

    :raises NonUnilateralDeviation: if `deviation_policy` changes another agent's table.
    """
    if deviation_policy.agent_count != policy.agent_count or any(
            not np.array_equal(a, b)
            for j, (a, b) in enumerate(zip(policy.tables, deviation_policy.tables))
            if j != agent):
        raise NonUnilateralDeviation('deviation changes agents other than {}'.format(agent))
    values = [evaluate_policy(game, p, agent, tolerance)[start_state]
              for p in (policy, deviation_policy)]
    potentials = [potential_value(game, potential, p, tolerance)[start_state]
                  for p in (policy, deviation_policy)]
    return AlignmentReport(
        delta_value=values[0] - values[1],
        delta_potential=potentials[0] - potentials[1],
        agent=agent,
        start_state=start_state)


def check_finite_horizon_identities(
        game: TabularStochasticGame,
        potential: OneShotPotential,
        policy: JointPolicy,
        deviation_policy: JointPolicy,
        agent: int,
        horizon: int) -> FiniteHorizonReport:
    def excess(p):
        return finite_horizon_value(game, agent, p, horizon).values \
            - finite_horizon_value(game, potential, p, horizon).values

    e, e_dev = excess(policy), excess(deviation_policy)
    return FiniteHorizonReport(
        deviation_residual=np.abs(e - e_dev).max(),
        state_residual=np.ptp(e),
        horizon=horizon)


def alignment_truncation_bound(
        game: TabularStochasticGame,
        potential: OneShotPotential,
        agent: int,
        horizon: int) -> float:
    """
    `2 γ^T (B^max + V_i^max)`: the infinite-horizon misalignment of any unilateral deviation
    differs from the horizon-`T` misalignment by at most this amount.
    """
    scale = game.discount ** horizon / (1 - game.discount)
    return 2 * scale * (np.abs(potential.table).max() + np.abs(game.payoffs[agent]).max())


def _random_kernel(rng, rows, state_count):
    kernel = rng.uniform(0.1, 1.0, size=(rows, state_count))
    return kernel / kernel.sum(axis=1, keepdims=True)


def generate_cst_game(
        seed: int,
        agent_count: int,
        state_count: int,
        action_counts: typing.Sequence[int],
        gamma: float) -> typing.Tuple[TabularStochasticGame, OneShotPotential]:
    """
    A game satisfying complete state transitivity by construction: `r_i = Φ + c_i` with
    `Φ ~ U[-1, 1]`, `c_i ~ U[-1, 1]` and a random positive kernel.
    """
    if len(action_counts) != agent_count:
        raise ShapeError('need one action count per agent')
    rng = np.random.default_rng(seed)
    J = joint_action_count(action_counts)
    table = rng.uniform(-1, 1, size=(state_count, J))
    offsets = rng.uniform(-1, 1, size=agent_count)
    game = TabularStochasticGame(
        payoffs=table[None, :, :] + offsets[:, None, None],
        transitions=_random_kernel(rng, state_count * J, state_count),
        discount=gamma,
        action_counts=action_counts)
    return game, OneShotPotential(table, verification_residual=verify_potential(game, table))


def generate_agent_independent_game(
        seed: int,
        agent_count: int,
        state_count: int,
        action_counts: typing.Sequence[int],
        gamma: float) -> typing.Tuple[TabularStochasticGame, OneShotPotential]:
    """
    A one-shot potential game with agent-independent transitions: `r_i = Φ + v_i` with dummy
    terms `v_i(s, a_-i)` and `p(s'|s)` replicated over joint actions.
    """
    if len(action_counts) != agent_count:
        raise ShapeError('need one action count per agent')
    rng = np.random.default_rng(seed)
    J = joint_action_count(action_counts)
    table = rng.uniform(-1, 1, size=(state_count, J))
    own = joint_action_table(action_counts)
    radix = np.cumprod((1,) + tuple(action_counts[:-1]))
    payoffs = []
    for i in range(agent_count):
        dummy = rng.uniform(-1, 1, size=(state_count, J))
        # Read v_i at own action 0, so that it depends on the opponents' actions only.
        payoffs.append(table + dummy[:, own @ radix - own[:, i] * radix[i]])
    kernel = np.repeat(_random_kernel(rng, state_count, state_count), J, axis=0)
    game = TabularStochasticGame(
        payoffs=payoffs, transitions=kernel, discount=gamma, action_counts=action_counts)
    return game, OneShotPotential(table, verification_residual=verify_potential(game, table))
