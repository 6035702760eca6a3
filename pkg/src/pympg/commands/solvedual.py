"""
Solve the dual MDP of game <GAME>, i.e. maximize the discounted one-shot potential over joint
actions, and check whether its greedy policy is an ε-Nash equilibrium of the game.
"""
from pympg.util import SOLVER_TOLERANCE, MAX_ITERATIONS
from pympg.potential import find_one_shot_potential, calibrate_state_offsets
from pympg.equilibrium import (
    build_dual_mdp, value_iteration, greedy_ties, extract_joint_policy, verify_nash,
)
from pympg.cli_util import (
    add_game, add_tolerance, add_output, parse_game_file, inputs_digest, GameFileError,
    ReportDocument, emit_report, assert_result,
)

ALIASES = ['solve-dual']


def register(parser):
    add_game(parser)
    add_tolerance(parser, default=SOLVER_TOLERANCE)
    parser.add_argument(
        '--epsilon',
        help='ε of the Nash check of the greedy policy (default: %(default)s).',
        type=float,
        default=1e-6,
    )
    parser.add_argument(
        '--max-iterations',
        type=int,
        default=MAX_ITERATIONS,
    )
    add_output(parser)


def run(args):
    game, potential = parse_game_file(args.game)
    if potential is None:
        potential = find_one_shot_potential(game, log=args.log)
        if not potential.found:
            raise GameFileError(
                'validation',
                [('payoffs', 'no one-shot potential: cycle sum {}'.format(potential.cycle_sum))],
                path=args.game)
        potential = calibrate_state_offsets(game, potential)

    dual = build_dual_mdp(game, potential)
    values, decisions = value_iteration(
        dual, tolerance=args.tolerance, max_iterations=args.max_iterations, log=args.log)
    policy = extract_joint_policy(decisions, game)
    ties = greedy_ties(dual, values, args.tolerance)
    if ties:
        args.log.warning('dual optimum not unique at states {}'.format(ties))
    nash = verify_nash(game, policy, args.epsilon, tolerance=args.tolerance, log=args.log)
    args.log.info('greedy dual policy: Nash gap {} ({})'.format(
        nash.max_gap, 'pass' if nash.passed else 'fail'))

    emit_report(args, ReportDocument(
        command='solvedual',
        inputs_digest=inputs_digest(args.game),
        tolerances=dict(solver=args.tolerance),
        results=dict(
            values=values.values,
            decisions=decisions,
            policy=policy,
            ties=ties,
            nash=nash)))
    return assert_result(args, nash.passed)
