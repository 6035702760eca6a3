"""
Check whether the policy <POLICY> is an ε-Nash equilibrium of game <GAME>.
"""
from clldutils.clilib import PathType

from pympg.util import SOLVER_TOLERANCE
from pympg.equilibrium import verify_nash
from pympg.cli_util import (
    add_game, add_tolerance, add_output, parse_game_file, parse_policy_file, inputs_digest,
    ReportDocument, emit_report, assert_result,
)

ALIASES = ['verify-nash']


def register(parser):
    add_game(parser)
    parser.add_argument(
        'policy',
        metavar='POLICY',
        help='Path to a JSON policy document with either "tables" or "choices".',
        type=PathType(type='file', must_exist=False),
    )
    parser.add_argument(
        '--epsilon',
        help='(default: %(default)s)',
        type=float,
        default=1e-6,
    )
    add_tolerance(parser, default=SOLVER_TOLERANCE)
    add_output(parser)


def run(args):
    game, _ = parse_game_file(args.game)
    policy = parse_policy_file(args.policy, game)
    report = verify_nash(game, policy, args.epsilon, tolerance=args.tolerance, log=args.log)
    args.log.info('Nash gap {} at (agent, state) {}: {}'.format(
        report.max_gap, report.witness, 'pass' if report.passed else 'fail'))
    emit_report(args, ReportDocument(
        command='verifynash',
        inputs_digest=inputs_digest(args.game, args.policy),
        tolerances=dict(solver=args.tolerance),
        results=report))
    return assert_result(args, report.passed)
