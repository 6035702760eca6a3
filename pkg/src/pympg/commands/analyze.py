"""
Find or verify the one-shot potential of game <GAME> and decide the qualification conditions
- C1: agent-independent transitions
- C2: dummy terms
- C3: state transitivity
- CST: complete state transitivity

The JSON report is printed to stdout or, with --out, written to a file; in the latter case a
table of the conditions is printed instead.
"""
from clldutils.clilib import Table, add_format

from pympg.util import CHECKER_TOLERANCE, FD_STEP
from pympg.potential import (
    find_one_shot_potential, calibrate_state_offsets,
    check_agent_independent_transitions, check_dummy_terms, check_state_transitivity,
    check_complete_state_transitivity,
)
from pympg.cli_util import (
    add_game, add_tolerance, add_output, add_seed, parse_game_file, inputs_digest,
    ReportDocument, emit_report, assert_result,
)


def register(parser):
    add_game(parser)
    add_tolerance(parser, default=CHECKER_TOLERANCE)
    parser.add_argument(
        '--fd-step',
        help='Step of the central differences probing the dummy term gradients '
             '(default: %(default)s).',
        type=float,
        default=FD_STEP,
    )
    add_seed(parser)
    add_format(parser, default='simple')
    add_output(parser)


def run(args):
    game, potential = parse_game_file(args.game)
    args.log.info('analyzing {}'.format(game))
    if potential is not None and potential.verification_residual <= args.tolerance:
        args.log.info('using the potential of the game document')
    else:
        if potential is not None:
            args.log.warning('potential of the game document does not verify: residual {}'.format(
                potential.verification_residual))
        potential = find_one_shot_potential(game, args.tolerance, log=args.log)

    conditions = []
    if potential.found:
        potential = calibrate_state_offsets(game, potential)
        conditions = [
            check_agent_independent_transitions(game, args.tolerance),
            check_dummy_terms(
                game, potential, fd_step=args.fd_step, tolerance=args.tolerance, seed=args.seed),
            check_state_transitivity(game, potential, args.tolerance),
            check_complete_state_transitivity(
                game, potential, args.tolerance, seed=args.seed, log=args.log),
        ]
    else:
        args.log.warning('not a one-shot potential game: cycle sum {} at state {}'.format(
            potential.cycle_sum, potential.state))

    passed = potential.found and all(r.passed for r in conditions)
    emit_report(args, ReportDocument(
        command='analyze',
        inputs_digest=inputs_digest(args.game),
        seed=args.seed,
        tolerances=dict(checker=args.tolerance, fd_step=args.fd_step),
        results=dict(
            potential_found=potential.found,
            potential=potential,
            conditions={r.condition_id: r for r in conditions},
            passed=passed)))

    if args.out:
        with Table(args, 'condition', 'passed', 'max_residual', 'witness') as t:
            t.append(['OPSG', potential.found, potential.verification_residual, ''])
            for r in conditions:
                t.append([
                    r.condition_id,
                    'vacuous' if r.vacuous else r.passed,
                    r.max_residual,
                    '' if r.witness is None else str(r.witness)])
    return assert_result(args, passed)
