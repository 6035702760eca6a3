"""
Reproduce the refutation on the discretized counterexample game: the dual MDP optimum of a
one-shot potential game satisfying state transitivity need not be a Nash equilibrium.

With --assert, exit status 0 means the verdicts matched the expected vector
(OPSG, not C1, not C2, C3, not CST, dual optimum not Nash, known policy Nash).

The plot-ready trace is opt-in: with --trace PATH, independent PSGA learners (configured with
--eta, --batch, --iters, --gap-every and --seed) also run on the discretized game, and their
batch returns, mean actions and Nash gaps are written to PATH as CSV.
"""
from clldutils.clilib import ParserError

from pympg.util import CHECKER_TOLERANCE, digest
from pympg.counterexample import DiscretizationConfig, discretize, reproduce_report
from pympg.learning import run_psga
from pympg.cli_util import add_tolerance, add_output, ReportDocument, emit_report, assert_result
from pympg.commands.learn import add_learner, learner_config


def register(parser):
    parser.add_argument(
        '--grid', help='grid size N (default: %(default)s)', type=int, default=101)
    parser.add_argument(
        '--gamma', help='discount factor (default: %(default)s)', type=float, default=0.9)
    parser.add_argument(
        '--dual-epsilon',
        help='ε of the Nash check of the dual optimum (default: %(default)s)',
        type=float,
        default=0.5)
    parser.add_argument(
        '--nash-epsilon',
        help='ε of the Nash check of the known equilibrium (default: %(default)s)',
        type=float,
        default=1e-6)
    add_tolerance(parser, default=CHECKER_TOLERANCE)
    add_learner(parser)
    add_output(parser)


def run(args):
    if args.grid < 2 or not 0 < args.gamma < 1:
        raise ParserError('need --grid >= 2 and 0 < --gamma < 1')
    config = DiscretizationConfig(args.grid, args.gamma)
    report = reproduce_report(
        config,
        dual_epsilon=args.dual_epsilon,
        nash_epsilon=args.nash_epsilon,
        tolerance=args.tolerance,
        log=args.log)
    for name, verdict in report.verdicts.items():
        args.log.info('{}: {}'.format(name, verdict))

    if args.trace:
        game, _ = discretize(config)
        trace = run_psga(game, learner_config(args), log=args.log)
        trace.write_csv(args.trace)
        args.log.info('trace written to {}'.format(args.trace))

    emit_report(args, ReportDocument(
        command='counterexample',
        inputs_digest=digest(dict(grid=args.grid, gamma=args.gamma)),
        seed=args.seed if args.trace else None,
        tolerances=dict(checker=args.tolerance),
        results=report))
    return assert_result(args, report.matches_expected())
