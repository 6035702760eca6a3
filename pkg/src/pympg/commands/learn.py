"""
Run independent projected stochastic gradient ascent on game <GAME> and write the payoff/action
trace as CSV.
"""
from clldutils.clilib import PathType, ParserError

from pympg.learning import LearnerConfig, run_psga
from pympg.cli_util import (
    add_game, add_seed, add_output, parse_game_file, inputs_digest, ReportDocument, emit_report,
    assert_result,
)


def add_learner(parser):
    parser.add_argument(
        '--eta', help='learning rate (default: %(default)s)', type=float, default=0.01)
    parser.add_argument('--batch', help='batch size T (default: %(default)s)', type=int, default=8)
    parser.add_argument(
        '--iters', help='number of iterations (default: %(default)s)', type=int, default=1000)
    parser.add_argument(
        '--gap-every',
        help='stride of Nash gap evaluation (default: %(default)s)',
        type=int,
        default=100)
    parser.add_argument(
        '--trace',
        metavar='PATH',
        help='Path to write the CSV trace to.',
        type=PathType(type='file', must_exist=False),
        default=None)
    add_seed(parser)


def learner_config(args) -> LearnerConfig:
    if args.eta < 0 or args.batch < 1 or args.iters < 1 or args.gap_every < 1:
        raise ParserError('need --eta >= 0 and positive --batch, --iters and --gap-every')
    return LearnerConfig(
        learning_rate=args.eta,
        batch_length=args.batch,
        iterations=args.iters,
        seed=args.seed,
        gap_check_every=args.gap_every)


def register(parser):
    add_game(parser)
    add_learner(parser)
    parser.add_argument(
        '--epsilon',
        help='With --assert: required bound on the final Nash gap (default: %(default)s).',
        type=float,
        default=0.1)
    add_output(parser)


def run(args):
    game, _ = parse_game_file(args.game)
    config = learner_config(args)
    trace = run_psga(game, config, log=args.log)
    if args.trace:
        trace.write_csv(args.trace)
        args.log.info('trace written to {}'.format(args.trace))
    final_gap = trace.nash_gaps[-1] if trace.nash_gaps else None
    emit_report(args, ReportDocument(
        command='learn',
        inputs_digest=inputs_digest(args.game),
        seed=args.seed,
        results=dict(
            config=dict(
                learning_rate=config.learning_rate,
                batch_length=config.batch_length,
                iterations=config.iterations,
                gap_check_every=config.gap_check_every),
            logged_iterations=trace.logged_iterations,
            nash_gaps=trace.nash_gaps,
            final_policy=trace.final_policy)))
    return assert_result(args, final_gap is not None and final_gap <= args.epsilon)
