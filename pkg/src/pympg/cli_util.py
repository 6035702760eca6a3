"""
Functionality to use in commandline tools which read game and policy documents and write reports.

A game document is a JSON object

.. code-block:: json

    {
        "format_version": 1,
        "agent_count": 1,
        "state_count": 1,
        "action_counts": [1],
        "discount": 0.5,
        "payoffs": [[[1.0]]],
        "transitions": [[[1.0]]]
    }

with optional `state_labels` (one real per state) and `potential` (`[state][joint_action]`).
Payoffs are nested as `[agent][state][joint_action]`, transitions as
`[state][joint_action][next_state]`, and joint actions are indexed with agent 0 varying fastest.
"""
import json
import typing
import pathlib
import argparse
import datetime

import attr
import numpy as np
from clldutils import jsonlib
from clldutils.clilib import PathType

from pympg import __version__
from pympg.util import FORMAT_VERSION, to_json, digest, joint_action_count
from pympg.game import TabularStochasticGame, JointPolicy, validate_game
from pympg.potential import OneShotPotential, verify_potential
from pympg.equilibrium import DeterministicJointPolicy

__all__ = [
    'EXIT_OK', 'EXIT_USAGE', 'EXIT_INPUT', 'EXIT_ASSERT', 'EXIT_CONVERGENCE',
    'GameFileError', 'ReportDocument',
    'parse_game_file', 'write_game_file', 'parse_policy_file', 'inputs_digest',
    'add_game', 'add_tolerance', 'add_output', 'add_seed', 'emit_report', 'assert_result',
]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_ASSERT = 3
EXIT_CONVERGENCE = 4

REQUIRED_KEYS = [
    'format_version', 'agent_count', 'state_count', 'action_counts', 'discount', 'payoffs',
    'transitions']


class GameFileError(ValueError):
    """
    :ivar category: One of `io`, `schema` or `validation`.
    :ivar diagnostics: List of `(json_path, message)` pairs.
    """
    categories = ('io', 'schema', 'validation')

    def __init__(self, category: str, diagnostics: typing.List[typing.Tuple[str, str]], path=None):
        assert category in self.categories
        self.category = category
        self.diagnostics = list(diagnostics)
        self.path = path
        super().__init__('{} error in {}: {}'.format(
            category,
            path or 'document',
            '; '.join('{}: {}'.format(p, m) for p, m in self.diagnostics)))


def _read_json(path) -> dict:
    path = pathlib.Path(path)
    try:
        doc = jsonlib.load(path)
    except OSError as e:
        raise GameFileError('io', [('', str(e))], path=path)
    except json.JSONDecodeError as e:
        raise GameFileError('schema', [('', 'invalid JSON: {}'.format(e))], path=path)
    if not isinstance(doc, dict):
        raise GameFileError('schema', [('', 'expected a JSON object')], path=path)
    if doc.get('format_version') != FORMAT_VERSION:
        raise GameFileError(
            'schema',
            [('format_version', 'unsupported format version {!r}'.format(
                doc.get('format_version')))],
            path=path)
    return doc


def _array(doc, key, shape, path) -> np.ndarray:
    try:
        res = np.array(doc[key], dtype=float)
    except (TypeError, ValueError):
        raise GameFileError('schema', [(key, 'expected nested arrays of numbers')], path=path)
    if res.shape != tuple(shape):
        raise GameFileError(
            'schema', [(key, 'expected shape {}, got {}'.format(tuple(shape), res.shape))],
            path=path)
    return res


def parse_game_file(
        path: typing.Union[str, pathlib.Path],
) -> typing.Tuple[TabularStochasticGame, typing.Optional[OneShotPotential]]:
    """
    Read and validate a game document.

    :raises GameFileError: with category `io` if the file cannot be read, `schema` if keys are \
    missing or tensors have the wrong arity, `validation` if the game violates an invariant.
    """
    doc = _read_json(path)
    missing = [k for k in REQUIRED_KEYS if k not in doc]
    if missing:
        raise GameFileError('schema', [(k, 'missing required key') for k in missing], path=path)

    counts = doc['action_counts']
    if not isinstance(counts, list) or not all(
            isinstance(n, int) and not isinstance(n, bool) for n in counts):
        raise GameFileError(
            'schema', [('action_counts', 'expected an array of integers')], path=path)
    for key in ['agent_count', 'state_count']:
        if not isinstance(doc[key], int) or doc[key] < 1:
            raise GameFileError('schema', [(key, 'expected a positive integer')], path=path)
    if doc['agent_count'] != len(counts):
        raise GameFileError(
            'schema', [('action_counts', 'expected {} entries'.format(doc['agent_count']))],
            path=path)
    if not isinstance(doc['discount'], (int, float)) or isinstance(doc['discount'], bool):
        raise GameFileError('schema', [('discount', 'expected a number')], path=path)

    n, S, J = len(counts), doc['state_count'], joint_action_count(counts)
    payoffs = _array(doc, 'payoffs', (n, S, J), path)
    transitions = _array(doc, 'transitions', (S, J, S), path)
    labels = _array(doc, 'state_labels', (S,), path) if 'state_labels' in doc else None

    game = TabularStochasticGame(
        payoffs=payoffs,
        transitions=transitions,
        discount=doc['discount'],
        action_counts=counts,
        state_labels=labels)
    report = validate_game(game)
    if not report.valid:
        raise GameFileError('validation', [(v.json_path, v.message) for v in report], path=path)

    potential = None
    if 'potential' in doc:
        table = _array(doc, 'potential', (S, J), path)
        potential = OneShotPotential(table, verification_residual=verify_potential(game, table))
    return game, potential


def write_game_file(
        game: TabularStochasticGame,
        path: typing.Union[str, pathlib.Path],
        potential: typing.Optional[OneShotPotential] = None) -> pathlib.Path:
    doc = dict(
        format_version=FORMAT_VERSION,
        agent_count=game.agent_count,
        state_count=game.state_count,
        action_counts=list(game.action_counts),
        discount=game.discount,
        payoffs=game.payoffs,
        transitions=game.dense_transitions())
    if game.state_labels is not None:
        doc['state_labels'] = game.state_labels
    if potential is not None:
        doc['potential'] = potential.table
    path = pathlib.Path(path)
    jsonlib.dump(to_json(doc), path, indent=2)
    return path


def parse_policy_file(path: typing.Union[str, pathlib.Path], game: TabularStochasticGame) \
        -> JointPolicy:
    """
    Read a policy document: either `{"tables": [...]}` with one `[state][action]` table per agent,
    or `{"choices": [...]}` with one `[state]` array of action indices per agent.
    """
    doc = _read_json(path)
    if 'tables' not in doc and 'choices' not in doc:
        raise GameFileError('schema', [('tables', 'missing required key')], path=path)
    key = 'tables' if 'tables' in doc else 'choices'
    try:
        if key == 'tables':
            policy = JointPolicy(doc[key])
        else:
            policy = DeterministicJointPolicy(doc[key]).to_joint_policy(game.action_counts)
        policy.check(game)
    except (TypeError, ValueError) as e:
        raise GameFileError('schema', [(key, str(e))], path=path)
    violations = policy.violations()
    if violations:
        raise GameFileError(
            'validation', [tuple(v.split(' ', 1)) for v in violations], path=path)
    return policy


def _now():
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


@attr.s
class ReportDocument:
    """
    The versioned JSON result document of a command. Apart from `created`, a report is a pure
    function of the command's inputs and seed.
    """
    command = attr.ib()
    results = attr.ib(converter=to_json)
    inputs_digest = attr.ib(default=None)
    tolerances = attr.ib(default=attr.Factory(dict), converter=to_json)
    seed = attr.ib(default=None)
    toolkit_version = attr.ib(default=None)
    format_version = attr.ib(default=FORMAT_VERSION)
    created = attr.ib(default=attr.Factory(_now), eq=False)

    def __attrs_post_init__(self):
        if self.toolkit_version is None:
            self.toolkit_version = __version__

    def as_dict(self) -> dict:
        return dict(
            format_version=self.format_version,
            command=self.command,
            toolkit_version=self.toolkit_version,
            inputs_digest=self.inputs_digest,
            seed=self.seed,
            tolerances=self.tolerances,
            results=self.results,
            created=self.created)

    def dumps(self) -> str:
        return json.dumps(self.as_dict(), indent=2)

    def write(self, path: typing.Union[str, pathlib.Path]) -> pathlib.Path:
        path = pathlib.Path(path)
        jsonlib.dump(self.as_dict(), path, indent=2)
        return path

    @classmethod
    def from_file(cls, path: typing.Union[str, pathlib.Path]) -> 'ReportDocument':
        return cls(**jsonlib.load(path))


def inputs_digest(*paths) -> str:
    return digest([digest(pathlib.Path(p).read_bytes()) for p in paths])


def add_game(parser: argparse.ArgumentParser):
    """
    Adds a positional argument named `game` to the parser to specify a game document.
    """
    parser.add_argument(
        'game',
        metavar='GAME',
        help="Path to a JSON game document.",
        type=PathType(type='file', must_exist=False),
    )


def add_tolerance(parser: argparse.ArgumentParser, default: float):
    parser.add_argument(
        '--tolerance',
        help='Absolute numerical tolerance (default: %(default)s).',
        type=float,
        default=default,
    )


def add_seed(parser: argparse.ArgumentParser, default: int = 0):
    parser.add_argument(
        '--seed',
        help='Seed of the random number generator (default: %(default)s).',
        type=int,
        default=default,
    )


def add_output(parser: argparse.ArgumentParser):
    parser.add_argument(
        '--out',
        metavar='PATH',
        help='Path to write the JSON report to (default: print to stdout).',
        type=PathType(type='file', must_exist=False),
        default=None,
    )
    parser.add_argument(
        '--assert',
        dest='assert_',
        help='Exit with status {} if the command\'s verdict is negative.'.format(EXIT_ASSERT),
        action='store_true',
        default=False,
    )


def emit_report(args: argparse.Namespace, report: ReportDocument) -> ReportDocument:
    if args.out:
        report.write(args.out)
        args.log.info('report written to {}'.format(args.out))
    else:
        print(report.dumps())
    return report


def assert_result(args: argparse.Namespace, passed: bool) -> int:
    if args.assert_ and not passed:
        args.log.error('assertion failed')
        return EXIT_ASSERT
    return EXIT_OK
