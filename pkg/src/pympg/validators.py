"""
Invariant rules for tabular stochastic games.

Each validator is a callable `(game, tolerance) -> iterable of Violation`. `VALIDATORS` lists them
in the order they are applied by :func:`pympg.game.validate_game`; shape rules come first and
later rules are skipped for tensors whose shape is already reported as invalid.
"""
import typing

import attr
import numpy as np

__all__ = ['Violation', 'ValidationReport', 'VALIDATORS']


@attr.s(frozen=True)
class Violation:
    """
    A single invariant violation.

    :ivar path: Location in the game, e.g. `('transitions', 0, 3)` for the transition row of \
    state 0 and joint action 3.
    :ivar message: Human readable description.
    """
    path = attr.ib(converter=tuple)
    message = attr.ib()

    @property
    def json_path(self) -> str:
        return str(self.path[0]) + ''.join('[{}]'.format(i) for i in self.path[1:])

    def __str__(self):
        return '{}: {}'.format(self.json_path, self.message)


class ValidationReport(list):
    """
    List of :class:`Violation` s; an empty report means the game is valid.
    """
    @property
    def valid(self) -> bool:
        return not self

    def paths(self) -> typing.List[str]:
        return [v.json_path for v in self]


def valid_discount(game, tolerance):
    if not (0 < game.discount < 1):
        yield Violation(['discount'], 'discount {} not in (0, 1)'.format(game.discount))


def valid_action_counts(game, tolerance):
    if not game.action_counts:
        yield Violation(['action_counts'], 'at least one agent is required')
    for i, n in enumerate(game.action_counts):
        if int(n) != n or n < 1:
            yield Violation(['action_counts', i], 'action count {} is not positive'.format(n))


def _shapes_known(game):
    return game.action_counts and all(int(n) == n and n >= 1 for n in game.action_counts)


def valid_payoffs(game, tolerance):
    if not _shapes_known(game):
        return
    expected = (game.agent_count, game.state_count, game.joint_action_count)
    if game.payoffs.shape != expected:
        yield Violation(['payoffs'], 'shape {} does not match {}'.format(
            game.payoffs.shape, expected))
        return
    for idx in np.argwhere(~np.isfinite(game.payoffs)):
        yield Violation(['payoffs'] + [int(i) for i in idx], 'payoff is not finite')


def valid_transitions(game, tolerance):
    if not _shapes_known(game):
        return
    S, J = game.state_count, game.joint_action_count
    kernel = game.transitions
    if kernel.shape != (S * J, S):
        yield Violation(['transitions'], 'expected {} rows of length {}, got shape {}'.format(
            S * J, S, kernel.shape))
        return
    coo = kernel.tocoo()
    bad = ~np.isfinite(coo.data) | (coo.data < 0) | (coo.data > 1)
    for row, col, value in zip(coo.row[bad], coo.col[bad], coo.data[bad]):
        s, a = divmod(int(row), J)
        yield Violation(
            ['transitions', s, a, int(col)], 'probability {} not in [0, 1]'.format(value))
    sums = np.asarray(kernel.sum(axis=1)).ravel()
    for row in np.flatnonzero(~(np.abs(sums - 1) <= tolerance)):
        s, a = divmod(int(row), J)
        yield Violation(['transitions', s, a], 'row sums to {!r}, not 1'.format(float(sums[row])))


def valid_state_labels(game, tolerance):
    if game.state_labels is None:
        return
    if len(game.state_labels) != game.state_count:
        yield Violation(['state_labels'], '{} labels for {} states'.format(
            len(game.state_labels), game.state_count))
    elif not np.all(np.isfinite(game.state_labels)):
        yield Violation(['state_labels'], 'state labels must be finite reals')


VALIDATORS = [
    ('discount', valid_discount),
    ('action_counts', valid_action_counts),
    ('payoffs', valid_payoffs),
    ('transitions', valid_transitions),
    ('state_labels', valid_state_labels),
]
