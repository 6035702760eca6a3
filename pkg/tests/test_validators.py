import pytest
import numpy as np

from pympg.game import TabularStochasticGame, validate_game
from pympg.validators import Violation, ValidationReport


def _game(**kw):
    doc = dict(
        payoffs=[[[1.0, 0.0]]],
        transitions=[[[1.0], [1.0]]],
        discount=0.5,
        action_counts=[2])
    doc.update(kw)
    return TabularStochasticGame(**doc)


def test_Violation():
    v = Violation(['transitions', 0, 3], 'row sums to 0.9, not 1')
    assert v.json_path == 'transitions[0][3]'
    assert str(v).startswith('transitions[0][3]: ')
    assert Violation(('discount',), 'x').json_path == 'discount'


def test_valid_game():
    report = validate_game(_game())
    assert isinstance(report, ValidationReport)
    assert report.valid


@pytest.mark.parametrize(
    'kw,path',
    [
        (dict(discount=1.0), 'discount'),
        (dict(discount=0.0), 'discount'),
        (dict(transitions=[[[1.0], [0.9]]]), 'transitions[0][1]'),
        (dict(transitions=[[[1.5], [1.0]]]), 'transitions[0][0][0]'),
        (dict(payoffs=[[[1.0, np.nan]]]), 'payoffs[0][0][1]'),
        (dict(payoffs=[[[1.0, 0.0, 2.0]]]), 'payoffs'),
        (dict(state_labels=[0.0, 1.0]), 'state_labels'),
        (dict(state_labels=[np.inf]), 'state_labels'),
    ]
)
def test_violations(kw, path):
    report = validate_game(_game(**kw))
    assert not report.valid
    assert path in report.paths()


def test_validate_log(mocker):
    log = mocker.Mock()
    assert not _game(discount=2).validate(log=log)
    assert log.warning.called
    with pytest.raises(ValueError):
        _game(discount=2).validate()
