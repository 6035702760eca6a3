import json

import pytest
import numpy as np

from pympg.util import *


@pytest.mark.parametrize(
    'actions,counts,index',
    [
        ((0, 0), (2, 2), 0),
        ((1, 0), (2, 2), 1),
        ((0, 1), (2, 2), 2),
        ((1, 2), (3, 4), 7),
        ((2, 0, 1), (3, 2, 2), 8),
    ]
)
def test_encode_joint_action(actions, counts, index):
    assert encode_joint_action(actions, counts) == index
    assert decode_joint_action(index, counts) == actions


def test_encode_joint_action_errors():
    with pytest.raises(ShapeError):
        encode_joint_action((0,), (2, 2))
    with pytest.raises(ShapeError):
        encode_joint_action((2, 0), (2, 2))
    with pytest.raises(ShapeError):
        decode_joint_action(4, (2, 2))


def test_joint_action_table():
    table = joint_action_table((2, 3))
    assert table.shape == (6, 2)
    assert all(
        encode_joint_action(tuple(row), (2, 3)) == i for i, row in enumerate(table))
    with pytest.raises(ValueError):
        table[0, 0] = 5


def test_joint_axes():
    counts = (2, 3)
    arr = np.arange(2 * 6).reshape(2, 6)
    res = joint_axes(arr, counts)
    assert res.shape == (2, 2, 3)
    for a in range(6):
        a0, a1 = decode_joint_action(a, counts)
        assert res[1, a0, a1] == arr[1, a]


def test_first_argmax():
    assert first_argmax(np.array([[0, 3], [3, 1]])) == (0, 1)
    assert first_argmax(np.array([1.0, 2.0, 2.0 + 1e-12]), tolerance=1e-9) == (1,)
    assert first_argmax(np.array([1.0, 2.0, 2.1]), tolerance=1e-9) == (2,)


def test_draw_index():
    rng = np.random.default_rng(1)
    draws = [draw_index(rng, np.array([0.0, 1.0, 0.0])) for _ in range(20)]
    assert set(draws) == {1}
    counts = np.bincount([draw_index(rng, np.array([0.25, 0.75])) for _ in range(2000)])
    assert 0.2 < counts[0] / 2000 < 0.3


def test_to_json():
    res = to_json(dict(a=np.arange(2), b=np.float64(0.5), c=np.bool_(True), d=(np.int64(3),)))
    assert res == dict(a=[0, 1], b=0.5, c=True, d=[3])
    assert json.dumps(res)


def test_digest():
    assert digest(dict(a=1, b=[1, 2])) == digest({'b': [1, 2], 'a': 1})
    assert digest(b'abc') != digest('abc')
    assert len(digest(np.zeros(3))) == 64
