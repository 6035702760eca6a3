"""
Shared constants and helpers: numerical defaults, the joint-action index law and conversion of
numerical results to JSON-serializable data.

Joint actions are flattened with a mixed-radix encoding where agent 0 varies fastest, i.e. for
action counts ``(n_0, n_1, ..., n_k)`` the profile ``(a_0, a_1, ..., a_k)`` has index

    a_0 + n_0 * a_1 + n_0 * n_1 * a_2 + ...

All modules (and the JSON game format) share this law.
"""
import math
import json
import typing
import decimal
import hashlib
import functools

import numpy as np

__all__ = [
    'STRUCTURAL_TOLERANCE', 'SOLVER_TOLERANCE', 'CHECKER_TOLERANCE', 'FD_STEP',
    'DIRECT_SOLVE_MAX_STATES', 'MAX_ITERATIONS', 'FORMAT_VERSION',
    'ShapeError', 'ConvergenceError',
    'joint_action_count', 'encode_joint_action', 'decode_joint_action', 'joint_action_table',
    'joint_axes', 'first_argmax', 'draw_index', 'to_json', 'digest']

STRUCTURAL_TOLERANCE = 1e-12
SOLVER_TOLERANCE = 1e-10
CHECKER_TOLERANCE = 1e-9
FD_STEP = 1e-4
# Policy evaluation switches from a direct linear solve to iteration above this many states.
DIRECT_SOLVE_MAX_STATES = 512
MAX_ITERATIONS = 100000
FORMAT_VERSION = 1

ActionCounts = typing.Sequence[int]


class ShapeError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


def joint_action_count(action_counts: ActionCounts) -> int:
    return int(math.prod(action_counts))


def encode_joint_action(actions: typing.Sequence[int], action_counts: ActionCounts) -> int:
    """
    Map an agent-action tuple to its flat joint-action index.

    .. code-block:: python

        >>> encode_joint_action((1, 2), (3, 4))
        7
    """
    if len(actions) != len(action_counts):
        raise ShapeError('expected {} actions, got {}'.format(len(action_counts), len(actions)))
    for i, (a, n) in enumerate(zip(actions, action_counts)):
        if not 0 <= a < n:
            raise ShapeError('action {} of agent {} out of range [0, {})'.format(a, i, n))
    return int(np.ravel_multi_index(tuple(actions), tuple(action_counts), order='F'))


def decode_joint_action(index: int, action_counts: ActionCounts) -> typing.Tuple[int, ...]:
    """
    Inverse of :func:`encode_joint_action`.
    """
    if not 0 <= index < joint_action_count(action_counts):
        raise ShapeError('joint action {} out of range'.format(index))
    return tuple(int(a) for a in np.unravel_index(index, tuple(action_counts), order='F'))


@functools.lru_cache(maxsize=64)
def _joint_action_table(action_counts: tuple) -> np.ndarray:
    res = np.array(
        np.unravel_index(np.arange(joint_action_count(action_counts)), action_counts, order='F'),
        dtype=int).T
    res.setflags(write=False)
    return res


def joint_action_table(action_counts: ActionCounts) -> np.ndarray:
    """
    :return: Read-only integer array of shape `(J, agent_count)`; row `a` is the decoded profile \
    of flat joint action `a`.
    """
    return _joint_action_table(tuple(int(n) for n in action_counts))


def joint_axes(arr: np.ndarray, action_counts: ActionCounts) -> np.ndarray:
    """
    View the trailing flat joint-action axis of `arr` as one axis per agent (agent 0 first).
    """
    lead = arr.shape[:-1]
    k = len(action_counts)
    res = arr.reshape(lead + tuple(reversed(tuple(action_counts))))
    n = len(lead)
    return res.transpose(tuple(range(n)) + tuple(range(n + k - 1, n - 1, -1)))


def first_argmax(values: np.ndarray, tolerance: float = 0.0) -> typing.Tuple[int, ...]:
    """
    Index of the maximum of `values`, where entries within `tolerance` of the maximum count as
    ties and ties go to the lowest flat (C-order) index.
    """
    values = np.asarray(values)
    flat = values.ravel()
    i = int(np.flatnonzero(flat >= flat.max() - tolerance)[0])
    return tuple(int(j) for j in np.unravel_index(i, values.shape))


def draw_index(rng: np.random.Generator, probabilities: np.ndarray) -> int:
    """
    Draw an index with the given (unnormalized) probabilities from a single uniform variate.
    """
    cumulative = np.cumsum(probabilities)
    i = int(np.searchsorted(cumulative, rng.random() * cumulative[-1], side='right'))
    return min(i, len(probabilities) - 1)


def to_json(s):
    if isinstance(s, (list, tuple)):
        return [to_json(ss) for ss in s]
    if isinstance(s, dict):
        return {str(k): to_json(v) for k, v in s.items()}
    if isinstance(s, np.ndarray):
        return to_json(s.tolist())
    if isinstance(s, (np.bool_, bool)):
        return bool(s)
    if isinstance(s, np.integer):
        return int(s)
    if isinstance(s, (np.floating, decimal.Decimal)):
        return float(s)
    if hasattr(s, 'as_dict'):
        return to_json(s.as_dict())
    if s is None:
        return None
    if isinstance(s, (str, int, float)):
        return s
    return str(s)


def digest(obj) -> str:
    """
    SHA-256 hex digest of `bytes` or of the canonical JSON serialization of `obj`.
    """
    if not isinstance(obj, bytes):
        obj = json.dumps(to_json(obj), sort_keys=True, separators=(',', ':')).encode('utf8')
    return hashlib.sha256(obj).hexdigest()
