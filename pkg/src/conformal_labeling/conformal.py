"""Randomized conformal p-values against the mislabeled calibration subset.

A test instance receives a small p-value when its uncertainty score is low
relative to the scores of calibration instances the model got wrong.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _rng
from .errors import DegenerateCalibrationWarning, ValidationError

DEGENERATE_CALIBRATION = (
    "calibration set has no mispredicted instances (n0 = 0); "
    "every p-value equals its tie-break uniform"
)


def _as_float_array(values, name):
    if not isinstance(values, np.ndarray):
        # accepts UncertaintyScore objects via __float__
        values = [float(v) for v in values]
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be 1-d")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True)
class CalibrationSet:
    """Labeled calibration scores.

    ``correct[i]`` is True when the model's prediction for instance ``i``
    matched its label.
    """

    scores: np.ndarray
    correct: np.ndarray

    def __post_init__(self):
        scores = _as_float_array(self.scores, "calibration scores")
        correct = np.asarray(self.correct)
        if correct.dtype != np.bool_:
            raise ValidationError("calibration correctness flags must be booleans")
        if scores.size < 1:
            raise ValidationError("calibration set must contain at least one instance")
        if correct.shape != scores.shape:
            raise ValidationError(
                f"{scores.size} calibration scores but {correct.size} correctness flags"
            )
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "correct", correct)

    @property
    def n(self):
        return int(self.scores.size)

    @property
    def n0(self):
        return int(np.count_nonzero(~self.correct))

    @property
    def null_scores(self):
        return self.scores[~self.correct]


@dataclass(frozen=True)
class PValueSet:
    p_values: np.ndarray
    tie_uniforms: np.ndarray
    n0_used: int
    seed: int | None = None
    n_used: int | None = None
    warnings: tuple = field(default=())

    @classmethod
    def from_values(cls, p_values, n0=0, n=None):
        """Wrap bare p-values, e.g. for running a baseline procedure."""
        p = np.asarray(p_values, dtype=np.float64)
        if p.ndim != 1 or p.size == 0:
            raise ValidationError("p-values must be a non-empty 1-d sequence")
        if np.any(~np.isfinite(p)) or np.any(p < 0.0) or np.any(p > 1.0):
            raise ValidationError("p-values must lie in [0, 1]")
        return cls(p, np.full(p.size, np.nan), int(n0), None, n)

    def __len__(self):
        return int(self.p_values.size)


def randomized_p_values(null_scores, test_scores, uniforms):
    """Conformal p-values for explicit tie-break uniforms.

    For each test score ``s`` with ``below`` null scores strictly less than
    ``s`` and ``ties`` equal to it, returns
    ``(below + (1 + ties) * u) / (n0 + 1)``.
    """
    ordered = np.sort(np.asarray(null_scores, dtype=np.float64))
    s = np.asarray(test_scores, dtype=np.float64)
    u = np.asarray(uniforms, dtype=np.float64)
    below = np.searchsorted(ordered, s, side="left")
    ties = np.searchsorted(ordered, s, side="right") - below
    return (below + (1 + ties) * u) / (ordered.size + 1)


def conformal_p_values(cal, test_scores, seed):
    """Conformal p-values for a batch of test scores.

    Parameters
    ----------
    cal : CalibrationSet
    test_scores : sequence of float or UncertaintyScore
    seed : int
        64-bit seed. The tie-break uniform for test index ``j`` depends only
        on ``(seed, j)``.

    Returns
    -------
    PValueSet
    """
    seed = _rng.check_seed(seed)
    s = _as_float_array(test_scores, "test scores")
    if s.size == 0:
        raise ValidationError("test batch is empty")
    notes = ()
    if cal.n0 == 0:
        warnings.warn(DEGENERATE_CALIBRATION, DegenerateCalibrationWarning, stacklevel=2)
        notes = (DEGENERATE_CALIBRATION,)
    u = _rng.tie_uniforms(seed, s.size)
    p = randomized_p_values(cal.null_scores, s, u)
    return PValueSet(p, u, cal.n0, seed, cal.n, notes)
