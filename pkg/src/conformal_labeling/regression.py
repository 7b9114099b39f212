"""Loss-tolerance extension: a prediction is a null when its loss exceeds epsilon.

Once the calibration nulls are identified the pipeline is the classification
one unchanged.
"""

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .conformal import CalibrationSet, conformal_p_values
from .errors import ValidationError
from .procedures import conformal_labeling_select


class LossKind(str, Enum):
    SQUARED_ERROR = "squared_error"
    ABSOLUTE_ERROR = "absolute_error"
    ZERO_ONE = "zero_one"


@dataclass(frozen=True)
class LossSpec:
    loss_kind: LossKind
    epsilon: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "loss_kind", LossKind(self.loss_kind))
        if not (np.isfinite(self.epsilon) and self.epsilon >= 0.0):
            raise ValidationError(f"epsilon must be a finite nonnegative number, got {self.epsilon!r}")

    def to_dict(self):
        return {"loss_kind": self.loss_kind.value, "epsilon": self.epsilon}


@dataclass(frozen=True)
class RegressionCalibrationRecord:
    truth: float
    prediction: float
    uncertainty: float

    def __post_init__(self):
        for name in ("truth", "prediction", "uncertainty"):
            if not np.isfinite(float(getattr(self, name))):
                raise ValidationError(f"{name} must be finite")

    @classmethod
    def from_interval(cls, truth, lower, upper):
        """Midpoint prediction with the interval width as uncertainty."""
        return cls(truth, (lower + upper) / 2.0, upper - lower)


def loss(spec, y, y_hat):
    """Loss of one prediction (vectorizes over numpy arrays)."""
    kind = spec.loss_kind
    if kind is LossKind.SQUARED_ERROR:
        return (y - y_hat) ** 2
    if kind is LossKind.ABSOLUTE_ERROR:
        return abs(y - y_hat)
    return np.not_equal(y, y_hat).astype(np.float64)


def acceptable(spec, y, y_hat):
    """True where the loss is within tolerance (the alternative holds)."""
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    return np.asarray(loss(spec, y, y_hat)) <= spec.epsilon


def build_regression_calibration(records, spec):
    if len(records) == 0:
        raise ValidationError("regression calibration records are empty")
    y = np.array([float(r.truth) for r in records])
    y_hat = np.array([float(r.prediction) for r in records])
    scores = np.array([float(r.uncertainty) for r in records])
    return CalibrationSet(scores, acceptable(spec, y, y_hat))


def regression_select(records, test_uncertainties, spec, n, alpha, seed):
    """Calibrate on loss-thresholded nulls, then run the conformal labeling rule."""
    cal = build_regression_calibration(records, spec)
    pvals = conformal_p_values(cal, test_uncertainties, seed)
    return replace(conformal_labeling_select(pvals, n, alpha), loss_spec=spec)
