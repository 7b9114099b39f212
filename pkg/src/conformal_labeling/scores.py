"""Uncertainty scores computed from a model's class probabilities or logits.

Every score follows the same orientation: a larger value means the model is
less sure of its prediction.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ValidationError

PROB_SUM_ATOL = 1e-6


class ScoreKind(str, Enum):
    MSP = "msp"
    ENERGY = "energy"
    DOCTOR_ALPHA = "doctor_alpha"
    EXTERNAL = "external"


@dataclass(frozen=True)
class UncertaintyScore:
    value: float
    score_kind: ScoreKind

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValidationError(f"uncertainty score must be finite, got {self.value}")

    def __float__(self):
        return float(self.value)


def check_probabilities(p):
    """Validate a probability vector and return it as a float64 array."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise ValidationError(f"probability vector must be 1-d, got shape {p.shape}")
    if p.size < 2:
        raise ValidationError("probability vector needs at least two classes")
    if not np.all(np.isfinite(p)):
        raise ValidationError("probability vector contains non-finite entries")
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise ValidationError("probability entries must lie in [0, 1]")
    total = p.sum()
    if abs(total - 1.0) > PROB_SUM_ATOL:
        raise ValidationError(f"probabilities sum to {total!r}, expected 1")
    return p


def check_logits(z):
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1 or z.size == 0:
        raise ValidationError("logit vector must be a non-empty 1-d sequence")
    if not np.all(np.isfinite(z)):
        raise ValidationError("logit vector contains non-finite entries")
    return z


def msp_score(p):
    """One minus the maximum softmax probability."""
    p = check_probabilities(p)
    return UncertaintyScore(float(1.0 - p.max()), ScoreKind.MSP)


def energy_score(z):
    """Log-sum-exp of the logits.

    The maximum is subtracted before exponentiating, so arbitrarily large
    logits do not overflow. The literal formula is used; pass the result
    through :func:`negate` for the opposite orientation.
    """
    z = check_logits(z)
    top = z.max()
    value = top + np.log(np.exp(z - top).sum())
    return UncertaintyScore(float(value), ScoreKind.ENERGY)


def doctor_alpha_score(p):
    """Gini impurity ``1 - sum(p**2)``.

    This is the DOCTOR-alpha confidence ``sum(p**2)`` reflected so that
    flat distributions score high and one-hot distributions score zero.
    """
    p = check_probabilities(p)
    return UncertaintyScore(float(1.0 - np.dot(p, p)), ScoreKind.DOCTOR_ALPHA)


def negate(score):
    return UncertaintyScore(-score.value, score.score_kind)


SCORE_FUNCTIONS = {
    ScoreKind.MSP: msp_score,
    ScoreKind.ENERGY: energy_score,
    ScoreKind.DOCTOR_ALPHA: doctor_alpha_score,
}

# Which raw model output each score consumes.
SCORE_INPUTS = {
    ScoreKind.MSP: "prob",
    ScoreKind.ENERGY: "logit",
    ScoreKind.DOCTOR_ALPHA: "prob",
}


def score_rows(rows, kind, negate_score=False):
    """Score a 2-d array of per-instance outputs; returns a float64 array."""
    kind = ScoreKind(kind)
    fn = SCORE_FUNCTIONS[kind]
    out = np.array([fn(row).value for row in np.asarray(rows, dtype=np.float64)])
    return -out if negate_score else out
