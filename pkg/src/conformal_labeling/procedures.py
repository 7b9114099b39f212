"""Step-up selection rules over a batch of p-values.

All four procedures share one step-up core: sort the p-values, find the
largest rank ``j`` whose ordered p-value is at most ``level * j / m``, and
select every p-value at or below the one at that rank.
"""

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .conformal import PValueSet
from .errors import DegenerateEstimatorError, LevelCappedWarning, ValidationError

LEVEL_CAP = 1.0 - 1e-12


class ProcedureKind(str, Enum):
    CONFORMAL_LABELING = "conformal_labeling"
    BH = "bh"
    STOREY_BH = "storey_bh"
    QUANTILE_BH = "quantile_bh"


def check_alpha(alpha):
    if not (isinstance(alpha, (int, float, np.floating)) and 0.0 < alpha < 1.0):
        raise ValidationError(f"alpha must lie strictly inside (0, 1), got {alpha!r}")
    return float(alpha)


@dataclass(frozen=True)
class ProcedureConfig:
    kind: ProcedureKind
    alpha: float
    lam: float | None = None
    k0: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ProcedureKind(self.kind))
        check_alpha(self.alpha)
        if (self.kind is ProcedureKind.STOREY_BH) != (self.lam is not None):
            raise ValidationError("lambda is required for storey_bh and only for it")
        if (self.kind is ProcedureKind.QUANTILE_BH) != (self.k0 is not None):
            raise ValidationError("k0 is required for quantile_bh and only for it")
        if self.lam is not None and not 0.0 < self.lam < 1.0:
            raise ValidationError(f"lambda must lie in (0, 1), got {self.lam!r}")
        if self.k0 is not None and (isinstance(self.k0, bool) or int(self.k0) != self.k0 or self.k0 < 1):
            raise ValidationError(f"k0 must be a positive integer, got {self.k0!r}")

    def to_dict(self):
        out = {"kind": self.kind.value, "alpha": self.alpha}
        if self.lam is not None:
            out["lambda"] = self.lam
        if self.k0 is not None:
            out["k0"] = int(self.k0)
        return out


@dataclass(frozen=True)
class SelectionOutcome:
    """Result of a selection procedure.

    ``selected`` holds ascending test indices; it is exactly the set of
    p-values at or below ``realized_threshold`` and has ``cutoff_index``
    members.
    """

    selected: np.ndarray
    cutoff_index: int
    realized_threshold: float
    config: ProcedureConfig
    n_used: int | None = None
    n0_used: int | None = None
    pi0_estimate: float | None = None
    effective_level: float | None = None
    warnings: tuple = field(default=())
    loss_spec: object = None

    def to_dict(self):
        return {
            "selected": [int(j) for j in self.selected],
            "cutoff_index": self.cutoff_index,
            "realized_threshold": self.realized_threshold,
            "config": self.config.to_dict(),
            "n_used": self.n_used,
            "n0_used": self.n0_used,
            "pi0_estimate": self.pi0_estimate,
            "effective_level": self.effective_level,
            "warnings": list(self.warnings),
            "loss_spec": None if self.loss_spec is None else self.loss_spec.to_dict(),
        }


def _p_array(pvals):
    if isinstance(pvals, PValueSet):
        return pvals.p_values
    return PValueSet.from_values(pvals).p_values


def step_up(p, level):
    """Return ``(cutoff_index, realized_threshold, selected)`` for one level.

    The threshold at rank ``j`` is ``level * j / m``; ``level`` may exceed 1.
    """
    p = np.asarray(p, dtype=np.float64)
    m = p.size
    ordered = np.sort(p, kind="stable")
    passing = np.flatnonzero(ordered <= level * np.arange(1, m + 1) / m)
    if passing.size == 0:
        return 0, 0.0, np.empty(0, dtype=np.intp)
    cutoff = int(passing[-1]) + 1
    threshold = float(ordered[cutoff - 1])
    return cutoff, threshold, np.flatnonzero(p <= threshold)


def _outcome(pvals, level, config, **extra):
    cutoff, threshold, selected = step_up(_p_array(pvals), level)
    notes = tuple(pvals.warnings) if isinstance(pvals, PValueSet) else ()
    notes += extra.pop("warnings", ())
    n0 = pvals.n0_used if isinstance(pvals, PValueSet) else None
    extra.setdefault("n0_used", n0)
    return SelectionOutcome(selected, cutoff, threshold, config,
                            effective_level=float(level), warnings=notes, **extra)


def conformal_labeling_level(alpha, n, n0):
    """BH-equivalent level ``alpha * (n + 1) / (n0 + 1)``."""
    return alpha * (n + 1) / (n0 + 1)


def conformal_labeling_select(pvals, n, alpha):
    """Step-up selection with rank thresholds ``alpha * j * (n+1) / (m * (n0+1))``.

    ``n`` is the full calibration size; ``n0`` is taken from ``pvals``.
    """
    alpha = check_alpha(alpha)
    n0 = int(pvals.n0_used)
    if n < n0 or n < 1:
        raise ValidationError(f"calibration size n={n} is smaller than n0={n0}")
    level = conformal_labeling_level(alpha, n, n0)
    config = ProcedureConfig(ProcedureKind.CONFORMAL_LABELING, alpha)
    return _outcome(pvals, level, config, n_used=int(n), n0_used=n0)


def bh_select(pvals, alpha):
    """Benjamini-Hochberg step-up at level ``alpha``."""
    alpha = check_alpha(alpha)
    return _outcome(pvals, alpha, ProcedureConfig(ProcedureKind.BH, alpha))


def _clip_pi0(raw, m):
    return float(min(1.0, max(raw, 1.0 / m)))


def storey_pi0(pvals, lam):
    """Storey's null-proportion estimate, clipped to ``[1/m, 1]``."""
    if not 0.0 < lam < 1.0:
        raise ValidationError(f"lambda must lie in (0, 1), got {lam!r}")
    p = _p_array(pvals)
    m = p.size
    raw = (1 + np.count_nonzero(p >= lam)) / (m * (1.0 - lam))
    return _clip_pi0(raw, m)


def quantile_pi0(pvals, k0):
    """Quantile null-proportion estimate ``(m - k0 + 1) / (m * (1 - p_(k0)))``, clipped."""
    p = _p_array(pvals)
    m = p.size
    if isinstance(k0, bool) or int(k0) != k0 or not 1 <= k0 <= m:
        raise ValidationError(f"k0 must be an integer in [1, {m}], got {k0!r}")
    k0 = int(k0)
    pk = np.partition(p, k0 - 1)[k0 - 1]
    if pk >= 1.0:
        raise DegenerateEstimatorError(f"p_({k0}) = 1, quantile estimator is undefined")
    raw = (m - k0 + 1) / (m * (1.0 - pk))
    return _clip_pi0(raw, m)


def adaptive_bh_select(pvals, alpha, pi0, config=None):
    """BH at level ``alpha / pi0``, capped just below 1."""
    alpha = check_alpha(alpha)
    if not (math.isfinite(pi0) and 0.0 < pi0 <= 1.0):
        raise ValidationError(f"pi0 must lie in (0, 1], got {pi0!r}")
    level = alpha / pi0
    notes = ()
    if level >= 1.0:
        msg = f"effective level alpha/pi0 = {level:.6g} capped at {LEVEL_CAP!r}"
        warnings.warn(msg, LevelCappedWarning, stacklevel=2)
        level = LEVEL_CAP
        notes = (msg,)
    if config is None:
        config = ProcedureConfig(ProcedureKind.BH, alpha)
    return _outcome(pvals, level, config, pi0_estimate=float(pi0), warnings=notes)


def storey_bh_select(pvals, alpha, lam):
    config = ProcedureConfig(ProcedureKind.STOREY_BH, alpha, lam=float(lam))
    return adaptive_bh_select(pvals, alpha, storey_pi0(pvals, lam), config)


def quantile_bh_select(pvals, alpha, k0):
    config = ProcedureConfig(ProcedureKind.QUANTILE_BH, alpha, k0=int(k0))
    return adaptive_bh_select(pvals, alpha, quantile_pi0(pvals, k0), config)


def run_procedure(pvals, config, n=None):
    """Dispatch on ``config.kind``.

    ``n`` defaults to the calibration size stored on ``pvals``; it is only
    used by the conformal labeling rule.
    """
    kind = config.kind
    if kind is ProcedureKind.CONFORMAL_LABELING:
        if n is None:
            n = pvals.n_used
        if n is None:
            raise ValidationError("conformal labeling needs the calibration size n")
        return conformal_labeling_select(pvals, n, config.alpha)
    if kind is ProcedureKind.BH:
        return bh_select(pvals, config.alpha)
    if kind is ProcedureKind.STOREY_BH:
        return storey_bh_select(pvals, config.alpha, config.lam)
    return quantile_bh_select(pvals, config.alpha, config.k0)
