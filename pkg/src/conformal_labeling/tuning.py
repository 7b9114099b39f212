"""Bootstrap choice of the Storey ``lambda`` and quantile ``k0`` hyperparameters.

For each candidate on a grid the positive-FDR estimate is computed on the
observed p-values and on ``B`` bootstrap resamples; the candidate whose
bootstrap estimates sit closest (in mean squared error) to the smallest
observed estimate over the grid wins.
"""

from dataclasses import dataclass

import numpy as np

from . import _rng
from .conformal import PValueSet
from .errors import ValidationError
from .procedures import (
    ProcedureKind,
    _clip_pi0,
    check_alpha,
    quantile_bh_select,
    storey_bh_select,
)

DEFAULT_BOOTSTRAP = 200
DEFAULT_STOREY_GRID = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)

# SeedSequence label separating bootstrap draws from other streams.
_BOOTSTRAP_STREAM = 0xB0075

KINDS = ("storey", "quantile")


def default_grid(kind, m):
    if kind == "storey":
        return DEFAULT_STOREY_GRID
    # ceil(d * m / 10) in exact integer arithmetic
    return tuple(sorted({-(-d * m // 10) for d in range(1, 10)} - {0}))


@dataclass(frozen=True)
class TuningConfig:
    grid: tuple | None = None
    bootstrap_replicates: int = DEFAULT_BOOTSTRAP
    gamma: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.grid is not None:
            if len(self.grid) == 0:
                raise ValidationError("hyperparameter grid is empty")
            object.__setattr__(self, "grid", tuple(self.grid))
        if isinstance(self.bootstrap_replicates, bool) or int(self.bootstrap_replicates) < 1:
            raise ValidationError("bootstrap_replicates must be a positive integer")
        if self.gamma is not None and not 0.0 < self.gamma < 1.0:
            raise ValidationError(f"gamma must lie in (0, 1), got {self.gamma!r}")
        object.__setattr__(self, "seed", _rng.check_seed(self.seed))


def _as_p(pvals):
    return pvals.p_values if isinstance(pvals, PValueSet) else PValueSet.from_values(pvals).p_values


def pfdr_estimate(pvals, pi0, gamma):
    """Positive-FDR estimate of the rejection region ``[0, gamma]``.

    ``pi0 * gamma / (Pr(p <= gamma) * (1 - (1 - gamma)**m))`` where the
    empirical probability is floored at ``1/m``.
    """
    if not 0.0 < gamma < 1.0:
        raise ValidationError(f"gamma must lie in (0, 1), got {gamma!r}")
    if not 0.0 < pi0 <= 1.0:
        raise ValidationError(f"pi0 must lie in (0, 1], got {pi0!r}")
    p = _as_p(pvals)
    m = p.size
    frac = max(np.count_nonzero(p <= gamma), 1) / m
    return float(pi0 * gamma / (frac * (1.0 - (1.0 - gamma) ** m)))


def _check_grid(kind, grid, m):
    if kind == "storey":
        for lam in grid:
            if not 0.0 < lam < 1.0:
                raise ValidationError(f"storey grid value {lam!r} outside (0, 1)")
        return np.array(sorted(float(v) for v in grid))
    for k0 in grid:
        if isinstance(k0, bool) or int(k0) != k0 or not 1 <= k0 <= m:
            raise ValidationError(f"quantile grid value {k0!r} is not a rank in [1, {m}]")
    return np.array(sorted(int(v) for v in grid))


def _pi0_rows(kind, ordered, value):
    """Clipped null-proportion estimates for each row of sorted p-values."""
    m = ordered.shape[1]
    if kind == "storey":
        raw = (1 + np.count_nonzero(ordered >= value, axis=1)) / (m * (1.0 - value))
    else:
        pk = ordered[:, value - 1]
        with np.errstate(divide="ignore"):
            raw = np.where(pk < 1.0, (m - value + 1) / (m * (1.0 - np.minimum(pk, 1.0))), np.inf)
    return np.clip(raw, 1.0 / m, 1.0)


def _pfdr_rows(ordered, pi0, gamma):
    m = ordered.shape[1]
    frac = np.maximum(np.count_nonzero(ordered <= gamma, axis=1), 1) / m
    return pi0 * gamma / (frac * (1.0 - (1.0 - gamma) ** m))


def bootstrap_mse(pvals, kind, cfg, gamma=None):
    """Return ``(grid, mse)`` arrays, grid ascending."""
    if kind not in KINDS:
        raise ValidationError(f"kind must be one of {KINDS}, got {kind!r}")
    p = _as_p(pvals)
    m = p.size
    grid = _check_grid(kind, cfg.grid if cfg.grid is not None else default_grid(kind, m), m)
    gamma = cfg.gamma if gamma is None else gamma
    if gamma is None:
        raise ValidationError("gamma must be set when no target alpha is supplied")

    observed = np.sort(p)[None, :]
    target = min(_pfdr_rows(observed, _pi0_rows(kind, observed, v), gamma)[0] for v in grid)

    rng = _rng.generator(cfg.seed, _BOOTSTRAP_STREAM)
    idx = rng.integers(0, m, size=(cfg.bootstrap_replicates, m))
    resampled = np.sort(p[idx], axis=1)
    mse = np.array([
        np.mean((_pfdr_rows(resampled, _pi0_rows(kind, resampled, v), gamma) - target) ** 2)
        for v in grid
    ])
    return grid, mse


def select_hyperparameter(pvals, kind, cfg, gamma=None):
    """Pick ``lambda`` (kind ``"storey"``) or ``k0`` (kind ``"quantile"``).

    ``gamma`` overrides ``cfg.gamma``; callers running a procedure at level
    alpha pass ``alpha`` here when ``cfg.gamma`` is unset. Ties in the
    bootstrap MSE go to the smaller grid value.
    """
    grid = cfg.grid if cfg.grid is not None else default_grid(kind, len(_as_p(pvals)))
    if kind in KINDS and len(set(grid)) == 1:
        _check_grid(kind, grid, len(_as_p(pvals)))
        return grid[0]
    values, mse = bootstrap_mse(pvals, kind, cfg, gamma)
    best = values[int(np.argmin(mse))]
    return float(best) if kind == "storey" else int(best)


def tuned_select(pvals, kind, alpha, cfg=None):
    """Run Storey-BH or Quantile-BH with a bootstrap-chosen hyperparameter.

    ``kind`` is a :class:`ProcedureKind`; the pFDR evaluation point
    defaults to ``alpha``.
    """
    alpha = check_alpha(alpha)
    cfg = cfg or TuningConfig()
    gamma = cfg.gamma if cfg.gamma is not None else alpha
    kind = ProcedureKind(kind)
    if kind is ProcedureKind.STOREY_BH:
        lam = select_hyperparameter(pvals, "storey", cfg, gamma)
        return storey_bh_select(pvals, alpha, lam)
    if kind is ProcedureKind.QUANTILE_BH:
        k0 = select_hyperparameter(pvals, "quantile", cfg, gamma)
        return quantile_bh_select(pvals, alpha, k0)
    raise ValidationError(f"{kind.value} has no hyperparameter to tune")
