"""Synthetic trials for checking FDR control empirically.

Each trial draws ``n + m`` instances i.i.d.: an instance is mispredicted with
probability ``p_null`` and its uncertainty score comes from
``incorrect_dist`` if so, else from ``correct_dist``. Trial ``t`` is a pure
function of ``(seed, t)``, so results do not depend on how trials are
scheduled across workers.
"""

import csv
import io
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy import integrate, optimize, stats

from . import _rng
from .conformal import CalibrationSet, conformal_p_values
from .errors import DegenerateCalibrationWarning, LevelCappedWarning, ValidationError
from .metrics import evaluate
from .procedures import ProcedureConfig, ProcedureKind, check_alpha, run_procedure
from .regression import LossSpec, RegressionCalibrationRecord, acceptable, regression_select
from .tuning import DEFAULT_BOOTSTRAP, TuningConfig, tuned_select

SCHEMA_VERSION = 1

# SeedSequence labels for the independent per-trial streams.
_DATA_STREAM = 1
_TIE_STREAM = 2
_TUNE_STREAM = 3
_REGRESSION_STREAM = 4

STATISTICS = ("fdr", "power", "ai_labeled_ratio")


def theorem_bound(p, n, alpha):
    """FDR bound ``[1 - (1 - p)**(n + 1)] * alpha`` for the conformal labeling rule."""
    if not 0.0 <= p <= 1.0:
        raise ValidationError(f"p must lie in [0, 1], got {p!r}")
    if n < 0:
        raise ValidationError(f"n must be nonnegative, got {n!r}")
    check_alpha(alpha)
    return (1.0 - (1.0 - p) ** (n + 1)) * alpha


@dataclass(frozen=True)
class ScoreDistribution:
    """A parametric score distribution: ``beta(a, b)``, ``uniform(low, high)`` or ``normal(loc, scale)``."""

    family: str = "beta"
    params: tuple = (2.0, 8.0)

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(v) for v in self.params))
        if len(self.params) != 2 or not all(math.isfinite(v) for v in self.params):
            raise ValidationError(f"{self.family} needs two finite parameters")
        a, b = self.params
        if self.family == "beta":
            ok = a > 0 and b > 0
        elif self.family == "uniform":
            ok = a < b
        elif self.family == "normal":
            ok = b > 0
        else:
            raise ValidationError(f"unknown score distribution family {self.family!r}")
        if not ok:
            raise ValidationError(f"invalid {self.family} parameters {self.params}")

    def sample(self, rng, size):
        a, b = self.params
        if self.family == "beta":
            return rng.beta(a, b, size)
        if self.family == "uniform":
            return rng.uniform(a, b, size)
        return rng.normal(a, b, size)

    def to_dict(self):
        return {"family": self.family, "params": list(self.params)}

    @classmethod
    def from_dict(cls, d):
        return cls(d.get("family", "beta"), tuple(d["params"]))


@dataclass(frozen=True)
class ProcedureSpec:
    """A procedure in a simulation; ``lam``/``k0`` left unset means bootstrap-tuned."""

    kind: ProcedureKind
    lam: float | None = None
    k0: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ProcedureKind(self.kind))
        if self.lam is not None and self.kind is not ProcedureKind.STOREY_BH:
            raise ValidationError("lambda only applies to storey_bh")
        if self.k0 is not None and self.kind is not ProcedureKind.QUANTILE_BH:
            raise ValidationError("k0 only applies to quantile_bh")

    @property
    def tuned(self):
        return (self.kind is ProcedureKind.STOREY_BH and self.lam is None) or (
            self.kind is ProcedureKind.QUANTILE_BH and self.k0 is None
        )

    @property
    def label(self):
        if self.lam is not None:
            return f"{self.kind.value}(lambda={self.lam:g})"
        if self.k0 is not None:
            return f"{self.kind.value}(k0={self.k0})"
        return self.kind.value

    def to_dict(self):
        out = {"kind": self.kind.value}
        if self.lam is not None:
            out["lambda"] = self.lam
        if self.k0 is not None:
            out["k0"] = self.k0
        return out

    @classmethod
    def from_dict(cls, d):
        if isinstance(d, str):
            return cls(d)
        return cls(d["kind"], d.get("lambda"), d.get("k0"))


@dataclass(frozen=True)
class SimulationConfig:
    n: int = 500
    m: int = 500
    p_null: float = 0.3
    correct_dist: ScoreDistribution = field(default_factory=lambda: ScoreDistribution("beta", (2.0, 8.0)))
    incorrect_dist: ScoreDistribution = field(default_factory=lambda: ScoreDistribution("beta", (8.0, 2.0)))
    trials: int = 1000
    alpha_grid: tuple = (0.1,)
    procedures: tuple = (ProcedureSpec(ProcedureKind.CONFORMAL_LABELING),)
    seed: int = 0
    bootstrap_replicates: int = DEFAULT_BOOTSTRAP

    def __post_init__(self):
        for name in ("n", "m", "trials", "bootstrap_replicates"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value or value < 1:
                raise ValidationError(f"{name} must be a positive integer, got {value!r}")
        # p_null may sit on the boundary for degenerate-case checks.
        if not 0.0 <= self.p_null <= 1.0:
            raise ValidationError(f"p_null must lie in [0, 1], got {self.p_null!r}")
        if len(self.alpha_grid) == 0 or len(self.procedures) == 0:
            raise ValidationError("alpha_grid and procedures must be non-empty")
        object.__setattr__(self, "alpha_grid", tuple(check_alpha(a) for a in self.alpha_grid))
        object.__setattr__(self, "procedures", tuple(
            p if isinstance(p, ProcedureSpec) else ProcedureSpec.from_dict(p) for p in self.procedures
        ))
        object.__setattr__(self, "seed", _rng.check_seed(self.seed))

    def to_dict(self):
        return {
            "n": self.n,
            "m": self.m,
            "p_null": self.p_null,
            "correct_dist": self.correct_dist.to_dict(),
            "incorrect_dist": self.incorrect_dist.to_dict(),
            "trials": self.trials,
            "alpha_grid": list(self.alpha_grid),
            "procedures": [p.to_dict() for p in self.procedures],
            "seed": self.seed,
            "bootstrap_replicates": self.bootstrap_replicates,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown simulation config keys: {sorted(unknown)}")
        for key in ("correct_dist", "incorrect_dist"):
            if key in d:
                d[key] = ScoreDistribution.from_dict(d[key])
        if "alpha_grid" in d:
            d["alpha_grid"] = tuple(d["alpha_grid"])
        if "procedures" in d:
            d["procedures"] = tuple(ProcedureSpec.from_dict(p) for p in d["procedures"])
        return cls(**d)


def load_scenario(name):
    """Load a bundled scenario (``theorem1``, ``procedures``, ``small_n``, ``exchangeable_nulls``)."""
    path = resources.files("conformal_labeling") / "scenarios" / f"{name}.json"
    if not path.is_file():
        raise ValidationError(f"no bundled scenario named {name!r}")
    return SimulationConfig.from_dict(json.loads(path.read_text(encoding="utf-8")))


def generate_trial(cfg, trial_index):
    """Return ``(calibration, test_scores, test_truth)`` for one trial.

    ``test_truth[j]`` is True when test instance ``j`` is correctly predicted.
    """
    rng = _rng.generator(cfg.seed, _DATA_STREAM, trial_index)
    total = cfg.n + cfg.m
    wrong = rng.random(total) < cfg.p_null
    good = cfg.correct_dist.sample(rng, total)
    bad = cfg.incorrect_dist.sample(rng, total)
    scores = np.where(wrong, bad, good)
    cal = CalibrationSet(scores[:cfg.n], ~wrong[:cfg.n])
    return cal, scores[cfg.n:], ~wrong[cfg.n:]


def trial_p_values(cfg, trial_index):
    cal, test_scores, truth = generate_trial(cfg, trial_index)
    seed = _rng.derive_seed(cfg.seed, _TIE_STREAM, trial_index)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateCalibrationWarning)
        pvals = conformal_p_values(cal, test_scores, seed)
    return cal, pvals, truth


def run_trial(cfg, trial_index):
    """Evaluate every (procedure, alpha) cell on one trial.

    Returns a dict ``{(label, alpha): (fdp, power, ratio, hyperparameter)}``.
    """
    cal, pvals, truth = trial_p_values(cfg, trial_index)
    tuning = TuningConfig(bootstrap_replicates=cfg.bootstrap_replicates,
                          seed=_rng.derive_seed(cfg.seed, _TUNE_STREAM, trial_index))
    out = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LevelCappedWarning)
        for spec in cfg.procedures:
            for alpha in cfg.alpha_grid:
                if spec.tuned:
                    outcome = tuned_select(pvals, spec.kind, alpha, tuning)
                else:
                    config = ProcedureConfig(spec.kind, alpha, spec.lam, spec.k0)
                    outcome = run_procedure(pvals, config, n=cal.n)
                rep = evaluate(outcome, truth, cal.n, cfg.m)
                hyper = outcome.config.lam if outcome.config.lam is not None else outcome.config.k0
                out[(spec.label, alpha)] = (rep.fdp, rep.power, rep.ai_labeled_ratio, hyper)
    return out


def _run_chunk(cfg, indices):
    return [run_trial(cfg, t) for t in indices]


def _standard_error(values):
    if values.size < 2:
        return 0.0
    return float(np.std(values, ddof=1) / math.sqrt(values.size))


@dataclass(frozen=True)
class TrialReport:
    """Per-trial and aggregate statistics for one (procedure, alpha) cell."""

    procedure: str
    alpha: float
    fdp: np.ndarray
    power: np.ndarray
    ai_labeled_ratio: np.ndarray
    theorem_bound: float
    hyperparameters: tuple = ()

    @property
    def trials(self):
        return int(self.fdp.size)

    def mean(self, statistic):
        return float(np.mean(self._array(statistic)))

    def se(self, statistic):
        return _standard_error(self._array(statistic))

    def _array(self, statistic):
        return {"fdr": self.fdp, "power": self.power, "ai_labeled_ratio": self.ai_labeled_ratio}[statistic]

    @property
    def fdr(self):
        return self.mean("fdr")

    @property
    def fdr_se(self):
        return self.se("fdr")

    @property
    def mean_power(self):
        return self.mean("power")

    @property
    def power_se(self):
        return self.se("power")

    def to_dict(self):
        return {
            "procedure": self.procedure,
            "alpha": self.alpha,
            "trials": self.trials,
            "theorem_bound": self.theorem_bound,
            "mean": {s: self.mean(s) for s in STATISTICS},
            "se": {s: self.se(s) for s in STATISTICS},
            "per_trial": {
                "fdp": self.fdp.tolist(),
                "power": self.power.tolist(),
                "ai_labeled_ratio": self.ai_labeled_ratio.tolist(),
                "hyperparameter": list(self.hyperparameters),
            },
        }


@dataclass(frozen=True)
class SimulationReport:
    config: SimulationConfig
    cells: tuple

    def cell(self, procedure, alpha):
        for c in self.cells:
            if c.procedure == procedure and c.alpha == alpha:
                return c
        raise KeyError((procedure, alpha))

    def to_json(self):
        doc = {
            "schema_version": SCHEMA_VERSION,
            "config": self.config.to_dict(),
            "cells": [c.to_dict() for c in self.cells],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def to_csv(self):
        """Long format: one row per procedure x alpha x statistic."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["procedure", "alpha", "statistic", "mean", "se", "theorem_bound", "trials"])
        for c in self.cells:
            for s in STATISTICS:
                writer.writerow([c.procedure, repr(c.alpha), s, repr(c.mean(s)), repr(c.se(s)),
                                 repr(c.theorem_bound), c.trials])
        return buf.getvalue()


def run_simulation(cfg, workers=1):
    """Run ``cfg.trials`` trials and aggregate per (procedure, alpha) cell.

    ``workers > 1`` fans trials out to a process pool; results are
    reassembled in trial order, so the report is identical for any worker
    count.
    """
    indices = list(range(cfg.trials))
    if workers is None or workers <= 1:
        per_trial = _run_chunk(cfg, indices)
    else:
        chunks = [indices[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_chunk, [cfg] * len(chunks), chunks))
        per_trial = [None] * cfg.trials
        for chunk, res in zip(chunks, results):
            for t, r in zip(chunk, res):
                per_trial[t] = r

    cells = []
    for spec in cfg.procedures:
        for alpha in cfg.alpha_grid:
            rows = [r[(spec.label, alpha)] for r in per_trial]
            cols = np.array([row[:3] for row in rows], dtype=np.float64).reshape(-1, 3)
            cells.append(TrialReport(
                procedure=spec.label,
                alpha=alpha,
                fdp=cols[:, 0],
                power=cols[:, 1],
                ai_labeled_ratio=cols[:, 2],
                theorem_bound=theorem_bound(cfg.p_null, cfg.n, alpha),
                hyperparameters=tuple(row[3] for row in rows),
            ))
    return SimulationReport(cfg, tuple(cells))


def pooled_null_p_values(cfg):
    """Test p-values of truly mispredicted instances, pooled over all trials."""
    pooled = []
    for t in range(cfg.trials):
        _, pvals, truth = trial_p_values(cfg, t)
        pooled.append(pvals.p_values[~truth])
    return np.concatenate(pooled)


def ecdf_excess(p, grid=None, z=3.0):
    """Compare the ECDF of ``p`` with the uniform CDF on ``grid``.

    Returns rows ``(u, ecdf(u), u + z * sqrt(u (1 - u) / N))``.
    """
    p = np.sort(np.asarray(p, dtype=np.float64))
    if grid is None:
        grid = np.round(np.arange(1, 20) * 0.05, 2)
    size = p.size
    rows = []
    for u in grid:
        ecdf = np.searchsorted(p, u, side="right") / size
        rows.append((float(u), float(ecdf), float(u + z * math.sqrt(u * (1 - u) / size))))
    return rows


# Regression simulation: heteroscedastic Gaussian errors whose scale is the
# uncertainty score, with a squared-error tolerance.

REGRESSION_SCALE = (0.2, 1.5)


def regression_null_rate(epsilon, scale=REGRESSION_SCALE):
    """P(squared error > epsilon) with error ~ N(0, s^2), s ~ Uniform(scale)."""
    lo, hi = scale
    root = math.sqrt(epsilon)

    def tail(s):
        return 2.0 * stats.norm.sf(root / s)

    value, _ = integrate.quad(tail, lo, hi)
    return value / (hi - lo)


def epsilon_for_null_rate(rate, scale=REGRESSION_SCALE):
    """Squared-error tolerance at which a fraction ``rate`` of predictions are nulls."""
    if not 0.0 < rate < 1.0:
        raise ValidationError(f"null rate must lie in (0, 1), got {rate!r}")
    return optimize.brentq(lambda e: regression_null_rate(e, scale) - rate, 1e-12, 100.0, xtol=1e-14)


def regression_trial(seed, trial_index, n, m, scale=REGRESSION_SCALE):
    """Return ``(records, test_truth_y, test_prediction, test_uncertainty)``."""
    rng = _rng.generator(seed, _REGRESSION_STREAM, trial_index)
    total = n + m
    s = rng.uniform(scale[0], scale[1], total)
    y = rng.normal(0.0, 1.0, total)
    y_hat = y + s * rng.standard_normal(total)
    records = [RegressionCalibrationRecord(y[i], y_hat[i], s[i]) for i in range(n)]
    return records, y[n:], y_hat[n:], s[n:]


def run_regression_simulation(n, m, alpha, epsilon, trials, seed, scale=REGRESSION_SCALE):
    spec = LossSpec("squared_error", epsilon)
    fdp, power, ratio = [], [], []
    for t in range(trials):
        records, y, y_hat, s = regression_trial(seed, t, n, m, scale)
        tie_seed = _rng.derive_seed(seed, _TIE_STREAM, t)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateCalibrationWarning)
            outcome = regression_select(records, s, spec, n, alpha, tie_seed)
        rep = evaluate(outcome, acceptable(spec, y, y_hat), n, m)
        fdp.append(rep.fdp)
        power.append(rep.power)
        ratio.append(rep.ai_labeled_ratio)
    p_null = regression_null_rate(epsilon, scale)
    return TrialReport("conformal_labeling_regression", alpha, np.array(fdp), np.array(power),
                       np.array(ratio), theorem_bound(p_null, n, alpha))
