import warnings

import numpy as np
import pytest

from conformal_labeling.conformal import PValueSet
from conformal_labeling.errors import DegenerateEstimatorError, LevelCappedWarning, ValidationError
from conformal_labeling.procedures import (
    LEVEL_CAP,
    ProcedureConfig,
    ProcedureKind,
    adaptive_bh_select,
    bh_select,
    conformal_labeling_select,
    quantile_bh_select,
    quantile_pi0,
    run_procedure,
    step_up,
    storey_bh_select,
    storey_pi0,
)
from oracles import exhaustive_selection, quantile_pi0_literal, storey_pi0_literal

ATOL = 1e-12


def pv(values, n0=0, n=None):
    return PValueSet.from_values(values, n0=n0, n=n)


class TestConformalLabelingHandCases:
    def test_all_ones_selects_nothing(self):
        out = conformal_labeling_select(pv([1.0] * 5, n0=4), n=9, alpha=0.1)
        assert out.cutoff_index == 0 and out.selected.size == 0 and out.realized_threshold == 0.0

    def test_rank_thresholds(self):
        # thresholds 0.1, 0.2, 0.3, 0.4 at ranks 1..4
        out = conformal_labeling_select(pv([0.90, 0.05, 0.30, 0.15], n0=4), n=9, alpha=0.2)
        assert out.cutoff_index == 3
        assert out.selected.tolist() == [1, 2, 3]
        assert out.realized_threshold == 0.30
        assert out.n_used == 9 and out.n0_used == 4

    def test_empty_null_calibration_inflates_threshold(self):
        out = conformal_labeling_select(pv([0.9], n0=0), n=9, alpha=0.1)
        assert out.selected.tolist() == [0]
        assert abs(out.effective_level - 1.0) <= ATOL

    @pytest.mark.parametrize("alpha", [0.0, 1.0, -0.1, 1.5])
    def test_alpha_range(self, alpha):
        with pytest.raises(ValidationError):
            conformal_labeling_select(pv([0.5]), n=5, alpha=alpha)

    def test_n_below_n0(self):
        with pytest.raises(ValidationError):
            conformal_labeling_select(pv([0.5], n0=6), n=5, alpha=0.1)


class TestBH:
    def test_hand_case(self):
        out = bh_select(pv([0.5, 0.01, 0.9, 0.02]), 0.1)
        assert out.cutoff_index == 2 and out.selected.tolist() == [1, 3]

    def test_all_ones(self):
        assert bh_select(pv([1.0] * 4), 0.1).selected.size == 0

    def test_all_tiny(self):
        m, alpha = 6, 0.1
        out = bh_select(pv([alpha / m * 0.5] * m), alpha)
        assert out.cutoff_index == m

    def test_ties_at_threshold_all_included(self):
        out = bh_select(pv([0.02, 0.02, 0.02, 0.9]), 0.1)
        assert out.selected.tolist() == [0, 1, 2]

    def test_accepts_plain_arrays(self):
        assert bh_select([0.01, 0.9], 0.1).selected.tolist() == [0]


class TestEstimators:
    def test_storey_clipped(self):
        assert storey_pi0(pv([0.1, 0.6, 0.9, 0.95]), 0.5) == 1.0
        assert storey_pi0(pv([0.9, 0.95]), 0.5) == 1.0

    def test_storey_empty_tail(self):
        m, lam = 10, 0.5
        assert abs(storey_pi0(pv([0.01] * m), lam) - 1 / (m * (1 - lam))) <= ATOL

    def test_storey_unclipped_value(self):
        p = [0.01] * 18 + [0.7, 0.8]
        assert abs(storey_pi0(pv(p), 0.5) - 3 / 10) <= ATOL

    def test_storey_floor(self):
        # raw 1/(m(1-lam)) is never below 1/m, but a direct check of the floor rule
        assert storey_pi0(pv([0.0] * 4), 0.01) >= 1 / 4

    @pytest.mark.parametrize("lam", [0.0, 1.0, -1.0])
    def test_storey_lambda_range(self, lam):
        with pytest.raises(ValidationError):
            storey_pi0(pv([0.5]), lam)

    def test_quantile_hand_cases(self):
        assert quantile_pi0(pv([0.1, 0.4, 0.6, 0.7]), 2) == 1.0
        assert abs(quantile_pi0(pv([0.1, 0.2, 0.3, 0.5]), 4) - 0.5) <= ATOL
        assert quantile_pi0(pv([0.0, 0.2, 0.3]), 1) == 1.0

    def test_quantile_degenerate(self):
        with pytest.raises(DegenerateEstimatorError):
            quantile_pi0(pv([0.2, 1.0]), 2)

    @pytest.mark.parametrize("k0", [0, 5, 1.5])
    def test_quantile_rank_range(self, k0):
        with pytest.raises(ValidationError):
            quantile_pi0(pv([0.1, 0.2, 0.3, 0.4]), k0)

    def test_match_literal_formulas(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            p = rng.random(int(rng.integers(1, 30)))
            lam = float(rng.uniform(0.05, 0.95))
            k0 = int(rng.integers(1, p.size + 1))
            assert abs(storey_pi0(pv(p), lam) - storey_pi0_literal(list(p), lam)) <= ATOL
            assert abs(quantile_pi0(pv(p), k0) - quantile_pi0_literal(list(p), k0)) <= ATOL


class TestAdaptive:
    P = [0.003, 0.04, 0.012, 0.2, 0.55, 0.07, 0.031, 0.9]

    def test_pi0_one_is_plain_bh(self):
        a = adaptive_bh_select(pv(self.P), 0.1, 1.0)
        assert a.selected.tolist() == bh_select(pv(self.P), 0.1).selected.tolist()
        assert a.pi0_estimate == 1.0

    def test_half_pi0_doubles_level(self):
        a = adaptive_bh_select(pv(self.P), 0.1, 0.5)
        assert a.selected.tolist() == bh_select(pv(self.P), 0.2).selected.tolist()

    def test_storey_composition(self):
        p = pv([0.1, 0.6, 0.9, 0.95])
        out = storey_bh_select(p, 0.1, 0.5)
        assert out.pi0_estimate == 1.0
        assert out.selected.tolist() == bh_select(p, 0.1).selected.tolist()
        assert out.config.lam == 0.5

    def test_level_cap(self):
        with pytest.warns(LevelCappedWarning):
            out = adaptive_bh_select(pv([0.5, 0.99]), 0.5, 0.25)
        assert out.effective_level == LEVEL_CAP and out.warnings
        assert out.selected.tolist() == [0, 1]

    @pytest.mark.parametrize("pi0", [0.0, 1.5, float("nan")])
    def test_pi0_range(self, pi0):
        with pytest.raises(ValidationError):
            adaptive_bh_select(pv([0.5]), 0.1, pi0)


class TestProcedureConfig:
    def test_hyperparameter_presence(self):
        with pytest.raises(ValidationError):
            ProcedureConfig("storey_bh", 0.1)
        with pytest.raises(ValidationError):
            ProcedureConfig("bh", 0.1, lam=0.5)
        with pytest.raises(ValidationError):
            ProcedureConfig("quantile_bh", 0.1, k0=0)
        assert ProcedureConfig("quantile_bh", 0.1, k0=3).to_dict() == {"kind": "quantile_bh", "alpha": 0.1, "k0": 3}

    def test_dispatch(self):
        p = pv([0.01, 0.02, 0.5], n0=3, n=10)
        for cfg in (ProcedureConfig("conformal_labeling", 0.1), ProcedureConfig("bh", 0.1),
                    ProcedureConfig("storey_bh", 0.1, lam=0.5), ProcedureConfig("quantile_bh", 0.1, k0=2)):
            out = run_procedure(p, cfg)
            assert out.config.kind is cfg.kind


def _cases(rng, count):
    for _ in range(count):
        m = int(rng.integers(1, 13))
        if rng.random() < 0.3:
            p = rng.choice(rng.random(max(1, m // 2)), size=m)  # forced ties
        else:
            p = rng.beta(0.3, 1.0, size=m)
        yield p


def test_step_up_matches_exhaustive_search_sample():
    rng = np.random.default_rng(17)
    for p in _cases(rng, 500):
        m = p.size
        alpha = float(rng.uniform(0.01, 0.5))
        cutoff, threshold, selected = step_up(p, alpha)
        assert set(selected.tolist()) == exhaustive_selection(list(p), lambda k: alpha * k / m)
        assert cutoff == selected.size
        if cutoff:
            assert set(selected.tolist()) == {j for j in range(m) if p[j] <= threshold}


def test_conformal_labeling_equals_adjusted_bh_sample():
    rng = np.random.default_rng(23)
    checked = 0
    for p in _cases(rng, 300):
        n = int(rng.integers(1, 200))
        n0 = int(rng.integers(0, n + 1))
        alpha = float(rng.uniform(0.01, 0.3))
        level = alpha * (n + 1) / (n0 + 1)
        if level >= 1:
            continue
        a = conformal_labeling_select(pv(p, n0=n0), n, alpha)
        b = bh_select(pv(p), level)
        assert a.selected.tolist() == b.selected.tolist()
        checked += 1
    assert checked > 50


def test_permutation_equivariance_sample():
    rng = np.random.default_rng(29)
    for p in _cases(rng, 200):
        perm = rng.permutation(p.size)
        a = set(bh_select(pv(p), 0.2).selected.tolist())
        b = set(bh_select(pv(p[perm]), 0.2).selected.tolist())
        assert {int(perm[j]) for j in b} == a


def test_alpha_monotonicity_sample():
    rng = np.random.default_rng(31)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LevelCappedWarning)
        for p in _cases(rng, 200):
            a1, a2 = sorted(rng.uniform(0.01, 0.5, size=2))
            for kind in ProcedureKind:
                k0 = 1 + p.size // 2 if kind is ProcedureKind.QUANTILE_BH else None
                lam = 0.5 if kind is ProcedureKind.STOREY_BH else None
                s1 = run_procedure(pv(p, n0=3, n=20), ProcedureConfig(kind, a1, lam, k0))
                s2 = run_procedure(pv(p, n0=3, n=20), ProcedureConfig(kind, a2, lam, k0))
                assert set(s1.selected.tolist()) <= set(s2.selected.tolist())
