import warnings

import numpy as np
import pytest

from conformal_labeling import _rng
from conformal_labeling.conformal import CalibrationSet, PValueSet, conformal_p_values, randomized_p_values
from conformal_labeling.errors import DegenerateCalibrationWarning, ValidationError
from conformal_labeling.scores import msp_score
from oracles import brute_force_p_values

ATOL = 1e-12


def cal_with_nulls(null_scores, correct_scores=()):
    scores = list(null_scores) + list(correct_scores)
    correct = [False] * len(null_scores) + [True] * len(correct_scores)
    return CalibrationSet(np.array(scores, dtype=float), np.array(correct))


class TestHandCases:
    def test_empty_null_set_gives_uniform(self):
        assert abs(randomized_p_values([], [0.42], [0.37])[0] - 0.37) <= ATOL

    def test_no_ties(self):
        p = randomized_p_values([0.2, 0.4, 0.6, 0.8], [0.5], [0.5])
        assert abs(p[0] - 0.5) <= ATOL

    def test_two_ties(self):
        p = randomized_p_values([0.3, 0.5, 0.5], [0.5], [0.25])
        assert abs(p[0] - 0.4375) <= ATOL

    def test_ignores_correct_calibration_scores(self):
        cal = cal_with_nulls([0.2, 0.4, 0.6, 0.8], correct_scores=[0.45, 0.5, 0.55])
        assert cal.n == 7 and cal.n0 == 4
        out = conformal_p_values(cal, [0.5], seed=3)
        expected = (2 + out.tie_uniforms[0]) / 5
        assert abs(out.p_values[0] - expected) <= ATOL


class TestSeededPValues:
    def test_n0_zero_warns_and_returns_uniform(self):
        cal = CalibrationSet(np.array([0.1, 0.2]), np.array([True, True]))
        with pytest.warns(DegenerateCalibrationWarning):
            out = conformal_p_values(cal, [0.5, 0.9], seed=11)
        np.testing.assert_array_equal(out.p_values, out.tie_uniforms)
        assert out.warnings and out.n0_used == 0

    def test_range(self):
        rng = np.random.default_rng(0)
        cal = CalibrationSet(rng.random(50), rng.random(50) < 0.5)
        out = conformal_p_values(cal, rng.random(400), seed=1)
        assert np.all(out.p_values > 0) and np.all(out.p_values <= 1)
        assert np.all((out.tie_uniforms > 0) & (out.tie_uniforms < 1))

    def test_matches_brute_force(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            scores = rng.integers(0, 6, size=20) / 5.0
            cal = CalibrationSet(scores, rng.random(20) < 0.4)
            test = rng.integers(0, 6, size=15) / 5.0
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                out = conformal_p_values(cal, test, seed=int(rng.integers(2**63)))
            ref = brute_force_p_values(list(cal.null_scores), list(test), list(out.tie_uniforms))
            np.testing.assert_allclose(out.p_values, ref, rtol=0, atol=ATOL)

    def test_deterministic(self):
        cal = cal_with_nulls([0.3, 0.6], [0.1])
        a = conformal_p_values(cal, [0.2, 0.5, 0.7], seed=2**64 - 1)
        b = conformal_p_values(cal, [0.2, 0.5, 0.7], seed=2**64 - 1)
        assert a.p_values.tobytes() == b.p_values.tobytes()
        assert a.tie_uniforms.tobytes() == b.tie_uniforms.tobytes()

    def test_uniform_depends_only_on_seed_and_index(self):
        long = _rng.tie_uniforms(99, 1000)
        short = _rng.tie_uniforms(99, 10)
        np.testing.assert_array_equal(long[:10], short)
        assert not np.array_equal(_rng.tie_uniforms(100, 10), short)

    def test_accepts_score_objects(self):
        cal = cal_with_nulls([0.5])
        out = conformal_p_values(cal, [msp_score([0.9, 0.1])], seed=0)
        assert out.p_values[0] == pytest.approx(out.tie_uniforms[0] / 2)


class TestValidation:
    def test_empty_test_batch(self):
        with pytest.raises(ValidationError):
            conformal_p_values(cal_with_nulls([0.1]), [], seed=0)

    def test_non_finite_test_score(self):
        with pytest.raises(ValidationError):
            conformal_p_values(cal_with_nulls([0.1]), [np.nan], seed=0)

    def test_non_finite_calibration_score(self):
        with pytest.raises(ValidationError):
            CalibrationSet(np.array([np.inf]), np.array([False]))

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            CalibrationSet(np.array([0.1, 0.2]), np.array([False]))

    def test_empty_calibration(self):
        with pytest.raises(ValidationError):
            CalibrationSet(np.array([]), np.array([], dtype=bool))

    @pytest.mark.parametrize("seed", [-1, 2**64, 1.5, True])
    def test_bad_seed(self, seed):
        with pytest.raises(ValidationError):
            conformal_p_values(cal_with_nulls([0.1]), [0.2], seed=seed)

    def test_from_values_range(self):
        with pytest.raises(ValidationError):
            PValueSet.from_values([0.5, 1.5])


def test_monotone_in_score_for_fixed_uniform():
    rng = np.random.default_rng(8)
    nulls = np.round(rng.random(30), 1)
    grid = np.linspace(-0.1, 1.1, 241)
    for u in (0.0, 0.3, 0.999):
        p = randomized_p_values(nulls, grid, np.full(grid.size, u))
        assert np.all(np.diff(p) >= 0)
