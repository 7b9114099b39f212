import numpy as np
import pytest

from conformal_labeling.errors import ValidationError
from conformal_labeling.metrics import evaluate


def test_empty_selection():
    rep = evaluate([], [True, False, True], n=3, m=3)
    assert rep.fdp == 0.0 and rep.power == 0.0 and rep.ai_labeled_ratio == 0.0


def test_counting_case():
    # 10 correct predictions, 3 of them selected together with 1 incorrect
    truth = [True] * 10 + [False] * 5
    rep = evaluate([0, 1, 2, 12], truth, n=20, m=15)
    assert rep.fdp == 0.25 and rep.power == 0.3
    assert rep.selected_count == 4 and rep.false_count == 1
    assert rep.ai_labeled_ratio == 4 / 35


def test_full_selection_all_correct():
    rep = evaluate(list(range(6)), [True] * 6, n=6, m=6)
    assert (rep.fdp, rep.power, rep.ai_labeled_ratio) == (0.0, 1.0, 0.5)


def test_all_null_batch_power_zero():
    assert evaluate([0], [False, False], n=1, m=2).power == 0.0


def test_precision_complement():
    rng = np.random.default_rng(0)
    for _ in range(200):
        m = int(rng.integers(1, 30))
        truth = rng.random(m) < 0.6
        sel = np.flatnonzero(rng.random(m) < 0.5)
        rep = evaluate(sel, truth, n=10, m=m)
        precision = truth[sel].sum() / max(sel.size, 1)
        assert rep.fdp + precision == pytest.approx(1.0 if sel.size else 0.0)


def test_permutation_invariant():
    rng = np.random.default_rng(1)
    truth = rng.random(25) < 0.5
    sel = np.flatnonzero(rng.random(25) < 0.4)
    perm = rng.permutation(25)
    inverse = np.argsort(perm)
    a = evaluate(sel, truth, n=5, m=25)
    b = evaluate(np.sort(inverse[sel]), truth[perm], n=5, m=25)
    assert a == b


@pytest.mark.parametrize("sel", [[5], [-1], [0, 0]])
def test_bad_indices(sel):
    with pytest.raises(ValidationError):
        evaluate(sel, [True] * 5, n=1, m=5)


def test_truth_length():
    with pytest.raises(ValidationError):
        evaluate([0], [True, False], n=1, m=3)
