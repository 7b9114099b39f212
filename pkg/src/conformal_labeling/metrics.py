"""Score a selection against ground-truth correctness."""

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class EvaluationReport:
    fdp: float
    power: float
    ai_labeled_ratio: float
    selected_count: int
    false_count: int

    def to_dict(self):
        return asdict(self)


def evaluate(outcome, truth, n, m):
    """False discovery proportion, power and AI-labeled ratio of one selection.

    Parameters
    ----------
    outcome : SelectionOutcome or sequence of int
        The selection, or its selected test indices directly.
    truth : sequence of bool
        ``truth[j]`` is True when the prediction for test instance ``j`` is
        correct (the alternative holds).
    n, m : int
        Calibration and test sizes; the ratio is ``|R| / (n + m)``.
    """
    truth = np.asarray(truth)
    if truth.dtype != np.bool_:
        raise ValidationError("ground truth must be boolean")
    if truth.shape != (m,):
        raise ValidationError(f"ground truth has length {truth.size}, expected m={m}")
    selected = np.asarray(getattr(outcome, "selected", outcome), dtype=np.intp)
    if selected.size and (selected.min() < 0 or selected.max() >= m):
        raise ValidationError(f"selected index out of range [0, {m})")
    if np.unique(selected).size != selected.size:
        raise ValidationError("selected indices contain duplicates")

    hits = truth[selected]
    r = int(selected.size)
    false_count = int(r - np.count_nonzero(hits))
    alternatives = int(np.count_nonzero(truth))
    return EvaluationReport(
        fdp=false_count / max(r, 1),
        power=int(np.count_nonzero(hits)) / max(alternatives, 1),
        ai_labeled_ratio=r / (n + m),
        selected_count=r,
        false_count=false_count,
    )
