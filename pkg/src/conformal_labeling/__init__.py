"""Accept AI-assigned labels with a finite-sample false discovery rate guarantee.

Uncertainty scores of calibration instances the model got wrong serve as a
reference distribution; each test instance gets a conformal p-value and a
step-up rule selects the instances whose labels are kept while controlling
the false discovery rate.
"""

from .conformal import CalibrationSet, PValueSet, conformal_p_values, randomized_p_values
from .errors import (
    DegenerateCalibrationWarning,
    DegenerateEstimatorError,
    LevelCappedWarning,
    ValidationError,
)
from .metrics import EvaluationReport, evaluate
from .montecarlo import (
    ScoreDistribution,
    SimulationConfig,
    TrialReport,
    generate_trial,
    load_scenario,
    run_simulation,
    theorem_bound,
)
from .procedures import (
    ProcedureConfig,
    ProcedureKind,
    SelectionOutcome,
    adaptive_bh_select,
    bh_select,
    conformal_labeling_select,
    quantile_bh_select,
    quantile_pi0,
    run_procedure,
    storey_bh_select,
    storey_pi0,
)
from .regression import (
    LossSpec,
    RegressionCalibrationRecord,
    build_regression_calibration,
    loss,
    regression_select,
)
from .scores import ScoreKind, UncertaintyScore, doctor_alpha_score, energy_score, msp_score
from .tuning import TuningConfig, pfdr_estimate, select_hyperparameter, tuned_select

__version__ = "0.1.0"
