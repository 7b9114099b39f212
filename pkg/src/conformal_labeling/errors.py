"""Exception and warning types shared across the package."""


class ValidationError(ValueError):
    """Raised when an input violates an operation's preconditions."""


class DegenerateEstimatorError(ValidationError):
    """Raised when a null-proportion estimator divides by zero."""


class DegenerateCalibrationWarning(UserWarning):
    """The mislabeled calibration subset is empty, so p-values are pure noise."""


class LevelCappedWarning(UserWarning):
    """An adaptive procedure's effective level reached 1 and was capped."""
