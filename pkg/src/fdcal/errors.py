"""Exception hierarchy shared by every stage of the simulator."""


class FdcalError(Exception):
    """Base class for all simulator errors."""


class ConfigError(FdcalError, ValueError):
    """Invalid or unknown configuration value."""


class UsageError(FdcalError, ValueError):
    """An operation was called with arguments that violate its preconditions."""


class EstimationError(FdcalError, RuntimeError):
    """Channel estimation could not be carried out (e.g. rank deficient regressor)."""


class InfeasibleScenarioError(FdcalError, ValueError):
    """A rate scenario whose calibration overhead exceeds the coherence interval."""


class StageError(FdcalError, RuntimeError):
    """Wraps an error raised inside a named pipeline stage."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


class RangeWarning(UserWarning):
    """A gain control loop had to clamp its setting."""
