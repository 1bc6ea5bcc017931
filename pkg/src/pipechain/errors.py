"""Exception types shared across the package."""


class PipechainError(Exception):
    """Base class for all pipechain errors."""


class ParameterDomainError(PipechainError, ValueError):
    """A hazard or chain parameter violates its domain or bounds."""


class IntegrationError(PipechainError, RuntimeError):
    """The ODE integrator failed; ``time`` holds the failing time if known."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class DataFormatError(PipechainError, ValueError):
    """Input data does not match the expected schema or value domain."""


class CohortEmptyError(PipechainError, ValueError):
    """A cohort filter matched no inspection records."""


class SimulationError(PipechainError, RuntimeError):
    """The synthetic-cohort simulator could not produce a valid sample."""


class CalibrationError(PipechainError, RuntimeError):
    """Calibration could not start or produce a usable parameter set."""


class ConfigError(PipechainError, ValueError):
    """A run configuration is inconsistent or references missing inputs."""
