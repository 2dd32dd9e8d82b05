"""Exception hierarchy shared across the package."""


class CMRPError(Exception):
    """Base class for all package errors."""


class UnsupportedOperationError(CMRPError):
    """The law or kernel does not support the requested operation."""


class DomainError(CMRPError, ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class ConstraintError(CMRPError, ValueError):
    """A parameter violates a modelling constraint at construction time."""


class ModelValidationError(CMRPError):
    """A risk model fails a structural check (e.g. nonfinite conditional mean)."""


class RunawaySimulationError(CMRPError):
    """A simulated path exceeded the hard claim-count cap."""


class OutOfWindowError(CMRPError, ValueError):
    """A time query lies beyond the window covered by a simulated path."""


class SingularDensityError(CMRPError):
    """A likelihood ratio has a zero denominator (kernel density or survival)."""


class ValidationInconclusiveError(CMRPError):
    """Numerical integration did not converge, so validation cannot decide."""


class ConfigurationError(CMRPError):
    """The requested combination of inputs cannot be realized."""


class InconclusiveError(CMRPError):
    """A statistical check could not be carried out reliably."""


class UnreliableEstimateError(InconclusiveError):
    """Too many simulated paths were truncated for the estimate to be usable."""
