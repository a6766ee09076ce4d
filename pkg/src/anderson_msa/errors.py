"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class MSAError(Exception):
    """Base class for every error raised by this package."""


class PreconditionError(MSAError, ValueError):
    """An input violates a documented precondition."""


class EmptyBoxError(PreconditionError):
    pass


class RegionTooLarge(PreconditionError):
    pass


class CoverInfeasible(PreconditionError):
    pass


class UnsupportedDistribution(PreconditionError):
    pass


class NotNormalized(PreconditionError):
    pass


class SolverFailure(MSAError, RuntimeError):
    """Dense eigensolver failed or returned an eigensystem outside tolerance."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class InfeasibleParameters(PreconditionError):
    """A parameter constraint cannot be met; ``inequality`` names the culprit."""

    def __init__(self, inequality: str, lhs: float, rhs: float):
        super().__init__(f"infeasible: {inequality} fails (lhs={lhs!r}, rhs={rhs!r})")
        self.inequality = inequality
        self.lhs = lhs
        self.rhs = rhs


class ConfigError(PreconditionError):
    pass


class ImplicationViolation(MSAError, AssertionError):
    """A certified verdict failed an implication that must hold by definition."""
