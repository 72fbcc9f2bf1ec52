"""
Exception hierarchy for the data-mixture optimizer.

Every failure the engine can report derives from MixOptError so the CLI can map
it onto a documented exit code.
"""

from typing import Optional


class MixOptError(Exception):
    """Base class for all optimizer errors."""


# Ratios and shapes
class NegativeWeight(MixOptError):
    pass


class ZeroSum(MixOptError):
    pass


class DimensionMismatch(MixOptError):
    pass


class RatioDrift(MixOptError):
    """Weights passed to MixingRatio directly are too far from summing to 1."""


# Surrogate
class NumericalBreakdown(MixOptError):
    pass


class InsufficientData(MixOptError):
    pass


# Domains and sampling
class EmptyDomain(MixOptError):
    pass


class NonFiniteInfluence(MixOptError):
    pass


class DuplicatePointId(MixOptError):
    pass


class CountExceedsDomain(MixOptError):
    """Raised when a domain cannot supply the requested number of points."""

    def __init__(self, domain: str, requested: int, available: int):
        self.domain = domain
        self.requested = requested
        self.available = available
        self.shortfall = requested - available
        super().__init__(
            f"domain '{domain}' cannot supply {requested} points "
            f"(available {available}, shortfall {self.shortfall})"
        )


class SingularHessian(MixOptError):
    pass


# Evaluators
class EvaluatorFailure(MixOptError):
    """An evaluation did not produce a usable loss."""

    def __init__(self, message: str, sample_index: Optional[int] = None):
        self.sample_index = sample_index
        super().__init__(message)


class ProtocolViolation(EvaluatorFailure):
    pass


class EvaluatorTimeout(EvaluatorFailure):
    pass


class NonFiniteLoss(EvaluatorFailure):
    pass


# Regret
class UnknownOptimum(MixOptError):
    pass


class DomainError(MixOptError):
    """Argument outside the domain where a closed-form bound is defined."""


# Runs
class ConfigInvalid(MixOptError):
    pass


class BudgetExhausted(MixOptError):
    pass
