"""Exception types raised across the package."""

from __future__ import annotations


class MaxEntError(Exception):
    """Base class for all package errors."""


# domain / ingestion
class SchemaError(MaxEntError, ValueError):
    pass


class UnknownCategory(MaxEntError, ValueError):
    pass


class ArityMismatch(MaxEntError, ValueError):
    pass


class InvalidOneHot(MaxEntError, ValueError):
    pass


class InvalidPoint(MaxEntError, ValueError):
    pass


class EmptyDataset(MaxEntError, ValueError):
    pass


class BoundaryMarginal(MaxEntError, ValueError):
    """A marginal coordinate sits on (or too close to) the boundary of [0, 1]."""

    def __init__(self, coordinate: int, value: float, eta_min: float):
        self.coordinate = coordinate
        self.value = value
        self.eta_min = eta_min
        super().__init__(
            f"marginal coordinate {coordinate} = {value!r} is not inside "
            f"({eta_min}, {1 - eta_min})"
        )


# prior
class InvalidTau(MaxEntError, ValueError):
    pass


class InvalidMixture(MaxEntError, ValueError):
    pass


class EmptyCell(MaxEntError, ValueError):
    """A (label, group) cell is empty while its counterpart group is not."""

    def __init__(self, label_value: int, group: int):
        self.label_value = label_value
        self.group = group
        super().__init__(
            f"no data with label value {label_value} and protected value {group}, "
            "but the other protected group has some; the balance cannot be achieved"
        )


# oracles
class DimensionMismatch(MaxEntError, ValueError):
    pass


class NonFiniteInput(MaxEntError, ValueError):
    pass


class DomainTooLarge(MaxEntError, ValueError):
    pass


# solver
class InvalidEta(MaxEntError, ValueError):
    pass


class UnboundedRadius(MaxEntError, ValueError):
    pass


class NumericalBreakdown(MaxEntError, ArithmeticError):
    pass


class QPNotConverged(MaxEntError, RuntimeError):
    pass


class NotConverged(MaxEntError, RuntimeError):
    """The solver hit its iteration budget; ``result`` holds the last iterate."""

    def __init__(self, message: str, result=None):
        super().__init__(message)
        self.result = result


# sampler
class InconsistentAssignment(MaxEntError, ValueError):
    pass


class BlockAlreadyAssigned(MaxEntError, ValueError):
    pass


# metrics
class ZeroGroupMass(MaxEntError, ValueError):
    pass


class ZeroJointMass(MaxEntError, ValueError):
    pass


class SchemaMismatch(MaxEntError, ValueError):
    pass


class HypothesisViolated(UserWarning):
    """The marginal of the protected attribute lies outside the range the bound needs."""


class InconsistentMarginal(MaxEntError, ValueError):
    """A one-hot block of the target marginal does not sum to one."""


# serialisation
class ModelFormatError(MaxEntError, ValueError):
    """A model file is missing fields or does not describe a valid model."""
