"""Exception hierarchy shared by every dpplab module."""


class DPPError(Exception):
    """Base class for all dpplab errors."""


class DomainError(DPPError, ValueError):
    """An input lies outside the mathematical domain of an operation."""


class CapacityError(DPPError, ValueError):
    """The ground set is too large for an exhaustive (2^N) routine."""


class NumericalError(DPPError, ArithmeticError):
    """A factorization or inversion failed on input that passed validation."""
