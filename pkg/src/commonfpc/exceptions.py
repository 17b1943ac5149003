"""Exception hierarchy.

Two families: :class:`ValidationError` for bad inputs (the CLI maps it to exit
code 2) and :class:`NumericalError` for failures of the numerics themselves
(exit code 3).
"""


class CommonFpcError(Exception):
    """Base class for all package errors."""


class ValidationError(CommonFpcError, ValueError):
    """Inputs violate a documented precondition."""


class NumericalError(CommonFpcError, ArithmeticError):
    """A numerical procedure could not produce a valid result."""


class IncompatibleGridsError(ValidationError):
    pass


class InvalidMatrixError(ValidationError):
    pass


class InsufficientPointsError(ValidationError):
    pass


class InsufficientSampleError(ValidationError):
    pass


class TooManyComponentsError(ValidationError):
    pass


class InvalidBasisError(ValidationError):
    pass


class OutOfRangeError(ValidationError):
    pass


class NoSolutionError(ValidationError):
    """Option price at or outside the static no-arbitrage bounds."""


class InsufficientDataError(ValidationError):
    pass


class RankDeficiencyError(NumericalError):
    pass


class UndefinedWindowError(NumericalError):
    """A kernel window around some evaluation node contains no design point."""

    def __init__(self, node, bandwidth):
        self.node = float(node)
        self.bandwidth = float(bandwidth)
        super().__init__(f"empty kernel window at node t={self.node:.6g} (bandwidth {self.bandwidth:.6g})")


class DegenerateWindowError(NumericalError):
    def __init__(self, node, bandwidth):
        self.node = float(node)
        self.bandwidth = float(bandwidth)
        super().__init__(
            f"singular local design at node t={self.node:.6g} (bandwidth {self.bandwidth:.6g})"
        )


class DegenerateComponentError(NumericalError):
    pass


class UnstableSpectrumError(NumericalError):
    pass


class NoFeasibleBandwidthError(NumericalError):
    pass


class BracketExceededError(NumericalError):
    pass


class UndefinedRatioError(NumericalError):
    pass
