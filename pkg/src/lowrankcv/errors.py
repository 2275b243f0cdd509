"""Exception types shared across the package."""


class LowRankCVError(Exception):
    """Base class for all package-specific errors."""


class InvalidMatrix(LowRankCVError, ValueError):
    """Matrix input is malformed (non-finite entries, wrong dimensionality, empty)."""


class ShapeError(LowRankCVError, ValueError):
    """Operands have incompatible shapes."""


class RankOutOfRange(LowRankCVError, ValueError):
    """Requested truncation rank exceeds the available rank."""


class DomainError(LowRankCVError, ValueError):
    """Scalar argument outside the domain of the requested quantity."""


class SingularShift(LowRankCVError, ValueError):
    """Shift z coincides (to working precision) with a pole of the resolvent."""


class DegenerateSpectrum(LowRankCVError, ValueError):
    """Eigenvalues are repeated where distinctness is required."""


class NoData(LowRankCVError, ValueError):
    """Masked matrix has no observed entries."""
