"""Low-rank matrix approximation toolkit: truncated-SVD oracles under the
spiked model, missing-value SVD via EM, Wold/Gabriel cross-validation for
rank selection, penalized criteria, and a seeded simulation harness."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    DegenerateSpectrum,
    DomainError,
    InvalidMatrix,
    LowRankCVError,
    NoData,
    RankOutOfRange,
    ShapeError,
    SingularShift,
)
