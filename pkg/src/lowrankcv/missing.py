"""Rank-k SVD approximation of a matrix with missing entries, by EM.

The loop alternates a truncated SVD of the completed matrix (M-step) with
re-imputation of the unobserved cells from that truncation (E-step), starting
from column means.  The observed residual sum of squares is nonincreasing
across iterations; convergence is declared when its relative change drops
below `tol`.  The algorithm finds an EM fixed point, not the global
minimum-norm rank-k completion (the problem is non-convex); `starts` runs a
few randomized initializations and keeps the best final RSS.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import matrix_core as mc
from .errors import DomainError, NoData, RankOutOfRange, ShapeError
from .randmat import RngSeed

__all__ = ["MaskedMatrix", "EmResult", "em_svd", "svd_with_missing", "load_masked"]


@dataclass(frozen=True)
class MaskedMatrix:
    """Matrix values plus a boolean observed mask; unobserved cells hold 0.0
    and are never read by the masked norms."""

    values: np.ndarray
    observed: np.ndarray

    def __post_init__(self):
        values = mc.dense(self.values)
        observed = np.asarray(self.observed, dtype=bool)
        if observed.shape != values.shape:
            raise ShapeError("observed mask shape does not match values")
        if not observed.any():
            raise NoData("masked matrix has no observed entries")
        values = np.where(observed, values, 0.0)
        values.setflags(write=False)
        observed.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "observed", observed)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @classmethod
    def from_nan(cls, a) -> "MaskedMatrix":
        a = np.asarray(a, dtype=np.float64)
        observed = ~np.isnan(a)
        return cls(values=np.where(observed, a, 0.0), observed=observed)

    def indices(self) -> np.ndarray:
        return mc.indices_from_mask(self.observed)


@dataclass
class EmResult:
    completion: np.ndarray      # rank <= k truncated SVD of the filled matrix
    filled: np.ndarray          # observed cells = input, unobserved = completion
    rss_trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def _column_mean_fill(a: MaskedMatrix) -> np.ndarray:
    counts = a.observed.sum(axis=0)
    sums = a.values.sum(axis=0)  # unobserved cells are zero already
    means = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    work = a.values.copy()
    fill = np.broadcast_to(means, a.shape)
    work[~a.observed] = fill[~a.observed]
    return work


def _em_loop(a: MaskedMatrix, k: int, tol: float, max_iter: int,
             work: np.ndarray) -> EmResult:
    mask = a.observed
    trace: list[float] = []
    completion = np.zeros(a.shape)
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        completion = mc.truncate(mc.svd(work), k)
        diff = (a.values - completion)[mask]
        rss = float(np.dot(diff, diff))
        trace.append(rss)
        if len(trace) >= 2:
            denom = max(trace[0], 1e-12)
            if abs(trace[-1] - trace[-2]) / denom <= tol:
                converged = True
                break
        work[~mask] = completion[~mask]
    return EmResult(completion=completion, filled=work, rss_trace=trace,
                    iterations=n_iter, converged=converged)


def em_svd(a: MaskedMatrix, k: int, tol: float = 1e-4, max_iter: int = 500,
           init: Optional[np.ndarray] = None,
           starts: Optional[Sequence[RngSeed]] = None) -> EmResult:
    """Rank-k EM completion of a masked matrix.

    `init` seeds the unobserved cells of the working matrix (observed cells
    always come from the data); by default they start at column means, with
    an all-missing column starting at 0.  Hitting max_iter returns
    converged=False with the trace rather than raising.  A fully observed
    input needs a single truncated SVD and converges in one iteration.
    """
    if tol <= 0:
        raise DomainError(f"tol must be positive, got {tol}")
    if k < 0 or k > min(a.shape):
        raise RankOutOfRange(f"k={k} outside [0, {min(a.shape)}]")
    if a.observed.all():
        completion = mc.truncate(mc.svd(a.values), k)
        diff = a.values - completion
        rss = float((diff * diff).sum())
        return EmResult(completion=completion, filled=a.values.copy(),
                        rss_trace=[rss], iterations=1, converged=True)
    if starts:
        best = None
        sd = float(np.std(a.values[a.observed]))
        base = _column_mean_fill(a)
        for seed in starts:
            jitter = seed.generator().normal(0.0, sd if sd > 0 else 1.0, size=a.shape)
            start = base.copy()
            start[~a.observed] += jitter[~a.observed]
            res = _em_loop(a, k, tol, max_iter, start)
            if best is None or res.rss_trace[-1] < best.rss_trace[-1]:
                best = res
        return best
    work = _column_mean_fill(a) if init is None else _apply_init(a, init)
    return _em_loop(a, k, tol, max_iter, work)


def _apply_init(a: MaskedMatrix, init: np.ndarray) -> np.ndarray:
    init = np.asarray(init, dtype=np.float64)
    if init.shape != a.shape:
        raise ShapeError("init shape does not match matrix")
    work = a.values.copy()
    work[~a.observed] = init[~a.observed]
    return work


def svd_with_missing(a: MaskedMatrix, k: int, tol: float = 1e-4,
                     max_iter: int = 500) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Orthonormal factors (u, d, v) of the converged rank-k completion."""
    res = em_svd(a, k, tol=tol, max_iter=max_iter)
    if k == 0:
        n, p = a.shape
        return np.zeros((n, 0)), np.zeros(0), np.zeros((p, 0))
    f = mc.svd(res.completion)
    return f.u[:, :k].copy(), f.d[:k].copy(), f.v[:, :k].copy()


def load_masked(path) -> MaskedMatrix:
    """Read the NA-bearing text/CSV matrix format into a MaskedMatrix."""
    values, observed = mc.read_matrix(path)
    return MaskedMatrix(values=values, observed=observed)
