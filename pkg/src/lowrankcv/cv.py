"""Hold-out construction and prediction-error estimation.

Wold-style speckled CV leaves out a random subset of matrix cells and
predicts them with the missing-value EM SVD; Gabriel-style (K, L)-fold
blocked CV splits rows and columns and predicts the held-out block as
x22_hat = x21 @ pinv(x11 truncated to k) @ x12.  The naive row hold-out is
included only to demonstrate its failure mode: its residual curve is
nonincreasing in k whatever the data.

Fold evaluations are independent; results are always reduced in fold order,
so curves do not depend on any parallel schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import matrix_core as mc
from .errors import DomainError, ShapeError
from .missing import MaskedMatrix, em_svd
from .randmat import RngSeed, sample_rotation

__all__ = [
    "WoldPlan",
    "GabrielPlan",
    "CvCurve",
    "wold_plan",
    "wold_pe",
    "gabriel_plan",
    "gabriel_predict",
    "gabriel_pe",
    "rotated",
    "naive_rowwise_pe",
    "estimate_sigma2",
    "me_curve",
    "write_curve_csv",
]


@dataclass(frozen=True)
class WoldPlan:
    """Speckled K-fold partition of all n*p cells into disjoint test masks."""

    shape: tuple[int, int]
    folds: tuple  # boolean test masks, disjoint, covering every cell

    @property
    def n_folds(self) -> int:
        return len(self.folds)


@dataclass(frozen=True)
class GabrielPlan:
    """(K, L)-fold blocked partition: K row groups x L column groups."""

    shape: tuple[int, int]
    row_groups: tuple  # index arrays partitioning the rows
    col_groups: tuple  # index arrays partitioning the columns

    @property
    def n_folds(self) -> int:
        return len(self.row_groups) * len(self.col_groups)


@dataclass(frozen=True)
class CvCurve:
    """Per-rank error estimates: fold values, their mean, and fold SE.

    Non-finite fold entries (degenerate folds) are excluded from the mean and
    counted in `flags` along with EM non-convergence events at that rank.
    """

    ranks: np.ndarray
    pe_folds: np.ndarray  # (n_folds, k_max + 1)
    pe_mean: np.ndarray
    se: np.ndarray
    flags: np.ndarray

    @property
    def chosen_k(self) -> int:
        return int(np.argmin(self.pe_mean))


def _finalize_curve(pe_folds: np.ndarray, extra_flags: np.ndarray) -> CvCurve:
    finite = np.isfinite(pe_folds)
    counts = finite.sum(axis=0)
    if (counts == 0).any():
        raise DomainError("every fold is degenerate at some rank; lower k_max")
    sums = np.where(finite, pe_folds, 0.0).sum(axis=0)
    mean = sums / counts
    dev = np.where(finite, pe_folds - mean, 0.0)
    sd = np.sqrt((dev * dev).sum(axis=0) / np.maximum(counts - 1, 1))
    se = sd / np.sqrt(counts)
    flags = (~finite).sum(axis=0) + extra_flags
    return CvCurve(ranks=np.arange(pe_folds.shape[1]), pe_folds=pe_folds,
                   pe_mean=mean, se=se, flags=flags.astype(np.int64))


# ---------------------------------------------------------------------------
# Wold speckled hold-outs.
# ---------------------------------------------------------------------------

def wold_plan(n: int, p: int, folds: int, seed: RngSeed,
              stratified: bool = False) -> WoldPlan:
    """Partition the n*p cells into `folds` random test sets of near-equal
    size (differing by at most one cell).

    stratified=True balances the assignment within each row instead of over
    the whole matrix; default is the fully unstructured speckled hold-out.
    """
    cells = n * p
    if not 2 <= folds <= cells:
        raise DomainError(f"folds must be in [2, {cells}], got {folds}")
    rng = seed.generator()
    if stratified:
        labels = np.empty((n, p), dtype=np.int64)
        offset = 0
        for i in range(n):
            row = (np.arange(p) + offset) % folds
            rng.shuffle(row)
            labels[i] = row
            offset += p
        labels = labels.ravel()
    else:
        labels = np.arange(cells) % folds  # sizes differ by at most one
        rng.shuffle(labels)
    masks = tuple((labels == f).reshape(n, p) for f in range(folds))
    return WoldPlan(shape=(n, p), folds=masks)


def wold_pe(x, plan: WoldPlan, k_max: int, tol: float = 1e-4,
            max_iter: int = 500, observed=None) -> CvCurve:
    """Held-out prediction error per rank, averaged over speckled folds.

    Rank 0 predicts every cell by its held-in column mean (the EM starting
    point); rank k >= 1 fits the EM SVD to the held-in cells, warm-started
    from the rank k-1 completion, and scores the completion on the fold.
    Per-fold values are residual sums divided by the fold size.

    `observed` marks cells of `x` that carry data at all (default: every
    cell); a fold is then scored on its observed cells only and the held-in
    set is the observed complement.
    """
    x = mc.dense(x)
    if x.shape != plan.shape:
        raise ShapeError(f"matrix shape {x.shape} does not match plan {plan.shape}")
    if not 0 <= k_max <= min(x.shape):
        raise DomainError(f"k_max={k_max} outside [0, {min(x.shape)}]")
    if observed is None:
        observed = np.ones(x.shape, dtype=bool)
    else:
        observed = np.asarray(observed, dtype=bool)
        if observed.shape != x.shape:
            raise ShapeError("observed mask shape does not match matrix")
    n_folds = plan.n_folds
    pe = np.full((n_folds, k_max + 1), np.inf)
    non_conv = np.zeros(k_max + 1, dtype=np.int64)
    for f, fold_mask in enumerate(plan.folds):
        test_mask = fold_mask & observed
        size = test_mask.sum()
        if size == 0:
            continue  # degenerate fold, leaves the +inf marker
        held_in = MaskedMatrix(values=x, observed=observed & ~fold_mask)
        counts = held_in.observed.sum(axis=0)
        sums = held_in.values.sum(axis=0)
        col_means = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
        pred0 = np.broadcast_to(col_means, x.shape)
        pe[f, 0] = mc.masked_frob_sq(x, pred0, test_mask) / size
        warm = np.where(held_in.observed, x, pred0)
        for k in range(1, k_max + 1):
            res = em_svd(held_in, k, tol=tol, max_iter=max_iter, init=warm)
            pe[f, k] = mc.masked_frob_sq(x, res.completion, test_mask) / size
            if not res.converged:
                non_conv[k] += 1
            warm = res.filled
    return _finalize_curve(pe, non_conv)


# ---------------------------------------------------------------------------
# Gabriel blocked hold-outs.
# ---------------------------------------------------------------------------

def _split_groups(count: int, groups: int, rng) -> tuple:
    perm = rng.permutation(count)
    return tuple(np.sort(part) for part in np.array_split(perm, groups))


def gabriel_plan(n: int, p: int, row_folds: int, col_folds: int,
                 seed: RngSeed) -> GabrielPlan:
    """K near-equal row groups and L near-equal column groups from one
    seeded permutation each."""
    if not 2 <= row_folds <= n:
        raise DomainError(f"row folds must be in [2, {n}], got {row_folds}")
    if not 2 <= col_folds <= p:
        raise DomainError(f"column folds must be in [2, {p}], got {col_folds}")
    rng = seed.generator()
    rows = _split_groups(n, row_folds, rng)
    cols = _split_groups(p, col_folds, rng)
    return GabrielPlan(shape=(n, p), row_groups=rows, col_groups=cols)


def gabriel_predict(x11, x12, x21, k: int) -> np.ndarray:
    """Predict the held-out block: x21 @ pinv(rank-k truncation of x11) @ x12.

    With zero noise, k equal to the signal rank, and a held-out block of full
    signal rank, the prediction reproduces x22 exactly.  k=0 predicts zero.
    """
    x11 = mc.dense(x11)
    x12 = mc.dense(x12)
    x21 = mc.dense(x21)
    if k > min(x11.shape):
        raise DomainError(f"k={k} exceeds held-in rank bound {min(x11.shape)}")
    if k == 0:
        return np.zeros((x21.shape[0], x12.shape[1]))
    return x21 @ mc.pinv_truncated(mc.svd(x11), k) @ x12


def gabriel_pe(x, plan: GabrielPlan, k_max: int) -> CvCurve:
    """Blocked-CV prediction error per rank: block residual / block size,
    averaged over all K*L folds (row-major fold order).

    A fold whose held-in block cannot support rank k gets an infinite marker
    at that rank; such entries are excluded from the mean and counted in
    `flags`."""
    x = mc.dense(x)
    if x.shape != plan.shape:
        raise ShapeError(f"matrix shape {x.shape} does not match plan {plan.shape}")
    n, p = x.shape
    folds = plan.n_folds
    pe = np.full((folds, k_max + 1), np.inf)
    fold = 0
    for rows_out in plan.row_groups:
        rows_in = np.setdiff1d(np.arange(n), rows_out)
        for cols_out in plan.col_groups:
            cols_in = np.setdiff1d(np.arange(p), cols_out)
            x11 = x[np.ix_(rows_in, cols_in)]
            x12 = x[np.ix_(rows_in, cols_out)]
            x21 = x[np.ix_(rows_out, cols_in)]
            x22 = x[np.ix_(rows_out, cols_out)]
            f11 = mc.svd(x11)
            size = x22.size
            limit = min(x11.shape)
            for k in range(k_max + 1):
                if k > limit:
                    continue  # leaves the +inf degenerate marker
                pred = x21 @ mc.pinv_truncated(f11, k) @ x12 if k else np.zeros(x22.shape)
                diff = x22 - pred
                pe[fold, k] = float((diff * diff).sum()) / size
            fold += 1
    return _finalize_curve(pe, np.zeros(k_max + 1, dtype=np.int64))


def rotated(x, seed: RngSeed) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Apply uniformly random orthogonal row and column rotations.

    Returns (p_rot @ x @ q_rot.T, p_rot, q_rot); singular values are
    preserved and any sparse signal is spread over all cells, which is the
    point of rotating before cross-validation.  Undo with
    p_rot.T @ x_rot @ q_rot.
    """
    x = mc.dense(x)
    p_rot = sample_rotation(x.shape[0], seed.child("rows"))
    q_rot = sample_rotation(x.shape[1], seed.child("cols"))
    return p_rot @ x @ q_rot.T, p_rot, q_rot


def naive_rowwise_pe(x, test_rows, k_max: int) -> CvCurve:
    """Row hold-out that projects held-out rows onto the top-k right singular
    vectors of the held-in rows.  The residual cannot increase with k, so the
    curve is nonincreasing regardless of the data; kept as a demonstration of
    why plain row hold-outs cannot select a rank."""
    x = mc.dense(x)
    n, p = x.shape
    test_rows = np.asarray(test_rows, dtype=np.int64).ravel()
    train_rows = np.setdiff1d(np.arange(n), test_rows)
    if len(test_rows) == 0 or len(train_rows) == 0:
        raise DomainError("both row groups must be nonempty")
    x1 = x[train_rows]
    x2 = x[test_rows]
    if not 0 <= k_max <= min(x1.shape):
        raise DomainError(f"k_max={k_max} outside [0, {min(x1.shape)}]")
    f1 = mc.svd(x1)
    size = x2.size
    pe = np.empty((1, k_max + 1))
    for k in range(k_max + 1):
        proj = x2 @ f1.v[:, :k] @ f1.v[:, :k].T if k else np.zeros(x2.shape)
        diff = x2 - proj
        pe[0, k] = float((diff * diff).sum()) / size
    return _finalize_curve(pe, np.zeros(k_max + 1, dtype=np.int64))


# ---------------------------------------------------------------------------
# Noise-level estimation and model-error curves.
# ---------------------------------------------------------------------------

def estimate_sigma2(x, k_hint: int) -> float:
    """Residual-based noise variance estimate
    ||x - x_hat(k_hint)||_F^2 / ((n - k)(p - k)); the degrees-of-freedom
    divisor keeps it nearly unbiased when k_hint matches the signal rank."""
    x = mc.dense(x)
    n, p = x.shape
    if not 0 <= k_hint < min(n, p):
        raise DomainError(f"k_hint={k_hint} outside [0, {min(n, p)})")
    d = np.linalg.svd(x, compute_uv=False)
    resid = float((d[k_hint:] ** 2).sum())
    return resid / ((n - k_hint) * (p - k_hint))


def me_curve(pe: CvCurve, sigma2_hat: float) -> CvCurve:
    """Model-error curve: prediction error minus the noise estimate.  The
    shift is constant in k, so the argmin is unchanged."""
    return CvCurve(ranks=pe.ranks.copy(), pe_folds=pe.pe_folds - sigma2_hat,
                   pe_mean=pe.pe_mean - sigma2_hat, se=pe.se.copy(),
                   flags=pe.flags.copy())


def write_curve_csv(path, curve: CvCurve) -> None:
    folds = curve.pe_folds.shape[0]
    header = ["k", "pe_mean", "se"] + [f"fold_{f}" for f in range(folds)] + ["flags"]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for i, k in enumerate(curve.ranks):
            row = [str(int(k)), repr(float(curve.pe_mean[i])), repr(float(curve.se[i]))]
            row += [repr(float(v)) for v in curve.pe_folds[:, i]]
            row.append(str(int(curve.flags[i])))
            fh.write(",".join(row) + "\n")
