"""Dense linear-algebra primitives: SVD with a deterministic sign convention,
truncation, masked Frobenius norms, truncated pseudo-inverse, and matrix I/O.

Matrices are plain float64 numpy arrays in row-major order.  `dense` validates
the invariants (2-D, nonempty, all entries finite) at construction boundaries.
Index sets are (m, 2) integer arrays of (row, col) pairs, lexicographically
sorted and deduplicated; boolean masks are the equivalent working form.

All functions here are pure and the returned factorizations are frozen, so
everything is safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidMatrix, RankOutOfRange, ShapeError

NA_TOKEN = "NA"


def dense(a) -> np.ndarray:
    """Validate and return `a` as a 2-D float64 array with finite entries."""
    out = np.ascontiguousarray(a, dtype=np.float64)
    if out.ndim != 2 or out.size == 0:
        raise InvalidMatrix(f"expected a nonempty 2-D matrix, got shape {out.shape}")
    if not np.isfinite(out).all():
        raise InvalidMatrix("matrix has non-finite entries")
    return out


def index_set(pairs, shape) -> np.ndarray:
    """Canonicalize (row, col) pairs: sorted, unique, within `shape` bounds."""
    idx = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    n, p = shape
    if idx.size and (idx.min() < 0 or idx[:, 0].max() >= n or idx[:, 1].max() >= p):
        raise ShapeError(f"index set out of bounds for shape {shape}")
    if idx.size:
        order = np.lexsort((idx[:, 1], idx[:, 0]))
        idx = idx[order]
        keep = np.ones(len(idx), dtype=bool)
        keep[1:] = np.any(idx[1:] != idx[:-1], axis=1)
        idx = idx[keep]
    return idx


def mask_from_indices(idx, shape) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    if len(idx):
        mask[idx[:, 0], idx[:, 1]] = True
    return mask


def indices_from_mask(mask) -> np.ndarray:
    rows, cols = np.nonzero(mask)
    return np.column_stack([rows, cols]).astype(np.int64)


@dataclass(frozen=True)
class SvdFactorization:
    """Thin SVD a = u @ diag(d) @ v.T with d nonincreasing.

    Sign convention: in every column of v the entry of largest magnitude is
    positive (ties broken by smallest row index), which makes the
    factorization of a given matrix unique and reproducible.
    """

    u: np.ndarray  # (n, r), orthonormal columns
    d: np.ndarray  # (r,), nonincreasing, nonnegative
    v: np.ndarray  # (p, r), orthonormal columns

    def __post_init__(self):
        for arr in (self.u, self.d, self.v):
            arr.setflags(write=False)

    @property
    def rank_limit(self) -> int:
        return self.d.shape[0]


def svd(a) -> SvdFactorization:
    """Thin SVD of `a` with the deterministic sign convention applied."""
    a = dense(a)
    u, d, vt = np.linalg.svd(a, full_matrices=False)
    v = vt.T
    # Largest-magnitude entry of each v column made positive; argmax takes the
    # smallest index on ties.
    lead = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[lead, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    return SvdFactorization(u=u * signs, d=d, v=v * signs)


def truncate(f: SvdFactorization, k: int, scale: float = 1.0) -> np.ndarray:
    """Rank-k reconstruction scale * u[:, :k] @ diag(d[:k]) @ v[:, :k].T."""
    if k < 0 or k > f.rank_limit:
        raise RankOutOfRange(f"k={k} outside [0, {f.rank_limit}]")
    if k == 0:
        return np.zeros((f.u.shape[0], f.v.shape[0]))
    return scale * ((f.u[:, :k] * f.d[:k]) @ f.v[:, :k].T)


def masked_frob_sq(a, b, observed) -> float:
    """Sum of squared differences over the observed index set (or bool mask)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    observed = np.asarray(observed)
    if observed.dtype == bool:
        if observed.shape != a.shape:
            raise ShapeError("mask shape does not match matrices")
        diff = a[observed] - b[observed]
    else:
        idx = index_set(observed, a.shape)
        if len(idx) == 0:
            return 0.0
        diff = a[idx[:, 0], idx[:, 1]] - b[idx[:, 0], idx[:, 1]]
    return float(np.dot(diff, diff))


def pinv_truncated(f: SvdFactorization, k: int, eps: float | None = None) -> np.ndarray:
    """Moore-Penrose pseudo-inverse of the rank-k truncation.

    Singular values <= eps map to zero; eps defaults to 1e-12 * d[0].
    """
    if k < 0 or k > f.rank_limit:
        raise RankOutOfRange(f"k={k} outside [0, {f.rank_limit}]")
    if eps is None:
        eps = 1e-12 * (f.d[0] if f.rank_limit else 0.0)
    if k == 0:
        return np.zeros((f.v.shape[0], f.u.shape[0]))
    d = f.d[:k]
    inv = np.where(d > eps, 1.0 / np.where(d > eps, d, 1.0), 0.0)
    return (f.v[:, :k] * inv) @ f.u[:, :k].T


# ---------------------------------------------------------------------------
# Matrix text / CSV format.  Text format: header line "rows cols", then rows
# of whitespace-separated decimals.  CSV: comma-separated rows, no header.
# The token NA marks a missing entry in either variant.
# ---------------------------------------------------------------------------

def _parse_token(tok: str) -> float:
    return np.nan if tok == NA_TOKEN else float(tok)


def read_matrix(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a matrix file; returns (values, observed) where unobserved
    entries of `values` are 0.0 and `observed` is a boolean mask.

    Files ending in .csv use the comma-separated variant (shape inferred);
    anything else is the "rows cols" header text format.
    """
    path = str(path)
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise InvalidMatrix(f"{path}: empty matrix file")
    if path.endswith(".csv"):
        rows = [[_parse_token(t.strip()) for t in ln.split(",")] for ln in lines]
    else:
        header = lines[0].split()
        if len(header) != 2:
            raise InvalidMatrix(f"{path}: expected 'rows cols' header")
        nr, nc = int(header[0]), int(header[1])
        rows = [[_parse_token(t) for t in ln.split()] for ln in lines[1:]]
        if len(rows) != nr or any(len(r) != nc for r in rows):
            raise InvalidMatrix(f"{path}: body does not match header {nr}x{nc}")
    values = np.asarray(rows, dtype=np.float64)
    if values.ndim != 2 or values.size == 0:
        raise InvalidMatrix(f"{path}: not a 2-D matrix")
    if len({len(r) for r in rows}) != 1:
        raise InvalidMatrix(f"{path}: ragged rows")
    observed = ~np.isnan(values)
    values = np.where(observed, values, 0.0)
    if not np.isfinite(values).all():
        raise InvalidMatrix(f"{path}: non-finite entries")
    return values, observed


def write_matrix(path, a, observed=None) -> None:
    """Write a matrix in the format implied by the file extension."""
    a = np.asarray(a, dtype=np.float64)
    path = str(path)
    csv = path.endswith(".csv")
    sep = "," if csv else " "
    with open(path, "w", encoding="utf-8") as fh:
        if not csv:
            fh.write(f"{a.shape[0]} {a.shape[1]}\n")
        for i in range(a.shape[0]):
            toks = []
            for j in range(a.shape[1]):
                if observed is not None and not observed[i, j]:
                    toks.append(NA_TOKEN)
                else:
                    toks.append(repr(float(a[i, j])))
            fh.write(sep.join(toks) + "\n")
