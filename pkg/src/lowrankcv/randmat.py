"""Seeded random generation: orthonormal frames, rotations, latent factors,
and the three noise families (white / heavy-tailed / colored).

Streams.  RngSeed = (master, stream) feeds a Philox counter-based bit
generator through SeedSequence(master, spawn_key=(stream,)), so identical
seeds reproduce identical matrices bit-for-bit and distinct streams are
independent.  Derived streams come from splitmix64 mixing, which lets
replicates and sub-draws own disjoint streams without coordination.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError

__all__ = [
    "RngSeed",
    "FactorSample",
    "sample_stiefel",
    "sample_rotation",
    "gen_factors",
    "gen_noise",
    "sample_model",
    "frame_projection_defect",
]

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One splitmix64 step; the documented stream-mixing function."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def _mix_label(label) -> int:
    if isinstance(label, int):
        return splitmix64(label & _MASK64)
    h = 0xCBF29CE484222325  # FNV-1a over the utf-8 bytes
    for byte in str(label).encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK64
    return h


@dataclass(frozen=True)
class RngSeed:
    """Master seed plus a substream id; value type, cheap to derive from."""

    master: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.master & _MASK64,
                                    spawn_key=(self.stream & _MASK64,))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, label) -> "RngSeed":
        """Derive an independent substream keyed by an int or string label."""
        mixed = splitmix64((self.stream & _MASK64) ^ _mix_label(label))
        return RngSeed(self.master, mixed)


@dataclass(frozen=True)
class FactorSample:
    """One draw from x = sqrt(n) u diag(d) v^T + e (exact by construction)."""

    x: np.ndarray
    u: np.ndarray
    d: np.ndarray
    v: np.ndarray
    e: np.ndarray
    config: dict = field(default_factory=dict)

    @property
    def signal(self) -> np.ndarray:
        return self.x - self.e

    @property
    def shape(self) -> tuple[int, int]:
        return self.x.shape


def sample_stiefel(p: int, k: int, seed: RngSeed) -> np.ndarray:
    """Uniform draw from the orthonormal k-frames in R^p.

    Gaussian p x k draw, QR, first k columns of Q, then random +-1 column
    flips to undo the sign bias of the QR factor.
    """
    if not 1 <= k <= p:
        raise DomainError(f"need 1 <= k <= p, got k={k}, p={p}")
    rng = seed.generator()
    z = rng.standard_normal((p, k))
    q, _ = np.linalg.qr(z)
    signs = rng.integers(0, 2, size=k) * 2.0 - 1.0
    return q[:, :k] * signs


def sample_rotation(n: int, seed: RngSeed) -> np.ndarray:
    """Uniformly random n x n orthogonal matrix."""
    return sample_stiefel(n, n, seed)


def gen_factors(n: int, p: int, k0: int, seed: RngSeed, kind: str = "gaussian",
                sparsity: float = 0.1) -> tuple[np.ndarray, np.ndarray]:
    """Draw the factor matrices (U, V), scaled so E[U^T U] = E[V^T V] = I.

    gaussian: iid N(0, 1/n) and N(0, 1/p) entries.
    sparse:   entries 0 with prob 1-s, +-1/sqrt(s n) (resp. s p) with prob s/2
              each, so a rank-1 outer product touches about s^2 of the cells.
    """
    if k0 > min(n, p):
        raise DomainError(f"k0={k0} exceeds min(n, p)={min(n, p)}")
    rng = seed.generator()
    if kind == "gaussian":
        u = rng.standard_normal((n, k0)) / math.sqrt(n)
        v = rng.standard_normal((p, k0)) / math.sqrt(p)
    elif kind == "sparse":
        if not 0.0 < sparsity <= 1.0:
            raise DomainError(f"sparsity must be in (0, 1], got {sparsity}")

        def draw(rows, scale):
            active = rng.random((rows, k0)) < sparsity
            signs = rng.integers(0, 2, size=(rows, k0)) * 2.0 - 1.0
            return np.where(active, signs / math.sqrt(sparsity * scale), 0.0)

        u = draw(n, n)
        v = draw(p, p)
    else:
        raise DomainError(f"unknown factor kind {kind!r}")
    return u, v


def gen_noise(n: int, p: int, sigma2: float, seed: RngSeed, kind: str = "white",
              nu: float = 3.0, nu2: Optional[float] = None) -> np.ndarray:
    """Noise matrix with E[e_ij^2] = sigma2 for every kind.

    white:   iid Gaussian.
    heavy:   iid t_nu scaled by 1/sqrt(nu/(nu-2)).
    colored: N(0, s_i^2 + t_j^2)/c with inverse-chi^2(nu), inverse-chi^2(nu2)
             row/column scales and c^2 = 1/(nu-2) + 1/(nu2-2); simulates
             heteroscedasticity across both rows and columns.
    """
    if sigma2 < 0:
        raise DomainError(f"sigma2 must be nonnegative, got {sigma2}")
    rng = seed.generator()
    sigma = math.sqrt(sigma2)
    if kind == "white":
        return sigma * rng.standard_normal((n, p))
    if kind == "heavy":
        if not nu > 2:
            raise DomainError(f"heavy noise needs nu > 2, got {nu}")
        return sigma * rng.standard_t(nu, size=(n, p)) / math.sqrt(nu / (nu - 2.0))
    if kind == "colored":
        nu2 = nu if nu2 is None else nu2
        if not (nu > 2 and nu2 > 2):
            raise DomainError(f"colored noise needs nu, nu2 > 2, got {nu}, {nu2}")
        row_scale = 1.0 / rng.chisquare(nu, size=n)
        col_scale = 1.0 / rng.chisquare(nu2, size=p)
        c = math.sqrt(1.0 / (nu - 2.0) + 1.0 / (nu2 - 2.0))
        sd = np.sqrt(row_scale[:, None] + col_scale[None, :])
        return sigma * rng.standard_normal((n, p)) * sd / c
    raise DomainError(f"unknown noise kind {kind!r}")


def sample_model(n: int, p: int, strengths, seed: RngSeed,
                 factor_kind: str = "stiefel", noise_kind: str = "white",
                 sigma2: float = 1.0, sparsity: float = 0.1, nu: float = 3.0,
                 nu2: Optional[float] = None,
                 orthonormalize: bool = False) -> FactorSample:
    """Draw x = sqrt(n) u diag(d) v^T + e.

    `strengths` is the diagonal of D (nonincreasing, nonnegative); empty or
    all-zero strengths give pure noise.  factor_kind "stiefel" draws exact
    orthonormal frames; "gaussian"/"sparse" factors are orthonormal only in
    expectation unless orthonormalize=True re-orthonormalizes them by QR.
    """
    d = np.asarray(strengths, dtype=np.float64).ravel()
    if (d < 0).any() or (d[:-1] < d[1:]).any():
        raise DomainError("strengths must be nonincreasing and nonnegative")
    k0 = d.shape[0]
    config = dict(n=n, p=p, strengths=tuple(float(v) for v in d),
                  factor_kind=factor_kind, noise_kind=noise_kind,
                  sigma2=float(sigma2), sparsity=float(sparsity),
                  nu=float(nu), nu2=None if nu2 is None else float(nu2),
                  orthonormalize=bool(orthonormalize),
                  master=seed.master, stream=seed.stream)
    e = gen_noise(n, p, sigma2, seed.child("noise"), kind=noise_kind, nu=nu, nu2=nu2)
    if k0 == 0:
        zero_u = np.zeros((n, 0))
        zero_v = np.zeros((p, 0))
        return FactorSample(x=e.copy(), u=zero_u, d=d, v=zero_v, e=e, config=config)
    if factor_kind == "stiefel":
        u = sample_stiefel(n, k0, seed.child("u"))
        v = sample_stiefel(p, k0, seed.child("v"))
    else:
        u, v = gen_factors(n, p, k0, seed.child("uv"), kind=factor_kind,
                           sparsity=sparsity)
        if orthonormalize:
            u, _ = np.linalg.qr(u)
            v, _ = np.linalg.qr(v)
    x = math.sqrt(n) * ((u * d) @ v.T) + e
    return FactorSample(x=x, u=u, d=d, v=v, e=e, config=config)


def frame_projection_defect(u, q: int, seed: RngSeed) -> float:
    """Squared Frobenius departure-from-frame of a random q-dimensional
    projection of an orthonormal k-frame.

    Projects u (p x k, orthonormal columns) by a uniform q-frame V, rescales
    by sqrt(p/q), polar-decomposes the result into frame + defect, and
    returns ||sqrt(q) (proj - frame)||_F^2.  Zero when q = p.
    """
    u = np.asarray(u, dtype=np.float64)
    p, k = u.shape
    if not k <= q <= p:
        raise DomainError(f"need k <= q <= p, got k={k}, q={q}, p={p}")
    v = sample_stiefel(p, q, seed)
    proj = math.sqrt(p / q) * (v.T @ u)
    pl, _, qr = np.linalg.svd(proj, full_matrices=False)
    frame = pl @ qr
    defect = math.sqrt(q) * (proj - frame)
    return float((defect * defect).sum())
