"""Closed-form asymptotic oracles for the low-rank-plus-noise model.

Conventions.  The data model is X = sqrt(n) U D V^T + E with n x p noise of
variance sigma2 and aspect ratio gamma = n/p held fixed as both dimensions
grow.  Factor strengths are quoted as mu_i = d_i^2 (squared entries of D).
Every function takes sigma2 explicitly; quantities at general sigma2 follow
from the unit-variance ones by homogeneity (eigenvalue-scale quantities pick
up a factor sigma2, angles are invariant).

Reference values (gamma=1, sigma2=1, mu=4): top-eigenvalue limit 6.25,
squared cosines 0.75/0.75, Frobenius penalty alpha = 11/16, inclusion
threshold mu* = 3.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .errors import DegenerateSpectrum, DomainError, ShapeError, SingularShift

__all__ = [
    "SpikedModel",
    "FactorLimit",
    "SpikedLimits",
    "LossLimitCurve",
    "BcvPlan",
    "mp_edges",
    "mp_pdf",
    "mp_cdf",
    "stieltjes",
    "stieltjes_inverse",
    "spiked_limits",
    "spiked_value_covariance",
    "frob_alpha",
    "frob_cutoff",
    "loss_limit_curves",
    "shrink",
    "secular_t0",
    "secular_tn",
    "perturb_eigs",
    "bcv_bias",
    "bcv_plan",
    "bcv_plan_paper_general",
]


@dataclass(frozen=True)
class SpikedModel:
    """Population description: aspect ratio, noise variance, and strictly
    decreasing positive factor strengths mu_1 > ... > mu_k0 > 0."""

    gamma: float
    sigma2: float
    mus: tuple[float, ...]

    def __post_init__(self):
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise DomainError(f"gamma must be finite and positive, got {self.gamma}")
        if not (np.isfinite(self.sigma2) and self.sigma2 > 0):
            raise DomainError(f"sigma2 must be finite and positive, got {self.sigma2}")
        mus = tuple(float(m) for m in self.mus)
        if any(m <= 0 for m in mus) or any(a <= b for a, b in zip(mus, mus[1:])):
            raise DomainError("factor strengths must be strictly decreasing and positive")
        object.__setattr__(self, "mus", mus)

    @property
    def k0(self) -> int:
        return len(self.mus)

    @property
    def detection_threshold(self) -> float:
        return self.sigma2 / math.sqrt(self.gamma)


@dataclass(frozen=True)
class FactorLimit:
    mu_bar: float
    theta2: float
    phi2: float
    above_threshold: bool


@dataclass(frozen=True)
class SpikedLimits:
    factors: tuple[FactorLimit, ...]
    bulk_edge: float


@dataclass(frozen=True)
class LossLimitCurve:
    ranks: np.ndarray        # 0..k_max
    frob_limit: np.ndarray   # limit of p * ME(k)
    spec_limit: np.ndarray   # limit of (1/n) * squared spectral loss
    alphas: np.ndarray       # per-factor inclusion penalty


@dataclass(frozen=True)
class BcvPlan:
    K: float
    L: float
    rho: float
    gamma1: float
    eta: float
    betas: tuple[float, ...]


# ---------------------------------------------------------------------------
# Marchenko-Pastur law for S = (1/n) X^T X with unit-variance entries.
# ---------------------------------------------------------------------------

def mp_edges(gamma: float) -> tuple[float, float]:
    """Support edges a = (1 - gamma^-1/2)^2, b = (1 + gamma^-1/2)^2."""
    if not (np.isfinite(gamma) and gamma > 0):
        raise DomainError(f"gamma must be positive, got {gamma}")
    r = 1.0 / math.sqrt(gamma)
    return (1.0 - r) ** 2, (1.0 + r) ** 2


def mp_pdf(x, gamma: float):
    """Density (gamma / 2 pi x) sqrt((x-a)(b-x)) on [a, b], zero elsewhere.

    For gamma < 1 the continuous part integrates to gamma and the law has an
    additional point mass 1 - gamma at the origin (not part of the density).
    """
    a, b = mp_edges(gamma)
    x = np.asarray(x, dtype=np.float64)
    inside = (x > a) & (x < b) & (x > 0)
    val = np.zeros_like(x)
    xs = x[inside]
    val[inside] = gamma / (2.0 * np.pi * xs) * np.sqrt((xs - a) * (b - xs))
    return val if val.ndim else float(val)


def mp_cdf(x, gamma: float) -> float:
    """Distribution function of the spectral law, point mass included."""
    a, b = mp_edges(gamma)
    x = float(x)
    atom = max(0.0, 1.0 - gamma)  # mass at 0 when gamma < 1
    if x < 0:
        return 0.0
    if x <= a:
        return atom
    hi = min(x, b)
    integral, _ = quad(lambda t: mp_pdf(t, gamma), a, hi, epsabs=1e-10, limit=200)
    return min(1.0, atom + integral)


def stieltjes(z: float, gamma: float) -> float:
    """Stieltjes transform m(z) = int dF(t)/(t - z) on the real branch z > b.

    Closed form: gamma * (-(z - 1 + 1/gamma) + sqrt((z-b)(z-a))) / (2 z).
    Negative and strictly increasing above the bulk; z m(z) -> -1 at infinity.
    """
    a, b = mp_edges(gamma)
    if not z > b:
        raise DomainError(f"z={z} must lie above the bulk edge b={b}")
    return gamma * (-(z - 1.0 + 1.0 / gamma) + math.sqrt((z - b) * (z - a))) / (2.0 * z)


def stieltjes_inverse(m: float, gamma: float) -> float:
    """Inverse z(m) = -1/m + 1/(1 + m/gamma) on m in (-1/(gamma^-1/2 + 1/gamma), 0)."""
    lo = -1.0 / (1.0 / math.sqrt(gamma) + 1.0 / gamma)
    if not (lo < m < 0.0):
        raise DomainError(f"m={m} outside the invertible range ({lo}, 0)")
    return -1.0 / m + 1.0 / (1.0 + m / gamma)


# ---------------------------------------------------------------------------
# Spiked limits: sample eigenvalues and squared cosines.
# ---------------------------------------------------------------------------

def spiked_limits(model: SpikedModel) -> SpikedLimits:
    """Almost-sure limits of the top sample eigenvalues of (1/n) X^T X and of
    the squared cosines between sample and population singular vectors.

    Above the detection threshold mu > sigma2/sqrt(gamma):
        mu_bar = (mu + s2) (1 + s2/(gamma mu))
        theta2 = (1 - s4/(gamma mu^2)) / (1 + s2/(gamma mu))   (right vectors)
        phi2   = (1 - s4/(gamma mu^2)) / (1 + s2/mu)           (left vectors)
    Below it the eigenvalue sticks to the bulk edge and the cosines vanish.
    """
    g, s2 = model.gamma, model.sigma2
    edge = s2 * (1.0 + 1.0 / math.sqrt(g)) ** 2
    thr = model.detection_threshold
    factors = []
    for mu in model.mus:
        if mu > thr:
            common = 1.0 - s2 * s2 / (g * mu * mu)
            factors.append(FactorLimit(
                mu_bar=(mu + s2) * (1.0 + s2 / (g * mu)),
                theta2=common / (1.0 + s2 / (g * mu)),
                phi2=common / (1.0 + s2 / mu),
                above_threshold=True,
            ))
        else:
            factors.append(FactorLimit(mu_bar=edge, theta2=0.0, phi2=0.0,
                                       above_threshold=False))
    return SpikedLimits(factors=tuple(factors), bulk_edge=edge)


def spiked_value_covariance(model: SpikedModel, sigma_d) -> np.ndarray:
    """Limiting covariance of sqrt(n) (mu_hat - mu_bar).

    `sigma_d` holds the per-factor variances of sqrt(n)(d_i^2 - mu_i); the
    strengths are assumed uncorrelated across factors, so off-diagonal terms
    carry only the delta_ij contribution (zero).  Rows/columns of factors at
    or below the detection threshold are zero.
    """
    g, s2 = model.gamma, model.sigma2
    sigma_d = np.asarray(sigma_d, dtype=np.float64)
    if sigma_d.shape != (model.k0,) or (sigma_d < 0).any():
        raise DomainError("sigma_d must be a nonnegative vector of length k0")
    thr = model.detection_threshold
    out = np.zeros((model.k0, model.k0))
    for i, mu in enumerate(model.mus):
        if mu > thr:
            c = 1.0 - s2 * s2 / (g * mu * mu)
            out[i, i] = sigma_d[i] * c * c \
                + 2.0 * s2 * (2.0 * mu + (1.0 + 1.0 / g) * s2) * c
    return out


# ---------------------------------------------------------------------------
# Frobenius / spectral loss limits of the truncated SVD.
# ---------------------------------------------------------------------------

def frob_alpha(mu: float, gamma: float, sigma2: float) -> float:
    """Relative Frobenius penalty for keeping a factor of strength mu:
    excluding term i costs mu_i, including it costs alpha_i * mu_i."""
    if not mu > 0:
        raise DomainError(f"mu must be positive, got {mu}")
    if mu > sigma2 / math.sqrt(gamma):
        return sigma2 * (3.0 * sigma2 + (gamma + 1.0) * mu) / (gamma * mu * mu)
    return 1.0 + (sigma2 / mu) * (1.0 + 1.0 / math.sqrt(gamma)) ** 2


def frob_cutoff(gamma: float, sigma2: float) -> float:
    """Inclusion threshold mu*: alpha(mu*) = 1, keeping a term helps iff mu > mu*."""
    if not (np.isfinite(gamma) and gamma > 0):
        raise DomainError(f"gamma must be positive, got {gamma}")
    half = (1.0 + 1.0 / gamma) / 2.0
    return sigma2 * (half + math.sqrt(half * half + 3.0 / gamma))


def _f_block_tr_det(mu: float, kept: bool, gamma: float, sigma2: float) -> tuple[float, float]:
    """(trace, det) of F_i(k)^T F_i(k) for one factor; mu=0 encodes i > k0."""
    edge = sigma2 * (1.0 + 1.0 / math.sqrt(gamma)) ** 2
    if not kept:
        return mu, 0.0
    if mu == 0.0:  # pure-noise direction picked up beyond k0
        return edge, 0.0
    if mu > sigma2 / math.sqrt(gamma):
        tr = (sigma2 / (gamma * mu)) * (3.0 * sigma2 + (gamma + 1.0) * mu)
        det = (sigma2 / (gamma * mu)) ** 2 * (mu + sigma2) * (gamma * mu + sigma2)
        return tr, det
    return mu + edge, mu * edge


def loss_limit_curves(model: SpikedModel, k_max: int) -> LossLimitCurve:
    """Limits of p * ME(k) (Frobenius) and of the normalized squared spectral
    loss, for k = 0..k_max, plus the per-factor alpha penalties."""
    if k_max < model.k0:
        raise DomainError(f"k_max={k_max} must be >= k0={model.k0}")
    g, s2 = model.gamma, model.sigma2
    edge = s2 * (1.0 + 1.0 / math.sqrt(g)) ** 2
    alphas = np.array([frob_alpha(mu, g, s2) for mu in model.mus])
    mus = np.asarray(model.mus)
    frob = np.empty(k_max + 1)
    spec = np.empty(k_max + 1)
    for k in range(k_max + 1):
        kept = min(k, model.k0)
        frob[k] = float(np.dot(alphas[:kept], mus[:kept]) + mus[kept:].sum()
                        + edge * max(k - model.k0, 0))
        worst = 0.0
        for i in range(max(k, model.k0)):
            mu = model.mus[i] if i < model.k0 else 0.0
            tr, det = _f_block_tr_det(mu, i < k, g, s2)
            top = 0.5 * (tr + math.sqrt(max(tr * tr - 4.0 * det, 0.0)))
            worst = max(worst, top)
        spec[k] = worst
    return LossLimitCurve(ranks=np.arange(k_max + 1), frob_limit=frob,
                          spec_limit=spec, alphas=alphas)


def shrink(d_hat: float, gamma: float, sigma2: float) -> float:
    """Frobenius-optimal shrinker for a singular value d_hat of X/sqrt(n):
    zero at or below the bulk edge sigma (1 + gamma^-1/2), else
    sqrt(d^2 - 2(1 + 1/gamma) s2 + (1 - 1/gamma)^2 s4 / d^2)."""
    if d_hat < 0:
        raise DomainError(f"d_hat must be nonnegative, got {d_hat}")
    sigma = math.sqrt(sigma2)
    if d_hat <= sigma * (1.0 + 1.0 / math.sqrt(gamma)):
        return 0.0
    d2 = d_hat * d_hat
    val = d2 - 2.0 * (1.0 + 1.0 / gamma) * sigma2 \
        + (1.0 - 1.0 / gamma) ** 2 * sigma2 * sigma2 / d2
    return math.sqrt(max(val, 0.0))


# ---------------------------------------------------------------------------
# Secular equation.
# ---------------------------------------------------------------------------

def secular_t0(z: float, model: SpikedModel) -> np.ndarray:
    """Deterministic limit of the secular matrix for z above the scaled bulk
    edge: diagonal with entries mu_i / (1 + m/gamma) + sigma2 / m, evaluated
    at m = m(z / sigma2).  Entry i has its root at z = mu_bar_i for factors
    above the detection threshold."""
    g, s2 = model.gamma, model.sigma2
    _, b = mp_edges(g)
    if not z > s2 * b:
        raise DomainError(f"z={z} must lie above the scaled bulk edge {s2 * b}")
    m = stieltjes(z / s2, g)
    diag = np.array([mu / (1.0 + m / g) + s2 / m for mu in model.mus])
    return np.diag(diag)


def secular_tn(z: float, s11, s12, s21, s22) -> np.ndarray:
    """Finite-n secular matrix T(z) = S11 - z I - S12 (S22 - z I)^{-1} S21.

    det T(mu_hat) = 0 exactly when mu_hat is an eigenvalue of the full blocked
    matrix not shared with S22.  Raises SingularShift when z sits within
    working precision of an eigenvalue of S22.
    """
    s11 = np.atleast_2d(np.asarray(s11, dtype=np.float64))
    s12 = np.atleast_2d(np.asarray(s12, dtype=np.float64))
    s21 = np.atleast_2d(np.asarray(s21, dtype=np.float64))
    s22 = np.atleast_2d(np.asarray(s22, dtype=np.float64))
    k = s11.shape[0]
    if s11.shape != (k, k) or s12.shape[0] != k or s21.shape[1] != k \
            or s22.shape[0] != s22.shape[1] or s12.shape[1] != s22.shape[0] \
            or s21.shape[0] != s22.shape[0]:
        raise ShapeError("inconsistent block shapes")
    eigs = np.linalg.eigvalsh(s22)
    scale = max(1.0, abs(z), float(np.abs(eigs).max(initial=0.0)))
    if np.min(np.abs(eigs - z)) <= 1e-12 * scale:
        raise SingularShift(f"z={z} is within working precision of an eigenvalue of S22")
    core = np.linalg.solve(s22 - z * np.eye(s22.shape[0]), s21)
    return s11 - z * np.eye(k) - s12 @ core


def perturb_eigs(lam, h, n: float) -> tuple[np.ndarray, np.ndarray]:
    """First-order eigen-perturbation for Lambda + H/sqrt(n) with distinct,
    decreasing lam: predicted eigenvalues l_i = lam_i + H_ii/sqrt(n) and
    eigenvector matrix U_ii = 1, U_ij = -H_ij / (sqrt(n) (lam_i - lam_j))."""
    lam = np.asarray(lam, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    p = lam.shape[0]
    if h.shape != (p, p):
        raise ShapeError("H must be square and match lam")
    gaps = lam[:-1] - lam[1:]
    if p > 1 and gaps.min(initial=np.inf) <= 0:
        raise DegenerateSpectrum("lam must be strictly decreasing")
    rn = math.sqrt(n)
    l_pred = lam + np.diag(h) / rn
    u_pred = np.eye(p)
    if p > 1:
        denom = lam[:, None] - lam[None, :]
        np.fill_diagonal(denom, 1.0)
        off = -h / (rn * denom)
        np.fill_diagonal(off, 0.0)
        u_pred = u_pred + off
    return l_pred, u_pred


# ---------------------------------------------------------------------------
# Bi-cross-validation bias and leave-out planning.
# ---------------------------------------------------------------------------

def bcv_bias(model: SpikedModel, K: float, L: float) -> BcvPlan:
    """Expected-model-error bias multipliers for (K, L)-fold blocked CV.

    With rho = (K-1)/K * (L-1)/L and w = gamma (K-1)/K + (L-1)/L, a factor
    above the blocked-CV detection threshold mu > sigma2/sqrt(rho gamma) gets

        beta = (s2/(g mu^2)) (3 s2 + w mu) / (rho + w s2/(g mu) + s4/(g mu^2))

    and below it beta = 1 + eta/mu with
    eta = s2 / (sqrt(g) + sqrt(K/(K-1)) sqrt((L-1)/L))^2.  The estimated
    error curve then tends to sum(beta_i mu_i) + tail + eta (k - k0)_+, and
    beta < 1 exactly when mu > (s2/sqrt(g)) sqrt(2/rho).
    """
    if not (K > 1 and L > 1):
        raise DomainError(f"fold counts must exceed 1, got K={K}, L={L}")
    g, s2 = model.gamma, model.sigma2
    rho = (K - 1.0) / K * (L - 1.0) / L
    gamma1 = (K - 1.0) / K * L / (L - 1.0) * g
    eta = s2 / (math.sqrt(g) + math.sqrt(K / (K - 1.0)) * math.sqrt((L - 1.0) / L)) ** 2
    w = g * (K - 1.0) / K + (L - 1.0) / L
    thr = s2 / math.sqrt(rho * g)
    betas = []
    for mu in model.mus:
        if mu > thr:
            num = (s2 / (g * mu * mu)) * (3.0 * s2 + w * mu)
            den = rho + w * s2 / (g * mu) + s2 * s2 / (g * mu * mu)
            betas.append(num / den)
        else:
            betas.append(1.0 + eta / mu)
    return BcvPlan(K=float(K), L=float(L), rho=rho, gamma1=gamma1, eta=eta,
                   betas=tuple(betas))


def _gamma_bar(gamma: float) -> float:
    return ((math.sqrt(gamma) + 1.0 / math.sqrt(gamma)) / 2.0) ** 2


def bcv_plan(gamma: float) -> tuple[float, float]:
    """Leave-out fraction rho* at which the blocked-CV crossover coincides
    with the Frobenius inclusion threshold, and the matching symmetric fold
    count K = L = 1 / (1 - sqrt(rho*)).

    sqrt(rho*) = sqrt(2) / (sqrt(gbar) + sqrt(gbar + 3)) with
    gbar = ((gamma^1/2 + gamma^-1/2)/2)^2; at gamma = 1 this gives
    rho* = 2/9 and K ~ 1.8918 (folds need not be integers).
    """
    if not (np.isfinite(gamma) and gamma > 0):
        raise DomainError(f"gamma must be positive, got {gamma}")
    gb = _gamma_bar(gamma)
    sqrt_rho = math.sqrt(2.0) / (math.sqrt(gb) + math.sqrt(gb + 3.0))
    return sqrt_rho * sqrt_rho, 1.0 / (1.0 - sqrt_rho)


def bcv_plan_paper_general(gamma: float) -> float:
    """Alternative closed form K = 3 / (3 - 2 (sqrt(gbar+3) - sqrt(gbar))).

    Warning: at gamma = 1 this evaluates to K = 3, which is inconsistent with
    the symmetric-fold solution K ~ 1.8918 implied by (K-1)/K = sqrt(rho*);
    the two cannot both satisfy rho = ((K-1)/K)^2 = 2/9.  Kept only for
    side-by-side comparison; bcv_plan is the planning default.
    """
    if not (np.isfinite(gamma) and gamma > 0):
        raise DomainError(f"gamma must be positive, got {gamma}")
    gb = _gamma_bar(gamma)
    return 3.0 / (3.0 - 2.0 * (math.sqrt(gb + 3.0) - math.sqrt(gb)))
