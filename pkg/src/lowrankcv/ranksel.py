"""Rank choice from criterion curves, penalized BIC criteria, ground-truth
losses when the generative factors are known, and optimal singular-value
shrinkage."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import matrix_core as mc
from . import rmt
from .errors import DomainError
from .randmat import FactorSample, RngSeed, gen_noise

__all__ = [
    "RankDecision",
    "BicCurves",
    "true_me",
    "true_pe",
    "bic_curves",
    "scree_values",
    "pick_rank",
    "shrunk_truncate",
    "write_criteria_csv",
]

_LOG_FLOOR = 1e-300


@dataclass(frozen=True)
class RankDecision:
    chosen_k: int
    criterion: np.ndarray
    method: str = ""


@dataclass(frozen=True)
class BicCurves:
    bic1: np.ndarray
    bic2: np.ndarray
    bic3: np.ndarray


def _loss_curve(target: np.ndarray, x: np.ndarray, k_max: int) -> np.ndarray:
    """(1/np) ||target - x_hat(k)||_F^2 for k = 0..k_max."""
    n, p = x.shape
    f = mc.svd(x)
    out = np.empty(k_max + 1)
    resid = target.copy()
    out[0] = float((resid * resid).sum()) / (n * p)
    for k in range(1, k_max + 1):
        resid = resid - f.d[k - 1] * np.outer(f.u[:, k - 1], f.v[:, k - 1])
        out[k] = float((resid * resid).sum()) / (n * p)
    return out


def true_me(sample: FactorSample, k_max: int) -> np.ndarray:
    """Exact model error (1/np) ||signal - x_hat(k)||_F^2 per rank."""
    if not 0 <= k_max <= min(sample.shape):
        raise DomainError(f"k_max={k_max} outside [0, {min(sample.shape)}]")
    return _loss_curve(sample.signal, sample.x, k_max)


def true_pe(sample: FactorSample, k_max: int, noise_seed: RngSeed) -> np.ndarray:
    """Single-draw prediction error (1/np) ||x' - x_hat(k)||_F^2 where x' is
    the signal plus an independent noise copy of the same kind; unbiased for
    PE(k) = E[ME(k)] + E||E||^2 / np."""
    if not 0 <= k_max <= min(sample.shape):
        raise DomainError(f"k_max={k_max} outside [0, {min(sample.shape)}]")
    cfg = sample.config
    n, p = sample.shape
    fresh = gen_noise(n, p, cfg.get("sigma2", 1.0), noise_seed,
                      kind=cfg.get("noise_kind", "white"),
                      nu=cfg.get("nu", 3.0), nu2=cfg.get("nu2"))
    return _loss_curve(sample.signal + fresh, sample.x, k_max)


def bic_curves(x, k_max: int) -> BicCurves:
    """Three BIC-style criteria on the truncation residual, natural logs.

    With C = min(sqrt(n), sqrt(p)) and R(k) = ||x - x_hat(k)||_F^2:
        bic1(k) = log R(k) + k ((n+p)/(np)) log(np/(n+p))
        bic2(k) = log R(k) + k ((n+p)/(np)) log(C^2)
        bic3(k) = log R(k) + k log(C^2) / C^2
    A zero residual is floored at 1e-300 so the curves stay ordered.
    """
    x = mc.dense(x)
    n, p = x.shape
    if not 0 <= k_max < min(n, p):
        raise DomainError(f"k_max={k_max} outside [0, {min(n, p)})")
    d = np.linalg.svd(x, compute_uv=False)
    tail = np.concatenate([np.cumsum((d ** 2)[::-1])[::-1], [0.0]])
    resid = np.maximum(tail[: k_max + 1], _LOG_FLOOR)
    ks = np.arange(k_max + 1, dtype=np.float64)
    log_resid = np.log(resid)
    c = min(math.sqrt(n), math.sqrt(p))
    rate = (n + p) / (n * p)
    return BicCurves(
        bic1=log_resid + ks * rate * math.log(n * p / (n + p)),
        bic2=log_resid + ks * rate * math.log(c * c),
        bic3=log_resid + ks * math.log(c * c) / (c * c),
    )


def scree_values(x) -> np.ndarray:
    """Squared singular values normalized to sum to one (scree-plot units)."""
    d = np.linalg.svd(mc.dense(x), compute_uv=False)
    d2 = d ** 2
    total = d2.sum()
    return d2 / total if total > 0 else d2


def pick_rank(criterion, method: str = "") -> RankDecision:
    """Smallest rank attaining the minimum of the criterion."""
    values = np.asarray(criterion, dtype=np.float64)
    if values.size == 0:
        raise DomainError("criterion is empty")
    return RankDecision(chosen_k=int(np.argmin(values)), criterion=values,
                        method=method)


def shrunk_truncate(x, k: int, gamma: float, sigma2: float) -> np.ndarray:
    """Rank-k truncation with each kept singular value of x/sqrt(n) passed
    through the Frobenius-optimal shrinker (bulk-edge values map to zero)."""
    x = mc.dense(x)
    n = x.shape[0]
    if not 0 <= k <= min(x.shape):
        raise DomainError(f"k={k} outside [0, {min(x.shape)}]")
    f = mc.svd(x)
    rn = math.sqrt(n)
    d_shrunk = np.array([rmt.shrink(di / rn, gamma, sigma2) * rn for di in f.d[:k]])
    return (f.u[:, :k] * d_shrunk) @ f.v[:, :k].T


def write_criteria_csv(path, x, k_max: int) -> None:
    """Criterion CSV: k, bic1, bic2, bic3, scree (scree blank at k=0)."""
    curves = bic_curves(x, k_max)
    scree = scree_values(x)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("k,bic1,bic2,bic3,scree\n")
        for k in range(k_max + 1):
            s = repr(float(scree[k - 1])) if k >= 1 else ""
            fh.write(f"{k},{curves.bic1[k]!r},{curves.bic2[k]!r},{curves.bic3[k]!r},{s}\n")
