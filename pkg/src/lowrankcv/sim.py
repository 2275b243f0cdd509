"""Seeded replicate runner: regenerates the standard simulation designs and
emits rank-offset tables and loss/error curves as CSV.

Reproducibility.  Every replicate derives its streams from the master seed
alone: the data draw and the oracle noise copy are keyed by the replicate
index, and each method's internal randomness (fold assignments, rotations)
is keyed by (replicate index, method name).  Adding or reordering methods
therefore never changes any other method's draws, and an identical SimConfig
produces byte-identical CSV output.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from . import cv as cv_mod
from . import ranksel, rmt
from .errors import DomainError
from .randmat import RngSeed, sample_model

__all__ = [
    "SimConfig",
    "SimReport",
    "METHODS",
    "WEAK_STRENGTHS",
    "run_simulation",
    "loss_sweep",
    "spectrum_experiment",
    "write_offsets_csv",
    "write_curves_csv",
    "write_manifest",
]

WEAK_STRENGTHS = (10.0, 9.0, 8.0, 7.0, 6.0, 5.0)

WOLD_FOLDS_DEFAULT = 5
GABRIEL_FOLDS_DEFAULT = (2, 2)


@dataclass(frozen=True)
class SimConfig:
    n: int = 100
    p: int = 50
    k0: int = 6
    strength: str | tuple = "strong"   # "strong" | "weak" | explicit d values
    factor_kind: str = "gaussian"      # gaussian | sparse | stiefel
    noise_kind: str = "white"          # white | heavy | colored
    methods: tuple = ("cv-wold", "cv-gabriel", "bic3")
    replicates: int = 50
    master_seed: int = 0
    k_max: Optional[int] = None
    sigma2: float = 1.0
    sparsity: float = 0.1
    nu: float = 3.0

    def __post_init__(self):
        if self.replicates < 1:
            raise DomainError("replicates must be >= 1")
        if not self.methods:
            raise DomainError("methods must be nonempty")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise DomainError(f"unknown methods {unknown}; known: {sorted(METHODS)}")

    def strengths(self) -> tuple:
        if isinstance(self.strength, str):
            if self.k0 > len(WEAK_STRENGTHS):
                raise DomainError("named strengths support k0 <= 6; pass explicit values")
            base = WEAK_STRENGTHS[: self.k0]
            if self.strength == "weak":
                return base
            if self.strength == "strong":
                return tuple(math.sqrt(self.n) * d for d in base)
            raise DomainError(f"unknown strength preset {self.strength!r}")
        return tuple(float(v) for v in self.strength)

    def effective_k_max(self) -> int:
        if self.k_max is not None:
            return self.k_max
        return min(self.k0 + 8, min(self.n, self.p) - 1)


@dataclass
class SimReport:
    config: SimConfig
    offsets: dict            # method -> {offset: count}
    records: list            # per replicate: {"true_k": int, "chosen": {...}}
    curves: dict             # method -> {"mean": [...], "sd": [...]}
    failures: dict = field(default_factory=dict)  # method -> count


# ---------------------------------------------------------------------------
# Rank-selection methods.  Each takes (sample, k_max, seed) and returns
# (chosen_k, criterion curve).  The oracle method returns the true minimizer.
# ---------------------------------------------------------------------------

def _wold(x, k_max, seed, rotate):
    if rotate:
        x, _, _ = cv_mod.rotated(x, seed.child("rotate"))
    plan = cv_mod.wold_plan(x.shape[0], x.shape[1], WOLD_FOLDS_DEFAULT,
                            seed.child("plan"))
    curve = cv_mod.wold_pe(x, plan, k_max)
    return curve.chosen_k, curve.pe_mean


def _gabriel(x, k_max, seed, rotate):
    if rotate:
        x, _, _ = cv_mod.rotated(x, seed.child("rotate"))
    plan = cv_mod.gabriel_plan(x.shape[0], x.shape[1], *GABRIEL_FOLDS_DEFAULT,
                               seed=seed.child("plan"))
    curve = cv_mod.gabriel_pe(x, plan, k_max)
    return curve.chosen_k, curve.pe_mean


def _bic(which):
    def run(x, k_max, seed, rotate):
        curves = ranksel.bic_curves(x, k_max)
        values = getattr(curves, which)
        return int(np.argmin(values)), values
    return run


METHODS = {
    "cv-wold": lambda x, k, s: _wold(x, k, s, rotate=False),
    "rcv-wold": lambda x, k, s: _wold(x, k, s, rotate=True),
    "cv-gabriel": lambda x, k, s: _gabriel(x, k, s, rotate=False),
    "rcv-gabriel": lambda x, k, s: _gabriel(x, k, s, rotate=True),
    "bic1": lambda x, k, s: _bic("bic1")(x, k, s, False),
    "bic2": lambda x, k, s: _bic("bic2")(x, k, s, False),
    "bic3": lambda x, k, s: _bic("bic3")(x, k, s, False),
    "true-pe": None,  # oracle, handled in the replicate loop
}


def _replicate(config: SimConfig, rep: int):
    master = RngSeed(config.master_seed)
    rep_seed = master.child(rep)
    sample = sample_model(
        config.n, config.p, config.strengths(), rep_seed.child("sample"),
        factor_kind=config.factor_kind, noise_kind=config.noise_kind,
        sigma2=config.sigma2, sparsity=config.sparsity, nu=config.nu)
    k_max = config.effective_k_max()
    pe_true = ranksel.true_pe(sample, k_max, rep_seed.child("fresh-noise"))
    true_k = int(np.argmin(pe_true))
    record = {"true_k": true_k, "chosen": {}, "errors": {}}
    curves = {}
    for name in config.methods:
        if name == "true-pe":
            record["chosen"][name] = true_k
            curves[name] = pe_true
            continue
        method_seed = master.child(rep).child(f"method:{name}")
        try:
            chosen, curve = METHODS[name](sample.x, k_max, method_seed)
        except Exception as exc:  # failure recorded, replicate kept
            record["errors"][name] = f"{type(exc).__name__}: {exc}"
            continue
        record["chosen"][name] = chosen
        curves[name] = curve
    return record, curves


def run_simulation(config: SimConfig, threads: int = 1) -> SimReport:
    """Run all replicates, returning offset histograms (chosen rank minus the
    true prediction-error minimizer) and mean criterion curves per method."""
    reps = range(config.replicates)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda r: _replicate(config, r), reps))
    else:
        results = [_replicate(config, r) for r in reps]

    offsets: dict = {m: {} for m in config.methods}
    failures: dict = {m: 0 for m in config.methods}
    curve_stacks: dict = {m: [] for m in config.methods}
    records = []
    for record, curves in results:  # reduction in replicate order
        records.append(record)
        for m in config.methods:
            if m in record["chosen"]:
                off = record["chosen"][m] - record["true_k"]
                offsets[m][off] = offsets[m].get(off, 0) + 1
                curve_stacks[m].append(curves[m])
            else:
                failures[m] += 1
    curve_summary = {}
    for m, stack in curve_stacks.items():
        if stack:
            arr = np.asarray(stack)
            curve_summary[m] = {"mean": arr.mean(axis=0).tolist(),
                                "sd": arr.std(axis=0, ddof=1).tolist() if len(stack) > 1
                                else [0.0] * arr.shape[1]}
    return SimReport(config=config, offsets=offsets, records=records,
                     curves=curve_summary, failures=failures)


# ---------------------------------------------------------------------------
# Loss sweep and spectrum experiment.
# ---------------------------------------------------------------------------

def loss_sweep(gammas, sizes, strength_multipliers, replicates: int,
               seed: RngSeed, k_max: int = 7, sigma2: float = 1.0) -> list[dict]:
    """Monte Carlo loss curves against their closed-form limits.

    For each (gamma, size) cell: n = round(sqrt(s gamma)), p = round(sqrt(
    s/gamma)); strengths are multipliers of the inclusion threshold mu*
    (so the limit-curve minimizer counts the multipliers above 1); factors
    are uniform frames and the noise is white.  Rows carry the mean and SD
    over replicates of p*ME(k) and of the normalized squared spectral loss,
    next to the predicted limits.
    """
    rows = []
    mults = np.asarray(strength_multipliers, dtype=np.float64)
    for gamma in gammas:
        mu_star = rmt.frob_cutoff(gamma, sigma2)
        mus = tuple(float(m) * mu_star for m in mults)
        model = rmt.SpikedModel(gamma=gamma, sigma2=sigma2, mus=mus)
        limits = rmt.loss_limit_curves(model, k_max)
        d_vals = np.sqrt(np.asarray(mus))
        for s in sizes:
            n = int(round(math.sqrt(s * gamma)))
            p = int(round(math.sqrt(s / gamma)))
            cell_seed = seed.child(f"gamma={gamma},s={s}")
            frob = np.empty((replicates, k_max + 1))
            spec = np.empty((replicates, k_max + 1))
            for r in range(replicates):
                sample = sample_model(n, p, d_vals, cell_seed.child(r),
                                      factor_kind="stiefel", noise_kind="white",
                                      sigma2=sigma2)
                f = np.linalg.svd(sample.x, full_matrices=False)
                resid = sample.signal.copy()
                frob[r, 0] = (resid * resid).sum() / n
                spec[r, 0] = np.linalg.norm(resid, 2) ** 2 / n
                for k in range(1, k_max + 1):
                    resid = resid - f[1][k - 1] * np.outer(f[0][:, k - 1], f[2][k - 1])
                    frob[r, k] = (resid * resid).sum() / n
                    spec[r, k] = np.linalg.norm(resid, 2) ** 2 / n
            for k in range(k_max + 1):
                rows.append(dict(
                    gamma=float(gamma), size=int(s), n=n, p=p, k=k,
                    frob_mean=float(frob[:, k].mean()),
                    frob_sd=float(frob[:, k].std(ddof=1)) if replicates > 1 else 0.0,
                    frob_pred=float(limits.frob_limit[k]),
                    spec_mean=float(spec[:, k].mean()),
                    spec_sd=float(spec[:, k].std(ddof=1)) if replicates > 1 else 0.0,
                    spec_pred=float(limits.spec_limit[k]),
                ))
    return rows


def spectrum_experiment(n: int, p: int, reps: int, seed: RngSeed) -> dict:
    """White-noise spectrum versus the Marchenko-Pastur law.

    Returns the pooled eigenvalue table (eigenvalue, empirical CDF, MP CDF),
    per-replicate Kolmogorov-Smirnov distances, and the top-eigenvalue
    summary against the bulk-edge limit.
    """
    gamma = n / p
    ks_list = []
    top_list = []
    pooled = []
    for r in range(reps):
        rng = seed.child(r).generator()
        x = rng.standard_normal((n, p))
        eigs = np.linalg.eigvalsh(x.T @ x / n)
        eigs = np.sort(eigs)
        cdf_vals = np.array([rmt.mp_cdf(v, gamma) for v in eigs])
        steps = np.arange(1, p + 1) / p
        ks = float(np.max(np.maximum(np.abs(steps - cdf_vals),
                                     np.abs(steps - 1.0 / p - cdf_vals))))
        ks_list.append(ks)
        top_list.append(float(eigs[-1]))
        pooled.append(eigs)
    pooled = np.sort(np.concatenate(pooled))
    grid_idx = np.linspace(0, len(pooled) - 1, min(len(pooled), 512)).astype(int)
    table = [(float(pooled[i]), float((i + 1) / len(pooled)),
              float(rmt.mp_cdf(pooled[i], gamma))) for i in grid_idx]
    _, edge = rmt.mp_edges(gamma)
    return {
        "gamma": gamma,
        "ks": ks_list,
        "ks_mean": float(np.mean(ks_list)),
        "top_eigenvalues": top_list,
        "top_mean": float(np.mean(top_list)),
        "bulk_edge": float(edge),
        "table": table,
    }


# ---------------------------------------------------------------------------
# Output files.
# ---------------------------------------------------------------------------

def write_offsets_csv(path, report: SimReport) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("method,offset,count\n")
        for m in report.config.methods:
            for off in sorted(report.offsets[m]):
                fh.write(f"{m},{off},{report.offsets[m][off]}\n")


def write_curves_csv(path, report: SimReport) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("method,k,mean,sd\n")
        for m in report.config.methods:
            if m not in report.curves:
                continue
            summary = report.curves[m]
            for k, (mean, sd) in enumerate(zip(summary["mean"], summary["sd"])):
                fh.write(f"{m},{k},{mean!r},{sd!r}\n")


def write_loss_sweep_csv(path, rows: list[dict]) -> None:
    cols = ["gamma", "size", "n", "p", "k", "frob_mean", "frob_sd", "frob_pred",
            "spec_mean", "spec_sd", "spec_pred"]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c])
                              for c in cols) + "\n")


def write_manifest(path, payload: dict) -> None:
    """JSON run manifest: config echo, seed, and library versions."""
    meta = dict(payload)
    meta["versions"] = {"lowrankcv": __version__, "numpy": np.__version__}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
