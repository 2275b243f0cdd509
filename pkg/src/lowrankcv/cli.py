"""Command-line front end.

Subcommands: oracle (closed-form quantities), cv (hold-out error curves),
complete (missing-value EM SVD), rank (penalized criteria / scree data),
sim (seeded replicate studies).  Data goes to stdout or to --output files
(written atomically via temp + rename); diagnostics go to stderr.  Exit
codes: 0 success, 1 I/O failure, 2 bad arguments or domain errors.  Every
randomized subcommand either takes --seed or draws one and reports it, and
file outputs get a JSON manifest alongside for replay.
"""

from __future__ import annotations

import argparse
import json
import os
import secrets
import sys
import tempfile

import numpy as np

from . import cv as cv_mod
from . import matrix_core as mc
from . import ranksel, rmt, sim
from .errors import LowRankCVError
from .missing import MaskedMatrix, em_svd
from .randmat import RngSeed

EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2

SIM_PRESETS = {
    f"{strength}-{factor}-{noise}": (strength, kind, noise)
    for strength, factor, kind in [("strong", "gauss", "gaussian"),
                                   ("weak", "gauss", "gaussian"),
                                   ("strong", "sparse", "sparse"),
                                   ("weak", "sparse", "sparse")]
    for noise in ("white", "heavy", "colored")
}


def _atomic_write(path: str, writer) -> None:
    """Run `writer(tmp_path)` then rename over `path`."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-lowrankcv-")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _resolve_seed(args) -> tuple[RngSeed, int]:
    master = args.seed
    if master is None:
        master = secrets.randbits(63)
        print(f"seed: {master} (auto-chosen; pass --seed {master} to replay)",
              file=sys.stderr)
    return RngSeed(int(master)), int(master)


def _write_manifest(output_path: str, payload: dict) -> None:
    _atomic_write(str(output_path) + ".manifest.json",
                  lambda tmp: sim.write_manifest(tmp, payload))


def _parse_mus(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok]


# ---------------------------------------------------------------------------
# oracle
# ---------------------------------------------------------------------------

def _cmd_oracle(args) -> int:
    if args.what == "spiked":
        mus = _parse_mus(args.mu)
        model = rmt.SpikedModel(gamma=args.gamma, sigma2=args.sigma2, mus=tuple(mus))
        limits = rmt.spiked_limits(model)
        mu_star = rmt.frob_cutoff(args.gamma, args.sigma2)
        print("mu,mu_bar,theta2,phi2,alpha,shrunk")
        for mu, fl in zip(model.mus, limits.factors):
            alpha = rmt.frob_alpha(mu, args.gamma, args.sigma2)
            shrunk = rmt.shrink(fl.mu_bar ** 0.5, args.gamma, args.sigma2)
            print(f"{mu:.10g},{fl.mu_bar:.10g},{fl.theta2:.10g},"
                  f"{fl.phi2:.10g},{alpha:.10g},{shrunk:.10g}")
        print(f"mu_star,{mu_star:.10g}")
        print(f"bulk_edge,{limits.bulk_edge:.10g}")
    elif args.what == "bcv-plan":
        rho, folds = rmt.bcv_plan(args.gamma)
        print(f"rho,{rho:.10g}")
        print(f"K,{folds:.10g}")
    elif args.what == "mp":
        lo, hi = rmt.mp_edges(args.gamma)
        print(f"edges,{lo:.10g},{hi:.10g}")
        if args.gamma < 1:
            print(f"point_mass_at_zero,{1.0 - args.gamma:.10g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# cv
# ---------------------------------------------------------------------------

def _cmd_cv(args) -> int:
    values, observed = mc.read_matrix(args.input)
    has_missing = not observed.all()
    seed, master = _resolve_seed(args)
    n, p = values.shape
    folds = _parse_mus(args.folds)
    if args.style == "wold":
        x = values
        if args.rotate:
            if has_missing:
                raise LowRankCVError("--rotate requires complete data (NA found)")
            x, _, _ = cv_mod.rotated(x, seed.child("rotate"))
        plan = cv_mod.wold_plan(n, p, int(folds[0]), seed.child("plan"))
        curve = cv_mod.wold_pe(x, plan, args.kmax,
                               observed=observed if has_missing else None)
    elif args.style == "gabriel":
        if has_missing:
            raise LowRankCVError("gabriel CV requires complete data (NA found)")
        x = values
        if args.rotate:
            x, _, _ = cv_mod.rotated(x, seed.child("rotate"))
        row_f = int(folds[0])
        col_f = int(folds[1]) if len(folds) > 1 else row_f
        plan = cv_mod.gabriel_plan(n, p, row_f, col_f, seed.child("plan"))
        curve = cv_mod.gabriel_pe(x, plan, args.kmax)
    else:  # naive
        if has_missing:
            raise LowRankCVError("naive CV requires complete data (NA found)")
        print("warning: the naive row hold-out curve is nonincreasing in k by "
              "construction and cannot select a rank", file=sys.stderr)
        rng = seed.child("split").generator()
        test_rows = np.sort(rng.permutation(n)[: max(1, n // 2)])
        curve = cv_mod.naive_rowwise_pe(values, test_rows, args.kmax)
    if args.sigma2 != "none":
        if args.sigma2 == "auto":
            if has_missing:
                raise LowRankCVError("--sigma2 auto requires complete data")
            k_hint = min(args.kmax, min(n, p) - 1)
            sigma2_hat = cv_mod.estimate_sigma2(values, k_hint)
        else:
            sigma2_hat = float(args.sigma2)
        curve = cv_mod.me_curve(curve, sigma2_hat)
        print(f"sigma2: {sigma2_hat:.10g}", file=sys.stderr)
    if args.output:
        _atomic_write(args.output, lambda tmp: cv_mod.write_curve_csv(tmp, curve))
        _write_manifest(args.output, {"command": "cv", "style": args.style,
                                      "input": args.input, "folds": args.folds,
                                      "rotate": args.rotate, "kmax": args.kmax,
                                      "sigma2": args.sigma2, "seed": master})
    print(f"chosen_k,{curve.chosen_k}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# complete
# ---------------------------------------------------------------------------

def _cmd_complete(args) -> int:
    values, observed = mc.read_matrix(args.input)
    masked = MaskedMatrix(values=values, observed=observed)
    res = em_svd(masked, args.rank, tol=args.tol, max_iter=args.max_iter)
    if not res.converged:
        print(f"warning: EM hit max_iter={args.max_iter} before converging",
              file=sys.stderr)
    _atomic_write(args.output, lambda tmp: _write_matrix_as(tmp, args.output, res.filled))
    trace_path = args.output + ".rss.csv"
    def _write_trace(tmp):
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write("iteration,rss\n")
            for i, rss in enumerate(res.rss_trace):
                fh.write(f"{i},{rss!r}\n")
    _atomic_write(trace_path, _write_trace)
    _write_manifest(args.output, {"command": "complete", "input": args.input,
                                  "rank": args.rank, "tol": args.tol,
                                  "max_iter": args.max_iter,
                                  "iterations": res.iterations,
                                  "converged": res.converged})
    print(f"iterations,{res.iterations}")
    print(f"converged,{int(res.converged)}")
    print(f"rss,{res.rss_trace[-1]!r}")
    return EXIT_OK


def _write_matrix_as(tmp_path, final_path, a) -> None:
    # mc.write_matrix picks the format from the extension; the temp file has
    # none, so write to a correctly suffixed sibling and move it into place.
    suffix = ".csv" if str(final_path).endswith(".csv") else ".txt"
    shaped = tmp_path + suffix
    mc.write_matrix(shaped, a)
    os.replace(shaped, tmp_path)


# ---------------------------------------------------------------------------
# rank
# ---------------------------------------------------------------------------

def _cmd_rank(args) -> int:
    values, observed = mc.read_matrix(args.input)
    if not observed.all():
        raise LowRankCVError("rank criteria require complete data (NA found)")
    k_max = args.kmax if args.kmax is not None else min(values.shape) - 1
    if args.output:
        _atomic_write(args.output,
                      lambda tmp: ranksel.write_criteria_csv(tmp, values, k_max))
        _write_manifest(args.output, {"command": "rank", "input": args.input,
                                      "method": args.method, "kmax": k_max})
    if args.method == "scree-data":
        scree = ranksel.scree_values(values)
        print("k,scree")
        for i, v in enumerate(scree, start=1):
            print(f"{i},{v!r}")
        return EXIT_OK
    curves = ranksel.bic_curves(values, k_max)
    decision = ranksel.pick_rank(getattr(curves, args.method), method=args.method)
    print(f"chosen_k,{decision.chosen_k}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# sim
# ---------------------------------------------------------------------------

def _cmd_sim(args) -> int:
    if args.preset not in SIM_PRESETS:
        raise LowRankCVError(
            f"unknown preset {args.preset!r}; available: {', '.join(sorted(SIM_PRESETS))}")
    strength, factor_kind, noise = SIM_PRESETS[args.preset]
    seed, master = _resolve_seed(args)
    methods = tuple(args.methods.split(",")) if args.methods else \
        ("cv-wold", "cv-gabriel", "bic3")
    config = sim.SimConfig(strength=strength, factor_kind=factor_kind,
                           noise_kind=noise, methods=methods,
                           replicates=args.reps, master_seed=master)
    threads = args.threads or int(os.environ.get("LOWRANKCV_THREADS", "0")) \
        or (os.cpu_count() or 1)
    report = sim.run_simulation(config, threads=threads)
    os.makedirs(args.out_dir, exist_ok=True)
    offsets_path = os.path.join(args.out_dir, f"{args.preset}-offsets.csv")
    curves_path = os.path.join(args.out_dir, f"{args.preset}-curves.csv")
    _atomic_write(offsets_path, lambda tmp: sim.write_offsets_csv(tmp, report))
    _atomic_write(curves_path, lambda tmp: sim.write_curves_csv(tmp, report))
    _write_manifest(offsets_path, {"command": "sim", "preset": args.preset,
                                   "config": vars(config) | {
                                       "strength": config.strength,
                                       "methods": list(config.methods)},
                                   "seed": master})
    for m in methods:
        zero = report.offsets[m].get(0, 0)
        print(f"{m},offset0,{zero}/{config.replicates}")
    print(f"written,{offsets_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser and entry point.
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lowrankcv")
    sub = parser.add_subparsers(dest="command", required=True)

    oracle = sub.add_parser("oracle", help="closed-form asymptotic quantities")
    oracle.add_argument("what", choices=["spiked", "bcv-plan", "mp"])
    oracle.add_argument("--gamma", type=float, required=True)
    oracle.add_argument("--sigma2", type=float, default=1.0)
    oracle.add_argument("--mu", type=str, default="",
                        help="comma-separated factor strengths (spiked)")
    oracle.set_defaults(func=_cmd_oracle)

    cv_p = sub.add_parser("cv", help="cross-validated error curve")
    cv_p.add_argument("--style", choices=["wold", "gabriel", "naive"], required=True)
    cv_p.add_argument("--folds", type=str, default="5",
                      help="K for wold, K,L for gabriel")
    cv_p.add_argument("--rotate", action="store_true")
    cv_p.add_argument("--kmax", type=int, required=True)
    cv_p.add_argument("--seed", type=int, default=None)
    cv_p.add_argument("--sigma2", type=str, default="none",
                      help="'auto', a value, or 'none' to keep PE")
    cv_p.add_argument("--input", required=True)
    cv_p.add_argument("--output", default=None)
    cv_p.set_defaults(func=_cmd_cv)

    comp = sub.add_parser("complete", help="missing-value EM SVD completion")
    comp.add_argument("--rank", type=int, required=True)
    comp.add_argument("--tol", type=float, default=1e-4)
    comp.add_argument("--max-iter", type=int, default=500)
    comp.add_argument("--input", required=True)
    comp.add_argument("--output", required=True)
    comp.set_defaults(func=_cmd_complete)

    rank = sub.add_parser("rank", help="penalized rank criteria")
    rank.add_argument("--method", choices=["bic1", "bic2", "bic3", "scree-data"],
                      required=True)
    rank.add_argument("--kmax", type=int, default=None)
    rank.add_argument("--input", required=True)
    rank.add_argument("--output", default=None)
    rank.set_defaults(func=_cmd_rank)

    sim_p = sub.add_parser("sim", help="seeded replicate study")
    sim_p.add_argument("--preset", required=True)
    sim_p.add_argument("--reps", type=int, default=50)
    sim_p.add_argument("--seed", type=int, default=None)
    sim_p.add_argument("--methods", type=str, default=None)
    sim_p.add_argument("--threads", type=int, default=None)
    sim_p.add_argument("--out-dir", default=".")
    sim_p.set_defaults(func=_cmd_sim)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except LowRankCVError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
