"""Command-line interface.

Subcommands: params, profile, classify, sweep, find-astar, pohozaev,
pde-run, pde-compare, verify. Exit codes: 0 success, 1 check failure,
2 usage error, 3 numerical failure or I/O error.

All data files are deterministic for a fixed configuration: floats carry 17
significant digits and JSON keys are sorted; version/timestamp metadata goes
to a `.meta.json` sidecar only (pass --meta).
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np

from . import __version__
from .params import OutOfRangeError, make_params
from .profile_ode import (
    IntegratorOptions,
    StepSizeUnderflowError,
    integrate,
)
from .pohozaev import J_along, coeff_functions, pohozaev_coeffs, G_cubic, G_direct
from .classify import (
    BisectionStallError,
    BracketFailureError,
    bisect_a_star,
    bracket_search,
    classify,
)
from .pde import (
    MaxStepsExceededError,
    PdeConfig,
    TimestepUnderflowError,
    compare_to_profile,
    make_grid,
    make_initial,
    rescale_frames,
    run_to_extinction,
)
from .reporting import SCHEMA_VERSION, write_csv, write_sidecar, write_summary
from .acceptance import AcceptanceContext, run_acceptance

EXIT_OK = 0
EXIT_CHECK_FAILURE = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3

NUMERICAL_ERRORS = (
    StepSizeUnderflowError,
    BracketFailureError,
    BisectionStallError,
    TimestepUnderflowError,
    MaxStepsExceededError,
)


def _add_model_args(sp):
    sp.add_argument("--N", type=int, required=True, help="space dimension (>= 1)")
    sp.add_argument("--p", type=float, required=True, help="diffusion exponent in (2N/(N+1), 2)")


def _add_ode_args(sp):
    sp.add_argument("--rmax", type=float, default=50.0, help="integration horizon")
    sp.add_argument("--rtol", type=float, default=1e-10, help="integrator relative tolerance")


def _opts(args) -> IntegratorOptions:
    return IntegratorOptions(rel_tol=args.rtol, r_max=args.rmax)


def _summary_skeleton(args, **inputs) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "version": __version__,
        "inputs": {"N": args.N, "p": args.p, **inputs},
        "results": {},
    }


def cmd_params(args) -> int:
    P = make_params(args.N, args.p)
    summary = _summary_skeleton(args)
    summary["results"] = {k: getattr(P, k) for k in ("p_c", "e_flux", "e_g", "e_slow", "e_time", "e_weight")}
    _emit(args, summary)
    return EXIT_OK


def cmd_profile(args) -> int:
    P = make_params(args.N, args.p)
    traj = integrate(P, args.a, _opts(args))
    series = J_along(P, traj)
    rows = zip(traj.r, traj.f, traj.g, traj.fprime, traj.E, traj.w, traj.h, series.J)
    write_csv(args.out, ["r", "f", "g", "fprime", "E", "w", "h", "J"], rows)
    if args.meta:
        write_sidecar(args.out, {"command": "profile", "a": args.a})
    print(f"wrote {args.out}: {len(traj.r)} samples, events "
          f"{[(ev.kind, round(ev.r, 6)) for ev in traj.events]}")
    return EXIT_OK


def cmd_classify(args) -> int:
    P = make_params(args.N, args.p)
    c = classify(P, args.a, _opts(args))
    summary = _summary_skeleton(args, a=args.a, rmax=args.rmax, rtol=args.rtol)
    summary["results"] = {
        "verdict": c.verdict,
        "R": c.R,
        "slope": c.slope,
        "r_bar": c.r_bar,
        "J_at_rbar": c.J_at_rbar,
        "diagnostics": c.diagnostics,
    }
    _emit(args, summary)
    return EXIT_OK


def _classify_one(payload):
    N, p, a, rmax, rtol = payload
    P = make_params(N, p)
    c = classify(P, a, IntegratorOptions(rel_tol=rtol, r_max=rmax))
    return (a, c.verdict, c.R, c.slope, c.r_bar, c.J_at_rbar)


def cmd_sweep(args) -> int:
    make_params(args.N, args.p)  # validate before spawning workers
    if args.log:
        grid = np.geomspace(args.a_min, args.a_max, args.num)
    else:
        grid = np.linspace(args.a_min, args.a_max, args.num)
    payloads = [(args.N, args.p, float(a), args.rmax, args.rtol) for a in grid]
    workers = int(os.environ.get("SELFSIM_THREADS", "0")) or min(len(payloads), os.cpu_count() or 1)
    if workers > 1 and len(payloads) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_classify_one, payloads))  # input order preserved
    else:
        rows = [_classify_one(pl) for pl in payloads]
    out_rows = [
        (a, verdict, _nan(R), _nan(slope), _nan(r_bar), _nan(Jr))
        for a, verdict, R, slope, r_bar, Jr in rows
    ]
    write_csv(args.out, ["a", "verdict", "R", "slope", "r_bar", "J_at_rbar"], out_rows)
    if args.meta:
        write_sidecar(args.out, {"command": "sweep"})
    print(f"wrote {args.out}: {len(out_rows)} classifications ({workers} workers)")
    return EXIT_OK


def _nan(x):
    return float("nan") if x is None else x


def cmd_find_astar(args) -> int:
    P = make_params(args.N, args.p)
    opts = _opts(args)
    gs = bisect_a_star(P, bracket_search(P, opts), tol_a=args.tol, opts=opts)
    summary = _summary_skeleton(args, tol=args.tol, rmax=args.rmax, rtol=args.rtol)
    summary["results"] = {
        "a_lo": gs.a_lo,
        "a_hi": gs.a_hi,
        "a_star": gs.a_star,
        "l_star": gs.l_star,
        "c_star": gs.c_star,
        "trust_radius": gs.trust_radius,
        "plateau_window": list(gs.plateau_window),
        "iterations": gs.iterations,
    }
    _emit(args, summary)
    return EXIT_OK


def cmd_pohozaev(args) -> int:
    P = make_params(args.N, args.p)
    co = pohozaev_coeffs(P)
    r = np.linspace(args.r_min, args.r_max, args.num)
    alpha, beta, gamma, delta = coeff_functions(P, r)
    rows = zip(r, alpha, beta, gamma, delta, G_cubic(P, r), G_direct(P, r))
    write_csv(args.out, ["r", "alpha", "beta", "gamma", "delta", "G_cubic", "G_direct"], rows)
    if args.a is not None:
        traj = integrate(P, args.a, IntegratorOptions(r_max=args.r_max))
        series = J_along(P, traj)
        j_path = args.out.replace(".csv", "") + "_J.csv"
        write_csv(j_path, ["r", "J", "G", "gsq"], zip(series.r, series.J, series.G, series.gsq))
        print(f"wrote {j_path}")
    summary = _summary_skeleton(args)
    summary["results"] = {
        "M0": co.M0, "M1": co.M1, "M2": co.M2, "M3": co.M3,
        "r_G": co.r_G, "degenerate": co.degenerate,
    }
    print(f"wrote {args.out}")
    _emit(args, summary, to_stdout=True)
    return EXIT_OK


PDE_RUN_DEFAULTS = {
    "init": "exp_tail",
    "M": 2000,
    "r_inf": 15.0,
    "kappa0": 1.0,
    "T0": 1.0,
    "eps_reg": 1e-12,
    "stepper": "imex",
}


def cmd_pde_run(args) -> int:
    # precedence: built-in defaults < --config file < explicit flags
    merged = {"N": None, "p": None, **PDE_RUN_DEFAULTS}
    if args.config:
        from .reporting import read_summary, validate_config

        loaded = validate_config(read_summary(args.config), set(merged), args.config)
        merged.update({k: v for k, v in loaded.items() if k != "schema"})
    for key in merged:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
    if merged["N"] is None or merged["p"] is None:
        print("error: --N and --p are required (flags or --config)", file=sys.stderr)
        return EXIT_USAGE
    P = make_params(merged["N"], merged["p"])
    grid = make_grid(merged["r_inf"], merged["M"])
    args.M, args.r_inf, args.init, args.kappa0, args.T0 = (
        merged["M"], merged["r_inf"], merged["init"], merged["kappa0"], merged["T0"],
    )
    args.N, args.p = merged["N"], merged["p"]
    cfg = PdeConfig(
        params=P,
        kappa0=merged["kappa0"],
        init_kind=merged["init"],
        T0=merged["T0"],
        eps_reg=merged["eps_reg"],
        stepper=merged["stepper"],
    )
    profile = None
    if args.init == "separable":
        opts = IntegratorOptions()
        gs = bisect_a_star(P, bracket_search(P, opts), tol_a=1e-10, opts=opts)
        profile = gs.traj
        cfg = dataclasses.replace(cfg, kappa0=((2.0 - P.p) * args.T0) ** P.e_time * gs.a_star)
    frames = run_to_extinction(cfg, make_initial(cfg, grid, profile))
    write_csv(
        f"{args.out}_records.csv",
        ["t", "sup", "I", "J", "D", "E"],
        zip(frames.t, frames.sup, frames.I, frames.J, frames.D, frames.E),
    )
    for k, (t_k, u_k) in enumerate(frames.snapshots):
        write_csv(f"{args.out}_frame{k:03d}.csv", ["r", "u"], zip(grid.centers, u_k))
    summary = _summary_skeleton(
        args, M=args.M, R_inf=args.r_inf, init=args.init, kappa0=args.kappa0
    )
    summary["results"] = {
        "T_e": frames.T_e_estimate,
        "rate_r2": frames.rate_r2,
        "n_steps": frames.n_steps,
        "snapshots": len(frames.snapshots),
        "clamp_events": frames.clamp_events,
        "sink_saturations": frames.sink_saturations,
        "monotone_violations": frames.monotone_violations,
        "supersolution_excess": frames.supersolution_excess,
    }
    write_summary(f"{args.out}_summary.json", summary)
    if args.meta:
        write_sidecar(f"{args.out}_summary.json", {"command": "pde-run"})
    print(f"wrote {args.out}_records.csv, {len(frames.snapshots)} frames, {args.out}_summary.json")
    return EXIT_OK


def cmd_pde_compare(args) -> int:
    P = make_params(args.N, args.p)
    opts = IntegratorOptions()
    gs = bisect_a_star(P, bracket_search(P, opts), tol_a=args.tol, opts=opts)
    grid = make_grid(args.r_inf, args.M)
    kappa0 = args.kappa0
    if args.init == "separable":
        kappa0 = ((2.0 - P.p) * args.T0) ** P.e_time * gs.a_star
    cfg = PdeConfig(params=P, kappa0=kappa0, init_kind=args.init, T0=args.T0)
    frames = run_to_extinction(cfg, make_initial(cfg, grid, gs.traj if args.init == "separable" else None))
    T_e = frames.T_e_estimate
    rescaled = rescale_frames(frames, T_e)
    errs = compare_to_profile(frames, rescaled, gs.traj)
    rows = [
        (s_k, t_k, float(e))
        for (s_k, _), (t_k, _), e in zip(rescaled, frames.snapshots, errs)
    ]
    write_csv(f"{args.out}_compare.csv", ["s", "t", "sup_error"], rows)
    kept = [e for e, (tk, _) in zip(errs, frames.snapshots) if (T_e - tk) >= 0.01 * T_e]
    summary = _summary_skeleton(args, M=args.M, R_inf=args.r_inf, init=args.init)
    summary["results"] = {
        "a_star": gs.a_star,
        "T_e": T_e,
        "rate_r2": frames.rate_r2,
        "final_sup_error": kept[-1] if kept else float("nan"),
        "final_sup_error_rel_astar": (kept[-1] / gs.a_star) if kept else float("nan"),
        "supersolution_excess": frames.supersolution_excess,
    }
    write_summary(f"{args.out}_summary.json", summary)
    print(f"wrote {args.out}_compare.csv and {args.out}_summary.json")
    return EXIT_OK


def cmd_verify(args) -> int:
    only = set(args.only) if args.only else None
    results = run_acceptance(AcceptanceContext(), quick=args.quick, echo=print, only=only)
    failed = [r for r in results if not r.skipped and not r.passed]
    ran = [r for r in results if not r.skipped]
    print(f"acceptance: {len(ran) - len(failed)}/{len(ran)} criteria passed"
          + (f", {len(results) - len(ran)} skipped (--quick)" if len(ran) < len(results) else ""))
    if args.out:
        summary = {
            "schema": SCHEMA_VERSION,
            "version": __version__,
            "results": {
                str(r.index): {
                    "title": r.title,
                    "passed": r.passed,
                    "skipped": r.skipped,
                    "runtime_s": r.runtime,
                    "checks": [
                        {"name": c.name, "value": c.value, "tol": c.tol, "passed": c.passed}
                        for c in r.checks
                    ],
                }
                for r in results
            },
        }
        write_summary(args.out, summary)
    return EXIT_OK if not failed else EXIT_CHECK_FAILURE


def _emit(args, summary: dict, to_stdout: bool = False) -> None:
    out = getattr(args, "out", None) if not to_stdout else getattr(args, "json", None)
    if out:
        write_summary(out, summary)
        if getattr(args, "meta", False):
            write_sidecar(out)
        print(f"wrote {out}")
    else:
        import json

        print(json.dumps(summary, indent=2, sort_keys=True))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="selfsim",
        description="Self-similar extinction profiles: shooting classification and PDE verification",
    )
    ap.add_argument("--version", action="version", version=f"selfsim {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("params", help="derived exponents for (N, p)")
    _add_model_args(sp)
    sp.add_argument("--out", help="write JSON here instead of stdout")
    sp.add_argument("--meta", action="store_true", help="write a .meta.json sidecar")
    sp.set_defaults(fn=cmd_params)

    sp = sub.add_parser("profile", help="one shooting trajectory to CSV")
    _add_model_args(sp)
    sp.add_argument("--a", type=float, required=True)
    _add_ode_args(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--meta", action="store_true")
    sp.set_defaults(fn=cmd_profile)

    sp = sub.add_parser("classify", help="classify one shooting height")
    _add_model_args(sp)
    sp.add_argument("--a", type=float, required=True)
    _add_ode_args(sp)
    sp.add_argument("--out", help="write JSON here instead of stdout")
    sp.add_argument("--meta", action="store_true")
    sp.set_defaults(fn=cmd_classify)

    sp = sub.add_parser("sweep", help="classify an a-grid in parallel to CSV")
    _add_model_args(sp)
    sp.add_argument("--a-min", type=float, required=True)
    sp.add_argument("--a-max", type=float, required=True)
    sp.add_argument("--num", type=int, default=20)
    sp.add_argument("--log", action="store_true", help="geometric a-grid")
    _add_ode_args(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--meta", action="store_true")
    sp.set_defaults(fn=cmd_sweep)

    sp = sub.add_parser("find-astar", help="bisect the ground-state height")
    _add_model_args(sp)
    sp.add_argument("--tol", type=float, default=1e-10)
    _add_ode_args(sp)
    sp.add_argument("--out", help="write JSON here instead of stdout")
    sp.add_argument("--meta", action="store_true")
    sp.set_defaults(fn=cmd_find_astar)

    sp = sub.add_parser("pohozaev", help="coefficient/G tables and r_G")
    _add_model_args(sp)
    sp.add_argument("--a", type=float, help="also dump J along this trajectory")
    sp.add_argument("--r-min", type=float, default=0.1)
    sp.add_argument("--r-max", type=float, default=20.0)
    sp.add_argument("--num", type=int, default=400)
    sp.add_argument("--out", required=True)
    sp.add_argument("--json", help="write the r_G/M summary JSON here")
    sp.add_argument("--meta", action="store_true")
    sp.set_defaults(fn=cmd_pohozaev)

    sp = sub.add_parser("pde-run", help="radial extinction run")
    sp.add_argument("--N", type=int, help="space dimension (>= 1)")
    sp.add_argument("--p", type=float, help="diffusion exponent in (2N/(N+1), 2)")
    sp.add_argument("--config", help="JSON run configuration (unknown keys rejected; flags override)")
    sp.add_argument("--init", choices=["exp_tail", "separable"])
    sp.add_argument("--M", type=int)
    sp.add_argument("--r-inf", dest="r_inf", type=float)
    sp.add_argument("--kappa0", type=float)
    sp.add_argument("--T0", type=float)
    sp.add_argument("--eps-reg", dest="eps_reg", type=float)
    sp.add_argument("--stepper", choices=["imex", "explicit"])
    sp.add_argument("--out", required=True, help="output path prefix")
    sp.add_argument("--meta", action="store_true")
    sp.set_defaults(fn=cmd_pde_run)

    sp = sub.add_parser("pde-compare", help="run + rescale + compare to the profile")
    _add_model_args(sp)
    sp.add_argument("--init", choices=["exp_tail", "separable"], default="exp_tail")
    sp.add_argument("--M", type=int, default=2000)
    sp.add_argument("--r-inf", type=float, default=15.0)
    sp.add_argument("--kappa0", type=float, default=1.0)
    sp.add_argument("--T0", type=float, default=1.0)
    sp.add_argument("--tol", type=float, default=1e-10)
    sp.add_argument("--out", required=True, help="output path prefix")
    sp.add_argument("--meta", action="store_true")
    sp.set_defaults(fn=cmd_pde_compare)

    sp = sub.add_parser("verify", help="run the acceptance suite")
    sp.add_argument("--quick", action="store_true", help="skip the production PDE criteria")
    sp.add_argument("--only", type=int, nargs="+", help="run only these criterion numbers")
    sp.add_argument("--out", help="write a JSON report here")
    sp.set_defaults(fn=cmd_verify)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.fn(args)
    except (OutOfRangeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


cli_main = main


if __name__ == "__main__":
    sys.exit(main())
