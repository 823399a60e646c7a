#!/usr/bin/env python3
"""Phase portrait of the shooting problem around a_*.

Sweeps heights on a log grid spanning the (C, A) bracket, classifies each,
and dumps per-height trajectories plus the J-functional along them, ready
for plotting (r, f, w, h, J columns).

Usage:
    python scripts/profile_portrait.py --N 2 --p 1.5 --num 9 --outdir portrait/
"""

import argparse
import pathlib

import numpy as np

from selfsim.params import make_params
from selfsim.profile_ode import IntegratorOptions, integrate
from selfsim.pohozaev import J_along, pohozaev_coeffs
from selfsim.classify import bisect_a_star, bracket_search, classify
from selfsim.reporting import write_csv, write_summary


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--N", type=int, default=2)
    ap.add_argument("--p", type=float, default=1.5)
    ap.add_argument("--num", type=int, default=9)
    ap.add_argument("--rmax", type=float, default=50.0)
    ap.add_argument("--outdir", default="portrait")
    args = ap.parse_args()

    outdir = pathlib.Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    P = make_params(args.N, args.p)
    opts = IntegratorOptions(r_max=args.rmax)

    gs = bisect_a_star(P, bracket_search(P, opts), tol_a=1e-10, opts=opts)
    print(f"a_* = {gs.a_star:.12g}   l = {gs.l_star:.6g}   c_* = {gs.c_star:.6g}")
    co = pohozaev_coeffs(P)
    print(f"r_G = {co.r_G:.12g}")

    heights = np.geomspace(gs.a_star / 16.0, gs.a_star * 16.0, args.num)
    heights = np.sort(np.append(heights, gs.a_star))
    rows = []
    for k, a in enumerate(heights):
        c = classify(P, float(a), opts)
        traj = integrate(P, float(a), opts)
        series = J_along(P, traj)
        write_csv(
            outdir / f"traj_{k:02d}.csv",
            ["r", "f", "g", "w", "h", "J"],
            zip(traj.r, traj.f, traj.g, traj.w, traj.h, series.J),
        )
        rows.append((float(a), c.verdict, c.R or float("nan"), c.r_bar or float("nan")))
        print(f"  a = {a:12.6g}  ->  {c.verdict}")
    write_csv(outdir / "verdicts.csv", ["a", "verdict", "R", "r_bar"], rows)
    write_summary(
        outdir / "summary.json",
        {
            "schema": 1,
            "inputs": {"N": args.N, "p": args.p, "rmax": args.rmax},
            "results": {"a_star": gs.a_star, "l_star": gs.l_star, "c_star": gs.c_star, "r_G": co.r_G},
        },
    )
    print(f"wrote {outdir}/")


if __name__ == "__main__":
    main()
