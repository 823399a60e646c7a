"""Shooting-parameter classification and the fast-decaying ground state.

The admissible heights split into C = (0, a_*) (positive profiles with slow
algebraic decay), the singleton B = {a_*} (the unique fast exponential
decayer), and A = (a_*, infinity) (sign change at finite radius). B has
measure zero, so it is never a direct verdict: a run that neither crosses
zero nor drives the Pohozaev functional negative stays "Unresolved", and a_*
is produced only as the limit of a (C, A) bisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import quad

import mpmath

from .params import Params, weight_rho
from .profile_ode import (
    IntegratorOptions,
    StepSizeUnderflowError,
    TrajEvent,
    Trajectory,
    integrate,
)
from .pohozaev import J_along, find_r_G

__all__ = [
    "Classification",
    "GroundStateResult",
    "PlateauEstimate",
    "TailSlopes",
    "TailIntegralResult",
    "BracketFailureError",
    "BisectionStallError",
    "NoPlateauError",
    "WindowTooShortError",
    "classify",
    "bracket_search",
    "bisect_a_star",
    "estimate_l",
    "tail_slopes",
    "tail_integral_check",
]


class BracketFailureError(RuntimeError):
    """Doubling/halving never produced a (C, A) bracket."""


class BisectionStallError(RuntimeError):
    """Bisection exceeded its iteration budget."""


class NoPlateauError(RuntimeError):
    """No flat stretch of rho*g long enough to read off l."""


class WindowTooShortError(ValueError):
    """Tail-fit window contains too few usable samples."""


@dataclass(frozen=True)
class Classification:
    a: float
    verdict: str  # "A" | "C" | "Unresolved"
    R: float | None = None  # A: first zero of f
    slope: float | None = None  # A: f'(R) < 0
    r_bar: float | None = None  # C: first J-negativity radius
    J_at_rbar: float | None = None
    diagnostics: dict | None = None  # Unresolved: h/g-f/J state at r_max


@dataclass
class PlateauEstimate:
    found: bool
    l: float
    window: tuple[float, float]


@dataclass(frozen=True)
class TailSlopes:
    slope_exp: float  # fitted exponential rate, algebraic prefactor removed
    slope_alg: float  # fitted log f vs log r slope
    g_over_f: float  # mean g/f on the exponential window
    prefactor_ratio: float  # f * ((2-p) r/(p-1))^((p-1)/(2-p)) at the largest radius


@dataclass
class GroundStateResult:
    params: Params
    a_lo: float
    a_hi: float
    a_star: float
    l_star: float
    c_star: float
    trust_radius: float
    plateau_window: tuple[float, float]
    iterations: int
    traj: Trajectory  # run at the final bracket midpoint


@dataclass
class TailIntegralResult:
    r: np.ndarray
    deviation: np.ndarray  # |ratio - 1| against the asymptotic tail law
    worst: float
    gamma_vs_quad: float  # max mismatch between Gamma route and direct quadrature


def classify(params: Params, a: float, opts: IntegratorOptions | None = None) -> Classification:
    """Classify one shooting height into A / C / Unresolved.

    A requires the f-zero event with negative crossing slope; C requires the
    Pohozaev functional to fall below -threshold at some radius past r_G and
    stay there (it is provably decreasing on that range), with f still
    positive. Step-size underflow is reported as Unresolved, never guessed.
    """
    if a <= 0:
        raise ValueError("shooting parameter a must be positive")
    opts = opts or IntegratorOptions()
    try:
        traj = integrate(params, a, opts)
    except StepSizeUnderflowError as exc:
        diag = {"status": "underflow", "r_end": exc.last_state.r if exc.last_state else None}
        return Classification(a=a, verdict="Unresolved", diagnostics=diag)
    return classify_trajectory(params, traj)


def classify_trajectory(params: Params, traj: Trajectory) -> Classification:
    a = traj.a
    ev = traj.event("FZero")
    if ev is not None and ev.info["slope"] < 0.0:
        return Classification(a=a, verdict="A", R=ev.r, slope=ev.info["slope"])

    series = J_along(params, traj)
    r_G = find_r_G(params)
    thr = traj.opts.j_neg_threshold * (1.0 + np.maximum.accumulate(np.abs(series.J)))
    negative = (series.J < -thr) & (series.r > r_G) & (traj.f > 0.0)
    idx = np.flatnonzero(negative)
    if idx.size and series.J[-1] < -thr[-1]:
        k = idx[0]
        r_bar = float(series.r[k])
        if traj.event("JNegative") is None:
            traj.events.insert(0, TrajEvent("JNegative", r_bar, {"J": float(series.J[k])}))
            traj.events.sort(key=lambda ev: ev.r)
        return Classification(a=a, verdict="C", r_bar=r_bar, J_at_rbar=float(series.J[k]))

    tail = slice(max(0, len(traj.r) - 8), None)
    diag = {
        "status": "horizon",
        "r_end": traj.r_end,
        "h_end": float(np.nanmean(traj.h[tail])),
        "g_over_f_end": float(np.mean(traj.g[tail] / traj.f[tail])),
        "J_end": float(series.J[-1]),
    }
    return Classification(a=a, verdict="Unresolved", diagnostics=diag)


def bracket_search(
    params: Params, opts: IntegratorOptions | None = None, a_init: float = 1.0, max_steps: int = 60
) -> tuple[float, float]:
    """Find a_lo in C and a_hi in A by doubling/halving from a_init."""
    opts = opts or IntegratorOptions()
    verdicts: dict[float, str] = {}

    def verdict(a: float) -> str:
        if a not in verdicts:
            verdicts[a] = classify(params, a, opts).verdict
        return verdicts[a]

    a_hi = None
    a = a_init
    for _ in range(max_steps):
        if verdict(a) == "A":
            a_hi = a
            break
        a *= 2.0
    if a_hi is None:
        raise BracketFailureError(f"no A verdict found up to a={a / 2.0}")

    a_lo = None
    a = a_init
    for _ in range(max_steps):
        if verdict(a) == "C":
            a_lo = a
            break
        a /= 2.0
    if a_lo is None:
        raise BracketFailureError(f"no C verdict found down to a={a * 2.0}")
    return a_lo, a_hi


def _classify_resolving(params: Params, a: float, opts: IntegratorOptions) -> Classification:
    """Classify, extending the horizon up to 10x before giving up."""
    c = classify(params, a, opts)
    for scale in (2.0, 5.0, 10.0):
        if c.verdict != "Unresolved":
            return c
        c = classify(params, a, replace(opts, r_max=scale * opts.r_max))
    return c


def bisect_a_star(
    params: Params,
    bracket: tuple[float, float],
    tol_a: float = 1e-10,
    opts: IntegratorOptions | None = None,
    max_iter: int = 200,
) -> GroundStateResult:
    """Bisect the (C, A) bracket down to tol_a and extract l and c.

    The (C, A) invariant is preserved strictly: an endpoint moves only onto a
    height with a proven verdict. Unresolved midpoints are retried at longer
    horizons, then sidestepped by probing off-center points.
    """
    opts = opts or IntegratorOptions()
    a_lo, a_hi = bracket
    if not 0.0 < a_lo < a_hi:
        raise ValueError("bracket must satisfy 0 < a_lo < a_hi")

    iterations = 0
    while a_hi - a_lo > tol_a:
        iterations += 1
        if iterations > max_iter:
            raise BisectionStallError(
                f"no convergence after {max_iter} iterations; width {a_hi - a_lo:.3g}"
            )
        moved = False
        for frac in (0.5, 0.375, 0.625, 0.25, 0.75):
            a_mid = a_lo + frac * (a_hi - a_lo)
            c = _classify_resolving(params, a_mid, opts)
            if c.verdict == "A":
                a_hi, moved = a_mid, True
                break
            if c.verdict == "C":
                a_lo, moved = a_mid, True
                break
        if not moved:
            raise BisectionStallError(
                f"bracket [{a_lo}, {a_hi}] unresolvable at 10x horizon; "
                "tighten tolerances or extend r_max"
            )

    a_star = 0.5 * (a_lo + a_hi)
    traj = integrate(params, a_star, opts)
    plateau = estimate_l(params, traj)
    if not plateau.found:
        traj = integrate(params, a_star, replace(opts, r_max=2.0 * opts.r_max))
        plateau = estimate_l(params, traj)
    if not plateau.found:
        raise NoPlateauError(
            "no rho*g plateau at the bisection limit; r_max too short or bracket too wide"
        )
    l_star = plateau.l
    c_star = (params.p - 1.0) * l_star**params.e_g
    trust = _trust_radius(params, a_lo, a_hi, traj, opts)
    return GroundStateResult(
        params=params,
        a_lo=a_lo,
        a_hi=a_hi,
        a_star=a_star,
        l_star=l_star,
        c_star=c_star,
        trust_radius=trust,
        plateau_window=plateau.window,
        iterations=iterations,
        traj=traj,
    )


def _trust_radius(
    params: Params, a_lo: float, a_hi: float, traj_mid: Trajectory, opts: IntegratorOptions
) -> float:
    """Largest radius before the bracket-endpoint runs separate by >1%."""
    t_lo = integrate(params, a_lo, opts)
    t_hi = integrate(params, a_hi, opts)
    r_hi = min(t_lo.r_end, t_hi.r_end, traj_mid.r_end)
    r = np.linspace(traj_mid.r[0], r_hi, 4000)
    f_lo, _ = t_lo.eval(r)
    f_hi, _ = t_hi.eval(r)
    f_mid, _ = traj_mid.eval(r)
    scale = np.maximum(np.abs(f_mid), 1e-300)
    apart = np.abs(f_lo - f_hi) / scale > 0.01
    k = np.flatnonzero(apart)
    return float(r[k[0]]) if k.size else float(r_hi)


def estimate_l(
    params: Params, traj: Trajectory, tol: float = 0.005, min_len: float = 1.0
) -> PlateauEstimate:
    """Longest window where rho*g varies by < tol; its mean estimates l.

    Returns found=False (soft failure) when no window of length min_len
    exists, e.g. for class-A trajectories where rho*g dives to zero.
    """
    valid = (traj.g > 0.0) & (traj.r >= 1.0)
    r = traj.r[valid]
    w = traj.w[valid]
    if r.size < 8:
        return PlateauEstimate(found=False, l=math.nan, window=(math.nan, math.nan))
    best = (0.0, 0, 0)
    i = 0
    for j in range(1, r.size):
        seg = w[i : j + 1]
        while seg.max() - seg.min() > tol * abs(seg.mean()):
            i += 1
            seg = w[i : j + 1]
        if r[j] - r[i] > best[0]:
            best = (r[j] - r[i], i, j)
    length, i, j = best
    if length < min_len:
        return PlateauEstimate(found=False, l=math.nan, window=(math.nan, math.nan))
    return PlateauEstimate(
        found=True, l=float(np.mean(w[i : j + 1])), window=(float(r[i]), float(r[j]))
    )


def tail_slopes(
    params: Params,
    traj: Trajectory,
    exp_window: tuple[float, float] | None = None,
    alg_window: tuple[float, float] | None = None,
) -> TailSlopes:
    """Least-squares decay rates of f on trusted windows.

    slope_exp fits log(f * r^((N-1)/(p-1))) against r, i.e. the exponential
    rate with the known algebraic prefactor of the fast-decay asymptotic
    removed (a raw log f fit carries an O((N-1)/r) bias that never reaches
    the asymptotic rate on desk-scale windows). Expected -1/(p-1) for the
    ground state. slope_alg fits log f against log r; expected -(p-1)/(2-p)
    for slow-decay profiles.
    """
    r_end = traj.r_end
    if exp_window is None:
        exp_window = (0.3 * r_end, 0.75 * r_end)
    if alg_window is None:
        alg_window = (0.2 * r_end, 0.8 * r_end)

    def window_data(win):
        mask = (traj.r >= win[0]) & (traj.r <= win[1]) & (traj.f > 0.0)
        if np.count_nonzero(mask) < 10:
            raise WindowTooShortError(f"window {win} has fewer than 10 usable samples")
        return traj.r[mask], traj.f[mask], traj.g[mask]

    r_e, f_e, g_e = window_data(exp_window)
    y = np.log(f_e) + (params.N - 1.0) * params.e_g * np.log(r_e)
    slope_exp = float(np.polyfit(r_e, y, 1)[0])
    g_over_f = float(np.mean(g_e / f_e))

    r_a, f_a, _ = window_data(alg_window)
    slope_alg = float(np.polyfit(np.log(r_a), np.log(f_a), 1)[0])

    r_last, f_last = r_a[-1], f_a[-1]
    pref = float(f_last * ((2.0 - params.p) / (params.p - 1.0) * r_last) ** params.e_slow)
    return TailSlopes(
        slope_exp=slope_exp, slope_alg=slope_alg, g_over_f=g_over_f, prefactor_ratio=pref
    )


def tail_integral_check(params: Params, r_grid) -> TailIntegralResult:
    """Deviation of rho(r) int_r^inf rho^(-1/(p-1)) from its asymptotic law.

    The integral is evaluated both by adaptive quadrature and through the
    upper incomplete Gamma function (which admits the negative first argument
    (p-N)/(p-1)); the asymptotic comparison value is (p-1) rho^(-(2-p)/(p-1)).
    """
    r_grid = np.asarray(r_grid, dtype=float)
    N, p = params.N, params.p
    k = (N - 1.0) / (p - 1.0)
    sigma = (p - N) / (p - 1.0)
    pref = (p - 1.0) ** sigma

    def integrand(s):
        return s**-k * np.exp(-s / (p - 1.0))

    dev = np.empty_like(r_grid)
    gamma_mismatch = 0.0
    for i, r in enumerate(r_grid):
        val_quad, _ = quad(integrand, r, np.inf, epsabs=0.0, epsrel=1e-12, limit=200)
        val_gamma = pref * float(mpmath.gammainc(sigma, r / (p - 1.0), mpmath.inf))
        gamma_mismatch = max(gamma_mismatch, abs(val_gamma - val_quad) / abs(val_quad))
        target = (p - 1.0) * weight_rho(params, r) ** (-(2.0 - p) / (p - 1.0))
        dev[i] = abs(weight_rho(params, r) * val_quad / target - 1.0)
    return TailIntegralResult(
        r=r_grid, deviation=dev, worst=float(dev.max()), gamma_vs_quad=float(gamma_mismatch)
    )
