import math

import numpy as np
import pytest
from scipy.integrate import quad

from selfsim.profile_ode import IntegratorOptions, integrate
from selfsim.pde import (
    BadExtinctionTimeError,
    Field,
    FrameSeries,
    InsufficientDecayError,
    NonMonotoneInitialDataError,
    PdeConfig,
    TimestepUnderflowError,
    compare_to_profile,
    fit_extinction,
    make_grid,
    make_initial,
    rate_exponent,
    rescale_frames,
    sphere_area,
    step,
    weighted_functionals,
)
from selfsim.pde import _step_imex, explicit_dt


@pytest.fixture(scope="module")
def grid2000():
    return make_grid(15.0, 2000)


@pytest.fixture(scope="session")
def sep_frames(ctx):
    return ctx.pde_separable(M=2000)


@pytest.fixture(scope="session")
def exp_frames(ctx):
    return ctx.pde_exp_tail()


def test_sphere_area():
    assert sphere_area(1) == pytest.approx(2.0)
    assert sphere_area(2) == pytest.approx(2.0 * math.pi)
    assert sphere_area(3) == pytest.approx(4.0 * math.pi)


def test_grid_geometry():
    grid = make_grid(15.0, 2000)
    assert grid.dr == pytest.approx(7.5e-3)
    assert grid.centers[0] == pytest.approx(grid.dr / 2.0)
    assert grid.faces[0] == 0.0 and grid.faces[-1] == pytest.approx(15.0)
    with pytest.raises(ValueError):
        make_grid(15.0, 2)


def test_default_domain_truncation_is_negligible(P2):
    # at the production defaults the Dirichlet boundary sits where the
    # admissible data bound has decayed below 1e-12 of the amplitude
    assert math.exp(-15.0 / (P2.p - 1.0)) < 1e-12


class TestConfig:
    def test_extinction_threshold_default(self, P2):
        cfg = PdeConfig(params=P2, kappa0=2.0)
        assert cfg.extinction_threshold == pytest.approx(2e-10)
        assert PdeConfig(params=P2, ext_tol=1e-7).extinction_threshold == 1e-7

    def test_rejects_bad_fields(self, P2):
        with pytest.raises(ValueError):
            PdeConfig(params=P2, init_kind="wrong")
        with pytest.raises(ValueError):
            PdeConfig(params=P2, stepper="magic")
        with pytest.raises(ValueError):
            PdeConfig(params=P2, kappa0=0.0)


class TestInitialData:
    def test_exp_tail_values(self, P2, grid2000):
        cfg = PdeConfig(params=P2, kappa0=1.0)
        field = make_initial(cfg, grid2000)
        expect = np.exp(-grid2000.centers / (P2.p - 1.0))
        assert np.array_equal(field.values, expect)
        assert field.peak() > 0.99  # u -> kappa0 at the center

    def test_separable_peak(self, P2, gs2, grid2000):
        # ((2-p) T0)^(1/(2-p)) = 0.25 at p = 3/2, T0 = 1
        cfg = PdeConfig(params=P2, init_kind="separable", T0=1.0, kappa0=0.25 * gs2.a_star)
        field = make_initial(cfg, grid2000, gs2.traj)
        assert field.peak() == pytest.approx(0.25 * gs2.a_star, rel=1e-4)

    def test_custom_table_validation(self, P2):
        grid = make_grid(5.0, 16)
        cfg = PdeConfig(params=P2, init_kind="custom")
        good = np.linspace(1.0, 0.0, 16)
        assert make_initial(cfg, grid, good).peak() == 1.0
        with pytest.raises(NonMonotoneInitialDataError):
            make_initial(cfg, grid, good[::-1].copy())
        bad = good.copy()
        bad[3] = -0.1
        with pytest.raises(NonMonotoneInitialDataError):
            make_initial(cfg, grid, bad)

    def test_separable_needs_profile(self, P2, grid2000):
        cfg = PdeConfig(params=P2, init_kind="separable")
        with pytest.raises(ValueError):
            make_initial(cfg, grid2000)


class TestExplicitStep:
    def test_zero_is_fixed_point(self, P2):
        grid = make_grid(10.0, 64)
        cfg = PdeConfig(params=P2, stepper="explicit")
        field = Field(grid=grid, values=np.zeros(64), t=0.0)
        new, clamped = step(cfg, field)
        assert np.array_equal(new.values, np.zeros(64))
        assert clamped == 0

    def test_separable_one_step_decay_rate(self, P2, gs2, grid2000):
        # d/dt log ||u|| = -1/((2-p) T0) = -2 at t = 0, up to discretization
        cfg = PdeConfig(
            params=P2, init_kind="separable", T0=1.0, kappa0=0.25 * gs2.a_star,
            stepper="explicit", eps_reg=1e-8,
        )
        f0 = make_initial(cfg, grid2000, gs2.traj)
        f1, _ = step(cfg, f0)
        rate = (f1.peak() - f0.peak()) / (f1.t - f0.t) / f0.peak()
        assert rate == pytest.approx(-2.0, rel=0.10)

    def test_monotone_preserved_over_1000_steps(self, P2, gs2, grid2000):
        cfg = PdeConfig(
            params=P2, init_kind="separable", T0=1.0, kappa0=0.25 * gs2.a_star,
            stepper="explicit", eps_reg=1e-8,
        )
        field = make_initial(cfg, grid2000, gs2.traj)
        clamps = 0
        for _ in range(1000):
            field, c = step(cfg, field)
            clamps += c
        assert np.all(np.diff(field.values) <= 1e-13 * field.peak())  # monitor count 0
        # clamp monitor: < 0.1% of cell updates
        assert clamps / (1000 * grid2000.M) < 1e-3

    def test_dt_rule_uses_both_bounds(self, P2):
        grid = make_grid(10.0, 100)
        cfg = PdeConfig(params=P2, stepper="explicit", eps_reg=1e-4)
        steep = np.linspace(100.0, 0.0, 100)  # |Dbar|^(p-1) > 1 engages the sink bound
        dt_steep = explicit_dt(cfg, grid, steep)
        assert dt_steep <= cfg.cfl_safety * grid.dr / np.max(np.abs(np.gradient(steep, grid.dr))) ** (P2.p - 1.0) * 1.01

    def test_underflow_guard(self, P2):
        grid = make_grid(10.0, 64)
        cfg = PdeConfig(params=P2, stepper="explicit")
        field = Field(grid=grid, values=np.exp(-grid.centers), t=0.0)
        with pytest.raises(TimestepUnderflowError):
            step(cfg, field, dt=1e-17)


class TestCrossValidation:
    def test_explicit_matches_imex(self, P2, gs2):
        # same spatial operator, two steppers; coarse grid, eps large enough
        # for the explicit dt rule to be affordable
        grid = make_grid(10.0, 250)
        kw = dict(params=P2, init_kind="separable", T0=1.0, kappa0=0.25 * gs2.a_star, eps_reg=1e-4)
        f0 = make_initial(PdeConfig(**kw), grid, gs2.traj)

        cfg_e = PdeConfig(stepper="explicit", **kw)
        fld = Field(grid, f0.values.copy(), 0.0)
        while fld.t < 0.05:
            fld, _ = step(cfg_e, fld)

        cfg_i = PdeConfig(stepper="imex", rel_change=1e-4, **kw)
        u, t, dt = f0.values.copy(), 0.0, 1e-7
        while t < 0.05:
            dt = min(dt, 0.05 - t + 1e-16)
            u, _ = _step_imex(cfg_i, grid, u, dt)
            t += dt
            dt = min(dt * 1.2, 2e-4)

        rel = np.max(np.abs(fld.values - u)) / fld.peak()
        assert rel < 1e-3
        # both match the analytic separable peak law (1 - t)^2
        exact = f0.peak() * (1.0 - 0.05) ** 2
        assert fld.peak() == pytest.approx(exact, rel=1e-3)
        assert float(u.max()) == pytest.approx(exact, rel=1e-3)


class TestFunctionals:
    def test_zero_field(self, P2, grid2000):
        I, J, D, E = weighted_functionals(P2, grid2000, np.zeros(grid2000.M))
        assert I == 0.0 and J == 0.0 and E == 0.0

    def test_against_quadrature(self, P2):
        # u = e^(-r^2/4) is dead at R_inf (the outer ghost face carries the
        # scheme's Dirichlet jump, so fields must vanish there for the
        # discrete functionals to estimate the continuum integrals)
        grid = make_grid(15.0, 4000)
        u = np.exp(-grid.centers**2 / 4.0)
        I, J, _, E = weighted_functionals(P2, grid, u)
        I_ref = math.pi * quad(lambda r: r * np.exp(r) * np.exp(-r**2 / 2.0), 0.0, 15.0)[0]
        J_ref = (2.0 * math.pi / P2.p) * quad(
            lambda r: r * np.exp(r) * (r / 2.0 * np.exp(-r**2 / 4.0)) ** P2.p, 0.0, 15.0
        )[0]
        assert I == pytest.approx(I_ref, rel=1e-5)
        assert J == pytest.approx(J_ref, rel=1e-4)
        assert E == pytest.approx(J - I, rel=1e-12)

    def test_dissipation_requires_pair(self, P2, grid2000):
        u = np.exp(-grid2000.centers)
        D = weighted_functionals(P2, grid2000, u, u_prev=u * 1.01, dt=0.1)[2]
        assert D > 0.0
        assert math.isnan(weighted_functionals(P2, grid2000, u)[2])


class TestFits:
    def _synthetic(self, P2, T_e=0.8, n=200):
        # log-spaced records so every decade of the sup norm is populated
        t = T_e - np.geomspace(0.4, 0.005, n)
        sup = (2.0 * (T_e - t)) ** P2.e_time
        frames = FrameSeries(params=P2, grid=make_grid(1.0, 4), config=PdeConfig(params=P2))
        frames.t, frames.sup = t, sup
        return frames

    def test_exact_power_law_recovered(self, P2):
        frames = self._synthetic(P2)
        T_e, r2 = fit_extinction(frames)
        assert T_e == pytest.approx(0.8, rel=1e-10)
        assert r2 == pytest.approx(1.0, abs=1e-12)
        m, _ = rate_exponent(frames, T_e)
        assert m == pytest.approx(P2.e_time, rel=1e-8)

    def test_constant_input_is_insufficient(self, P2):
        frames = FrameSeries(params=P2, grid=make_grid(1.0, 4), config=PdeConfig(params=P2))
        frames.t = np.linspace(0.0, 1.0, 100)
        frames.sup = np.ones(100)
        with pytest.raises(InsufficientDecayError):
            fit_extinction(frames)

    def test_too_few_records(self, P2):
        frames = self._synthetic(P2, n=10)
        with pytest.raises(InsufficientDecayError):
            fit_extinction(frames)


class TestRescale:
    def test_initial_frame_formula(self, P2, sep_frames):
        T_e = sep_frames.T_e_estimate
        (s0, v0) = rescale_frames(sep_frames, T_e)[0]
        t0, u0 = sep_frames.snapshots[0]
        assert s0 == 0.0 and t0 == 0.0
        assert np.allclose(v0, u0 / ((2.0 - P2.p) * T_e) ** P2.e_time, rtol=1e-14)

    def test_bad_extinction_time(self, P2, sep_frames):
        with pytest.raises(BadExtinctionTimeError):
            rescale_frames(sep_frames, sep_frames.snapshots[1][0])

    def test_profile_must_cover_grid(self, P2, gs2, sep_frames):
        short = integrate(P2, gs2.a_star, IntegratorOptions(r_max=10.0))
        with pytest.raises(ValueError):
            compare_to_profile(sep_frames, rescale_frames(sep_frames, 2.0), short)


class TestSeparableRun:
    def test_extinction_time(self, sep_frames):
        assert sep_frames.T_e_estimate == pytest.approx(1.0, rel=0.02)

    def test_norm_and_mass_monotone(self, sep_frames):
        assert np.all(np.diff(sep_frames.sup) <= 0.0)
        assert np.all(np.diff(sep_frames.I) <= 1e-12 * sep_frames.I[0])

    def test_frames_stay_on_profile(self, gs2, sep_frames):
        rescaled = rescale_frames(sep_frames, sep_frames.T_e_estimate)
        errs = compare_to_profile(sep_frames, rescaled, gs2.traj)
        kept = [e for e, (tk, _) in zip(errs, sep_frames.snapshots) if tk <= 0.9]
        assert max(kept) <= 0.03 * gs2.a_star

    def test_rescaled_norm_floor(self, gs2, sep_frames):
        T_e = sep_frames.T_e_estimate
        rescaled = rescale_frames(sep_frames, T_e)
        kept = [v for (s, v), (tk, _) in zip(rescaled, sep_frames.snapshots)
                if (T_e - tk) >= 0.01 * T_e]
        assert min(float(v.max()) for v in kept) > 0.5 * gs2.a_star

    def test_mass_balance_law(self, P2, sep_frames):
        # dI/dt = -p J mid-run, central differences over records
        t, I, J = sep_frames.t, sep_frames.I, sep_frames.J
        T_e = sep_frames.T_e_estimate
        idx = np.flatnonzero((t > 0.25 * T_e) & (t < 0.7 * T_e))[5:-5]
        dIdt = (I[idx + 1] - I[idx - 1]) / (t[idx + 1] - t[idx - 1])
        rel = np.abs(dIdt + P2.p * J[idx]) / (P2.p * J[idx])
        assert np.max(rel) < 0.02

    def test_no_instability_monitors(self, sep_frames):
        assert sep_frames.clamp_events == 0
        assert sep_frames.monotone_violations == 0


class TestExpTailRun:
    def test_supersolution_bound(self, exp_frames):
        assert exp_frames.supersolution_excess <= 1e-12

    def test_rate_fit(self, P2, exp_frames):
        assert exp_frames.rate_r2 >= 0.999
        m, _ = rate_exponent(exp_frames, exp_frames.T_e_estimate)
        assert m == pytest.approx(P2.e_time, rel=0.10)

    def test_convergence_to_profile(self, gs2, exp_frames):
        T_e = exp_frames.T_e_estimate
        rescaled = rescale_frames(exp_frames, T_e)
        errs = compare_to_profile(exp_frames, rescaled, gs2.traj)
        kept = [e for e, (tk, _) in zip(errs, exp_frames.snapshots)
                if (T_e - tk) >= 0.01 * T_e]
        assert kept[-1] <= 0.05 * gs2.a_star
        assert kept[-3] >= kept[-2] >= kept[-1]

    def test_energy_chain_nonincreasing(self, P2, exp_frames):
        T_e = exp_frames.T_e_estimate
        rescaled = rescale_frames(exp_frames, T_e)
        E_v = np.array([
            weighted_functionals(P2, exp_frames.grid, v)[3]
            for (s, v), (tk, _) in zip(rescaled, exp_frames.snapshots)
            if (T_e - tk) >= 0.01 * T_e
        ])
        assert np.all(E_v >= 0.0)
        assert np.max(np.diff(E_v)) <= 1e-3 * E_v[0]
