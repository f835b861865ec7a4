import math
import warnings

import numpy as np
import pytest

from padicwalk.heatkernel import (HeatKernelModel, ModelError, RadialStepFunction, apply_W_step,
                                  ball_transition, ball_transition_bound, cauchy_solve, evolve,
                                  radial_convolve)
from padicwalk.landscape import Exponential, PowerLaw, kappa_admissible_max
from padicwalk.symbol import ToleranceError

TIMES = [1e-3, 0.1, 1.0, 10.0, 100.0]


def _models():
    return [
        HeatKernelModel(PowerLaw(3, 1, 1.0, 2.0), 1.0),
        HeatKernelModel(PowerLaw(5, 2, 0.5, 1.5), 0.8),
        HeatKernelModel(PowerLaw(3, 3, 1.0, 4.0), 2.0),
        HeatKernelModel(Exponential(5, 1, 1.0, 2.0, 0.5), 0.7),
    ]


MODELS = _models()


def phi_profile(M, t):
    """phi on every window level: CDF(0, t) inside Z_p^n, Z(p**b, t) outside."""
    prof = M.z_profile(t).copy()
    inside = M.levels <= 0
    prof[inside] = M.phi(0, t)
    return prof


@pytest.mark.parametrize("M", MODELS, ids=["golden", "p5n2", "p3n3", "exp"])
def test_nonnegative_and_unit_mass(M):
    for t in TIMES:
        assert np.all(M.z_profile(t) >= 0)
        mass = M.radius_cdf(M.level_max, t, "direct")
        assert abs(mass - 1.0) <= 1e-8
        assert abs(M.radius_cdf(M.level_max, t, "dual") - 1.0) <= 1e-8


@pytest.mark.parametrize("M", MODELS, ids=["golden", "p5n2", "p3n3", "exp"])
def test_two_series_agree(M):
    for t in TIMES:
        for b in (None, -3, 0, 1, 4, 12, 40):
            ball = M.z_density(b, t, "ball")
            shell = M.z_density(b, t, "shell")
            assert abs(ball - shell) <= 1e-10 * ball
        M.z_density_checked(7, t)


def test_cdf_forms_and_monotonicity(golden_model):
    M = golden_model
    for t in (0.01, 1.0, 50.0):
        prev = 0.0
        for m in range(-15, 40):
            c = M.radius_cdf(m, t, "both")
            assert 0.0 <= c <= 1.0 + 1e-12
            assert c >= prev - 1e-15
            prev = c
        assert M.radius_cdf(0, t) + M.radius_sf(0, t) == pytest.approx(1.0, abs=1e-12)


def test_cdf_at_time_zero(golden_model):
    assert golden_model.radius_cdf(-3, 0.0) == 1.0
    assert golden_model.radius_cdf(0, 1e-9) == pytest.approx(1.0, abs=1e-6)


def test_delta_limit(golden_model):
    M = golden_model
    t = 1e-8
    for m in (0, 2, 5):
        assert abs(M.radius_cdf(m, t, "both") - 1.0) <= 1e-6
    # a ball that misses the origin receives almost nothing
    assert ball_transition(M, 1, 0, t) <= 1e-6
    assert ball_transition(M, 3, 1, t) <= 1e-6


def test_t_below_t_min_rejected(golden_model):
    with pytest.raises(ValueError):
        golden_model.z_density(0, 1e-12)


def test_kernel_decreases_with_radius(golden_model):
    z = golden_model.z_profile(1.0)
    assert np.all(np.diff(z) <= 1e-18)


def test_semigroup_shell_form(golden_model):
    M = golden_model
    k = np.arange(-20, 40) - M.lower_level
    for t in (0.1, 1.0, 10.0):
        for s in (0.1, 1.0, 10.0):
            conv = radial_convolve(M.z_profile(t), M.z_profile(s), M.lower_level, M.p, M.n)
            ref = M.z_profile(t + s)
            assert np.max(np.abs(conv[k] - ref[k])) <= 1e-9


def test_radial_convolution_of_balls():
    # 1_B0 * 1_B0 = vol(B0) 1_B0 and 1_B0 * 1_B2 = 1_B2
    lo, p, n = -3, 3, 1
    lev = lo + np.arange(10)
    b0 = (lev <= 0).astype(float)
    b2 = (lev <= 2).astype(float)
    assert np.allclose(radial_convolve(b0, b0, lo, p, n), b0, atol=1e-15)
    assert np.allclose(radial_convolve(b0, b2, lo, p, n), b2, atol=1e-15)


def test_decay_constant_bounds_kernel(golden_model):
    M = golden_model
    a1 = M.landscape.certificate.alpha1
    betas = np.arange(1, 21)
    ts = np.geomspace(1e-3, 10, 25)
    ratios = np.array([[M.z_density(int(b), t) * float(M.p) ** (b * a1) / t for b in betas] for t in ts])
    fitted = ratios.max()
    assert np.isfinite(fitted)
    assert fitted <= M.decay_constant()
    # the ratio does not drift upward in the radius: the decay exponent is the right one
    assert ratios[:, -1].max() <= 1.01 * ratios[:, 10].max()


def test_phi_values(golden_model):
    M = golden_model
    assert M.phi(0, 0.0) == 1.0 and M.phi(-4, 0.0) == 1.0
    assert M.phi(1, 0.0) == 0.0
    for t in (0.01, 1.0, 10.0):
        vals = np.array([M.phi(b, t) for b in range(1, 60)])
        assert np.all((vals >= 0) & (vals <= 1))
        assert vals[-1] < 1e-40
        assert 0 < M.phi(0, t) <= 1


def test_survival_initial_value(transient_model):
    assert transient_model.survival_S(0.0) == 1.0


def test_first_derivative_matches_finite_differences(golden_model):
    M = golden_model
    h = 1e-4
    for t in (0.3, 1.0, 4.0):
        for b in (0, 1, 3):
            fd = (M.phi(b, t + h) - M.phi(b, t - h)) / (2 * h)
            an = M.time_derivative(1, b, t)
            assert abs(fd - an) <= 1e-5 * abs(an)


def test_second_derivative_matches_finite_differences(golden_model):
    M = golden_model
    h = 1e-4
    for t in (0.3, 1.0, 4.0):
        # second difference of phi where its rounding floor eps*phi/h**2 sits below 1e-5 relative
        for b in (0, 1):
            fd = (M.phi(b, t + h) - 2 * M.phi(b, t) + M.phi(b, t - h)) / h ** 2
            an = M.time_derivative(2, b, t)
            assert abs(fd - an) <= 1e-5 * abs(an)
        # far out phi'' is ~1e-8 and only the difference of phi' resolves it
        for b in (1, 3, 6):
            fd = (M.time_derivative(1, b, t + h) - M.time_derivative(1, b, t - h)) / (2 * h)
            an = M.time_derivative(2, b, t)
            assert abs(fd - an) <= 1e-5 * abs(an)


def test_time_derivative_radial(golden_model):
    # inside Z_p^n the derivative only depends on the norm, and every norm <= 1 gives the same value
    M = golden_model
    assert M.time_derivative(1, -5, 0.7) == M.time_derivative(1, 0, 0.7)


def test_master_equation(golden_model):
    M = golden_model
    for t in (0.2, 1.0, 3.0):
        prof = RadialStepFunction(tuple(range(0, 81)), tuple(M.phi(b, t) for b in range(0, 81)))
        for b in (-2, 0, 1, 2, 5):
            lhs = M.time_derivative(1, b, t)
            assert abs(lhs - apply_W_step(M, M.kappa, prof, b)) <= 1e-8
            assert abs(lhs - apply_W_step(M, M.kappa, prof, b, "spectral")) <= 1e-8


def test_survival_balance(transient_model):
    from padicwalk.fpt import exit_rate, g_density
    M = transient_model
    ts = np.array([0.05, 0.3, 1.0, 5.0, 30.0])
    lhs = M.time_derivative(1, 0, ts)
    rhs = g_density(M, ts) - exit_rate(M) * M.survival_S(ts)
    assert np.max(np.abs(lhs - rhs)) <= 1e-6


def test_cauchy_with_unit_ball_data_is_phi(golden_model):
    M = golden_model
    grid = np.linspace(0, 2, 11)
    sol = cauchy_solve(M, RadialStepFunction.ball_indicator(0), None, grid, [0, 1, 3])
    for k, t in enumerate(grid):
        for i, b in enumerate([0, 1, 3]):
            assert sol.values[k, i] == pytest.approx(M.phi(b, t), abs=1e-15)


def test_semigroup_through_evolve(golden_model):
    # evolve a step function by t, then the result by t' via shell convolution
    M = golden_model
    f = RadialStepFunction((-1, 0, 2), (3.0, 1.0, 0.5))
    for t in (0.1, 1.0, 10.0):
        for s in (0.1, 1.0, 10.0):
            prof = np.array([evolve(M, f, int(b), t) for b in M.levels[:M.level_max - M.lower_level + 1]])
            prof = np.concatenate((prof, np.zeros(M.levels.size - prof.size)))
            conv = radial_convolve(M.z_profile(s), prof, M.lower_level, M.p, M.n)
            for b in (-3, 0, 1, 4, 10):
                assert abs(conv[b - M.lower_level] - evolve(M, f, b, t + s)) <= 1e-9


def _phi_time_integral(M, b, t):
    """Closed-form integral of phi(p**b, .) over [0, t] from the frequency-side series."""
    k, a = M.kappa, M.a
    lev = M.levels
    with np.errstate(under="ignore"):
        E = -np.expm1(-k * t * a) / (k * a)
    if b <= 0:
        sel = lev >= 0
        tail = float(M.p) ** (-(M.upper_level + 1) * M.n)
        return math.fsum((1 - M.q) * np.power(float(M.p), -lev[sel] * 1.0 * M.n) * E[sel]) + tail * t
    # Z(p**b) = sum_{g >= b} p**(-ng) [e(g) - e(g-1)]
    Eprev = np.concatenate(([-math.expm1(-k * t * M.a_below) / (k * M.a_below)], E[:-1]))
    sel = lev >= b
    return math.fsum(np.power(float(M.p), -lev[sel] * 1.0 * M.n) * (E[sel] - Eprev[sel]))


def test_cauchy_constant_forcing(golden_model):
    M = golden_model
    grid = np.linspace(0, 2, 41)
    levels = [0, 1, 2]
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        sol = cauchy_solve(M, RadialStepFunction.zero(), RadialStepFunction.ball_indicator(0), grid, levels,
                           tol=1e-3)
    for i, b in enumerate(levels):
        ref = _phi_time_integral(M, b, 2.0)
        err = abs(sol.values[-1, i] - ref)
        assert err <= 1e-4
        assert err <= 3 * sol.duhamel_error[-1] + 1e-12


def test_cauchy_coarse_grid_warns(golden_model):
    with pytest.warns(UserWarning):
        sol = cauchy_solve(golden_model, RadialStepFunction.zero(), RadialStepFunction.ball_indicator(0),
                           np.linspace(0, 4, 5), [1], tol=1e-9)
    assert sol.warned


def test_cauchy_grid_validation(golden_model):
    with pytest.raises(ValueError):
        cauchy_solve(golden_model, RadialStepFunction.zero(), None, [0.0, 0.1, 0.3], [0])
    with pytest.raises(ValueError):
        cauchy_solve(golden_model, RadialStepFunction.zero(), None, [0.1, 0.2], [0])


def test_step_function_representation():
    f = RadialStepFunction((-1, 0, 2), (3.0, 1.0, 0.5))
    assert f(None) == 3.0 and f(-5) == 3.0 and f(0) == 1.0 and f(2) == 0.5 and f(3) == 0.0
    assert f.ball_integral(5, 3, 1) == pytest.approx(3 / 3 + 1 * (1 - 1 / 3) + 0.5 * (9 - 1))
    with pytest.raises(ValueError):
        RadialStepFunction((1, 0), (1.0, 2.0))


def test_ball_transition_bound(golden_model):
    M = golden_model
    bounds = []
    for x in (1, 2, 4, 8, 16):
        bound, pmax = ball_transition_bound(M, x, 0, 2.0)
        assert pmax <= bound
        bounds.append(bound)
    assert np.all(np.diff(bounds) < 0) and bounds[-1] < 1e-20
    with pytest.raises(ValueError):
        ball_transition_bound(M, 0, 0, 1.0)


def test_ball_transition_bound_reports_violation(golden_model, monkeypatch):
    monkeypatch.setattr(golden_model, "decay_constant", lambda: 1e-30)
    with pytest.raises(ToleranceError) as exc:
        ball_transition_bound(golden_model, 2, 0, 1.0)
    assert exc.value.values[1] == 2
    monkeypatch.undo()


def test_escape_rate_bound(golden_model):
    M = golden_model
    ts = np.geomspace(1e-6, 5, 30)
    for e in (0, 2, 5):
        C = M.escape_rate_bound(e)
        assert np.all(M.radius_sf(e, ts) <= C * ts * (1 + 1e-12))


def test_ball_transition_at_time_zero(golden_model):
    assert ball_transition(golden_model, -1, 0, 0.0) == 1.0
    assert ball_transition(golden_model, None, 0, 0.0) == 1.0
    assert ball_transition(golden_model, 2, 0, 0.0) == 0.0


def test_kappa_checks():
    L = PowerLaw(3, 1, 1.0, 0.5)
    kmax = kappa_admissible_max(L)
    HeatKernelModel(L, 2 * kmax)                    # allowed without the first-passage pipeline
    with pytest.raises(ModelError):
        HeatKernelModel(L, 2 * kmax, fpt=True)
    with pytest.raises(ModelError):
        HeatKernelModel(L, 0.0)


def test_slow_landscape_has_no_kernel():
    with pytest.raises(ModelError):
        HeatKernelModel(Exponential(3, 1, 1.0, 0.5, 0.5), 1.0)
