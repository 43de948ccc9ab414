import cmath
import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.integrate import quad, solve_ivp

from grasshj import expr as ex
from grasshj import hj_solver as hj
from grasshj.errors import ConfigError, TurningPointError, WindowExceededError
from grasshj.grassmann import generator, monomial

ZERO = ex.ZERO
ONE = ex.ONE
LINEAR = ex.parse("q")


def test_quad_trivial():
    assert hj.quad_sqrt(ZERO, 0.5, 0, 2) == pytest.approx(2.0, abs=1e-14)


@pytest.mark.parametrize("x1", [0.1, 0.5, 0.9, 0.99])
def test_quad_asin(x1):
    got = hj.quad_sqrt(LINEAR, 0.5, 0, x1, power=-0.5)
    assert got == pytest.approx(math.asin(x1), abs=1e-10)


def test_quad_names_turning_point():
    with pytest.raises(TurningPointError) as info:
        hj.quad_sqrt(LINEAR, 0.5, 0, 1.2)
    assert 1.0 <= info.value.x <= 1.2
    assert "x=" in str(info.value)


def test_quad_weighted_against_scipy():
    V = ex.parse("0.5*q^2 - 0.3")
    w = ex.parse("cos(q) + 2")
    E = 0.4
    g = lambda x: 2 * E - (0.5 * x * x - 0.3) ** 2
    for power in (0.5, -0.5, -1.5):
        want, _ = quad(lambda x: (math.cos(x) + 2) * g(x) ** power, -0.2, 0.9,
                       epsabs=1e-13, epsrel=1e-13)
        assert hj.quad_sqrt(V, E, -0.2, 0.9, w, power) == pytest.approx(want, abs=1e-10)


def test_quad_rejects_other_powers():
    with pytest.raises(ValueError):
        hj.quad_sqrt(ZERO, 0.5, 0, 1, power=1.5)


def test_time_of_flight():
    assert hj.time_of_flight(ZERO, 0.5, 0, 3) == pytest.approx(3.0, abs=1e-13)
    assert hj.time_of_flight(LINEAR, 0.5, 0, 0.5) == pytest.approx(math.asin(0.5), abs=1e-12)
    fwd = hj.time_of_flight(LINEAR, 0.5, 0.1, 0.7)
    assert hj.time_of_flight(LINEAR, 0.5, 0.7, 0.1) == pytest.approx(-fwd, abs=1e-15)
    xs = np.linspace(-0.9, 0.9, 21)
    ts = [hj.time_of_flight(LINEAR, 0.5, 0, x) for x in xs]
    assert np.all(np.diff(ts) > 0)


def test_body_trajectory():
    assert hj.body_trajectory(ZERO, 0.5, 0, 1, 2) == pytest.approx(2.0, abs=1e-12)
    assert hj.body_trajectory(LINEAR, 0.5, 0, 1, 0.5) == pytest.approx(math.sin(0.5), abs=1e-12)
    assert hj.body_trajectory(LINEAR, 0.5, 0.3, 1, 0) == 0.3
    assert hj.body_trajectory(LINEAR, 0.5, 0, -1, 0.5) == pytest.approx(-math.sin(0.5), abs=1e-12)
    # negative time runs the branch backwards
    assert hj.body_trajectory(LINEAR, 0.5, 0, 1, -0.5) == pytest.approx(-math.sin(0.5), abs=1e-12)


def test_round_trip():
    V = ex.parse("0.5*q^2 - 0.3")
    body = hj.BodyBranch(V, 0.4, 0.1, 1)
    for t in np.linspace(0, 0.95 * body.t_max, 30):
        x = body.position(t)
        assert abs(hj.time_of_flight(V, 0.4, 0.1, x) - t) <= 1e-9


def test_window_exceeded():
    body = hj.BodyBranch(LINEAR, 0.5, 0, 1)
    assert body.t_max == pytest.approx(math.pi / 2, abs=1e-3)
    with pytest.raises(WindowExceededError):
        body.position(1.6)
    with pytest.raises(WindowExceededError):
        body.positions([0.0, 1.0, 2.0])


def test_start_at_turning_point():
    with pytest.raises(TurningPointError):
        hj.BodyBranch(LINEAR, 0.5, 1.0, 1)


def test_energy_identity_along_branch():
    V = ex.parse("tanh(q) + 0.2")
    body = hj.BodyBranch(V, 0.6, -0.5, 1)
    for t in np.linspace(0, 2, 11):
        x = body.position(t)
        assert body.speed(x) ** 2 + ex.evaluate(V, x) ** 2 == pytest.approx(1.2, abs=1e-12)


def test_fermion_phase():
    free = hj.BodyBranch(ZERO, 0.5, 0, 1)
    assert hj.fermion_trajectory(ZERO, free, 0.6 + 0.8j, 1.3) == 0.6 + 0.8j
    assert hj.fermion_trajectory(ONE, free, 1, math.pi) == pytest.approx(-1, abs=1e-10)
    V = ex.parse("0.5*q^2 - 0.3")
    body = hj.BodyBranch(V, 0.4, 0.1, 1)
    for t in (0.3, 0.8, 1.4):
        a = hj.fermion_trajectory(ex.diff(V), body, 0.6 + 0.8j, t)
        assert abs(a) == pytest.approx(1.0, abs=1e-14)


def test_constants_examples():
    c = hj.constants_from_ics(LINEAR, ONE, 0, 1, 0, 0)
    assert (c.E, c.A, c.branch_sign) == (0.5, 1.0, 1)
    c = hj.constants_from_ics(ZERO, ZERO, 0, 1, 0, -0.5)
    # the soul grows as q00 + A t in the free case, so A equals the initial soul velocity
    assert (c.E, c.A) == (0.5, -0.5)
    assert hj.constants_from_ics(ZERO, ZERO, 0, -2, 0, 0).branch_sign == -1


def test_constants_reject_zero_velocity():
    with pytest.raises(TurningPointError, match="turning point at t=0"):
        hj.constants_from_ics(LINEAR, ONE, 0, 0, 0, 0)


def test_soul_free_case():
    c = hj.constants_from_ics(ZERO, ZERO, 0, 1, 0.2, -0.5)
    ts = np.linspace(0, 5, 11)
    q0 = hj.soul_trajectory(ZERO, ZERO, c, 0.2, ts)
    assert q0[0] == 0.2
    np.testing.assert_allclose(q0, 0.2 + c.A * ts, atol=1e-13)


def test_soul_harmonic_second_derivative():
    c = hj.constants_from_ics(LINEAR, ONE, 0, 1, 0, 0.3)
    h = 1e-3
    ts = np.arange(0, 1.2 + h / 2, h)
    q0 = hj.soul_trajectory(LINEAR, ONE, c, 0.0, ts)
    acc = (q0[2:] - 2 * q0[1:-1] + q0[:-2]) / h ** 2
    assert np.max(np.abs(acc + q0[1:-1])) <= 1e-6


def _reference_soul(V, x0, v0, q00, qdot00, ts):
    dv = ex.diff(V)
    U = dv
    p = ex.mul(V, dv)
    dp, du = ex.diff(p), ex.diff(U)

    def rhs(t, y):
        x, v, q, w = y
        return [v, -ex.evaluate(p, x), w, -ex.evaluate(dp, x) * q - ex.evaluate(du, x)]

    sol = solve_ivp(rhs, (0, ts[-1]), [x0, v0, q00, qdot00], t_eval=ts, method="DOP853",
                    rtol=1e-12, atol=1e-12)
    return sol.y


@pytest.mark.parametrize("x0, v0, q00, qdot00", [(0.1, 0.8, 0.2, -0.4), (-0.3, -0.6, -0.5, 0.7),
                                                 (0.4, 1.1, 1.0, 0.0)])
def test_soul_against_ode(x0, v0, q00, qdot00):
    # U' != 0 and v0 != 1: the initial value and the forcing integral scale differently
    V = ex.parse("0.5*q^2 - 0.3")
    U = ex.diff(V)
    c = hj.constants_from_ics(V, U, x0, v0, q00, qdot00)
    ts = np.linspace(0, 0.8, 17)
    ref = _reference_soul(V, x0, v0, q00, qdot00, ts)
    tr = hj.hj_trajectory(V, U, c, x0, q00, 1.0, ts)
    np.testing.assert_allclose(tr.x, ref[0], atol=1e-9)
    np.testing.assert_allclose(tr.q0, ref[2], atol=1e-9)


def test_soul_velocity_matches_initial_condition():
    V = ex.parse("0.5*q^2 - 0.3")
    U = ex.diff(V)
    c = hj.constants_from_ics(V, U, 0.1, 0.8, 0.2, -0.4)
    h = 1e-4
    q0 = hj.soul_trajectory(V, U, c, 0.2, [0.0, h, 2 * h])
    slope = (-3 * q0[0] + 4 * q0[1] - q0[2]) / (2 * h)
    assert slope == pytest.approx(-0.4, abs=1e-7)


def test_whole_ratio_form_misses_the_ode():
    # scaling the forcing integral by 1/xdot(0) as well is only right when v0 = 1
    V = ex.parse("0.5*q^2 - 0.3")
    U = ex.diff(V)
    x0, v0, q00, qdot00 = 0.1, 0.8, 0.2, -0.4
    c = hj.constants_from_ics(V, U, x0, v0, q00, qdot00)
    ts = np.linspace(0, 0.8, 9)
    tr = hj.hj_trajectory(V, U, c, x0, q00, 1.0, ts)
    integral = (tr.q0 - tr.xdot / tr.xdot[0] * q00) / tr.xdot
    alt = tr.xdot / tr.xdot[0] * (q00 + integral)
    ref = _reference_soul(V, x0, v0, q00, qdot00, ts)[2]
    assert np.max(np.abs(alt - ref)) > 1e-3


def test_action_components_free():
    c = hj.ActionConstants(E=0.5, A=0.7)
    comps = hj.action_components(ZERO, ZERO, c)
    for x, t in [(0.3, 0.1), (2.0, 1.5), (-1.0, 0.4)]:
        assert comps.S0(x, t) == pytest.approx(math.sqrt(1.0) * x - 0.5 * t, abs=1e-13)
        assert comps.S1(x, t) == pytest.approx(0.7 * (x - t), abs=1e-13)
        assert comps.S2(x, t).allclose(c.phi1 * (x / math.sqrt(1.0) - t), 1e-13)
        assert comps.S3(x, t).allclose(c.phi2 * (x - t), 1e-13)


def test_action_phase_harmonic():
    c = hj.ActionConstants(E=0.5, A=1.0)
    comps = hj.action_components(LINEAR, ONE, c)
    t = -1.0
    for x in (-0.6, 0.2, 0.8):
        # T(x) = Th(x) = asin(x) for unit frequency and energy 1/2
        phase = comps.s2_scalar(x, t) / (math.asin(x) - t)
        assert phase == pytest.approx(cmath.exp(1j * math.asin(x)), abs=1e-10)


def test_branch_sign_flips_action():
    c_plus = hj.ActionConstants(E=0.5, A=1.0)
    c_minus = hj.ActionConstants(E=0.5, A=1.0, branch_sign=-1)
    p = hj.action_components(LINEAR, ONE, c_plus)
    m = hj.action_components(LINEAR, ONE, c_minus)
    assert m.S0(0.4, 0.2) == pytest.approx(-p.S0(0.4, 0.2) - 2 * 0.5 * 0.2, abs=1e-13)


def test_constants_validation():
    with pytest.raises(ValueError):
        hj.ActionConstants(E=0.5, A=0, branch_sign=0)
    with pytest.raises(ValueError):
        hj.ActionConstants(E=0.5, A=0, phi1=monomial((0, 1)))


def _grid(V, E, x_ref):
    body = hj.BodyBranch(V, E, x_ref, 1)
    lo = hj.BodyBranch(V, E, x_ref, -1).position(0.8 * hj.BodyBranch(V, E, x_ref, -1).t_max) \
        if math.isfinite(body.t_max) else x_ref - 2
    hi = body.position(0.8 * body.t_max) if math.isfinite(body.t_max) else x_ref + 2
    return np.linspace(lo, hi, 10), np.linspace(0, 1.2, 10)


@pytest.mark.parametrize("V, U", [(ZERO, ZERO), (LINEAR, ONE),
                                  (ex.parse("0.5*q^2 - 0.3"), ex.parse("q"))])
def test_residuals_vanish(V, U):
    c = hj.ActionConstants(E=0.5, A=0.7)
    comps = hj.action_components(V, U, c)
    xs, ts = _grid(V, 0.5, 0.0)
    worst = max(hj.hj_residual(V, U, comps, x, t).max() for x in xs for t in ts)
    assert worst <= 1e-7


def test_perturbed_action_violates_first_equation():
    c = hj.ActionConstants(E=0.5, A=0.7)

    class Perturbed(hj.ActionComponents):
        def s0(self, x, t):
            return super().s0(x, t) + 0.1 * x * x

    comps = Perturbed(ZERO, ZERO, c)
    r = hj.hj_residual(ZERO, ZERO, comps, 0.5, 0.3)
    assert r[0] > 1e-3


def test_fifth_residual_constant_phis():
    c = hj.ActionConstants(E=0.5, A=0.7)
    comps = hj.action_components(LINEAR, ONE, c)
    for x in (-0.5, 0.0, 0.5):
        assert hj.hj_residual(LINEAR, ONE, comps, x, 0.4)[4] <= 1e-7


def test_jacobi_derivatives_constant():
    V = ex.parse("0.5*q^2 - 0.3")
    U = ex.diff(V)
    c = hj.constants_from_ics(V, U, 0.1, 0.8, 0.2, -0.4)
    ts = np.linspace(0, 1.0, 11)
    tr = hj.hj_trajectory(V, U, c, 0.1, 0.2, 0.6 + 0.8j, ts)
    comps = hj.action_components(V, U, replace(c, x_ref=0.0))
    first = None
    for k in range(len(ts)):
        d = comps.jacobi_derivatives(tr.q(k), tr.psi(k), tr.psibar(k), ts[k])
        if first is None:
            first = d
        for key in ("A", "phi1", "phi2"):
            assert (d[key] - first[key]).max_abs() <= 1e-7
    assert first["phi1"].max_abs() > 0.05 and first["A"].max_abs() > 0.05


def test_action_assembles_components():
    c = hj.ActionConstants(E=0.5, A=0.7)
    comps = hj.action_components(LINEAR, ONE, c)
    psi, psibar = generator(0, coeff=0.6 + 0.8j), generator(1, coeff=0.6 - 0.8j)
    s = comps.action(0.3 + 0.0 * monomial((0, 1)), psi, psibar, 0.2)
    want = comps.S0(0.3, 0.2) + psi * psibar * comps.S1(0.3, 0.2) \
        + psi * comps.S2(0.3, 0.2) + psibar * comps.S3(0.3, 0.2)
    assert s.allclose(want, 1e-12)


def test_config_error_is_distinct():
    assert not issubclass(ConfigError, TurningPointError)
