"""Closed-form Hamilton-Jacobi action and trajectories by quadrature.

The complete integral is

    S = S0(x, t) + psi psibar S1(x, t) + psi S2(x, t) + psibar S3(x, t)

with, on a monotone branch of sign s (the sign of the body velocity),

    S0 = W(x) - E t,           W(x) = s * int sqrt(2E - V^2) dx
    S1 = A (T(x) - t),         T(x) = s * int dx / sqrt(2E - V^2)
    S2 = phi1 (T(x) - t) exp(+i Th(x)),
    S3 = phi2 (T(x) - t) exp(-i Th(x)),  Th(x) = s * int U dx / sqrt(2E - V^2)

all integrals taken from ``ActionConstants.x_ref``. Differentiating S with
respect to its constants yields the trajectories: the body x_qc(t) inverts
T, the fermion picks up the phase exp(-i int U dt), and the soul of the even
coordinate (the coefficient of psibar0 psi0) is

    q0(t) = xdot(t)/xdot(0) * q0(0) + xdot(t) * int_0^t (A - U) / (2E - V^2) dtau.

Every integral over time is evaluated as an integral over x on the branch
(dtau = dx / xdot), so no quadrature ever needs the inverse trajectory.
Turning points (2E - V^2 -> 0) are refused with TurningPointError rather
than integrated through.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import expr as ex
from ._backend import GUARD, NOCONVERGE, NONFINITE, OK, kernels
from .errors import (DomainError, ExprDomainError, QuadratureError, TurningPointError,
                     WindowExceededError)
from .grassmann import GrassmannElement, generator, lift_taylor, monomial, scalar

QUAD_TOL = 1e-10
ROOT_TOL = 1e-12
FD_STEP = 1e-5
GUARD_FACTOR = 1e-8
QUAD_LIMIT = 4000
SCAN_POINTS = 256

_HALF_POWERS = {0.5: 1, -0.5: -1, -1.5: -3}


def guard_for(E):
    """Smallest admissible value of 2E - V^2."""
    return GUARD_FACTOR * 2.0 * E


@lru_cache(maxsize=256)
def _program(e):
    return ex.compiled(e)


def _check_energy(E):
    if not E > 0:
        raise DomainError(f"energy must be positive for a moving branch, got E={E}")


def quad_sqrt(V, E, x0, x1, weight=None, power=0.5, tol=QUAD_TOL, scan=True):
    """Integrate ``weight(x) * (2E - V(x)^2)**power`` from ``x0`` to ``x1``.

    ``power`` is one of +1/2, -1/2, -3/2. The integrand is guarded:
    wherever 2E - V^2 drops below ``1e-8 * 2E`` a TurningPointError naming
    the offending x is raised. Reversed limits give the negated integral.
    """
    _check_energy(E)
    try:
        half_power = _HALF_POWERS[power]
    except KeyError:
        raise ValueError(f"power must be one of {sorted(_HALF_POWERS)}, got {power}") from None
    vprog = _program(V)
    wprog = _program(weight if weight is not None else ex.ONE)
    two_e = 2.0 * E
    guard = guard_for(E)
    if scan:
        bad = kernels.guard_scan(vprog.code, vprog.args, two_e, x0, x1, SCAN_POINTS, guard)
        if bad == bad:
            raise TurningPointError(
                f"2E - V^2 below the turning-point guard at x={bad!r}", bad)
    value, err, status, bad = kernels.gk_integrate(
        wprog.code, wprog.args, vprog.code, vprog.args, two_e, half_power,
        float(x0), float(x1), tol, guard, QUAD_LIMIT)
    if status == OK:
        return value
    if status == GUARD:
        raise TurningPointError(f"2E - V^2 below the turning-point guard at x={bad!r}", bad)
    if status == NONFINITE:
        raise ExprDomainError(f"integrand weight undefined at x={bad!r}", bad)
    if status == NOCONVERGE:
        raise QuadratureError(f"quadrature on [{x0}, {x1}] stalled at error {err:.3g}")
    raise QuadratureError(f"quadrature failed with status {status}")


def time_of_flight(V, E, x0, x1, tol=QUAD_TOL):
    """T = int_{x0}^{x1} dx / sqrt(2E - V^2); antisymmetric in the limits."""
    return quad_sqrt(V, E, x0, x1, None, -0.5, tol)


# -- integration constants --------------------------------------------------------

def _default_phi1():
    return generator(1)


def _default_phi2():
    return generator(0)


@dataclass(frozen=True)
class ActionConstants:
    """Integration constants of the complete integral.

    ``phi1`` and ``phi2`` are odd Grassmann constants (by default the
    generators psibar0 and psi0); ``x_ref`` is the lower limit of every
    indefinite integral in the action.
    """

    E: float
    A: float
    phi1: GrassmannElement = field(default_factory=_default_phi1)
    phi2: GrassmannElement = field(default_factory=_default_phi2)
    branch_sign: int = 1
    x_ref: float = 0.0

    def __post_init__(self):
        if self.branch_sign not in (1, -1):
            raise ValueError("branch_sign must be +1 or -1")
        if not self.E >= 0:
            raise ValueError("E must be non-negative")
        for name in ("phi1", "phi2"):
            value = getattr(self, name)
            if value.parity() != 1 and not value.is_zero():
                raise ValueError(f"{name} must be odd")


def constants_from_ics(V, U, x0, v0, q00, qdot00, phi1=None, phi2=None):
    """Map initial conditions of (x, xdot, q0, q0dot) to action constants.

    E = v0^2/2 + V(x0)^2/2 and A = U(x0) + v0*qdot00 - xddot(0)*q00 with
    xddot(0) = -V(x0) V'(x0); the branch follows the sign of v0.
    """
    if v0 == 0:
        raise TurningPointError("initial velocity is zero: turning point at t=0", x0)
    vx = ex.evaluate(V, x0)
    accel = -vx * ex.evaluate(ex.diff(V), x0)
    E = 0.5 * v0 * v0 + 0.5 * vx * vx
    A = ex.evaluate(U, x0) + v0 * qdot00 - accel * q00
    kwargs = {}
    if phi1 is not None:
        kwargs["phi1"] = phi1
    if phi2 is not None:
        kwargs["phi2"] = phi2
    c = ActionConstants(E=E, A=A, branch_sign=1 if v0 > 0 else -1, x_ref=float(x0), **kwargs)
    # the matching condition must reproduce the initial soul velocity
    qdot_check = accel * q00 / v0 + (A - ex.evaluate(U, x0)) / v0
    if abs(qdot_check - qdot00) > 1e-8 * max(1.0, abs(qdot00)):
        raise DomainError("initial soul velocity not reproduced by the matched constants")
    return c


# -- body trajectory ----------------------------------------------------------------

class BodyBranch:
    """The monotone branch x_qc(t) through ``x_init`` moving in direction ``branch_sign``."""

    def __init__(self, V, E, x_init, branch_sign=1, root_tol=ROOT_TOL, quad_tol=QUAD_TOL):
        if branch_sign not in (1, -1):
            raise ValueError("branch_sign must be +1 or -1")
        _check_energy(E)
        self.V = V
        self.E = float(E)
        self.x_init = float(x_init)
        self.s = branch_sign
        self.root_tol = root_tol
        self.quad_tol = quad_tol
        self._v = _program(V)
        self.guard = guard_for(E)
        if not self.gap(self.x_init) >= self.guard:
            raise TurningPointError(
                f"start point x={self.x_init!r} is at or beyond a turning point", self.x_init)
        self._boundary = None
        self._t_max = None

    def gap(self, x):
        """2E - V(x)^2 (NaN where V is undefined)."""
        v = self._v.raw(x)
        return 2.0 * self.E - v * v

    def speed(self, x):
        g = self.gap(x)
        if not g >= self.guard:
            raise TurningPointError(f"2E - V^2 below the turning-point guard at x={x!r}", x)
        return math.sqrt(g)

    def velocity(self, x):
        return self.s * self.speed(x)

    def tof(self, x0, x1):
        return time_of_flight(self.V, self.E, x0, x1, self.quad_tol)

    @property
    def boundary(self):
        """Where the branch meets the turning-point guard (+-inf if never)."""
        if self._boundary is None:
            self._boundary = self._find_boundary()
        return self._boundary

    def _find_boundary(self):
        k = kernels
        x = self.x_init
        step = 0.5 * max(1.0, abs(x))
        two_e = 2.0 * self.E
        for _ in range(90):
            nxt = x + self.s * step
            bad = k.guard_scan(self._v.code, self._v.args, two_e, x, nxt, 64, self.guard)
            if bad == bad:
                good = bad - self.s * step / 64
                return self._bisect_boundary(good, bad)
            x = nxt
            step *= 2.0
            if abs(x - self.x_init) > 1e12:
                break
        return self.s * math.inf

    def _bisect_boundary(self, good, bad):
        for _ in range(200):
            mid = 0.5 * (good + bad)
            if mid in (good, bad):
                break
            if self.gap(mid) >= self.guard:
                good = mid
            else:
                bad = mid
        return good

    @property
    def t_max(self):
        """Time to reach the guarded boundary of the branch."""
        if self._t_max is None:
            b = self.boundary
            if math.isinf(b):
                self._t_max = math.inf
            else:
                # the endpoint sits on the guard itself, so skip the prescan
                self._t_max = self.s * quad_sqrt(self.V, self.E, self.x_init, b, None, -0.5,
                                                 1e-8, scan=False)
        return self._t_max

    def check_window(self, t_end):
        if t_end > self.t_max:
            raise WindowExceededError(
                f"t={t_end} lies beyond the monotone branch (turning point reached at "
                f"t~{self.t_max:.6g}, x~{self.boundary:.6g})", self.boundary)

    def advance(self, x_start, dt):
        """Solve s * T(x_start, x) = dt for x, with dt >= 0."""
        if dt < 0:
            raise ValueError("advance needs dt >= 0")
        if dt == 0:
            return x_start
        s = self.s
        # keep every Newton iterate strictly inside the guarded interval
        u_max = abs(self.boundary - x_start) * (1 - 1e-12)
        lo, hi = 0.0, u_max
        u = dt * self.speed(x_start)
        if u >= hi:
            u = 0.5 * (lo + hi)
        for _ in range(200):
            x = x_start + s * u
            resid = s * self.tof(x_start, x) - dt
            if resid > 0:
                hi = u
            else:
                lo = u
            u_new = u - resid * self.speed(x)
            if not lo <= u_new <= hi or (u_new == hi and math.isinf(hi)):
                u_new = 0.5 * (lo + hi) if math.isfinite(hi) else 2.0 * u + 1.0
            if abs(u_new - u) <= self.root_tol:
                return x_start + s * u_new
            if hi - lo <= self.root_tol:
                if math.isfinite(u_max) and u_max - lo <= self.root_tol:
                    break
                return x_start + s * 0.5 * (lo + hi)
            u = u_new
        raise WindowExceededError(
            f"no position reached after time {dt} from x={x_start} within the branch",
            self.boundary)

    def position(self, t):
        """x_qc(t) by inverting the time of flight from ``x_init``."""
        if t < 0:
            return BodyBranch(self.V, self.E, self.x_init, -self.s, self.root_tol,
                              self.quad_tol).position(-t)
        self.check_window(t)
        return self.advance(self.x_init, t)

    def positions(self, ts):
        """Positions at increasing times ``ts >= 0``, solved incrementally."""
        ts = np.asarray(ts, dtype=float)
        if ts.size == 0:
            return ts.copy()
        if ts[0] < 0 or np.any(np.diff(ts) < 0):
            raise ValueError("sample times must be non-negative and increasing")
        self.check_window(ts[-1])
        out = np.empty_like(ts)
        x, t_prev = self.x_init, 0.0
        for i, t in enumerate(ts):
            x = self.advance(x, t - t_prev)
            out[i] = x
            t_prev = t
        return out


def body_trajectory(V, E, x_init, branch_sign, t):
    """x_qc(t) on the monotone branch through ``x_init``."""
    return BodyBranch(V, E, x_init, branch_sign).position(t)


def fermion_trajectory(U, body, psi0_coeff, t):
    """Coefficient a(t) of psi0 in psi(t) = a(t) psi0, a = a0 exp(-i int_0^t U dtau).

    The conjugate variable psibar(t) carries exp(+i int U).
    """
    x = body.position(t)
    theta = body.s * quad_sqrt(body.V, body.E, body.x_init, x, U, -0.5, body.quad_tol)
    return complex(psi0_coeff) * cmath.exp(-1j * theta)


@dataclass
class HJTrajectory:
    """Time samples of the trajectory obtained from the complete integral."""

    t: np.ndarray
    x: np.ndarray
    xdot: np.ndarray
    q0: np.ndarray
    theta: np.ndarray
    a: np.ndarray
    constants: ActionConstants

    def psi(self, k):
        return generator(0, coeff=self.a[k])

    def psibar(self, k):
        return generator(1, coeff=self.a[k].conjugate())

    def q(self, k):
        """Even coordinate x + q0 psibar0 psi0 at sample ``k``."""
        return scalar(self.x[k]) + monomial((1, 0), coeff=self.q0[k])


def hj_trajectory(V, U, c, x_init, q00, psi0, ts, root_tol=ROOT_TOL, quad_tol=QUAD_TOL):
    """Body, soul and fermion trajectories at the times ``ts`` (increasing, >= 0)."""
    ts = np.asarray(ts, dtype=float)
    body = BodyBranch(V, c.E, x_init, c.branch_sign, root_tol, quad_tol)
    xs = body.positions(ts)
    s = body.s
    weight = ex.sub(ex.Num(float(c.A)), U)
    xdot0 = body.velocity(x_init)
    n = len(ts)
    xdot = np.empty(n)
    q0 = np.empty(n)
    theta = np.empty(n)
    x_prev, th, soul = float(x_init), 0.0, 0.0
    for i, x in enumerate(xs):
        if x != x_prev:
            th += s * quad_sqrt(V, c.E, x_prev, x, U, -0.5, quad_tol, scan=False)
            soul += s * quad_sqrt(V, c.E, x_prev, x, weight, -1.5, quad_tol, scan=False)
        v = body.velocity(x)
        xdot[i] = v
        theta[i] = th
        q0[i] = v / xdot0 * q00 + v * soul
        x_prev = x
    a = complex(psi0) * np.exp(-1j * theta)
    return HJTrajectory(t=ts, x=xs, xdot=xdot, q0=q0, theta=theta, a=a, constants=c)


def soul_trajectory(V, U, c, q00, window, x_init=None):
    """q0 at the times in ``window`` for the branch starting at ``x_init``
    (default ``c.x_ref``)."""
    x_init = c.x_ref if x_init is None else x_init
    return hj_trajectory(V, U, c, x_init, q00, 1.0, window).q0


# -- the action ----------------------------------------------------------------------

class ActionComponents:
    """S0..S3 of the complete integral as functions of (x, t).

    ``S0`` and ``S1`` return floats, ``S2`` and ``S3`` Grassmann elements
    (odd constants times a complex function).
    """

    def __init__(self, V, U, c, quad_tol=QUAD_TOL):
        _check_energy(c.E)
        self.V, self.U, self.c = V, U, c
        self.quad_tol = quad_tol
        self._v = _program(V)
        self._u = _program(U)
        self._cache = {}

    def _integrals(self, x):
        """(W, T, Th) at x: the three indefinite integrals from x_ref."""
        hit = self._cache.get(x)
        if hit is None:
            c, s = self.c, self.c.branch_sign
            w = quad_sqrt(self.V, c.E, c.x_ref, x, None, 0.5, self.quad_tol)
            t = quad_sqrt(self.V, c.E, c.x_ref, x, None, -0.5, self.quad_tol)
            th = quad_sqrt(self.V, c.E, c.x_ref, x, self.U, -0.5, self.quad_tol)
            hit = (s * w, s * t, s * th)
            if len(self._cache) > 100000:
                self._cache.clear()
            self._cache[x] = hit
        return hit

    def gap(self, x):
        v = self._v(x)
        return 2.0 * self.c.E - v * v

    def s0(self, x, t):
        return self._integrals(x)[0] - self.c.E * t

    def s1(self, x, t):
        return self.c.A * (self._integrals(x)[1] - t)

    def s2_scalar(self, x, t):
        _, big_t, th = self._integrals(x)
        return (big_t - t) * cmath.exp(1j * th)

    def s3_scalar(self, x, t):
        _, big_t, th = self._integrals(x)
        return (big_t - t) * cmath.exp(-1j * th)

    def S0(self, x, t):
        return self.s0(x, t)

    def S1(self, x, t):
        return self.s1(x, t)

    def S2(self, x, t):
        return self.c.phi1 * self.s2_scalar(x, t)

    def S3(self, x, t):
        return self.c.phi2 * self.s3_scalar(x, t)

    # analytic x-derivatives, used to lift the components to a Grassmann q
    def _derivs(self, x, t):
        s = self.c.branch_sign
        root = math.sqrt(self.gap(x))
        u = self._u(x)
        _, big_t, th = self._integrals(x)
        e_plus = cmath.exp(1j * th)
        d_t = s / root
        d_th = s * u / root
        return {
            "s0": (self.s0(x, t), s * root),
            "tau": (big_t - t, d_t),
            "x1": ((big_t - t) * e_plus, (d_t + 1j * (big_t - t) * d_th) * e_plus),
            "x2": ((big_t - t) / e_plus, (d_t - 1j * (big_t - t) * d_th) / e_plus),
        }

    def _lifted(self, q, t):
        body = q.body.real
        return {k: lift_taylor(q, v) for k, v in self._derivs(body, t).items()}

    def action(self, q, psi, psibar, t):
        """The assembled action S(q, psi, psibar, t) as a Grassmann element."""
        lifted = self._lifted(q, t)
        c = self.c
        return (lifted["s0"] + psi * psibar * lifted["tau"] * c.A
                + psi * c.phi1 * lifted["x1"] + psibar * c.phi2 * lifted["x2"])

    def jacobi_derivatives(self, q, psi, psibar, t):
        """Derivatives of S with respect to the constants A, phi1, phi2.

        The odd derivatives are left derivatives: d(psi phi1 X)/d phi1 = -psi X.
        """
        lifted = self._lifted(q, t)
        return {
            "A": psi * psibar * lifted["tau"],
            "phi1": -(psi * lifted["x1"]),
            "phi2": -(psibar * lifted["x2"]),
        }


def action_components(V, U, c, quad_tol=QUAD_TOL):
    return ActionComponents(V, U, c, quad_tol)


def _central(f, x, h):
    return (f(x + h) - f(x - h)) / (2.0 * h)


def hj_residual(V, U, comps, x, t, h=FD_STEP):
    """Absolute residuals of the five parity components of the HJ equation.

    Derivatives are central differences with step ``h``. The fifth entry is
    the psi psibar bilinear dS2/dx dS3/dx psi psibar, evaluated in the
    algebra of the odd constants with psi, psibar as its generators 0 and 1.
    """
    u = ex.evaluate(U, x)
    vx = ex.evaluate(V, x)
    ds0_dx = _central(lambda y: comps.s0(y, t), x, h)
    ds0_dt = _central(lambda s: comps.s0(x, s), t, h)
    ds1_dx = _central(lambda y: comps.s1(y, t), x, h)
    ds1_dt = _central(lambda s: comps.s1(x, s), t, h)
    ds2_dx = _central(lambda y: comps.s2_scalar(y, t), x, h)
    ds2_dt = _central(lambda s: comps.s2_scalar(x, s), t, h)
    ds3_dx = _central(lambda y: comps.s3_scalar(y, t), x, h)
    ds3_dt = _central(lambda s: comps.s3_scalar(x, s), t, h)
    phi1, phi2 = comps.c.phi1, comps.c.phi2
    r0 = abs(ds0_dt + 0.5 * ds0_dx ** 2 + 0.5 * vx * vx)
    r2 = (phi1 * (ds2_dt + ds0_dx * ds2_dx - 1j * u * comps.s2_scalar(x, t))).max_abs()
    r3 = (phi2 * (ds3_dt + ds0_dx * ds3_dx + 1j * u * comps.s3_scalar(x, t))).max_abs()
    r1 = abs(ds1_dt + ds0_dx * ds1_dx)
    n = phi1.num_generators
    psi_psibar = generator(0, n) * generator(1, n)
    r4 = ((phi1 * ds2_dx) * (phi2 * ds3_dx) * psi_psibar).max_abs()
    return np.array([r0, r2, r3, r1, r4])
