"""Reference trajectories from the component Euler-Lagrange equations.

With q = x + q0 psibar0 psi0 and a unit-amplitude fermion the Lagrangian
equations split into

    x'' = -V V'(x),    q0'' = -(V V')'(x) q0 - U'(x),    theta' = U(x)

(see docs/derivation.md). The fermion amplitude is carried as the phase
theta, so unitarity is exact by construction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import expr as ex
from ._backend import NONFINITE, NOCONVERGE, OK, UNDERFLOW, kernels
from .errors import ExprDomainError, StiffnessError

ODE_TOL = 1e-10
MAX_STEPS = 5_000_000


@dataclass(frozen=True)
class OracleState:
    t: float
    x: float
    v: float
    q0: float
    w: float
    theta: float = 0.0

    def vector(self):
        return [self.x, self.v, self.q0, self.w, self.theta]


@dataclass
class Trajectory:
    """Uniformly spaced samples; columns mirror :class:`OracleState`."""

    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    q0: np.ndarray
    w: np.ndarray
    theta: np.ndarray
    nsteps: int = 0

    def __len__(self):
        return len(self.t)

    def __getitem__(self, k):
        return OracleState(float(self.t[k]), float(self.x[k]), float(self.v[k]),
                           float(self.q0[k]), float(self.w[k]), float(self.theta[k]))

    def energy(self, V):
        vx = np.array([ex.evaluate(V, x) for x in self.x])
        return 0.5 * self.v ** 2 + 0.5 * vx ** 2


def _force_exprs(V, U):
    p = ex.mul(V, ex.diff(V))
    return p, ex.diff(p), U, ex.diff(U)


def eom_rhs(s, V, U):
    """Time derivative of ``s`` as an OracleState (its ``t`` field is 1)."""
    p, dp, u, du = _force_exprs(V, U)
    x = s.x
    return OracleState(
        t=1.0, x=s.v, v=-ex.evaluate(p, x), q0=s.w,
        w=-ex.evaluate(dp, x) * s.q0 - ex.evaluate(du, x), theta=ex.evaluate(u, x))


def integrate(s0, V, U, T, out_stride, ode_tol=ODE_TOL, max_steps=MAX_STEPS):
    """Adaptive Dormand-Prince 5(4) integration with dense output every ``out_stride``.

    ``T`` is rounded to a whole number of strides.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    if not out_stride > 0:
        raise ValueError("out_stride must be positive")
    progs = []
    for e in _force_exprs(V, U):
        prog = ex.compiled(e)
        progs += [prog.code, prog.args]
    rows, status, nsteps = kernels.dopri5(tuple(progs), s0.vector(), float(T), float(out_stride),
                                          ode_tol, ode_tol, max_steps)
    if status == UNDERFLOW:
        t_fail = rows[-1][0] if rows else s0.t
        raise StiffnessError(f"step size underflow after t={t_fail}")
    if status == NONFINITE:
        raise ExprDomainError("equations of motion produced a non-finite value")
    if status == NOCONVERGE:
        raise StiffnessError(f"step budget of {max_steps} exhausted")
    assert status == OK
    data = np.array(rows, dtype=float)
    # samples are reported on the exact stride grid
    n = len(data)
    t = s0.t + out_stride * np.arange(n)
    return Trajectory(t=t, x=data[:, 1], v=data[:, 2], q0=data[:, 3], w=data[:, 4],
                      theta=data[:, 5], nsteps=nsteps)


def fermion_amplitude(traj, a0):
    """a(t_k) = a0 exp(-i theta(t_k))."""
    return complex(a0) * np.exp(-1j * np.asarray(traj.theta))


def relative_energy_drift(traj, V):
    e = traj.energy(V)
    scale = abs(e[0]) if e[0] != 0 else 1.0
    return float(np.max(np.abs(e - e[0])) / scale)


def initial_state(x0, v0, q00, qdot00):
    return OracleState(t=0.0, x=float(x0), v=float(v0), q0=float(q00), w=float(qdot00))


__all__ = ["OracleState", "Trajectory", "eom_rhs", "integrate", "fermion_amplitude",
           "relative_energy_drift", "initial_state", "ODE_TOL"]
