"""One test per acceptance criterion; each records a PASS/FAIL line that is
printed in the terminal summary."""
import math
import random
import time
from dataclasses import replace

import numpy as np
import pytest

from grasshj import expr as ex
from grasshj import hj_solver as hj
from grasshj import oracle
from grasshj import phase_space as ps
from grasshj.errors import TurningPointError, WindowExceededError
from grasshj.grassmann import GrassmannElement, ga_conj, generator

FREE = dict(V=ex.ZERO, U=ex.ZERO, x0=0.0, v0=1.0, q00=0.2, qdot00=-0.5, t_max=5.0, stride=0.05)
SUSY = dict(V=ex.parse("q"), U=ex.ONE, x0=0.0, v0=1.0, q00=0.0, qdot00=0.3, t_max=1.2,
            stride=0.01)


def compare(sc, psi0=1.0):
    V, U = sc["V"], sc["U"]
    s0 = oracle.initial_state(sc["x0"], sc["v0"], sc["q00"], sc["qdot00"])
    ode = oracle.integrate(s0, V, U, sc["t_max"], sc["stride"])
    c = hj.constants_from_ics(V, U, sc["x0"], sc["v0"], sc["q00"], sc["qdot00"])
    tr = hj.hj_trajectory(V, U, c, sc["x0"], sc["q00"], psi0, ode.t)
    return c, ode, tr


def test_criterion_1_free_oracle_equivalence(criterion):
    start = time.perf_counter()
    _, ode, tr = compare(FREE)
    elapsed = time.perf_counter() - start
    dx = np.max(np.abs(tr.x - ode.x))
    dq = np.max(np.abs(tr.q0 - ode.q0))
    ok = dx <= 1e-8 and dq <= 1e-8 and elapsed < 1.0
    criterion(ok, f"[1] free: dx={dx:.2e} dq0={dq:.2e} time={elapsed:.3f}s")
    assert ok


def test_criterion_2_susy_oracle_equivalence(criterion):
    start = time.perf_counter()
    _, ode, tr = compare(SUSY)
    a_ode = oracle.fermion_amplitude(ode, 1.0)
    elapsed = time.perf_counter() - start
    dx = np.max(np.abs(tr.x - ode.x))
    dq = np.max(np.abs(tr.q0 - ode.q0))
    da = np.max(np.abs(tr.a - a_ode))
    ok = dx <= 1e-6 and dq <= 1e-5 and da <= 1e-6 and elapsed < 2.0
    criterion(ok, f"[2] susy: dx={dx:.2e} dq0={dq:.2e} da={da:.2e} time={elapsed:.3f}s")
    assert ok


@pytest.mark.parametrize("sc, xs", [(FREE, (0.0, 5.0)), (SUSY, (-0.9, 0.9))],
                         ids=["free", "susy"])
def test_criterion_3_hj_residuals(criterion, sc, xs):
    c = hj.constants_from_ics(sc["V"], sc["U"], sc["x0"], sc["v0"], sc["q00"], sc["qdot00"])
    comps = hj.action_components(sc["V"], sc["U"], c)
    worst = np.zeros(5)
    for x in np.linspace(*xs, 10):
        for t in np.linspace(0, sc["t_max"], 10):
            worst = np.maximum(worst, hj.hj_residual(sc["V"], sc["U"], comps, x, t))
    ok = worst.max() <= 1e-6
    criterion(ok, "[3] residuals " + " ".join(f"{r:.1e}" for r in worst))
    assert ok


def test_criterion_4_constraint_algebra(criterion):
    V = ex.parse("q^3/3 - q + sin(q)")
    U = ex.diff(V)
    points = ps.sample_points(32)
    delta = ps.constraint_matrix(ps.build_constraints(), points=points)
    f12 = delta[0, 1]
    lams = ps.solve_multipliers(V, U, points=points)
    h = ps.total_hamiltonian(V, U, lams)
    dev = ps.max_deviation(h, ps.reduced_hamiltonian(V, U), points)
    zero = all(lam.is_zero() for lam in ps.solve_multipliers(V, ex.ZERO, points=points))
    ok = abs(f12) > 0 and dev <= 1e-10 and zero
    criterion(ok, f"[4] {{F1,F2}}={f12} H deviation={dev:.1e} U=0 multipliers zero={zero}")
    assert ok


def test_criterion_5_grassmann_laws(criterion):
    rng = random.Random(2024)

    def rand(n, parity=None):
        dense = [0j] * (1 << n)
        for m in range(1 << n):
            if parity is None or bin(m).count("1") % 2 == parity:
                dense[m] = complex(rng.uniform(-1, 1), rng.uniform(-1, 1))
        return GrassmannElement.from_dense(dense, n)

    worst = 0.0
    for i in range(1000):
        n = (2, 4, 6)[i % 3]
        a, b, c = rand(n), rand(n), rand(n)
        o1, o2, e = rand(n, 1), rand(n, 1), rand(n, 0)
        checks = [
            (a * b) * c - a * (b * c),
            o1 * o2 + o2 * o1,
            o1 * e - e * o1,
            o1 * o1,
            ga_conj(ga_conj(a)) - a,
            ga_conj(a * b) - ga_conj(b) * ga_conj(a),
        ]
        worst = max(worst, max(x.max_abs() for x in checks))
    ok = worst <= 1e-12
    criterion(ok, f"[5] 1000 rounds, worst coefficient error {worst:.1e}")
    assert ok


def test_criterion_6_conservation(criterion):
    V = ex.parse("q")
    ode = oracle.integrate(oracle.initial_state(0, 1, 0, 0.3), V, ex.ONE, 20.0, 0.01)
    drift = oracle.relative_energy_drift(ode, V)
    a = oracle.fermion_amplitude(ode, (0.6 + 0.8j))
    bil = [(generator(1, coeff=ak.conjugate()) * generator(0, coeff=ak)).coefficient(1, 0)
           for ak in a]
    bil_dev = max(abs(b - bil[0]) for b in bil)
    _, _, tr = compare(SUSY, psi0=0.6 + 0.8j)
    mod_dev = np.max(np.abs(np.abs(tr.a) - 1.0))
    ok = drift <= 1e-8 and bil_dev <= 1e-12 and mod_dev <= 1e-10
    criterion(ok, f"[6] energy drift={drift:.1e} psibar psi dev={bil_dev:.1e} "
                  f"|a| dev={mod_dev:.1e}")
    assert ok


def test_criterion_7_jacobi_constancy(criterion):
    anharmonic = dict(V=ex.parse("0.5*q^2 - 0.3"), U=ex.parse("q"), x0=0.1, v0=0.8, q00=0.2,
                      qdot00=-0.4, t_max=1.0, stride=0.05)
    worst, smallest = 0.0, math.inf
    for sc in (FREE, SUSY, anharmonic):
        c, ode, tr = compare(sc, psi0=0.6 + 0.8j)
        # a reference point away from x0 makes both derivatives nonzero
        c = replace(c, x_ref=sc["x0"] - 0.1)
        comps = hj.action_components(sc["V"], sc["U"], c)
        ref = None
        for k in range(len(tr.t)):
            d = comps.jacobi_derivatives(tr.q(k), tr.psi(k), tr.psibar(k), tr.t[k])
            ref = ref or d
            worst = max(worst, (d["phi1"] - ref["phi1"]).max_abs(),
                        (d["A"] - ref["A"]).max_abs())
        smallest = min(smallest, ref["phi1"].max_abs(), ref["A"].max_abs())
    ok = worst <= 1e-7 and smallest > 1e-3
    criterion(ok, f"[7] max variation of dS/dphi1, dS/dA = {worst:.1e} "
                  f"(smallest magnitude {smallest:.2f})")
    assert ok


def test_criterion_8_round_trip_and_guards(criterion):
    V = ex.parse("q")
    body = hj.BodyBranch(V, 0.5, 0.0, 1)
    ts = np.linspace(0, 1.5, 151)
    xs = body.positions(ts)
    rt = max(abs(hj.time_of_flight(V, 0.5, 0.0, x) - t) for x, t in zip(xs, ts))
    guarded = []
    for probe in (lambda: hj.quad_sqrt(V, 0.5, 0, 1.2),
                  lambda: body.position(1.6),
                  lambda: body.positions([0.0, 2.0]),
                  lambda: hj.BodyBranch(V, 0.5, 1.0, 1),
                  lambda: hj.constants_from_ics(V, ex.ONE, 0, 0, 0, 0),
                  lambda: hj.hj_trajectory(V, ex.ONE, hj.constants_from_ics(V, ex.ONE, 0, 1, 0, 0),
                                           0.0, 0.0, 1.0, np.linspace(0, 2, 21))):
        try:
            probe()
            guarded.append(False)
        except (TurningPointError, WindowExceededError):
            guarded.append(True)
    ok = rt <= 1e-9 and all(guarded)
    criterion(ok, f"[8] round trip={rt:.1e} guarded={sum(guarded)}/{len(guarded)}")
    assert ok
