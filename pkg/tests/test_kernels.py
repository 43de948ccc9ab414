import math
import os
import subprocess
import sys

import numpy as np
import pytest

from grasshj import _pykernels as py
from grasshj import expr as ex
from grasshj._backend import BACKEND, compiled_kernels

ck = compiled_kernels()
needs_compiled = pytest.mark.skipif(ck is None, reason="compiled kernels not built")


def _prog(text):
    return ex.compiled(ex.parse(text))


def test_backend_name():
    assert BACKEND in ("cython", "python")


def test_env_forces_pure_python():
    code = "import grasshj; print(grasshj.BACKEND)"
    env = dict(os.environ, GRASSHJ_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert out.stdout.strip() == "python"


@needs_compiled
@pytest.mark.parametrize("text", ["exp(tanh(q))/sqrt(q)", "q^-3 + sin(q)*cos(q)", "-(q-1)^5",
                                  "sqrt(q - 10)", "1/(q - 0.4)"])
def test_eval_parity(text):
    p = _prog(text)
    for x in (0.4, 0.9, 2.5):
        a, b = py.eval_program(p.code, p.args, x), ck.eval_program(p.code, p.args, x)
        assert (a == b) or (math.isnan(a) and math.isnan(b)) or a == pytest.approx(b, rel=1e-15)


@needs_compiled
@pytest.mark.parametrize("hp", [1, -1, -3])
def test_quadrature_parity(hp):
    v, w = _prog("0.5*q^2 - 0.3"), _prog("cos(q) + 2")
    args = (w.code, w.args, v.code, v.args, 0.8, hp, -0.2, 0.9, 1e-11, 8e-9, 2000)
    a, b = py.gk_integrate(*args), ck.gk_integrate(*args)
    assert a[2] == b[2] == 0
    assert a[0] == pytest.approx(b[0], abs=1e-13)


@needs_compiled
def test_guard_parity():
    v, w = _prog("q"), _prog("1")
    a = py.gk_integrate(w.code, w.args, v.code, v.args, 1.0, -1, 0.0, 1.2, 1e-10, 1e-8, 500)
    b = ck.gk_integrate(w.code, w.args, v.code, v.args, 1.0, -1, 0.0, 1.2, 1e-10, 1e-8, 500)
    assert a[2] == b[2] == 1
    assert a[3] == pytest.approx(b[3])
    assert py.guard_scan(v.code, v.args, 1.0, 0, 1.2, 64, 1e-8) == \
        ck.guard_scan(v.code, v.args, 1.0, 0, 1.2, 64, 1e-8)


@needs_compiled
def test_dopri_parity():
    progs = []
    V = ex.parse("0.5*q^2 - 0.3")
    P = ex.mul(V, ex.diff(V))
    for e in (P, ex.diff(P), ex.diff(V), ex.diff(ex.diff(V))):
        p = ex.compiled(e)
        progs += [p.code, p.args]
    y0 = [0.1, 0.8, 0.2, -0.4, 0.0]
    a = py.dopri5(tuple(progs), y0, 2.0, 0.1, 1e-10, 1e-10, 100000)
    b = ck.dopri5(tuple(progs), y0, 2.0, 0.1, 1e-10, 1e-10, 100000)
    assert a[1] == b[1] == 0 and a[2] == b[2]
    np.testing.assert_allclose(np.array(a[0]), np.array(b[0]), atol=1e-13)


@needs_compiled
def test_product_parity():
    rng = np.random.default_rng(1)
    for n in (2, 4, 6):
        x = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
        y = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
        np.testing.assert_allclose(py.ga_mul(list(x), list(y), n), ck.ga_mul(list(x), list(y), n),
                                   atol=1e-13)
    for a in range(16):
        for b in range(16):
            if not a & b:
                assert py.reorder_sign(a, b) == ck.reorder_sign(a, b)
