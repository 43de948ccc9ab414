"""Pure-Python implementation of the numerical kernels.

This module is the reference semantics for ``_ckernels.pyx``; both expose
the same functions with the same signatures and status codes, and
``grasshj._backend`` picks one at import time.

Expression programs are postfix bytecode produced by
``grasshj.expr.compile_expr``: ``code[i]`` is an opcode, ``args[i]`` its
float operand (literal value for NUM, exponent for POWI). Evaluation
failures (sqrt of a negative, division by zero, overflow) yield NaN; the
Python wrappers turn NaN into exceptions.
"""
import math

NAME = "python"

# opcodes, mirrored in _ckernels.pyx
NUM, VAR, ADD, SUB, MUL, DIV, NEG, POWI, SIN, COS, EXP, TANH, SQRT = range(13)

# status codes, mirrored in _ckernels.pyx
OK, GUARD, NONFINITE, NOCONVERGE, UNDERFLOW = range(5)

NAN = float("nan")

# Gauss-Kronrod 7/15 abscissae and weights (QUADPACK qk15)
XGK = (
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
)
WGK = (
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
)
WG = (
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
)


def eval_program(code, args, x):
    stack = []
    push = stack.append
    pop = stack.pop
    try:
        for op, val in zip(code, args):
            if op == NUM:
                push(val)
            elif op == VAR:
                push(x)
            elif op == ADD:
                b = pop()
                stack[-1] += b
            elif op == SUB:
                b = pop()
                stack[-1] -= b
            elif op == MUL:
                b = pop()
                stack[-1] *= b
            elif op == DIV:
                b = pop()
                stack[-1] /= b
            elif op == NEG:
                stack[-1] = -stack[-1]
            elif op == POWI:
                stack[-1] = stack[-1] ** int(val)
            elif op == SIN:
                stack[-1] = math.sin(stack[-1])
            elif op == COS:
                stack[-1] = math.cos(stack[-1])
            elif op == EXP:
                stack[-1] = math.exp(stack[-1])
            elif op == TANH:
                stack[-1] = math.tanh(stack[-1])
            elif op == SQRT:
                stack[-1] = math.sqrt(stack[-1])
            else:
                return NAN
    except (ValueError, ZeroDivisionError, OverflowError):
        return NAN
    r = stack[-1]
    if isinstance(r, complex) or not math.isfinite(r):
        return NAN
    return float(r)


def guard_scan(vcode, vargs, two_e, a, b, n, guard):
    """Return the first of ``n + 1`` equispaced points in [a, b] where
    ``two_e - V(x)**2 < guard`` (NaN evaluations count), or NaN if none."""
    for i in range(n + 1):
        x = a + (b - a) * i / n if n > 0 else a
        v = eval_program(vcode, vargs, x)
        g = two_e - v * v
        if not (g >= guard):
            return x
    return NAN


def _integrand(wcode, wargs, vcode, vargs, two_e, half_power, guard, x):
    v = eval_program(vcode, vargs, x)
    g = two_e - v * v
    if not (g >= guard):
        return NAN, GUARD
    w = eval_program(wcode, wargs, x)
    if w != w:
        return NAN, NONFINITE
    r = math.sqrt(g)
    return w * r ** half_power, OK


def _gk15(wcode, wargs, vcode, vargs, two_e, half_power, guard, a, b):
    center = 0.5 * (a + b)
    half = 0.5 * (b - a)
    kron = 0.0
    gauss = 0.0
    for j in range(8):
        dx = half * XGK[j]
        if j == 7:
            f, st = _integrand(wcode, wargs, vcode, vargs, two_e, half_power, guard, center)
            if st != OK:
                return 0.0, 0.0, st, center
            kron += WGK[7] * f
            gauss += WG[3] * f
            continue
        f1, st = _integrand(wcode, wargs, vcode, vargs, two_e, half_power, guard, center - dx)
        if st != OK:
            return 0.0, 0.0, st, center - dx
        f2, st = _integrand(wcode, wargs, vcode, vargs, two_e, half_power, guard, center + dx)
        if st != OK:
            return 0.0, 0.0, st, center + dx
        kron += WGK[j] * (f1 + f2)
        if j % 2 == 1:
            gauss += WG[j // 2] * (f1 + f2)
    return kron * half, abs((kron - gauss) * half), OK, NAN


def gk_integrate(wcode, wargs, vcode, vargs, two_e, half_power, a, b, tol, guard, limit):
    """Globally adaptive G7/K15 quadrature of ``w(x) * (two_e - V(x)**2)**(half_power/2)``.

    Returns ``(value, abserr, status, bad_x)``. Reversed limits give the
    negated integral.
    """
    if a == b:
        return 0.0, 0.0, OK, NAN
    sign = 1.0
    if b < a:
        a, b = b, a
        sign = -1.0
    val, err, st, bad = _gk15(wcode, wargs, vcode, vargs, two_e, half_power, guard, a, b)
    if st != OK:
        return NAN, NAN, st, bad
    panels = [(a, b, val, err)]
    total_err = err
    while total_err > tol:
        if len(panels) >= limit:
            total = sum(p[2] for p in panels)
            return sign * total, total_err, NOCONVERGE, NAN
        k = max(range(len(panels)), key=lambda i: panels[i][3])
        lo, hi, _, e = panels[k]
        mid = 0.5 * (lo + hi)
        if not (lo < mid < hi):
            total = sum(p[2] for p in panels)
            return sign * total, total_err, NOCONVERGE, NAN
        v1, e1, st, bad = _gk15(wcode, wargs, vcode, vargs, two_e, half_power, guard, lo, mid)
        if st != OK:
            return NAN, NAN, st, bad
        v2, e2, st, bad = _gk15(wcode, wargs, vcode, vargs, two_e, half_power, guard, mid, hi)
        if st != OK:
            return NAN, NAN, st, bad
        panels[k] = (lo, mid, v1, e1)
        panels.append((mid, hi, v2, e2))
        total_err = sum(p[3] for p in panels)
    return sign * math.fsum(p[2] for p in panels), total_err, OK, NAN


# -- Dormand-Prince 5(4) ----------------------------------------------------

C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = 71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40
# quartic dense-output coefficients, rows = stages 1, 3, 4, 5, 6, 7
DENSE = (
    (1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432),
    (0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799),
    (0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072),
    (0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632),
    (0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844),
    (0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423),
)


def _rhs(progs, y):
    pc, pa, dpc, dpa, uc, ua, duc, dua = progs
    x = y[0]
    p = eval_program(pc, pa, x)
    dp = eval_program(dpc, dpa, x)
    u = eval_program(uc, ua, x)
    du = eval_program(duc, dua, x)
    return [y[1], -p, y[3], -dp * y[2] - du, u]


def _finite(vec):
    for v in vec:
        if not math.isfinite(v):
            return False
    return True


def dopri5(progs, y0, t_end, stride, rtol, atol, max_steps):
    """Integrate the 5-component body/soul/phase system on [0, t_end].

    ``progs`` is the 8-tuple (code, args) for V*V', (V*V')', U, U'.
    Returns ``(rows, status, nsteps)`` where rows are ``[t, x, v, q0, w, theta]``
    sampled at ``k * stride`` for ``k = 0 .. round(t_end / stride)``.
    """
    n = 5
    nout = int(round(t_end / stride))
    rows = [[0.0] + list(y0)]
    y = list(y0)
    t = 0.0
    k1 = _rhs(progs, y)
    if not _finite(k1):
        return rows, NONFINITE, 0
    scale0 = max(max(abs(v) for v in y), 1e-5)
    scale1 = max(max(abs(v) for v in k1), 1e-5)
    h = min(0.01 * scale0 / scale1, stride, t_end)
    nsteps = 0
    next_out = 1
    blocked = False
    while next_out <= nout:
        if nsteps >= max_steps:
            return rows, NOCONVERGE, nsteps
        if h < 1e-14 * max(1.0, abs(t)):
            # shrinking against a domain boundary is not stiffness
            return rows, (NONFINITE if blocked else UNDERFLOW), nsteps
        t_last = nout * stride
        if t + h > t_last:
            h = t_last - t
        k2 = _rhs(progs, [y[i] + h * A21 * k1[i] for i in range(n)])
        k3 = _rhs(progs, [y[i] + h * (A31 * k1[i] + A32 * k2[i]) for i in range(n)])
        k4 = _rhs(progs, [y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]) for i in range(n)])
        k5 = _rhs(progs, [y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
                          for i in range(n)])
        k6 = _rhs(progs, [y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i]
                                      + A65 * k5[i]) for i in range(n)])
        y_new = [y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i])
                 for i in range(n)]
        k7 = _rhs(progs, y_new)
        nsteps += 1
        blocked = not (_finite(y_new) and _finite(k7))
        if blocked:
            h *= 0.25
            continue
        acc = 0.0
        for i in range(n):
            e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
            sc = atol + rtol * max(abs(y[i]), abs(y_new[i]))
            acc += (e / sc) ** 2
        err = math.sqrt(acc / n)
        if err <= 1.0:
            t_new = t + h
            stages = (k1, k3, k4, k5, k6, k7)
            while next_out <= nout and next_out * stride <= t_new * (1 + 1e-14) + 1e-300:
                t_out = next_out * stride
                theta = (t_out - t) / h
                powers = (theta, theta ** 2, theta ** 3, theta ** 4)
                row = [t_out]
                for i in range(n):
                    s = 0.0
                    for st, coeffs in zip(stages, DENSE):
                        s += st[i] * (coeffs[0] * powers[0] + coeffs[1] * powers[1]
                                      + coeffs[2] * powers[2] + coeffs[3] * powers[3])
                    row.append(y[i] + h * s)
                rows.append(row)
                next_out += 1
            t = t_new
            y = y_new
            k1 = k7
            fac = 10.0 if err == 0.0 else min(10.0, 0.9 * err ** -0.2)
            h *= fac
        else:
            h *= max(0.2, 0.9 * err ** -0.2)
    return rows, OK, nsteps


# -- Grassmann products on dense bitmask-indexed coefficient vectors ---------

def reorder_sign(a, b):
    """Sign of the permutation that sorts the concatenation of the ascending
    generator lists of masks ``a`` and ``b``: (-1)**#{(i, j): i in a, j in b, i > j}."""
    swaps = 0
    while b:
        low = b & -b
        swaps += bin(a & ~((low << 1) - 1)).count("1")
        b ^= low
    return -1 if swaps & 1 else 1


def ga_mul(a, b, n):
    size = 1 << n
    out = [0j] * size
    for i in range(size):
        ai = a[i]
        if ai == 0:
            continue
        for j in range(size):
            bj = b[j]
            if bj == 0 or i & j:
                continue
            out[i | j] += reorder_sign(i, j) * ai * bj
    return out
