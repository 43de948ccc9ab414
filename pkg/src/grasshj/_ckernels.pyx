# cython: language_level=3
"""Compiled kernels; same interface and semantics as ``_pykernels``."""
from libc.math cimport sqrt, sin, cos, exp, tanh, fabs, pow, isfinite, NAN
from libc.stdlib cimport malloc, free

NAME = "cython"

# opcodes and status codes, mirrored from _pykernels
cdef enum:
    NUM, VAR, ADD, SUB, MUL, DIV, NEG, POWI, SIN, COS, EXP, TANH, SQRT

cdef enum:
    OK, GUARD, NONFINITE, NOCONVERGE, UNDERFLOW

cdef enum:
    STACK = 64

cdef double[8] XGK = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
]
cdef double[8] WGK = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
]
cdef double[4] WG = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
]


cdef inline double _powi(double b, long n) noexcept nogil:
    cdef double r = 1.0
    cdef long m = n if n >= 0 else -n
    while m:
        if m & 1:
            r *= b
        b *= b
        m >>= 1
    if n < 0:
        return 1.0 / r
    return r


cdef double _eval(const int[:] code, const double[:] args, double x) noexcept nogil:
    cdef double stack[STACK]
    cdef int sp = 0
    cdef Py_ssize_t i, n = code.shape[0]
    cdef int op
    cdef double b
    for i in range(n):
        op = code[i]
        if op == NUM:
            stack[sp] = args[i]
            sp += 1
        elif op == VAR:
            stack[sp] = x
            sp += 1
        elif op == ADD:
            sp -= 1
            stack[sp - 1] += stack[sp]
        elif op == SUB:
            sp -= 1
            stack[sp - 1] -= stack[sp]
        elif op == MUL:
            sp -= 1
            stack[sp - 1] *= stack[sp]
        elif op == DIV:
            sp -= 1
            b = stack[sp]
            if b == 0.0:
                return NAN
            stack[sp - 1] /= b
        elif op == NEG:
            stack[sp - 1] = -stack[sp - 1]
        elif op == POWI:
            if stack[sp - 1] == 0.0 and args[i] < 0:
                return NAN
            stack[sp - 1] = _powi(stack[sp - 1], <long>args[i])
        elif op == SIN:
            stack[sp - 1] = sin(stack[sp - 1])
        elif op == COS:
            stack[sp - 1] = cos(stack[sp - 1])
        elif op == EXP:
            stack[sp - 1] = exp(stack[sp - 1])
        elif op == TANH:
            stack[sp - 1] = tanh(stack[sp - 1])
        elif op == SQRT:
            if stack[sp - 1] < 0.0:
                return NAN
            stack[sp - 1] = sqrt(stack[sp - 1])
        else:
            return NAN
    if sp != 1 or not isfinite(stack[0]):
        return NAN
    return stack[0]


def eval_program(const int[:] code, const double[:] args, double x):
    return _eval(code, args, x)


def guard_scan(const int[:] vcode, const double[:] vargs, double two_e, double a, double b,
               int n, double guard):
    cdef int i
    cdef double x, v, g
    for i in range(n + 1):
        x = a + (b - a) * i / n if n > 0 else a
        v = _eval(vcode, vargs, x)
        g = two_e - v * v
        if not (g >= guard):
            return x
    return NAN


cdef int _integrand(const int[:] wcode, const double[:] wargs, const int[:] vcode,
                    const double[:] vargs, double two_e, int half_power, double guard,
                    double x, double *out) noexcept nogil:
    cdef double v = _eval(vcode, vargs, x)
    cdef double g = two_e - v * v
    if not (g >= guard):
        return GUARD
    cdef double w = _eval(wcode, wargs, x)
    if w != w:
        return NONFINITE
    out[0] = w * _powi(sqrt(g), half_power)
    return OK


cdef int _gk15(const int[:] wcode, const double[:] wargs, const int[:] vcode,
               const double[:] vargs, double two_e, int half_power, double guard,
               double a, double b, double *val, double *err, double *bad) noexcept nogil:
    cdef double center = 0.5 * (a + b)
    cdef double half = 0.5 * (b - a)
    cdef double kron = 0.0, gauss = 0.0, dx, f1, f2
    cdef int j, st
    st = _integrand(wcode, wargs, vcode, vargs, two_e, half_power, guard, center, &f1)
    if st != OK:
        bad[0] = center
        return st
    kron = WGK[7] * f1
    gauss = WG[3] * f1
    for j in range(7):
        dx = half * XGK[j]
        st = _integrand(wcode, wargs, vcode, vargs, two_e, half_power, guard, center - dx, &f1)
        if st != OK:
            bad[0] = center - dx
            return st
        st = _integrand(wcode, wargs, vcode, vargs, two_e, half_power, guard, center + dx, &f2)
        if st != OK:
            bad[0] = center + dx
            return st
        kron += WGK[j] * (f1 + f2)
        if j % 2 == 1:
            gauss += WG[j // 2] * (f1 + f2)
    val[0] = kron * half
    err[0] = fabs((kron - gauss) * half)
    return OK


def gk_integrate(const int[:] wcode, const double[:] wargs, const int[:] vcode,
                 const double[:] vargs, double two_e, int half_power, double a, double b,
                 double tol, double guard, int limit):
    cdef double sign = 1.0, tmp
    cdef double val, err, bad = NAN, v1, e1, v2, e2, lo, hi, mid, total_err, total, comp, y, t
    cdef int st, npan, k, i
    cdef double *plo
    cdef double *phi
    cdef double *pval
    cdef double *perr
    if a == b:
        return 0.0, 0.0, OK, NAN
    if b < a:
        tmp = a
        a = b
        b = tmp
        sign = -1.0
    st = _gk15(wcode, wargs, vcode, vargs, two_e, half_power, guard, a, b, &val, &err, &bad)
    if st != OK:
        return NAN, NAN, st, bad
    if limit < 1:
        limit = 1
    plo = <double *> malloc(limit * sizeof(double))
    phi = <double *> malloc(limit * sizeof(double))
    pval = <double *> malloc(limit * sizeof(double))
    perr = <double *> malloc(limit * sizeof(double))
    if plo == NULL or phi == NULL or pval == NULL or perr == NULL:
        free(plo); free(phi); free(pval); free(perr)
        raise MemoryError()
    try:
        plo[0] = a; phi[0] = b; pval[0] = val; perr[0] = err
        npan = 1
        total_err = err
        st = OK
        while total_err > tol:
            if npan >= limit:
                st = NOCONVERGE
                break
            k = 0
            for i in range(1, npan):
                if perr[i] > perr[k]:
                    k = i
            lo = plo[k]
            hi = phi[k]
            mid = 0.5 * (lo + hi)
            if not (lo < mid < hi):
                st = NOCONVERGE
                break
            st = _gk15(wcode, wargs, vcode, vargs, two_e, half_power, guard, lo, mid, &v1, &e1, &bad)
            if st != OK:
                return NAN, NAN, st, bad
            st = _gk15(wcode, wargs, vcode, vargs, two_e, half_power, guard, mid, hi, &v2, &e2, &bad)
            if st != OK:
                return NAN, NAN, st, bad
            phi[k] = mid; pval[k] = v1; perr[k] = e1
            plo[npan] = mid; phi[npan] = hi; pval[npan] = v2; perr[npan] = e2
            npan += 1
            total_err = 0.0
            for i in range(npan):
                total_err += perr[i]
        # Kahan-compensated sum of panel values
        total = 0.0
        comp = 0.0
        for i in range(npan):
            y = pval[i] - comp
            t = total + y
            comp = (t - total) - y
            total = t
        return sign * total, total_err, st, NAN
    finally:
        free(plo); free(phi); free(pval); free(perr)


# -- Dormand-Prince 5(4) ----------------------------------------------------

cdef double C_A21 = 1.0 / 5
cdef double C_A31 = 3.0 / 40, C_A32 = 9.0 / 40
cdef double C_A41 = 44.0 / 45, C_A42 = -56.0 / 15, C_A43 = 32.0 / 9
cdef double C_A51 = 19372.0 / 6561, C_A52 = -25360.0 / 2187, C_A53 = 64448.0 / 6561
cdef double C_A54 = -212.0 / 729
cdef double C_A61 = 9017.0 / 3168, C_A62 = -355.0 / 33, C_A63 = 46732.0 / 5247
cdef double C_A64 = 49.0 / 176, C_A65 = -5103.0 / 18656
cdef double C_B1 = 35.0 / 384, C_B3 = 500.0 / 1113, C_B4 = 125.0 / 192
cdef double C_B5 = -2187.0 / 6784, C_B6 = 11.0 / 84
cdef double C_E1 = 71.0 / 57600, C_E3 = -71.0 / 16695, C_E4 = 71.0 / 1920
cdef double C_E5 = -17253.0 / 339200, C_E6 = 22.0 / 525, C_E7 = -1.0 / 40
cdef double[6][4] DENSE = [
    [1.0, -8048581381.0 / 2820520608, 8663915743.0 / 2820520608, -12715105075.0 / 11282082432],
    [0.0, 131558114200.0 / 32700410799, -68118460800.0 / 10900136933, 87487479700.0 / 32700410799],
    [0.0, -1754552775.0 / 470086768, 14199869525.0 / 1410260304, -10690763975.0 / 1880347072],
    [0.0, 127303824393.0 / 49829197408, -318862633887.0 / 49829197408, 701980252875.0 / 199316789632],
    [0.0, -282668133.0 / 205662961, 2019193451.0 / 616988883, -1453857185.0 / 822651844],
    [0.0, 40617522.0 / 29380423, -110615467.0 / 29380423, 69997945.0 / 29380423],
]


cdef inline void _rhs(const int[:] pc, const double[:] pa, const int[:] dpc, const double[:] dpa,
                      const int[:] uc, const double[:] ua, const int[:] duc, const double[:] dua,
                      double *y, double *out) noexcept nogil:
    cdef double x = y[0]
    cdef double p = _eval(pc, pa, x)
    cdef double dp = _eval(dpc, dpa, x)
    cdef double u = _eval(uc, ua, x)
    cdef double du = _eval(duc, dua, x)
    out[0] = y[1]
    out[1] = -p
    out[2] = y[3]
    out[3] = -dp * y[2] - du
    out[4] = u


cdef inline bint _finite5(double *v) noexcept nogil:
    cdef int i
    for i in range(5):
        if not isfinite(v[i]):
            return False
    return True


def dopri5(progs, y0, double t_end, double stride, double rtol, double atol, long max_steps):
    cdef const int[:] pc = progs[0]
    cdef const double[:] pa = progs[1]
    cdef const int[:] dpc = progs[2]
    cdef const double[:] dpa = progs[3]
    cdef const int[:] uc = progs[4]
    cdef const double[:] ua = progs[5]
    cdef const int[:] duc = progs[6]
    cdef const double[:] dua = progs[7]
    cdef double y[5]
    cdef double yn[5]
    cdef double tmp[5]
    cdef double k1[5]
    cdef double k2[5]
    cdef double k3[5]
    cdef double k4[5]
    cdef double k5[5]
    cdef double k6[5]
    cdef double k7[5]
    cdef double *stages[6]
    cdef int i, j
    cdef long nout = <long>(t_end / stride + 0.5)
    cdef long next_out = 1, nsteps = 0
    cdef bint blocked = False
    cdef double t = 0.0, h, t_last, t_new, err, acc, e, sc, th, s, fac, t_out, scale0, scale1
    cdef double pw[4]
    for i in range(5):
        y[i] = y0[i]
    rows = [[0.0] + [y[i] for i in range(5)]]
    _rhs(pc, pa, dpc, dpa, uc, ua, duc, dua, y, k1)
    if not _finite5(k1):
        return rows, NONFINITE, 0
    scale0 = 1e-5
    scale1 = 1e-5
    for i in range(5):
        if fabs(y[i]) > scale0:
            scale0 = fabs(y[i])
        if fabs(k1[i]) > scale1:
            scale1 = fabs(k1[i])
    h = min(0.01 * scale0 / scale1, stride, t_end)
    t_last = nout * stride
    stages[0] = k1; stages[1] = k3; stages[2] = k4; stages[3] = k5; stages[4] = k6; stages[5] = k7
    while next_out <= nout:
        if nsteps >= max_steps:
            return rows, NOCONVERGE, nsteps
        if h < 1e-14 * max(1.0, fabs(t)):
            # shrinking against a domain boundary is not stiffness
            return rows, (NONFINITE if blocked else UNDERFLOW), nsteps
        if t + h > t_last:
            h = t_last - t
        for i in range(5):
            tmp[i] = y[i] + h * C_A21 * k1[i]
        _rhs(pc, pa, dpc, dpa, uc, ua, duc, dua, tmp, k2)
        for i in range(5):
            tmp[i] = y[i] + h * (C_A31 * k1[i] + C_A32 * k2[i])
        _rhs(pc, pa, dpc, dpa, uc, ua, duc, dua, tmp, k3)
        for i in range(5):
            tmp[i] = y[i] + h * (C_A41 * k1[i] + C_A42 * k2[i] + C_A43 * k3[i])
        _rhs(pc, pa, dpc, dpa, uc, ua, duc, dua, tmp, k4)
        for i in range(5):
            tmp[i] = y[i] + h * (C_A51 * k1[i] + C_A52 * k2[i] + C_A53 * k3[i] + C_A54 * k4[i])
        _rhs(pc, pa, dpc, dpa, uc, ua, duc, dua, tmp, k5)
        for i in range(5):
            tmp[i] = y[i] + h * (C_A61 * k1[i] + C_A62 * k2[i] + C_A63 * k3[i] + C_A64 * k4[i]
                                 + C_A65 * k5[i])
        _rhs(pc, pa, dpc, dpa, uc, ua, duc, dua, tmp, k6)
        for i in range(5):
            yn[i] = y[i] + h * (C_B1 * k1[i] + C_B3 * k3[i] + C_B4 * k4[i] + C_B5 * k5[i]
                                + C_B6 * k6[i])
        _rhs(pc, pa, dpc, dpa, uc, ua, duc, dua, yn, k7)
        nsteps += 1
        blocked = not (_finite5(yn) and _finite5(k7))
        if blocked:
            h *= 0.25
            continue
        acc = 0.0
        for i in range(5):
            e = h * (C_E1 * k1[i] + C_E3 * k3[i] + C_E4 * k4[i] + C_E5 * k5[i] + C_E6 * k6[i]
                     + C_E7 * k7[i])
            sc = atol + rtol * max(fabs(y[i]), fabs(yn[i]))
            acc += (e / sc) * (e / sc)
        err = sqrt(acc / 5)
        if err <= 1.0:
            t_new = t + h
            while next_out <= nout and next_out * stride <= t_new * (1 + 1e-14) + 1e-300:
                t_out = next_out * stride
                th = (t_out - t) / h
                pw[0] = th
                pw[1] = th * th
                pw[2] = pw[1] * th
                pw[3] = pw[2] * th
                row = [t_out]
                for i in range(5):
                    s = 0.0
                    for j in range(6):
                        s += stages[j][i] * (DENSE[j][0] * pw[0] + DENSE[j][1] * pw[1]
                                             + DENSE[j][2] * pw[2] + DENSE[j][3] * pw[3])
                    row.append(y[i] + h * s)
                rows.append(row)
                next_out += 1
            t = t_new
            for i in range(5):
                y[i] = yn[i]
                k1[i] = k7[i]
            if err == 0.0:
                fac = 10.0
            else:
                fac = min(10.0, 0.9 * pow(err, -0.2))
            h *= fac
        else:
            h *= max(0.2, 0.9 * pow(err, -0.2))
    return rows, OK, nsteps


# -- Grassmann products -----------------------------------------------------

cdef inline int _popcount(unsigned long v) noexcept nogil:
    cdef int c = 0
    while v:
        v &= v - 1
        c += 1
    return c


cdef inline int _reorder_sign(unsigned long a, unsigned long b) noexcept nogil:
    cdef int swaps = 0
    cdef unsigned long low
    while b:
        low = b & (~b + 1)
        swaps += _popcount(a & ~((low << 1) - 1))
        b ^= low
    return -1 if swaps & 1 else 1


def reorder_sign(unsigned long a, unsigned long b):
    return _reorder_sign(a, b)


def ga_mul(a, b, int n):
    cdef Py_ssize_t size = 1 << n
    cdef const double complex[:] av = _as_complex(a)
    cdef const double complex[:] bv = _as_complex(b)
    cdef Py_ssize_t i, j
    cdef double complex ai, bj
    out = [0j] * size
    cdef double complex *acc = <double complex *> malloc(size * sizeof(double complex))
    if acc == NULL:
        raise MemoryError()
    try:
        for i in range(size):
            acc[i] = 0
        for i in range(size):
            ai = av[i]
            if ai == 0:
                continue
            for j in range(size):
                bj = bv[j]
                if bj == 0 or (i & j):
                    continue
                acc[i | j] += _reorder_sign(i, j) * ai * bj
        for i in range(size):
            out[i] = acc[i]
        return out
    finally:
        free(acc)


cdef _as_complex(x):
    import numpy as np
    return np.ascontiguousarray(x, dtype=np.complex128)
