"""Finite-dimensional Grassmann algebra with paired generators.

Elements are stored densely: coefficient ``i`` multiplies the ordered
product of the generators whose bits are set in ``i``, taken in ascending
index order. With the default two generators, index 0 is psi0 and index 1
its conjugate partner psibar0, so ``psibar0*psi0 == -theta(0, 1)``.

Generators ``2k`` and ``2k+1`` are conjugate partners.
"""
from math import factorial

from ._backend import kernels
from .errors import DimensionError, ParityError, PairingError

DEFAULT_GENERATORS = 2


def _popcount(m):
    return bin(m).count("1")


def _sort_sign(seq):
    """Return (mask, sign) of the product of generators listed in ``seq``,
    or (None, 0) when a generator repeats."""
    mask = 0
    inversions = 0
    for pos, i in enumerate(seq):
        bit = 1 << i
        if mask & bit:
            return None, 0
        # generators already placed with a larger index must hop over this one
        inversions += _popcount(mask >> (i + 1))
        mask |= bit
    return mask, (-1 if inversions & 1 else 1)


def _indices(mask):
    return tuple(i for i in range(mask.bit_length()) if mask >> i & 1)


class GrassmannElement:
    """Element of the Grassmann algebra on ``num_generators`` generators.

    ``coeffs`` maps strictly ascending index tuples to complex coefficients;
    the empty tuple is the body.
    """

    __slots__ = ("_c", "num_generators")

    def __init__(self, coeffs=None, num_generators=DEFAULT_GENERATORS):
        if num_generators < 1:
            raise DimensionError("num_generators must be positive")
        self.num_generators = num_generators
        dense = [0j] * (1 << num_generators)
        for key, value in (coeffs or {}).items():
            key = tuple(key)
            if any(b <= a for a, b in zip(key, key[1:])):
                raise ValueError(f"subset key {key} is not strictly ascending")
            if key and (key[0] < 0 or key[-1] >= num_generators):
                raise DimensionError(f"generator index out of range in {key}")
            mask = 0
            for i in key:
                mask |= 1 << i
            dense[mask] += complex(value)
        self._c = tuple(dense)

    @classmethod
    def from_dense(cls, values, num_generators):
        obj = cls.__new__(cls)
        obj.num_generators = num_generators
        obj._c = tuple(complex(v) for v in values)
        if len(obj._c) != 1 << num_generators:
            raise DimensionError("dense coefficient vector has the wrong length")
        return obj

    # -- views ----------------------------------------------------------------

    @property
    def dense(self):
        return self._c

    @property
    def coeffs(self):
        return {_indices(m): c for m, c in enumerate(self._c) if c != 0}

    def coefficient(self, *indices):
        mask, sign = _sort_sign(indices)
        if mask is None:
            return 0j
        return sign * self._c[mask]

    @property
    def body(self):
        return self._c[0]

    @property
    def soul(self):
        return GrassmannElement.from_dense((0j,) + self._c[1:], self.num_generators)

    def parity(self):
        """0 for even, 1 for odd, None for mixed; zero counts as even."""
        even = any(c != 0 for m, c in enumerate(self._c) if not _popcount(m) & 1)
        odd = any(c != 0 for m, c in enumerate(self._c) if _popcount(m) & 1)
        if odd and even:
            return None
        return 1 if odd else 0

    def is_zero(self, tol=0.0):
        return all(abs(c) <= tol for c in self._c)

    def max_abs(self):
        return max(abs(c) for c in self._c)

    def allclose(self, other, tol=1e-12):
        other = _coerce(other, self.num_generators)
        _check_dims(self, other)
        return all(abs(a - b) <= tol for a, b in zip(self._c, other._c))

    # -- arithmetic -----------------------------------------------------------

    def __add__(self, other):
        other = _coerce(other, self.num_generators)
        if other is NotImplemented:
            return other
        _check_dims(self, other)
        return GrassmannElement.from_dense([a + b for a, b in zip(self._c, other._c)],
                                           self.num_generators)

    __radd__ = __add__

    def __neg__(self):
        return GrassmannElement.from_dense([-a for a in self._c], self.num_generators)

    def __sub__(self, other):
        other = _coerce(other, self.num_generators)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float, complex)):
            return GrassmannElement.from_dense([a * other for a in self._c], self.num_generators)
        if isinstance(other, GrassmannElement):
            return ga_mul(self, other)
        return NotImplemented

    def __rmul__(self, other):
        if isinstance(other, (int, float, complex)):
            return self * other
        return NotImplemented

    def __eq__(self, other):
        other = _coerce(other, self.num_generators)
        if other is NotImplemented:
            return other
        return self.num_generators == other.num_generators and self._c == other._c

    __hash__ = None

    def conj(self):
        return ga_conj(self)

    def __repr__(self):
        if self.is_zero():
            return "GrassmannElement(0)"
        terms = []
        for key, c in self.coeffs.items():
            mono = "*".join(f"t{i}" for i in key)
            terms.append(f"({c:g})" + (f"*{mono}" if mono else ""))
        return "GrassmannElement(" + " + ".join(terms) + ")"


def _coerce(x, n):
    if isinstance(x, GrassmannElement):
        return x
    if isinstance(x, (int, float, complex)):
        return scalar(x, n)
    return NotImplemented


def _check_dims(a, b):
    if a.num_generators != b.num_generators:
        raise DimensionError(
            f"algebras differ: {a.num_generators} vs {b.num_generators} generators")


def scalar(value, num_generators=DEFAULT_GENERATORS):
    dense = [0j] * (1 << num_generators)
    dense[0] = complex(value)
    return GrassmannElement.from_dense(dense, num_generators)


def generator(index, num_generators=DEFAULT_GENERATORS, coeff=1.0):
    if not 0 <= index < num_generators:
        raise DimensionError(f"generator {index} outside algebra of {num_generators}")
    dense = [0j] * (1 << num_generators)
    dense[1 << index] = complex(coeff)
    return GrassmannElement.from_dense(dense, num_generators)


def monomial(indices, num_generators=DEFAULT_GENERATORS, coeff=1.0):
    """Ordered product ``coeff * theta_i1 * theta_i2 * ...`` in the given order."""
    mask, sign = _sort_sign(indices)
    dense = [0j] * (1 << num_generators)
    if mask is not None:
        if mask >> num_generators:
            raise DimensionError("generator index out of range")
        dense[mask] = sign * complex(coeff)
    return GrassmannElement.from_dense(dense, num_generators)


def ga_mul(a, b):
    _check_dims(a, b)
    n = a.num_generators
    return GrassmannElement.from_dense(kernels.ga_mul(a.dense, b.dense, n), n)


def ga_conj(a):
    """Antilinear involution: conjugate coefficients, swap each generator with
    its partner, reverse the order of products."""
    n = a.num_generators
    if n % 2:
        raise PairingError(f"conjugation needs an even number of generators, got {n}")
    out = [0j] * (1 << n)
    for mask, c in enumerate(a.dense):
        if c == 0:
            continue
        partners = [i ^ 1 for i in reversed(_indices(mask))]
        new_mask, sign = _sort_sign(partners)
        out[new_mask] += sign * c.conjugate()
    return GrassmannElement.from_dense(out, n)


def ga_split(a):
    """Return ``(body, soul)`` with ``a == body + soul``."""
    return a.body, a.soul


def lift_taylor(q, derivatives):
    """Evaluate ``f(q)`` for an even ``q`` from derivative values at its body.

    ``derivatives[k]`` is the k-th derivative of ``f`` at ``body(q)``. The
    series terminates because the soul is nilpotent; with two generators only
    the first derivative contributes.
    """
    if any(c != 0 for m, c in enumerate(q.dense) if _popcount(m) & 1):
        raise ParityError("function lifting requires an even argument")
    soul = q.soul
    result = scalar(derivatives[0], q.num_generators)
    power = soul
    k = 1
    while not power.is_zero():
        if k >= len(derivatives):
            raise ValueError(f"need derivative of order {k} to lift over this soul")
        result = result + power * (derivatives[k] / factorial(k))
        power = ga_mul(power, soul)
        k += 1
    return result


def nilpotency_order(q):
    """Smallest k with soul(q)**k == 0."""
    soul = q.soul
    power = soul
    k = 1
    while not power.is_zero():
        power = ga_mul(power, soul)
        k += 1
    return k


def lift_function(f, q, consts=None):
    """Lift a real function given as an expression to an even Grassmann argument:
    f(b + s) = f(b) + f'(b) s + f''(b) s^2 / 2 + ... (exact; the series is finite)."""
    from .expr import diff, evaluate

    if any(c != 0 for m, c in enumerate(q.dense) if _popcount(m) & 1):
        raise ParityError("function lifting requires an even argument")
    body = q.body
    if abs(body.imag) > 1e-15 * max(1.0, abs(body.real)):
        raise ValueError("function lifting requires a real body")
    x = body.real
    order = nilpotency_order(q)
    derivs = []
    g = f
    for _ in range(order):
        derivs.append(evaluate(g, x, consts))
        g = diff(g)
    return lift_taylor(q, derivs)
