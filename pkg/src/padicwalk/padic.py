"""Finite-precision p-adic numbers and the measure-theoretic helpers on Q_p^n.

A :class:`PadicScalar` stores ``x = p**order * sum(digits[j] * p**j)`` with a
fixed number ``L`` of digits (the working precision).  The stored value is
treated as an exact rational; addition is exact unless the result needs more
than ``L`` digits, in which case the excess digits (the ones of smallest norm)
are dropped and the ``overflow`` flag is raised on the result.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

DEFAULT_PRECISION = 48


def _is_prime(p):
    if p < 2:
        return False
    for d in range(2, math.isqrt(p) + 1):
        if p % d == 0:
            return False
    return True


def check_prime(p):
    """Raise ``ValueError`` unless ``p`` is an odd prime."""
    if not isinstance(p, (int, np.integer)) or not _is_prime(int(p)):
        raise ValueError(f"p must be a prime, got {p!r}")
    if p == 2:
        raise ValueError("p = 2 is not supported")
    return int(p)


def _valuation(k, p):
    v = 0
    while k % p == 0:
        k //= p
        v += 1
    return v


@dataclass(frozen=True)
class PadicScalar:
    """An element of Q_p truncated to ``precision`` digits.

    ``unit`` is the integer ``sum(digits[j] * p**j)``; it is never divisible
    by ``p``.  ``order is None`` is the explicit ZERO marker.
    """

    p: int
    order: int | None
    unit: int
    precision: int = DEFAULT_PRECISION
    overflow: bool = field(default=False, compare=False)

    def __post_init__(self):
        if self.order is None:
            if self.unit != 0:
                raise ValueError("ZERO must have unit 0")
            return
        if not 0 < self.unit < self.p ** self.precision or self.unit % self.p == 0:
            raise ValueError("unit must be a p-adic unit below p**precision")

    @classmethod
    def zero(cls, p, precision=DEFAULT_PRECISION):
        return cls(check_prime(p), None, 0, precision)

    @classmethod
    def from_rational(cls, q, p, precision=DEFAULT_PRECISION):
        """p-adic expansion of a rational number, truncated to ``precision`` digits."""
        p = check_prime(p)
        q = Fraction(q)
        if q == 0:
            return cls.zero(p, precision)
        num, den = q.numerator, q.denominator
        vn, vd = _valuation(num, p), _valuation(den, p)
        num //= p ** vn
        den //= p ** vd
        mod = p ** precision
        unit = num * pow(den, -1, mod) % mod
        return cls(p, vn - vd, unit, precision)

    @classmethod
    def from_digits(cls, digits, order, p, precision=None):
        """Build ``p**order * sum(digits[j] p**j)``; leading zeros are normalized away."""
        p = check_prime(p)
        precision = len(digits) if precision is None else precision
        if len(digits) > precision:
            raise ValueError("more digits than the working precision")
        if any(not 0 <= d < p for d in digits):
            raise ValueError("digits must lie in [0, p-1]")
        value = sum(int(d) * p ** j for j, d in enumerate(digits))
        return _normalize(p, order, value, precision, False)

    @property
    def is_zero(self):
        return self.order is None

    @property
    def digits(self):
        """Digit array of length ``precision``, leading digit first."""
        out = np.zeros(self.precision, dtype=np.int64)
        k = self.unit
        for j in range(self.precision):
            if k == 0:
                break
            k, out[j] = divmod(k, self.p)
        return out

    @property
    def norm(self):
        """|x|_p as an exact rational."""
        if self.is_zero:
            return Fraction(0)
        return Fraction(self.p) ** (-self.order)

    def to_fraction(self):
        if self.is_zero:
            return Fraction(0)
        return Fraction(self.p) ** self.order * self.unit

    def scale(self, k):
        """Multiply by ``p**k``."""
        if self.is_zero:
            return self
        return PadicScalar(self.p, self.order + k, self.unit, self.precision, self.overflow)

    def __add__(self, other):
        return add_scalars(self, other)

    def __repr__(self):
        if self.is_zero:
            return f"PadicScalar(0, p={self.p})"
        d = "".join(str(x) for x in self.digits[:8])
        return f"PadicScalar(p={self.p}, order={self.order}, digits={d}...)"


def _normalize(p, order, value, precision, overflow):
    mod = p ** precision
    kept = value % mod
    if kept != value:
        overflow = True
    if kept == 0:
        return PadicScalar(p, None, 0, precision, overflow)
    v = _valuation(kept, p)
    return PadicScalar(p, order + v, kept // p ** v, precision, overflow)


def add_scalars(x, y):
    if x.p != y.p or x.precision != y.precision:
        raise ValueError("operands must share p and precision")
    if x.is_zero:
        return PadicScalar(y.p, y.order, y.unit, y.precision, x.overflow or y.overflow)
    if y.is_zero:
        return PadicScalar(x.p, x.order, x.unit, x.precision, x.overflow or y.overflow)
    p = x.p
    lo = min(x.order, y.order)
    total = x.unit * p ** (x.order - lo) + y.unit * p ** (y.order - lo)
    return _normalize(p, lo, total, x.precision, x.overflow or y.overflow)


def frac_part(x):
    """Fractional part {x}_p as an exact rational in [0, 1)."""
    if x.is_zero or x.order >= 0:
        return Fraction(0)
    k = -x.order
    return Fraction(x.unit % x.p ** k, x.p ** k)


def character(x):
    """Additive character exp(2 pi i {x}_p).

    The phase is reduced modulo 1 exactly before the single complex exponential.
    """
    f = frac_part(x)
    if f == 0:
        return complex(1.0, 0.0)
    return cmath.exp(2j * math.pi * (f.numerator / f.denominator))


@dataclass(frozen=True)
class PadicPoint:
    """A point of Q_p^n as a tuple of scalars sharing p and precision."""

    coords: tuple

    def __post_init__(self):
        if not self.coords:
            raise ValueError("need at least one coordinate")
        p, L = self.coords[0].p, self.coords[0].precision
        if any(c.p != p or c.precision != L for c in self.coords):
            raise ValueError("coordinates must share p and precision")

    @classmethod
    def zero(cls, p, n, precision=DEFAULT_PRECISION):
        return cls(tuple(PadicScalar.zero(p, precision) for _ in range(n)))

    @classmethod
    def from_rationals(cls, values, p, precision=DEFAULT_PRECISION):
        return cls(tuple(PadicScalar.from_rational(v, p, precision) for v in values))

    @property
    def p(self):
        return self.coords[0].p

    @property
    def n(self):
        return len(self.coords)

    @property
    def precision(self):
        return self.coords[0].precision

    @property
    def overflow(self):
        return any(c.overflow for c in self.coords)

    @property
    def is_zero(self):
        return all(c.is_zero for c in self.coords)

    @property
    def order(self):
        """min over coordinate orders; ``None`` for the origin."""
        orders = [c.order for c in self.coords if not c.is_zero]
        return min(orders) if orders else None

    @property
    def level(self):
        """Shell level m with ||x||_p = p**m; ``None`` for the origin."""
        o = self.order
        return None if o is None else -o

    @property
    def norm(self):
        return max(c.norm for c in self.coords)

    def scale(self, k):
        return PadicPoint(tuple(c.scale(k) for c in self.coords))

    def __add__(self, other):
        return add(self, other)


def add(x, y):
    """Coordinate-wise p-adic addition with carries, truncated to the working precision."""
    if x.n != y.n:
        raise ValueError("dimension mismatch")
    return PadicPoint(tuple(add_scalars(a, b) for a, b in zip(x.coords, y.coords)))


def in_ball(x, radius_level):
    """Membership of ``x`` in the ball {||y|| <= p**radius_level}."""
    lev = x.level
    return lev is None or lev <= radius_level


def shell_volume(m, p, n):
    """Haar volume p**(m n) (1 - p**-n) of the sphere {||y||_p = p**m}."""
    m = np.asarray(m, dtype=float)
    out = np.power(float(p), m * n) * (1.0 - float(p) ** (-n))
    return float(out) if out.ndim == 0 else out


def ball_volume(m, p, n):
    m = np.asarray(m, dtype=float)
    out = np.power(float(p), m * n)
    return float(out) if out.ndim == 0 else out


def character_shell_integral(j, p, n):
    """Integral of Psi(-p**j y . xi0) over the unit sphere U, for ||xi0|| = 1."""
    if j >= 0:
        return 1.0 - float(p) ** (-n)
    if j == -1:
        return -float(p) ** (-n)
    return 0.0


def shell_character_integral(gamma, beta, p, n):
    """Integral of Psi(x . xi) over {||xi|| = p**-gamma} at a point with ||x|| = p**beta.

    ``beta=None`` denotes x = 0.  Vectorized over ``gamma``.
    """
    gamma = np.asarray(gamma)
    q = float(p) ** (-n)
    vol = np.power(float(p), -gamma * float(n)) * (1.0 - q)
    if beta is None:
        return vol
    out = np.where(gamma >= beta, vol, 0.0)
    return np.where(gamma == beta - 1, -float(p) ** (-beta * n), out)


def sample_uniform_on_shell(m, p, n, rng, precision=DEFAULT_PRECISION):
    """Haar-uniform sample on the sphere {||y||_p = p**m}.

    The leading digit vector is uniform over the p**n - 1 nonzero vectors of
    F_p^n; every other digit is uniform on {0, ..., p-1}.
    """
    p = check_prime(p)
    if precision < 1:
        raise ValueError("precision must be >= 1")
    lead = int(rng.integers(1, p ** n))
    coords = []
    for i in range(n):
        d0 = (lead // p ** i) % p
        rest = rng.integers(0, p, size=precision - 1)
        digits = [d0] + [int(d) for d in rest]
        coords.append(PadicScalar.from_digits(digits, -m, p, precision))
    return PadicPoint(tuple(coords))


def leading_digit_pattern(x, m):
    """Index in [1, p**n) of the digit vector at position p**-m (inverse of the sampler's encoding)."""
    p = x.p
    code = 0
    for i, c in enumerate(x.coords):
        if c.is_zero:
            continue
        shift = -m - c.order
        if shift == 0:
            code += (c.unit % p) * p ** i
    return code
