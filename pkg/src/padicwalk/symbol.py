"""The symbol A_w of the nonlocal operator W and its application to ball indicators.

Notation used throughout: ``a(gamma) = A_w(p**-gamma)`` is the symbol at a
frequency of norm ``p**-gamma``.  With ``u(j) = p**(n j) / w(p**j)`` the
shell decomposition of the defining integral gives

    a(gamma) = u(gamma + 1) + (1 - p**-n) * sum_{j >= gamma + 2} u(j).

A variant with ``p**(n gamma) / w(p**(gamma+1))`` as its second term, one
power of p**n short, circulates as a closed form; it disagrees with the
integral (for p=3, n=1, w=r**3 at gamma=0 it gives 5/108 instead of 13/108)
and is kept only as :func:`aw_shifted_variant` so the gap can be shown.
"""
from __future__ import annotations

import math

import numpy as np

from .landscape import shell_series, tail_bound, tail_index
from .padic import PadicPoint, character_shell_integral, shell_character_integral

DEFAULT_EPS_TAIL = 1e-12


class ToleranceError(RuntimeError):
    """Two independent evaluation routes disagree beyond the allowed tolerance."""

    def __init__(self, message, values=None):
        super().__init__(message)
        self.values = values


class SymbolTable:
    """Cached values a(gamma) on an integer window with certified truncation.

    Besides the values, the table stores the one-step gaps
    ``d(gamma) = a(gamma) - a(gamma + 1) = p**(n(gamma+1)) (1/w(p**(gamma+1)) - 1/w(p**(gamma+2)))``
    computed without subtraction of nearly equal numbers, which the heat
    kernel series use to stay accurate far from the origin.
    """

    def __init__(self, landscape, gamma_min, gamma_max, eps_tail=DEFAULT_EPS_TAIL):
        if gamma_max < gamma_min:
            raise ValueError("empty window")
        self.landscape = landscape
        self.p, self.n = landscape.p, landscape.n
        self.gamma_min, self.gamma_max = int(gamma_min), int(gamma_max)
        self.eps_tail = eps_tail
        q = float(self.p) ** (-self.n)

        with np.errstate(over="ignore", under="ignore", invalid="ignore"):
            u_top = math.exp(float(landscape.log_u(self.gamma_max + 1)))
            scale = min(1.0, max(u_top, 1e-300))
            J = tail_index(landscape, eps_tail * scale, start=self.gamma_max + 2)
            j = np.arange(self.gamma_min + 1, J + 1)
            log_u = landscape.log_u(j)
            u = np.exp(log_u)
            tails = np.cumsum(u[::-1])[::-1]       # tails[k] = sum_{i >= j[k]} u(i)
            tails = np.append(tails, 0.0)
            k = np.arange(self.window_size)        # gamma = gamma_min + k
            self.values = u[k] + (1.0 - q) * tails[k + 1]
            lw = landscape.log_w(j)
            gaps = u[k] * -np.expm1(lw[k] - lw[k + 1])
        self.gaps = np.where(np.isnan(gaps), 0.0, gaps)
        self.truncation_index = J
        self.errors = np.full(self.window_size, (1.0 - q) * tail_bound(landscape, J))

    @property
    def window_size(self):
        return self.gamma_max - self.gamma_min + 1

    @property
    def gammas(self):
        return np.arange(self.gamma_min, self.gamma_max + 1)

    def _index(self, gamma):
        g = np.asarray(gamma)
        if np.any(g < self.gamma_min) or np.any(g > self.gamma_max):
            raise ValueError(f"gamma outside table window [{self.gamma_min}, {self.gamma_max}]")
        return g - self.gamma_min

    def aw(self, gamma):
        out = self.values[self._index(gamma)]
        return float(out) if np.ndim(out) == 0 else out

    def gap(self, gamma):
        out = self.gaps[self._index(gamma)]
        return float(out) if np.ndim(out) == 0 else out

    def error(self, gamma):
        out = self.errors[self._index(gamma)]
        return float(out) if np.ndim(out) == 0 else out

    def is_monotone(self):
        """a is non-increasing in gamma (holds whenever w is non-decreasing)."""
        return bool(np.all(self.gaps >= 0))


def aw(table_or_landscape, gamma, eps_tail=DEFAULT_EPS_TAIL):
    """A_w(p**-gamma).  Accepts a prepared table or a landscape."""
    if isinstance(table_or_landscape, SymbolTable):
        return table_or_landscape.aw(gamma)
    g = np.atleast_1d(gamma)
    table = SymbolTable(table_or_landscape, int(g.min()), int(g.max()), eps_tail)
    return table.aw(gamma)


def aw_shifted_variant(landscape, gamma):
    """Variant with second term p**(n gamma)/w(p**(gamma+1)); not the symbol, kept for comparison."""
    p, n = landscape.p, landscape.n
    s, _ = shell_series(landscape, gamma + 2)
    second = math.exp(n * gamma * math.log(p) - float(landscape.log_w(gamma + 1)))
    return (1.0 - float(p) ** (-n)) * s + second


def aw_oracle(landscape, gamma, J_max=None):
    """A_w(p**-gamma) summed shell by shell straight from the defining integral.

    For each shell ||y|| = p**m the integral of 1 - Psi(-y . xi) equals
    ``p**(mn) * [(1 - p**-n) - I(gamma - m)]`` where ``I`` is the unit-sphere
    character integral; this route never uses the closed form of the symbol.
    """
    p, n = landscape.p, landscape.n
    lnp = math.log(p)
    if J_max is None:
        floor = max(math.exp(float(landscape.log_u(gamma + 1))), 1e-300)
        J_max = tail_index(landscape, 1e-16 * min(1.0, floor), start=gamma + 2)
    terms = []
    for m in range(gamma - 3, J_max + 1):
        bracket = (1.0 - float(p) ** (-n)) - character_shell_integral(gamma - m, p, n)
        if bracket == 0.0:
            continue
        lw = float(landscape.log_w(m))
        if math.isinf(lw):
            continue
        terms.append(bracket * math.exp(m * n * lnp - lw))
    return math.fsum(terms)


def symbol_envelope_constants(landscape):
    """(C2, C3) with C2 ||xi||**(a2-n) exp(-a3 p/||xi||) <= A_w <= C3 ||xi||**(a1-n)."""
    c = landscape.certificate
    p, n = float(landscape.p), landscape.n
    r = p ** (n - c.alpha1)
    C3 = (r / c.C0) * (1.0 + (1.0 - p ** (-n)) * r / (1.0 - r))
    C2 = 1.0 / (c.C1 * p ** c.alpha2)
    return C2, C3


def aw_sandwich(landscape, gamma):
    """Lower and upper envelopes of A_w at ||xi|| = p**-gamma."""
    c = landscape.certificate
    C2, C3 = symbol_envelope_constants(landscape)
    g = np.asarray(gamma, float)
    p = float(landscape.p)
    with np.errstate(over="ignore", under="ignore"):
        norm = np.power(p, -g)
        lower = C2 * np.power(norm, c.alpha2 - landscape.n) * np.exp(-c.alpha3 * p / norm)
        upper = C3 * np.power(norm, c.alpha1 - landscape.n)
    if lower.ndim == 0:
        return float(lower), float(upper)
    return lower, upper


def _level_of(x):
    if isinstance(x, PadicPoint):
        return x.level
    return None if x is None else int(x)


def apply_W(landscape, kappa, ball_radius, x, route="direct", table=None):
    """(W 1_B)(x) for the ball B = {||y|| <= p**ball_radius}.

    ``x`` is a :class:`PadicPoint`, a shell level, or ``None`` for the origin.
    The direct route sums [phi(x-y) - phi(x)] / w shell by shell; the spectral
    route sums -kappa A_w times the Fourier transform of the indicator.
    """
    p, n = landscape.p, landscape.n
    r = int(ball_radius)
    b = _level_of(x)
    q = float(p) ** (-n)
    if route == "direct":
        if b is None or b <= r:
            s, _ = shell_series(landscape, r + 1)
            return -kappa * (1.0 - q) * s
        return kappa * float(p) ** (r * n) / float(landscape.eval_w(b))
    if route != "spectral":
        raise ValueError("route must be 'direct' or 'spectral'")
    lo = r if b is None else min(r, b - 1)
    hi = max(r, b if b is not None else r) + 200
    if table is None or table.gamma_min > lo or table.gamma_max < hi:
        table = SymbolTable(landscape, lo, hi)
    gam = np.arange(r, hi + 1)
    shells = shell_character_integral(gam, b, p, n)
    terms = table.aw(gam) * shells
    return -kappa * float(p) ** (r * n) * math.fsum(terms)


def apply_W_both(landscape, kappa, ball_radius, x, tol=1e-9):
    """Evaluate both routes and raise :class:`ToleranceError` if they disagree."""
    d = apply_W(landscape, kappa, ball_radius, x, "direct")
    s = apply_W(landscape, kappa, ball_radius, x, "spectral")
    if abs(d - s) > tol * max(1.0, abs(d)):
        raise ToleranceError(f"direct {d!r} vs spectral {s!r}", (d, s))
    return d


def power_law_constant(p, n, alpha):
    """Lambda with A_w(xi) = Lambda ||xi||**alpha for w = r**(alpha + n).

    Lambda = (1 - p**-n) p**(-2 alpha) / (1 - p**-alpha) + p**-alpha.  Since A_w
    scales like 1/c, ``PowerLaw(p, n, c=Lambda, alpha)`` has symbol exactly ||xi||**alpha.
    """
    p = float(p)
    return (1 - p ** (-n)) * p ** (-2 * alpha) / (1 - p ** (-alpha)) + p ** (-alpha)


def normalized_power_law(p, n, alpha):
    from .landscape import PowerLaw
    return PowerLaw(p, n, c=power_law_constant(p, n, alpha), alpha=alpha)
