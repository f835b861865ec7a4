"""First passage back into Z_p^n: re-entry density g, the Volterra solve for the
first-passage density f, the Laplace transform G(s) and the recurrence test.

Conventions: the walk starts uniformly on Z_p^n.  ``g(t)`` is the density of
jumps from outside Z_p^n into it, ``f(t)`` the density of the first such jump
after leaving.  They satisfy f(t) = g(t) - int_0^t g(t - s) f(s) ds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .heatkernel import ModelError
from .landscape import classify_type, shell_series, tail_bound
from .symbol import SymbolTable, symbol_envelope_constants

RECURRENT, TRANSIENT, UNDETERMINED = "Recurrent", "Transient", "Undetermined"


class _ReentryWeights:
    """Coefficients turning the shell terms of Z into g(t) in one matrix product.

    g(t) = kappa (1 - p**-n) sum_{i >= 1} u(i) Z(p**i, t) with u(i) = p**(ni)/w(p**i);
    inserting the shell form of Z and swapping the sums gives
    g(t) = kappa (1 - p**-n) sum_{g >= 1} U(g) s_g(t),  U(g) = sum_{i=1}^{g} u(i).
    """

    def __init__(self, model):
        self.model = model
        k0 = 1 - model.lower_level
        lev = model.levels[k0:]
        with np.errstate(under="ignore"):
            u = np.exp(model.landscape.log_u(lev))
        self.k0 = k0
        self.U = np.cumsum(u)
        self.coef = model.kappa * (1 - model.q) * self.U

    def __call__(self, t):
        s = self.model._shell_terms(t)[..., self.k0:]
        return np.flip(s * self.coef, -1).sum(-1)


def g_density(model, t):
    """Density of re-entry into Z_p^n at time t (uniform start on Z_p^n)."""
    _check_fpt(model)
    t = np.asarray(t, float)
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    out = _ReentryWeights(model)(t)
    return float(out) if np.ndim(out) == 0 else out


def exit_rate(model):
    """C = kappa * integral_{||y|| > 1} dy / w: the rate of leaving Z_p^n from inside."""
    s, _ = shell_series(model.landscape, 1)
    return model.kappa * (1 - model.q) * s


def survival_derivative(model, t):
    """S'(t) from the frequency-side series."""
    return model.time_derivative(1, 0, t)


def _check_fpt(model):
    if model.kappa > model.kappa_max * (1 + 1e-12):
        raise ModelError(f"kappa = {model.kappa} violates kappa <= {model.kappa_max!r}")


@dataclass
class FptGrid:
    h: float
    t: np.ndarray
    g: np.ndarray
    f: np.ndarray | None = None
    cumulative: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def K(self):
        return self.t.size

    @classmethod
    def from_model(cls, model, h=1e-2, K=1000):
        t = h * np.arange(K)
        g = np.zeros(K)
        if K > 1:
            g[1:] = g_density(model, t[1:])
        return cls(h, t, g, diagnostics={"lower_level": model.lower_level,
                                         "upper_level": model.upper_level})

    @classmethod
    def from_function(cls, fn, h, K):
        t = h * np.arange(K)
        return cls(h, t, np.asarray(fn(t), float) * np.ones(K))

    def rows(self):
        for k in range(self.K):
            yield (self.t[k], self.g[k], self.f[k], self.cumulative[k])


class VolterraInstability(RuntimeError):
    pass


def volterra_solve(grid, clamp_limit=1e-3):
    """Trapezoidal product rule for f = g - g * f on the grid (second order).

    The convolution runs over [0, t] since both f and g vanish for negative
    times.  Negative values of f are clamped to 0; the clamped mass is stored
    in ``diagnostics['clamped_mass']`` and an error is raised if it exceeds
    ``clamp_limit``.
    """
    g = np.asarray(grid.g, float)
    h = grid.h
    K = g.size
    f = np.zeros(K)
    if K == 0:
        grid.f, grid.cumulative = f, f.copy()
        return grid
    f[0] = g[0]
    clamped = 0.0
    denom = 1.0 + 0.5 * h * g[0]
    grev = g[::-1]
    for k in range(1, K):
        # sum_{j=1}^{k-1} g[k-j] f[j]
        inner = np.dot(grev[K - k:K - 1], f[1:k]) if k > 1 else 0.0
        val = (g[k] - h * (0.5 * g[k] * f[0] + inner)) / denom
        if val < 0:
            clamped += -val * h
            val = 0.0
        f[k] = val
    cum = np.concatenate(([0.0], np.cumsum(0.5 * h * (f[1:] + f[:-1]))))
    grid.f, grid.cumulative = f, cum
    grid.diagnostics["clamped_mass"] = clamped
    if clamped > clamp_limit:
        raise VolterraInstability(f"clamped mass {clamped:.3g} exceeds {clamp_limit:g}")
    return grid


@dataclass
class LaplaceResult:
    value: float
    tail_bound: float
    converged: bool
    partial_sums: list
    truncation: tuple

    @property
    def divergent(self):
        return not self.converged


def _laplace_terms(table, kappa, s, J):
    """Terms T_j, j = 1..J, of G(s) = kappa**2 (1-p**-n) sum_j U(j) N_j / ((s + kappa a_j)(s + kappa a_{j-1})).

    N_j = 1/w(p**j) - 1/w(p**(j+1)) = p**(-nj) (a(j-1) - a(j)), U(j) = sum_{i<=j} u(i).
    """
    L = table.landscape
    p, n = L.p, L.n
    j = np.arange(1, J + 1)
    with np.errstate(under="ignore"):
        u = np.exp(L.log_u(j))
    U = np.cumsum(u)
    a_j = table.aw(j)
    a_prev = table.aw(j - 1)
    Nj = np.power(float(p), -j * 1.0 * n) * table.gap(j - 1)
    q = float(p) ** (-n)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        return kappa ** 2 * (1 - q) * U * Nj / ((s + kappa * a_j) * (s + kappa * a_prev)), U


def laplace_G(model, s, truncation=None, tol=1e-12):
    """Laplace transform of g at s (real or complex, Re s >= 0).

    The double series over (i, j) is evaluated in the swapped order, inner
    index j outermost, with the first ``I`` values of i kept.  For s = 0 the
    result is certified only when the envelope of the terms decays
    geometrically; otherwise ``converged`` is False and ``partial_sums`` hold
    the growth data.
    """
    L = model.landscape
    cert = L.certificate
    p, n = float(L.p), L.n
    kappa = model.kappa
    C2, _ = symbol_envelope_constants(L)
    Ustar = shell_series(L, 1)[0]
    if truncation is None:
        I = J = 400
    else:
        I, J = truncation
    table = SymbolTable(L, 0, J + 1)
    if s == 0:
        # stop before the symbol underflows; the envelope bound covers the rest
        small = np.nonzero(table.aw(np.arange(0, J + 1)) * kappa < 1e-100)[0]
        if small.size:
            J = I = int(max(small[0] - 1, 1)) if truncation is None else J
    terms, U = _laplace_terms(table, kappa, s, J)
    if I < J:
        # keep only i <= I in the inner sums
        with np.errstate(under="ignore"):
            u = np.exp(L.log_u(np.arange(1, J + 1)))
        capped = np.minimum(np.arange(1, J + 1), I)
        Ucap = np.cumsum(u)[capped - 1]
        terms = terms * (Ucap / U)
    value = complex(np.flip(terms).sum()) if np.iscomplexobj(terms) else math.fsum(np.flip(terms))
    partial = [float(np.real(x)) for x in np.cumsum(terms)[np.unique(np.geomspace(1, J, 12).astype(int)) - 1]]
    q = p ** (-n)
    # outer tail: the dropped i > I contribute at most (tail of u) * (sum over j of the rest)
    outer = tail_bound(L, I)
    inner_tail = float("inf")
    s_re = float(np.real(s))
    if s_re > 0:
        inner_tail = kappa ** 2 * (1 - q) * Ustar / (s_re ** 2 * float(L.eval_w(J + 1)))
        rest = kappa ** 2 * (1 - q) / s_re ** 2 * (1.0 / float(L.eval_w(1)))
        outer_err = outer * rest if I < J else 0.0
        bound = inner_tail + outer_err
        return LaplaceResult(value, bound, bound <= tol * max(1.0, abs(value)), partial, (I, J))
    # s = 0: envelope U* C0^-1 p**(-j a1) / (C2 p**(-j(a2-n)))**2 with ratio rho
    if cert.alpha3 == 0:
        rho = p ** (2 * cert.alpha2 - 2 * n - cert.alpha1)
        if rho < 1:
            K = Ustar / (cert.C0 * C2 ** 2)
            bound = K * rho ** (J + 1) / (1 - rho)
            if I < J:
                bound += outer * K / (1 - rho)
            return LaplaceResult(value, bound, bound <= 1e-8 * max(1.0, abs(value)), partial, (I, J))
    return LaplaceResult(float("inf"), float("inf"), False, partial, (I, J))


@dataclass
class Classification:
    tag: str
    landscape_type: str
    alpha: float
    n: int
    return_probability: float
    diagnostics: dict

    def as_dict(self):
        return {"type": self.landscape_type, "alpha": self.alpha, "n": self.n, "tag": self.tag,
                "return_probability": self.return_probability, "diagnostics": self.diagnostics}


def classify_recurrence(model, truncation=None):
    """Decide recurrence of Z_p^n from the growth exponent of w; series only corroborate.

    For w of polynomial type with exponent alpha (w ~ r**alpha): alpha >= 2n is
    recurrent, n < alpha < 2n transient.  Exponential type stays undetermined.
    """
    L = model.landscape
    lt = classify_type(L)
    res = laplace_G(model, 0.0, truncation)
    diag = {"G0": res.value if res.converged else "DIVERGENT",
            "G0_tail_bound": res.tail_bound, "partial_sums": res.partial_sums,
            "truncation": list(res.truncation)}
    if not lt.is_polynomial:
        rp = 1.0 - 1.0 / (1.0 + res.value) if res.converged else None
        return Classification(UNDETERMINED, lt.tag, lt.alpha1, L.n, rp, diag)
    alpha = lt.alpha1
    if alpha >= 2 * L.n:
        return Classification(RECURRENT, lt.tag, alpha, L.n, 1.0, diag)
    rp = 1.0 - 1.0 / (1.0 + res.value) if res.converged else None
    return Classification(TRANSIENT, lt.tag, alpha, L.n, rp, diag)


def return_probability(model):
    return classify_recurrence(model).return_probability
