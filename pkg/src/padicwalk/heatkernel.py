"""Heat kernel Z(x, t) of the operator W and the quantities built from it.

Everything here is radial, so a function of x is a function of the shell
level b with ||x|| = p**b (``None`` stands for x = 0).  Each integral is
evaluated as a shell sum; no quadrature over Q_p^n is ever performed.

Two series for Z are used and cross-checked.  With e(g) = exp(-kappa t a(g)):

* shell form:  Z(p**b) = sum_{g >= b} p**(-n g) [e(g) - e(g-1)]
* ball form:   Z(p**b) = p**(-n b) (1 - p**-n) sum_{j >= 0} p**(-n j) [e(b+j) - e(b-1)]

Each bracket is evaluated as e(hi) * (-expm1(-kappa t (a(lo) - a(hi)))) with
the symbol difference built from positive gaps, so no cancellation occurs
even where Z is tiny.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .landscape import kappa_admissible_max, shell_series
from .symbol import SymbolTable, ToleranceError, aw_sandwich, symbol_envelope_constants

_LOG_NEGLIGIBLE = 800.0   # terms below exp(-800) relative to O(1) values are dropped


class ModelError(ValueError):
    """Invalid model parameters (kappa, time range, landscape not admissible)."""


def _as_time(t):
    t = np.asarray(t, float)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    return t


class HeatKernelModel:
    """(landscape, kappa) together with a symbol table covering every level needed.

    ``t_min`` fixes how far towards the origin the table reaches: below level
    ``lower_level`` every summand is smaller than exp(-800) for t >= t_min,
    which is certified from the lower envelope of the symbol.
    """

    def __init__(self, landscape, kappa, eps=1e-12, fpt=False, t_min=1e-10, level_max=192):
        if not landscape.admits_heat_kernel:
            raise ModelError("the landscape's upper growth exponent must exceed n for a heat kernel")
        if not kappa > 0:
            raise ModelError("kappa must be positive")
        self.kappa_max = kappa_admissible_max(landscape)
        if fpt and kappa > self.kappa_max * (1 + 1e-12):
            raise ModelError(
                f"kappa = {kappa} violates the admissibility bound kappa <= {self.kappa_max!r}")
        self.landscape = landscape
        self.kappa = float(kappa)
        self.eps = eps
        self.fpt = fpt
        self.t_min = float(t_min)
        self.p, self.n = landscape.p, landscape.n
        self.q = float(self.p) ** (-self.n)
        self.lnp = math.log(self.p)
        self.lower_level = self._find_lower_level()
        self.level_max = int(level_max)
        self.upper_level = self.level_max + 64
        self.table = SymbolTable(landscape, self.lower_level - 1, self.upper_level, eps)
        self.levels = np.arange(self.lower_level, self.upper_level + 1)
        self.a = self.table.aw(self.levels)
        self.a_below = self.table.aw(self.lower_level - 1)
        # d_prev[k] = a(g - 1) - a(g) for g = levels[k]
        self.d_prev = self.table.gaps[:-1]

    def _find_lower_level(self):
        c = self.landscape.certificate
        lnp = self.lnp
        g = 0
        while True:
            lower, _ = aw_sandwich(self.landscape, g)
            if self.kappa * self.t_min * lower - (-g) * self.n * lnp > _LOG_NEGLIGIBLE + 50:
                # growth of the envelope below g outpaces the volume factor from here on
                if c.alpha2 > self.n:
                    return g
            g -= 1
            if g < -100000:
                raise ModelError("cannot certify the small-radius truncation")

    # -- internal helpers -------------------------------------------------

    def _check_level(self, b):
        if b is not None and b > self.level_max:
            raise ValueError(f"radius level {b} beyond level_max={self.level_max}")

    def _log_decay(self, t):
        """-kappa t a(g) on the window, shape t.shape + (W,)."""
        t = np.asarray(t, float)[..., None]
        return -self.kappa * t * self.a

    def _shell_terms(self, t):
        """s(g) = p**(-n g) [e(g) - e(g-1)] for every window level.

        All terms are >= 0 when the symbol is decreasing; a landscape with a
        non-monotone symbol gives negative brackets, kept with their sign.
        """
        t = np.asarray(t, float)[..., None]
        br = -np.expm1(-self.kappa * t * self.d_prev)
        with np.errstate(under="ignore", divide="ignore", over="ignore"):
            log_t = -self.n * self.lnp * self.levels - self.kappa * t * self.a + np.log(np.abs(br))
            return np.sign(br) * np.exp(log_t)

    def z_profile(self, t):
        """Z at every window level via reverse cumulative sums of the shell form.

        Returns an array of shape ``t.shape + (W,)`` aligned with ``self.levels``;
        levels below the window share the value at ``lower_level``.
        """
        s = self._shell_terms(t)
        return np.flip(np.cumsum(np.flip(s, -1), -1), -1)

    # -- public evaluations ----------------------------------------------

    def z_density(self, beta, t, form="ball"):
        """Z(x, t) at ||x|| = p**beta (``beta=None`` for x = 0), t > 0."""
        t = _as_time(t)
        if np.any(t < self.t_min):
            raise ValueError(f"t below t_min={self.t_min}")
        self._check_level(beta)
        if beta is None or beta <= self.lower_level or form == "shell":
            start = self.lower_level if beta is None else max(beta, self.lower_level)
            s = self._shell_terms(t)[..., start - self.lower_level:]
            out = np.flip(s, -1).sum(-1)
        elif form == "ball":
            out = self._z_ball_form(beta, t)
        else:
            raise ValueError("form must be 'ball' or 'shell'")
        return float(out) if np.ndim(out) == 0 else out

    def _z_ball_form(self, beta, t):
        k0 = beta - self.lower_level
        a_hi = self.a[k0:]
        gaps = np.concatenate(([self.d_prev[k0]], self.table.gaps[k0 + 1:-1]))
        cum = np.cumsum(gaps)                       # a(beta-1) - a(beta+j)
        j = np.arange(a_hi.size)
        tt = np.asarray(t, float)[..., None]
        br = -np.expm1(-self.kappa * tt * cum)
        with np.errstate(under="ignore", divide="ignore", over="ignore"):
            log_t = -self.n * self.lnp * j - self.kappa * tt * a_hi + np.log(np.abs(br))
            terms = np.sign(br) * np.exp(log_t)
        return float(self.p) ** (-beta * self.n) * (1 - self.q) * np.flip(terms, -1).sum(-1)

    def z_density_checked(self, beta, t, tol=1e-10):
        """Both series for Z; raises :class:`ToleranceError` if they differ by more than ``tol`` relative."""
        a = self.z_density(beta, t, "ball")
        b = self.z_density(beta, t, "shell")
        scale = np.maximum(np.abs(a), 1e-300)
        if np.any(np.abs(a - b) > tol * scale):
            raise ToleranceError("ball and shell forms of Z disagree", (a, b))
        return a

    def radius_sf(self, m, t):
        """P(||X_t|| > p**m), computed without forming 1 - CDF."""
        t = _as_time(t)
        self._check_level(m)
        k0 = max(m, self.lower_level) - self.lower_level
        a = self.a[k0:]
        g = self.levels[k0:]
        tt = np.asarray(t, float)[..., None]
        with np.errstate(under="ignore"):
            w = np.power(float(self.p), -(g - m) * self.n * 1.0) * (1 - self.q)
            terms = w * -np.expm1(-self.kappa * tt * a)
        out = np.flip(terms, -1).sum(-1)
        if m < self.lower_level:
            out = 1.0 - self.radius_cdf(m, t)
        return float(out) if np.ndim(out) == 0 else out

    def radius_cdf(self, m, t, form="dual"):
        """P(||X_t|| <= p**m).

        ``dual``: p**(mn) times the integral of exp(-kappa t A_w) over the
        frequency ball of radius p**-m.  ``direct``: shell volumes times Z.
        ``both``: evaluate both and raise on disagreement beyond 1e-9.
        """
        t = _as_time(t)
        self._check_level(m)
        if form == "both":
            d = self.radius_cdf(m, t, "dual")
            e = self.radius_cdf(m, t, "direct")
            if np.any(np.abs(np.asarray(d) - e) > 1e-9):
                raise ToleranceError("dual and direct radius CDFs disagree", (d, e))
            return d
        if form == "direct":
            out = self._cdf_direct(m, t)
        elif form == "dual":
            out = self._cdf_dual(m, t)
        else:
            raise ValueError("form must be 'dual', 'direct' or 'both'")
        out = np.where(t == 0, 1.0, out)   # X_0 = 0
        return float(out) if np.ndim(out) == 0 else out

    def _cdf_dual(self, m, t):
        start = max(m, self.lower_level)
        k0 = start - self.lower_level
        tt = np.asarray(t, float)[..., None]
        g = self.levels[k0:]
        with np.errstate(under="ignore", over="ignore"):
            log_t = (m - g) * self.n * self.lnp - self.kappa * tt * self.a[k0:]
            terms = np.exp(log_t) * (1 - self.q)
        tail = float(self.p) ** (-(self.upper_level - m + 1) * self.n)
        return np.flip(terms, -1).sum(-1) + tail

    def _cdf_direct(self, m, t):
        tt = np.asarray(t, float)
        safe = np.where(tt == 0, 1.0, tt)
        z = self.z_profile(safe)
        if m < self.lower_level:
            return float(self.p) ** (m * self.n) * z[..., 0]
        k = m - self.lower_level
        vol = np.power(float(self.p), self.levels[1:k + 1] * 1.0 * self.n) * (1 - self.q)
        inner = float(self.p) ** (self.lower_level * self.n) * z[..., 0]
        return inner + (vol * z[..., 1:k + 1]).sum(-1)

    def phi(self, beta, t):
        """(Z_t * Omega)(x) at ||x|| = p**beta: the probability of landing in x + Z_p^n."""
        t = _as_time(t)
        inside = beta is None or beta <= 0
        if inside:
            out = np.where(t == 0, 1.0, self._cdf_dual(0, np.where(t == 0, 1.0, t)))
        else:
            safe = np.where(t == 0, 1.0, t)
            out = np.where(t == 0, 0.0, self.z_density(beta, safe))
        return float(out) if np.ndim(out) == 0 else out

    def survival_S(self, t):
        """Probability of being in Z_p^n at time t after a uniform start on Z_p^n."""
        return self.phi(0, t)

    def time_derivative(self, order, beta, t):
        """d^m/dt^m phi(x, t) from the frequency-side series."""
        if order < 1:
            raise ValueError("order must be >= 1")
        t = _as_time(t)
        k0 = -self.lower_level
        a = self.a[k0:]
        g = self.levels[k0:]
        tt = np.asarray(t, float)[..., None]
        h = np.power(a, order) * np.exp(-self.kappa * tt * a)
        if beta is None or beta <= 0:
            w = (1 - self.q) * np.power(float(self.p), -g * 1.0 * self.n)
            out = (w * h).sum(-1)
        else:
            hb = h[..., beta:]
            j = np.arange(hb.shape[-1])
            prev = h[..., beta - 1:beta]
            w = (1 - self.q) * np.power(float(self.p), -j * 1.0 * self.n)
            out = float(self.p) ** (-beta * self.n) * np.flip(w * (hb - prev), -1).sum(-1)
        out = (-self.kappa) ** order * out
        return float(out) if np.ndim(out) == 0 else out

    def decay_constant(self):
        """C with Z(x, t) <= C t ||x||**-alpha1 for ||x|| >= p: kappa C3 p**(alpha1 - n)."""
        _, C3 = symbol_envelope_constants(self.landscape)
        a1 = self.landscape.certificate.alpha1
        return self.kappa * C3 * float(self.p) ** (a1 - self.n)

    def escape_rate_bound(self, e):
        """C' with P(||X_t|| > p**e) <= C' t for all t."""
        k0 = e - self.lower_level
        j = np.arange(self.a.size - k0)
        return self.kappa * (1 - self.q) * math.fsum(
            np.power(float(self.p), -j * 1.0 * self.n) * self.a[k0:])


# ---------------------------------------------------------------------------
# radial step functions


@dataclass(frozen=True)
class RadialStepFunction:
    """f = v_0 on the ball of level m_0, v_k on m_{k-1} < level <= m_k, 0 beyond m_K."""

    levels: tuple
    values: tuple

    def __post_init__(self):
        if len(self.levels) != len(self.values) or not self.levels:
            raise ValueError("need matching, nonempty levels and values")
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ValueError("levels must be strictly increasing")

    @classmethod
    def ball_indicator(cls, m, value=1.0):
        return cls((int(m),), (float(value),))

    @classmethod
    def zero(cls):
        return cls((0,), (0.0,))

    def __call__(self, level):
        """Value at shell level ``level`` (``None`` is the origin)."""
        if level is None or level <= self.levels[0]:
            return self.values[0]
        for m, v in zip(self.levels, self.values):
            if level <= m:
                return v
        return 0.0

    def ball_coefficients(self):
        """(m_k, c_k) with f = sum c_k 1_{B_{m_k}}."""
        v = list(self.values) + [0.0]
        return [(m, v[k] - v[k + 1]) for k, m in enumerate(self.levels)]

    def ball_integral(self, b, p, n):
        """Integral of f over the ball {||y|| <= p**b}."""
        return sum(c * float(p) ** (min(b, m) * n) for m, c in self.ball_coefficients())

    def scaled(self, s):
        return RadialStepFunction(self.levels, tuple(s * v for v in self.values))


def ball_evolution(model, m, b, t):
    """(Z_t * 1_{B_m})(x) at ||x|| = p**b."""
    t = _as_time(t)
    if b is None or b <= m:
        return model.radius_cdf(m, t)
    z = model.z_density(b, np.where(t == 0, max(model.t_min, 1.0), t))
    out = np.where(t == 0, 0.0, float(model.p) ** (m * model.n) * z)
    return float(out) if np.ndim(out) == 0 else out


def evolve(model, f, b, t):
    """(Z_t * f)(x) for a radial step function f."""
    out = 0.0
    for m, c in f.ball_coefficients():
        if c != 0.0:
            out = out + c * np.asarray(ball_evolution(model, m, b, t))
    return float(out) if np.ndim(out) == 0 else out


def apply_W_step(model_or_landscape, kappa, f, b, route="direct", table=None):
    """(W f)(x) at ||x|| = p**b for a radial step function f."""
    L = getattr(model_or_landscape, "landscape", model_or_landscape)
    p, n = L.p, L.n
    q = float(p) ** (-n)
    if route == "direct":
        fb = f(b)
        top = f.levels[-1]
        first = f.levels[0] if (b is None or b <= f.levels[0]) else b
        acc = []
        for m in range(first + 1, top + 1):
            dv = f(m) - fb
            if dv != 0.0:
                acc.append((1 - q) * dv * math.exp(float(L.log_u(m))))
        s, _ = shell_series(L, max(first, top) + 1)
        acc.append(-fb * (1 - q) * s)
        out = math.fsum(acc)
        if b is not None and b > f.levels[0]:
            inner = f.ball_integral(b - 1, p, n) - fb * float(p) ** ((b - 1) * n)
            out += inner / float(L.eval_w(b))
        return kappa * out
    if route != "spectral":
        raise ValueError("route must be 'direct' or 'spectral'")
    if table is None:
        table = getattr(model_or_landscape, "table", None)
    lo = min(f.levels[0], b if b is not None else f.levels[0]) - 1
    hi = max(f.levels[-1], b if b is not None else 0) + 200
    if table is None or table.gamma_min > lo or table.gamma_max < hi:
        table = SymbolTable(L, lo, hi)
    from .padic import shell_character_integral
    total = []
    for m, c in f.ball_coefficients():
        if c == 0.0:
            continue
        g = np.arange(m, hi + 1)
        total.append(c * float(p) ** (m * n) * math.fsum(table.aw(g) * shell_character_integral(g, b, p, n)))
    return -kappa * math.fsum(total)


def radial_convolve(f, g, lo, p, n):
    """Convolution of two radial functions sampled on levels lo, lo+1, ... .

    Both arrays hold values on consecutive levels starting at ``lo``; the
    values at ``lo`` are taken to extend to every smaller level and both
    functions are taken to vanish above the last level.  Returns the
    convolution on the same levels.
    """
    f = np.asarray(f, float)
    g = np.asarray(g, float)
    q = float(p) ** (-n)
    lev = lo + np.arange(f.size)
    vol = np.power(float(p), lev * 1.0 * n) * (1 - q)
    vol_in = vol.copy()
    vol_in[0] = float(p) ** (lo * n)        # lumps every level <= lo into the ball
    # sums over levels strictly below b
    Gin = np.concatenate(([0.0], np.cumsum(vol_in * g)[:-1]))
    Fin = np.concatenate(([0.0], np.cumsum(vol_in * f)[:-1]))
    fg = vol * f * g
    above = np.concatenate((np.flip(np.cumsum(np.flip(fg)))[1:], [0.0]))
    same = np.power(float(p), lev * 1.0 * n) * (1 - 2 * q) * f
    out = f * Gin + above + g * (Fin + same)
    # at the lowest level the "ball below" also carries the constant value
    out[0] = f[0] * g[0] * float(p) ** (lo * n) + above[0]
    return out


@dataclass
class CauchySolution:
    t_grid: np.ndarray
    levels: list
    values: np.ndarray               # shape (len(t_grid), len(levels))
    duhamel_error: np.ndarray        # Richardson estimate per time, max over levels
    warned: bool = False


def cauchy_solve(model, u0, forcing, t_grid, levels, tol=1e-6):
    """u(x, t) = (Z_t * u0)(x) + int_0^t (Z_{t-s} * g(s))(x) ds on radial step data.

    ``forcing`` is ``None``, a single :class:`RadialStepFunction` (constant in
    time), or a callable s -> RadialStepFunction.  The Duhamel integral uses
    the trapezoid rule on ``t_grid`` (uniform, starting at 0); a Richardson
    estimate from the half-resolution rule is reported and a warning raised
    when it exceeds ``tol``.
    """
    t_grid = np.asarray(t_grid, float)
    if t_grid.ndim != 1 or t_grid[0] != 0.0:
        raise ValueError("t_grid must be one-dimensional and start at 0")
    h = np.diff(t_grid)
    if h.size and not np.allclose(h, h[0], rtol=1e-9, atol=0):
        raise ValueError("t_grid must be uniform")
    K = t_grid.size
    values = np.empty((K, len(levels)))
    err = np.zeros(K)
    for i, b in enumerate(levels):
        values[:, i] = [evolve(model, u0, b, t) for t in t_grid]
    if forcing is not None:
        g_at = forcing if callable(forcing) and not isinstance(forcing, RadialStepFunction) \
            else (lambda s, _f=forcing: _f)
        gs = [g_at(s) for s in t_grid]
        step = h[0] if h.size else 0.0
        for i, b in enumerate(levels):
            # E[k, j] = (Z_{t_k - t_j} * g(t_j))(b)
            E = np.zeros((K, K))
            for j in range(K):
                lags = t_grid[j:] - t_grid[j]
                E[j:, j] = evolve(model, gs[j], b, lags)
            for k in range(1, K):
                row = E[k, :k + 1]
                trap = step * (row.sum() - 0.5 * (row[0] + row[-1]))
                values[k, i] += trap
                if k % 2 == 0:
                    coarse = 2 * step * (row[::2].sum() - 0.5 * (row[0] + row[-1]))
                    err[k] = max(err[k], abs(trap - coarse) / 3.0)
    warned = bool(np.any(err > tol))
    if warned:
        warnings.warn(f"Duhamel quadrature error estimate {err.max():.3g} exceeds {tol:g}; refine t_grid")
    return CauchySolution(t_grid, list(levels), values, err, warned)


def ball_transition(model, x_level, ball_level, t):
    """P(t, x, B) for the ball B of level ``ball_level`` and ||x|| = p**x_level."""
    f = RadialStepFunction.ball_indicator(ball_level)
    return evolve(model, f, x_level, t)


def ball_transition_bound(model, x_level, ball_level, u, n_samples=32):
    """Bound C u ||x||**-alpha1 vol(B) on sup_{t <= u} P(t, x, B), verified on sampled t.

    Returns (bound, max sampled P).  Raises :class:`ToleranceError` with the
    offending (t, x) if a sample exceeds the bound.
    """
    if x_level is None or x_level <= ball_level:
        raise ValueError("x must lie outside the ball")
    a1 = model.landscape.certificate.alpha1
    vol = float(model.p) ** (ball_level * model.n)
    bound = model.decay_constant() * u * float(model.p) ** (-x_level * a1) * vol
    ts = np.geomspace(max(model.t_min, u * 1e-6), u, n_samples)
    P = np.asarray(ball_transition(model, x_level, ball_level, ts))
    if np.any(P > bound * (1 + 1e-12)):
        k = int(np.argmax(P - bound))
        raise ToleranceError(f"transition bound fails at t={ts[k]!r}, x level {x_level}", (ts[k], x_level))
    return bound, float(P.max())
