"""Radial energy landscapes w(||y||_p) and their growth certificates.

Every landscape is evaluated on shell levels: ``log_w(m)`` returns
``log w(p**m)``.  Working in log space keeps the extreme shells (very small or
very large radii) representable; ``eval_w`` exponentiates and returns ``inf``
on overflow, which the series treat as a vanishing summand.

A certificate ``(C0, C1, alpha1, alpha2, alpha3)`` asserts

    C0 r**alpha1 <= w(r) <= C1 r**alpha2 exp(alpha3 r)      for every r = p**m.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .padic import check_prime

VERIFY_WINDOW = (-40, 40)
_REL_SLACK = 1e-9


class LandscapeError(ValueError):
    """The landscape violates the growth sandwich or a structural requirement."""


@dataclass(frozen=True)
class Certificate:
    C0: float
    C1: float
    alpha1: float
    alpha2: float
    alpha3: float = 0.0
    window: tuple = VERIFY_WINDOW

    def lower_log(self, m, p):
        return math.log(self.C0) + self.alpha1 * np.asarray(m, float) * math.log(p)

    def upper_log(self, m, p):
        m = np.asarray(m, float)
        return math.log(self.C1) + self.alpha2 * m * math.log(p) + self.alpha3 * np.power(float(p), m)

    def as_dict(self):
        return {"C0": self.C0, "C1": self.C1, "alpha1": self.alpha1,
                "alpha2": self.alpha2, "alpha3": self.alpha3, "window": list(self.window)}


@dataclass(frozen=True)
class LandscapeType:
    tag: str  # "Polynomial" or "Exponential"
    alpha1: float
    alpha2: float
    alpha3: float

    @property
    def is_polynomial(self):
        return self.tag == "Polynomial"


class Landscape:
    """Base class.  Subclasses set ``p``, ``n`` and implement ``log_w`` and ``_certificate``."""

    kind = "abstract"

    def log_w(self, m):
        raise NotImplementedError

    def _certificate(self):
        raise NotImplementedError

    @property
    def certificate(self):
        cert = self.__dict__.get("_cert")
        if cert is None:
            cert = self._certificate()
            verify_certificate(self, cert)
            object.__setattr__(self, "_cert", cert)
        return cert

    @property
    def admits_heat_kernel(self):
        """Both sandwich exponents exceed n, so the symbol grows at infinity."""
        c = self.certificate
        return c.alpha1 > self.n and c.alpha2 > self.n

    def eval_w(self, m):
        with np.errstate(over="ignore"):
            out = np.exp(self.log_w(m))
        return float(out) if np.ndim(out) == 0 else out

    def log_u(self, m):
        """log of p**(n m) / w(p**m), the shell weight appearing in every series."""
        m = np.asarray(m)
        return self.n * m * math.log(self.p) - self.log_w(m)

    def to_dict(self):
        return {"kind": self.kind, "parameters": self.parameters(), "p": self.p,
                "n": self.n, "certificate": self.certificate.as_dict()}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def parameters(self):
        raise NotImplementedError


@dataclass(frozen=True)
class PowerLaw(Landscape):
    """w(r) = c r**(alpha + n); the symbol is then proportional to ||xi||**alpha."""

    p: int
    n: int
    c: float = 1.0
    alpha: float = 1.0
    kind = "PowerLaw"

    def __post_init__(self):
        check_prime(self.p)
        if self.n < 1 or self.c <= 0 or self.alpha <= 0:
            raise LandscapeError("PowerLaw needs n >= 1, c > 0, alpha > 0")

    def log_w(self, m):
        return math.log(self.c) + (self.alpha + self.n) * np.asarray(m, float) * math.log(self.p)

    def _certificate(self):
        e = self.alpha + self.n
        return Certificate(self.c, self.c, e, e, 0.0)

    def parameters(self):
        return {"c": self.c, "alpha": self.alpha}


@dataclass(frozen=True)
class Exponential(Landscape):
    """w(r) = c r**beta exp(alpha3 r)."""

    p: int
    n: int
    c: float = 1.0
    beta: float = 1.0
    alpha3: float = 1.0
    kind = "Exponential"

    def __post_init__(self):
        check_prime(self.p)
        if self.n < 1 or self.c <= 0 or self.beta <= 0 or self.alpha3 <= 0:
            raise LandscapeError("Exponential needs n >= 1, c > 0, beta > 0, alpha3 > 0")

    def log_w(self, m):
        m = np.asarray(m, float)
        with np.errstate(over="ignore"):
            return (math.log(self.c) + self.beta * m * math.log(self.p)
                    + self.alpha3 * np.power(float(self.p), m))

    def _certificate(self):
        if self.beta > self.n:
            a1, c0 = self.beta, self.c
        else:
            # continuous infimum of c r**(beta - a1) exp(alpha3 r), attained at r* = (a1 - beta)/alpha3
            a1 = self.n + 1.0
            r = (a1 - self.beta) / self.alpha3
            c0 = self.c * r ** (self.beta - a1) * math.exp(self.alpha3 * r)
        return Certificate(c0, self.c, a1, self.beta, self.alpha3)

    def parameters(self):
        return {"c": self.c, "beta": self.beta, "alpha3": self.alpha3}


@dataclass(frozen=True)
class ScaledProduct(Landscape):
    """A base landscape multiplied by a positive bounded table or by a polynomial in r.

    ``table`` holds factor values on levels ``table_start, table_start+1, ...``
    and is extended by its end values outside that window.  ``poly`` holds
    positive coefficients c_0, c_1, ... of P(r) = sum c_k r**k with c_0 > 0; it
    is only accepted over a base of exponential type.
    """

    base: Landscape
    table: tuple = ()
    table_start: int = 0
    poly: tuple = ()
    kind = "ScaledProduct"

    def __post_init__(self):
        if bool(self.table) == bool(self.poly):
            raise LandscapeError("give exactly one of table or poly")
        if self.table and min(self.table) <= 0:
            raise LandscapeError("table factors must be positive")
        if self.poly:
            if self.poly[0] <= 0 or min(self.poly) < 0:
                raise LandscapeError("polynomial needs c_0 > 0 and nonnegative coefficients")
            if self.base.certificate.alpha3 <= 0:
                raise LandscapeError("polynomial factors need an exponential-type base")

    @property
    def p(self):
        return self.base.p

    @property
    def n(self):
        return self.base.n

    def _log_factor(self, m):
        m = np.asarray(m)
        if self.table:
            tab = np.log(np.asarray(self.table, float))
            idx = np.clip(m - self.table_start, 0, len(tab) - 1).astype(int)
            return tab[idx]
        r = np.power(float(self.p), np.asarray(m, float))
        with np.errstate(over="ignore"):
            return np.log(np.polynomial.polynomial.polyval(r, np.asarray(self.poly, float)))

    def log_w(self, m):
        return self.base.log_w(m) + self._log_factor(m)

    def _certificate(self):
        b = self.base.certificate
        if self.table:
            lo, hi = min(self.table), max(self.table)
            return Certificate(b.C0 * lo, b.C1 * hi, b.alpha1, b.alpha2, b.alpha3)
        # r**k <= k! eps**-k exp(eps r), with eps = alpha3 of the base
        eps = b.alpha3
        bound = sum(ck * math.factorial(k) * eps ** (-k) for k, ck in enumerate(self.poly))
        return Certificate(b.C0 * self.poly[0], b.C1 * bound, b.alpha1, b.alpha2, 2 * eps)

    def parameters(self):
        out = {"base": self.base.to_dict()}
        if self.table:
            out.update(table=list(self.table), table_start=self.table_start)
        else:
            out["poly"] = list(self.poly)
        return out


@dataclass(frozen=True)
class Custom(Landscape):
    """User-supplied ``log_w`` with a claimed or fitted certificate."""

    p: int
    n: int
    log_w_fn: object = field(compare=False)
    claimed: Certificate | None = None
    alpha3_hint: float = 0.0
    kind = "Custom"

    def log_w(self, m):
        return np.asarray(self.log_w_fn(np.asarray(m, float)), float)

    def _certificate(self):
        if self.claimed is not None:
            return self.claimed
        return fit_certificate(self, alpha3=self.alpha3_hint)

    def parameters(self):
        return {"alpha3_hint": self.alpha3_hint}


def verify_certificate(landscape, cert):
    """Check the growth sandwich on every level of ``cert.window``; raise on violation."""
    p, n = landscape.p, landscape.n
    if not (cert.C0 > 0 and cert.C1 > 0 and cert.alpha3 >= 0):
        raise LandscapeError("certificate constants must be positive")
    if not cert.alpha1 > n:
        raise LandscapeError(f"alpha1 = {cert.alpha1} must exceed n = {n}")
    m = np.arange(cert.window[0], cert.window[1] + 1)
    lw = landscape.log_w(m)
    if not np.all(np.isfinite(lw[m <= 0])):
        raise LandscapeError("w must be finite and positive on small radii")
    slack = _REL_SLACK * (1.0 + np.abs(lw))
    low = cert.lower_log(m, p)
    if np.any(lw < low - slack):
        bad = int(m[np.argmax(low - lw)])
        raise LandscapeError(f"lower growth bound fails at level {bad}")
    with np.errstate(over="ignore"):
        up = cert.upper_log(m, p)
    if np.any(lw > up + slack):
        bad = int(m[np.argmax(lw - up)])
        raise LandscapeError(f"upper growth bound fails at level {bad}")
    return True


def fit_certificate(landscape, alpha3=0.0, window=VERIFY_WINDOW, tol=1e-6):
    """Fit a certificate from the grid values plus the end slopes of log w.

    A finite grid cannot prove the sandwich on its own, so the exponents are
    constrained by the asymptotic slopes at both ends of the window: the lower
    exponent must lie between the small-radius slope and the large-radius
    slope, and likewise for the upper exponent (unless ``alpha3 > 0`` absorbs
    growth at infinity).
    """
    p, n = landscape.p, landscape.n
    m = np.arange(window[0], window[1] + 1)
    lw = landscape.log_w(m)
    lnp = math.log(p)
    slope_lo = (lw[1] - lw[0]) / lnp
    slope_hi = (lw[-1] - lw[-2]) / lnp
    finite_hi = np.isfinite(slope_hi)
    # lower bound: slope_lo <= alpha1 <= slope_hi, alpha1 > n
    a1 = max(slope_lo, n + tol)
    if finite_hi and a1 > slope_hi + tol:
        raise LandscapeError(
            f"no lower growth exponent: small-radius slope {slope_lo:.4g} exceeds "
            f"large-radius slope {slope_hi:.4g}")
    c0 = math.exp(float(np.min(lw - a1 * m * lnp)))
    # upper bound: alpha2 <= slope_lo; with alpha3 = 0 also alpha2 >= slope_hi
    a2 = slope_lo
    if alpha3 == 0 and (not finite_hi or a2 < slope_hi - tol):
        raise LandscapeError("polynomial upper bound impossible; supply alpha3 > 0")
    with np.errstate(over="ignore"):
        excess = lw - a2 * m * lnp - alpha3 * np.power(float(p), m)
    c1 = math.exp(float(np.max(excess[np.isfinite(excess)])))
    if alpha3 == 0 and abs(a1 - a2) <= tol:
        a1 = a2 = max(a1, a2)
    return Certificate(c0, c1, a1, a2, alpha3, tuple(window))


def eval_w(landscape, m):
    return landscape.eval_w(m)


def classify_type(landscape):
    """Polynomial iff the sandwich holds with alpha3 = 0 (and then alpha1 = alpha2)."""
    c = landscape.certificate
    if c.alpha3 == 0:
        if not math.isclose(c.alpha1, c.alpha2, rel_tol=1e-9):
            raise LandscapeError("alpha3 = 0 requires alpha1 = alpha2")
        return LandscapeType("Polynomial", c.alpha1, c.alpha2, 0.0)
    return LandscapeType("Exponential", c.alpha1, c.alpha2, c.alpha3)


def log_tail_bound(landscape, J):
    """Natural log of :func:`tail_bound`; stays finite where the bound underflows."""
    c = landscape.certificate
    lnp = math.log(landscape.p)
    r = float(landscape.p) ** (landscape.n - c.alpha1)
    return (J + 1) * (landscape.n - c.alpha1) * lnp - math.log(c.C0) - math.log1p(-r)


def tail_bound(landscape, J):
    """Certified bound on sum_{j > J} p**(n j) / w(p**j) from the lower growth bound."""
    return math.exp(log_tail_bound(landscape, J))


def tail_index(landscape, eps, start=0):
    """Smallest J >= start with ``tail_bound(J) <= eps``."""
    c = landscape.certificate
    rate = (c.alpha1 - landscape.n) * math.log(landscape.p)
    log_eps = math.log(max(eps, 5e-324))
    base = log_tail_bound(landscape, start)
    J = start + (math.ceil((base - log_eps) / rate) if base > log_eps else 0)
    while log_tail_bound(landscape, J) > log_eps:
        J += 1
    return J


def shell_series(landscape, start, eps=1e-16):
    """sum_{j >= start} p**(n j)/w(p**j) together with its certified truncation error."""
    J = tail_index(landscape, eps * 1e-3, start)
    j = np.arange(start, J + 1)
    with np.errstate(over="ignore", under="ignore"):
        terms = np.exp(landscape.log_u(j))
    return math.fsum(terms[::-1]), tail_bound(landscape, J)


def exit_integral(landscape):
    """Integral of d^n y / w over {||y|| > 1}."""
    s, err = shell_series(landscape, 1)
    q = 1.0 - float(landscape.p) ** (-landscape.n)
    return q * s


def kappa_admissible_max(landscape):
    """Largest kappa with kappa * integral_{||y||>1} d^n y / w <= 1."""
    return 1.0 / exit_integral(landscape)


def landscape_from_dict(d):
    kind = d["kind"]
    par = d.get("parameters", {})
    if kind == "PowerLaw":
        out = PowerLaw(d["p"], d["n"], **par)
    elif kind == "Exponential":
        out = Exponential(d["p"], d["n"], **par)
    elif kind == "ScaledProduct":
        base = landscape_from_dict(par["base"])
        out = ScaledProduct(base, table=tuple(par.get("table", ())),
                            table_start=par.get("table_start", 0), poly=tuple(par.get("poly", ())))
    else:
        raise LandscapeError(f"cannot deserialize landscape kind {kind!r}")
    if "certificate" in d:
        claimed = d["certificate"]
        cert = out.certificate
        for key in ("C0", "C1", "alpha1", "alpha2", "alpha3"):
            if key in claimed and not math.isclose(claimed[key], getattr(cert, key), rel_tol=1e-9):
                raise LandscapeError(f"serialized certificate field {key} does not match")
    out.certificate
    return out


def landscape_from_json(text):
    return landscape_from_dict(json.loads(text))
