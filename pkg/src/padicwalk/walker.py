"""Monte Carlo simulation of the jump process on Q_p^n observed on a time grid.

The grid walk is exact: each step adds an independent increment whose law is
the heat kernel at the step length.  Two simulation modes exist.

* ``norms``: only the shell level of the position is tracked.  For an
  increment of level b added to a position of level a the new level is
  max(a, b) when a != b.  When a == b the increment is Haar-uniform on the
  shell, so the sum is uniform on B_a minus a ball of level a-1: it stays on
  the shell with probability (p**n - 2)/(p**n - 1) and otherwise lands
  uniformly in B_{a-1}, at level a-1-K with K geometric.  This is the exact
  law of the level chain, so no digit information is needed.
* ``digits``: positions are :class:`PadicPoint` values and increments are
  sampled on their shell digit by digit; slow, used for cross-checks.

Random numbers come from one Philox stream per (seed, path_index); every
path consumes ``2 * steps + 1`` uniforms drawn in one call, so a path is the
same whether it is simulated alone or inside a block.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .padic import DEFAULT_PRECISION, PadicPoint, add, sample_uniform_on_shell

ORIGIN_LEVEL = -(2 ** 62)       # level of the point 0
CENSORED = -1
BLOCK_SIZE = 2048


class TruncationError(RuntimeError):
    pass


def path_rng(seed, path_index):
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(path_index),))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class IncrementLaw:
    """Level distribution of an increment over one step, truncated on both sides."""

    p: int
    n: int
    dt: float
    levels: np.ndarray        # candidate levels b_lo..b_hi
    cdf: np.ndarray           # normalized cumulative probabilities
    retained: float

    @classmethod
    def from_model(cls, model, dt, mass_tol=1e-9):
        if not dt > 0:
            raise ValueError("dt must be positive")
        half = mass_tol / 4
        hi = 0
        while model.radius_sf(hi, dt) > half:
            hi += 1
            if hi > model.level_max:
                raise TruncationError("increment law not resolved below level_max")
        lo = 0
        while model.radius_cdf(lo - 1, dt) > half:
            lo -= 1
        levels = np.arange(lo, hi + 1)
        below = model.radius_cdf(lo - 1, dt)
        above = model.radius_sf(hi, dt)
        cdf_vals = np.array([model.radius_cdf(m, dt) for m in levels])
        pmf = np.diff(np.concatenate(([below], cdf_vals)))
        pmf[-1] = (1.0 - above) - cdf_vals[-2] if levels.size > 1 else 1.0 - above - below
        retained = 1.0 - below - above
        if retained < 1.0 - mass_tol:
            raise TruncationError(f"retained increment mass {retained} below 1 - {mass_tol}")
        pmf = np.clip(pmf, 0.0, None)
        cdf = np.cumsum(pmf) / pmf.sum()
        cdf[-1] = 1.0
        return cls(model.p, model.n, float(dt), levels, cdf, retained)

    def level_of(self, u):
        """Inverse-CDF lookup for uniforms ``u``."""
        idx = np.searchsorted(self.cdf, u, side="right")
        return self.levels[np.minimum(idx, self.levels.size - 1)]


def sample_increment(law, rng, precision=DEFAULT_PRECISION):
    """One increment as a :class:`PadicPoint`: a level from the law, then Haar-uniform on that shell."""
    b = int(law.level_of(rng.random()))
    return sample_uniform_on_shell(b, law.p, law.n, rng, precision)


@dataclass(frozen=True)
class WalkConfig:
    model: object
    dt: float
    horizon: float
    n_paths: int
    seed: int = 0
    precision: int = DEFAULT_PRECISION
    start: str = "uniform"          # "uniform" on Z_p^n or "origin"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_paths < 1:
            raise ValueError("need at least one path")
        k = self.horizon / self.dt
        if abs(k - round(k)) > 1e-9 * max(1.0, k) or round(k) < 1:
            raise ValueError("horizon must be a positive integer multiple of dt")
        if self.start not in ("uniform", "origin"):
            raise ValueError("start must be 'uniform' or 'origin'")

    @property
    def steps(self):
        return int(round(self.horizon / self.dt))


@dataclass
class PathRecord:
    path_index: int
    levels: np.ndarray | None          # level after each step (index 0 = start)
    positions: list | None             # PadicPoint per step in digit mode
    left_at: int                       # first step index outside Z_p^n, CENSORED if none
    returned_at: int                   # first step back inside after leaving, CENSORED if none
    overflow: bool = False


def _start_levels(u0, q, start):
    if start == "origin":
        return np.full(u0.shape, ORIGIN_LEVEL, dtype=np.int64)
    # level -K with P(K = k) = (1 - q) q**k: Haar-uniform point of Z_p^n
    return -np.floor(np.log1p(-u0) / math.log(q)).astype(np.int64)


def _advance(levels, b, u2, p_stay, log_q):
    """One step of the exact level chain, vectorized over paths."""
    new = np.maximum(levels, b)
    tie = levels == b
    if np.any(tie):
        v = (u2[tie] - p_stay) / (1.0 - p_stay)
        drop = v >= 0
        k = np.floor(np.log1p(-np.where(drop, v, 0.0)) / log_q).astype(np.int64)
        new[tie] = np.where(drop, b[tie] - 1 - k, b[tie])
    return new


STEP_CHUNK = 256


def simulate_levels(law, start, seed, indices, steps):
    """Level trajectories for the given path indices, shape (len(indices), steps + 1).

    Uniforms are drawn per path in chunks of ``STEP_CHUNK`` steps; consecutive
    draws from one Philox stream equal a single long draw, so chunking does
    not change any path.
    """
    q = float(law.p) ** (-law.n)
    pn = law.p ** law.n
    p_stay = (pn - 2) / (pn - 1)
    log_q = math.log(q)
    gens = [path_rng(seed, i) for i in indices]
    out = np.empty((len(gens), steps + 1), dtype=np.int64)
    out[:, 0] = _start_levels(np.array([g.random() for g in gens]), q, start)
    for c0 in range(0, steps, STEP_CHUNK):
        c1 = min(c0 + STEP_CHUNK, steps)
        U = np.stack([g.random(2 * (c1 - c0)) for g in gens])
        for k in range(c0, c1):
            j = 2 * (k - c0)
            b = law.level_of(U[:, j])
            out[:, k + 1] = _advance(out[:, k], b, U[:, j + 1], p_stay, log_q)
    return out


def _flags(levels):
    """(left_at, returned_at) per row; CENSORED where absent."""
    outside = levels > 0
    outside[:, 0] = False
    K = levels.shape[1]
    has_left = outside.any(1)
    left = np.where(has_left, outside.argmax(1), CENSORED)
    idx = np.arange(K)
    back = (~outside) & (idx[None, :] > left[:, None]) & has_left[:, None]
    has_back = back.any(1)
    ret = np.where(has_back, back.argmax(1), CENSORED)
    return left, ret


def simulate_path(cfg, path_index, law=None, mode="norms"):
    """Single path record; identical to the corresponding row of a block simulation."""
    if law is None:
        law = IncrementLaw.from_model(cfg.model, cfg.dt)
    if mode == "norms":
        lv = simulate_levels(law, cfg.start, cfg.seed, [path_index], cfg.steps)
        left, ret = _flags(lv)
        return PathRecord(path_index, lv[0], None, int(left[0]), int(ret[0]))
    if mode != "digits":
        raise ValueError("mode must be 'norms' or 'digits'")
    return _simulate_digits(cfg, path_index, law)


def _simulate_digits(cfg, path_index, law):
    rng = path_rng(cfg.seed, path_index)
    p, n = law.p, law.n
    if cfg.start == "origin":
        x = PadicPoint.zero(p, n, cfg.precision)
    else:
        # level from the first uniform as in norms mode, then uniform on that shell
        u0 = rng.random()
        lev = int(_start_levels(np.array([u0]), float(p) ** (-n), "uniform")[0])
        x = sample_uniform_on_shell(lev, p, n, rng, cfg.precision)
    positions = [x]
    for _ in range(cfg.steps):
        x = add(x, sample_increment(law, rng, cfg.precision))
        positions.append(x)
    levels = np.array([ORIGIN_LEVEL if y.level is None else y.level for y in positions], dtype=np.int64)
    left, ret = _flags(levels[None, :])
    return PathRecord(path_index, levels, positions, int(left[0]), int(ret[0]),
                      overflow=any(y.overflow for y in positions))


# ---------------------------------------------------------------------------
# aggregated runs


@dataclass
class BlockResult:
    start: int
    left_at: np.ndarray
    returned_at: np.ndarray
    inside_counts: np.ndarray      # paths inside Z_p^n per grid time
    level_counts: dict             # step -> (levels, counts) for requested steps


def _run_block(args):
    law, start, seed, lo, hi, steps, record_steps = args
    lv = simulate_levels(law, start, seed, range(lo, hi), steps)
    left, ret = _flags(lv)
    inside = (lv <= 0).sum(0)
    rec = {}
    for s in record_steps:
        vals, cnt = np.unique(lv[:, s], return_counts=True)
        rec[s] = (vals, cnt)
    return BlockResult(lo, left, ret, inside, rec)


def run_paths(cfg, workers=1, record_steps=(), law=None, block_size=BLOCK_SIZE):
    """Simulate all paths in fixed blocks; aggregation order is the block order."""
    if law is None:
        law = IncrementLaw.from_model(cfg.model, cfg.dt)
    jobs = [(law, cfg.start, cfg.seed, lo, min(lo + block_size, cfg.n_paths), cfg.steps, tuple(record_steps))
            for lo in range(0, cfg.n_paths, block_size)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            blocks = list(ex.map(_run_block, jobs))
    else:
        blocks = [_run_block(j) for j in jobs]
    left = np.concatenate([b.left_at for b in blocks])
    ret = np.concatenate([b.returned_at for b in blocks])
    inside = np.sum([b.inside_counts for b in blocks], axis=0)
    levels = {}
    for s in record_steps:
        allv = np.concatenate([b.level_counts[s][0] for b in blocks])
        allc = np.concatenate([b.level_counts[s][1] for b in blocks])
        vals = np.unique(allv)
        levels[s] = (vals, np.array([allc[allv == v].sum() for v in vals]))
    return RunResult(cfg, left, ret, inside, levels)


@dataclass
class RunResult:
    cfg: WalkConfig
    left_at: np.ndarray
    returned_at: np.ndarray
    inside_counts: np.ndarray
    level_counts: dict

    def occupancy(self):
        """Fraction of paths inside Z_p^n at every grid time."""
        return self.inside_counts / self.cfg.n_paths

    def level_cdf(self, step, m):
        vals, cnt = self.level_counts[step]
        return cnt[vals <= m].sum() / cnt.sum()


@dataclass
class FptEstimate:
    t_bins: np.ndarray          # grid times k dt
    counts: np.ndarray          # number of first returns at each grid time
    censored: int
    n_paths: int
    exited: int

    @property
    def censored_fraction(self):
        return self.censored / self.n_paths

    def density(self):
        return self.counts / (self.n_paths * (self.t_bins[1] - self.t_bins[0]))

    def cumulative(self):
        return np.cumsum(self.counts) / self.n_paths


def estimate_fpt(cfg, workers=1, run=None):
    """Histogram of the first-return time on the grid plus the censored count."""
    if run is None:
        run = run_paths(cfg, workers)
    steps = cfg.steps
    ok = run.returned_at != CENSORED
    counts = np.bincount(run.returned_at[ok], minlength=steps + 1)
    t = cfg.dt * np.arange(steps + 1)
    return FptEstimate(t, counts, int((~ok).sum()), cfg.n_paths, int((run.left_at != CENSORED).sum()))


class DegenerateEstimate(RuntimeError):
    pass


def estimate_return_probability(cfg, workers=1, run=None):
    """Fraction of exited paths that came back by the horizon, with a 95% normal interval."""
    est = estimate_fpt(cfg, workers, run)
    if est.exited == 0:
        raise DegenerateEstimate("no path left Z_p^n; increase kappa or the horizon")
    k = int(est.counts.sum())
    phat = k / est.exited
    half = 1.959963984540054 * math.sqrt(max(phat * (1 - phat), 0.0) / est.exited)
    return phat, (phat - half, phat + half)
