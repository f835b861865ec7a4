"""Command line experiment runner.

    padicwalk SUBCOMMAND --config PATH [--seed U64] [--workers N] [--out DIR]

Subcommands: symbol, kernel, cauchy, walk, fpt, verify.  Exit status 0 on
success, 2 when the configuration is unreadable or invalid, 3 when a
numerical tolerance or certification check fails.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from .fpt import (FptGrid, VolterraInstability, classify_recurrence, exit_rate, g_density, laplace_G,
                  volterra_solve)
from .heatkernel import (HeatKernelModel, ModelError, RadialStepFunction, apply_W_step, cauchy_solve,
                         radial_convolve)
from .landscape import LandscapeError, kappa_admissible_max, landscape_from_dict
from .output import cdf_rows, kernel_rows, write_csv, write_json
from .symbol import SymbolTable, ToleranceError, apply_W, aw_oracle, aw_sandwich
from .walker import (CENSORED, TruncationError, WalkConfig, estimate_fpt,
                     estimate_return_probability, run_paths)

SEED_ENV = "PADICWALK_SEED"
EXIT_OK, EXIT_INVALID, EXIT_TOLERANCE = 0, 2, 3


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    landscape: object
    kappa: float
    kappa_auto: bool
    seed: int
    out: str
    sections: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)

    def section(self, name):
        return self.sections.get(name, {})


def _landscape_from_config(d):
    d = dict(d)
    par = dict(d.get("parameters", {}))
    if d.get("kind") == "PowerLaw" and "w_exponent" in par:
        # growth exponent of w itself; the symbol exponent is w_exponent - n
        par["alpha"] = par.pop("w_exponent") - d["n"]
    d["parameters"] = par
    return landscape_from_dict(d)


def load_config(path, seed_flag=None, out_flag=None, env=None):
    env = os.environ if env is None else env
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict) or "landscape" not in raw:
        raise ConfigError("config must be a JSON object with a 'landscape' entry")
    try:
        L = _landscape_from_config(raw["landscape"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad landscape entry: {exc}") from exc
    k = raw.get("kappa", "auto")
    auto = k == "auto"
    kappa = kappa_admissible_max(L) if auto else float(k)
    if not kappa > 0:
        raise ConfigError("kappa must be positive")
    if seed_flag is not None:
        seed = seed_flag
    elif env.get(SEED_ENV):
        seed = int(env[SEED_ENV])
    else:
        seed = int(raw.get("seed", 0))
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    out = out_flag or raw.get("out", "out")
    known = ("symbol", "kernel", "cauchy", "walk", "fpt")
    sections = {k: raw.get(k, {}) for k in known}
    return ExperimentConfig(L, kappa, auto, seed, out, sections, raw.get("tolerances", {}))


# ---------------------------------------------------------------------------
# subcommands


def run_symbol(cfg, workers):
    s = cfg.section("symbol")
    lo, hi = int(s.get("gamma_min", -10)), int(s.get("gamma_max", 10))
    table = SymbolTable(cfg.landscape, lo, hi, float(s.get("eps_tail", 1e-12)))
    rows = []
    for g in range(lo, hi + 1):
        low, up = aw_sandwich(cfg.landscape, g)
        rows.append((g, table.aw(g), low, up, table.error(g)))
    write_csv(os.path.join(cfg.out, "symbol.csv"), ["gamma", "aw", "lower", "upper", "certified_error"], rows)
    return {}


def _model(cfg, fpt=False, t_min=1e-10):
    return HeatKernelModel(cfg.landscape, cfg.kappa, fpt=fpt, t_min=t_min)


def run_kernel(cfg, workers):
    s = cfg.section("kernel")
    levels = s.get("levels", list(range(0, 6)))
    times = s.get("times", [0.1, 1.0, 10.0])
    cdf_levels = s.get("cdf_levels", levels)
    M = _model(cfg, t_min=min(1e-10, min(times)))
    write_csv(os.path.join(cfg.out, "kernel_z.csv"), ["radius_level", "t", "Z"], kernel_rows(M, levels, times))
    write_csv(os.path.join(cfg.out, "kernel_cdf.csv"), ["m", "t", "cdf"], cdf_rows(M, cdf_levels, times))
    write_csv(os.path.join(cfg.out, "kernel_survival.csv"), ["t", "S"],
              ((t, M.survival_S(t)) for t in sorted(times)))
    return {}


def _step_function(d):
    if d is None:
        return None
    return RadialStepFunction(tuple(int(m) for m in d["levels"]), tuple(float(v) for v in d["values"]))


def run_cauchy(cfg, workers):
    s = cfg.section("cauchy")
    u0 = _step_function(s.get("u0", {"levels": [0], "values": [1.0]}))
    forcing = _step_function(s.get("forcing"))
    steps = int(s.get("steps", 10))
    t_grid = np.linspace(0.0, float(s.get("t_max", 1.0)), steps + 1)
    levels = s.get("levels", [0, 1, 2, 3])
    M = _model(cfg)
    sol = cauchy_solve(M, u0, forcing, t_grid, levels, tol=float(cfg.tolerances.get("duhamel", 1e-6)))
    rows = [(t, b, sol.values[k, i]) for k, t in enumerate(t_grid) for i, b in enumerate(levels)]
    write_csv(os.path.join(cfg.out, "cauchy.csv"), ["t", "radius_level", "u"], rows)
    return {"duhamel_error_max": float(sol.duhamel_error.max()), "warned": sol.warned}


def _walk_config(cfg, M):
    s = cfg.section("walk")
    try:
        return WalkConfig(M, float(s.get("dt", 0.1)), float(s.get("horizon", 10.0)),
                          int(s.get("n_paths", 1000)), cfg.seed, int(s.get("precision", 48)),
                          s.get("start", "uniform"))
    except ValueError as exc:
        raise ConfigError(f"bad walk section: {exc}") from exc


def run_walk(cfg, workers):
    M = _model(cfg)
    wc = _walk_config(cfg, M)
    run = run_paths(wc, workers)
    est = estimate_fpt(wc, run=run)
    rows = []
    for i in range(wc.n_paths):
        e, r = int(run.left_at[i]), int(run.returned_at[i])
        rows.append((i, "CENSORED" if e == CENSORED else e, "CENSORED" if r == CENSORED else r))
    write_csv(os.path.join(cfg.out, "walk_paths.csv"), ["path_index", "exit_step", "return_step"], rows)
    write_csv(os.path.join(cfg.out, "walk_histogram.csv"), ["t_bin", "count"],
              ((t, int(c)) for t, c in zip(est.t_bins, est.counts)))
    summary = {"n_paths": wc.n_paths, "censored_fraction": est.censored_fraction, "exited": est.exited,
               "seed": cfg.seed}
    if est.exited:
        p, ci = estimate_return_probability(wc, run=run)
        summary.update(return_fraction=p, ci95=list(ci))
    write_json(os.path.join(cfg.out, "walk_summary.json"), summary)
    return summary


def run_fpt(cfg, workers):
    s = cfg.section("fpt")
    M = _model(cfg, fpt=True)
    grid = FptGrid.from_model(M, float(s.get("h", 1e-2)), int(s.get("K", 1000)))
    volterra_solve(grid)
    write_csv(os.path.join(cfg.out, "fpt.csv"), ["t", "g", "f", "cumulative_f"], grid.rows())
    c = classify_recurrence(M)
    rep = c.as_dict()
    rep["diagnostics"]["volterra_cumulative"] = float(grid.cumulative[-1])
    rep["diagnostics"]["clamped_mass"] = grid.diagnostics["clamped_mass"]
    rep["laplace_G"] = [{"s": float(x), "G": laplace_G(M, float(x)).value}
                        for x in s.get("laplace_s", [0.5, 1.0, 2.0, 5.0, 10.0])]
    write_json(os.path.join(cfg.out, "classification.json"), rep)
    return rep


def _check(report, name, ok, **values):
    report.append({"name": name, "passed": bool(ok), **values})
    return ok


def run_verify(cfg, workers):
    """A condensed invariant suite; every check is recorded in verify_report.json."""
    L = cfg.landscape
    checks = []
    tol = cfg.tolerances
    table = SymbolTable(L, -10, 10)
    err = max(abs(table.aw(g) - aw_oracle(L, g)) / max(1.0, table.aw(g)) for g in range(-10, 11))
    _check(checks, "symbol_oracle", err <= tol.get("symbol", 1e-10), max_error=err)
    _check(checks, "symbol_monotone", table.is_monotone())
    lows, ups = aw_sandwich(L, np.arange(-10, 11))
    _check(checks, "symbol_sandwich", bool(np.all(lows <= table.values * (1 + 1e-12))
                                            and np.all(table.values <= ups * (1 + 1e-12))))
    wdiff = max(abs(apply_W(L, cfg.kappa, r, b, "direct") - apply_W(L, cfg.kappa, r, b, "spectral"))
                for r in (-1, 0, 2) for b in (None, -2, 0, 1, 3))
    _check(checks, "W_routes", wdiff <= 1e-9, max_difference=wdiff)
    report = {"aw_at_unit_frequency": table.aw(0), "kappa": cfg.kappa, "checks": checks,
              "landscape": L.to_dict()}
    if L.admits_heat_kernel:
        M = _model(cfg, t_min=1e-9)
        times = [0.1, 1.0, 10.0]
        mass = max(abs(M.radius_cdf(M.level_max, t, "direct") - 1.0) for t in times)
        _check(checks, "kernel_mass", mass <= 1e-8, max_deviation=mass)
        zmin = min(float(np.min(M.z_profile(np.array(times)))), 0.0)
        _check(checks, "kernel_nonnegative", zmin >= 0.0)
        forms = max(abs(M.z_density(b, t, "ball") / M.z_density(b, t, "shell") - 1)
                    for b in (None, 0, 1, 5, 15) for t in times)
        _check(checks, "kernel_forms", forms <= 1e-10, max_relative_difference=forms)
        lo = M.lower_level
        semi = 0.0
        for t in times:
            for s in times:
                conv = radial_convolve(M.z_profile(t), M.z_profile(s), lo, M.p, M.n)
                ref = M.z_profile(t + s)
                k = np.arange(0, 30) - lo
                semi = max(semi, float(np.max(np.abs(conv[k] - ref[k]))))
        _check(checks, "semigroup", semi <= 1e-9, max_difference=semi)
        resid = 0.0
        for t in (0.5, 2.0):
            prof = RadialStepFunction(tuple(range(0, 61)), tuple(M.phi(b, t) for b in range(0, 61)))
            for b in (0, 1, 2, 4):
                resid = max(resid, abs(M.time_derivative(1, b, t) - apply_W_step(M, M.kappa, prof, b)))
        _check(checks, "master_equation", resid <= 1e-8, max_residual=resid)
        if cfg.kappa <= M.kappa_max * (1 + 1e-12):
            ts = np.array([0.05, 0.5, 5.0])
            Sres = float(np.max(np.abs(M.time_derivative(1, 0, ts)
                                       - (g_density(M, ts) - exit_rate(M) * M.survival_S(ts)))))
            _check(checks, "survival_balance", Sres <= 1e-6, max_residual=Sres)
        wc = WalkConfig(M, 0.5, 5.0, int(cfg.section("walk").get("verify_paths", 4000)), cfg.seed)
        run = run_paths(wc, workers)
        occ = run.occupancy()
        S = M.survival_S(wc.dt * np.arange(wc.steps + 1))
        sigma = np.sqrt(np.maximum(S * (1 - S), 1e-12) / wc.n_paths)
        z = float(np.max(np.abs(occ - S) / sigma))
        _check(checks, "walk_occupancy", z <= 4.0, max_z=z, occupancy=occ)
    report["passed"] = all(c["passed"] for c in checks)
    write_json(os.path.join(cfg.out, "verify_report.json"), report)
    if not report["passed"]:
        raise ToleranceError("verification failed: " + ", ".join(c["name"] for c in checks if not c["passed"]))
    return report


COMMANDS = {"symbol": run_symbol, "kernel": run_kernel, "cauchy": run_cauchy,
            "walk": run_walk, "fpt": run_fpt, "verify": run_verify}


def build_parser():
    ap = argparse.ArgumentParser(prog="padicwalk", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True)
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default=None)
    return ap


def run(command, config_path, seed=None, workers=1, out=None):
    """Execute one subcommand; returns (exit_code, result_or_message)."""
    try:
        cfg = load_config(config_path, seed, out)
        return EXIT_OK, COMMANDS[command](cfg, max(1, int(workers)))
    except (ConfigError, LandscapeError, ModelError) as exc:
        return EXIT_INVALID, str(exc)
    except (ToleranceError, TruncationError, VolterraInstability) as exc:
        return EXIT_TOLERANCE, str(exc)


def main(argv=None):
    args = build_parser().parse_args(argv)
    code, res = run(args.command, args.config, args.seed, args.workers, args.out)
    if code != EXIT_OK:
        print(json.dumps({"error": res, "exit_code": code}), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
