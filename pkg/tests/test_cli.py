import csv
import json
import os
import subprocess
import sys

import pytest

from padicwalk.cli import SEED_ENV, ConfigError, load_config, main, run
from padicwalk.output import write_csv

GOLDEN = {"kind": "PowerLaw", "p": 3, "n": 1, "parameters": {"c": 1.0, "alpha": 2.0}}


def write_config(tmp_path, name="cfg.json", **entries):
    cfg = {"landscape": GOLDEN, "kappa": 1.0}
    cfg.update(entries)
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_verify_golden(tmp_path):
    out = tmp_path / "out"
    code, rep = run("verify", write_config(tmp_path, walk={"verify_paths": 1000}), out=str(out))
    assert code == 0
    assert rep["passed"]
    assert rep["aw_at_unit_frequency"] == pytest.approx(13 / 108, abs=1e-14)
    on_disk = json.loads((out / "verify_report.json").read_text())
    assert {c["name"] for c in on_disk["checks"]} >= {"symbol_oracle", "kernel_mass", "semigroup",
                                                      "master_equation", "walk_occupancy"}


def test_fpt_transient_by_w_exponent(tmp_path):
    land = {"kind": "PowerLaw", "p": 3, "n": 1, "parameters": {"c": 1.0, "w_exponent": 1.5}}
    cfg = write_config(tmp_path, landscape=land, kappa="auto", fpt={"h": 0.05, "K": 400})
    code, rep = run("fpt", cfg, out=str(tmp_path / "o"))
    assert code == 0
    assert rep["tag"] == "Transient"
    got = json.loads((tmp_path / "o" / "classification.json").read_text())
    assert got["tag"] == "Transient" and got["alpha"] == pytest.approx(1.5)
    assert got["return_probability"] == pytest.approx(0.23205, abs=1e-5)
    rows = read_csv(tmp_path / "o" / "fpt.csv")
    assert rows[0] == ["t", "g", "f", "cumulative_f"] and len(rows) == 401


def test_fpt_rejects_large_kappa(tmp_path, capsys):
    cfg = write_config(tmp_path, kappa=100.0)
    code, msg = run("fpt", cfg, out=str(tmp_path / "o"))
    assert code == 2 and "admissib" in msg
    assert main(["fpt", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["exit_code"] == 2


def test_unreadable_or_invalid_configs(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run("symbol", str(bad))[0] == 2
    assert run("symbol", str(tmp_path / "missing.json"))[0] == 2
    assert run("symbol", write_config(tmp_path, landscape={"kind": "PowerLaw", "p": 4, "n": 1,
                                                           "parameters": {"alpha": 2.0}}))[0] == 2
    assert run("symbol", write_config(tmp_path, kappa=-1.0))[0] == 2
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path, seed=-3))
    assert run("walk", write_config(tmp_path, walk={"dt": 0.3, "horizon": 1.0}), out=str(tmp_path / "o"))[0] == 2


def test_failed_certification_exits_3(tmp_path):
    # a landscape with a bump makes the symbol non-monotone, which verify reports
    bumpy = {"kind": "ScaledProduct", "p": 3, "n": 1,
             "parameters": {"base": {"kind": "PowerLaw", "p": 3, "n": 1, "parameters": {"alpha": 0.5}},
                            "table": [1.0, 50.0, 1.0], "table_start": 0}}
    out = tmp_path / "o"
    code, msg = run("verify", write_config(tmp_path, landscape=bumpy, walk={"verify_paths": 200}), out=str(out))
    assert code == 3 and "symbol_monotone" in msg
    rep = json.loads((out / "verify_report.json").read_text())
    assert not rep["passed"]
    failed = {c["name"] for c in rep["checks"] if not c["passed"]}
    assert "symbol_monotone" in failed


def test_unresolvable_increment_law_exits_3(tmp_path):
    land = {"kind": "PowerLaw", "p": 3, "n": 1, "parameters": {"alpha": 0.01}}
    cfg = write_config(tmp_path, landscape=land, kappa=1.0, walk={"dt": 1e6, "horizon": 1e6, "n_paths": 10})
    assert run("walk", cfg, out=str(tmp_path / "o"))[0] == 3


def test_header_only_csv(tmp_path):
    path = write_csv(str(tmp_path / "x.csv"), ["a", "b"], [])
    with open(path, "rb") as fh:
        assert fh.read() == b"a,b\n"


def test_kernel_csv_sorted_and_exact(tmp_path):
    cfg = write_config(tmp_path, kernel={"levels": [3, 0, 1], "times": [10.0, 0.1, 1.0]})
    assert run("kernel", cfg, out=str(tmp_path / "o"))[0] == 0
    rows = read_csv(tmp_path / "o" / "kernel_z.csv")
    assert rows[0] == ["radius_level", "t", "Z"]
    keys = [(float(r[1]), int(r[0])) for r in rows[1:]]
    assert keys == sorted(keys) and len(keys) == 9
    with open(tmp_path / "o" / "kernel_z.csv", "rb") as fh:
        raw = fh.read()
    assert b"\r" not in raw
    from padicwalk.heatkernel import HeatKernelModel
    from padicwalk.landscape import PowerLaw
    M = HeatKernelModel(PowerLaw(3, 1, 1.0, 2.0), 1.0)
    assert float(rows[1][2]) == M.z_density(0, 0.1)           # round-trip precision
    S = read_csv(tmp_path / "o" / "kernel_survival.csv")
    assert S[0] == ["t", "S"] and len(S) == 4


def test_symbol_and_cauchy_outputs(tmp_path):
    cfg = write_config(tmp_path, symbol={"gamma_min": -2, "gamma_max": 2},
                       cauchy={"forcing": {"levels": [0], "values": [1.0]}, "steps": 8, "t_max": 1.0,
                               "levels": [0, 1]},
                       tolerances={"duhamel": 1e-4})
    assert run("symbol", cfg, out=str(tmp_path / "o"))[0] == 0
    rows = read_csv(tmp_path / "o" / "symbol.csv")
    assert rows[0] == ["gamma", "aw", "lower", "upper", "certified_error"]
    assert float(rows[3][1]) == pytest.approx(13 / 108)
    code, res = run("cauchy", cfg, out=str(tmp_path / "o"))
    assert code == 0
    assert len(read_csv(tmp_path / "o" / "cauchy.csv")) == 1 + 9 * 2


def test_walk_outputs_and_reruns(tmp_path):
    cfg = write_config(tmp_path, walk={"dt": 0.5, "horizon": 5.0, "n_paths": 300}, seed=11)
    files = ("walk_paths.csv", "walk_histogram.csv", "walk_summary.json")
    blobs = []
    for k, workers in enumerate((1, 2)):
        out = tmp_path / f"o{k}"
        assert run("walk", cfg, workers=workers, out=str(out))[0] == 0
        blobs.append([(out / f).read_bytes() for f in files])
    assert blobs[0] == blobs[1]
    rows = read_csv(tmp_path / "o0" / "walk_paths.csv")
    assert rows[0] == ["path_index", "exit_step", "return_step"] and len(rows) == 301
    assert any(r[2] == "CENSORED" for r in rows[1:])


def test_seed_precedence(tmp_path):
    cfg = write_config(tmp_path, seed=5)
    assert load_config(cfg, env={}).seed == 5
    assert load_config(cfg, env={SEED_ENV: "9"}).seed == 9
    assert load_config(cfg, seed_flag=3, env={SEED_ENV: "9"}).seed == 3
    assert load_config(write_config(tmp_path, "b.json"), env={}).seed == 0


def test_seed_changes_walk(tmp_path):
    cfg = write_config(tmp_path, walk={"dt": 0.5, "horizon": 5.0, "n_paths": 300})
    run("walk", cfg, seed=1, out=str(tmp_path / "a"))
    run("walk", cfg, seed=2, out=str(tmp_path / "b"))
    assert (tmp_path / "a" / "walk_paths.csv").read_bytes() != (tmp_path / "b" / "walk_paths.csv").read_bytes()


def test_auto_kappa(tmp_path):
    c = load_config(write_config(tmp_path, kappa="auto"))
    assert c.kappa_auto and c.kappa == pytest.approx(12.0)


def test_module_entry_point(tmp_path):
    cfg = write_config(tmp_path)
    env = dict(os.environ, PYTHONPATH=os.path.join(os.path.dirname(__file__), "..", "src"))
    res = subprocess.run([sys.executable, "-m", "padicwalk", "symbol", "--config", cfg,
                          "--out", str(tmp_path / "o")], capture_output=True, text=True, env=env)
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "o" / "symbol.csv").exists()
