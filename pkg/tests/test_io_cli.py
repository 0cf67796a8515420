import csv
import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest
import yaml

from levytime.cli import main, resolve, run
from levytime.errors import ValidationError
from levytime.io import (fmt, load_ensemble_npz, read_paths_csv, save_ensemble_npz, write_json, write_paths_csv)
from levytime.simulate import SimConfig, simulate_ensemble
from levytime.symbol import triplet_preset


def write_cfg(path, cfg):
    path.write_text(yaml.safe_dump(cfg))
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# --- formats ------------------------------------------------------------------------------------------


def test_fmt():
    assert fmt(True) == "true" and fmt(np.bool_(False)) == "false"
    assert fmt(0.1) == "0.1" and fmt(np.float64(1 / 3)) == repr(1 / 3)
    assert fmt(np.int64(7)) == "7"
    assert fmt(1 + 2j) == "(1+2j)"


def test_paths_csv_and_npz_round_trip(tmp_path):
    e = simulate_ensemble(triplet_preset("stable(1.5)", dim=2), [0.0, 1.0], SimConfig(0.1, 1.0, 3), master_seed=4)
    f = write_paths_csv(tmp_path / "p.csv", e)
    back = read_paths_csv(f)
    assert len(back) == 3
    for p, q in zip(e.paths, back):
        np.testing.assert_array_equal(p.times, q.times)
        np.testing.assert_array_equal(p.values, q.values)  # repr floats round-trip exactly
    z = load_ensemble_npz(save_ensemble_npz(tmp_path / "p.npz", e))
    np.testing.assert_allclose(z["values"], np.stack([q.values for q in back]), rtol=0, atol=1e-12)
    assert [int(s) for s in z["seeds"]] == list(e.seeds)


def test_json_non_finite(tmp_path):
    f = write_json(tmp_path / "a.json", {"b": math.inf, "a": np.float64(1.5), "c": [np.bool_(True)]})
    data = json.loads(f.read_text())
    assert data == {"a": 1.5, "b": "inf", "c": [True]}
    assert f.read_text().index('"a"') < f.read_text().index('"b"')


# --- config resolution -------------------------------------------------------------------------------------


def test_resolve_defaults_and_errors():
    cfg = resolve({"sim": {"dt": 0.01, "horizon": 1, "master_seed": 1}}, "verify")
    assert cfg["verify"]["tests"] == ["martingale"] and cfg["sim"]["n_paths"] == 1
    with pytest.raises(ValidationError):
        resolve({"sim": {"dt": 0.01, "horizon": 1}}, "simulate")  # no seed
    with pytest.raises(ValidationError):
        resolve({"sim": {"dt": -1, "horizon": 1, "master_seed": 1}}, "simulate")
    with pytest.raises(ValidationError):
        resolve({"colour": 1, "sim": {"dt": 0.1, "horizon": 1, "master_seed": 1}}, "simulate")
    with pytest.raises(ValidationError):
        resolve({"sim": {"dt": 0.1, "horizon": 1, "master_seed": 1}}, "tce")  # no g
    assert resolve({"sim": {"dt": 0.1, "horizon": 1}}, "simulate", seed=5)["sim"]["master_seed"] == 5


# --- tasks ---------------------------------------------------------------------------------------------------


def test_index_task(tmp_path):
    cfg = write_cfg(tmp_path / "c.yaml", {"process": "brownian"})
    assert run("index", cfg, tmp_path / "out") == 0
    row = read_csv(tmp_path / "out" / "index.csv")[0]
    assert abs(float(row["beta_infinity"]) - 2.0) <= 0.05
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert set(manifest["files"]) == {"index.csv", "h_values.csv"}


def test_ivp_demo_task(tmp_path):
    cfg = write_cfg(tmp_path / "c.yaml", {"profile": "sqrt(t)", "sim": {"dt": 1e-3, "horizon": 1.0}})
    assert run("ivp-demo", cfg, tmp_path / "out") == 0
    rows = read_csv(tmp_path / "out" / "ivp.csv")
    t = np.array([float(r["t"]) for r in rows])
    assert all(float(r["alpha1"]) == 0.0 for r in rows)
    np.testing.assert_allclose([float(r["alpha2"]) for r in rows], t**2 / 4, atol=1e-3)
    summary = json.loads((tmp_path / "out" / "ivp_summary.json").read_text())
    assert summary["unique"] is False and summary["eta"] == "inf"


def test_simulate_and_tce_tasks(tmp_path):
    base = {"process": "drift(1)", "x0": 1.0, "sim": {"dt": 1e-2, "horizon": 2.0, "n_paths": 2, "master_seed": 3}}
    cfg = write_cfg(tmp_path / "s.yaml", base)
    assert run("simulate", cfg, tmp_path / "sim") == 0
    rows = read_csv(tmp_path / "sim" / "paths.csv")
    assert len(rows) == 2 * 201 and set(rows[0]) == {"path_id", "t", "x_1"}
    cfg = write_cfg(tmp_path / "t.yaml", dict(base, g="min(abs(x), 2)"))
    assert run("tce", cfg, tmp_path / "tce") == 0
    rows = read_csv(tmp_path / "tce" / "tce.csv")
    assert list(rows[0]) == ["path_id", "t", "alpha1", "alpha2", "z_1", "unique"]
    last = [r for r in rows if r["path_id"] == "0"][-1]
    assert float(last["t"]) == pytest.approx(1.0)
    assert float(last["z_1"]) == pytest.approx(2 + 2 * (1 - math.log(2)), abs=0.05)
    report = json.loads((tmp_path / "tce" / "conditions.json").read_text())
    assert report["growth_A1"]["vacuous"] is False  # g vanishes at 0
    assert set(report) >= {"growth_A1", "regular_at_zero"}


def test_verify_task_pass_and_fail(tmp_path):
    base = {"process": "brownian", "sim": {"dt": 1e-2, "horizon": 1.0, "n_paths": 2000, "master_seed": 1}}
    cfg = write_cfg(tmp_path / "ok.yaml", base)
    assert run("verify", cfg, tmp_path / "ok") == 0
    rows = read_csv(tmp_path / "ok" / "verify.csv")
    assert len(rows) == 20 and list(rows[0]) == ["test", "params", "estimate", "stderr", "pass"]
    # a coarse small-time grid leaves a large extrapolation bias: the suite fails
    bad = dict(base, verify={"tests": ["small_time"], "small_time_grid": [0.5, 1.0], "u_grid": [2.0]})
    assert run("verify", write_cfg(tmp_path / "bad.yaml", bad), tmp_path / "bad") == 1


def test_verify_all_tests(tmp_path):
    cfg = {"process": "brownian", "g": "min(pow(abs(x), 3), 1) + 0.1",
           "sim": {"dt": 1e-2, "horizon": 1.0, "n_paths": 500, "master_seed": 2},
           "verify": {"tests": ["martingale", "small_time", "time_changed", "maximal", "holder"]}}
    code = run("verify", write_cfg(tmp_path / "c.yaml", cfg), tmp_path / "out")
    assert code in (0, 1)
    tests = {r["test"] for r in read_csv(tmp_path / "out" / "verify.csv")}
    assert tests == {"martingale", "small_time", "time_changed", "maximal", "holder"}


# --- exit codes ------------------------------------------------------------------------------------------------


def test_malformed_g_exits_2_without_files(tmp_path):
    cfg = write_cfg(tmp_path / "c.yaml", {"g": "min(x,", "sim": {"dt": 0.1, "horizon": 1, "master_seed": 1}})
    assert run("tce", cfg, tmp_path / "out") == 2
    assert not (tmp_path / "out").exists()


def test_negative_g_exits_3(tmp_path):
    cfg = write_cfg(tmp_path / "c.yaml", {"g": "x - 2", "sim": {"dt": 0.1, "horizon": 1, "master_seed": 1}})
    assert run("tce", cfg, tmp_path / "out") == 3
    assert not (tmp_path / "out").exists()


def test_bad_yaml_and_missing_file(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("sim: [unclosed")
    assert run("index", bad, tmp_path / "o") == 2
    assert run("index", tmp_path / "missing.yaml", tmp_path / "o") == 3


def test_statistics_failure_exits_4(tmp_path):
    cfg = write_cfg(tmp_path / "c.yaml", {"sim": {"dt": 0.1, "horizon": 1, "n_paths": 1, "master_seed": 1}})
    assert run("verify", cfg, tmp_path / "out") == 4


def test_unknown_preset_exits_3(tmp_path):
    cfg = write_cfg(tmp_path / "c.yaml", {"process": "wiener", "sim": {"dt": 0.1, "horizon": 1, "master_seed": 1}})
    assert run("simulate", cfg, tmp_path / "out") == 3


# --- reproducibility ---------------------------------------------------------------------------------------------


def test_rerun_from_manifest_is_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path / "c.yaml", {"process": "cpp(1,1)", "g": "min(abs(x), 1) + 0.5",
                                          "sim": {"dt": 0.01, "horizon": 1.0, "n_paths": 5, "master_seed": 8}})
    assert run("tce", cfg, tmp_path / "a") == 0
    assert run("tce", tmp_path / "a" / "manifest.json", tmp_path / "b") == 0
    for name in ("tce.csv", "conditions.json", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_override_changes_output(tmp_path):
    cfg = write_cfg(tmp_path / "c.yaml", {"sim": {"dt": 0.1, "horizon": 1.0, "n_paths": 2, "master_seed": 1}})
    run("simulate", cfg, tmp_path / "a")
    run("simulate", cfg, tmp_path / "b", seed=2)
    assert (tmp_path / "a" / "paths.csv").read_bytes() != (tmp_path / "b" / "paths.csv").read_bytes()


def test_workers_do_not_change_output(tmp_path, monkeypatch):
    cfg = write_cfg(tmp_path / "c.yaml", {"process": "stable(1.2)", "sim": {"dt": 0.01, "horizon": 1.0, "n_paths": 8,
                                                                            "master_seed": 1}})
    run("simulate", cfg, tmp_path / "a")
    monkeypatch.setenv("LEVYTIME_WORKERS", "3")
    run("simulate", cfg, tmp_path / "b")
    assert (tmp_path / "a" / "paths.csv").read_bytes() == (tmp_path / "b" / "paths.csv").read_bytes()


def test_console_entry_point(tmp_path):
    cfg = write_cfg(tmp_path / "c.yaml", {"process": "drift(1)"})
    proc = subprocess.run([sys.executable, "-m", "levytime.cli", "index", str(cfg), "--out", str(tmp_path / "o")],
                          capture_output=True, text=True, env=dict(os.environ))
    assert proc.returncode == 0, proc.stderr
    assert main(["index", str(cfg), "--out", str(tmp_path / "o2")]) == 0
    with pytest.raises(SystemExit):
        main(["nonsense"])
