"""Config-driven runner: ``levytime {index,simulate,ivp-demo,tce,verify} CONFIG [--out DIR] [--seed N]``.

The config is YAML (JSON works too, and so does a ``manifest.json`` written
by an earlier run). Exit status: 0 success, 1 a verification test failed,
2 parse error, 3 validation error, 4 numeric or simulation error.
The environment variable ``LEVYTIME_WORKERS`` sets the simulation thread
count and never changes results.
"""

from __future__ import annotations

import argparse
import copy
import math
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .errors import (DomainError, NumericError, ParseError, RangeError, SimulationError, StatisticsError,
                     ValidationError)
from .expr import parse_g, parse_profile
from .io import sha256, write_json, write_paths_csv, write_rows_csv, write_tce_csv, write_verify_csv
from .ivp import TimeProfile, solve_ivp_extremal
from .simulate import SimConfig, simulate_ensemble
from .symbol import Symbol, as_states, estimate_uniform_index, eval_symbol, h_global, triplet_preset
from .tce import solve_tce
from .verify import (aggregate_pass, check_time_changed_symbol, holder_index_check, martingale_defect,
                     martingale_design, maximal_inequality_check, small_time_symbol)

TASKS = ("index", "simulate", "ivp-demo", "tce", "verify")
TOP_KEYS = {"task", "process", "dim", "x0", "sim", "g", "growth_exponent", "profile", "index", "verify", "output"}
SIM_KEYS = {"dt", "horizon", "n_paths", "master_seed", "stable_scheme", "small_jump_cutoff"}
VERIFY_KEYS = {"tests", "design_points", "u_grid", "s", "t", "small_time_grid", "R", "h_grid", "lam",
               "holder_h_grid"}
VERIFY_TESTS = ("martingale", "small_time", "time_changed", "maximal", "holder")

EXIT_OK, EXIT_FAIL, EXIT_PARSE, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2, 3, 4


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ValidationError(f"cannot read config {path}: {e.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ParseError(f"config {path} is not valid YAML: {e}") from None
    if not isinstance(data, dict):
        raise ParseError(f"config {path} must be a mapping")
    if "config" in data and "files" in data:
        data = data["config"]  # a manifest from an earlier run
    return data


def _number(block: dict, key: str, where: str, positive=True, integer=False):
    v = block[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValidationError(f"{where}.{key} must be a number, got {v!r}")
    if integer and int(v) != v:
        raise ValidationError(f"{where}.{key} must be an integer, got {v!r}")
    if positive and not v > 0:
        raise ValidationError(f"{where}.{key} must be positive, got {v!r}")
    return int(v) if integer else float(v)


def resolve(cfg: dict, task: str, seed=None) -> dict:
    """Validate ``cfg`` for ``task`` and fill defaults; the result fully determines the run."""
    cfg = copy.deepcopy(cfg)
    unknown = set(cfg) - TOP_KEYS
    if unknown:
        raise ValidationError(f"unknown config keys: {', '.join(sorted(unknown))}")
    if cfg.get("task", task) != task:
        raise ValidationError(f"config is for task {cfg['task']!r}, not {task!r}")
    cfg["task"] = task
    cfg.setdefault("process", "brownian")
    cfg.setdefault("dim", 1)
    cfg["dim"] = _number(cfg, "dim", "config", integer=True)
    cfg.setdefault("x0", 0.0)
    cfg.setdefault("g", None)
    cfg.setdefault("growth_exponent", None)
    if task == "ivp-demo":
        cfg.setdefault("profile", "sqrt(t)")
    sim = dict(cfg.get("sim") or {})
    unknown = set(sim) - SIM_KEYS
    if unknown:
        raise ValidationError(f"unknown sim keys: {', '.join(sorted(unknown))}")
    if seed is not None:
        sim["master_seed"] = int(seed)
    if task != "index":
        for k in ("dt", "horizon"):
            if k not in sim:
                raise ValidationError(f"sim.{k} is required")
            sim[k] = _number(sim, k, "sim")
        sim.setdefault("n_paths", 1)
        sim["n_paths"] = _number(sim, "n_paths", "sim", integer=True)
    if task in ("simulate", "tce", "verify"):
        if "master_seed" not in sim:
            raise ValidationError("sim.master_seed is required")
        sim["master_seed"] = _number(sim, "master_seed", "sim", positive=False, integer=True)
        if sim["master_seed"] < 0:
            raise ValidationError("sim.master_seed must be nonnegative")
    cfg["sim"] = sim
    if task == "tce" and not cfg["g"]:
        raise ValidationError("task tce needs a g expression")
    if task == "verify":
        ver = dict(cfg.get("verify") or {})
        unknown = set(ver) - VERIFY_KEYS
        if unknown:
            raise ValidationError(f"unknown verify keys: {', '.join(sorted(unknown))}")
        ver.setdefault("tests", ["martingale"] + (["time_changed"] if cfg["g"] else []))
        bad = [t for t in ver["tests"] if t not in VERIFY_TESTS]
        if bad:
            raise ValidationError(f"unknown verify tests: {', '.join(bad)}")
        if "time_changed" in ver["tests"] and not cfg["g"]:
            raise ValidationError("the time_changed test needs a g expression")
        ver.setdefault("design_points", 20)
        ver.setdefault("u_grid", [-2.0, -1.0, 1.0, 2.0])
        ver.setdefault("s", 0.0)
        ver.setdefault("small_time_grid", [0.1, 0.2, 0.3, 0.4])
        ver.setdefault("R", 0.3)
        ver.setdefault("h_grid", [0.01, 0.02, 0.04, 0.08])
        ver.setdefault("lam", 3.0)
        cfg["verify"] = ver
    else:
        cfg.pop("verify", None)
    if task == "index":
        idx = dict(cfg.get("index") or {})
        cfg["index"] = idx
    else:
        cfg.pop("index", None)
    if task != "ivp-demo":
        cfg.pop("profile", None)
    return cfg


def _triplet(cfg):
    try:
        return triplet_preset(str(cfg["process"]), cfg["dim"])
    except ValueError as e:
        raise ValidationError(str(e)) from None


def _sim_config(cfg) -> SimConfig:
    s = cfg["sim"]
    kw = {k: s[k] for k in ("stable_scheme", "small_jump_cutoff") if k in s}
    try:
        return SimConfig(s["dt"], s["horizon"], s["n_paths"], **kw)
    except ValueError as e:
        raise ValidationError(str(e)) from None


def _x0(cfg):
    x0 = np.asarray(cfg["x0"], dtype=float)
    return np.broadcast_to(x0, (cfg["dim"],)).copy()


def _workers():
    w = os.environ.get("LEVYTIME_WORKERS")
    if w is None:
        return 1
    try:
        return max(1, int(w))
    except ValueError:
        raise ValidationError(f"LEVYTIME_WORKERS must be an integer, got {w!r}") from None


def _ensemble(cfg):
    return simulate_ensemble(_triplet(cfg), _x0(cfg), _sim_config(cfg), cfg["sim"]["master_seed"], _workers())


def _fmt_u(u) -> str:
    return ";".join(repr(float(v)) for v in np.atleast_1d(u))


# ---------------------------------------------------------------------------
# Tasks; each writes into ``out`` and returns (files, all_tests_passed)
# ---------------------------------------------------------------------------


def task_index(cfg, out: Path):
    sym = Symbol.from_triplet(_triplet(cfg))
    r_grid = cfg["index"].get("r_grid")
    est = estimate_uniform_index(sym, None if r_grid is None else np.asarray(r_grid, dtype=float))
    files = [write_rows_csv(out / "index.csv", ["process", "beta_infinity", "fit_slope", "fit_residual", "degenerate"],
                            [[cfg["process"], est.beta_infinity, est.fit_slope, est.fit_residual, est.degenerate]]),
             write_rows_csv(out / "h_values.csv", ["R", "H"], zip(est.r_grid, est.h_values))]
    return files, True


def task_simulate(cfg, out: Path):
    ens = _ensemble(cfg)
    return [write_paths_csv(out / "paths.csv", ens)], True


def task_ivp_demo(cfg, out: Path):
    f = parse_profile(cfg["profile"])
    s = cfg["sim"]
    Y = TimeProfile.from_function(f, s["horizon"], s["dt"])
    sol = solve_ivp_extremal(Y)
    files = [write_rows_csv(out / "ivp.csv", ["t", "Y", "alpha1", "alpha2"],
                            zip(sol.times, Y.values, sol.alpha1, sol.alpha2)),
             write_json(out / "ivp_summary.json", {"tau": sol.tau, "eta": sol.eta, "gamma": sol.gamma,
                                                   "unique": sol.unique, "gap": sol.gap,
                                                   "divergence_exponent": sol.divergence_exponent,
                                                   "right_regular": sol.right_regular})]
    return files, True


def task_tce(cfg, out: Path, g):
    ens = _ensemble(cfg)
    sols = solve_tce(ens, g)
    files = [write_tce_csv(out / "tce.csv", sols), write_json(out / "conditions.json", sols[0].report.to_dict())]
    return files, True


def task_verify(cfg, out: Path, g):
    ens = _ensemble(cfg)
    ver = cfg["verify"]
    sym = Symbol.from_triplet(ens.triplet)
    rows, verdicts = [], []
    T = ens.horizon
    if "martingale" in ver["tests"]:
        res = [martingale_defect(ens, sym, u, s, t)
               for u, s, t in martingale_design(ver["design_points"], T, dim=ens.dim)]
        rows += [["martingale", f"u={_fmt_u(r.u)};s={r.s!r};t={r.t!r}", r.estimate, r.stderr, r.passed] for r in res]
        verdicts.append(aggregate_pass(res))
    if "small_time" in ver["tests"]:
        grid = np.asarray(ver["small_time_grid"], dtype=float)
        for u in ver["u_grid"]:
            uu = np.broadcast_to(np.asarray(u, dtype=float), (ens.dim,))
            est = small_time_symbol(ens, uu, grid)
            exact = eval_symbol(sym, ens.start if ens.dim > 1 else ens.start[0], uu)
            ok = abs(est.value - exact) <= 3.0 * est.stderr
            rows.append(["small_time", f"u={_fmt_u(uu)};exact={exact!r}", est.value, est.stderr, ok])
            verdicts.append(ok)
    if "time_changed" in ver["tests"]:
        sols = solve_tce(ens, g)
        t_end = float(ver.get("t") or sols[0].times[-1])
        us = [np.broadcast_to(np.asarray(u, dtype=float), (ens.dim,)) for u in ver["u_grid"]]
        res = check_time_changed_symbol(sols, g, sym, us, float(ver["s"]), t_end)
        rows += [["time_changed", f"u={_fmt_u(r.u)};s={r.s!r};t={r.t!r}", r.estimate, r.stderr, r.passed]
                 for r in res.results]
        verdicts.append(res.passed)
    if "maximal" in ver["tests"]:
        m = maximal_inequality_check(ens, float(ver["R"]), ver["h_grid"], symbol=sym)
        for h, p, r in zip(m.h_grid, m.empirical_probs, m.ratios):
            se = math.sqrt(max(p * (1 - p), 0.0) / m.n)
            rows.append(["maximal", f"R={m.R!r};h={h!r};ratio={r!r}", p, se, m.bounded])
        verdicts.append(m.bounded)
    if "holder" in ver["tests"]:
        hg = ver.get("holder_h_grid") or [T, math.sqrt(T * ens.config.dt), ens.config.dt]
        hres = holder_index_check(ens, float(ver["lam"]), hg)
        se = math.sqrt(hres.fraction * (1 - hres.fraction) / len(hres.vanishing))
        rows.append(["holder", f"lam={hres.lam!r};h_grid={_fmt_u(hres.h_grid)}", hres.fraction, se, True])
    files = [write_verify_csv(out / "verify.csv", rows)]
    return files, all(verdicts)


def run(task: str, config_path, out=None, seed=None) -> int:
    """Run one task; returns the exit status. Nothing is written unless the config is valid."""
    try:
        cfg = resolve(load_config(config_path), task, seed)
        g = None
        if cfg["g"]:
            g = parse_g(str(cfg["g"]), cfg["dim"], growth_exponent=cfg["growth_exponent"])
        if task == "ivp-demo":
            parse_profile(cfg["profile"])
        triplet = _triplet(cfg) if task != "ivp-demo" else None
        if triplet is not None and task != "index":
            _sim_config(cfg)
            try:
                as_states(_x0(cfg), cfg["dim"])
            except ValueError as e:
                raise ValidationError(str(e)) from None
        out_dir = Path(out if out is not None else cfg.get("output") or "levytime-out")
        cfg["output"] = str(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        if task == "index":
            files, ok = task_index(cfg, out_dir)
        elif task == "simulate":
            files, ok = task_simulate(cfg, out_dir)
        elif task == "ivp-demo":
            files, ok = task_ivp_demo(cfg, out_dir)
        elif task == "tce":
            files, ok = task_tce(cfg, out_dir, g)
        else:
            files, ok = task_verify(cfg, out_dir, g)
        manifest_cfg = dict(cfg)
        manifest_cfg.pop("output")
        write_json(out_dir / "manifest.json", {
            "config": manifest_cfg,
            "seeds": {"master_seed": cfg["sim"].get("master_seed")},
            "version": __version__,
            "files": {f.name: sha256(f) for f in files},
        })
        return EXIT_OK if ok else EXIT_FAIL
    except ParseError as e:
        print(f"parse error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except (ValidationError, DomainError, RangeError) as e:
        print(f"invalid config: {e}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericError, SimulationError, StatisticsError, FloatingPointError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="levytime", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"levytime {__version__}")
    sub = p.add_subparsers(dest="task", required=True)
    for name in TASKS:
        sp = sub.add_parser(name)
        sp.add_argument("config", help="YAML config file or a manifest.json from an earlier run")
        sp.add_argument("--out", help="output directory (overrides the config)")
        sp.add_argument("--seed", type=int, help="master seed (overrides the config)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run(args.task, args.config, args.out, args.seed)


if __name__ == "__main__":
    sys.exit(main())
