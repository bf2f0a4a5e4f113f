"""Command line driver: ground state, constants, one minimisation per level.

Usage::

    brakeorbit solve --config run.json [--jobs K] [--resume]
    brakeorbit verify --solution out/b_0.5000
    brakeorbit diagram --summary out/summary.csv

The output root can be redirected with the ``BRAKEORBIT_OUTPUT_ROOT``
environment variable.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .builder import (assemble, mountain_pass_crosscheck, provenance_hash, read_solution, verify,
                      write_solution)
from .errors import BrakeOrbitError, ConfigError, NotConverged
from .minimizer import MinimizeConfig, minimize
from .nonlinearity import from_config, validate_hypotheses
from .potential import DictionaryBudget, estimate_constants, ground_state, m_b_lower_bound
from .radial import RadialGrid, read_field_csv, write_field_csv

logger = logging.getLogger("brakeorbit")

OUTPUT_ENV = "BRAKEORBIT_OUTPUT_ROOT"
SUMMARY_FIELDS = ["b_fraction", "b", "m_b", "T_b", "max_abs_E_plus_b", "residual",
                  "checks_passed", "checks_total", "converged", "lower_bound", "status"]
DIAGRAM_FIELDS = ["b", "minus_b", "m_b", "T_b"]
_MINIMIZER_KEYS = {"max_iters", "descent_tol", "tol_grad", "tol_constraint", "margin",
                   "far_field", "max_window", "newton_tol", "newton_max_iter", "far_field_tol",
                   "checkpoint_every", "armijo", "step_init"}


@dataclass
class RunConfig:
    """Validated run configuration (JSON on disk)."""

    nonlinearity: dict
    N: int = 1
    r_max: float = 20.0
    n_r: int = 2000
    dy: float = 0.025
    y_window: tuple | None = None
    b_list: list = field(default_factory=list)
    minimizer: dict = field(default_factory=dict)
    output_dir: str = "brakeorbit_out"
    seed: int = 0
    seed_profile: str = "ground_state"
    dictionary: dict = field(default_factory=dict)
    base_dir: str = "."


def _number(raw, key, kind=float, positive=True):
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise ConfigError(key, f"expected a number, got {raw!r}")
    val = kind(raw)
    if kind is int and val != raw:
        raise ConfigError(key, f"expected an integer, got {raw!r}")
    if positive and not val > 0:
        raise ConfigError(key, f"must be positive, got {raw!r}")
    return val


def parse_config(data: dict, base_dir=".") -> RunConfig:
    """Check a decoded JSON config; raises :class:`ConfigError` naming the bad key."""
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    known = {"nonlinearity", "N", "grid", "b_list", "minimizer", "output_dir", "seed",
             "seed_profile", "dictionary"}
    for key in data:
        if key not in known:
            raise ConfigError(key, "unknown key")
    if "nonlinearity" not in data:
        raise ConfigError("nonlinearity", "missing")
    nl = data["nonlinearity"]
    if not isinstance(nl, dict) or "kind" not in nl:
        raise ConfigError("nonlinearity", "expected an object with a 'kind' entry")
    cfg = RunConfig(nonlinearity=nl, base_dir=str(base_dir))
    cfg.N = _number(data.get("N", 1), "N", int)
    grid = data.get("grid", {})
    if not isinstance(grid, dict):
        raise ConfigError("grid", "expected an object")
    for key in grid:
        if key not in {"r_max", "n_r", "dy", "y_window"}:
            raise ConfigError(f"grid.{key}", "unknown key")
    cfg.r_max = _number(grid.get("r_max", cfg.r_max), "grid.r_max")
    cfg.n_r = _number(grid.get("n_r", cfg.n_r), "grid.n_r", int)
    cfg.dy = _number(grid.get("dy", cfg.dy), "grid.dy")
    win = grid.get("y_window")
    if win is not None:
        if not (isinstance(win, list) and len(win) == 2):
            raise ConfigError("grid.y_window", "expected [y_min, y_max]")
        lo = _number(win[0], "grid.y_window", positive=False)
        hi = _number(win[1], "grid.y_window", positive=False)
        if hi - lo < 4 * cfg.dy:
            raise ConfigError("grid.y_window", "window shorter than four steps")
        cfg.y_window = (lo, hi)
    bl = data.get("b_list", [])
    if not isinstance(bl, list):
        raise ConfigError("b_list", "expected a list of fractions of c")
    for x in bl:
        val = _number(x, "b_list", positive=False)
        if not 0.0 <= val < 1.0:
            raise ConfigError("b_list", f"fraction {x!r} outside [0, 1)")
    cfg.b_list = [float(x) for x in bl]
    mz = data.get("minimizer", {})
    if not isinstance(mz, dict):
        raise ConfigError("minimizer", "expected an object")
    for key, val in mz.items():
        if key not in _MINIMIZER_KEYS:
            raise ConfigError(f"minimizer.{key}", "unknown key")
        kind = int if key in {"max_iters", "newton_max_iter", "checkpoint_every"} else float
        _number(val, f"minimizer.{key}", kind)
    cfg.minimizer = dict(mz)
    out = data.get("output_dir", cfg.output_dir)
    if not isinstance(out, str) or not out:
        raise ConfigError("output_dir", "expected a non-empty string")
    cfg.output_dir = out
    cfg.seed = _number(data.get("seed", 0), "seed", int, positive=False)
    sp = data.get("seed_profile", "ground_state")
    if not isinstance(sp, str):
        raise ConfigError("seed_profile", "expected 'ground_state' or a CSV path")
    cfg.seed_profile = sp
    dct = data.get("dictionary", {})
    if not isinstance(dct, dict):
        raise ConfigError("dictionary", "expected an object")
    for key, val in dct.items():
        if key not in {"n_profiles", "n_scales", "floor"}:
            raise ConfigError(f"dictionary.{key}", "unknown key")
        _number(val, f"dictionary.{key}", int)
    cfg.dictionary = dict(dct)
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError("<file>", str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("<json>", str(exc)) from exc
    return parse_config(data, base_dir=path.parent)


def output_root(cfg: RunConfig) -> Path:
    env = os.environ.get(OUTPUT_ENV)
    if env:
        return Path(env)
    out = Path(cfg.output_dir)
    return out if out.is_absolute() else Path(cfg.base_dir) / out


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_json(path: Path, payload):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2, sort_keys=True))
    tmp.replace(path)


def _solve_level(job: dict) -> dict:
    """Constants, minimisation, assembly and verdict at one level."""
    cfg: RunConfig = job["config"]
    frac, c, w0, nl_section = job["fraction"], job["c"], job["w0"], job["nl"]
    nl = from_config(nl_section, cfg.base_dir)
    b = frac * c
    sub = Path(job["out"]) / f"b_{frac:.4f}"
    sub.mkdir(parents=True, exist_ok=True)
    row = {"b_fraction": frac, "b": b, "m_b": None, "T_b": None, "max_abs_E_plus_b": None,
           "residual": None, "checks_passed": 0, "checks_total": 0, "converged": False,
           "lower_bound": None, "status": "error"}
    done = sub / "row.json"
    if job["resume"] and done.exists():
        logger.info("b=%.4f c: reusing finished run", frac)
        return json.loads(done.read_text())
    try:
        budget = DictionaryBudget(seed=cfg.seed, **cfg.dictionary)
        k = estimate_constants(b, c, w0, nl, budget)
        _write_json(sub / "constants.json", json.loads(k.to_json()))
        row["lower_bound"] = m_b_lower_bound(k)
        mcfg = MinimizeConfig(b=b, seed=w0, dy=cfg.dy, y_window=cfg.y_window,
                              checkpoint_dir=str(sub / "checkpoint"), **cfg.minimizer)
        try:
            core = minimize(mcfg, k, nl, resume=job["resume"])
        except NotConverged as exc:
            core = exc.result
            row.update(m_b=core.m_b, residual=core.grad_norm, status="not_converged")
            _write_json(sub / "error.json", {"stage": "minimize", "error": "NotConverged",
                                             "message": str(exc)})
            _write_json(done, row)
            return row
        prov = {"config": _config_payload(cfg), "nonlinearity": nl_section, "c": c,
                "constants_hash": provenance_hash(asdict(k))}
        prov["hash"] = provenance_hash(prov)
        sol = assemble(core, b, nl, provenance=prov)
        verdict = verify(sol, nl, c)
        if b == 0:
            mp = mountain_pass_crosscheck(sol, nl)
            ok = 0.98 <= mp["ratio"] <= 1.02
            verdict["checks"].append({"name": "mountain_pass_ratio", "value": mp["ratio"],
                                      "threshold": [0.98, 1.02], "passed": ok})
            verdict["mountain_pass"] = mp
            verdict["passed"] = verdict["passed"] and ok
            verdict["n_checks"] += 1
            verdict["n_passed"] += int(ok)
        verdict["m_b"] = core.m_b
        write_solution(sol, sub, nl, verdict)
        row.update(m_b=core.m_b, T_b=sol.T_b if math.isfinite(sol.T_b) else math.inf,
                   max_abs_E_plus_b=next(ch["value"] for ch in verdict["checks"]
                                         if ch["name"] == "energy_constant"),
                   residual=next(ch["value"] for ch in verdict["checks"]
                                 if ch["name"] == "pde_residual"),
                   checks_passed=verdict["n_passed"], checks_total=verdict["n_checks"],
                   converged=True, status="ok" if verdict["passed"] else "verdict_failed")
    except BrakeOrbitError as exc:
        logger.error("b=%.4f c failed: %s", frac, exc)
        _write_json(sub / "error.json", {"stage": "solve", "error": type(exc).__name__,
                                         "message": str(exc)})
    _write_json(done, row)
    return row


def _config_payload(cfg: RunConfig) -> dict:
    d = asdict(cfg)
    d.pop("base_dir")
    return d


def write_summary(rows, path: Path):
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k)) for k in SUMMARY_FIELDS})
    tmp.replace(path)


def read_summary(path) -> list[dict]:
    out = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            row = dict(r)
            for k in ("b_fraction", "b", "m_b", "T_b", "max_abs_E_plus_b", "residual", "lower_bound"):
                row[k] = float(row[k]) if row.get(k) not in (None, "") else None
            for k in ("checks_passed", "checks_total"):
                row[k] = int(row[k])
            row["converged"] = row["converged"] == "True"
            out.append(row)
    return out


def energy_diagram(summary: list[dict]) -> list[dict]:
    """Rows ``(b, -b, m_b, T_b)`` sorted by ``b``; ``T_b = inf`` for the homoclinic."""
    rows = [{"b": r["b"], "minus_b": -r["b"] + 0.0, "m_b": r["m_b"], "T_b": r["T_b"]}
            for r in summary if r.get("m_b") is not None]
    return sorted(rows, key=lambda r: r["b"])


def write_diagram(rows, path: Path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=DIAGRAM_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r[k]) for k in DIAGRAM_FIELDS})


def _error(code: int, payload: dict, out: Path | None = None) -> int:
    text = json.dumps(payload, sort_keys=True)
    print(text)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "error.json", payload)
    return code


def run(config_path, jobs: int = 1, resume: bool = False) -> int:
    """Full pipeline for one config; returns the process exit status."""
    try:
        cfg = load_config(config_path)
        if cfg.nonlinearity.get("kind") == "table" and "path" in cfg.nonlinearity:
            # absolute path, so solution bundles can be rechecked from anywhere
            path = Path(cfg.nonlinearity["path"])
            if not path.is_absolute():
                cfg.nonlinearity = {**cfg.nonlinearity, "path": str((Path(cfg.base_dir) / path).resolve())}
        nl = from_config(cfg.nonlinearity, cfg.base_dir)
    except ConfigError as exc:
        return _error(2, {"error": "ConfigError", "key": exc.key, "message": str(exc)})
    except (BrakeOrbitError, OSError, KeyError, TypeError, ValueError) as exc:
        return _error(2, {"error": type(exc).__name__, "key": "nonlinearity", "message": str(exc)})
    out = output_root(cfg)
    try:
        validate_hypotheses(nl, cfg.N)
    except BrakeOrbitError as exc:
        return _error(2, {"error": type(exc).__name__, "key": "nonlinearity", "message": str(exc)}, out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        grid = RadialGrid(cfg.N, cfg.r_max, cfg.n_r)
        gs = ground_state(nl, grid)
        if cfg.seed_profile == "ground_state":
            seed = gs.w0
        else:
            p = Path(cfg.seed_profile)
            seed = read_field_csv(p if p.is_absolute() else Path(cfg.base_dir) / p)
            if seed.grid != grid:
                raise ConfigError("seed_profile", "profile grid differs from the run grid")
    except ConfigError as exc:
        return _error(2, {"error": "ConfigError", "key": exc.key, "message": str(exc)}, out)
    except BrakeOrbitError as exc:
        return _error(1, {"error": type(exc).__name__, "stage": "ground_state",
                          "message": str(exc)}, out)
    write_field_csv(gs.w0, out / "ground_state.csv")
    _write_json(out / "ground_state.json", {"N": cfg.N, "c": gs.c, "amplitude": gs.amplitude,
                                            "residual": gs.residual,
                                            "newton_iterations": gs.newton_iterations})
    logger.info("ground state: c = %.10g", gs.c)

    job_list = [{"config": cfg, "fraction": f, "c": gs.c, "w0": seed, "nl": cfg.nonlinearity,
                 "out": str(out), "resume": resume} for f in cfg.b_list]
    if jobs > 1 and len(job_list) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_solve_level, job_list))
    else:
        rows = [_solve_level(j) for j in job_list]
    rows.sort(key=lambda r: r["b_fraction"])
    write_summary(rows, out / "summary.csv")
    if rows:
        write_diagram(energy_diagram(rows), out / "energy_diagram.csv")
    ok = all(r["status"] == "ok" for r in rows)
    for r in rows:
        logger.info("b=%.4f c: %s m_b=%s T_b=%s", r["b_fraction"], r["status"], r["m_b"], r["T_b"])
    return 0 if ok else 1


def verify_dir(directory) -> int:
    """Recompute the verdict of a written solution bundle."""
    try:
        sol = read_solution(directory)
        prov = sol.provenance
        nl = from_config(prov["nonlinearity"])
        verdict = verify(sol, nl, prov["c"])
    except (BrakeOrbitError, OSError, KeyError, ValueError) as exc:
        return _error(1, {"error": type(exc).__name__, "stage": "verify", "message": str(exc)})
    print(json.dumps(verdict, indent=2))
    return 0 if verdict["passed"] else 1


def diagram(summary_path, out_path=None) -> int:
    rows = energy_diagram(read_summary(summary_path))
    out = Path(out_path) if out_path else Path(summary_path).with_name("energy_diagram.csv")
    write_diagram(rows, out)
    print(out)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="brakeorbit",
                                     description="Layered solutions of -Lap u + u = f(u) on a cylinder.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("solve", help="run the pipeline for a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--resume", action="store_true")
    p = sub.add_parser("verify", help="recheck a solution directory")
    p.add_argument("--solution", required=True)
    p = sub.add_parser("diagram", help="energy diagram from a summary CSV")
    p.add_argument("--summary", required=True)
    p.add_argument("--out")
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "solve":
        return run(args.config, jobs=args.jobs, resume=args.resume)
    if args.command == "verify":
        return verify_dir(args.solution)
    return diagram(args.summary, args.out)


if __name__ == "__main__":
    sys.exit(main())
