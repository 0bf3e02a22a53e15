"""Batch front-end: ``planar-leray --config run.json --out results/``.

The config is a JSON object with ``schema_version`` and ``command`` (one of
``solve``, ``invade``, ``audit``, ``constants``, ``lift``); see
``docs/formats.md`` for the full schema and output files.

Exit codes: 0 success, 2 invalid configuration or violated hypothesis,
3 solver non-convergence, 4 invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .audit import AuditInconsistency, HypothesisViolation, audit_pair
from .geometry import (
    RegionSpec,
    TensorField,
    grid_metadata,
    make_polar_grid,
    tensor_edge_norm,
    write_field_csv,
)
from .invading import forcing_on, run_invading
from .solver import ConvergenceError, SolveConfig, solenoidal_test_battery, solve_disk
from .sources import SourceSpec, ZeroMeanError, build_vector_source, lift_vector_source, pairing_residual
from .weighted import certify_constant, estimate_hardy_constant, estimate_poincare_constant

log = logging.getLogger("planar_leray")

SCHEMA_VERSION = 1
COMMANDS = ("solve", "invade", "audit", "constants", "lift")
EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_INVARIANT = 2, 3, 4


class ConfigError(ValueError):
    pass


class InvariantViolation(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def load_config(path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {path} does not exist") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    if cfg.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {cfg.get('schema_version')!r}; "
                          f"expected {SCHEMA_VERSION}")
    if cfg.get("command") not in COMMANDS:
        raise ConfigError(f"command must be one of {COMMANDS}")
    return cfg


def _grid(cfg):
    g = cfg.get("grid")
    if g is None:
        raise ConfigError("missing 'grid' section")
    return make_polar_grid(float(g["radius"]), int(g["n_r"]), int(g["n_theta"]))


def _solve_config(cfg, section="solve") -> SolveConfig:
    s = cfg.get(section)
    if s is None:
        raise ConfigError(f"missing '{section}' section")
    return SolveConfig.from_json(s)


def _source(cfg) -> SourceSpec | None:
    s = cfg.get("source")
    return None if s is None else SourceSpec.from_json(s)


def _forcing(cfg, grid):
    src = _source(cfg)
    if src is None:
        return TensorField.zeros(grid)
    return forcing_on(src, grid)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _check_solution(sol) -> dict:
    """Invariant checks that turn into exit code 4 when violated."""
    ch = sol.checks()
    mu = np.asarray(sol.config.mu)
    failures = []
    if ch["mean_anchor_error"] > 1e-10 * (1 + np.max(np.abs(mu))):
        failures.append("mean anchor")
    if sol.grad_norm > sol.forcing_norm * (1 + 1e-8) + 1e-300:
        failures.append("a-priori bound")
    if sol.grad_norm ** 2 > sol.energy_pairing + 1e-8 * sol.forcing_norm ** 2:
        failures.append("energy inequality")
    if failures:
        raise InvariantViolation(f"solution violates: {', '.join(failures)} ({ch})")
    return ch


def cmd_solve(cfg, out: Path) -> dict:
    grid = _grid(cfg)
    sol = solve_disk(grid, _forcing(cfg, grid), _solve_config(cfg))
    _check_solution(sol)
    write_field_csv(out / "velocity.csv", sol.u)
    with open(out / "trace.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["lambda", "iteration", "residual", "grad_norm"])
        for t in sol.trace:
            wr.writerow([repr(t["lambda"]), t["iteration"], repr(t["residual"]),
                         repr(t["grad_norm"])])
    return {"grid": grid_metadata(grid), "config": sol.config.to_json(), **sol.summary()}


def cmd_invade(cfg, out: Path) -> dict:
    inv = cfg.get("invade") or {}
    src = _source(cfg)
    if src is None:
        src = SourceSpec("tensor-direct", "bump", (0.0, 0.0), 0.5, 0.0)
    workers = int(os.environ.get("PLANAR_LERAY_THREADS", "1") or 1)
    rep = run_invading(inv.get("radii", [4, 8, 16]), src, _solve_config(cfg),
                       float(inv.get("monitor_radius", 2.0)),
                       float(inv.get("points_per_unit", 8.0)), int(inv.get("n_theta", 64)),
                       workers=max(1, workers))
    rep.write_csv(out / "convergence.csv")
    for sol in rep.solutions:
        _check_solution(sol)
    if rep.final is not None:
        write_field_csv(out / "velocity_final.csv", rep.final.u)
    if not rep.complete:
        raise ConvergenceError(f"ladder incomplete: {rep.failures}", [])
    return rep.to_json()


def cmd_audit(cfg, out: Path) -> dict:
    grid = _grid(cfg)
    F = _forcing(cfg, grid)
    first = _solve_config(cfg)
    aud = cfg.get("audit") or {}
    overrides = dict(aud.get("second", {}))
    if "omega" in overrides:
        overrides["omega"] = RegionSpec.from_json(overrides["omega"])
    if "mu" in overrides:
        overrides["mu"] = tuple(overrides["mu"])
    second = replace(first, **overrides)
    a = solve_disk(grid, F, first)
    b = solve_disk(grid, F, second)
    rep = audit_pair(a, b, aud.get("u_inf"))
    print(rep.line())
    return {"grid": grid_metadata(grid), "first": first.to_json(),
            "second": second.to_json(), **rep.to_json()}


def cmd_constants(cfg, out: Path) -> dict:
    grid = _grid(cfg)
    c = cfg.get("constants") or {}
    anchor = RegionSpec.from_json(c.get("anchor", {"kind": "disk", "radius": grid.radius}))
    which = c.get("inequality", "both")
    fns = {"poincare": estimate_poincare_constant, "hardy": estimate_hardy_constant}
    names = list(fns) if which == "both" else [which]
    rows = []
    for name in names:
        if name not in fns:
            raise ConfigError(f"unknown inequality {name!r}")
        est = fns[name](grid, anchor, c.get("method", "sparse"))
        cert = certify_constant(est, grid, int(c.get("samples", 1000)), int(c.get("seed", 0)))
        if cert["violations"]:
            raise InvariantViolation(f"{name} constant violated on {cert['violations']} fields")
        rows.append({**est.to_json(), "certificate": cert})
    with open(out / "constants.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["inequality", "radius", "n_r", "n_theta", "value", "next_eigenvalue",
                     "samples", "violations"])
        for r in rows:
            wr.writerow([r["inequality"], repr(r["radius"]), r["n_r"], r["n_theta"],
                         repr(r["value"]), repr(r["next_eigenvalue"]),
                         r["certificate"]["samples"], r["certificate"]["violations"]])
    return {"grid": grid_metadata(grid), "constants": rows}


def cmd_lift(cfg, out: Path) -> dict:
    grid = _grid(cfg)
    src = _source(cfg)
    if src is None or src.kind != "vector-compact":
        raise ConfigError("lift needs a vector-compact source")
    lf = cfg.get("lift") or {}
    omega = RegionSpec.from_json(lf["omega"]) if "omega" in lf else None
    f = build_vector_source(src, grid)
    F = lift_vector_source(f, grid, omega)
    battery = solenoidal_test_battery(grid, int(lf.get("battery", 20)), int(lf.get("seed", 0)),
                                      omega)
    write_field_csv(out / "lifted_tensor.csv", F)
    return {"grid": grid_metadata(grid), "source": src.to_json(),
            "pairing_residual": pairing_residual(f, F, battery),
            "tensor_norm": tensor_edge_norm(F)}


COMMAND_TABLE = {"solve": cmd_solve, "invade": cmd_invade, "audit": cmd_audit,
                 "constants": cmd_constants, "lift": cmd_lift}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialise {type(x).__name__}")


def run(config_path, out_dir) -> int:
    """Execute one configured run; returns the process exit status."""
    out = Path(out_dir)
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    try:
        out.mkdir(parents=True, exist_ok=True)
        cfg = load_config(config_path)
        result = COMMAND_TABLE[cfg["command"]](cfg, out)
    except (ConfigError, HypothesisViolation, ZeroMeanError, KeyError, TypeError,
            ValueError) as exc:
        code, error = EXIT_CONFIG, exc
    except ConvergenceError as exc:
        code, error = EXIT_CONVERGENCE, exc
    except (InvariantViolation, AuditInconsistency) as exc:
        code, error = EXIT_INVARIANT, exc
    else:
        _write_json(out / "report.json", {"command": cfg["command"], "result": result})
        _write_json(out / "metadata.json", {"started": started, "version": __version__,
                                            "config": str(config_path)})
        return 0
    record = {"error": type(error).__name__, "message": str(error), "exit_code": code}
    if isinstance(error, HypothesisViolation):
        record["kind"] = "hypothesis-violation"
    try:
        _write_json(out / "error.json", record)
    except OSError:
        pass
    print(f"error: {error}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="planar-leray", description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--verbose", action="store_true", help="log solver progress")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return run(args.config, args.out)


if __name__ == "__main__":
    sys.exit(main())
