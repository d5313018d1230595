"""Command-line interface.

Usage::

    divswitch classify  [--config PATH] [--out DIR] [param overrides]
    divswitch solve     [...] [--grid-max X] [--grid-points N]
    divswitch simulate  [...] --seed U64 [--x0 X] [--regime I] [--n-paths N] [--dt DT]
    divswitch pde-check [...] [--n N]
    divswitch sweep     [...] --axis-a lambda:0.05:0.95:19 --axis-b g:0.5:6:12

A config file holds ``key = value`` lines (an optional ``[section]`` header
is ignored). Command-line flags override the file.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DivswitchError, InvalidPolicy, NonConvergence, ParamError
from .model import PARAM_NAMES, ModelParams, validate
from .montecarlo import (ThresholdPolicy, default_horizon, optimal_policy_from, richardson)
from .pde import compare, make_grid, solve_vi_system
from .solver import classify, hjb_residual, solve, witnesses

log = logging.getLogger("divswitch")

EXIT_OK, EXIT_PARAMS, EXIT_SOLVER, EXIT_SIMULATE, EXIT_PDE = 0, 2, 3, 4, 5
U64_MAX = 2 ** 64 - 1

# config key -> (type, default); None default means "required" or "derived"
OPTIONS = {
    "seed": (int, None),
    "grid_max": (float, None),
    "grid_points": (int, 401),
    "hjb_tol": (float, None),
    "x0": (float, 1.0),
    "regime": (int, 0),
    "n_paths": (int, 20000),
    "dt": (float, 0.05),
    "horizon": (float, None),
    "scheme": (str, "bridge"),
    "policy": (str, "optimal"),
    "b0": (float, None),
    "b1": (float, None),
    "s01": (float, math.inf),
    "s10": (float, -math.inf),
    "n": (int, 4000),
    "axis_a": (str, "lambda:0.05:0.95:19"),
    "axis_b": (str, "g:0.5:6.0:12"),
}
PARAM_DEFAULTS = {"mu0": 0.5, "mu1": 1.0, "sigma": 1.0, "rho": 0.25, "g": 2.0, "lambda_": 0.5}
PARAM_ALIASES = {"lambda": "lambda_", "lam": "lambda_"}


class ConfigError(DivswitchError, ValueError):
    pass


# ---------------------------------------------------------------------------
# config handling

def read_config(path: str | os.PathLike) -> dict[str, str]:
    """Flat key/value pairs from an INI-style file (section headers optional)."""
    text = Path(path).read_text()
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string("[__root__]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    out: dict[str, str] = {}
    for section in cp.sections():
        for key, val in cp.items(section):
            out[key.strip().replace("-", "_")] = val.strip().strip('"').strip("'")
    return out


def _parse_seed(value) -> int:
    seed = int(value)
    if not 0 <= seed <= U64_MAX:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {value}")
    return seed


def build_config(args: argparse.Namespace) -> dict:
    """Merge defaults, config file and flags into a typed config dict."""
    raw: dict[str, str] = {}
    if args.config:
        if not Path(args.config).is_file():
            raise ConfigError(f"config file not found: {args.config}")
        raw = read_config(args.config)
    params = dict(PARAM_DEFAULTS)
    opts = {k: d for k, (_, d) in OPTIONS.items()}
    for key, val in raw.items():
        key = PARAM_ALIASES.get(key, key)
        try:
            if key in params:
                params[key] = float(val)
            elif key == "seed":
                opts["seed"] = _parse_seed(val)
            elif key in OPTIONS:
                opts[key] = OPTIONS[key][0](val)
            elif key != "out":
                raise ConfigError(f"unknown config key {key!r}")
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad value for {key!r}: {val!r}") from exc
    for name in PARAM_NAMES:
        flag = getattr(args, name, None)
        if flag is not None:
            params[name] = flag
    for key in OPTIONS:
        flag = getattr(args, key, None)
        if flag is not None:
            opts[key] = _parse_seed(flag) if key == "seed" else flag
    out = args.out or raw.get("out") or "."
    return {"params": params, "options": opts, "out": out}


def _model(cfg: dict) -> ModelParams:
    p = cfg["params"]
    return validate(*(p[n] for n in PARAM_NAMES))


def _echo(cfg: dict, command: str, keys: tuple[str, ...]) -> dict:
    p = {("lambda" if k == "lambda_" else k): v for k, v in cfg["params"].items()}
    return {"command": command, "params": p,
            "options": {k: _jsonable(cfg["options"][k]) for k in keys}}


# ---------------------------------------------------------------------------
# output helpers

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: Path, payload: dict) -> None:
    _atomic_write(path, json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if v is None:
        return ""
    return "%.17g" % v


def write_csv(path: Path, header: list[str], rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    _atomic_write(path, buf.getvalue())


# ---------------------------------------------------------------------------
# commands

def _witness_report(params: ModelParams) -> dict:
    w = witnesses(params)
    ineq = [
        {"name": "vhat0(compensation) >= mu1/rho", "lhs": w["vhat0_at_compensation"],
         "rhs": w["mu1_over_rho"], "holds": w["vhat0_at_compensation"] >= w["mu1_over_rho"]},
        {"name": "mu1/rho <= mu0/rho + xhat1 + g - xhat0", "lhs": w["mu1_over_rho"],
         "rhs": w["mu0_over_rho"] + w["xhat1_plus_g_minus_xhat0"],
         "holds": w["mu1_over_rho"] <= w["mu0_over_rho"] + w["xhat1_plus_g_minus_xhat0"]},
    ]
    return {"witnesses": w, "inequalities": ineq}


def cmd_classify(cfg: dict) -> int:
    params = _model(cfg)
    rc = classify(params)
    subcase = solve(params).regime.subcase if rc.tag == "III" else None
    payload = {"config": _echo(cfg, "classify", ()), "case": rc.tag, "subcase": subcase,
               **_witness_report(params)}
    write_json(Path(cfg["out"]) / "result.json", payload)
    print(f"case {rc.tag}" + (f"-{subcase}" if subcase else ""))
    return EXIT_OK


def cmd_solve(cfg: dict) -> int:
    params = _model(cfg)
    opts = cfg["options"]
    sol = solve(params)
    tol = opts["hjb_tol"] or 1e-6 * (1.0 + params.mu1 / params.rho)
    report = hjb_residual(sol)
    top = opts["grid_max"] or sol.reference_top()
    x = np.linspace(0.0, top, max(int(opts["grid_points"]), 2))
    rows = zip(x, sol.value(0, x), sol.value(0, x, 1), sol.value(1, x), sol.value(1, x, 1),
               sol.region_labels(0, x), sol.region_labels(1, x))
    out = Path(cfg["out"])
    diag = dict(sol.diagnostics)
    payload = {
        "config": _echo(cfg, "solve", ("grid_max", "grid_points", "hjb_tol")),
        "case": sol.regime.tag, "subcase": sol.regime.subcase, "label": sol.case,
        "thresholds": sol.thresholds(),
        "segments": {"v0": sol.v0.to_dict(), "v1": sol.v1.to_dict()},
        "diagnostics": diag,
        "hjb_residual": report.to_dict(), "hjb_tol": tol, "hjb_ok": report.ok(tol),
        **_witness_report(params),
    }
    write_csv(out / "values.csv", ["x", "v0", "dv0", "v1", "dv1", "label0", "label1"], rows)
    write_json(out / "result.json", payload)
    if not report.ok(tol):
        print(f"error: HJB residual {report.max_residual:.3e} exceeds {tol:.3e}", file=sys.stderr)
        return EXIT_SOLVER
    print(f"case {sol.case}: residual {report.max_residual:.3e}")
    return EXIT_OK


def _policy(cfg: dict, sol) -> ThresholdPolicy:
    opts = cfg["options"]
    if opts["policy"] == "optimal":
        return optimal_policy_from(sol)
    if opts["policy"] != "threshold":
        raise ConfigError(f"policy must be 'optimal' or 'threshold', got {opts['policy']!r}")
    if opts["b0"] is None or opts["b1"] is None:
        raise ConfigError("a threshold policy needs b0 and b1")
    return ThresholdPolicy(opts["b0"], opts["b1"], opts["s01"], opts["s10"])


def cmd_simulate(cfg: dict) -> int:
    params = _model(cfg)
    opts = cfg["options"]
    sol = solve(params)
    policy = _policy(cfg, sol)
    if opts["seed"] is None:
        raise ConfigError("simulate needs a seed (--seed or 'seed' in the config)")
    horizon = opts["horizon"] or default_horizon(params)
    x0, i0 = opts["x0"], opts["regime"]
    try:
        res = richardson(params, policy, x0, i0, opts["n_paths"], opts["dt"], horizon,
                         opts["seed"], opts["scheme"])
    except (InvalidPolicy, ValueError) as exc:
        print(f"error: simulation failed: {exc}", file=sys.stderr)
        return EXIT_SIMULATE
    value = float(sol.value(i0, x0))
    payload = {
        "config": _echo(cfg, "simulate", ("seed", "x0", "regime", "n_paths", "dt", "horizon",
                                          "scheme", "policy", "b0", "b1", "s01", "s10")),
        "case": sol.case, "policy": policy.to_dict(), "value": value,
        **res.to_dict(), "tolerance": res.tolerance(),
        "dominates": res.dominates(value), "attains": res.attains(value),
    }
    write_json(Path(cfg["out"]) / "result.json", payload)
    e = res.estimate
    print(f"estimate {e.mean:.6f} +- {e.stderr:.6f} (value {value:.6f})")
    return EXIT_OK


def cmd_pde_check(cfg: dict) -> int:
    params = _model(cfg)
    opts = cfg["options"]
    sol = solve(params)
    grid = make_grid(params, opts["n"], cover=max(sol.finite_thresholds()))
    try:
        gsol = solve_vi_system(params, grid)
    except NonConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PDE
    rep = compare(gsol, sol)
    bound = 5.0 * grid.h * (1.0 + params.mu1 / params.rho)
    x = grid.x
    payload = {
        "config": _echo(cfg, "pde-check", ("n",)), "case": sol.case,
        "grid": {"x_max": grid.x_max, "n": grid.n, "h": grid.h, **grid.flags(params)},
        "solver": gsol.diagnostics, "report": rep.to_dict(), "error_bound": bound,
        "within_bound": rep.max_error <= bound,
    }
    out = Path(cfg["out"])
    sel = x <= rep.band
    rows = zip(x[sel], gsol.u0[sel], sol.value(0, x[sel]), gsol.u1[sel], sol.value(1, x[sel]),
               gsol.labels(0)[sel], gsol.labels(1)[sel])
    write_csv(out / "values.csv", ["x", "u0", "v0", "u1", "v1", "label0", "label1"], rows)
    write_json(out / "result.json", payload)
    if rep.max_error > bound:
        print(f"error: max error {rep.max_error:.3e} above bound {bound:.3e}", file=sys.stderr)
        return EXIT_PDE
    print(f"max error {rep.max_error:.3e} (bound {bound:.3e}), mask agreement "
          f"{rep.mask_agreement:.4f}")
    return EXIT_OK


def parse_axis(spec: str) -> tuple[str, np.ndarray]:
    """``name:lo:hi:n`` -> (parameter name, values)."""
    try:
        name, lo, hi, n = spec.split(":")
        name = PARAM_ALIASES.get(name, name)
        values = np.linspace(float(lo), float(hi), int(n))
    except ValueError as exc:
        raise ConfigError(f"axis must look like name:lo:hi:n, got {spec!r}") from exc
    if name not in PARAM_NAMES:
        raise ConfigError(f"unknown sweep parameter {name!r}")
    if int(n) < 1:
        raise ConfigError("axis needs at least one point")
    return name, values


def cmd_sweep(cfg: dict) -> int:
    base = cfg["params"]
    _model(cfg)
    name_a, va = parse_axis(cfg["options"]["axis_a"])
    name_b, vb = parse_axis(cfg["options"]["axis_b"])
    if name_a == name_b:
        raise ConfigError("sweep axes must be two different parameters")
    rows, counts = [], {}
    for a in va:
        for b in vb:
            p = dict(base, **{name_a: float(a), name_b: float(b)})
            x01 = aa = x1 = None
            try:
                sol = solve(validate(*(p[n] for n in PARAM_NAMES)))
                tag = sol.case
                x01 = sol.x01 if np.isfinite(sol.x01) else None
                aa, x1 = sol.a, sol.b1
            except ParamError:
                tag = "invalid"
            except DivswitchError as exc:
                log.warning("cell %s=%g %s=%g failed: %s", name_a, a, name_b, b, exc)
                tag = "failed"
            counts[tag] = counts.get(tag, 0) + 1
            rows.append((float(a), float(b), tag, x01, aa, x1))
    col = lambda n: "lambda" if n == "lambda_" else n  # noqa: E731
    out = Path(cfg["out"])
    write_csv(out / "regime_map.csv", [col(name_a), col(name_b), "case_tag", "x01", "a", "x1"],
              rows)
    write_json(out / "result.json", {
        "config": _echo(cfg, "sweep", ("axis_a", "axis_b")),
        "cells": len(rows), "counts": dict(sorted(counts.items()))})
    print(", ".join(f"{k}: {v}" for k, v in sorted(counts.items())))
    return EXIT_OK


COMMANDS = {"classify": cmd_classify, "solve": cmd_solve, "simulate": cmd_simulate,
            "pde-check": cmd_pde_check, "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value config file")
    common.add_argument("--out", metavar="DIR", help="output directory (default: .)")
    common.add_argument("--seed", metavar="U64", help="random seed (unsigned 64-bit)")
    for name in ("mu0", "mu1", "sigma", "rho", "g"):
        common.add_argument(f"--{name}", type=float)
    common.add_argument("--lambda", dest="lambda_", type=float, metavar="LAMBDA")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="divswitch", description="Dividend policy with a reversible technology switch.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("classify", parents=[common], help="regime classification and witnesses")
    p = sub.add_parser("solve", parents=[common], help="value functions and thresholds")
    p.add_argument("--grid-max", dest="grid_max", type=float)
    p.add_argument("--grid-points", dest="grid_points", type=int)
    p.add_argument("--hjb-tol", dest="hjb_tol", type=float)
    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo policy estimate")
    p.add_argument("--x0", type=float)
    p.add_argument("--regime", type=int, choices=(0, 1))
    p.add_argument("--n-paths", dest="n_paths", type=int)
    p.add_argument("--dt", type=float)
    p.add_argument("--horizon", type=float)
    p.add_argument("--scheme", choices=("bridge", "projection"))
    p.add_argument("--policy", choices=("optimal", "threshold"))
    for name in ("b0", "b1", "s01", "s10"):
        p.add_argument(f"--{name}", type=float)
    p = sub.add_parser("pde-check", parents=[common], help="finite-difference cross-check")
    p.add_argument("--n", type=int, help="grid intervals (default 4000)")
    p = sub.add_parser("sweep", parents=[common], help="regime map over two parameters")
    p.add_argument("--axis-a", dest="axis_a", metavar="NAME:LO:HI:N")
    p.add_argument("--axis-b", dest="axis_b", metavar="NAME:LO:HI:N")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
        return COMMANDS[args.command](cfg)
    except (ParamError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARAMS
    except InvalidPolicy as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SIMULATE
    except DivswitchError as exc:
        print(f"error: solver failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
