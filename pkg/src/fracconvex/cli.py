"""Command-line front end.

Usage::

    fracconvex [--config FILE] [--set KEY=VALUE ...] [--out DIR] COMMAND [flags]

Commands: ``envelope``, ``operator-eval``, ``check-convexity``,
``dirichlet-1d``, ``scenario NAME``, ``list-scenarios``.  Every run writes a
``manifest.json`` whose ``config`` block can be passed back with ``--config``.

Exit status: 0 success, 1 a check failed, 2 configuration error, 3 the solver
did not converge.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import platform
import sys
import warnings
from pathlib import Path
from typing import Dict, Iterable, List, Optional

import numpy as np
import scipy

from . import __version__
from .dirichlet1d import SegmentProblem, check_s_convexity, random_segments, solve_segment
from .envelope import ConvergenceWarning, SolverConfig, s_concave_envelope, solve_envelope
from .geometry import DirectionSet, domain_from_spec
from .kernel import FractionalOrder, build_quadrature
from .lattice import Lattice
from .operator import GridFunction, OperatorMode, lambda_1s, monge_ampere_residual
from .scenarios import SCENARIOS, Check, Table, datum_from_spec, get_scenario, scenario_params

log = logging.getLogger("fracconvex")

CONFIG_DIR_ENV = "FRACCONVEX_CONFIG_DIR"
DEFAULT_CONFIG_NAME = "default.conf"

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NONCONVERGED = 0, 1, 2, 3

DEFAULTS: Dict[str, object] = {
    "seed": 42,
    "output.dir": "fracconvex-out",
    "problem.s": 0.5,
    "problem.domain": "ball:1.0",
    "problem.g": "constant:0.0",
    "problem.u": None,
    "problem.concave": False,
    "solver.spacing": 1 / 32,
    "solver.direction_count": 64,
    "solver.tolerance": None,
    "solver.residual_tolerance": None,
    "solver.max_sweeps": 20000,
    "solver.sweep_order": "jacobi",
    "solver.relaxation": 1.0,
    "solver.mode": "full",
    "solver.accelerator": "policy_iteration",
    "solver.max_policy_iterations": 100,
    "solver.line_spacing": None,
    "solver.truncation_radius": 2.0,
    "solver.workers": 1,
    "operator.mode": "full",
    "operator.points": None,
    "operator.count": 20,
    "operator.h": None,
    "operator.radius": 2.0,
    "operator.monge_ampere": False,
    "operator.a_max": 100.0,
    "segment.a": 0.0,
    "segment.b": 1.0,
    "segment.n": 128,
    "segment.reach": 4.0,
    "check.segments": 200,
    "check.n": 64,
}


class ConfigError(ValueError):
    pass


# ----------------------------------------------------------------- config


def _parse_value(text: str):
    text = text.strip()
    if text.lower() in ("none", "null", ""):
        return None
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_config_text(text: str) -> Dict[str, object]:
    """Parse ``key = value`` lines; ``[section]`` headers prefix later keys.

    Values are JSON when they parse as JSON, else plain strings.  ``#``
    starts a comment line.
    """
    out: Dict[str, object] = {}
    section = ""
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        key, sep, val = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key = key.strip()
        out[f"{section}.{key}" if section else key] = _parse_value(val)
    return out


def load_config(path) -> Dict[str, object]:
    """Read a key = value file or a JSON manifest (its ``config`` block)."""
    path = Path(path)
    if not path.exists():
        base = os.environ.get(CONFIG_DIR_ENV)
        if base and (Path(base) / path).exists():
            path = Path(base) / path
        else:
            raise ConfigError(f"config file {str(path)!r} not found")
    text = path.read_text()
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        data = data.get("config", data)
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return dict(data)
    return parse_config_text(text)


def default_config_file() -> Optional[Path]:
    base = os.environ.get(CONFIG_DIR_ENV)
    if base:
        p = Path(base) / DEFAULT_CONFIG_NAME
        if p.exists():
            return p
    return None


def resolve_config(file_values: Dict[str, object], overrides: Dict[str, object]) -> Dict[str, object]:
    cfg = dict(DEFAULTS)
    for src in (file_values, overrides):
        for key, val in src.items():
            if key not in cfg and not key.startswith("scenario.") and key != "command":
                raise ConfigError(f"unknown configuration key {key!r}")
            cfg[key] = val
    return cfg


def solver_config(cfg) -> SolverConfig:
    kwargs = {k.split(".", 1)[1]: v for k, v in cfg.items() if k.startswith("solver.")}
    try:
        return SolverConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _order(cfg) -> FractionalOrder:
    try:
        return FractionalOrder(float(cfg["problem.s"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _domain(cfg):
    try:
        return domain_from_spec(cfg["problem.domain"])
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"bad domain: {exc}") from None


def _datum(cfg, key="problem.g"):
    spec = cfg[key] if cfg.get(key) is not None else cfg["problem.g"]
    try:
        return datum_from_spec(spec, s=float(cfg["problem.s"]))
    except (TypeError, ValueError, SyntaxError) as exc:
        raise ConfigError(f"bad datum {spec!r}: {exc}") from None


# ----------------------------------------------------------------- output


def _fmt(v) -> str:
    return repr(float(v))


def write_table(path: Path, table: Table, echo: Dict[str, object]) -> None:
    """CSV with ``#`` comment lines echoing the parameters, then a header row."""
    with open(path, "w", newline="") as fh:
        for key in sorted(echo):
            fh.write(f"# {key} = {json.dumps(echo[key])}\n")
        w = csv.writer(fh)
        w.writerow(list(table.columns))
        for row in table.rows:
            w.writerow([_fmt(v) for v in row])


def write_plot(path: Path, table: Table) -> None:
    """Whitespace-separated columns, header as a ``#`` comment."""
    with open(path, "w") as fh:
        fh.write("# " + " ".join(table.columns) + "\n")
        for row in table.rows:
            fh.write(" ".join(_fmt(v) for v in row) + "\n")


def write_checks(path: Path, checks: Iterable[Check]) -> None:
    data = [c.to_dict() for c in checks]
    path.write_text(json.dumps({"passed": all(c["passed"] for c in data), "checks": data}, indent=2) + "\n")


def write_manifest(path: Path, cfg: Dict[str, object], extra: Dict[str, object]) -> None:
    manifest = {
        "config": cfg,
        "versions": {
            "fracconvex": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "seed": cfg["seed"],
    }
    manifest.update(extra)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------- commands


class Outcome:
    def __init__(self, checks=(), tables=None, plots=None, converged=True, summary=None):
        self.checks: List[Check] = list(checks)
        self.tables: Dict[str, Table] = tables or {}
        self.plots: Dict[str, Table] = plots or {}
        self.converged = converged
        self.summary = summary or {}


def cmd_envelope(cfg) -> Outcome:
    domain, order, g, sc = _domain(cfg), _order(cfg), _datum(cfg), solver_config(cfg)
    solve = s_concave_envelope if cfg["problem.concave"] else solve_envelope
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        res = solve(domain, g, order, sc)
    X, u = res.nodes, res.u.values
    ghost = res.u.field[~res.u.inside]
    lo, hi = float(ghost.min()), float(ghost.max())
    limit = sc.max_policy_iterations if sc.accelerator == "policy_iteration" else sc.max_sweeps
    cols = [f"x{i + 1}" for i in range(X.shape[1])]
    tab = Table(cols + ["u", "policy"], np.column_stack([X, u, res.policy]))
    hist = Table(["iteration", "change"], np.column_stack([np.arange(1, len(res.history) + 1), res.history]))
    checks = [
        Check("converged", res.converged, float(res.sweeps_used), float(limit), "iterations used"),
        Check("residual", res.residual <= res.residual_tolerance, res.residual, res.residual_tolerance),
        Check("bounds", bool(lo - 1e-12 <= u.min() and u.max() <= hi + 1e-12), float(u.max() - u.min()), hi - lo),
    ]
    return Outcome(
        checks,
        tables={"envelope": tab, "history": hist},
        plots={"envelope": Table(cols + ["u"], np.column_stack([X, u]))},
        converged=res.converged,
        summary={"residual": res.residual, "iterations": res.sweeps_used, "nodes": len(u)},
    )


def _eval_points(cfg, domain, rng) -> np.ndarray:
    pts = cfg["operator.points"]
    if pts is not None:
        arr = np.atleast_2d(np.asarray(pts, dtype=float))
        if arr.shape[1] != domain.dim:
            raise ConfigError("operator.points must be a list of points of the domain's dimension")
        return arr
    lo, hi = domain.bounding_box
    out = []
    while len(out) < int(cfg["operator.count"]):
        p = rng.uniform(lo, hi)
        if domain.signed_distance(p[None, :])[0] > 2.0 * float(cfg["solver.spacing"]):
            out.append(p)
    return np.array(out)


def cmd_operator_eval(cfg) -> Outcome:
    domain, order, g = _domain(cfg), _order(cfg), _datum(cfg)
    u_func = _datum(cfg, "problem.u")
    dx = float(cfg["solver.spacing"])
    radius = float(cfg["operator.radius"])
    lat = Lattice.covering(*domain.bounding_box, dx, radius + 2 * dx)
    u = GridFunction.from_function(domain, lat, u_func, g)
    rng = np.random.default_rng(int(cfg["seed"]))
    X = _eval_points(cfg, domain, rng)
    dirs = DirectionSet(domain.dim, int(cfg["solver.direction_count"]))
    quad = build_quadrature(order, float(cfg["operator.h"] or dx), radius)
    try:
        mode = OperatorMode(cfg["operator.mode"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    val, idx = lambda_1s(u, g, X, dirs, mode, quad)
    cols = [f"x{i + 1}" for i in range(X.shape[1])] + ["lambda_1s", "direction"]
    data = [X, val, idx]
    if cfg["operator.monge_ampere"]:
        if domain.dim != 2:
            raise ConfigError("the Monge-Ampere residual needs a planar domain")
        ma, _ = monge_ampere_residual(u, g, X, dirs, quad, a_max=float(cfg["operator.a_max"]))
        cols.append("monge_ampere")
        data.append(ma)
    tab = Table(cols, np.column_stack(data))
    return Outcome(tables={"operator": tab}, plots={"operator": tab}, summary={"min": float(val.min())})


def cmd_check_convexity(cfg) -> Outcome:
    domain, order = _domain(cfg), _order(cfg)
    u = _datum(cfg, "problem.u")
    n = int(cfg["check.n"])
    segs = random_segments(domain, count=int(cfg["check.segments"]), seed=int(cfg["seed"]), min_length=4.0 / (n + 1))
    rep = check_s_convexity(u, domain, order, segments=segs, n=n)
    X = domain.dim
    rows = []
    for (a, b), r in zip(segs, rep.reports):
        rows.append(list(a) + list(b) + [r.worst_violation, r.tolerance, float(r.holds)])
    cols = [f"x{i + 1}" for i in range(X)] + [f"y{i + 1}" for i in range(X)] + ["worst_violation", "tolerance", "holds"]
    tol = max((r.tolerance for r in rep.reports), default=0.0)
    return Outcome(
        [Check("s-convex", rep.holds, rep.worst_violation, tol, f"pass rate {rep.pass_rate:.3f}")],
        tables={"segments": Table(cols, rows)},
        summary={"pass_rate": rep.pass_rate},
    )


def cmd_dirichlet_1d(cfg) -> Outcome:
    order, g = _order(cfg), _datum(cfg)
    a, b = float(cfg["segment.a"]), float(cfg["segment.b"])
    if not b > a:
        raise ConfigError("segment.b must exceed segment.a")
    try:
        prob = SegmentProblem.from_function(g, [a], [b], order, n=int(cfg["segment.n"]), reach=float(cfg["segment.reach"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    v = solve_segment(prob)
    p = prob.point(prob.nodes)[:, 0]
    tab = Table(["t", "x", "v"], np.column_stack([prob.nodes, p, v]))
    return Outcome(tables={"solution": tab}, plots={"solution": Table(["x", "v"], np.column_stack([p, v]))}, summary={"v_min": float(v.min()), "v_max": float(v.max())})


def cmd_scenario(cfg) -> Outcome:
    name = cfg.get("scenario.name")
    if not name:
        raise ConfigError("no scenario name given")
    try:
        sc = get_scenario(name)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from None
    overrides = {k[len("scenario.") :]: v for k, v in cfg.items() if k.startswith("scenario.") and k != "scenario.name"}
    try:
        params = scenario_params(sc, overrides)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from None
    if "seed" in params and "scenario.seed" not in cfg:
        params["seed"] = int(cfg["seed"])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        out = sc.runner(params)
    return Outcome(out.checks, out.tables, out.plots, out.converged, out.summary)


def cmd_list_scenarios(cfg) -> Outcome:
    for sc in SCENARIOS.values():
        print(f"{sc.name:24s} {sc.description}")
        print(f"{'':24s} checks: {', '.join(sc.checks)}")
    return Outcome()


COMMANDS = {
    "envelope": cmd_envelope,
    "operator-eval": cmd_operator_eval,
    "check-convexity": cmd_check_convexity,
    "dirichlet-1d": cmd_dirichlet_1d,
    "scenario": cmd_scenario,
    "list-scenarios": cmd_list_scenarios,
}


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file or a previous manifest.json")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a configuration key")
    common.add_argument("--out", help="output directory (output.dir)")
    common.add_argument("--seed", type=int, help="random seed (seed)")
    common.add_argument("--s", type=float, help="fractional order (problem.s)")
    common.add_argument("--domain", help="domain spec, e.g. ball:1.0 or dumbbell (problem.domain)")
    common.add_argument("--g", help="exterior datum spec, e.g. constant:0.7 (problem.g)")
    common.add_argument("--u", help="function to evaluate or check (problem.u)")
    common.add_argument("--spacing", type=float, help="lattice spacing (solver.spacing)")
    common.add_argument("--directions", type=int, help="direction count (solver.direction_count)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="fracconvex", description="Fractional convex envelopes.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    e = sub.add_parser("envelope", parents=[common], help="compute the s-convex envelope")
    e.add_argument("--sweep-order", choices=["jacobi", "gauss_seidel_lexicographic"])
    e.add_argument("--accelerator", choices=["none", "policy_iteration"])
    e.add_argument("--concave", action="store_true", help="s-concave envelope instead")
    o = sub.add_parser("operator-eval", parents=[common], help="evaluate Λ₁ˢ at points")
    o.add_argument("--mode", choices=[m.value for m in OperatorMode])
    o.add_argument("--monge-ampere", action="store_true")
    sub.add_parser("check-convexity", parents=[common], help="test s-convexity on random chords")
    d = sub.add_parser("dirichlet-1d", parents=[common], help="solve the 1-D Dirichlet problem on [a, b]")
    d.add_argument("--a", type=float)
    d.add_argument("--b", type=float)
    d.add_argument("--n", type=int)
    sc = sub.add_parser("scenario", parents=[common], help="run a built-in scenario")
    sc.add_argument("name", nargs="?")
    sub.add_parser("list-scenarios", parents=[common], help="list built-in scenarios")
    return p


_FLAG_KEYS = {
    "out": "output.dir",
    "seed": "seed",
    "s": "problem.s",
    "domain": "problem.domain",
    "g": "problem.g",
    "u": "problem.u",
    "spacing": "solver.spacing",
    "directions": "solver.direction_count",
    "sweep_order": "solver.sweep_order",
    "accelerator": "solver.accelerator",
    "mode": "operator.mode",
    "a": "segment.a",
    "b": "segment.b",
    "n": "segment.n",
    "name": "scenario.name",
}


def _flag_overrides(args) -> Dict[str, object]:
    out: Dict[str, object] = {}
    for item in args.set:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        out[key.strip()] = _parse_value(val)
    for attr, key in _FLAG_KEYS.items():
        val = getattr(args, attr, None)
        if val is not None:
            out[key] = val
    if getattr(args, "concave", False):
        out["problem.concave"] = True
    if getattr(args, "monge_ampere", False):
        out["operator.monge_ampere"] = True
    return out


def run(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        path = args.config or default_config_file()
        file_values = load_config(path) if path else {}
        file_values.pop("command", None)
        cfg = resolve_config(file_values, _flag_overrides(args))
        cfg["command"] = args.command
        # scenario parameters live in the scenario; echo their resolved values
        if args.command == "scenario" and cfg.get("scenario.name"):
            try:
                cfg["scenario.name"] = get_scenario(cfg["scenario.name"]).name
            except KeyError as exc:
                raise ConfigError(str(exc.args[0])) from None
        outcome = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "list-scenarios":
        return EXIT_OK
    out_dir = Path(cfg["output.dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    echo = {k: v for k, v in cfg.items() if v is not None and k != "output.dir"}
    files = []
    for name, tab in outcome.tables.items():
        write_table(out_dir / f"{name}.csv", tab, echo)
        files.append(f"{name}.csv")
    for name, tab in outcome.plots.items():
        write_plot(out_dir / f"{name}.dat", tab)
        files.append(f"{name}.dat")
    write_checks(out_dir / "checks.json", outcome.checks)
    write_manifest(
        out_dir / "manifest.json",
        cfg,
        {"files": sorted(files + ["checks.json"]), "summary": outcome.summary, "converged": bool(outcome.converged)},
    )
    for c in outcome.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.value:.6g} (threshold {c.threshold:.6g})")
    if not outcome.converged:
        return EXIT_NONCONVERGED
    return EXIT_OK if all(c.passed for c in outcome.checks) else EXIT_CHECK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
