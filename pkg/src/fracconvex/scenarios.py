"""Built-in exterior data and the scenario library behind ``fracconvex scenario``.

Each scenario bundles a domain, a datum, an order and solver settings with a
list of named checks.  Running it returns tables, plot series and check
results; the CLI only serializes them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .dirichlet1d import SegmentProblem, check_s_convexity, is_s_convex_on_segment, solve_segment
from .envelope import SolverConfig, classical_convex_envelope_1d, solve_envelope
from .geometry import Ball, Domain, domain_from_spec
from .kernel import FractionalOrder, TailModel, build_quadrature, frac_lap_1d_all
from .operator import ExteriorData

__all__ = [
    "Check",
    "Table",
    "Scenario",
    "ScenarioOutcome",
    "datum_from_spec",
    "dyda_profile",
    "dyda_values",
    "SCENARIOS",
    "get_scenario",
    "run_scenario",
]


# ---------------------------------------------------------------- data


def _first(p) -> np.ndarray:
    return np.atleast_2d(np.asarray(p, dtype=float))[:, 0]


def dyda_profile(s: float, scale: float = 1.0) -> Callable[[np.ndarray], np.ndarray]:
    """t ↦ -(1 - (scale t)²)₊ˢ, evaluated on the first coordinate."""

    def f(p):
        t = scale * _first(p)
        return -np.maximum(1.0 - t * t, 0.0) ** s

    return f


def _bump_2_4(p):
    t = _first(p)
    return np.where((t > 2.0) & (t < 4.0), (t - 3.0) ** 2, 1.0)


def _ge_one_bump(center=1.5, half_width=0.5, height=1.0):
    def f(p):
        d = (_first(p) - center) / half_width
        return 1.0 + height * np.where(np.abs(d) < 1.0, (1.0 - d * d) ** 2, 0.0)

    return f


def _boundary_peak(y=(0.0, 0.2), radius=0.3):
    y = np.asarray(y, dtype=float)

    def f(p):
        p = np.atleast_2d(np.asarray(p, dtype=float))
        return np.maximum(0.0, 1.0 - np.linalg.norm(p - y, axis=1) / radius)

    return f


def _x1_radial(p):
    p = np.atleast_2d(np.asarray(p, dtype=float))
    r = np.linalg.norm(p, axis=1)
    return np.divide(p[:, 0], r, out=np.zeros_like(r), where=r > 0)


_EXPR_NAMES = {
    name: getattr(np, name)
    for name in ("abs", "sqrt", "exp", "log", "sin", "cos", "tan", "arctan2", "minimum", "maximum", "where", "pi", "tanh", "clip")
}


def _expression(expr: str):
    code = compile(expr, "<datum>", "eval")

    def f(p):
        p = np.atleast_2d(np.asarray(p, dtype=float))
        names = dict(_EXPR_NAMES)
        names.update(x=p, t=p[:, 0], x1=p[:, 0], r=np.linalg.norm(p, axis=1))
        if p.shape[1] > 1:
            names["x2"] = p[:, 1]
        out = eval(code, {"__builtins__": {}}, names)
        return np.broadcast_to(np.asarray(out, dtype=float), (len(p),)).copy()

    return f


def datum_from_spec(spec, s: Optional[float] = None) -> ExteriorData:
    """Exterior datum from a CLI-style string.

    Recognized forms: ``constant:c``, ``dyda_profile`` (uses the order ``s``),
    ``bump_2_4``, ``ge_one_bump[:center:half_width:height]``,
    ``boundary_peak[:y1:y2:radius]``, ``x1_radial`` and ``expr:<expression>``.
    Expressions see ``t``/``x1``, ``x2``, ``r = |x|`` and common numpy
    functions; they are evaluated without builtins.
    """
    if isinstance(spec, ExteriorData):
        return spec
    if isinstance(spec, (int, float)):
        spec = f"constant:{spec}"
    kind, _, rest = str(spec).partition(":")
    args = [float(a) for a in rest.split(":")] if rest and kind != "expr" else []
    if kind == "constant":
        c = args[0] if args else 0.0
        return ExteriorData(lambda p: np.full(len(np.atleast_2d(p)), c), abs(c), spec)
    if kind == "dyda_profile":
        if s is None and not args:
            raise ValueError("dyda_profile needs the order s")
        return ExteriorData(dyda_profile(args[0] if args else s), 1.0, spec)
    if kind == "bump_2_4":
        return ExteriorData(_bump_2_4, 1.0, spec)
    if kind == "ge_one_bump":
        return ExteriorData(_ge_one_bump(*args), None, spec)
    if kind == "boundary_peak":
        y = tuple(args[:2]) if len(args) >= 2 else (0.0, 0.2)
        r = args[2] if len(args) >= 3 else 0.3
        return ExteriorData(_boundary_peak(y, r), 1.0, spec)
    if kind == "x1_radial":
        return ExteriorData(_x1_radial, 1.0, spec)
    if kind == "expr":
        if not rest:
            raise ValueError("empty expression")
        return ExteriorData(_expression(rest), None, spec)
    raise ValueError(f"unknown datum {spec!r}")


# ------------------------------------------------------------- outcomes


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "value": float(self.value),
            "threshold": float(self.threshold),
            "detail": self.detail,
        }


@dataclass
class Table:
    """Column-named numeric table; ``rows`` has one column per name."""

    columns: Sequence[str]
    rows: np.ndarray
    units: Sequence[str] = ()

    def __post_init__(self):
        self.rows = np.atleast_2d(np.asarray(self.rows, dtype=float))
        if self.rows.shape[1] != len(self.columns):
            raise ValueError("column count mismatch")


@dataclass
class ScenarioOutcome:
    name: str
    checks: List[Check]
    tables: Dict[str, Table] = field(default_factory=dict)
    plots: Dict[str, Table] = field(default_factory=dict)
    summary: Dict[str, float] = field(default_factory=dict)
    converged: bool = True

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    runner: Callable[[dict], ScenarioOutcome]
    defaults: Dict[str, object]
    checks: Tuple[str, ...]


# --------------------------------------------------------------- runners


def dyda_values(s: float, h: float, scale: float = 1.0, radius: float = 8.0, limit: float = 0.9):
    """Normalized discrete Δ₁ˢ of the (rescaled) Dyda profile on |t| < limit/scale."""
    order = FractionalOrder(s)
    quad = build_quadrature(order, h, radius, normalized=True)
    half = 1.5 / scale
    m = int(math.ceil(half / h))
    t = h * np.arange(-m, m + 1)
    vals = dyda_profile(s, scale)(t[:, None])
    idx = np.nonzero(np.abs(t) < limit / scale)[0]
    out = frac_lap_1d_all(vals, quad, TailModel.zero(), indices=idx, t0=t[0])
    return t[idx], out


def _run_dyda(p) -> ScenarioOutcome:
    s, h = float(p["s"]), float(p["h"])
    t, vals = dyda_values(s, h)
    target = math.gamma(2 * s + 1)
    spread = (vals.max() - vals.min()) / abs(vals.mean())
    rel = np.abs(vals / target - 1.0).max()
    checks = [
        Check("constancy", spread <= p["spread_tol"], spread, p["spread_tol"], "relative spread on (-0.9, 0.9)"),
        Check("value", rel <= p["value_tol"], rel, p["value_tol"], f"max relative error against Gamma(2s+1) = {target:.6g}"),
    ]
    rows = []
    i0 = int(np.argmin(np.abs(t)))
    for ell in p["scales"]:
        ts, vs = dyda_values(s, h, scale=float(ell))
        ratio = vs[int(np.argmin(np.abs(ts)))] / vals[i0]
        err = abs(ratio / ell ** (2 * s) - 1.0)
        rows.append([ell, ratio, ell ** (2 * s)])
        checks.append(Check(f"scaling[{ell}]", err <= p["scaling_tol"], err, p["scaling_tol"], "ratio against ell^(2s)"))
    return ScenarioOutcome(
        "dyda",
        checks,
        tables={
            "values": Table(["t", "frac_lap", "target"], np.column_stack([t, vals, np.full_like(t, target)])),
            "scaling": Table(["ell", "ratio", "ell_pow_2s"], rows),
        },
        plots={"values": Table(["t", "frac_lap"], np.column_stack([t, vals]))},
        summary={"mean": float(vals.mean()), "target": target},
    )


def _midpoint_gap(g, s, n, x=-1.0, y=1.0, reach=4.0):
    prob = SegmentProblem.from_function(g, [x], [y], FractionalOrder(s), n=n, reach=reach)
    v = solve_segment(prob)
    return prob, v


def _stable(a: float, b: float, tol: float) -> Tuple[bool, float]:
    rel = abs(a - b) / max(abs(a), abs(b))
    return rel <= tol and min(a, b) > 0, rel


def _run_bump(p) -> ScenarioOutcome:
    s = float(p["s"])
    g = datum_from_spec("bump_2_4")
    gaps, plots, rows = [], {}, []
    # node spacing h on [-1, 1], a segment of length 2
    for h in p["hs"]:
        n = int(round(2.0 / h)) - 1
        prob, v = _midpoint_gap(g, s, n)
        mid = v[n // 2]
        gaps.append(1.0 - mid)
        rows.append([h, mid, 1.0 - mid])
        plots[f"v_h{n + 1}"] = Table(["t", "v"], np.column_stack([prob.point(prob.nodes)[:, 0], v]))
    ok, rel = _stable(gaps[0], gaps[-1], p["stability_tol"])
    rep = is_s_convex_on_segment(g, [-1.0], [1.0], FractionalOrder(s), n=int(round(2.0 / p["hs"][-1])) - 1)
    checks = [
        Check("v(midpoint) < 1", all(gp > 0 for gp in gaps), min(gaps), 0.0, "gap 1 - v(0) at the finest h"),
        Check("gap stable", ok, rel, p["stability_tol"], "relative change of the gap across h"),
        Check("not s-convex", not rep.holds, rep.worst_violation, rep.tolerance, "checker on u = 1 over [-1, 1]"),
    ]
    return ScenarioOutcome(
        "bump_not_sconvex",
        checks,
        tables={"midpoint": Table(["h", "v_mid", "gap"], rows)},
        plots=plots,
        summary={"gap": gaps[-1]},
    )


def _envelope_1d(g, s, spacing):
    cfg = SolverConfig(spacing=spacing, direction_count=8)
    return solve_envelope(domain_from_spec("interval:0:1"), g, FractionalOrder(s), cfg)


def _max_tol(report) -> float:
    return max((r.tolerance for r in report.reports), default=0.0)


def _run_sconvex_not_convex(p) -> ScenarioOutcome:
    s = float(p["s"])
    g = datum_from_spec(p["datum"])
    lifts, rows, plots = [], [], {}
    converged = True
    res = None
    for dx in p["spacings"]:
        res = _envelope_1d(g, s, dx)
        converged &= res.converged
        t = res.nodes[:, 0]
        u = res.u.values
        mid = float(u[np.argmin(np.abs(t - 0.5))])
        lifts.append(mid - 1.0)
        rows.append([dx, mid, u[0], u[-1]])
        plots[f"u_dx{int(round(1 / dx))}"] = Table(["t", "u"], np.column_stack([t, u]))
    t, u = res.nodes[:, 0], res.u.values
    hull = classical_convex_envelope_1d(t, u, boundary=((0.0, 1.0), (1.0, 1.0)))
    ok, rel = _stable(lifts[0], lifts[-1], p["stability_tol"])
    mid_gap = float(u[np.argmin(np.abs(t - 0.5))] - 0.5 * (u[0] + u[-1]))
    chk = check_s_convexity(res.u, domain_from_spec("interval:0:1"), FractionalOrder(s), count=p["segments"], seed=p["seed"])
    checks = [
        Check("u(1/2) > 1", min(lifts) > 0, min(lifts), 0.0, "u(1/2) - 1 at every spacing"),
        Check("lift stable", ok, rel, p["stability_tol"], "relative change of u(1/2) - 1 across spacings"),
        Check("classical envelope = 1", np.abs(hull - 1.0).max() <= 1e-12, np.abs(hull - 1.0).max(), 1e-12),
        Check("midpoint convexity fails", mid_gap > 0, mid_gap, 0.0, "u(1/2) - (u(0+) + u(1-))/2"),
        Check("s-convex", chk.holds, chk.worst_violation, _max_tol(chk), f"pass rate {chk.pass_rate:.3f}"),
    ]
    plots["classical_hull"] = Table(["t", "hull"], np.column_stack([t, hull]))
    return ScenarioOutcome(
        "sconvex_not_convex",
        checks,
        tables={"midpoint": Table(["spacing", "u_mid", "u_first", "u_last"], rows)},
        plots=plots,
        summary={"lift": lifts[-1]},
        converged=bool(converged),
    )


def _run_convex(p) -> ScenarioOutcome:
    s = float(p["s"])
    domain = domain_from_spec(p["domain"])
    u = datum_from_spec(p["datum"])
    rep = check_s_convexity(u, domain, FractionalOrder(s), count=p["segments"], seed=p["seed"], tail="analytic")
    worst = np.array([[r.worst_violation, r.tolerance] for r in rep.reports])
    return ScenarioOutcome(
        "convex_implies_sconvex",
        [Check("s-convex", rep.holds, rep.worst_violation, _max_tol(rep), f"pass rate {rep.pass_rate:.3f}")],
        tables={"segments": Table(["worst_violation", "tolerance"], worst)},
        summary={"pass_rate": rep.pass_rate},
    )


def _envelope_cfg(p, spacing) -> SolverConfig:
    return SolverConfig(spacing=spacing, direction_count=int(p["direction_count"]))


def boundary_error(result, g, spacing: float, band: float = 2.0) -> float:
    """max |u - g| over interior nodes within ``band * spacing`` of ∂Ω."""
    X = result.nodes
    near = result.u.domain.signed_distance(X) <= band * spacing
    return float(np.abs(result.u.values[near] - g(X[near])).max())


def _run_attainment(p) -> ScenarioOutcome:
    s = float(p["s"])
    domain = domain_from_spec(p["domain"])
    g = datum_from_spec(p["datum"])
    errs, rows, converged = [], [], True
    for dx in p["spacings"]:
        res = solve_envelope(domain, g, FractionalOrder(s), _envelope_cfg(p, dx))
        converged &= res.converged
        errs.append(boundary_error(res, g, dx))
        rows.append([dx, errs[-1], res.residual])
    dec = all(b < a for a, b in zip(errs, errs[1:]))
    return ScenarioOutcome(
        "boundary_attainment",
        [Check("boundary error decreases", dec, errs[-1], errs[0], "max |u - g| within 2 dx of the boundary")],
        tables={"boundary_error": Table(["spacing", "max_error", "residual"], rows)},
        plots={"boundary_error": Table(["spacing", "max_error"], np.array(rows)[:, :2])},
        summary={"finest_error": errs[-1]},
        converged=bool(converged),
    )


def _run_dumbbell(p) -> ScenarioOutcome:
    s = float(p["s"])
    domain = domain_from_spec(p["domain"])
    g = datum_from_spec(p["datum"])
    dx = float(p["spacing"])
    res = solve_envelope(domain, g, FractionalOrder(s), _envelope_cfg(p, dx))
    y = np.asarray(p["peak"], dtype=float)
    X = res.nodes
    near = np.linalg.norm(X - y, axis=1) <= 2.0 * dx
    top = float(res.u.values[near].max()) if near.any() else float("nan")
    checks = [Check("u near y <= 0.5", bool(near.any() and top <= p["threshold"]), top, p["threshold"], "max u within 2 dx of y; g(y) = 1")]
    return ScenarioOutcome(
        "dumbbell_loss",
        checks,
        tables={"envelope": Table(["x1", "x2", "u"], np.column_stack([X, res.u.values]))},
        plots={"envelope": Table(["x1", "x2", "u"], np.column_stack([X, res.u.values]))},
        summary={"max_near_peak": top, "residual": res.residual},
        converged=res.converged,
    )


def _run_constant(p) -> ScenarioOutcome:
    s = float(p["s"])
    domain = domain_from_spec(p["domain"])
    g = datum_from_spec(p["datum"])
    res = solve_envelope(domain, g, FractionalOrder(s), _envelope_cfg(p, float(p["spacing"])))
    c = float(g(res.nodes[:1])[0])
    dev = float(np.abs(res.u.values - c).max())
    return ScenarioOutcome(
        "constant_envelope",
        [
            Check("envelope = constant", dev <= 1e-10, dev, 1e-10),
            Check("residual", res.residual <= 1e-10, res.residual, 1e-10),
        ],
        tables={"envelope": Table(["x1", "x2", "u"], np.column_stack([res.nodes, res.u.values]))},
        summary={"residual": res.residual},
        converged=res.converged,
    )


SCENARIOS: Dict[str, Scenario] = {
    sc.name: sc
    for sc in [
        Scenario(
            "dyda",
            "Fractional Laplacian of -(1-t^2)_+^s is constant and equals Gamma(2s+1); rescaling multiplies it by ell^(2s)",
            _run_dyda,
            {"s": 0.5, "h": 1 / 512, "spread_tol": 0.02, "value_tol": 0.02, "scales": [0.5, 0.25], "scaling_tol": 0.03},
            ("constancy", "value", "scaling"),
        ),
        Scenario(
            "bump_not_sconvex",
            "u = 1 on [-1, 1] is convex but lies above the fractional solution with the bump exterior datum",
            _run_bump,
            {"s": 0.5, "hs": [1 / 256, 1 / 512], "stability_tol": 0.2},
            ("v(midpoint) < 1", "gap stable", "not s-convex"),
        ),
        Scenario(
            "sconvex_not_convex",
            "1-D envelope on (0, 1) of a datum >= 1 with a bump at 1.5 exceeds 1 inside: s-convex but not convex",
            _run_sconvex_not_convex,
            {"s": 0.5, "datum": "ge_one_bump", "spacings": [1 / 256, 1 / 512], "stability_tol": 0.2, "segments": 50, "seed": 42},
            ("u(1/2) > 1", "lift stable", "classical envelope = 1", "midpoint convexity fails", "s-convex"),
        ),
        Scenario(
            "convex_implies_sconvex",
            "A convex function is s-convex for s > 1/2 on random chords of the disk",
            _run_convex,
            {"s": 0.75, "domain": "ball:1.0", "datum": "expr:sqrt(1 + r**2)", "segments": 200, "seed": 42},
            ("s-convex",),
        ),
        Scenario(
            "boundary_attainment",
            "On the disk the envelope attains a continuous datum: the boundary error decreases under refinement",
            _run_attainment,
            {"s": 0.5, "domain": "ball:1.0", "datum": "x1_radial", "spacings": [1 / 16, 1 / 32], "direction_count": 64},
            ("boundary error decreases",),
        ),
        Scenario(
            "dumbbell_loss",
            "On the dumbbell a boundary peak of the datum is not attained by the envelope",
            _run_dumbbell,
            {
                "s": 0.5,
                "domain": "dumbbell",
                "datum": "boundary_peak:0:0.2:0.3",
                "peak": [0.0, 0.2],
                "spacing": 1 / 32,
                "direction_count": 64,
                "threshold": 0.5,
            },
            ("u near y <= 0.5",),
        ),
        Scenario(
            "constant_envelope",
            "The envelope of a constant datum is that constant",
            _run_constant,
            {"s": 0.5, "domain": "ball:1.0", "datum": "constant:0.7", "spacing": 1 / 16, "direction_count": 64},
            ("envelope = constant", "residual"),
        ),
    ]
}


def get_scenario(name: str) -> Scenario:
    try:
        return SCENARIOS[name]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; known: {', '.join(SCENARIOS)}") from None


def scenario_params(scenario: Scenario, overrides: Optional[dict] = None) -> dict:
    """Defaults merged with ``overrides``; unknown keys are rejected."""
    params = dict(scenario.defaults)
    for key, val in (overrides or {}).items():
        if key not in params:
            raise KeyError(f"scenario {scenario.name!r} has no parameter {key!r}")
        params[key] = val
    return params


def run_scenario(name_or_scenario, overrides: Optional[dict] = None) -> ScenarioOutcome:
    sc = get_scenario(name_or_scenario) if isinstance(name_or_scenario, str) else name_or_scenario
    return sc.runner(scenario_params(sc, overrides))
