"""Pointwise evaluation of Λ₁ˢ, its localized variants and the nonlocal
Monge-Ampère residual for a lattice function with exterior data.

Each evaluation samples the line x + t z at t = k h, |k| <= K: samples inside Ω
come from multilinear interpolation of the lattice function, samples outside
from the exterior datum itself.
"""
from __future__ import annotations

from dataclasses import dataclass
from dataclasses import field as dc_field
from enum import Enum
from typing import Callable, Iterable, Optional, Sequence, Tuple

import numpy as np

from .geometry import DirectionSet, Domain, LineSample, clip_line, connected_component
from .kernel import Quadrature1D, TailModel, frac_lap_1d
from .lattice import Lattice, multilinear

__all__ = [
    "OperatorMode",
    "ExteriorData",
    "GridFunction",
    "sample_line",
    "directional_frac_lap",
    "lambda_1s",
    "lambda_ns",
    "monge_ampere_residual",
    "anisotropy_grid",
]


class OperatorMode(str, Enum):
    FULL = "full"
    LOCALIZED_UNION = "localized_union"
    LOCALIZED_COMPONENT = "localized_component"


@dataclass
class ExteriorData:
    """Bounded continuous datum g on ℝᴺ ∖ Ω (vectorized over ``(n, N)`` points)."""

    func: Callable[[np.ndarray], np.ndarray]
    bound: Optional[float] = None
    name: str = "g"

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        vals = np.asarray(self.func(pts), dtype=float).reshape(-1)
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"exterior datum {self.name!r} returned non-finite values")
        if self.bound is not None and np.any(np.abs(vals) > self.bound * (1 + 1e-12)):
            raise ValueError(f"exterior datum {self.name!r} exceeds its bound {self.bound}")
        return vals

    def negated(self) -> "ExteriorData":
        f = self.func
        return ExteriorData(lambda p: -np.asarray(f(p), dtype=float), self.bound, f"-{self.name}")


def as_exterior(g) -> ExteriorData:
    if isinstance(g, ExteriorData):
        return g
    if callable(g):
        return ExteriorData(g)
    c = float(g)
    return ExteriorData(lambda p: np.full(len(np.atleast_2d(p)), c), abs(c), f"constant:{c}")


@dataclass
class GridFunction:
    """Values at the lattice nodes of Ω plus ghost values of g on the box.

    ``field`` holds both, so that multilinear interpolation near ∂Ω blends
    interior values with the datum.
    """

    domain: Domain
    lattice: Lattice
    inside: np.ndarray = dc_field(repr=False)
    values: np.ndarray = dc_field(repr=False)
    field: np.ndarray = dc_field(repr=False)
    exterior: Optional[ExteriorData] = dc_field(default=None, repr=False)

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid function values must be finite")

    @classmethod
    def from_function(cls, domain, lattice, func, exterior=None):
        """Sample ``func`` at the nodes of Ω and ``exterior`` (or ``func``) elsewhere."""
        coords = lattice.coordinates()
        inside = domain.contains(coords)
        full = np.empty(len(coords))
        full[inside] = np.asarray(func(coords[inside]), dtype=float)
        other = exterior if exterior is not None else func
        full[~inside] = np.asarray(other(coords[~inside]), dtype=float)
        full = full.reshape(lattice.shape)
        inside = inside.reshape(lattice.shape)
        ext = as_exterior(exterior) if exterior is not None else ExteriorData(func)
        return cls(domain, lattice, inside, full[inside], full, ext)

    @property
    def nodes(self) -> np.ndarray:
        return self.lattice.coordinates()[self.inside.ravel()]

    @property
    def spacing(self) -> float:
        return self.lattice.spacing

    def interpolate(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return multilinear(self.field, self.lattice.to_index(pts))

    def __call__(self, points) -> np.ndarray:
        """Interpolated values inside Ω, exterior datum outside."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.empty(len(pts))
        inside = self.domain.contains(pts)
        if inside.any():
            out[inside] = self.interpolate(pts[inside])
        if (~inside).any():
            if self.exterior is None:
                raise ValueError("no exterior datum attached to this grid function")
            out[~inside] = self.exterior(pts[~inside])
        return out

    def negated(self) -> "GridFunction":
        ext = self.exterior.negated() if self.exterior is not None else None
        return GridFunction(self.domain, self.lattice, self.inside, -self.values, -self.field, ext)


def _line_values(u: GridFunction, g: ExteriorData, pts: np.ndarray, inside: np.ndarray):
    vals = np.empty(inside.shape)
    flat_pts = pts.reshape(-1, pts.shape[-1])
    flat_in = inside.ravel()
    out = vals.reshape(-1)
    if flat_in.any():
        out[flat_in] = u.interpolate(flat_pts[flat_in])
    if (~flat_in).any():
        out[~flat_in] = g(flat_pts[~flat_in])
    return vals


def sample_line(u: GridFunction, g: ExteriorData, x, z, quad: Quadrature1D) -> LineSample:
    """LineSample of ``t ↦ u(x + t z)`` over ``|t| <= R`` (R = quad radius)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    z = np.asarray(z, dtype=float).reshape(-1)
    K = quad.half_width
    t = quad.h * np.arange(-K, K + 1)
    pts = x[None, :] + t[:, None] * z[None, :]
    inside = u.domain.contains(pts)
    vals = _line_values(u, g, pts[None], inside[None])[0]
    return LineSample(x, z, quad.h, vals, inside, (float(t[0]), float(t[-1])))


def _decade_tail(values: np.ndarray, K: int) -> TailModel:
    dec = max(1, K // 10)
    return TailModel.constant(values[:dec].mean(), values[-dec:].mean())


def directional_frac_lap(
    u: GridFunction,
    g,
    x,
    z,
    mode: OperatorMode = OperatorMode.FULL,
    quad: Quadrature1D = None,
) -> float:
    """Discrete ∫ (u(x+tz) - u(x)) |t|^{-1-2s} dt at a single point.

    In full mode the far field beyond R is a constant tail equal to the mean
    of the samples over the outermost tenth of the window on each side.  The
    localized modes drop every sample outside Ω (union) or outside the chord
    through x (component), and add no far field.
    """
    mode = OperatorMode(mode)
    g = as_exterior(g)
    line = sample_line(u, g, x, z, quad)
    K = quad.half_width
    if mode is OperatorMode.FULL:
        return frac_lap_1d(line, K, quad, _decade_tail(line.values, K))
    if not line.inside_mask[K]:
        raise ValueError("localized operators need x inside the domain")
    if mode is OperatorMode.LOCALIZED_UNION:
        keep = line.inside_mask
    else:
        a, b = connected_component(clip_line(u.domain, line.base, line.direction), 0.0)
        keep = (line.t > a) & (line.t < b)
    return frac_lap_1d(line, K, quad, TailModel.none(), keep[K - 1 :: -1], keep[K + 1 :])


def _directional_batch(u, g, X, z, mode, quad, chunk=1024):
    """directional_frac_lap for many points; returns shape (n,)."""
    K = quad.half_width
    t = quad.h * np.arange(-K, K + 1)
    w = quad.weights
    out = np.empty(len(X))
    dec = max(1, K // 10)
    for start in range(0, len(X), chunk):
        xs = X[start : start + chunk]
        pts = xs[:, None, :] + t[None, :, None] * z[None, None, :]
        inside = u.domain.contains(pts.reshape(-1, pts.shape[-1])).reshape(pts.shape[:2])
        vals = _line_values(u, g, pts, inside)
        c = vals[:, K : K + 1]
        left = vals[:, K - 1 :: -1] - c
        right = vals[:, K + 1 :] - c
        if mode is OperatorMode.FULL:
            near = (left + right) @ w
            tail = (vals[:, :dec].mean(axis=1) + vals[:, -dec:].mean(axis=1) - 2 * c[:, 0])
            out[start : start + chunk] = near + quad.tail_mass * tail
            continue
        if not inside[:, K].all():
            raise ValueError("localized operators need x inside the domain")
        if mode is OperatorMode.LOCALIZED_UNION:
            keep = inside
        else:
            keep = np.zeros_like(inside)
            for i, x in enumerate(xs):
                a, b = connected_component(clip_line(u.domain, x, z), 0.0)
                keep[i] = (t > a) & (t < b)
        left = np.where(keep[:, K - 1 :: -1], left, 0.0)
        right = np.where(keep[:, K + 1 :], right, 0.0)
        out[start : start + chunk] = (left + right) @ w
    return out


def _directions(directions):
    if isinstance(directions, DirectionSet):
        return directions.directions
    return np.atleast_2d(np.asarray(directions, dtype=float))


def directional_table(u, g, X, directions, mode=OperatorMode.FULL, quad=None) -> np.ndarray:
    """Directional values for every point (rows) and direction (columns)."""
    g = as_exterior(g)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Z = _directions(directions)
    mode = OperatorMode(mode)
    return np.column_stack([_directional_batch(u, g, X, z, mode, quad) for z in Z])


def lambda_1s(u, g, x, directions, mode=OperatorMode.FULL, quad=None):
    """Infimum over the direction set of the directional operator.

    Returns ``(value, argmin_direction_index)``; for an ``(n, N)`` array of
    points both are arrays.  Ties go to the smallest direction index.
    """
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    table = directional_table(u, g, np.atleast_2d(X), directions, mode, quad)
    idx = np.argmin(table, axis=1)
    val = table[np.arange(len(table)), idx]
    if single:
        return float(val[0]), int(idx[0])
    return val, idx


def lambda_ns(u, g, x, directions, mode=OperatorMode.FULL, quad=None):
    """Supremum over directions (the s-concave operator)."""
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    table = directional_table(u, g, np.atleast_2d(X), directions, mode, quad)
    idx = np.argmax(table, axis=1)
    val = table[np.arange(len(table)), idx]
    if single:
        return float(val[0]), int(idx[0])
    return val, idx


def anisotropy_grid(a_max: float, angles: Sequence[float], n_scales: int = 9):
    """Pairs (a, θ) with a geometrically spaced in [1/a_max, a_max]."""
    if a_max < 1:
        raise ValueError("a_max must be at least 1")
    scales = np.geomspace(1.0 / a_max, a_max, 2 * n_scales - 1) if a_max > 1 else np.ones(1)
    return [(float(a), float(th)) for a in scales for th in angles]


def monge_ampere_weights(angles, a, theta, s, dim=2):
    """|A^{-1} z|^{-(N+2s)} for A = R(θ) diag(a, 1/a) R(-θ), z at ``angles``."""
    phi = np.asarray(angles) - theta
    norm = np.sqrt((np.cos(phi) / a) ** 2 + (a * np.sin(phi)) ** 2)
    return norm ** (-(dim + 2.0 * s))


def monge_ampere_residual(
    u,
    g,
    x,
    directions: DirectionSet,
    quad: Quadrature1D,
    a_max: float = 100.0,
    anisotropy: Optional[Iterable[Tuple[float, float]]] = None,
    table: Optional[np.ndarray] = None,
):
    """min over (a, θ) of Σ_z w_ang |A^{-1} z|^{-(N+2s)} D_z(x), N = 2.

    ``D_z`` is the directional operator; each half-circle direction stands for
    itself and its antipode (the integrand is even), so w_ang = 2π/M.
    Returns ``(value, sign)``, arrays when ``x`` holds several points.
    """
    if a_max < 1:
        raise ValueError("a_max must be at least 1")
    if directions.dim != 2:
        raise ValueError("the Monge-Ampère residual is implemented for N = 2")
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    if table is None:
        table = directional_table(u, g, np.atleast_2d(X), directions, OperatorMode.FULL, quad)
    angles = directions.angles
    pairs = list(anisotropy) if anisotropy is not None else anisotropy_grid(a_max, angles)
    w_ang = 2.0 * np.pi / len(angles)
    s = quad.order.s
    W = np.array([monge_ampere_weights(angles, a, th, s) for a, th in pairs]) * w_ang
    vals = (table @ W.T).min(axis=1)
    sign = np.sign(vals)
    if single:
        return float(vals[0]), float(sign[0])
    return vals, sign
