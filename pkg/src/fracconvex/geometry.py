"""Domains, direction sets and line clipping.

Signed distances follow the convention positive in Ω, negative outside.
Membership is strict (open sets).  All predicates are vectorized over an
``(n, N)`` array of points.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

__all__ = [
    "Domain",
    "Ball",
    "Ellipse",
    "Square",
    "Dumbbell",
    "DirectionSet",
    "LineSample",
    "clip_line",
    "connected_component",
    "domain_from_spec",
]

Interval = Tuple[float, float]


def _points(x, dim):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, dim) if x.size != dim else x[None, :]
    if x.shape[-1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got shape {x.shape}")
    return x


def _check_direction(z, dim):
    z = np.asarray(z, dtype=float).reshape(-1)
    if z.size != dim:
        raise ValueError(f"direction must have {dim} components")
    if abs(np.linalg.norm(z) - 1.0) > 1e-9:
        raise ValueError(f"direction {z} is not a unit vector")
    return z


def _merge(intervals: Sequence[Interval]) -> List[Interval]:
    out: List[Interval] = []
    for a, b in sorted(i for i in intervals if i[1] > i[0]):
        if out and a <= out[-1][1]:
            out[-1] = (out[-1][0], float(max(out[-1][1], b)))
        else:
            out.append((float(a), float(b)))
    return out


class Domain:
    """Base class for the analytic domains.

    Subclasses implement ``signed_distance`` and ``_chords`` (the raw
    parameter intervals of a line through the domain).
    """

    dim: int = 2
    strictly_convex: bool = False
    kind: str = "domain"

    def signed_distance(self, x) -> np.ndarray:
        raise NotImplementedError

    def contains(self, x) -> np.ndarray:
        return self.signed_distance(x) > 0

    @property
    def bounding_box(self) -> Tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def _chords(self, x: np.ndarray, z: np.ndarray) -> List[Interval]:
        raise NotImplementedError

    def clip_line(self, x, z) -> List[Interval]:
        return clip_line(self, x, z)

    def params(self) -> dict:
        raise NotImplementedError


def _ball_chord(center, radius, x, z) -> List[Interval]:
    d = x - center
    b = float(d @ z)
    c = float(d @ d) - radius**2
    disc = b * b - c
    if disc <= 0:
        return []
    r = np.sqrt(disc)
    return [(-b - r, -b + r)]


def _box_chord(lo, hi, x, z) -> List[Interval]:
    t0, t1 = -np.inf, np.inf
    for i in range(x.size):
        if z[i] == 0.0:
            if not (lo[i] < x[i] < hi[i]):
                return []
            continue
        a = (lo[i] - x[i]) / z[i]
        b = (hi[i] - x[i]) / z[i]
        t0, t1 = max(t0, min(a, b)), min(t1, max(a, b))
    return [(t0, t1)] if t1 > t0 else []


@dataclass(frozen=True)
class Ball(Domain):
    """Open ball; in one dimension, the interval (center - radius, center + radius)."""

    center: Tuple[float, ...] = (0.0, 0.0)
    radius: float = 1.0
    kind: str = field(default="ball", init=False)
    strictly_convex: bool = field(default=True, init=False)

    def __post_init__(self):
        c = tuple(float(v) for v in np.atleast_1d(self.center))
        object.__setattr__(self, "center", c)
        if not self.radius > 0:
            raise ValueError("radius must be positive")

    @property
    def dim(self) -> int:
        return len(self.center)

    def signed_distance(self, x):
        x = _points(x, self.dim)
        return self.radius - np.linalg.norm(x - np.asarray(self.center), axis=1)

    @property
    def bounding_box(self):
        c = np.asarray(self.center)
        return c - self.radius, c + self.radius

    def _chords(self, x, z):
        return _ball_chord(np.asarray(self.center), self.radius, x, z)

    def params(self):
        return {"kind": "ball", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Ellipse(Domain):
    center: Tuple[float, float] = (0.0, 0.0)
    semi_axes: Tuple[float, float] = (1.0, 0.5)
    kind: str = field(default="ellipse", init=False)
    strictly_convex: bool = field(default=True, init=False)
    dim: int = field(default=2, init=False)

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "semi_axes", tuple(float(v) for v in self.semi_axes))
        if min(self.semi_axes) <= 0:
            raise ValueError("semi-axes must be positive")

    def signed_distance(self, x):
        x = _points(x, 2) - np.asarray(self.center)
        a, b = self.semi_axes
        inside = (x[:, 0] / a) ** 2 + (x[:, 1] / b) ** 2 < 1.0
        # closest boundary point: dense angle scan of the first quadrant, then
        # a few Newton steps on the stationarity condition
        px, py = np.abs(x[:, 0]), np.abs(x[:, 1])
        grid = np.linspace(0.0, np.pi / 2, 513)
        th = np.empty(len(x))
        for i in range(0, len(x), 2048):
            sl = slice(i, i + 2048)
            d2 = (a * np.cos(grid)[None, :] - px[sl, None]) ** 2 + (
                b * np.sin(grid)[None, :] - py[sl, None]
            ) ** 2
            th[sl] = grid[np.argmin(d2, axis=1)]
        for _ in range(4):
            c, sn = np.cos(th), np.sin(th)
            g = (b * b - a * a) * sn * c + a * px * sn - b * py * c
            dg = (b * b - a * a) * (c * c - sn * sn) + a * px * c + b * py * sn
            step = np.where(np.abs(dg) > 1e-14, g / np.where(dg == 0, 1, dg), 0.0)
            th = np.clip(th - np.clip(step, -0.01, 0.01), 0.0, np.pi / 2)
        d = np.hypot(a * np.cos(th) - px, b * np.sin(th) - py)
        return np.where(inside, d, -d)

    @property
    def bounding_box(self):
        c = np.asarray(self.center)
        r = np.asarray(self.semi_axes)
        return c - r, c + r

    def _chords(self, x, z):
        scale = np.asarray(self.semi_axes)
        xs = (x - np.asarray(self.center)) / scale
        zs = z / scale
        n = np.linalg.norm(zs)
        return [(a / n, b / n) for a, b in _ball_chord(np.zeros(2), 1.0, xs, zs / n)]

    def params(self):
        return {"kind": "ellipse", "center": list(self.center), "semi_axes": list(self.semi_axes)}


@dataclass(frozen=True)
class Square(Domain):
    center: Tuple[float, float] = (0.0, 0.0)
    half_width: float = 1.0
    kind: str = field(default="square", init=False)
    dim: int = field(default=2, init=False)

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        if not self.half_width > 0:
            raise ValueError("half-width must be positive")

    def signed_distance(self, x):
        q = np.abs(_points(x, 2) - np.asarray(self.center)) - self.half_width
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(q.max(axis=1), 0.0)
        return -(outside + inside)

    @property
    def bounding_box(self):
        c = np.asarray(self.center)
        return c - self.half_width, c + self.half_width

    def _chords(self, x, z):
        c = np.asarray(self.center)
        return _box_chord(c - self.half_width, c + self.half_width, x, z)

    def params(self):
        return {"kind": "square", "center": list(self.center), "half_width": self.half_width}


@dataclass(frozen=True)
class Dumbbell(Domain):
    """Two balls joined by a rectangular neck along the first axis.

    Defaults: unit balls centred at (±1.5, 0) and a neck of half-height 0.2.
    """

    separation: float = 1.5
    radius: float = 1.0
    neck_half_height: float = 0.2
    kind: str = field(default="dumbbell", init=False)
    dim: int = field(default=2, init=False)

    def __post_init__(self):
        if not (0 < self.neck_half_height < self.radius):
            raise ValueError("neck half-height must lie in (0, radius)")

    @property
    def _centers(self):
        return np.array([[-self.separation, 0.0], [self.separation, 0.0]])

    def signed_distance(self, x):
        x = _points(x, 2)
        d = [self.radius - np.linalg.norm(x - c, axis=1) for c in self._centers]
        q = np.abs(x) - np.array([self.separation, self.neck_half_height])
        neck = -(np.linalg.norm(np.maximum(q, 0.0), axis=1) + np.minimum(q.max(axis=1), 0.0))
        return np.maximum.reduce([d[0], d[1], neck])

    @property
    def bounding_box(self):
        w = self.separation + self.radius
        return np.array([-w, -self.radius]), np.array([w, self.radius])

    def _chords(self, x, z):
        parts: List[Interval] = []
        for c in self._centers:
            parts += _ball_chord(c, self.radius, x, z)
        lo = np.array([-self.separation, -self.neck_half_height])
        parts += _box_chord(lo, -lo, x, z)
        return parts

    def params(self):
        return {
            "kind": "dumbbell",
            "separation": self.separation,
            "radius": self.radius,
            "neck_half_height": self.neck_half_height,
        }


def clip_line(domain: Domain, x, z) -> List[Interval]:
    """Ordered disjoint open intervals of ``{t : x + t z ∈ Ω}``.

    Returns an empty list when ``x`` lies outside the closure of Ω.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    z = _check_direction(z, domain.dim)
    if domain.signed_distance(x[None, :])[0] < -1e-12:
        return []
    return _merge(domain._chords(x, z))


def connected_component(intervals: Sequence[Interval], t: float = 0.0) -> Interval:
    """The interval of ``intervals`` containing the parameter ``t``."""
    for a, b in intervals:
        if a < t < b:
            return (a, b)
    raise ValueError(f"parameter {t} lies in none of the intervals {list(intervals)}")


@dataclass(frozen=True)
class DirectionSet:
    """Unit directions covering a half-sphere (antipodes removed).

    For ``dim == 2`` the directions are θ_k = kπ/M, k = 0..M-1.
    """

    dim: int = 2
    count: int = 64

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("only dimensions 1 and 2 are supported")
        if self.dim == 2 and self.count < 1:
            raise ValueError("need at least one direction")

    @property
    def directions(self) -> np.ndarray:
        if self.dim == 1:
            return np.ones((1, 1))
        th = np.pi * np.arange(self.count) / self.count
        return np.column_stack([np.cos(th), np.sin(th)])

    @property
    def angles(self) -> np.ndarray:
        if self.dim == 1:
            return np.zeros(1)
        return np.pi * np.arange(self.count) / self.count

    @property
    def angular_spacing(self) -> float:
        return np.pi / self.count if self.dim == 2 else np.pi

    def __len__(self):
        return 1 if self.dim == 1 else self.count


@dataclass
class LineSample:
    """Values of ``t ↦ u(x + t z)`` at ``t = t0 + k h``."""

    base: np.ndarray
    direction: np.ndarray
    h: float
    values: np.ndarray
    inside_mask: np.ndarray
    window: Tuple[float, float]

    @property
    def t(self) -> np.ndarray:
        return self.window[0] + self.h * np.arange(self.values.size)

    @property
    def points(self) -> np.ndarray:
        return self.base[None, :] + self.t[:, None] * self.direction[None, :]


def domain_from_spec(spec) -> Domain:
    """Build a domain from a CLI-style string or a parameter dict.

    Strings: ``ball:R``, ``ball:R:cx:cy``, ``interval:a:b``, ``ellipse:a:b``,
    ``square:w``, ``dumbbell`` or ``dumbbell:sep:radius:neck``.
    """
    if isinstance(spec, Domain):
        return spec
    if isinstance(spec, dict):
        p = dict(spec)
        kind = p.pop("kind")
        if kind == "interval":
            a, b = p["bounds"]
            return Ball(center=((a + b) / 2,), radius=(b - a) / 2)
        cls = {"ball": Ball, "ellipse": Ellipse, "square": Square, "dumbbell": Dumbbell}[kind]
        for key in ("center", "semi_axes"):
            if key in p:
                p[key] = tuple(p[key])
        return cls(**p)
    kind, *args = str(spec).split(":")
    vals = [float(a) for a in args]
    if kind == "ball":
        r = vals[0] if vals else 1.0
        center = tuple(vals[1:]) if len(vals) > 1 else (0.0, 0.0)
        return Ball(center=center, radius=r)
    if kind == "interval":
        a, b = vals if vals else (0.0, 1.0)
        return Ball(center=((a + b) / 2,), radius=(b - a) / 2)
    if kind == "ellipse":
        return Ellipse(semi_axes=tuple(vals[:2]) if vals else (1.0, 0.5))
    if kind == "square":
        return Square(half_width=vals[0] if vals else 1.0)
    if kind == "dumbbell":
        keys = ("separation", "radius", "neck_half_height")
        return Dumbbell(**dict(zip(keys, vals)))
    raise ValueError(f"unknown domain kind {kind!r}")
