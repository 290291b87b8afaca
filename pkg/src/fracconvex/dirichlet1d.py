"""The one-dimensional fractional Dirichlet problem and the s-convexity check.

A segment [x, y] is parametrized as p(t) = x + t (y - x), t ∈ (0, 1).  The
problem Δ₁ˢ v = 0 on (0, 1), v = g outside, is discretized with the monotone
quadrature of :mod:`fracconvex.kernel` on the nodes t_k = k h, h = 1/(n+1),
which gives a symmetric Toeplitz M-matrix system for the interior values.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg
from scipy.sparse.linalg import LinearOperator, cg

from .geometry import Domain, clip_line
from .kernel import FractionalOrder, Quadrature1D, TailModel, build_quadrature

__all__ = [
    "SegmentProblem",
    "SegmentReport",
    "ConvexityReport",
    "solve_segment",
    "is_s_convex_on_segment",
    "check_s_convexity",
    "random_segments",
]

log = logging.getLogger(__name__)

DENSE_LIMIT = 2048


@dataclass
class SegmentProblem:
    """Δ₁ˢ v = 0 on (0, 1) with exterior data ``exterior(t)``.

    Parameters
    ----------
    x, y : array_like
        Segment endpoints (only used for geometry checks and reporting).
    order : FractionalOrder
    exterior : callable
        Vectorized function of the segment parameter, evaluated on the
        exterior nodes of the window [-R, 1 + R].
    n : int
        Number of interior nodes.
    truncation_radius : float
        Window half-width R in segment-parameter units; must be at least 1.
    tail : TailModel, optional
        Far field beyond R.  Defaults to a constant tail equal to the mean of
        the exterior data over the outermost tenth of the window on each side.
    domain : Domain, optional
        When given, the segment must lie in it.
    """

    x: np.ndarray
    y: np.ndarray
    order: FractionalOrder
    exterior: Callable[[np.ndarray], np.ndarray]
    n: int = 128
    truncation_radius: float = 4.0
    tail: Optional[TailModel] = None
    domain: Optional[Domain] = None

    def __post_init__(self):
        self.x = np.atleast_1d(np.asarray(self.x, dtype=float))
        self.y = np.atleast_1d(np.asarray(self.y, dtype=float))
        if self.n < 1:
            raise ValueError("need at least one interior node")
        if self.truncation_radius < 1.0:
            raise ValueError("truncation radius must cover the segment (R >= 1)")
        if self.domain is not None and not segment_inside(self.domain, self.x, self.y):
            raise ValueError("segment is not contained in the domain")

    @property
    def h(self) -> float:
        return 1.0 / (self.n + 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.h * np.arange(1, self.n + 1)

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.y - self.x))

    def point(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return self.x[None, :] + t.reshape(-1, 1) * (self.y - self.x)[None, :]

    @classmethod
    def from_function(
        cls,
        u: Callable[[np.ndarray], np.ndarray],
        x,
        y,
        order: FractionalOrder,
        n: int = 128,
        reach: float = 4.0,
        **kwargs,
    ) -> "SegmentProblem":
        """Problem whose exterior data is ``u`` restricted to the line through x, y.

        ``reach`` is the window half-width in the units of the points; it is
        converted to segment-parameter units (at least 1).
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        length = float(np.linalg.norm(y - x))
        if length == 0:
            raise ValueError("degenerate segment")
        R = max(1.0, reach / length)

        def ext(t):
            pts = x[None, :] + np.asarray(t, dtype=float).reshape(-1, 1) * (y - x)[None, :]
            return np.asarray(u(pts), dtype=float).reshape(-1)

        return cls(x, y, order, ext, n=n, truncation_radius=R, **kwargs)


def segment_inside(domain: Domain, x, y) -> bool:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = y - x
    length = np.linalg.norm(d)
    if length == 0:
        return bool(domain.contains(x[None, :])[0])
    for a, b in clip_line(domain, x, d / length):
        if a < 1e-12 and b > length - 1e-12:
            return True
    return False


@dataclass
class _Assembled:
    quad: Quadrature1D
    diag: float
    column: np.ndarray
    rhs: np.ndarray
    ext_lo: float
    ext_hi: float


def _assemble(problem: SegmentProblem) -> _Assembled:
    n, h = problem.n, problem.h
    quad = build_quadrature(problem.order, h, problem.truncation_radius)
    K = quad.half_width
    k = np.arange(-K, n + K + 2)
    t = k * h
    ext_mask = (k <= 0) | (k >= n + 1)
    g = np.zeros(k.size)
    g[ext_mask] = problem.exterior(t[ext_mask])
    if not np.all(np.isfinite(g)):
        raise ValueError("exterior data must be finite on the sampled window")
    tail = problem.tail
    if tail is None:
        dec = max(1, K // 10)
        tail = TailModel.constant(g[:dec].mean(), g[-dec:].mean())
    # exterior part of the near field, for every window node
    conv = np.convolve(g, quad.stencil, mode="same")
    interior = np.arange(K + 1, K + 1 + n)
    far0 = tail.far_field_many(t[interior], 0.0, problem.order, quad.truncation_radius)
    rhs = conv[interior] + far0
    W = quad.weights.sum()
    diag = 2.0 * W + 2.0 * quad.tail_mass
    column = np.zeros(n)
    m = min(n - 1, K)
    column[1 : m + 1] = -quad.weights[:m]
    column[0] = diag
    samples = g[ext_mask]
    lo, hi = samples.min(), samples.max()
    if tail.kind == "constant":
        lo, hi = min(lo, tail.left, tail.right), max(hi, tail.left, tail.right)
    return _Assembled(quad, diag, column, rhs, float(lo), float(hi))


def solve_segment(problem: SegmentProblem) -> np.ndarray:
    """Interior values v(t_k), k = 1..n, of the discrete Dirichlet problem.

    The system matrix is a symmetric positive definite Toeplitz M-matrix;
    it is factorized directly up to ``DENSE_LIMIT`` nodes and solved by
    Jacobi-preconditioned conjugate gradients above.
    """
    a = _assemble(problem)
    n = problem.n
    if n <= DENSE_LIMIT:
        v = linalg.solve(linalg.toeplitz(a.column), a.rhs, assume_a="pos")
    else:
        first = a.column

        def matvec(x):
            return linalg.matmul_toeplitz(first, x)

        op = LinearOperator((n, n), matvec=matvec, dtype=float)
        pre = LinearOperator((n, n), matvec=lambda x: x / a.diag, dtype=float)
        v, info = cg(op, a.rhs, rtol=1e-13, atol=0.0, M=pre, maxiter=20 * n)
        if info != 0:
            log.warning("conjugate gradients stopped after %d iterations", info)
    if not np.all(np.isfinite(v)):
        raise FloatingPointError("segment solve produced non-finite values")
    return v


@dataclass
class SegmentReport:
    holds: bool
    worst_violation: float
    location: np.ndarray
    tolerance: float
    t: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)


def is_s_convex_on_segment(
    u: Callable[[np.ndarray], np.ndarray],
    x,
    y,
    order: FractionalOrder,
    n: int = 64,
    reach: float = 4.0,
    tol: Optional[float] = None,
    tail=None,
) -> SegmentReport:
    """Compare u with the fractional Dirichlet solution on [x, y].

    ``u`` is evaluated on the whole line (points of shape ``(m, N)``).  The
    comparison tolerance defaults to ``10 h^{2-2s} osc(u)`` over the window,
    floored at 1e-12 relative to the data size.
    ``tail="analytic"`` integrates ``u`` itself beyond the window, which is
    needed for unbounded data such as convex functions.
    """
    if isinstance(tail, str):
        if tail != "analytic":
            raise ValueError(f"unknown tail {tail!r}")
        x_ = np.atleast_1d(np.asarray(x, dtype=float))
        d_ = np.atleast_1d(np.asarray(y, dtype=float)) - x_
        tail = TailModel.analytic(
            lambda t: np.asarray(
                u(x_[None, :] + np.asarray(t, dtype=float).reshape(-1, 1) * d_[None, :]), dtype=float
            ).reshape(np.shape(t))
        )
    problem = SegmentProblem.from_function(u, x, y, order, n=n, reach=reach, tail=tail)
    a = _assemble(problem)
    v = solve_segment(problem)
    t = problem.nodes
    uk = np.asarray(u(problem.point(t)), dtype=float).reshape(-1)
    if tol is None:
        osc = max(a.ext_hi, uk.max()) - min(a.ext_lo, uk.min())
        scale = max(1.0, float(np.abs(uk).max()), abs(a.ext_lo), abs(a.ext_hi))
        # the floor absorbs rounding when the data are constant
        tol = max(10.0 * problem.h ** (2.0 - 2.0 * order.s) * osc, 1e-12 * scale)
    gap = uk - v
    i = int(np.argmax(gap))
    worst = max(float(gap[i]), 0.0)
    return SegmentReport(
        holds=bool(worst <= tol),
        worst_violation=worst,
        location=problem.point(t[i])[0],
        tolerance=float(tol),
        t=t,
        u=uk,
        v=v,
    )


@dataclass
class ConvexityReport:
    holds: bool
    pass_rate: float
    worst_violation: float
    worst_segment: Optional[Tuple[np.ndarray, np.ndarray]]
    reports: List[SegmentReport] = field(repr=False, default_factory=list)


def random_segments(
    domain: Domain, count: int = 200, seed: int = 42, min_length: float = 0.05
) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Random chords [x, y] ⊂ Ω with |x - y| >= ``min_length``."""
    rng = np.random.default_rng(seed)
    lo, hi = domain.bounding_box
    out = []
    while len(out) < count:
        p = rng.uniform(lo, hi)
        if not domain.contains(p[None, :])[0]:
            continue
        if domain.dim == 1:
            z = np.ones(1)
        else:
            th = rng.uniform(0, np.pi)
            z = np.array([np.cos(th), np.sin(th)])
        a, b = [iv for iv in clip_line(domain, p, z) if iv[0] < 0 < iv[1]][0]
        # stay off the boundary so the segment is strictly inside
        a, b = a + 1e-9, b - 1e-9
        t1, t2 = np.sort(rng.uniform(a, b, size=2))
        if t2 - t1 < min_length:
            continue
        out.append((p + t1 * z, p + t2 * z))
    return out


def check_s_convexity(
    u: Callable[[np.ndarray], np.ndarray],
    domain: Domain,
    order: FractionalOrder,
    segments: Optional[Sequence[Tuple[np.ndarray, np.ndarray]]] = None,
    count: int = 200,
    seed: int = 42,
    n: int = 64,
    **kwargs,
) -> ConvexityReport:
    """Run :func:`is_s_convex_on_segment` over a sampling plan of chords."""
    if segments is None:
        segments = random_segments(domain, count=count, seed=seed, min_length=4.0 / (n + 1))
    reports = [is_s_convex_on_segment(u, x, y, order, n=n, **kwargs) for x, y in segments]
    passed = [r.holds for r in reports]
    worst_i = int(np.argmax([r.worst_violation for r in reports])) if reports else None
    return ConvexityReport(
        holds=all(passed),
        pass_rate=float(np.mean(passed)) if reports else 1.0,
        worst_violation=reports[worst_i].worst_violation if reports else 0.0,
        worst_segment=tuple(segments[worst_i]) if reports else None,
        reports=reports,
    )
