"""The s-convex envelope: Λ₁ˢu = 0 in Ω, u = g outside.

Dividing the directional operator by its diagonal gives the Bellman form

    u(x) = min_z T_z u(x),

where T_z u(x) is a convex combination of line samples (the nonlocal mean
along z).  The solver iterates this map from below (u⁰ = min g), either by
plain value-iteration sweeps or by Howard's policy iteration, which freezes
the minimizing direction at every node and solves the resulting linear
nonlocal system.
"""
from __future__ import annotations

import logging
import time
import warnings
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import LinearOperator, bicgstab, spsolve
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .geometry import DirectionSet, Domain, domain_from_spec
from .kernel import FractionalOrder, Quadrature1D
from .lattice import LatticeScheme
from .operator import ExteriorData, GridFunction, OperatorMode, as_exterior, sample_line

__all__ = [
    "SolverConfig",
    "EnvelopeResult",
    "ConvergenceWarning",
    "nonlocal_mean_update",
    "solve_envelope",
    "s_concave_envelope",
    "classical_convex_envelope_1d",
    "clear_scheme_cache",
    "SConvexEnvelope",
    "SConcaveEnvelope",
]

log = logging.getLogger(__name__)


class ConvergenceWarning(UserWarning):
    pass


@dataclass
class SolverConfig:
    """Parameters of :func:`solve_envelope`.

    ``tolerance`` and ``residual_tolerance`` are relative to osc(g) when left
    as ``None``: 1e-10·osc and 1e-3·osc respectively.
    """

    spacing: float = 1.0 / 32
    direction_count: int = 64
    tolerance: Optional[float] = None
    residual_tolerance: Optional[float] = None
    max_sweeps: int = 20000
    sweep_order: str = "jacobi"
    relaxation: float = 1.0
    mode: str = "full"
    accelerator: str = "policy_iteration"
    max_policy_iterations: int = 100
    line_spacing: Optional[float] = None
    truncation_radius: float = 2.0
    workers: int = 1

    def __post_init__(self):
        if not self.spacing > 0:
            raise ValueError("lattice spacing must be positive")
        if self.tolerance is not None and not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if not 0 < self.relaxation <= 1:
            raise ValueError("relaxation must lie in (0, 1]")
        if self.direction_count < 8:
            raise ValueError("direction_count must be at least 8")
        if self.sweep_order not in ("jacobi", "gauss_seidel_lexicographic"):
            raise ValueError(f"unknown sweep order {self.sweep_order!r}")
        if self.accelerator not in ("none", "policy_iteration"):
            raise ValueError(f"unknown accelerator {self.accelerator!r}")
        if OperatorMode(self.mode) is not OperatorMode.FULL:
            raise ValueError("the envelope solver discretizes the full-line operator only")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EnvelopeResult:
    u: GridFunction
    residual: float
    sweeps_used: int
    policy: np.ndarray
    converged: bool
    tolerance: float
    residual_tolerance: float
    history: List[float] = field(default_factory=list, repr=False)
    seconds: float = 0.0

    @property
    def values(self) -> np.ndarray:
        return self.u.values

    @property
    def nodes(self) -> np.ndarray:
        return self.u.nodes


def nonlocal_mean_update(u: GridFunction, g, x, z, quad: Quadrature1D) -> float:
    """The value at x that makes the directional operator along z vanish.

    Σ_k w_k (u(x + t_k z) + u(x - t_k z)) plus the constant-tail contribution,
    divided by the total kernel mass; a convex combination of line samples.
    """
    g = as_exterior(g)
    line = sample_line(u, g, x, z, quad)
    K = quad.half_width
    vals = line.values
    pair = vals[K + 1 :] + vals[K - 1 :: -1]
    dec = max(1, K // 10)
    tail = quad.tail_mass * (vals[:dec].mean() + vals[-dec:].mean())
    total = 2.0 * (quad.weights.sum() + quad.tail_mass)
    if not total > np.finfo(float).tiny:
        raise FloatingPointError("kernel mass underflow")
    return float((quad.weights @ pair + tail) / total)


def _resolve_domain(domain):
    return domain_from_spec(domain) if not isinstance(domain, Domain) else domain


def _directions_for(domain: Domain, count: int) -> DirectionSet:
    return DirectionSet(domain.dim, count)


_SCHEME_CACHE: "OrderedDict[tuple, LatticeScheme]" = OrderedDict()
SCHEME_CACHE_SIZE = 2


def _scheme_for(domain, order, dirs, config) -> LatticeScheme:
    """Geometry-dependent scheme, cached across solves with the same setup."""
    key = (
        type(domain).__name__,
        repr(domain.params()),
        order.s,
        config.spacing,
        config.direction_count,
        config.line_spacing,
        config.truncation_radius,
    )
    scheme = _SCHEME_CACHE.get(key)
    if scheme is None:
        scheme = LatticeScheme(
            domain,
            order,
            config.spacing,
            dirs.directions,
            line_spacing=config.line_spacing,
            truncation_radius=config.truncation_radius,
            workers=config.workers,
        )
        _SCHEME_CACHE[key] = scheme
        while len(_SCHEME_CACHE) > SCHEME_CACHE_SIZE:
            _SCHEME_CACHE.popitem(last=False)
    else:
        _SCHEME_CACHE.move_to_end(key)
        scheme.workers = config.workers
    return scheme


def clear_scheme_cache() -> None:
    """Drop cached lattice schemes (they hold the sparse couplings)."""
    _SCHEME_CACHE.clear()


def _update_coupling(scheme, C, old, policy):
    """Coupling for ``policy``, reusing the rows of ``C`` (built for ``old``)."""
    if C is None:
        return scheme.coupling_matrix(policy)
    changed = policy != old
    keep = sparse.diags((~changed).astype(float))
    return (keep @ C + scheme.coupling_matrix(policy, rows=changed)).tocsr()


def _policy_solve(scheme, C, policy, ext, u0, tol):
    n = scheme.n_interior
    d = scheme.diagonals[policy, np.arange(n)]
    b = ext[policy, np.arange(n)] / d
    A = sparse.identity(n, format="csr") - sparse.diags(1.0 / d) @ C
    if n <= 3000:
        return spsolve(A.tocsc(), b)
    u, info = bicgstab(A, b, x0=u0, rtol=0.0, atol=tol, maxiter=5000)
    if info != 0:
        warnings.warn("inner policy solve did not reach its tolerance", ConvergenceWarning)
    return u


def _gauss_seidel(scheme, ext, u, sweeps, tol, relaxation, history):
    M = len(scheme.directions)
    stacked = scheme.stacked_matrix()
    d = scheme.diagonals.T.ravel()
    ext_flat = ext.T.ravel()
    indptr, indices, data = stacked.indptr, stacked.indices, stacked.data
    for sweep in range(1, sweeps + 1):
        change = 0.0
        for i in range(scheme.n_interior):
            rows = slice(i * M, (i + 1) * M)
            lo, hi = indptr[i * M], indptr[(i + 1) * M]
            prod = data[lo:hi] * u[indices[lo:hi]]
            starts = indptr[i * M : (i + 1) * M] - lo
            sums = np.add.reduceat(prod, starts) if hi > lo else np.zeros(M)
            sums[np.diff(np.append(starts, hi - lo)) == 0] = 0.0
            new = ((sums + ext_flat[rows]) / d[rows]).min()
            step = relaxation * (new - u[i])
            u[i] += step
            change = max(change, abs(step))
        history.append(change)
        if change < tol:
            return u, sweep, True
    return u, sweeps, False


def solve_envelope(domain, g, order, config: Optional[SolverConfig] = None) -> EnvelopeResult:
    """Compute the s-convex envelope of ``g`` on the lattice of ``domain``.

    Parameters
    ----------
    domain : Domain or str
    g : ExteriorData, callable or float
        Exterior datum; only its values at lattice nodes outside Ω are used.
    order : FractionalOrder or float
    config : SolverConfig
    """
    start = time.perf_counter()
    config = config or SolverConfig()
    domain = _resolve_domain(domain)
    order = order if isinstance(order, FractionalOrder) else FractionalOrder(order)
    g = as_exterior(g)
    dirs = _directions_for(domain, config.direction_count)
    scheme = _scheme_for(domain, order, dirs, config)
    ghost = scheme.ghost_field(g)
    outside = ~scheme.inside
    gmin, gmax = float(ghost[outside].min()), float(ghost[outside].max())
    osc = gmax - gmin
    scale = osc if osc > 0 else max(1.0, abs(gmax))
    tol = config.tolerance if config.tolerance is not None else 1e-10 * scale
    rtol = config.residual_tolerance if config.residual_tolerance is not None else 1e-3 * scale
    ext = scheme.exterior_terms(ghost) + scheme.exact_terms(g)
    u = np.full(scheme.n_interior, gmin)
    history: List[float] = []
    converged = False
    sweeps = 0
    if osc == 0:
        converged = True
    elif config.accelerator == "policy_iteration":
        policy = None
        C = None
        inner_tol = max(1e-3 * tol, 1e-6 * scale)
        for sweeps in range(1, config.max_policy_iterations + 1):
            vals = scheme.directional_values(u, ext)
            new_policy = np.argmin(vals, axis=0)
            if policy is not None and np.array_equal(new_policy, policy):
                converged = True
                break
            C = _update_coupling(scheme, C, policy, new_policy)
            policy = new_policy
            u_new = _policy_solve(scheme, C, policy, ext, u, inner_tol)
            change = float(np.abs(u_new - u).max())
            # inexact Howard steps: tighten the inner solve as the policy settles
            inner_tol = max(1e-3 * tol, min(inner_tol, 1e-3 * change))
            u = u_new
            history.append(change)
            log.debug("policy iteration %d: change %.3e", sweeps, change)
            if change < tol:
                converged = True
                break
    elif config.sweep_order == "jacobi":
        for sweeps in range(1, config.max_sweeps + 1):
            step = config.relaxation * scheme.directional_values(u, ext).min(axis=0)
            u = u + step
            change = float(np.abs(step).max())
            history.append(change)
            if change < tol:
                converged = True
                break
    else:
        u, sweeps, converged = _gauss_seidel(
            scheme, ext, u, config.max_sweeps, tol, config.relaxation, history
        )
    vals = scheme.directional_values(u, ext)
    policy = np.argmin(vals, axis=0)
    residual = float(np.abs(vals.min(axis=0)).max())
    if not converged or residual > rtol:
        converged = False
        warnings.warn(
            f"envelope solver stopped after {sweeps} iterations with residual {residual:.3e}",
            ConvergenceWarning,
        )
    grid = GridFunction(
        domain, scheme.lattice, scheme.inside, u.copy(), scheme.full_field(u, ghost), g
    )
    return EnvelopeResult(
        u=grid,
        residual=residual,
        sweeps_used=sweeps,
        policy=policy,
        converged=converged,
        tolerance=tol,
        residual_tolerance=rtol,
        history=history,
        seconds=time.perf_counter() - start,
    )


def s_concave_envelope(domain, g, order, config: Optional[SolverConfig] = None) -> EnvelopeResult:
    """The s-concave envelope, -(s-convex envelope of -g)."""
    g = as_exterior(g)
    res = solve_envelope(domain, g.negated(), order, config)
    res.u = res.u.negated()
    res.u.exterior = g
    return res


def classical_convex_envelope_1d(t, values, boundary=None) -> np.ndarray:
    """Lower convex hull of the points (t_i, values_i), evaluated at ``t``.

    ``boundary`` optionally adds endpoint data ``((t_a, g_a), (t_b, g_b))``;
    with it, the result is the classical convex envelope of the boundary datum
    below the sampled obstacle.
    """
    t = np.asarray(t, dtype=float).ravel()
    v = np.asarray(values, dtype=float).ravel()
    if t.shape != v.shape:
        raise ValueError("abscissae and values must have the same length")
    pts_t, pts_v = t, v
    if boundary is not None:
        (ta, ga), (tb, gb) = boundary
        pts_t = np.concatenate([[ta], t, [tb]])
        pts_v = np.concatenate([[ga], v, [gb]])
    if pts_t.size < 2:
        raise ValueError("need at least two points")
    order = np.lexsort((pts_v, pts_t))
    P = np.column_stack([pts_t[order], pts_v[order]])
    hull: List[np.ndarray] = []
    for p in P:
        if hull and p[0] == hull[-1][0]:
            continue  # same abscissa: the smaller value came first
        while len(hull) >= 2:
            o, a = hull[-2], hull[-1]
            cross = (a[0] - o[0]) * (p[1] - o[1]) - (a[1] - o[1]) * (p[0] - o[0])
            if cross <= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    H = np.array(hull)
    return np.interp(t, H[:, 0], H[:, 1])


class SConvexEnvelope(BaseEstimator):
    """Estimator interface to :func:`solve_envelope`.

    ``fit(domain, g)`` computes the envelope of the exterior datum ``g`` in
    ``domain``; ``predict(X)`` evaluates it (interpolated inside Ω, ``g``
    outside).

    Parameters mirror :class:`SolverConfig`, plus the order ``s``.

    Attributes
    ----------
    result_ : EnvelopeResult
    grid_ : GridFunction
    residual_ : float
    n_iter_ : int
    policy_ : ndarray of direction indices per node
    """

    _concave = False

    def __init__(
        self,
        s: float = 0.5,
        spacing: float = 1.0 / 32,
        direction_count: int = 64,
        tol: Optional[float] = None,
        residual_tol: Optional[float] = None,
        max_iter: int = 20000,
        sweep_order: str = "jacobi",
        relaxation: float = 1.0,
        accelerator: str = "policy_iteration",
        line_spacing: Optional[float] = None,
        truncation_radius: float = 2.0,
        workers: int = 1,
    ):
        self.s = s
        self.spacing = spacing
        self.direction_count = direction_count
        self.tol = tol
        self.residual_tol = residual_tol
        self.max_iter = max_iter
        self.sweep_order = sweep_order
        self.relaxation = relaxation
        self.accelerator = accelerator
        self.line_spacing = line_spacing
        self.truncation_radius = truncation_radius
        self.workers = workers

    def _config(self) -> SolverConfig:
        return SolverConfig(
            spacing=self.spacing,
            direction_count=self.direction_count,
            tolerance=self.tol,
            residual_tolerance=self.residual_tol,
            max_sweeps=self.max_iter,
            max_policy_iterations=min(self.max_iter, 100),
            sweep_order=self.sweep_order,
            relaxation=self.relaxation,
            accelerator=self.accelerator,
            line_spacing=self.line_spacing,
            truncation_radius=self.truncation_radius,
            workers=self.workers,
        )

    def fit(self, domain, g):
        order = FractionalOrder(self.s)
        solver = s_concave_envelope if self._concave else solve_envelope
        self.result_ = solver(domain, g, order, self._config())
        self.grid_ = self.result_.u
        self.domain_ = self.grid_.domain
        self.residual_ = self.result_.residual
        self.n_iter_ = self.result_.sweeps_used
        self.policy_ = self.result_.policy
        self.converged_ = self.result_.converged
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "grid_")
        X = check_array(X, ensure_min_features=self.domain_.dim)
        if X.shape[1] != self.domain_.dim:
            raise ValueError(f"expected {self.domain_.dim} features, got {X.shape[1]}")
        return self.grid_(X)


class SConcaveEnvelope(SConvexEnvelope):
    """The s-concave envelope; same parameters as :class:`SConvexEnvelope`."""

    _concave = True
