"""Lattice discretization of the directional operators used by the envelope solver.

Every lattice node of Ω is an unknown; every other node of a box covering Ω
plus the truncation radius is a ghost node carrying the exterior datum.  Along
a direction z the samples x ± k h z are multilinearly interpolated from the
lattice, so the discrete directional operator is the same stencil at every
node:

    L_z F(x) = Σ_off S_z(off) F(x + off) - d_z F(x),   Σ_off S_z(off) = d_z,

with nonnegative coefficients.  The exterior part is a convolution of the
ghost field with S_z (done once per datum by FFT); the interior part is a
convolution over the sub-box of interior nodes, or a sparse matrix when a
direction per node is frozen.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, List, Tuple

import numpy as np
from scipy import fft, sparse

from .geometry import Domain
from .kernel import FractionalOrder, build_quadrature

__all__ = ["Lattice", "LatticeScheme"]


@dataclass(frozen=True)
class Lattice:
    """Uniform lattice ``x = spacing * (lower + index)`` over a box."""

    spacing: float
    lower: Tuple[int, ...]
    shape: Tuple[int, ...]

    @classmethod
    def covering(cls, lo, hi, spacing: float, margin: float) -> "Lattice":
        lo = np.floor((np.asarray(lo) - margin) / spacing).astype(int)
        hi = np.ceil((np.asarray(hi) + margin) / spacing).astype(int)
        return cls(float(spacing), tuple(int(v) for v in lo), tuple(int(v) for v in hi - lo + 1))

    @property
    def dim(self) -> int:
        return len(self.shape)

    def coordinates(self) -> np.ndarray:
        axes = [self.spacing * (l + np.arange(n)) for l, n in zip(self.lower, self.shape)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def to_index(self, points) -> np.ndarray:
        """Fractional lattice indices of ``points`` (shape ``(n, N)``)."""
        return np.asarray(points, dtype=float) / self.spacing - np.asarray(self.lower)


def multilinear(field: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Multilinear interpolation of ``field`` at fractional indices ``idx``."""
    idx = np.asarray(idx, dtype=float)
    n, dim = idx.shape
    shape = np.asarray(field.shape)
    if np.any(idx < -1e-9) or np.any(idx > shape - 1 + 1e-9):
        raise ValueError("interpolation point outside the lattice box")
    base = np.clip(np.floor(idx).astype(int), 0, shape - 2)
    frac = idx - base
    out = np.zeros(n)
    for corner in range(2**dim):
        bits = [(corner >> a) & 1 for a in range(dim)]
        wgt = np.ones(n)
        ind = []
        for a, b in enumerate(bits):
            wgt *= frac[:, a] if b else 1.0 - frac[:, a]
            ind.append(base[:, a] + b)
        out += wgt * field[tuple(ind)]
    return out


def _line_samples(order, h, radius, spacing, z):
    """Sample offsets (lattice units), parameters and weights along ±z.

    The constant far-field tail is spread over the outermost tenth of the
    samples on each side, as in the pointwise operator.
    """
    quad = build_quadrature(order, h, radius)
    K = quad.half_width
    w = quad.weights.copy()
    dec = max(1, K // 10)
    w[K - dec :] += quad.tail_mass / dec
    k = np.arange(1, K + 1)
    t = np.concatenate([k, -k]) * h
    pos = t[:, None] * np.asarray(z, dtype=float)[None, :] / spacing
    total = 2.0 * (quad.weights.sum() + quad.tail_mass)
    return pos, t, np.concatenate([w, w]), total


def _split(pos):
    base = np.floor(pos + 1e-12).astype(int)
    frac = np.clip(pos - base, 0.0, 1.0)
    frac[frac < 1e-12] = 0.0
    return base, frac


def _corners(dim):
    return [np.array([(c >> a) & 1 for a in range(dim)]) for c in range(2**dim)]


def _corner_weights(frac, bits):
    wgt = np.ones(frac.shape[:-1])
    for a, b in enumerate(bits):
        wgt = wgt * (frac[..., a] if b else 1.0 - frac[..., a])
    return wgt


def _stencil_entries(pos, wk, total):
    """Sparse stencil (integer offsets, coefficients) and the diagonal of L_z."""
    base, frac = _split(pos)
    offs, coefs = [], []
    for bits in _corners(pos.shape[1]):
        wgt = wk * _corner_weights(frac, bits)
        keep = wgt > 0
        offs.append(base[keep] + bits)
        coefs.append(wgt[keep])
    offs = np.concatenate(offs)
    coefs = np.concatenate(coefs)
    uniq, inv = np.unique(offs, axis=0, return_inverse=True)
    acc = np.bincount(inv.ravel(), weights=coefs)
    center = np.all(uniq == 0, axis=1)
    c0 = acc[center].sum()
    return uniq[~center], acc[~center], total - c0


@dataclass
class _Band:
    """Corrections for samples outside Ω whose lattice cell touches Ω.

    Those samples take the exact datum instead of the interpolant, so their
    interior-corner coefficients leave the coupling (``coupling``, ``diag``)
    and their ghost-corner coefficients leave the exterior term.
    """

    coupling: sparse.csr_matrix
    diag: np.ndarray
    ghost_rows: np.ndarray
    ghost_flat: np.ndarray
    ghost_coef: np.ndarray
    exact_rows: np.ndarray
    exact_points: np.ndarray
    exact_weight: np.ndarray


class LatticeScheme:
    """Geometry-dependent part of the full-mode discretization.

    Parameters
    ----------
    domain : Domain
    order : FractionalOrder
    spacing : float
        Lattice spacing δx.
    directions : array, shape (M, N)
        Unit directions (half-sphere).
    line_spacing : float, optional
        Sample spacing h along lines; defaults to ``spacing``.
    truncation_radius : float
        Kernel truncation radius R; the far field beyond is a constant tail.
    workers : int
        Threads for the FFTs.
    """

    def __init__(
        self,
        domain: Domain,
        order: FractionalOrder,
        spacing: float,
        directions: np.ndarray,
        line_spacing: float = None,
        truncation_radius: float = 2.0,
        workers: int = 1,
    ):
        self.domain = domain
        self.order = order
        self.spacing = float(spacing)
        self.directions = np.atleast_2d(np.asarray(directions, dtype=float))
        self.line_spacing = float(line_spacing or spacing)
        self.truncation_radius = float(truncation_radius)
        self.workers = workers
        lo, hi = domain.bounding_box
        margin = self.truncation_radius + 2.0 * self.spacing
        self.lattice = Lattice.covering(lo, hi, self.spacing, margin)
        coords = self.lattice.coordinates()
        self.inside = domain.contains(coords).reshape(self.lattice.shape)
        if not self.inside.any():
            raise ValueError("no lattice node inside the domain; refine the spacing")
        nz = np.nonzero(self.inside)
        self.sub_lo = np.array([a.min() for a in nz])
        self.sub_hi = np.array([a.max() for a in nz]) + 1
        self.interior_index = np.stack(nz, axis=1)
        self.interior_points = coords[np.ravel_multi_index(nz, self.lattice.shape)]
        self.n_interior = len(self.interior_points)
        self._box_lookup = -np.ones(self.lattice.shape, dtype=np.int64)
        self._box_lookup[tuple(self.interior_index.T)] = np.arange(self.n_interior)
        # cells with both interior and exterior corners
        touch = np.zeros(tuple(n - 1 for n in self.lattice.shape), dtype=bool)
        full = np.ones_like(touch)
        for bits in _corners(self.lattice.dim):
            corner = self.inside[tuple(slice(b, b + n - 1) for b, n in zip(bits, self.lattice.shape))]
            touch |= corner
            full &= corner
        self._touch = touch & ~full
        self.stencils = []
        self.bands: List[_Band] = []
        self.diagonals = np.empty((len(self.directions), self.n_interior))
        for i, z in enumerate(self.directions):
            pos, t, wk, total = _line_samples(
                order, self.line_spacing, self.truncation_radius, self.spacing, z
            )
            offs, coefs, diag = _stencil_entries(pos, wk, total)
            self.stencils.append((offs, coefs))
            band = self._band(pos, t, wk, z)
            self.bands.append(band)
            self.diagonals[i] = diag + band.diag
        self._pad = max(int(np.abs(o).max()) for o, _ in self.stencils)

    def _band(self, pos, t, wk, z) -> _Band:
        base, frac = _split(pos)
        n = self.n_interior
        # a sample k of node x falls in cell c iff x = c - base_k
        cells = np.argwhere(self._touch)
        shape = np.asarray(self.lattice.shape)
        rows, ks = [], []
        for start in range(0, len(cells), 1024):
            nodes = cells[start : start + 1024, None, :] - base[None, :, :]
            ok = np.all((nodes >= 0) & (nodes < shape), axis=2)
            tgt = np.full(ok.shape, -1, dtype=np.int64)
            tgt[ok] = self._box_lookup[tuple(nodes[ok].T)]
            j, k = np.nonzero(tgt >= 0)
            rows.append(tgt[j, k])
            ks.append(k)
        rows = np.concatenate(rows)
        ks = np.concatenate(ks)
        pts = self.interior_points[rows] + t[ks, None] * z[None, :]
        out = ~self.domain.contains(pts)
        rows, ks, pts = rows[out], ks[out], pts[out]
        cells = self.interior_index[rows] + base[ks]
        c_rows, c_cols, c_vals, g_rows, g_flat, g_coef = [], [], [], [], [], []
        for bits in _corners(self.lattice.dim):
            corner = cells + bits
            coef = wk[ks] * _corner_weights(frac[ks], bits)
            tgt = self._box_lookup[tuple(corner.T)]
            inner = (tgt >= 0) & (coef > 0)
            c_rows.append(rows[inner])
            c_cols.append(tgt[inner])
            c_vals.append(coef[inner])
            ghost = (tgt < 0) & (coef > 0)
            g_rows.append(rows[ghost])
            g_flat.append(np.ravel_multi_index(tuple(corner[ghost].T), self.lattice.shape))
            g_coef.append(coef[ghost])
        c_rows, c_cols, c_vals = map(np.concatenate, (c_rows, c_cols, c_vals))
        on_diag = c_rows == c_cols
        diag = np.bincount(c_rows[on_diag], weights=c_vals[on_diag], minlength=n)
        off = ~on_diag
        coupling = sparse.csr_matrix((c_vals[off], (c_rows[off], c_cols[off])), shape=(n, n))
        return _Band(
            coupling,
            diag,
            np.concatenate(g_rows),
            np.concatenate(g_flat),
            np.concatenate(g_coef),
            rows,
            pts,
            wk[ks],
        )

    # ------------------------------------------------------------------ fields
    @property
    def sub_shape(self) -> Tuple[int, ...]:
        return tuple(int(v) for v in self.sub_hi - self.sub_lo)

    @cached_property
    def _sub_local(self) -> np.ndarray:
        return self.interior_index - self.sub_lo

    @cached_property
    def _sub_lookup(self) -> np.ndarray:
        lookup = -np.ones(self.sub_shape, dtype=np.int64)
        lookup[tuple(self._sub_local.T)] = np.arange(self.n_interior)
        return lookup

    def ghost_field(self, g: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """Box array with ``g`` at every non-interior node and 0 inside."""
        coords = self.lattice.coordinates()
        out = np.zeros(len(coords))
        mask = ~self.inside.ravel()
        out[mask] = np.asarray(g(coords[mask]), dtype=float)
        if not np.all(np.isfinite(out)):
            raise ValueError("exterior datum must be finite on the lattice box")
        return out.reshape(self.lattice.shape)

    def full_field(self, u: np.ndarray, ghost: np.ndarray) -> np.ndarray:
        field = ghost.copy()
        field[tuple(self.interior_index.T)] = u
        return field

    def _dense_stencil(self, i: int, reach: np.ndarray) -> np.ndarray:
        offs, coefs = self.stencils[i]
        keep = np.all(np.abs(offs) <= reach, axis=1)
        S = np.zeros(tuple(2 * reach + 1))
        S[tuple((offs[keep] + reach).T)] = coefs[keep]
        return S

    # ------------------------------------------------------------ operators
    def exterior_terms(self, ghost: np.ndarray) -> np.ndarray:
        """Σ_off S_z(off) G(x + off) at interior nodes, one row per direction."""
        P = self._pad
        lo = self.sub_lo - P
        hi = self.sub_hi + P
        if np.any(lo < 0) or np.any(hi > np.asarray(self.lattice.shape)):
            raise RuntimeError("lattice box too small for the stencil reach")
        G = ghost[tuple(slice(a, b) for a, b in zip(lo, hi))]
        reach = np.full(self.lattice.dim, P)
        shape = [fft.next_fast_len(int(n + 2 * P), real=True) for n in G.shape]
        FG = fft.rfftn(G, shape, workers=self.workers)
        sub = tuple(slice(2 * P, 2 * P + n) for n in self.sub_shape)
        loc = tuple(self._sub_local.T)
        out = np.empty((len(self.directions), self.n_interior))
        for i in range(len(self.directions)):
            S = self._dense_stencil(i, reach)
            conv = fft.irfftn(FG * fft.rfftn(S, shape, workers=self.workers), shape, workers=self.workers)
            band = self.bands[i]
            corr = np.bincount(
                band.ghost_rows, weights=band.ghost_coef * ghost.ravel()[band.ghost_flat],
                minlength=self.n_interior,
            )
            out[i] = conv[sub][loc] - corr
        return out

    def exact_terms(self, g: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """Σ w_k g(p_k) over band samples, per direction."""
        out = np.zeros((len(self.directions), self.n_interior))
        for i, band in enumerate(self.bands):
            if len(band.exact_rows):
                vals = np.asarray(g(band.exact_points), dtype=float)
                out[i] = np.bincount(band.exact_rows, weights=band.exact_weight * vals, minlength=self.n_interior)
        return out

    def interior_terms(self, u: np.ndarray) -> np.ndarray:
        """Σ_off S_z(off) U(x + off) over interior neighbours, per direction."""
        U = np.zeros(self.sub_shape)
        loc = tuple(self._sub_local.T)
        U[loc] = u
        reach = np.asarray(self.sub_shape) - 1
        shape = [fft.next_fast_len(int(n + 2 * r), real=True) for n, r in zip(U.shape, reach)]
        FU = fft.rfftn(U, shape, workers=self.workers)
        sub = tuple(slice(int(r), int(r) + n) for r, n in zip(reach, U.shape))
        out = np.empty((len(self.directions), self.n_interior))
        for i in range(len(self.directions)):
            S = self._dense_stencil(i, reach)
            conv = fft.irfftn(FU * fft.rfftn(S, shape, workers=self.workers), shape, workers=self.workers)
            out[i] = conv[sub][loc] - self.bands[i].coupling @ u
        return out

    def directional_values(self, u: np.ndarray, ext: np.ndarray) -> np.ndarray:
        """(T_z u - u)(x) for all directions: the operator divided by d_z."""
        inner = self.interior_terms(u)
        return (inner + ext) / self.diagonals - u[None, :]

    def coupling_matrix(self, policy: np.ndarray, rows=None) -> sparse.csr_matrix:
        """Interior coupling Σ_off S_z(off) u(x + off) with z = policy(x).

        With ``rows`` (boolean mask), only those rows are assembled and the
        others are left empty.
        """
        rows_all, cols_all, vals_all = [np.empty(0, dtype=np.int64)] * 2 + [np.empty(0)]
        rows_all, cols_all, vals_all = [rows_all], [cols_all], [vals_all]
        active = np.ones(self.n_interior, dtype=bool) if rows is None else np.asarray(rows, dtype=bool)
        sub_shape = np.asarray(self.sub_shape)
        lookup = self._sub_lookup
        loc = self._sub_local
        for i in np.unique(policy[active]):
            rows = np.nonzero((policy == i) & active)[0]
            offs, coefs = self.stencils[i]
            keep = np.all(np.abs(offs) < sub_shape, axis=1)
            offs, coefs = offs[keep], coefs[keep]
            for start in range(0, len(rows), 512):
                r = rows[start : start + 512]
                tgt = loc[r][:, None, :] + offs[None, :, :]
                ok = np.all((tgt >= 0) & (tgt < sub_shape), axis=2)
                col = np.full(ok.shape, -1, dtype=np.int64)
                col[ok] = lookup[tuple(tgt[ok].T)]
                hit = col >= 0
                rows_all.append(np.broadcast_to(r[:, None], hit.shape)[hit])
                cols_all.append(col[hit])
                vals_all.append(np.broadcast_to(coefs[None, :], hit.shape)[hit])
            band = self.bands[i].coupling.tocoo()
            sel = (policy[band.row] == i) & active[band.row]
            rows_all.append(band.row[sel])
            cols_all.append(band.col[sel])
            vals_all.append(-band.data[sel])
        n = self.n_interior
        C = sparse.csr_matrix(
            (np.concatenate(vals_all), (np.concatenate(rows_all), np.concatenate(cols_all))),
            shape=(n, n),
        )
        C.data[C.data < 0] = 0.0
        C.eliminate_zeros()
        return C

    def stacked_matrix(self) -> sparse.csr_matrix:
        """All directions' coupling rows, node-major: row = node * M + direction."""
        M = len(self.directions)
        mats = [self.coupling_matrix(np.full(self.n_interior, i)) for i in range(M)]
        stacked = sparse.vstack(mats).tocsr()
        perm = (np.arange(self.n_interior)[:, None] + self.n_interior * np.arange(M)[None, :]).ravel()
        return stacked[perm]
