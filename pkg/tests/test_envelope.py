import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.base import clone

from fracconvex.envelope import (
    ConvergenceWarning,
    SConcaveEnvelope,
    SConvexEnvelope,
    SolverConfig,
    classical_convex_envelope_1d,
    nonlocal_mean_update,
    s_concave_envelope,
    solve_envelope,
)
from fracconvex.geometry import Ball, DirectionSet, domain_from_spec
from fracconvex.kernel import FractionalOrder, build_quadrature
from fracconvex.lattice import Lattice
from fracconvex.operator import GridFunction

DX = 1 / 16
CFG = SolverConfig(spacing=DX, direction_count=16)


def wave(p):
    return np.sin(2 * p[:, 0]) + 0.5 * np.cos(3 * p[:, 1])


def grid(domain, func, dx=1 / 32, R=1.0):
    lat = Lattice.covering(*domain.bounding_box, dx, R + 2 * dx)
    return GridFunction.from_function(domain, lat, func)


def hull_oracle(t, v):
    # brute force: lowest chord through any pair of points bracketing t_i
    out = v.copy()
    for i, j, k in itertools.product(range(len(t)), repeat=3):
        if t[j] <= t[i] <= t[k] and t[j] < t[k]:
            lam = (t[k] - t[i]) / (t[k] - t[j])
            out[i] = min(out[i], lam * v[j] + (1 - lam) * v[k])
    return out


@pytest.mark.parametrize("c", [-1.3, 0.0, 0.7])
def test_constant_datum(c):
    res = solve_envelope(Ball(), lambda p: np.full(len(p), c), 0.5, CFG)
    assert res.converged
    assert np.abs(res.values - c).max() <= 1e-10
    assert res.residual <= 1e-10


def test_bounds_and_residual():
    res = solve_envelope(Ball(), wave, 0.5, CFG)
    outside = ~res.u.domain.contains(res.u.lattice.coordinates())
    gv = wave(res.u.lattice.coordinates()[outside])
    assert res.converged and res.residual <= res.residual_tolerance
    assert gv.min() - 1e-12 <= res.values.min()
    assert res.values.max() <= gv.max() + 1e-12


def test_comparison_of_data():
    g1 = wave
    g2 = lambda p: wave(p) + 0.2 * (1 + p[:, 0] ** 2)
    u1 = solve_envelope(Ball(), g1, 0.5, CFG).values
    u2 = solve_envelope(Ball(), g2, 0.5, CFG).values
    assert np.all(u1 <= u2 + 1e-10)


def test_jacobi_iterates_increase():
    # starting from min g, each Jacobi step moves up
    prev = None
    for k in (2, 4, 8):
        cfg = SolverConfig(spacing=DX, direction_count=16, accelerator="none", max_sweeps=k)
        with pytest.warns(ConvergenceWarning):
            u = solve_envelope(Ball(), wave, 0.5, cfg).values
        if prev is not None:
            assert np.all(u >= prev - 1e-14)
        prev = u


def test_solvers_agree():
    ref = solve_envelope(Ball(), wave, 0.5, CFG).values
    gs = SolverConfig(spacing=DX, direction_count=16, accelerator="none", sweep_order="gauss_seidel_lexicographic")
    a = solve_envelope(Ball(), wave, 0.5, gs).values
    b = solve_envelope(Ball(), wave, 0.5, gs).values
    assert np.array_equal(a, b)
    assert np.abs(a - ref).max() <= 1e-8


def test_jacobi_matches_policy_iteration():
    ref = solve_envelope(Ball(), wave, 0.5, CFG).values
    cfg = SolverConfig(spacing=DX, direction_count=16, accelerator="none", tolerance=1e-12)
    assert np.abs(solve_envelope(Ball(), wave, 0.5, cfg).values - ref).max() <= 1e-8


def test_concave_is_negated_convex():
    neg = lambda p: -wave(p)
    cav = s_concave_envelope(Ball(), wave, 0.5, CFG)
    vex = solve_envelope(Ball(), neg, 0.5, CFG)
    assert np.array_equal(cav.values, -vex.values)
    assert np.allclose(cav.u(np.array([[2.0, 0.0]])), wave(np.array([[2.0, 0.0]])))


def test_concave_above_convex():
    vex = solve_envelope(Ball(), wave, 0.5, CFG).values
    cav = s_concave_envelope(Ball(), wave, 0.5, CFG).values
    assert np.all(vex <= cav + 1e-10)


def test_maximality_against_subsolution():
    # Jacobi iterates from min g are discrete subsolutions; the envelope dominates them
    ref = solve_envelope(Ball(), wave, 0.5, CFG).values
    for k in (1, 5, 20):
        cfg = SolverConfig(spacing=DX, direction_count=16, accelerator="none", max_sweeps=k)
        with pytest.warns(ConvergenceWarning):
            sub = solve_envelope(Ball(), wave, 0.5, cfg).values
        assert np.all(sub <= ref + 1e-10)


def test_affine_datum_in_one_dimension():
    # with s > 1/2 the line operator annihilates affine functions, tail included
    aff = lambda p: 0.3 + 2.0 * p[:, 0]
    cfg = SolverConfig(spacing=1 / 64, direction_count=8)
    res = solve_envelope(domain_from_spec("interval:0:1"), aff, 0.75, cfg)
    assert np.abs(res.values - aff(res.nodes)).max() <= 0.05


@pytest.mark.parametrize(
    "func",
    [lambda t: 2 * t - 1, lambda t: (t - 3) ** 2, lambda t: np.exp(t)],
)
def test_classical_hull_keeps_convex_data(func):
    t = np.linspace(0, 5, 41)
    assert np.allclose(classical_convex_envelope_1d(t, func(t)), func(t), atol=1e-12)


def test_classical_hull_of_bump_is_flat():
    t = np.linspace(0, 1, 101)[1:-1]
    v = 1 + np.maximum(0, 0.3 - np.abs(t - 0.5))
    assert np.abs(classical_convex_envelope_1d(t, v, boundary=((0, 1), (1, 1))) - 1).max() <= 1e-12


@given(st.lists(st.floats(-10, 10), min_size=3, max_size=12))
def test_classical_hull_against_brute_force(vals):
    v = np.array(vals)
    t = np.arange(len(v), dtype=float)
    hull = classical_convex_envelope_1d(t, v)
    assert np.allclose(hull, hull_oracle(t, v), atol=1e-9)
    assert np.all(hull <= v + 1e-12)


def test_nonlocal_mean_update():
    q = build_quadrature(FractionalOrder(0.6), 1 / 32, 1.0)
    x = np.array([0.1, -0.2])
    dirs = DirectionSet(2, 8).directions
    c = lambda p: np.full(len(p), 0.4)
    aff = lambda p: 1.0 + 0.5 * p[:, 0] - 2.0 * p[:, 1]
    for z in dirs:
        assert nonlocal_mean_update(grid(Ball(), c), c, x, z, q) == pytest.approx(0.4, abs=1e-14)
        val = nonlocal_mean_update(grid(Ball(), aff), aff, x, z, q)
        assert val == pytest.approx(aff(x[None])[0], abs=1e-10)


@given(st.floats(0.0, 1.0))
def test_nonlocal_mean_update_monotone(bump):
    q = build_quadrature(FractionalOrder(0.5), 1 / 32, 1.0)
    x, z = np.array([0.0, 0.1]), np.array([1.0, 0.0])
    lo = grid(Ball(), wave)
    hi = grid(Ball(), lambda p: wave(p) + bump * np.exp(-(p**2).sum(axis=1)))
    assert nonlocal_mean_update(lo, wave, x, z, q) <= nonlocal_mean_update(hi, wave, x, z, q) + 1e-14


def test_estimator_params_and_predict():
    est = SConvexEnvelope(s=0.5, spacing=DX, direction_count=16)
    params = est.get_params()
    assert params["s"] == 0.5 and params["direction_count"] == 16
    other = clone(est).set_params(s=0.7)
    assert other.s == 0.7 and est.s == 0.5
    est.fit(Ball(), wave)
    assert est.converged_ and est.residual_ <= est.result_.residual_tolerance
    X = np.array([[0.0, 0.0], [0.3, -0.4], [1.5, 0.0]])
    out = est.predict(X)
    assert out.shape == (3,)
    assert out[2] == pytest.approx(wave(X[2:])[0])
    with pytest.raises(ValueError):
        est.predict(np.zeros((2, 3)))


def test_estimator_concave():
    a = SConcaveEnvelope(spacing=DX, direction_count=16).fit("ball:1.0", wave)
    b = SConvexEnvelope(spacing=DX, direction_count=16).fit("ball:1.0", wave)
    X = np.array([[0.1, 0.2]])
    assert a.predict(X)[0] >= b.predict(X)[0]


def test_predict_before_fit():
    from sklearn.exceptions import NotFittedError

    with pytest.raises(NotFittedError):
        SConvexEnvelope().predict(np.zeros((1, 2)))


@pytest.mark.parametrize(
    "kwargs",
    [
        {"spacing": 0.0},
        {"tolerance": -1.0},
        {"relaxation": 1.5},
        {"direction_count": 4},
        {"sweep_order": "random"},
        {"accelerator": "multigrid"},
        {"mode": "localized_union"},
        {"max_sweeps": 0},
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        SolverConfig(**kwargs)
