import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracconvex import dirichlet1d
from fracconvex.dirichlet1d import (
    SegmentProblem,
    check_s_convexity,
    is_s_convex_on_segment,
    random_segments,
    solve_segment,
)
from fracconvex.geometry import Ball, Dumbbell, domain_from_spec
from fracconvex.kernel import FractionalOrder, TailModel, build_quadrature, frac_lap_1d
from fracconvex.scenarios import datum_from_spec, dyda_profile

bump = datum_from_spec("bump_2_4")


def test_constant_exterior_reproduced():
    p = SegmentProblem([0.0], [1.0], FractionalOrder(0.3), lambda t: np.full(np.shape(t), 0.7), n=100)
    assert np.abs(solve_segment(p) - 0.7).max() < 1e-12


def test_affine_exterior_reproduced_for_s_above_half():
    affine = lambda t: np.asarray(t, dtype=float)
    p = SegmentProblem([0.0], [1.0], FractionalOrder(0.75), affine, n=127, tail=TailModel.analytic(affine))
    assert np.abs(solve_segment(p) - p.nodes).max() < 1e-6


def test_bump_midpoint_gap_stable():
    gaps = []
    for n in (255, 511):
        p = SegmentProblem.from_function(bump, [-1.0], [1.0], FractionalOrder(0.5), n=n)
        v = solve_segment(p)
        gaps.append(1 - v[n // 2])
    assert min(gaps) > 0
    assert abs(gaps[0] - gaps[1]) / gaps[1] < 0.2


@given(st.integers(0, 2**32 - 1), st.sampled_from([0.2, 0.5, 0.8]))
def test_maximum_principle(seed, s):
    r = np.random.default_rng(seed)
    coef = r.normal(size=5)
    g = lambda t: np.tanh(np.polynomial.polynomial.polyval(np.asarray(t) / 3, coef))
    p = SegmentProblem([0.0], [1.0], FractionalOrder(s), g, n=40)
    v = solve_segment(p)
    tt = np.linspace(-p.truncation_radius, 1 + p.truncation_radius, 4001)
    ext = g(tt[(tt <= 0) | (tt >= 1)])
    assert ext.min() - 1e-12 <= v.min() and v.max() <= ext.max() + 1e-12


@given(st.integers(0, 2**32 - 1))
def test_discrete_comparison(seed):
    r = np.random.default_rng(seed)
    c1, c2 = r.normal(size=4), r.normal(size=4)
    g1 = lambda t: np.sin(np.polynomial.polynomial.polyval(np.asarray(t), c1))
    g2 = lambda t: g1(t) + 0.5 + 0.5 * np.cos(np.polynomial.polynomial.polyval(np.asarray(t), c2))
    o = FractionalOrder(0.4)
    v1 = solve_segment(SegmentProblem([0.0], [1.0], o, g1, n=50))
    v2 = solve_segment(SegmentProblem([0.0], [1.0], o, g2, n=50))
    assert np.all(v1 <= v2 + 1e-12)


def test_strong_maximum_principle():
    g = lambda t: np.where(np.asarray(t) > 2.5, 0.0, 1.0)
    v = solve_segment(SegmentProblem([0.0], [1.0], FractionalOrder(0.5), g, n=64))
    assert np.all(v < 1.0)


def test_iterative_path_matches_dense(monkeypatch):
    g = lambda t: np.cos(np.asarray(t))
    p = SegmentProblem([0.0], [1.0], FractionalOrder(0.6), g, n=300)
    dense = solve_segment(p)
    monkeypatch.setattr(dirichlet1d, "DENSE_LIMIT", 10)
    assert np.abs(solve_segment(p) - dense).max() < 1e-10


def test_permuted_ordering_identical():
    g = lambda t: np.sin(3 * np.asarray(t))
    p = SegmentProblem([0.0], [1.0], FractionalOrder(0.5), g, n=60)
    a = dirichlet1d._assemble(p)
    from scipy.linalg import toeplitz

    A = toeplitz(a.column)
    perm = np.random.default_rng(0).permutation(p.n)
    vp = np.linalg.solve(A[np.ix_(perm, perm)], a.rhs[perm])
    v = np.empty(p.n)
    v[perm] = vp
    assert np.abs(v - solve_segment(p)).max() < 1e-12


@pytest.mark.parametrize("lam", [0.5, 0.25])
def test_scaling_covariance(lam):
    # w_λ(t) = w(λ t) along the stretched segment, so its operator is λ^{2s} times
    s = 0.4
    o = FractionalOrder(s)
    w = lambda t: 1.0 / (1.0 + np.asarray(t, dtype=float) ** 2)
    wl = lambda t: w(lam * np.asarray(t, dtype=float))
    h = 1 / 256
    q = build_quadrature(o, h, 8.0)
    K = q.half_width
    t = h * np.arange(-K, K + 1)
    base = frac_lap_1d(w(t), K, q, TailModel.analytic(w), t0=t[0])
    scaled = frac_lap_1d(wl(t), K, q, TailModel.analytic(wl), t0=t[0])
    assert scaled / base == pytest.approx(lam ** (2 * s), rel=0.01)


def test_problem_validation():
    o = FractionalOrder(0.5)
    with pytest.raises(ValueError):
        SegmentProblem([0.0], [1.0], o, lambda t: t, n=0)
    with pytest.raises(ValueError):
        SegmentProblem([0.0], [1.0], o, lambda t: t, truncation_radius=0.5)
    with pytest.raises(ValueError):
        SegmentProblem([0.0, 0.0], [2.0, 0.0], o, lambda t: t, domain=Ball())


def test_rejects_nonfinite_exterior():
    p = SegmentProblem([0.0], [1.0], FractionalOrder(0.5), lambda t: np.full(np.shape(t), np.inf), n=8)
    with pytest.raises(ValueError):
        solve_segment(p)


# ---------------------------------------------------------------- checker


def test_dyda_profile_is_s_convex():
    for s in (0.25, 0.5, 0.75):
        u = dyda_profile(s)
        rep = check_s_convexity(u, domain_from_spec("interval:-1:1"), FractionalOrder(s), count=30)
        assert rep.holds and rep.pass_rate == 1.0


def test_bump_exterior_not_s_convex():
    rep = is_s_convex_on_segment(bump, [-1.0], [1.0], FractionalOrder(0.5), n=255)
    assert not rep.holds
    assert rep.worst_violation > rep.tolerance
    mid = len(rep.t) // 2
    assert rep.t[mid] == pytest.approx(0.5)
    assert rep.u[mid] - rep.v[mid] > rep.tolerance


def test_constant_passes_everywhere():
    rep = check_s_convexity(lambda p: np.ones(len(p)), Dumbbell(), FractionalOrder(0.5), count=20)
    assert rep.holds and rep.worst_violation == pytest.approx(0.0, abs=1e-12)


def test_convex_function_s_convex_for_s_above_half():
    u = lambda p: np.sqrt(1 + (np.asarray(p) ** 2).sum(axis=1))
    rep = check_s_convexity(u, Ball(), FractionalOrder(0.75), count=30, tail="analytic")
    assert rep.holds


def test_random_segments_inside(rng):
    d = Dumbbell()
    for x, y in random_segments(d, count=50, seed=7):
        assert dirichlet1d.segment_inside(d, x, y)
        assert np.linalg.norm(y - x) >= 0.05


def test_random_segments_deterministic():
    a = random_segments(Ball(), count=5, seed=3)
    b = random_segments(Ball(), count=5, seed=3)
    assert all(np.array_equal(p, q) for s1, s2 in zip(a, b) for p, q in zip(s1, s2))
