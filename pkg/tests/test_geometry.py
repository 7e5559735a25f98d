from __future__ import annotations

import numpy as np
import pytest
from scipy.optimize import minimize_scalar
from hypothesis import given, settings
from hypothesis import strategies as st

from globalbisect.errors import DimensionError, ParameterError, TubeRadiusError
from globalbisect.geometry import (Ball, Box, BumpField, Curve, Manifold, Punctured, Whole, check_reach,
                                   flow, plan_path, smooth_step, split_injective, tube_field)
from globalbisect.geometry.curves import segment_distances
from globalbisect.geometry.fields import bump_scalar, effective_step
from globalbisect.geometry import planning

from .oracles import rk4, smooth_step_formula

BOX = Manifold.box([[0.0, 4.0], [0.0, 4.0]])
TORUS = Manifold.torus([4.0, 4.0])
coord = st.floats(0.0, 4.0, allow_nan=False)
point = st.tuples(coord, coord)


# ------------------------------------------------------------------ manifolds

@pytest.mark.parametrize("M", [BOX, TORUS, Manifold.euclidean(2)], ids=["box", "torus", "plane"])
@settings(max_examples=60, deadline=None)
@given(a=point, b=point, c=point)
def test_distance_is_a_metric(M, a, b, c):
    d = lambda p, q: float(M.distance(np.array(p), np.array(q)))
    assert d(a, b) == pytest.approx(d(b, a), abs=1e-12)
    assert d(a, a) == 0.0
    assert d(a, c) <= d(a, b) + d(b, c) + 1e-12


def test_torus_displacement_is_minimal_image():
    v = TORUS.displacement(np.array([0.1, 0.1]), np.array([3.9, 3.9]))
    np.testing.assert_allclose(v, [-0.2, -0.2], atol=1e-12)
    assert float(TORUS.distance(np.array([0.1, 0.1]), np.array([3.9, 3.9]))) == pytest.approx(0.2 * np.sqrt(2))


def test_manifold_validation():
    with pytest.raises(ParameterError):
        Manifold.box([[1.0, 1.0]])
    with pytest.raises(ParameterError):
        Manifold.torus([0.0, 1.0])


def test_manifold_dict_roundtrip():
    for M in (BOX, TORUS, Manifold.euclidean(3)):
        assert Manifold.from_dict(M.to_dict()) == M


# -------------------------------------------------------------------- regions

@pytest.mark.parametrize("region, p, expected", [
    (Ball([2.0, 2.0], 1.0, BOX), [2.5, 2.0], 0.5),
    (Ball([2.0, 2.0], 1.0, BOX), [3.5, 2.0], 0.0),
    (Box([1.0, 1.0], [3.0, 2.0], BOX), [2.0, 1.25], 0.25),
    (Punctured(Ball([2.0, 2.0], 1.0, BOX), [[2.0, 2.2]]), [2.0, 2.0], 0.2),
])
def test_region_clearance_exact(region, p, expected):
    assert float(region.clearance(np.array(p))[0]) == pytest.approx(expected, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(p=point)
def test_positive_clearance_implies_contains(p):
    U = Punctured(Ball([2.0, 2.0], 1.5, BOX), [[2.0, 2.0], [2.5, 1.5]])
    c = float(U.clearance(np.array(p))[0])
    if c > 0:
        assert U.contains(np.array(p))[0]


def test_region_sampling_stays_inside():
    U = Punctured(Ball([2.0, 2.0], 1.5, BOX), [[2.0, 2.0]])
    pts = U.sample(300, np.random.default_rng(0))
    assert pts.shape == (300, 2)
    assert np.all(U.contains(pts))


def test_ball_is_within():
    assert Ball([2.0, 2.0], 0.5, BOX).is_within(Ball([2.0, 2.0], 1.0, BOX))
    assert not Ball([2.0, 2.0], 1.0, BOX).is_within(Ball([2.0, 2.0], 0.5, BOX))


# --------------------------------------------------------------------- curves

def test_curve_endpoints_exact():
    th = np.linspace(0.0, 1.3, 17)
    pts = np.c_[np.cos(th), np.sin(th)]
    c = Curve.from_points(pts)
    assert np.array_equal(c(0.0), pts[0])
    assert np.array_equal(c(1.0), pts[-1])


def test_arclength_reparametrisation_keeps_image():
    th = np.linspace(0.0, np.pi / 2, 9) ** 1.5
    c = Curve.from_points(np.c_[np.cos(th), np.sin(th)])
    r = c.reparametrize_arclength(64)
    # every resampled node lies on the original curve
    for node in r.samples:
        t = minimize_scalar(lambda t: float(np.linalg.norm(c(t) - node)), bounds=(0.0, 1.0),
                            method="bounded").x
        for _ in range(4):      # Newton on the foot-point condition c'(t) . (c(t) - node) = 0
            d, v, a = c(t) - node, c(t, nu=1), c(t, nu=2)
            t = float(np.clip(t - (v @ d) / (v @ v + a @ d), 0.0, 1.0))
        assert np.linalg.norm(c(t) - node) <= 1e-9 * c.length
    gaps = np.linalg.norm(np.diff(r.samples, axis=0), axis=1)
    assert np.ptp(gaps) / gaps.mean() < 1e-3


def test_split_injective_segment_is_one_arc():
    c = Curve.segment([0.0, 0.0], [1.0, 0.0], 20)
    arcs = split_injective(c, 0.01)
    assert len(arcs) == 1 and np.array_equal(arcs[0].samples, c.samples)


def _injective(curve, eps):
    """Polyline oracle: no two segments more than a few spacings apart come within 2 eps."""
    P = curve.samples
    s = curve.arclength_at_breaks()
    thr = max(3.0 * curve.mean_spacing, np.pi * eps)
    for j in range(1, len(P)):
        for i in range(j - 1):
            if s[j - 1] - s[i + 1] > thr:
                if segment_distances(P[j - 1], P[j], P[i:i + 1], P[i + 1:i + 2])[0] < 2 * eps:
                    return False
    return True


@pytest.mark.parametrize("n", [150, 300])
def test_split_injective_figure_eight(n):
    t = np.linspace(-np.pi / 2 + 0.3, 3 * np.pi / 2 - 0.3, n)
    c = Curve.from_points(np.c_[np.sin(t), np.sin(t) * np.cos(t)])
    arcs = split_injective(c, 0.01)
    assert len(arcs) >= 2
    assert all(_injective(a, 0.01) for a in arcs)
    # arcs concatenate back to the original
    joined = np.vstack([arcs[0].samples] + [a.samples[1:] for a in arcs[1:]])
    assert np.array_equal(joined, c.samples)


def test_split_injective_crossing_between_samples():
    t = np.linspace(0, 2 * np.pi, 200)[:150]
    c = Curve.from_points(np.c_[np.sin(t), np.sin(t) * np.cos(t)])
    assert len(split_injective(c, 0.01)) >= 2


def test_split_injective_closed_loop():
    t = np.linspace(0, 2 * np.pi, 100)
    assert len(split_injective(Curve.from_points(np.c_[np.cos(t), np.sin(t)]), 0.01)) >= 2


def test_segment_distances_against_brute_force():
    rng = np.random.default_rng(3)
    u = np.linspace(0, 1, 401)
    for _ in range(30):
        p, q, a, b = rng.normal(size=(4, 3))
        got = segment_distances(p, q, a[None], b[None])[0]
        S = p + u[:, None] * (q - p)
        T = a + u[:, None] * (b - a)
        brute = np.linalg.norm(S[:, None] - T[None], axis=2).min()
        assert got <= brute + 1e-12
        assert got >= brute - 5e-3


# ---------------------------------------------------------------- cutoffs

def test_bump_scalar_plateau_and_outside():
    chi = bump_scalar([0.0, 0.0], 1.0, 2.0)
    assert chi(np.array([[0.5, 0.0]]))[0] == 1.0
    assert chi(np.array([[3.0, 0.0]]))[0] == 0.0


def test_bump_scalar_transition_regression():
    chi = bump_scalar([0.0, 0.0], 1.0, 2.0)
    # frozen from the exp(-1/s) ratio profile; 1.5 is its symmetric midpoint
    assert chi(np.array([[1.5, 0.0]]))[0] == pytest.approx(0.5, abs=1e-15)
    assert chi(np.array([[0.0, 1.25]]))[0] == pytest.approx(0.935030830871336, abs=1e-14)


@settings(max_examples=80, deadline=None)
@given(r=st.floats(0.0, 3.0))
def test_smooth_step_matches_formula(r):
    assert float(smooth_step(np.array([r]), 1.0, 2.0)[0]) == pytest.approx(smooth_step_formula(r, 1.0, 2.0), abs=1e-14)


def test_smooth_step_monotone():
    r = np.linspace(0.0, 3.0, 2001)
    v = smooth_step(r, 1.0, 2.0)
    assert np.all(np.diff(v) <= 0)


# ------------------------------------------------------------- tube fields

def test_tube_field_segment_reaches_end():
    f = tube_field(Curve.segment([0.0, 0.0], [1.0, 0.0]), 0.3)
    np.testing.assert_allclose(flow(f, 1.0, [0.0, 0.0], h=1e-3), [1.0, 0.0], atol=1e-6)


def test_tube_field_vanishes_off_tube():
    f = tube_field(Curve.segment([0.0, 0.0], [1.0, 0.0]), 0.3)
    v = f(np.array([[0.5, 5.0]]))
    assert np.array_equal(v, np.zeros((1, 2)))


def test_tube_flow_richardson():
    f = tube_field(Curve.segment([0.0, 0.0], [1.0, 0.0]), 0.3)
    a = flow(f, 1.0, [0.0, 0.0], h=1e-3)
    b = flow(f, 1.0, [0.0, 0.0], h=1e-4)
    np.testing.assert_allclose(a, b, atol=1e-6)


def test_quarter_circle_half_time():
    th = np.linspace(0.0, np.pi / 2, 65)
    arc = Curve.from_points(np.c_[np.cos(th), np.sin(th)], th / (np.pi / 2)).reparametrize_arclength()
    f = tube_field(arc, 0.1)
    p = flow(f, 0.5, [1.0, 0.0], h=1e-3)
    ref = rk4(lambda x: f(x[None])[0], [1.0, 0.0], 0.5, 1e-5)
    np.testing.assert_allclose(p, ref, atol=1e-6)
    np.testing.assert_allclose(p, [np.sqrt(0.5), np.sqrt(0.5)], atol=1e-6)


def test_tube_radius_rejected_beyond_reach():
    th = np.linspace(0.0, np.pi / 2, 65)
    arc = Curve.from_points(np.c_[np.cos(th), np.sin(th)]).reparametrize_arclength()
    with pytest.raises(TubeRadiusError):
        check_reach(arc, 0.9)


def test_tube_support_contains_all_nonzero_values():
    th = np.linspace(0.0, np.pi, 40)
    c = Curve.from_points(np.c_[1.5 + np.cos(th), 1.5 + np.sin(th)]).reparametrize_arclength()
    f = tube_field(c, 0.2)
    pts = np.random.default_rng(1).uniform(0, 3, size=(4000, 2))
    v = f(pts)
    outside = ~f.support.contains(pts)
    assert outside.any()
    assert np.array_equal(v[outside], np.zeros_like(v[outside]))


# ----------------------------------------------------------------- flows

def test_flow_zero_time_and_outside():
    f = BumpField([1.0, 1.0], 0.3, 0.6, [1.0, 0.5])
    x = np.array([0.123, 0.987])
    assert np.array_equal(flow(f, 0.0, x), x)
    far = np.array([3.0, 3.0])
    assert np.array_equal(flow(f, 2.0, far), far)


def test_bump_flow_against_dense_rk4():
    f = BumpField([1.0, 1.0], 0.3, 0.8, [0.4, -0.2], linear=[[0.0, -0.5], [0.5, 0.0]])
    x0 = np.array([0.9, 1.1])
    ref = rk4(lambda x: f(x[None])[0], x0, 1.0, 1e-5)
    np.testing.assert_allclose(flow(f, 1.0, x0, h=1e-3), ref, atol=1e-9)


def test_effective_step_respects_lipschitz():
    f = BumpField([1.0, 1.0], 0.1, 0.2, [5.0, 0.0])
    assert effective_step(f, 1e-1) <= 0.2 / f.lipschitz + 1e-15
    assert effective_step(f, 1e-6) == 1e-6


def test_bump_radius_on_torus():
    with pytest.raises(ParameterError):
        BumpField([1.0, 1.0], 0.5, 2.5, [1.0, 0.0], manifold=TORUS)


# -------------------------------------------------------------- planning

def test_plan_straight_when_unobstructed():
    c = plan_path([0.0, 0.0], [1.0, 0.0])
    _, pts = c.dense(16)
    assert np.abs(pts[:, 1]).max() == 0.0
    assert np.array_equal(c(0.0), [0.0, 0.0]) and np.array_equal(c(1.0), [1.0, 0.0])


def test_plan_detours_around_obstacle():
    c = plan_path([0.0, 0.0], [2.0, 0.0], [[1.0, 0.0]], 0.2)
    _, pts = c.dense(64)
    assert np.linalg.norm(pts - [1.0, 0.0], axis=1).min() >= 0.2
    assert np.array_equal(c(0.0), [0.0, 0.0]) and np.array_equal(c(1.0), [2.0, 0.0])
    assert len(split_injective(c, 0.1)) == 1


def test_plan_rejects_dimension_one():
    with pytest.raises(DimensionError, match="dimension too low"):
        plan_path([0.0], [1.0], [[0.5]], 0.1, manifold=Manifold.box([[0.0, 2.0]]))


def test_plan_stays_in_region():
    U = Ball([2.0, 2.0], 1.2, BOX)
    c = plan_path([1.2, 2.0], [2.8, 2.0], [[2.0, 2.0]], 0.2, U)
    _, pts = c.dense(32)
    assert np.all(U.contains(pts))
    assert np.linalg.norm(pts - [2.0, 2.0], axis=1).min() >= 0.2


def test_plan_wraps_on_torus():
    T = Manifold.torus([1.0, 1.0])
    c = plan_path([0.1, 0.1], [0.9, 0.9], manifold=T)
    assert c.length == pytest.approx(0.2 * np.sqrt(2), rel=1e-9)


def test_planner_grid_fallback_threads_a_narrow_gap():
    # the only route passes between the top obstacle and the box edge
    U = Whole(BOX)
    x, y = np.array([0.6, 3.2]), np.array([3.3, 3.3])
    obs = np.array([[2.0, 2.8], [3.0, 1.0], [1.0, 1.0]])
    planner = planning._Planner(x, y, obs, 0.66, U, BOX, 0.33)
    c = planning._grid_route(planner)
    assert c is not None
    _, pts = c.dense(16)
    assert np.allclose(c.start, x) and np.allclose(c.end, y)
    assert np.linalg.norm(pts[:, None] - obs[None], axis=2).min() >= 0.66
    assert np.all(U.contains(pts))
    assert pts[:, 1].max() > 2.8 + 0.66


def test_planner_grid_reports_blocked_route():
    U = Box([0.0, 0.0], [4.0, 1.0], BOX)
    planner = planning._Planner(np.array([0.5, 0.5]), np.array([3.5, 0.5]), np.array([[2.0, 0.5]]),
                                0.6, U, BOX, 0.3)
    assert planning._grid_route(planner) is None
