from __future__ import annotations

import numpy as np
import pytest
from scipy.stats import ortho_group, special_ortho_group

from globalbisect.errors import IllConditionedError, ParameterError
from globalbisect.exponential import (CompactSection, ConstantFactor, FiberBump, exp_bisection,
                                      gauge_generators, gauge_word, section_from_dict, skew_log, spd_log)
from globalbisect.geometry import BumpField, Curve, Manifold, tube_field
from globalbisect.groupoid import Groupoid, bis_eval, evaluate, identity_word, target_map

from .oracles import expm_series

PLANE = Manifold.euclidean(2)


def fiber_at(word, y):
    return bis_eval(word, np.asarray(y, dtype=float)).A


def test_zero_section_is_identity():
    G = Groupoid.frame(PLANE, 2)
    w = exp_bisection(CompactSection(G), 2.5)
    X = np.random.default_rng(0).normal(size=(20, 2))
    Y, A, _ = evaluate(w, X)
    assert np.array_equal(Y, X) and np.array_equal(A, np.broadcast_to(np.eye(2), A.shape))


def test_isotropy_exponential_matches_series():
    G = Groupoid.frame(PLANE, 3)
    S = np.array([[0.0, -0.7, 0.2], [0.7, 0.0, -0.4], [-0.2, 0.4, 0.0]]) + 0.3 * np.eye(3)
    X = CompactSection(G, None, FiberBump(np.array([1.0, 1.0]), 0.2, 0.5, S))
    e = bis_eval(exp_bisection(X), [1.0, 1.0])
    np.testing.assert_allclose(e.A, expm_series(S), atol=1e-8)
    np.testing.assert_array_equal(e.y, [1.0, 1.0])


def test_inverse_exponential_pair():
    G = Groupoid.pair(PLANE)
    X = CompactSection(G, BumpField([0, 0], 0.4, 1.0, [0.8, -0.3]))
    P = np.random.default_rng(1).uniform(-1.2, 1.2, size=(100, 2))
    out = target_map(exp_bisection(X, 1.0) * exp_bisection(X, -1.0), P)
    assert np.abs(out - P).max() <= 1e-6


def test_section_with_base_and_fiber_transport():
    """A section moving the base and twisting the fiber, checked against a dense RK4 oracle."""
    G = Groupoid.frame(PLANE, 2)
    base = BumpField([0, 0], 0.5, 1.2, [0.6, 0.2])
    S = np.array([[0.1, -1.0], [1.0, 0.0]])
    X = CompactSection(G, base, FiberBump(np.array([0.0, 0.0]), 0.4, 1.0, S))
    x0 = np.array([0.1, -0.1])
    fib = X.fiber

    def rhs(z):
        p = z[:2]
        A = z[2:].reshape(2, 2)
        w = float(fib.weight(p[None], PLANE)[0])
        return np.concatenate([base(p[None])[0], (w * S @ A).ravel()])

    from .oracles import rk4
    ref = rk4(rhs, np.concatenate([x0, np.eye(2).ravel()]), 1.0, 1e-4)
    e = bis_eval(exp_bisection(X), x0, h=1e-3)
    np.testing.assert_allclose(e.y, ref[:2], atol=1e-9)
    np.testing.assert_allclose(e.A, ref[2:].reshape(2, 2), atol=1e-8)


def test_support_contains_moved_points():
    G = Groupoid.frame(PLANE, 2)
    X = CompactSection(G, tube_field(Curve.segment([0, 0], [1, 0]), 0.3),
                       FiberBump(np.array([2.0, 2.0]), 0.2, 0.4, np.array([[0.0, 1.0], [-1.0, 0.0]])))
    P = np.random.default_rng(2).uniform(-1, 3, size=(3000, 2))
    Y, A, _ = evaluate(exp_bisection(X), P)
    still = np.all(Y == P, axis=1) & np.all(A == np.eye(2), axis=(1, 2))
    assert np.all(X.support.contains(P[~still]))
    assert np.all(still[~X.support.contains(P)])


# ------------------------------------------------------------------ gauge

def test_gauge_identity_is_empty():
    f = gauge_generators(np.eye(3), [0.0, 0.0], 0.5)
    assert f.sections == [] and np.array_equal(f.D, np.eye(3))


def test_gauge_diag_2_1():
    G = Groupoid.frame(PLANE, 2)
    y = np.array([1.0, 1.0])
    f = gauge_generators(np.diag([2.0, 1.0]), y, 0.5, groupoid=G)
    assert len(f.sections) == 2 and not f.reflects
    w = gauge_word(f, G)
    np.testing.assert_allclose(fiber_at(w, y), np.diag([2.0, 1.0]), atol=1e-8)
    far = np.array([[1.6, 1.0], [1.0, 0.4], [3.0, 3.0]])
    _, A, _ = evaluate(w, far)
    assert np.array_equal(A, np.broadcast_to(np.eye(2), A.shape))


def test_gauge_pure_reflection():
    G = Groupoid.frame(PLANE, 2)
    f = gauge_generators(np.diag([-1.0, 1.0]), [0.0, 0.0], 0.5, groupoid=G)
    np.testing.assert_array_equal(f.D, np.diag([-1.0, 1.0]))
    rest = gauge_word(type(f)(f.sections, np.eye(2)), G)
    np.testing.assert_allclose(fiber_at(rest, [0.0, 0.0]), np.eye(2), atol=1e-15)
    w = gauge_word(f, G)
    assert w.has_global_factor
    np.testing.assert_allclose(fiber_at(w, [0.0, 0.0]), np.diag([-1.0, 1.0]), atol=1e-15)


@pytest.mark.parametrize("seed", range(10))
def test_gauge_random_gl3(seed):
    rng = np.random.default_rng(seed)
    G = Groupoid.frame(PLANE, 3)
    A = rng.normal(size=(3, 3))
    y = np.array([0.5, -0.5])
    w = gauge_word(gauge_generators(A, y, 0.4, groupoid=G), G)
    np.testing.assert_allclose(fiber_at(w, y), A, atol=1e-8 * max(1.0, np.linalg.norm(A)))


@pytest.mark.parametrize("seed", range(5))
def test_gauge_orthogonal_stays_orthogonal(seed):
    G = Groupoid.frame(PLANE, 3)
    Q = ortho_group.rvs(3, random_state=seed)
    y = np.array([0.0, 0.0])
    f = gauge_generators(Q, y, 0.5, orthogonal_only=True, groupoid=G)
    assert len(f.sections) == 1
    w = gauge_word(f, G)
    P = np.random.default_rng(seed).uniform(-0.6, 0.6, size=(200, 2))
    _, A, _ = evaluate(w, P)
    err = np.abs(np.einsum("nji,njk->nik", A, A) - np.eye(3)).max()
    assert err <= 1e-8
    np.testing.assert_allclose(fiber_at(w, y), Q, atol=1e-8)


def test_gauge_rejects_singular():
    with pytest.raises(IllConditionedError):
        gauge_generators(np.array([[1.0, 1.0], [1.0, 1.0]]), [0.0, 0.0], 0.5)


def test_gauge_orthogonal_flag_needs_orthogonal_matrix():
    with pytest.raises(ParameterError):
        gauge_generators(np.diag([2.0, 1.0]), [0.0, 0.0], 0.5, orthogonal_only=True)


# ------------------------------------------------------------------- logs

@pytest.mark.parametrize("seed", range(8))
def test_skew_log_roundtrip(seed):
    from scipy.linalg import expm
    R = special_ortho_group.rvs(4, random_state=seed)
    S = skew_log(R)
    np.testing.assert_allclose(S, -S.T, atol=0)
    np.testing.assert_allclose(expm(S), R, atol=1e-12)


def test_skew_log_half_turn():
    from scipy.linalg import expm
    for R in (np.diag([-1.0, -1.0, 1.0]), -np.eye(2), np.diag([-1.0, -1.0, -1.0, -1.0])):
        np.testing.assert_allclose(expm(skew_log(R)), R, atol=1e-14)


def test_spd_log_roundtrip():
    from scipy.linalg import expm
    B = np.random.default_rng(3).normal(size=(3, 3))
    P = B @ B.T + 0.5 * np.eye(3)
    np.testing.assert_allclose(expm(spd_log(P)), P, atol=1e-12)


# ---------------------------------------------------------------- factors

def test_constant_factor_global_and_inverse():
    G = Groupoid.frame(PLANE, 2)
    D = ConstantFactor(G, np.diag([-1.0, 1.0]))
    w = exp_bisection(D)
    P = np.random.default_rng(4).normal(size=(5, 2))
    _, A, _ = evaluate(w * w.inverse(), P)
    assert np.array_equal(A, np.broadcast_to(np.eye(2), A.shape))
    assert w.has_global_factor and w.supports() == []


def test_section_dict_roundtrip():
    G = Groupoid.frame(PLANE, 2)
    X = CompactSection(G, BumpField([0, 0], 0.3, 0.6, [1.0, 0.0]),
                       FiberBump(np.array([0.0, 0.0]), 0.2, 0.4, np.array([[0.0, 1.0], [-1.0, 0.0]])))
    Y = section_from_dict(X.to_dict(), G)
    P = np.random.default_rng(5).uniform(-0.7, 0.7, size=(50, 2))
    a = evaluate(exp_bisection(X), P)
    b = evaluate(exp_bisection(Y), P)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_identity_word_has_no_generators():
    assert len(identity_word(Groupoid.pair(PLANE))) == 0
