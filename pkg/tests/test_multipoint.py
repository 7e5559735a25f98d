from __future__ import annotations

import numpy as np
import pytest

from globalbisect.errors import (DegenerateSpacingError, DimensionError, NotConcordantError,
                                 NotIndependentError, OrientationError)
from globalbisect.geometry import Manifold
from globalbisect.groupoid import Groupoid, evaluate, target_map, unit, verify_bisection
from globalbisect.multipoint import (BasePair, bisection_through_points, find_chains, is_concordant,
                                     is_independent, is_well_ordered, separated_bisection, well_order)
from globalbisect.single_point import ConstructionRequest, bisection_through

from .oracles import (canonical_cycles, concordant, cycles_bruteforce, expressible, random_pairs,
                      some_valid_ordering, well_ordered)

PLANE = Manifold.euclidean(2)
BOX = Manifold.box([[0.0, 4.0], [0.0, 4.0]])
# labelled ground points for the combinatorial examples
GROUND = {c: np.array([np.cos(k), np.sin(k)]) * (1 + 0.1 * k) for k, c in enumerate("abcdefghijkl")}


def labelled(spec):
    return [BasePair(GROUND[x], GROUND[y], i) for i, (x, y) in enumerate(spec)]


def indexed(pairs):
    pts = np.array([[np.cos(k), np.sin(k)] for k in range(12)]) * 2.0
    return [BasePair(pts[a], pts[b], i) for i, (a, b) in enumerate(pairs)]


# ------------------------------------------------------------- concordance

@pytest.mark.parametrize("spec, expected", [
    (["ab"], True),
    (["ab", "ac"], False),
    (["ab", "cb"], False),
    (["ab", "ba"], True),
])
def test_is_concordant(spec, expected):
    assert is_concordant(labelled(spec)) is expected


@pytest.mark.parametrize("spec, chains", [
    (["ab", "ba"], [(0, 1)]),
    (["ab", "bc", "ca", "de"], [(0, 1, 2)]),
    (["ab", "bc", "dg", "ge", "cf"], []),          # two paths sharing no loop
    (["ba", "ab", "dc", "cd"], [(0, 1), (2, 3)]),
    (["aa", "bc"], []),                             # a unit pair is not a chain
])
def test_find_chains_examples(spec, chains):
    assert find_chains(labelled(spec)) == chains


@pytest.mark.parametrize("spec, expected", [(["ab"], True), (["ab", "ba"], False), (["ab", "bc"], True)])
def test_is_independent_examples(spec, expected):
    assert is_independent(labelled(spec)) is expected


def test_well_order_examples():
    assert well_order(labelled(["ab"])) == [0]
    # (b, c) must come before (a, b)
    assert well_order(labelled(["ab", "bc"])) == [1, 0]
    with pytest.raises(NotIndependentError):
        well_order(labelled(["ab", "ba"]))


@pytest.mark.parametrize("seed", range(4))
def test_chains_match_bruteforce(seed):
    rng = np.random.default_rng(seed)
    for _ in range(60):
        n = int(rng.integers(1, 9))
        pairs = random_pairs(rng, n, ground=max(n + 1, 10))
        got = find_chains(indexed(pairs))
        assert got == canonical_cycles(cycles_bruteforce(pairs))
        # chains are disjoint
        flat = [i for c in got for i in c]
        assert len(flat) == len(set(flat))


@pytest.mark.parametrize("seed", range(4))
def test_well_order_against_permutation_search(seed):
    rng = np.random.default_rng(100 + seed)
    for _ in range(60):
        n = int(rng.integers(1, 7))
        pairs = random_pairs(rng, n)
        bp = indexed(pairs)
        indep = is_independent(bp)
        assert some_valid_ordering(pairs) is indep
        if indep:
            order = well_order(bp)
            assert sorted(order) == list(range(n))
            assert well_ordered([pairs[i] for i in order])
            assert is_well_ordered([bp[i] for i in order])


@pytest.mark.parametrize("seed", range(3))
def test_independence_matches_expressibility(seed):
    rng = np.random.default_rng(200 + seed)
    for _ in range(60):
        n = int(rng.integers(1, 6))
        pairs = random_pairs(rng, n, ground=8)
        assert concordant(pairs)
        dependent = any(expressible(pairs, i) for i in range(n))
        assert is_independent(indexed(pairs)) is (not dependent)


# ------------------------------------------------------------- separation

def test_separated_empty_fixed_matches_plain():
    G = Groupoid.pair(PLANE)
    g = G.element([0, 0], [1, 0])
    a = separated_bisection(g, [])
    b = bisection_through(ConstructionRequest(g))
    X = np.random.default_rng(0).uniform(-1, 2, size=(50, 2))
    assert np.array_equal(target_map(a, X), target_map(b, X))


def test_separated_fixes_point():
    G = Groupoid.pair(PLANE)
    w = separated_bisection(G.element([0, 0], [2, 0]), [[1.0, 0.0]])
    np.testing.assert_allclose(target_map(w, np.array([[0.0, 0.0]]))[0], [2.0, 0.0], atol=1e-6)
    assert np.array_equal(target_map(w, np.array([[1.0, 0.0]])), [[1.0, 0.0]])


def test_separated_unit_is_identity():
    G = Groupoid.pair(PLANE)
    assert len(separated_bisection(unit(G, [0.5, 0.5]), [[1.0, 1.0], [0.0, 0.0]])) == 0


def test_separated_refuses_dimension_one():
    M = Manifold.box([[0.0, 3.0]])
    G = Groupoid.pair(M)
    with pytest.raises(DimensionError):
        separated_bisection(G.element([0.5], [2.5]), [[1.5]])


# ------------------------------------------------------------ end to end

def test_single_element_reduces_to_plain():
    G = Groupoid.pair(PLANE)
    w = bisection_through_points([G.element([0, 0], [1, 0.5])])
    np.testing.assert_allclose(target_map(w, np.array([[0.0, 0.0]]))[0], [1.0, 0.5], atol=1e-6)


def test_two_chain_swap():
    G = Groupoid.pair(PLANE)
    w = bisection_through_points([G.element([0, 0], [1, 1]), G.element([1, 1], [0, 0])])
    Y = target_map(w, np.array([[0.0, 0.0], [1.0, 1.0]]))
    np.testing.assert_allclose(Y, [[1.0, 1.0], [0.0, 0.0]], atol=1e-6)
    assert w.meta["chains"] == [[0, 1]]
    assert len(w.meta["chain_breaks"]) == 1
    assert verify_bisection(w, None, 200).passed()


def _spread_points(rng, n, lo=0.3, hi=3.7, min_dist=0.5):
    while True:
        P = rng.uniform(lo, hi, size=(n, 2))
        d = np.linalg.norm(P[:, None] - P[None], axis=2) + np.eye(n) * 9
        if d.min() >= min_dist:
            return P


def test_independent_five_with_stage_invariant():
    G = Groupoid.pair(BOX)
    P = _spread_points(np.random.default_rng(5), 10)
    els = [G.element(P[i], P[5 + i]) for i in range(5)]
    w = bisection_through_points(els)
    assert max(r["base"] for r in w.meta["residuals"]) <= 1e-6
    stages = w.meta["orderings"][0]["checks"]
    assert len(stages) == 5
    for k, st in enumerate(stages):
        assert st["later_sources_fixed"]
        assert st["max_error"] <= (k + 1) * 1e-6
    assert w.meta["output_concordant"]


def test_path_of_five_is_well_ordered_and_routed():
    G = Groupoid.pair(BOX)
    P = np.array([[0.8, 0.8], [2.0, 0.9], [3.2, 1.3], [2.7, 2.6], [1.4, 3.1], [0.9, 2.0]])
    els = [G.element(P[i], P[i + 1]) for i in range(5)]
    w = bisection_through_points(els)
    np.testing.assert_allclose(target_map(w, P[:5]), P[1:], atol=1e-6)
    # the last source moves first in the telescoped product
    assert w.meta["orderings"][0]["ordering"] == [4, 3, 2, 1, 0]


def test_three_chain_and_extra_pair():
    G = Groupoid.pair(BOX)
    a, b, c, d, e = np.array([[1.0, 1.0], [3.0, 1.0], [2.0, 2.8], [0.6, 3.2], [3.3, 3.3]])
    w = bisection_through_points([G.element(a, b), G.element(b, c), G.element(c, a), G.element(d, e)])
    np.testing.assert_allclose(target_map(w, np.array([a, b, c, d])), [b, c, a, e], atol=1e-6)
    assert w.meta["chains"] == [[0, 1, 2]]


def test_frame_chain_with_reflections():
    G = Groupoid.frame(BOX, 3)
    A1 = np.diag([-1.0, 2.0, 1.0])
    A2 = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 3.0]])
    w = bisection_through_points([G.element([1, 1], [3, 3], A1), G.element([3, 3], [1, 1], A2)])
    _, A, _ = evaluate(w, np.array([[1.0, 1.0], [3.0, 3.0]]))
    np.testing.assert_allclose(A[0], A1, atol=1e-8)
    np.testing.assert_allclose(A[1], A2, atol=1e-8)


def test_frame_mixed_orientation_rejected():
    G = Groupoid.frame(BOX, 2)
    with pytest.raises(OrientationError):
        bisection_through_points([G.element([1, 1], [2, 2], np.diag([-1.0, 1.0])),
                                  G.element([3, 1], [3, 3], np.eye(2))])


def test_action_chain():
    T = Manifold.torus([1.0, 1.0])
    G = Groupoid.action(T)
    w = bisection_through_points([G.element([0.2, 0.2], g=[0.3, 0.1]), G.element([0.5, 0.3], g=[-0.3, -0.1])])
    _, _, Gv = evaluate(w, np.array([[0.2, 0.2], [0.5, 0.3]]))
    d = Gv - np.array([[0.3, 0.1], [-0.3, -0.1]])
    assert np.abs(d - np.round(d)).max() <= 1e-6


def test_not_concordant_message():
    G = Groupoid.pair(PLANE)
    with pytest.raises(NotConcordantError, match="pairwise distinct sources and pairwise distinct targets"):
        bisection_through_points([G.element([1, 1], [2, 2]), G.element([1, 1], [3, 3])])


def test_degenerate_spacing_rejected():
    G = Groupoid.pair(PLANE)
    with pytest.raises(DegenerateSpacingError):
        bisection_through_points([G.element([0, 0], [1, 0]), G.element([1.0, 1e-5], [2, 0])])


def test_deterministic_given_seed():
    G = Groupoid.pair(PLANE)
    els = [G.element([0, 0], [1, 1]), G.element([1, 1], [0, 0])]
    a = bisection_through_points(els, seed=3)
    b = bisection_through_points(els, seed=3)
    X = np.random.default_rng(0).uniform(-1, 2, size=(100, 2))
    assert np.array_equal(target_map(a, X), target_map(b, X))
