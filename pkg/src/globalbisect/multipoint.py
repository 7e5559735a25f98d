"""Bisections through several prescribed elements.

Combinatorics of base pairs ``(x_i, y_i)``: concordance (distinct sources
and distinct targets), chains (cycles of ``y_i = x_j`` matches), independence
and well-orderings.  Independent elements are routed one at a time by
bisections that fix the already-routed targets and the not-yet-routed
sources; each chain is first broken through an auxiliary point ``y0``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (ConstructionError, DegenerateSpacingError, DimensionError,
                     NotConcordantError, NotIndependentError, OrientationError, ParameterError,
                     SamplingError)
from .exponential import ConstantFactor
from .geometry.manifold import Manifold, as_points
from .geometry.regions import Region, Whole
from .groupoid import (EPS_MATCH, BisectionWord, Element, Generator, Groupoid, bis_mul, compose,
                       element_error, evaluate, identity_word, invert)
from .single_point import ConstructionRequest, bisection_through

MIN_SPACING = 1e-3
Y0_BATCH = 32
Y0_DRAWS = 1000


@dataclass(frozen=True, eq=False)
class BasePair:
    x: np.ndarray
    y: np.ndarray
    index: int


def base_pairs(elements) -> list[BasePair]:
    return [BasePair(e.x, e.y, i) for i, e in enumerate(elements)]


def _manifold(pairs, manifold):
    if manifold is not None:
        return manifold
    return Manifold.euclidean(len(pairs[0].x)) if pairs else Manifold.euclidean(1)


def _match(pairs, which_a, which_b, M, eps):
    """Boolean matrix ``m[i, j] = |a_i - b_j| <= eps``."""
    if not pairs:
        return np.zeros((0, 0), dtype=bool)
    a = np.array([getattr(p, which_a) for p in pairs])
    b = np.array([getattr(p, which_b) for p in pairs])
    return M.distance(a[:, None, :], b[None, :, :]) <= eps


def concordance_violation(pairs, manifold: Manifold | None = None,
                          eps: float = EPS_MATCH) -> tuple[str, int, int] | None:
    """First ``(kind, i, j)`` with equal sources (``kind='source'``) or targets, else ``None``."""
    M = _manifold(pairs, manifold)
    for kind in ("x", "y"):
        m = _match(pairs, kind, kind, M, eps)
        iu = np.argwhere(np.triu(m, 1))
        if len(iu):
            i, j = map(int, iu[0])
            return ("source" if kind == "x" else "target", i, j)
    return None


def is_concordant(pairs, manifold: Manifold | None = None, eps: float = EPS_MATCH) -> bool:
    """True iff all sources are pairwise distinct and all targets are pairwise distinct."""
    return concordance_violation(pairs, manifold, eps) is None


def _successor(pairs, M, eps) -> list[int | None]:
    m = _match(pairs, "y", "x", M, eps)
    out = []
    for i in range(len(pairs)):
        js = np.nonzero(m[i])[0]
        out.append(int(js[0]) if len(js) else None)
    return out


def find_chains(pairs, manifold: Manifold | None = None, eps: float = EPS_MATCH) -> list[tuple]:
    """Disjoint cycles ``i1 -> i2 -> ... -> i1`` of the matches ``y_i = x_j``.

    Each chain starts at its smallest index; chains are sorted by that index.
    A pair with ``x_i = y_i`` is a unit pair, not a chain.
    """
    M = _manifold(pairs, manifold)
    if not is_concordant(pairs, M, eps):
        raise NotConcordantError("chains are only defined for concordant pairs")
    nxt = _successor(pairs, M, eps)
    seen = set()
    chains = []
    for start in range(len(pairs)):
        if start in seen:
            continue
        path, i = [], start
        while i is not None and i not in path and i not in seen:
            path.append(i)
            i = nxt[i]
        seen.update(path)
        if i is not None and i in path:
            cycle = path[path.index(i):]
            if len(cycle) >= 2:
                k = cycle.index(min(cycle))
                chains.append(tuple(cycle[k:] + cycle[:k]))
    return sorted(chains, key=lambda c: c[0])


def is_independent(pairs, manifold: Manifold | None = None, eps: float = EPS_MATCH) -> bool:
    return is_concordant(pairs, manifold, eps) and not find_chains(pairs, manifold, eps)


def is_well_ordered(pairs, manifold: Manifold | None = None, eps: float = EPS_MATCH) -> bool:
    """``x_k != y_l`` for every ``l < k`` (pairs taken in the given order)."""
    M = _manifold(pairs, manifold)
    m = _match(pairs, "x", "y", M, eps)
    return not np.any(np.tril(m, -1))


def well_order(pairs, manifold: Manifold | None = None, eps: float = EPS_MATCH) -> list[int]:
    """Permutation ``order`` such that ``[pairs[i] for i in order]`` is well ordered.

    Repeatedly takes the smallest remaining index whose source differs from
    every other remaining target, places it last and recurses on the rest.
    """
    M = _manifold(pairs, manifold)
    m = _match(pairs, "x", "y", M, eps)    # m[k, j]: x_k == y_j
    remaining = list(range(len(pairs)))
    tail = []
    while remaining:
        for k in remaining:
            if not any(m[k, j] for j in remaining if j != k):
                break
        else:
            raise NotIndependentError("pairs are not independent: every remaining source "
                                      "is another pair's target, so they contain a chain")
        remaining.remove(k)
        tail.append(k)
    order = tail[::-1]
    if not is_well_ordered([pairs[i] for i in order], M, eps):
        raise NotIndependentError("well-ordering check failed")
    return order


def _check_spacing(points, M, eps, min_spacing):
    P = as_points(points)
    d = M.distance(P[:, None, :], P[None, :, :])
    bad = np.argwhere(np.triu((d > eps) & (d < min_spacing), 1))
    if len(bad):
        i, j = map(int, bad[0])
        raise DegenerateSpacingError(
            f"named points {i} and {j} are distinct but only {d[i, j]:.3g} apart "
            f"(minimum spacing {min_spacing})")


# -------------------------------------------------------------- construction

def separated_bisection(g: Element, fixed, U: Region | None = None, *,
                        eps: float = EPS_MATCH, **options) -> BisectionWord:
    """Bisection through ``g`` fixing every point of ``fixed`` exactly."""
    M = g.groupoid.manifold
    fixed = as_points(fixed) if np.size(fixed) else np.zeros((0, M.dim))
    if len(fixed) and M.dim < 2:
        raise DimensionError("dimension too low: separating points needs dim >= 2")
    if len(fixed):
        near = min(M.distance(fixed, g.x).min(), M.distance(fixed, g.y).min())
        if near <= eps:
            raise ParameterError("source and target of g must differ from the fixed points")
    return bisection_through(ConstructionRequest(g, U, avoid=fixed, **options))


def _transport(groupoid: Groupoid, a, b) -> Element:
    """An element from ``a`` to ``b`` with trivial fiber part."""
    if groupoid.family == "action":
        return groupoid.element(a, g=groupoid.manifold.displacement(a, b))
    if groupoid.family == "frame":
        return groupoid.element(a, b, np.eye(groupoid.rank))
    return groupoid.element(a, b)


def _pick_y0(named: np.ndarray, U: Region, rng: np.random.Generator) -> np.ndarray:
    """Seeded draws in batches, keeping the point farthest from every named point."""
    M = U.manifold
    d = M.distance(named[:, None, :], named[None, :, :])
    pos = d[d > 0]
    margin = 0.5 * float(pos.min()) if len(pos) else 0.5
    lo, hi = U.bbox
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        span = max(float(np.ptp(named, axis=0).max()), 1.0)
        lo, hi = named.min(axis=0) - 0.5 * span, named.max(axis=0) + 0.5 * span
    best, best_d = None, -np.inf
    for _ in range(Y0_DRAWS // Y0_BATCH):
        cand = M.wrap(rng.uniform(lo, hi, size=(Y0_BATCH, M.dim)))
        cand = cand[U.contains(cand)]
        if not len(cand):
            continue
        dist = M.distance(cand[:, None, :], named[None, :, :]).min(axis=1)
        clear = np.minimum(dist, U.clearance(cand))
        k = int(np.argmax(clear))
        if clear[k] > best_d:
            best, best_d = cand[k], float(clear[k])
        if best_d >= margin:
            return best
    raise SamplingError("could not place an auxiliary point away from the named points")


class _Builder:
    def __init__(self, groupoid, U, rng, eps, tol_base, tol_fiber, options):
        self.G = groupoid
        self.U = U
        self.rng = rng
        self.eps = eps
        self.tol_base = tol_base
        self.tol_fiber = tol_fiber
        self.options = options
        self.stages = []
        self.chain_rounds = []

    def separated(self, g, fixed):
        return separated_bisection(g, fixed, self.U, eps=self.eps, tol_base=self.tol_base,
                                   tol_fiber=self.tol_fiber, **self.options)

    def build(self, elems: list[Element]) -> BisectionWord:
        M = self.G.manifold
        pairs = base_pairs(elems)
        chains = find_chains(pairs, M, self.eps)
        if not chains:
            return self.telescope(elems)
        chain = chains[0]
        r = max(chain)
        named = np.array([p.x for p in pairs] + [p.y for p in pairs])
        y0 = _pick_y0(named, self.U, self.rng)
        h0 = _transport(self.G, y0, elems[r].y)
        g0 = compose(elems[r], invert(h0), eps=self.eps)
        reduced = list(elems)
        reduced[r] = g0
        new_pairs = base_pairs(reduced)
        if not is_concordant(new_pairs, M, self.eps):
            raise ConstructionError("chain breaking lost concordance")
        if len(find_chains(new_pairs, M, self.eps)) >= len(chains):
            raise ConstructionError("chain breaking did not reduce the number of chains")
        self.chain_rounds.append({"chain": list(chain), "broken_at": r, "y0": y0.tolist()})
        s_tilde = self.build(reduced)
        others = np.array([e.y for i, e in enumerate(elems) if i != r])
        s_breve = self.separated(h0, others)
        return bis_mul(s_tilde, s_breve)

    def telescope(self, elems: list[Element]) -> BisectionWord:
        M = self.G.manifold
        pairs = base_pairs(elems)
        order = well_order(pairs, M, self.eps)
        bar = [elems[i] for i in order]
        X = np.array([e.x for e in bar])
        w = identity_word(self.G)
        n = len(bar)
        stage_log = []
        for i, gi in enumerate(bar):
            fixed = np.array([bar[j].y for j in range(i)] + [bar[k].x for k in range(i + 1, n)])
            w = bis_mul(w, self.separated(gi, fixed))
            Y, A, Gv = evaluate(w, X, self.options.get("h", 1e-3))
            worst = 0.0
            for j in range(i + 1):
                e = Element(self.G, X[j], Y[j], None if A is None else A[j], None if Gv is None else Gv[j])
                base, fiber = element_error(e, bar[j])
                worst = max(worst, base, fiber)
                tol_f = self.tol_fiber if self.G.family == "frame" else self.tol_base
                if base > (i + 1) * self.tol_base or fiber > (i + 1) * tol_f:
                    raise ConstructionError(f"stage {i}: routed point {j} drifted ({base:.3g}, {fiber:.3g})")
            later_fixed = bool(np.array_equal(Y[i + 1:], X[i + 1:]))
            if A is not None:
                later_fixed &= bool(np.all(A[i + 1:] == np.eye(self.G.rank)))
            if Gv is not None:
                later_fixed &= bool(np.all(Gv[i + 1:] == 0.0))
            if not later_fixed:
                raise ConstructionError(f"stage {i}: a later source was moved")
            stage_log.append({"stage": i, "max_error": worst, "later_sources_fixed": later_fixed})
        self.stages.append({"ordering": [int(k) for k in order], "checks": stage_log})
        return w


def bisection_through_points(elements, U: Region | None = None, *, seed: int = 0,
                             eps: float = EPS_MATCH, min_spacing: float = MIN_SPACING,
                             tol_base: float = 1e-6, tol_fiber: float = 1e-8,
                             check: bool = True, **options) -> BisectionWord:
    """One bisection ``s`` with ``s(x_i) = g_i`` for every given element.

    The base pairs must be concordant.  The result's ``meta`` records the
    chains found, the chain-breaking rounds, the well-orderings used with
    their stage checks, and the per-element residuals.
    """
    elements = list(elements)
    if not elements:
        raise ParameterError("need at least one element")
    G = elements[0].groupoid
    for e in elements[1:]:
        if e.groupoid != G:
            raise ParameterError("all elements must belong to the same groupoid")
    M = G.manifold
    U = U if U is not None else Whole(M)
    pairs = base_pairs(elements)
    bad = concordance_violation(pairs, M, eps)
    if bad is not None:
        kind, i, j = bad
        raise NotConcordantError(
            f"elements are not concordant: {kind}s of elements {i} and {j} coincide, but a "
            "bisection needs pairwise distinct sources and pairwise distinct targets",
            pair=(i, j))
    named = np.array([p.x for p in pairs] + [p.y for p in pairs])
    _check_spacing(named, M, eps, min_spacing)
    chains = find_chains(pairs, M, eps)
    reflect = None
    targets = elements
    if G.family == "frame":
        neg = [bool(np.linalg.det(e.A) < 0) for e in elements]
        if any(neg) and not all(neg):
            raise OrientationError(
                "fiber maps have determinants of both signs; the sign is constant along any "
                "bisection over a connected base, so no bisection passes through all of them")
        if all(neg):
            # route D^-1 A_i (positive determinant) and apply the reflection D last
            reflect = np.eye(G.rank)
            reflect[0, 0] = -1.0
            targets = [Element(G, e.x, e.y, reflect @ e.A) for e in elements]
    builder = _Builder(G, U, np.random.default_rng(seed), eps, tol_base, tol_fiber, options)
    word = builder.build(targets)
    if reflect is not None:
        word = BisectionWord(G, word.generators + (Generator(ConstantFactor(G, reflect)),))

    X = np.array([e.x for e in elements])
    Y, A, Gv = evaluate(word, X, options.get("h", 1e-3))
    residuals = []
    for i, e in enumerate(elements):
        got = Element(G, X[i], Y[i], None if A is None else A[i], None if Gv is None else Gv[i])
        base, fiber = element_error(got, e)
        residuals.append({"index": i, "base": base, "fiber": fiber})
    images = base_pairs([Element(G, X[i], Y[i]) for i in range(len(elements))])
    meta = {
        "construction": "multi-point",
        "through": [e.to_dict() for e in elements],
        "chains": [list(c) for c in chains],
        "chain_breaks": builder.chain_rounds,
        "orderings": builder.stages,
        "residuals": residuals,
        "output_concordant": is_concordant(images, M, eps),
        "word_length": len(word),
        "global_factor": word.has_global_factor,
    }
    word = BisectionWord(G, word.generators, meta)
    if check:
        for res in residuals:
            if res["base"] > tol_base or res["fiber"] > (tol_fiber if G.family == "frame" else tol_base):
                raise ConstructionError(f"element {res['index']} missed: base {res['base']:.3g}, "
                                        f"fiber {res['fiber']:.3g}")
    return word
