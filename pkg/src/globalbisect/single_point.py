"""Finitely generated bisections through one prescribed element.

The word is assembled from one tube exponential per injective arc of a base
curve from ``alpha(g)`` to ``beta(g)``, followed (frame family) by isotropy
generators fixing the fiber map at ``beta(g)``.  Every generator is supported
inside the region ``U`` and away from the avoided points, so the bisection is
the identity outside ``U`` and fixes the avoided points exactly.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import (ConstructionError, GaugeFitError, NonInjectiveCurveError,
                     ParameterError, PathPlanningError, TubeRadiusError)
from .exponential import CompactSection, gauge_generators, gauge_word
from .geometry.curves import Curve, split_injective
from .geometry.fields import DEFAULT_STEP, MAX_KAPPA_RHO, BumpField, tube_field
from .geometry.manifold import Manifold, as_points
from .geometry.planning import plan_path
from .geometry.regions import Punctured, Region, Whole
from .groupoid import (EPS_MATCH, BisectionWord, Element, Generator, Groupoid, bis_eval,
                       element_error, identity_word)

MAX_RHO_HALVINGS = 6
DEFAULT_TUBE_RHO = 0.5
DEFAULT_GAUGE_R = 0.5
PLAN_CLEARANCE = (1.5, 1.25, 1.1)   # planning clearances tried in turn, in units of delta
DELTA_SHRINK = (1.0, 0.5, 0.25)     # reductions of a derived delta when no clearance works
ACTION_STEP = 0.12          # largest translation per bump generator, in torus periods
ACTION_WIDTH = 0.3          # bump falloff width, in torus periods


@dataclass
class ConstructionRequest:
    """Data for :func:`bisection_through`.

    ``delta`` defaults to half the smallest distance between the avoided
    points, ``alpha(g)`` and ``beta(g)``, capped by the clearance of ``U`` at
    source and target and by a quarter of their separation.  A derived
    ``delta`` may be reduced later if no path keeps that clearance.
    """

    g: Element
    U: Region | None = None
    hint_curve: Curve | None = None
    avoid: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    delta: float | None = None
    tube_rho: float | None = None
    gauge_r: float | None = None
    h: float = DEFAULT_STEP
    tol_base: float = 1e-6
    tol_fiber: float = 1e-8
    orthogonal: bool = False
    delta_derived: bool = field(default=False, init=False)

    def __post_init__(self):
        M = self.manifold
        if self.U is None:
            self.U = Whole(M)
        if self.U.manifold != M:
            raise ParameterError("region and element live on different manifolds")
        ends = np.vstack([self.g.x, self.g.y])
        if not np.all(self.U.contains(ends)):
            raise ParameterError("source and target must lie in U")
        self.avoid = as_points(self.avoid) if np.size(self.avoid) else np.zeros((0, M.dim))
        holes = _punctures(self.U)
        if len(holes):
            # points removed from U are planned around like any avoided point
            self.avoid = np.unique(np.vstack([self.avoid, holes]), axis=0)
        if self.hint_curve is not None:
            if (M.distance(self.hint_curve.start, self.g.x) > EPS_MATCH
                    or M.distance(self.hint_curve.end, self.g.y) > EPS_MATCH):
                raise ParameterError("hint curve endpoints must match source and target")
        if len(self.avoid):
            near = min(M.distance(self.avoid, self.g.x).min(), M.distance(self.avoid, self.g.y).min())
            if self.delta is None:
                pts = np.vstack([self.avoid, ends])
                d = M.distance(pts[:, None, :], pts[None, :, :])
                d[-2, -1] = d[-1, -2] = np.inf    # source-target separation is capped below
                np.fill_diagonal(d, np.inf)
                delta = 0.5 * float(d[d > 0].min())
                clear = float(self.U.clearance(ends).min())
                delta = min(delta, clear)
                sep = float(M.distance(self.g.x, self.g.y))
                if sep > 0:
                    delta = min(delta, 0.25 * sep)
                self.delta = delta
                self.delta_derived = True
            if self.delta <= 0 or near <= self.delta:
                raise ParameterError("avoided points must stay farther than delta from "
                                     "source and target")
        if self.orthogonal and self.g.family == "frame":
            A = self.g.A
            if np.linalg.norm(A.T @ A - np.eye(len(A))) > 1e-10:
                raise ParameterError("orthogonal construction needs an orthogonal fiber map")

    @property
    def manifold(self) -> Manifold:
        return self.g.groupoid.manifold

    @property
    def groupoid(self) -> Groupoid:
        return self.g.groupoid


def _punctures(U: Region) -> np.ndarray:
    pts = []
    while isinstance(U, Punctured):
        pts.append(U.points)
        U = U.base
    return np.vstack(pts) if pts else np.zeros((0, U.manifold.dim))


def _tube_radius(req: ConstructionRequest, curve: Curve) -> float:
    M = req.manifold
    _, pts = curve.dense(8)
    gap = float(np.max(np.linalg.norm(np.diff(pts, axis=0), axis=1)))
    rho = req.tube_rho if req.tube_rho is not None else min(DEFAULT_TUBE_RHO, 0.25 * curve.length)
    clear = float(req.U.clearance(M.wrap(pts)).min()) - gap
    rho = min(rho, 0.5 * clear)
    if len(req.avoid):
        d = np.min([M.distance(a, pts).min() for a in req.avoid]) - gap
        rho = min(rho, d - req.delta)
    kappa = curve.max_curvature()
    if kappa > 0:
        rho = min(rho, 0.99 * MAX_KAPPA_RHO / kappa)
    if M.is_torus:
        rho = min(rho, 0.2 * float(M.periods.min()))
    if not rho > 0:
        raise PathPlanningError("no path found: the curve leaves no room for a tube inside U")
    return rho


def _plan(req: ConstructionRequest) -> Curve:
    if req.hint_curve is not None:
        return req.hint_curve
    M = req.manifold
    x, y = req.g.x, req.g.y
    if len(req.avoid):
        near = min(M.distance(req.avoid, x).min(), M.distance(req.avoid, y).min())
        base = req.delta
        shrinks = DELTA_SHRINK if req.delta_derived else (1.0,)
        for shrink in shrinks:
            for factor in PLAN_CLEARANCE:
                clearance = min(factor * shrink * base, 0.99 * near)
                try:
                    curve = plan_path(x, y, req.avoid, clearance, req.U, manifold=M)
                except PathPlanningError:
                    continue
                req.delta = shrink * base
                return curve
        raise PathPlanningError("no path found keeping delta away from the avoided points")
    return plan_path(x, y, (), 0.0, req.U, manifold=M)


def tube_sections(req: ConstructionRequest) -> tuple[list[CompactSection], dict]:
    """One tube section per injective arc of the base curve from source to target."""
    curve = _plan(req)
    rho = _tube_radius(req, curve)
    G = req.groupoid
    for _ in range(MAX_RHO_HALVINGS + 1):
        try:
            arcs = split_injective(curve, rho, req.manifold)
            secs = [CompactSection(G, tube_field(arc, rho, req.manifold), kind="tube") for arc in arcs]
            return secs, {"arcs": len(arcs), "tube_rho": rho, "curve_length": curve.length}
        except (TubeRadiusError, NonInjectiveCurveError):
            rho *= 0.5
    raise TubeRadiusError("tube radius too large even after the maximum number of refinements")


def _gauge_radius(req: ConstructionRequest, y) -> float:
    M = req.manifold
    r = req.gauge_r if req.gauge_r is not None else DEFAULT_GAUGE_R
    clear = float(req.U.clearance(y)[0])
    r = min(r, 0.9 * clear)
    if len(req.avoid):
        r = min(r, float(M.distance(req.avoid, y).min()) - req.delta)
    if M.is_torus:
        r = min(r, 0.45 * float(M.periods.min()))
    if not r > 0:
        raise GaugeFitError("gauge ball does not fit in U away from the avoided points")
    return r


def translation_bumps(groupoid: Groupoid, x, v, width: float | None = None) -> list[CompactSection]:
    """Bump sections whose exponentials move ``x`` by the vector ``v`` in equal steps.

    Each step of length at most ``ACTION_STEP`` periods happens inside the
    plateau of its bump, so ``x`` is translated exactly; the sup norm of the
    gradient of every section stays below 0.8.
    """
    M = groupoid.manifold
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(v))
    if n == 0.0:
        return []
    P = float(M.periods.min()) if M.is_torus else 1.0
    k = max(1, math.ceil(n / (ACTION_STEP * P) - 1e-12))
    u = v / k
    w = ACTION_WIDTH * P if width is None else width
    r_in = 0.5 * n / k + 0.02 * P
    out = []
    for i in range(k):
        c = M.wrap(x + (i + 0.5) * u)
        f = BumpField(c, r_in, r_in + w, u, manifold=M)
        out.append(CompactSection(groupoid, f, kind="action-bump" if groupoid.family == "action" else "bump"))
    return out


def _check(word: BisectionWord, req: ConstructionRequest) -> tuple[float, float]:
    e = bis_eval(word, req.g.x, req.h)
    base, fiber = element_error(e, req.g)
    if base > req.tol_base or fiber > req.tol_fiber:
        raise ConstructionError(f"constructed word misses the element: base error {base:.3g}, "
                                f"fiber error {fiber:.3g}")
    return base, fiber


def bisection_through(req: ConstructionRequest) -> BisectionWord:
    """A finitely generated bisection ``s`` with ``s(alpha(g)) = g``, identity outside ``U``."""
    g = req.g
    G = req.groupoid
    M = req.manifold
    x, y = g.x, g.y
    gens: list[Generator] = []
    meta: dict = {"construction": "single-point", "through": [g.to_dict()]}
    moving = bool(M.distance(x, y) > 0.0)
    if G.family == "action":
        v = M.displacement(np.zeros(M.dim), g.g)
        if np.linalg.norm(v) > 0 and isinstance(req.U, Whole) and not len(req.avoid):
            secs = translation_bumps(G, x, v)
            meta["arcs"] = 0
        elif moving:
            secs, info = tube_sections(req)
            meta.update(info)
        else:
            secs = []
        gens += [Generator(s) for s in secs]
    elif moving:
        secs, info = tube_sections(req)
        meta.update(info)
        gens += [Generator(s) for s in secs]
    global_factor = False
    if G.family == "frame" and not np.array_equal(g.A, np.eye(G.rank)):
        # tube sections carry no fiber part, so the transported map is the identity
        r = _gauge_radius(req, y)
        factors = gauge_generators(g.A, y, r, req.orthogonal, G)
        gw = gauge_word(factors, G)
        gens += list(gw.generators)
        global_factor = factors.reflects
        meta["gauge_r"] = r
    meta["word_length"] = len(gens)
    meta["global_factor"] = global_factor
    word = BisectionWord(G, tuple(gens), meta)
    if not gens:
        _check(word, req)
        return identity_word(G)
    base, fiber = _check(word, req)
    meta["residual_base"] = base
    meta["residual_fiber"] = fiber
    return word


# ------------------------------------------------------------- applications

def _connectivity_probe(U: Region, n: int = 400, seed: int = 0) -> None:
    lo, hi = U.bbox
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        return
    try:
        pts = U.sample(n, np.random.default_rng(seed))
    except Exception:
        return
    tree = cKDTree(pts)
    dist, _ = tree.query(pts, k=2)
    radius = 2.5 * float(np.max(dist[:, 1]))
    graph = tree.sparse_distance_matrix(tree, radius)
    ncomp, _ = connected_components(graph, directed=False)
    if ncomp > 1:
        warnings.warn(f"U looks disconnected on {n} samples ({ncomp} components)", stacklevel=3)


def homogeneity_diffeo(x, y, U: Region, **options) -> BisectionWord:
    """Pair-family word whose target map sends ``x`` to ``y`` and fixes the complement of ``U``."""
    G = Groupoid.pair(U.manifold)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if U.manifold.distance(x, y) == 0.0:
        return identity_word(G)
    _connectivity_probe(U)
    return bisection_through(ConstructionRequest(G.element(x, y), U, **options))


def moving_flows(x, y, U: Region, **options) -> list:
    """Compactly supported fields in ``U`` whose successive time-1 flows carry ``x`` to ``y``."""
    word = homogeneity_diffeo(x, y, U, **options)
    return [gen.section.base_field for gen in word.generators]


def bundle_automorphism_through(phi, x, y, U: Region | None = None, *,
                                manifold: Manifold | None = None, orthogonal: bool = False,
                                **options) -> BisectionWord:
    """Frame-family word: a bundle automorphism restricting to ``phi`` on the fiber over ``x``.

    With ``orthogonal=True`` only skew gauge generators (plus the reflection
    factor) are used, so every fiber map of the result is orthogonal.
    """
    phi = np.asarray(phi, dtype=float)
    x = np.asarray(x, dtype=float)
    manifold = manifold or (U.manifold if U is not None else Manifold.euclidean(len(x)))
    G = Groupoid.frame(manifold, len(phi))
    req = ConstructionRequest(G.element(x, y, phi), U, orthogonal=orthogonal, **options)
    return bisection_through(req)


def invertible_function_through(x, g, torus: Manifold | None = None) -> BisectionWord:
    """Action-family word ``s`` with ``s(x) = g``: a torus-valued function whose induced map is invertible."""
    x = np.asarray(x, dtype=float)
    torus = torus or Manifold.torus(np.ones(len(x)))
    G = Groupoid.action(torus)
    return bisection_through(ConstructionRequest(G.element(x, g=g)))
