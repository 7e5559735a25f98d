"""Obstacle-avoiding smooth paths inside a region."""
from __future__ import annotations

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from ..errors import DimensionError, ParameterError, PathPlanningError
from .curves import Curve, split_injective
from .manifold import Manifold, as_points
from .regions import Region, Whole

ARC_STEP = np.deg2rad(10.0)
CLEARANCE_MARGIN = 1.02
GRID_CELLS = {2: 160, 3: 40}   # cells along the longest window side of the fallback grid
GRID_CLEARANCE = 1.15     # grid nodes keep GRID_CLEARANCE * delta from obstacles
PULL_CLEARANCE = 1.06     # shortcut segments keep PULL_CLEARANCE * delta from obstacles


def _densify(poly: np.ndarray, ds: float) -> np.ndarray:
    seg = np.linalg.norm(np.diff(poly, axis=0), axis=1)
    keep = np.concatenate([[True], seg > 1e-12])
    poly = poly[keep]
    seg = seg[seg > 1e-12]
    s = np.concatenate([[0.0], np.cumsum(seg)])
    n = max(8, int(np.ceil(s[-1] / ds)))
    target = np.linspace(0.0, s[-1], n + 1)
    pts = np.column_stack([np.interp(target, s, poly[:, i]) for i in range(poly.shape[1])])
    pts[0], pts[-1] = poly[0], poly[-1]
    return pts


def _smooth(poly: np.ndarray, ds: float) -> Curve:
    if len(poly) == 2:
        n = max(8, int(np.ceil(np.linalg.norm(poly[1] - poly[0]) / ds)))
        return Curve.segment(poly[0], poly[1], n + 1)
    pts = _densify(poly, ds)
    return Curve.from_points(pts, np.linspace(0.0, 1.0, len(pts)))


def _plane(a, b, o, side):
    """Orthonormal pair (e, n): e along a->b, n from o toward the line, times ``side``."""
    e = b - a
    e = e / np.linalg.norm(e)
    f = a + np.dot(o - a, e) * e
    n = f - o
    n = n - np.dot(n, e) * e
    if np.linalg.norm(n) < 1e-9 * max(1.0, np.linalg.norm(b - a)):
        axis = np.zeros_like(e)
        axis[np.argmin(np.abs(e))] = 1.0
        n = axis - np.dot(axis, e) * e
    n = n / np.linalg.norm(n)
    return e, side * n


def _detour(poly: np.ndarray, o: np.ndarray, R: float, side: int) -> np.ndarray:
    """Reroute the stretch of ``poly`` near ``o`` along a circle of radius ``R`` about ``o``."""
    a_, b_ = poly[:-1], poly[1:]
    e = b_ - a_
    lam = np.clip(np.einsum("ij,ij->i", o - a_, e) / np.maximum(np.einsum("ij,ij->i", e, e), 1e-300), 0, 1)
    i = int(np.argmin(np.linalg.norm(a_ + lam[:, None] * e - o, axis=1)))
    ia, ib = i, i + 1
    while ia > 0 and np.linalg.norm(poly[ia] - o) < 1.1 * R:
        ia -= 1
    while ib < len(poly) - 1 and np.linalg.norm(poly[ib] - o) < 1.1 * R:
        ib += 1
    a, b = poly[ia], poly[ib]
    if np.linalg.norm(b - a) == 0:
        return poly
    e, n = _plane(a, b, o, side)

    def angle(p):
        v = p - o
        return np.arctan2(np.dot(v, n), np.dot(v, e)), np.linalg.norm(v)

    th_a, ra = angle(a)
    th_b, rb = angle(b)
    if th_a < 0.5 * np.pi:
        th_a += 2 * np.pi
    if th_b > 0.5 * np.pi:
        th_b -= 2 * np.pi
    # leave a along its tangent line when a is outside the circle
    th_start = th_a - np.arccos(min(1.0, R / ra)) if ra > R else th_a
    th_end = th_b + np.arccos(min(1.0, R / rb)) if rb > R else th_b
    if th_start <= th_end:
        th_start = th_end = 0.5 * (th_start + th_end)
    k = max(3, int(np.ceil((th_start - th_end) / ARC_STEP)) + 1)
    th = np.linspace(th_start, th_end, k)
    r = np.full(k, R)
    u = np.linspace(0.0, 1.0, k)
    if ra <= R:
        w = np.clip(1.0 - u / 0.3, 0.0, 1.0)
        r = r + (ra - R) * w * w * (3 - 2 * w)
    if rb <= R:
        w = np.clip(1.0 - (1.0 - u) / 0.3, 0.0, 1.0)
        r = r + (rb - R) * w * w * (3 - 2 * w)
    arc = o + r[:, None] * (np.cos(th)[:, None] * e + np.sin(th)[:, None] * n)
    if ra <= R:
        arc = arc[1:]
    if rb <= R:
        arc = arc[:-1]
    return np.vstack([poly[:ia + 1], arc, poly[ib:]])


class _Planner:
    def __init__(self, x, target, obstacles, delta, U, manifold, eps):
        self.x, self.target = x, target
        self.obstacles = obstacles
        self.delta = delta
        self.U = U
        self.manifold = manifold
        self.eps = eps

    def build(self, via, detours):
        poly = np.vstack([self.x, *via, self.target])
        radii = []
        for idx, side, factor in detours:
            R = 2.0 * self.delta * factor
            radii.append(R)
            poly = _detour(poly, self.obstacles[idx], R, side)
        length = float(np.sum(np.linalg.norm(np.diff(poly, axis=0), axis=1)))
        ds = min(length / 24.0, *(0.2 * R for R in radii)) if radii else length / 24.0
        ds = max(ds, length / 800.0)
        return _smooth(poly, ds)

    def diagnose(self, curve):
        """``None`` when admissible, else ``(score, kind, payload)``; lower score is worse."""
        _, pts = curve.dense(8)
        if len(self.obstacles):
            d = np.linalg.norm(pts[:, None, :] - self.obstacles[None, :, :], axis=2).min(axis=0)
            worst = int(np.argmin(d - CLEARANCE_MARGIN * self.delta))
            if d[worst] < CLEARANCE_MARGIN * self.delta:
                return (d[worst] - self.delta, "obstacle", worst)
        inside = self.U.contains(self.manifold.wrap(pts))
        if not np.all(inside):
            return (-np.inf, "region", pts[np.argmin(inside)])
        if len(split_injective(curve, self.eps, self.manifold)) > 1:
            return (-np.inf, "self", None)
        return None


def plan_path(x, y, avoid=(), delta: float = 0.0, U: Region | None = None, *,
              manifold: Manifold | None = None, budget: int = 40, seed: int = 0) -> Curve:
    """Smooth injective curve from ``x`` to ``y`` inside ``U`` keeping ``delta`` away from ``avoid``.

    Starts from the straight segment (the minimal-image one on a torus) and
    repeatedly detours around the worst violated obstacle along a circle of
    radius ``2 * delta``, growing the radius when an obstacle stays violated
    and flipping sides when a detour leaves ``U``.  The returned curve is in
    unwrapped coordinates and roughly arc-length parametrised.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    manifold = manifold or (U.manifold if U is not None else Manifold.euclidean(len(x)))
    U = U if U is not None else Whole(manifold)
    avoid = as_points(avoid) if len(avoid) else np.zeros((0, manifold.dim))
    if len(avoid) and manifold.dim < 2:
        raise DimensionError("dimension too low: obstacle avoidance needs dim >= 2")
    if not (U.contains(x)[0] and U.contains(y)[0]):
        raise ParameterError("path endpoints must lie in the region")
    if len(avoid):
        if delta <= 0:
            raise ParameterError("delta must be positive when avoiding points")
        near = min(manifold.distance(avoid, x).min(), manifold.distance(avoid, y).min())
        if near < delta:
            raise ParameterError(f"an avoided point lies within delta of an endpoint ({near:.3g})")
    target = x + manifold.displacement(x, y)
    length = float(np.linalg.norm(target - x))
    if length == 0.0:
        raise ParameterError("path endpoints coincide")
    if manifold.is_torus and len(avoid):
        obstacles = manifold.images(avoid)
    else:
        obstacles = avoid
    eps = 0.5 * delta if delta > 0 else 0.01 * length
    planner = _Planner(x, target, obstacles, delta, U, manifold, eps)

    rng = np.random.default_rng(seed)
    curve = _detour_search(planner, [], budget)
    if curve is None:
        curve = _grid_route(planner)
    if curve is not None:
        return curve
    via_options = []
    for via in _via_candidates(x, target, U, manifold, rng):
        via_options.append([via])
    for via in via_options[:3]:
        curve = _detour_search(planner, via, budget)
        if curve is not None:
            return curve
    raise PathPlanningError("no path found within the retry budget (region too tight?)")


def _detour_search(planner: _Planner, via, budget: int) -> Curve | None:
    """Greedy detours around the worst violated obstacle, starting from the straight route."""
    obstacles = planner.obstacles
    detours = []
    for _ in range(budget):
        curve = planner.build(via, detours)
        issue = planner.diagnose(curve)
        if issue is None:
            return curve
        _, kind, payload = issue
        if kind == "obstacle":
            known = [k for k, dt in enumerate(detours) if dt[0] == payload]
            if known:
                idx, side, factor = detours[known[0]]
                detours[known[0]] = (idx, side, factor * 1.3)
                continue
            best = None
            for side in (1, -1):
                trial = detours + [(payload, side, 1.0)]
                res = planner.diagnose(planner.build(via, trial))
                score = np.inf if res is None else res[0]
                if best is None or score > best[0]:
                    best = (score, trial)
            detours = best[1]
        elif kind == "region" and detours:
            # flip the detour whose obstacle is closest to the escape point
            k = int(np.argmin([np.linalg.norm(obstacles[dt[0]] - payload) for dt in detours]))
            idx, side, factor = detours[k]
            if side == -1 and factor > 1.0:
                return None
            detours[k] = (idx, -side, factor if side == 1 else factor * 1.3)
        else:
            return None
    return None


def _round_corners(poly: np.ndarray, radius: float) -> tuple[np.ndarray, float]:
    """Replace each interior corner by a circular fillet; returns the points and smallest radius."""
    out = [poly[0]]
    smallest = np.inf
    for i in range(1, len(poly) - 1):
        a, v, b = poly[i - 1], poly[i], poly[i + 1]
        ua, ub = a - v, b - v
        la, lb = np.linalg.norm(ua), np.linalg.norm(ub)
        ua, ub = ua / la, ub / lb
        phi = np.arccos(np.clip(ua @ ub, -1.0, 1.0))     # interior angle at the corner
        if phi > np.pi - 1e-6:
            out.append(v)
            continue
        t = min(radius / np.tan(0.5 * phi), 0.45 * la, 0.45 * lb)
        r = t * np.tan(0.5 * phi)
        smallest = min(smallest, r)
        bis = (ua + ub) / np.linalg.norm(ua + ub)
        c = v + bis * r / np.sin(0.5 * phi)
        p0, p1 = v + t * ua, v + t * ub
        e0 = (p0 - c) / r
        e1 = p1 - c
        e1 = e1 - (e1 @ e0) * e0
        e1 = e1 / np.linalg.norm(e1)
        sweep = np.pi - phi
        k = max(2, int(np.ceil(sweep / ARC_STEP)) + 1)
        th = np.linspace(0.0, sweep, k)
        out.extend(c + r * (np.cos(th)[:, None] * e0 + np.sin(th)[:, None] * e1))
    out.append(poly[-1])
    return np.array(out), smallest


def _grid_route(planner: _Planner) -> Curve | None:
    """Shortest route on an occupancy grid, string-pulled and with rounded corners.

    Only for dimensions 2 and 3; returns ``None`` when no route is found.
    """
    M, U = planner.manifold, planner.U
    d = M.dim
    if d not in GRID_CELLS:
        return None
    x, target = planner.x, planner.target
    obstacles = planner.obstacles
    delta = planner.delta
    L = float(np.linalg.norm(target - x))
    if M.is_torus:
        lo = np.minimum(x, target) - 0.5 * M.periods
        hi = np.maximum(x, target) + 0.5 * M.periods
    else:
        lo, hi = U.bbox
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            pts = np.vstack([x, target, obstacles]) if len(obstacles) else np.vstack([x, target])
            pad = 4.0 * delta + 0.5 * L
            lo, hi = pts.min(axis=0) - pad, pts.max(axis=0) + pad
    cell = float(np.max(hi - lo)) / GRID_CELLS[d]
    shape = tuple(int(np.ceil((h - l) / cell)) + 1 for l, h in zip(lo, hi))
    axes = [l + cell * np.arange(n) for l, n in zip(lo, shape)]
    nodes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    tree = cKDTree(obstacles) if len(obstacles) else None
    end_clear = float(U.clearance(M.wrap(np.vstack([x, target]))).min())
    u_margin = max(cell, 0.25 * min(end_clear, delta if delta > 0 else 0.1 * L))

    def obstacle_gap(p):
        return tree.query(p)[0] if tree is not None else np.full(len(p), np.inf)

    free = (obstacle_gap(nodes) >= GRID_CLEARANCE * CLEARANCE_MARGIN * delta)
    free &= U.clearance(M.wrap(nodes)) > u_margin

    def segment_ok(a, b, need, margin):
        n = max(2, int(np.ceil(np.linalg.norm(b - a) / (0.25 * cell))) + 1)
        p = a + np.linspace(0.0, 1.0, n)[:, None] * (b - a)
        if tree is not None and np.any(obstacle_gap(p) < need):
            return False
        return bool(np.all(U.clearance(M.wrap(p)) > margin))

    # grid edges between free neighbours
    idx = np.arange(len(nodes)).reshape(shape)
    rows, cols, wts = [], [], []
    for off in np.array(np.meshgrid(*[[-1, 0, 1]] * d, indexing="ij")).reshape(d, -1).T:
        if not np.any(off) or tuple(off) < (0,) * d:
            continue
        src = tuple(slice(max(0, -o), n - max(0, o)) for o, n in zip(off, shape))
        dst = tuple(slice(max(0, o), n - max(0, -o)) for o, n in zip(off, shape))
        a, b = idx[src].ravel(), idx[dst].ravel()
        ok = free[a] & free[b]
        rows.append(a[ok])
        cols.append(b[ok])
        wts.append(np.full(ok.sum(), cell * np.linalg.norm(off)))
    # connect source and target to nearby free nodes they can see
    n_nodes = len(nodes)
    ends = [x, target]
    node_tree = cKDTree(nodes)
    end_need = CLEARANCE_MARGIN * delta
    for k, p in enumerate(ends):
        near = [j for j in node_tree.query_ball_point(p, 3.0 * cell * np.sqrt(d)) if free[j]]
        near = [j for j in near if segment_ok(p, nodes[j], end_need, 0.0)]
        if not near:
            return None
        rows.append(np.full(len(near), n_nodes + k))
        cols.append(np.array(near))
        wts.append(np.linalg.norm(nodes[near] - p, axis=1) + 1e-12)
    graph = coo_matrix((np.concatenate(wts), (np.concatenate(rows), np.concatenate(cols))),
                       shape=(n_nodes + 2, n_nodes + 2)).tocsr()
    dist, pred = dijkstra(graph, directed=False, indices=n_nodes, return_predecessors=True)
    if not np.isfinite(dist[n_nodes + 1]):
        return None
    chain = [n_nodes + 1]
    while chain[-1] != n_nodes:
        chain.append(pred[chain[-1]])
    allpts = np.vstack([nodes, x, target])
    path = allpts[chain[::-1]]
    # string pulling: jump to the farthest visible path point
    pull_need = PULL_CLEARANCE * CLEARANCE_MARGIN * delta
    poly = [path[0]]
    i = 0
    while i < len(path) - 1:
        j = len(path) - 1
        while j > i + 1 and not segment_ok(path[i], path[j], pull_need, 0.5 * u_margin):
            j -= 1
        poly.append(path[j])
        i = j
    poly = np.array(poly)
    radius = delta if delta > 0 else 0.1 * L
    for _ in range(4):
        pts, r_min = _round_corners(poly, radius)
        length = float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))
        ds = max(min(length / 24.0, 0.2 * r_min), length / 800.0)
        curve = _smooth(pts, ds)
        if planner.diagnose(curve) is None:
            return curve
        radius *= 0.5
    return None


def _via_candidates(x, target, U, manifold, rng, n=12):
    lo, hi = U.bbox
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        return []
    try:
        cand = U.sample(200, rng)
    except Exception:
        return []
    if manifold.is_torus:
        cand = x + manifold.displacement(x, cand)
    clear = U.clearance(manifold.wrap(cand))
    detour = np.linalg.norm(cand - x, axis=1) + np.linalg.norm(target - cand, axis=1)
    order = np.argsort(detour - 2.0 * clear)
    return [cand[i] for i in order[:n]]
