"""Compactly supported vector fields and their fixed-step RK4 flows."""
from __future__ import annotations

from functools import cached_property

import numpy as np
from numba import njit

from ..errors import NonInjectiveCurveError, ParameterError, TubeRadiusError
from . import _kernels as K
from .curves import Curve, separation_threshold, _pairwise
from .manifold import Manifold, as_points
from .regions import Ball, Empty, Region

DEFAULT_STEP = 1e-3
TUBE_INNER = 0.5          # plateau radius as a fraction of the tube radius
MAX_KAPPA_RHO = 0.5       # tube radius times curvature must stay below this
STEP_SAFETY = 0.2         # RK4 step is capped at STEP_SAFETY / Lipschitz constant

_NO_ARRAY = np.zeros(1)
_NO_COEFFS = np.zeros((4, 1, 1))
_NO_POLY = np.zeros((1, 1))


@njit(cache=True)
def _smooth_steps(r, r_in, r_out):
    out = np.empty(r.shape[0])
    for i in range(r.shape[0]):
        out[i] = K.smooth_step(r[i], r_in, r_out)
    return out


def smooth_step(r, r_in: float, r_out: float) -> np.ndarray:
    """Radial cutoff profile: 1 for ``r <= r_in``, 0 for ``r >= r_out``.

    In between it is ``f(1-u) / (f(1-u) + f(u))`` with ``f(s) = exp(-1/s)``
    and ``u = (r - r_in) / (r_out - r_in)``; smooth and non-increasing.
    """
    r = np.asarray(r, dtype=float)
    out = _smooth_steps(np.ascontiguousarray(r.ravel()), float(r_in), float(r_out))
    return out.reshape(r.shape)


def bump_scalar(center, r_in: float, r_out: float, manifold: Manifold | None = None):
    """Return ``chi(p)``, equal to 1 on the closed ``r_in`` ball and 0 off the open ``r_out`` ball."""
    if not 0 < r_in < r_out:
        raise ParameterError(f"bump radii must satisfy 0 < r_in < r_out, got {r_in}, {r_out}")
    center = np.asarray(center, dtype=float)
    manifold = manifold or Manifold.euclidean(len(center))

    def chi(p):
        p = np.asarray(p, dtype=float)
        r = manifold.distance(center, p)
        return smooth_step(r, r_in, r_out)

    return chi


class CompactVectorField:
    """A vector field vanishing exactly outside ``support``."""

    kind = K.KIND_ZERO
    manifold: Manifold

    def _kernel_args(self):
        return (self.kind, _NO_ARRAY, _NO_ARRAY, _NO_COEFFS, _NO_POLY, _NO_ARRAY)

    @property
    def support(self) -> Region:
        raise NotImplementedError

    @property
    def metadata(self) -> dict:
        return {}

    def __call__(self, p) -> np.ndarray:
        a = np.asarray(p, dtype=float)
        pts = np.ascontiguousarray(as_points(a))
        kind, bp, br, co, po, pt = self._kernel_args()
        out = K.eval_field(pts, kind, bp, br, co, po, pt, self.manifold.periods)
        return out[0] if a.ndim == 1 else out

    @cached_property
    def lipschitz(self) -> float:
        """Sampled estimate of the Lipschitz constant on the support."""
        rng = np.random.default_rng(0)
        try:
            p = self.support.sample(1000, rng)
        except Exception:
            return 0.0
        scale = 1e-4 * max(1.0, float(np.max(np.ptp(np.vstack(self.support.bbox), axis=0))))
        dp = rng.normal(size=p.shape)
        dp *= scale / np.linalg.norm(dp, axis=1, keepdims=True)
        q = p + dp
        dv = np.linalg.norm(self(q) - self(p), axis=1)
        return float(np.max(dv / scale))

    def to_dict(self) -> dict:
        raise NotImplementedError


class ZeroField(CompactVectorField):
    def __init__(self, manifold: Manifold):
        self.manifold = manifold

    @property
    def support(self):
        return Empty(self.manifold)

    def to_dict(self):
        return {"kind": "zero"}


class BumpField(CompactVectorField):
    """``chi(|p - c|) * (vector + linear @ (p - c))`` with a radial cutoff ``chi``."""

    kind = K.KIND_BUMP

    def __init__(self, center, r_in, r_out, vector, linear=None, manifold: Manifold | None = None):
        self.center = np.asarray(center, dtype=float)
        d = len(self.center)
        if not 0 < r_in < r_out:
            raise ParameterError(f"bump radii must satisfy 0 < r_in < r_out, got {r_in}, {r_out}")
        self.r_in, self.r_out = float(r_in), float(r_out)
        self.vector = np.asarray(vector, dtype=float).reshape(d)
        self.linear = np.zeros((d, d)) if linear is None else np.asarray(linear, dtype=float).reshape(d, d)
        self.manifold = manifold or Manifold.euclidean(d)
        if self.manifold.is_torus and self.r_out >= 0.5 * self.manifold.periods.min():
            raise ParameterError("bump radius must stay below half the torus period")
        self._bp = np.concatenate([self.center, [self.r_in, self.r_out], self.vector, self.linear.ravel()])

    def _kernel_args(self):
        return (self.kind, self._bp, _NO_ARRAY, _NO_COEFFS, _NO_POLY, _NO_ARRAY)

    @cached_property
    def support(self):
        return Ball(self.center, self.r_out, self.manifold)

    @property
    def metadata(self):
        return {"construction": "bump", "center": self.center.tolist(),
                "r_in": self.r_in, "r_out": self.r_out}

    def to_dict(self):
        return {"kind": "bump", "center": self.center.tolist(), "r_in": self.r_in,
                "r_out": self.r_out, "vector": self.vector.tolist(),
                "linear": self.linear.tolist()}


class TubeRegion(Region):
    """Open ``rho``-neighbourhood of a curve."""

    def __init__(self, field: "TubeField"):
        self.field = field
        self.manifold = field.manifold

    def clearance(self, p):
        return np.maximum(self.field.rho - self.field.distance(p), 0.0)

    def contains(self, p):
        return self.field.distance(p) < self.field.rho

    @property
    def bbox(self):
        f = self.field
        d = f.curve.dim
        return f._tp[3:3 + d].copy(), f._tp[3 + d:].copy()

    def is_within(self, outer, n=2000, seed=0):
        t, pts = self.field.curve.dense(8)
        gap = float(np.max(np.linalg.norm(np.diff(pts, axis=0), axis=1)))
        pts = self.manifold.wrap(pts)
        return bool(np.all(outer.clearance(pts) >= self.field.rho + gap))

    def __repr__(self):
        return f"TubeRegion(rho={self.field.rho}, {self.field.curve!r})"


class TubeField(CompactVectorField):
    """Velocity of ``curve`` carried off the curve by nearest-point projection.

    ``X(p) = chi(dist(p, curve)) * curve'(t_near(p))`` with ``chi`` equal to 1
    up to ``TUBE_INNER * rho`` and 0 from ``rho`` on.  On the curve,
    ``X(c(t)) = c'(t)``, so the flow from ``c(0)`` traces ``c``.
    Use :func:`tube_field` to build one with the reach checks.
    """

    kind = K.KIND_TUBE

    def __init__(self, curve: Curve, rho: float, manifold: Manifold | None = None):
        self.curve = curve
        self.rho = float(rho)
        self.manifold = manifold or Manifold.euclidean(curve.dim)
        poly_t, poly = curve.dense(2)
        fine_t, fine = curve.dense(16)
        # coarse-search cutoff must cover the chord sag of the coarse polyline
        seg = np.repeat(np.arange(len(poly_t) - 1), 8)
        a, b = poly[seg], poly[seg + 1]
        e = b - a
        lam = np.clip(np.einsum("ij,ij->i", fine[:-1] - a, e) / np.maximum(np.einsum("ij,ij->i", e, e), 1e-300), 0, 1)
        sag = float(np.max(np.linalg.norm(a + lam[:, None] * e - fine[:-1], axis=1)))
        cutoff = self.rho + 2.0 * sag + 1e-12
        lo = fine.min(axis=0) - cutoff
        hi = fine.max(axis=0) + cutoff
        self._poly = np.ascontiguousarray(poly)
        self._poly_t = np.ascontiguousarray(poly_t)
        self._tp = np.concatenate([[self.rho, TUBE_INNER * self.rho, cutoff], lo, hi])

    def _kernel_args(self):
        c = self.curve
        return (self.kind, self._tp, c.breaks, c.coeffs, self._poly, self._poly_t)

    def project(self, p) -> tuple[np.ndarray, np.ndarray]:
        """Nearest curve parameter and distance (``inf`` far from the curve)."""
        pts = np.ascontiguousarray(as_points(p))
        c = self.curve
        return K.tube_project_many(pts, c.breaks, c.coeffs, self._poly, self._poly_t,
                                   self._tp, self.manifold.periods)

    def distance(self, p) -> np.ndarray:
        return self.project(p)[1]

    @cached_property
    def support(self):
        return TubeRegion(self)

    @property
    def metadata(self):
        return {"construction": "tube", "rho": self.rho, "inner": TUBE_INNER * self.rho,
                "start": self.curve.start.tolist(), "end": self.curve.end.tolist()}

    def to_dict(self):
        return {"kind": "tube", "rho": self.rho, "curve": self.curve.to_dict()}


def check_reach(curve: Curve, rho: float, manifold: Manifold | None = None) -> None:
    """Raise unless the ``rho``-tube about ``curve`` has a well defined nearest-point map."""
    if rho <= 0:
        raise ParameterError("tube radius must be positive")
    t, pts = curve.dense(4)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    if not np.all(seg > 0):
        raise NonInjectiveCurveError("curve not injective: it stalls")
    s = np.concatenate([[0.0], np.cumsum(seg)])
    thr = separation_threshold(curve, rho)
    far = np.abs(s[:, None] - s[None, :]) > thr
    if np.any(far):
        d = _pairwise(manifold, pts, pts)[far]
        dmin = float(d.min())
        if dmin < 1e-9 * max(s[-1], 1.0):
            raise NonInjectiveCurveError("curve not injective")
        if dmin < 2.0 * rho:
            raise TubeRadiusError(
                f"tube radius too large: curve returns within {dmin:.3g} < 2*rho = {2 * rho:.3g}")
    kappa = curve.max_curvature()
    if kappa * rho > MAX_KAPPA_RHO:
        raise TubeRadiusError(f"tube radius too large: rho * curvature = {kappa * rho:.3g}")


def tube_field(curve: Curve, rho: float, manifold: Manifold | None = None) -> TubeField:
    """Compactly supported field whose flow traces ``curve`` from ``curve(0)``."""
    manifold = manifold or Manifold.euclidean(curve.dim)
    check_reach(curve, rho, manifold)
    return TubeField(curve, rho, manifold)


def effective_step(field: CompactVectorField, h: float) -> float:
    """``h``, reduced so that ``h * L`` stays below ``STEP_SAFETY`` for steep fields."""
    if h <= 0:
        raise ParameterError("step must be positive")
    L = field.lipschitz
    return min(h, STEP_SAFETY / L) if L > 0 else h


def integrate_rows(field: CompactVectorField, pts: np.ndarray, t: float, h: float,
                   mats: np.ndarray | None = None, fiber=None) -> None:
    """Advance the rows of ``pts`` (unwrapped, in place) by the time-``t`` flow.

    With ``fiber = (center, r_in, r_out, S)`` and ``mats`` given, the matrices
    are transported by ``A' = chi(|y - center|) S A`` along the way.
    """
    kind, bp, br, co, po, pt = field._kernel_args()
    if fiber is None:
        mats_ = np.zeros((len(pts), 0, 0))
        fp, S, has_fiber = _NO_ARRAY, np.zeros((0, 0)), False
    else:
        c, r_in, r_out, S = fiber
        mats_ = mats
        fp, has_fiber = np.concatenate([c, [r_in, r_out]]), True
    K.integrate(pts, mats_, np.ones(len(pts), dtype=bool), float(t), effective_step(field, h),
                kind, bp, br, co, po, pt, field.manifold.periods, has_fiber, fp,
                np.ascontiguousarray(S, dtype=float))


def flow(field: CompactVectorField, t: float, x, h: float = DEFAULT_STEP) -> np.ndarray:
    """Time-``t`` flow of ``field`` by classical RK4 with fixed step ``h``.

    The step is additionally capped by :func:`effective_step`.  Points outside
    the support are returned bitwise unchanged.  On a torus moved points are
    wrapped back into the fundamental domain.
    """
    if h <= 0:
        raise ParameterError("step must be positive")
    a = np.asarray(x, dtype=float)
    pts = as_points(a).copy()
    if t != 0 and not isinstance(field, ZeroField):
        active = np.asarray(field.support.contains(pts), dtype=bool)
        if active.any():
            moved = np.ascontiguousarray(pts[active])
            integrate_rows(field, moved, t, h)
            pts[active] = field.manifold.wrap(moved)
    return pts[0] if a.ndim == 1 else pts


def field_from_dict(d: dict, manifold: Manifold) -> CompactVectorField:
    kind = d["kind"]
    if kind == "zero":
        return ZeroField(manifold)
    if kind == "bump":
        return BumpField(d["center"], d["r_in"], d["r_out"], d["vector"], d.get("linear"), manifold)
    if kind == "tube":
        return TubeField(Curve.from_dict(d["curve"]), d["rho"], manifold)
    raise ParameterError(f"unknown field kind {kind!r}")
