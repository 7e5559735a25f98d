"""Piecewise-cubic parametrised curves on ``[0, 1]``."""
from __future__ import annotations

import numpy as np
from scipy.interpolate import CubicSpline

from ..errors import ParameterError
from .manifold import Manifold

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


class Curve:
    """A C^2 piecewise-cubic curve ``c: [0, 1] -> R^d``.

    ``coeffs[k, j]`` multiplies ``(t - breaks[j])**(3 - k)`` on interval ``j``
    (scipy ``PPoly`` layout).  ``samples`` are the curve points at the
    breakpoints and are reproduced exactly by evaluation at the breakpoints.
    Coordinates are unwrapped on a torus.
    """

    def __init__(self, breaks, coeffs, samples):
        self.breaks = np.ascontiguousarray(breaks, dtype=float)
        self.coeffs = np.ascontiguousarray(coeffs, dtype=float)
        self.samples = np.ascontiguousarray(samples, dtype=float)
        m = len(self.breaks) - 1
        if m < 1 or self.coeffs.shape[:2] != (4, m) or self.samples.shape != (m + 1, self.coeffs.shape[2]):
            raise ParameterError("inconsistent curve arrays")
        if self.breaks[0] != 0.0 or self.breaks[-1] != 1.0 or np.any(np.diff(self.breaks) <= 0):
            raise ParameterError("curve breakpoints must increase from 0 to 1")

    @classmethod
    def from_points(cls, points, params=None) -> "Curve":
        """Interpolating not-a-knot cubic spline through ``points``.

        Parameters default to normalised cumulative chord length.
        """
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or len(pts) < 2:
            raise ParameterError("a curve needs at least two points")
        if params is None:
            seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
            if np.any(seg == 0):
                raise ParameterError("repeated consecutive curve points")
            params = np.concatenate([[0.0], np.cumsum(seg)])
            params /= params[-1]
        params = np.asarray(params, dtype=float)
        params[0], params[-1] = 0.0, 1.0
        if len(pts) == 2:
            slope = (pts[1] - pts[0])
            coeffs = np.zeros((4, 1, pts.shape[1]))
            coeffs[2, 0] = slope
            coeffs[3, 0] = pts[0]
            return cls(params, coeffs, pts)
        if len(pts) == 3:
            cs = CubicSpline(params, pts, axis=0, bc_type="natural")
        else:
            cs = CubicSpline(params, pts, axis=0, bc_type="not-a-knot")
        coeffs = np.array(cs.c)
        coeffs[3] = pts[:-1]
        return cls(params, coeffs, pts)

    @classmethod
    def segment(cls, a, b, n: int = 2) -> "Curve":
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        t = np.linspace(0.0, 1.0, max(n, 2))
        pts = a + t[:, None] * (b - a)
        pts[-1] = b
        coeffs = np.zeros((4, len(t) - 1, len(a)))
        coeffs[2] = b - a
        coeffs[3] = pts[:-1]
        return cls(t, coeffs, pts)

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    @property
    def n_intervals(self) -> int:
        return len(self.breaks) - 1

    @property
    def start(self) -> np.ndarray:
        return self.samples[0]

    @property
    def end(self) -> np.ndarray:
        return self.samples[-1]

    def __call__(self, t, nu: int = 0) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        tt = np.atleast_1d(t)
        j = np.clip(np.searchsorted(self.breaks, tt, side="right") - 1, 0, self.n_intervals - 1)
        s = (tt - self.breaks[j])[:, None]
        c = self.coeffs[:, j, :]
        if nu == 0:
            out = ((c[0] * s + c[1]) * s + c[2]) * s + c[3]
            out[tt == 1.0] = self.samples[-1]
        elif nu == 1:
            out = (3.0 * c[0] * s + 2.0 * c[1]) * s + c[2]
        elif nu == 2:
            out = 6.0 * c[0] * s + 2.0 * c[1]
        else:
            raise ParameterError("only derivatives up to order 2 are available")
        return out[0] if scalar else out

    def dense(self, per_interval: int = 8) -> tuple[np.ndarray, np.ndarray]:
        u = np.linspace(0.0, 1.0, per_interval, endpoint=False)
        t = (self.breaks[:-1, None] + u[None, :] * np.diff(self.breaks)[:, None]).ravel()
        t = np.append(t, 1.0)
        return t, self(t)

    def _interval_lengths(self, a, b) -> np.ndarray:
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        nodes = mid[:, None] + half[:, None] * _GL_X[None, :]
        speed = np.linalg.norm(self(nodes.ravel(), 1), axis=1).reshape(nodes.shape)
        return half * (speed @ _GL_W)

    def arclength_at_breaks(self) -> np.ndarray:
        seg = self._interval_lengths(self.breaks[:-1], self.breaks[1:])
        return np.concatenate([[0.0], np.cumsum(seg)])

    @property
    def length(self) -> float:
        return float(self.arclength_at_breaks()[-1])

    @property
    def mean_spacing(self) -> float:
        return self.length / self.n_intervals

    def curvature(self, t) -> np.ndarray:
        v = self(t, 1)
        a = self(t, 2)
        v2 = np.einsum("ij,ij->i", v, v)
        a2 = np.einsum("ij,ij->i", a, a)
        va = np.einsum("ij,ij->i", v, a)
        return np.sqrt(np.maximum(v2 * a2 - va * va, 0.0)) / np.maximum(v2, 1e-300) ** 1.5

    def max_curvature(self, per_interval: int = 16) -> float:
        t, _ = self.dense(per_interval)
        return float(self.curvature(t).max())

    def reparametrize_arclength(self, n: int | None = None, refine: int = 32) -> "Curve":
        """Resample at ``n + 1`` points equally spaced in arc length and re-spline.

        The new samples lie exactly on this curve; the endpoints are kept.
        """
        n = self.n_intervals if n is None else int(n)
        if n < 1:
            raise ParameterError("need at least one interval")
        tf, _ = self.dense(refine)
        s = np.concatenate([[0.0], np.cumsum(self._interval_lengths(tf[:-1], tf[1:]))])
        target = np.linspace(0.0, s[-1], n + 1)
        t = np.interp(target, s, tf)
        t[0], t[-1] = 0.0, 1.0
        pts = self(t)
        pts[0], pts[-1] = self.samples[0], self.samples[-1]
        if n == 1:
            return Curve.segment(pts[0], pts[1])
        return Curve.from_points(pts, np.linspace(0.0, 1.0, n + 1))

    def subcurve(self, i: int, j: int) -> "Curve":
        """The exact piece between breakpoints ``i < j``, reparametrised onto ``[0, 1]``."""
        if not 0 <= i < j <= self.n_intervals:
            raise ParameterError(f"bad sub-curve range ({i}, {j})")
        span = self.breaks[j] - self.breaks[i]
        breaks = (self.breaks[i:j + 1] - self.breaks[i]) / span
        breaks[-1] = 1.0
        scale = span ** np.arange(3, -1, -1, dtype=float)
        coeffs = self.coeffs[:, i:j] * scale[:, None, None]
        return Curve(breaks, coeffs, self.samples[i:j + 1])

    def to_dict(self) -> dict:
        return {"breaks": self.breaks.tolist(), "coeffs": self.coeffs.tolist(),
                "samples": self.samples.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Curve":
        return cls(d["breaks"], d["coeffs"], d["samples"])

    def __repr__(self):
        return f"Curve({self.start.tolist()} -> {self.end.tolist()}, {self.n_intervals} intervals)"


def separation_threshold(curve: Curve, eps: float) -> float:
    """Arc-length separation beyond which two curve points count as 'far apart'."""
    return max(3.0 * curve.mean_spacing, np.pi * eps)


def _pairwise(manifold: Manifold | None, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = b[None, :, :] - a[:, None, :]
    if manifold is not None and manifold.is_torus:
        P = manifold.periods
        diff = diff - P * np.floor(diff / P + 0.5)
    return np.linalg.norm(diff, axis=-1)


def _point_segment(p, a, b):
    """Distance from points ``p`` to segments ``[a, b]`` (row-wise broadcast)."""
    e = b - a
    den = np.maximum(np.einsum("...i,...i->...", e, e), 1e-300)
    lam = np.clip(np.einsum("...i,...i->...", p - a, e) / den, 0.0, 1.0)
    return np.linalg.norm(a + lam[..., None] * e - p, axis=-1)


def segment_distances(p, q, a, b) -> np.ndarray:
    """Exact distances between the segment ``[p, q]`` and each segment ``[a_i, b_i]``."""
    u = q - p
    v = b - a
    w = p - a
    uu = float(u @ u)
    vv = np.einsum("ij,ij->i", v, v)
    uv = v @ u
    uw = w @ u
    vw = np.einsum("ij,ij->i", v, w)
    den = uu * vv - uv * uv
    ok = den > 1e-14 * np.maximum(uu * vv, 1e-300)
    sc = np.where(ok, (uv * vw - vv * uw) / np.where(ok, den, 1.0), -1.0)
    tc = np.where(ok, (uu * vw - uv * uw) / np.where(ok, den, 1.0), -1.0)
    inner = ok & (sc >= 0) & (sc <= 1) & (tc >= 0) & (tc <= 1)
    d_inner = np.linalg.norm(w + sc[:, None] * u - tc[:, None] * v, axis=1)
    pp = np.broadcast_to(p, a.shape)
    qq = np.broadcast_to(q, a.shape)
    d_end = np.minimum.reduce([
        _point_segment(pp, a, b), _point_segment(qq, a, b),
        _point_segment(a, pp, qq), _point_segment(b, pp, qq),
    ])
    return np.where(inner, np.minimum(d_inner, d_end), d_end)


def split_injective(curve: Curve, eps: float, manifold: Manifold | None = None) -> list[Curve]:
    """Cut ``curve`` into consecutive arcs that do not come back within ``2 eps`` of themselves.

    The curve is checked as the polyline through its samples.  When the
    segment ending at sample ``j`` comes within ``2 eps`` of an earlier
    segment of the current arc lying more than ``separation_threshold``
    behind it along the curve, the arc is closed at sample ``j - 1``.  The
    arcs are exact pieces of ``curve`` and concatenate back to it.
    """
    if eps <= 0:
        raise ParameterError("eps must be positive")
    pts = curve.samples
    s = curve.arclength_at_breaks()
    thr = separation_threshold(curve, eps)
    arcs, start = [], 0
    for j in range(1, len(pts)):
        # earlier segments [i, i + 1] whose far end is well behind sample j - 1
        far = np.nonzero(s[j - 1] - s[start + 1:j] > thr)[0]
        if len(far) == 0 or j - 1 <= start:
            continue
        idx = start + far
        p, q = pts[j - 1], pts[j]
        a, b = pts[idx], pts[idx + 1]
        if manifold is not None and manifold.is_torus:
            P = manifold.periods
            shift = P * np.floor((a - p) / P + 0.5)
            a, b = a - shift, b - shift
        if np.any(segment_distances(p, q, a, b) < 2.0 * eps):
            arcs.append(curve.subcurve(start, j - 1))
            start = j - 1
    arcs.append(curve.subcurve(start, len(pts) - 1))
    return arcs
