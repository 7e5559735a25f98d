"""Open regions of a flat manifold.

Every region answers ``contains``, a lower bound ``clearance`` on the
distance to its complement, a bounding box and a seeded uniform sampler.
All methods are vectorised over ``(N, d)`` arrays.
"""
from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np

from ..errors import ParameterError, SamplingError
from .manifold import Manifold, as_points


class Region(ABC):
    manifold: Manifold

    @abstractmethod
    def clearance(self, p) -> np.ndarray:
        """Lower bound on the distance from ``p`` to the complement (0 outside)."""

    def contains(self, p) -> np.ndarray:
        return self.clearance(p) > 0.0

    @property
    @abstractmethod
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned box (unwrapped coordinates) enclosing the region."""

    def sample(self, n: int, rng: np.random.Generator, max_batches: int = 200) -> np.ndarray:
        lo, hi = self.bbox
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise SamplingError("cannot sample an unbounded region")
        out, have = [], 0
        batch = max(64, 2 * n)
        for _ in range(max_batches):
            p = self.manifold.wrap(rng.uniform(lo, hi, size=(batch, len(lo))))
            p = p[self.contains(p)]
            out.append(p)
            have += len(p)
            if have >= n:
                return np.concatenate(out)[:n]
        raise SamplingError(f"rejection sampling produced only {have} of {n} points")

    def is_within(self, outer: "Region", n: int = 2000, seed: int = 0) -> bool:
        """Sampling-based check that this region is a subset of ``outer``."""
        try:
            p = self.sample(n, np.random.default_rng(seed))
        except SamplingError:
            return False
        return bool(np.all(outer.contains(p)))


class Whole(Region):
    """The open manifold itself (interior of a box, or the whole torus)."""

    def __init__(self, manifold: Manifold):
        self.manifold = manifold

    def clearance(self, p):
        p = as_points(p)
        c = self.manifold.boundary_clearance(p)
        return np.where(self.manifold.contains(p), c, 0.0)

    def contains(self, p):
        return self.manifold.contains(p)

    @property
    def bbox(self):
        return self.manifold.lo_array, self.manifold.hi_array

    def is_within(self, outer, n=2000, seed=0):
        if isinstance(outer, Whole):
            return outer.manifold == self.manifold
        return super().is_within(outer, n, seed)

    def __repr__(self):
        return f"Whole({self.manifold.kind}, dim={self.manifold.dim})"


class Ball(Region):
    """Open ball of ``radius`` about ``center`` intersected with the manifold."""

    def __init__(self, center, radius: float, manifold: Manifold | None = None):
        self.center = np.asarray(center, dtype=float)
        if radius <= 0:
            raise ParameterError("ball radius must be positive")
        self.radius = float(radius)
        self.manifold = manifold or Manifold.euclidean(len(self.center))

    def clearance(self, p):
        p = as_points(p)
        c = self.radius - self.manifold.distance(self.center, p)
        c = np.minimum(c, self.manifold.boundary_clearance(p))
        return np.maximum(c, 0.0)

    @property
    def bbox(self):
        lo = np.maximum(self.center - self.radius, self.manifold.lo_array) if not self.manifold.is_torus \
            else self.center - self.radius
        hi = np.minimum(self.center + self.radius, self.manifold.hi_array) if not self.manifold.is_torus \
            else self.center + self.radius
        return lo, hi

    def is_within(self, outer, n=2000, seed=0):
        return bool(outer.clearance(self.center)[0] >= self.radius)

    def __repr__(self):
        return f"Ball(center={self.center.tolist()}, radius={self.radius})"


class Box(Region):
    """Open axis-aligned box ``prod (lo_i, hi_i)`` intersected with the manifold."""

    def __init__(self, lo, hi, manifold: Manifold | None = None):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        if self.lo.shape != self.hi.shape or np.any(self.lo >= self.hi):
            raise ParameterError("box needs lo < hi on every axis")
        self.manifold = manifold or Manifold.euclidean(len(self.lo))

    def clearance(self, p):
        p = as_points(p)
        c = np.minimum(p - self.lo, self.hi - p).min(axis=1)
        c = np.minimum(c, self.manifold.boundary_clearance(p))
        return np.maximum(c, 0.0)

    @property
    def bbox(self):
        return self.lo.copy(), self.hi.copy()

    def __repr__(self):
        return f"Box(lo={self.lo.tolist()}, hi={self.hi.tolist()})"


class Punctured(Region):
    """``base`` with finitely many points removed."""

    def __init__(self, base: Region, points):
        self.base = base
        self.manifold = base.manifold
        self.points = as_points(points) if len(points) else np.zeros((0, base.manifold.dim))

    def clearance(self, p):
        p = as_points(p)
        c = self.base.clearance(p)
        for q in self.points:
            c = np.minimum(c, self.manifold.distance(q, p))
        return c

    @property
    def bbox(self):
        return self.base.bbox

    def __repr__(self):
        return f"Punctured({self.base!r}, {len(self.points)} points)"


class Union(Region):
    def __init__(self, parts):
        self.parts = list(parts)
        if not self.parts:
            raise ParameterError("union of no regions")
        self.manifold = self.parts[0].manifold

    def clearance(self, p):
        return np.max([r.clearance(p) for r in self.parts], axis=0)

    def contains(self, p):
        return np.any([r.contains(p) for r in self.parts], axis=0)

    @property
    def bbox(self):
        boxes = [r.bbox for r in self.parts]
        return np.min([b[0] for b in boxes], axis=0), np.max([b[1] for b in boxes], axis=0)

    def is_within(self, outer, n=2000, seed=0):
        return all(r.is_within(outer, n, seed) for r in self.parts)


class Empty(Region):
    def __init__(self, manifold: Manifold):
        self.manifold = manifold

    def clearance(self, p):
        return np.zeros(len(as_points(p)))

    @property
    def bbox(self):
        z = np.zeros(self.manifold.dim)
        return z, z

    def sample(self, n, rng, max_batches=200):
        raise SamplingError("empty region")

    def is_within(self, outer, n=2000, seed=0):
        return True


def region_from_dict(d: dict, manifold: Manifold) -> Region:
    kind = d.get("kind", "manifold")
    if kind == "manifold":
        base = Whole(manifold)
    elif kind == "ball":
        base = Ball(d["center"], d["radius"], manifold)
    elif kind == "box":
        base = Box(d["lo"], d["hi"], manifold)
    else:
        raise ParameterError(f"unknown region kind {kind!r}")
    if d.get("exclude"):
        return Punctured(base, d["exclude"])
    return base


def region_to_dict(r: Region) -> dict:
    if isinstance(r, Whole):
        return {"kind": "manifold"}
    if isinstance(r, Ball):
        return {"kind": "ball", "center": r.center.tolist(), "radius": r.radius}
    if isinstance(r, Box):
        return {"kind": "box", "lo": r.lo.tolist(), "hi": r.hi.tolist()}
    if isinstance(r, Punctured):
        d = region_to_dict(r.base)
        d["exclude"] = r.points.tolist()
        return d
    raise ParameterError(f"region {r!r} is not serialisable")
