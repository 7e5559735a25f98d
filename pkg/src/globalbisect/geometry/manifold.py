"""Flat base manifolds: boxes (possibly unbounded) and flat tori."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import product

import numpy as np

from ..errors import ParameterError


def as_points(p) -> np.ndarray:
    """View ``p`` as an ``(N, d)`` float array (a single point becomes ``(1, d)``)."""
    a = np.asarray(p, dtype=float)
    if a.ndim == 1:
        return a[None, :]
    if a.ndim != 2:
        raise ParameterError(f"expected a point or an (N, d) array, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class Manifold:
    """A box ``prod [lo_i, hi_i]`` (infinite bounds allowed) or a flat torus.

    For a torus, ``lo`` is the origin of the fundamental domain and
    ``hi - lo`` are the periods.
    """

    kind: str
    lo: tuple
    hi: tuple

    def __post_init__(self):
        if self.kind not in ("box", "torus"):
            raise ParameterError(f"unknown manifold kind {self.kind!r}")
        if len(self.lo) != len(self.hi) or len(self.lo) < 1:
            raise ParameterError("manifold needs matching, nonempty bounds")
        for a, b in zip(self.lo, self.hi):
            if not a < b:
                raise ParameterError(f"empty interval [{a}, {b}]")
            if self.kind == "torus" and not (np.isfinite(a) and np.isfinite(b)):
                raise ParameterError("torus periods must be finite")

    @classmethod
    def box(cls, bounds) -> "Manifold":
        bounds = [tuple(map(float, b)) for b in bounds]
        return cls("box", tuple(b[0] for b in bounds), tuple(b[1] for b in bounds))

    @classmethod
    def euclidean(cls, dim: int) -> "Manifold":
        return cls("box", (-np.inf,) * dim, (np.inf,) * dim)

    @classmethod
    def torus(cls, periods, origin=None) -> "Manifold":
        periods = [float(p) for p in periods]
        if any(p <= 0 for p in periods):
            raise ParameterError("torus periods must be positive")
        origin = [0.0] * len(periods) if origin is None else [float(o) for o in origin]
        return cls("torus", tuple(origin), tuple(o + p for o, p in zip(origin, periods)))

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def is_torus(self) -> bool:
        return self.kind == "torus"

    @cached_property
    def lo_array(self) -> np.ndarray:
        return np.array(self.lo, dtype=float)

    @cached_property
    def hi_array(self) -> np.ndarray:
        return np.array(self.hi, dtype=float)

    @cached_property
    def periods(self) -> np.ndarray:
        """Per-axis period, ``0`` on non-periodic axes (the kernel convention)."""
        if self.is_torus:
            return self.hi_array - self.lo_array
        return np.zeros(self.dim)

    @property
    def bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.lo_array)) and np.all(np.isfinite(self.hi_array)))

    def displacement(self, a, b) -> np.ndarray:
        """``b - a``, reduced to the minimal image on a torus."""
        v = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
        if self.is_torus:
            P = self.periods
            v = v - P * np.floor(v / P + 0.5)
        return v

    def distance(self, a, b) -> np.ndarray:
        return np.linalg.norm(self.displacement(a, b), axis=-1)

    def wrap(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if not self.is_torus:
            return p
        lo, P = self.lo_array, self.periods
        return lo + np.mod(p - lo, P)

    def contains(self, p) -> np.ndarray:
        p = as_points(p)
        if self.is_torus:
            return np.ones(len(p), dtype=bool)
        return np.all((p > self.lo_array) & (p < self.hi_array), axis=1)

    def boundary_clearance(self, p) -> np.ndarray:
        """Distance to the boundary of a box (``inf`` on a torus or unbounded axes)."""
        p = as_points(p)
        if self.is_torus:
            return np.full(len(p), np.inf)
        c = np.minimum(p - self.lo_array, self.hi_array - p).min(axis=1)
        return np.maximum(c, 0.0)

    def images(self, pts, lo=None, hi=None) -> np.ndarray:
        """All periodic images of ``pts`` falling in the window ``[lo, hi]`` (torus only).

        On a box the points are returned unchanged.
        """
        pts = as_points(pts)
        if not self.is_torus or len(pts) == 0:
            return pts
        P = self.periods
        shifts = np.array(list(product((-1, 0, 1), repeat=self.dim)), dtype=float) * P
        out = (pts[:, None, :] + shifts[None, :, :]).reshape(-1, self.dim)
        if lo is not None:
            keep = np.all((out >= lo) & (out <= hi), axis=1)
            out = out[keep]
        return out

    def to_dict(self) -> dict:
        if self.is_torus:
            return {"kind": "torus", "origin": list(self.lo),
                    "periods": [float(p) for p in self.periods]}
        if not self.bounded:
            return {"kind": "euclidean", "dim": self.dim}
        return {"kind": "box", "bounds": [[a, b] for a, b in zip(self.lo, self.hi)]}

    @classmethod
    def from_dict(cls, d: dict) -> "Manifold":
        kind = d["kind"]
        if kind == "torus":
            return cls.torus(d["periods"], d.get("origin"))
        if kind == "euclidean":
            return cls.euclidean(int(d["dim"]))
        if kind == "box":
            return cls.box(d["bounds"])
        raise ParameterError(f"unknown manifold kind {kind!r}")
