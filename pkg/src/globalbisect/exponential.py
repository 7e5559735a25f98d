"""Compactly supported sections and their exponentials as bisection generators."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import expm, polar, schur

from .errors import GaugeFitError, IllConditionedError, ParameterError
from .geometry.fields import (BumpField, CompactVectorField, TubeField, ZeroField,
                              field_from_dict, integrate_rows, smooth_step)
from .geometry.regions import Ball, Region, Union, Whole
from .groupoid import COND_LIMIT, BisectionWord, Generator, Groupoid

GAUGE_INNER = 0.5   # plateau of the gauge bump as a fraction of its radius


@dataclass(frozen=True)
class FiberBump:
    """Fiber part ``chi(|y - center|) * S`` of a frame section."""

    center: np.ndarray
    r_in: float
    r_out: float
    S: np.ndarray

    def weight(self, pts, manifold) -> np.ndarray:
        return smooth_step(manifold.distance(self.center, pts), self.r_in, self.r_out)

    def __call__(self, pts, manifold) -> np.ndarray:
        return self.weight(pts, manifold)[..., None, None] * self.S

    def to_dict(self) -> dict:
        return {"center": self.center.tolist(), "r_in": self.r_in, "r_out": self.r_out,
                "S": self.S.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "FiberBump":
        return cls(np.asarray(d["center"], float), float(d["r_in"]), float(d["r_out"]),
                   np.asarray(d["S"], float))


class CompactSection:
    """A section with compact support of one of the three algebroids.

    ``base_field`` is the anchor (a vector field on the base).  Frame sections
    may carry a fiber part; on the action groupoid the Lie-algebra valued
    function coincides with the base field, since the torus acts by translation.
    """

    is_global = False

    def __init__(self, groupoid: Groupoid, base_field: CompactVectorField | None = None,
                 fiber: FiberBump | None = None, kind: str | None = None):
        self.groupoid = groupoid
        self.base_field = base_field if base_field is not None else ZeroField(groupoid.manifold)
        if self.base_field.manifold != groupoid.manifold:
            raise ParameterError("section field lives on a different manifold")
        if fiber is not None:
            if groupoid.family != "frame":
                raise ParameterError("only frame sections have a fiber part")
            if fiber.S.shape != (groupoid.rank, groupoid.rank):
                raise ParameterError("fiber matrix has the wrong size")
            if not 0 < fiber.r_in < fiber.r_out:
                raise ParameterError("fiber bump radii must satisfy 0 < r_in < r_out")
        self.fiber = fiber
        self.kind = kind or self._default_kind()

    def _default_kind(self) -> str:
        if isinstance(self.base_field, TubeField) and self.fiber is None:
            return "tube"
        if isinstance(self.base_field, ZeroField) and self.fiber is not None:
            return "gauge"
        if isinstance(self.base_field, BumpField) and self.fiber is None:
            return "action-bump" if self.family == "action" else "bump"
        return "section"

    @property
    def family(self) -> str:
        return self.groupoid.family

    @property
    def moves_base(self) -> bool:
        return not isinstance(self.base_field, ZeroField)

    @cached_property
    def support(self) -> Region:
        parts = []
        if self.moves_base:
            parts.append(self.base_field.support)
        if self.fiber is not None:
            parts.append(Ball(self.fiber.center, self.fiber.r_out, self.groupoid.manifold))
        if not parts:
            return self.base_field.support
        return parts[0] if len(parts) == 1 else Union(parts)

    def lie_field(self, pts) -> np.ndarray:
        """Value of the torus Lie-algebra valued function (action family)."""
        return self.base_field(pts)

    def advance(self, Y, A, rows, tau, h) -> None:
        """Apply ``exp(tau X)`` to the selected rows of ``Y`` (and ``A``) in place."""
        idx = np.nonzero(rows)[0]
        M = self.groupoid.manifold
        if not self.moves_base:
            if self.fiber is not None and A is not None:
                # base points stay put, so the transport is an exact matrix exponential
                w = self.fiber.weight(Y[idx], M)
                A[idx] = expm((tau * w)[:, None, None] * self.fiber.S) @ A[idx]
            return
        pts = np.ascontiguousarray(Y[idx])
        if self.fiber is not None and A is not None:
            mats = np.ascontiguousarray(A[idx])
            f = self.fiber
            integrate_rows(self.base_field, pts, tau, h, mats, (f.center, f.r_in, f.r_out, f.S))
            A[idx] = mats
        else:
            integrate_rows(self.base_field, pts, tau, h)
        Y[idx] = pts

    def to_dict(self) -> dict:
        if self.kind == "tube":
            params = {"rho": self.base_field.rho, "curve": self.base_field.curve.to_dict()}
        elif self.kind == "gauge":
            params = self.fiber.to_dict()
        elif self.kind in ("bump", "action-bump"):
            params = self.base_field.to_dict()
            params.pop("kind")
        else:
            params = {"base": self.base_field.to_dict(),
                      "fiber": None if self.fiber is None else self.fiber.to_dict()}
        return {"type": self.kind, "parameters": params}

    def __repr__(self):
        return f"CompactSection({self.family}, {self.kind})"


class ConstantFactor:
    """A globally constant fiber map ``A -> M A`` (not an exponential)."""

    is_global = True
    moves_base = False
    kind = "constant"

    def __init__(self, groupoid: Groupoid, matrix):
        if groupoid.family != "frame":
            raise ParameterError("constant fiber factors exist only in the frame family")
        self.groupoid = groupoid
        self.matrix = np.asarray(matrix, dtype=float)
        if self.matrix.shape != (groupoid.rank, groupoid.rank):
            raise ParameterError("constant factor has the wrong size")
        c = np.linalg.cond(self.matrix)
        if not np.isfinite(c) or c > COND_LIMIT:
            raise IllConditionedError("constant factor is singular")
        self.inverse = np.linalg.inv(self.matrix)

    @property
    def family(self):
        return self.groupoid.family

    @cached_property
    def support(self):
        return Whole(self.groupoid.manifold)

    def advance(self, Y, A, rows, tau, h) -> None:
        if abs(abs(tau) - 1.0) > 1e-15:
            raise ParameterError("constant factors only support t = +-1")
        if A is not None:
            Mx = self.matrix if tau > 0 else self.inverse
            A[rows] = Mx @ A[rows]

    def to_dict(self) -> dict:
        return {"type": "constant", "parameters": {"matrix": self.matrix.tolist()}}

    def __repr__(self):
        return f"ConstantFactor({self.matrix.tolist()})"


def section_from_dict(d: dict, groupoid: Groupoid):
    kind = d["type"]
    p = d["parameters"]
    M = groupoid.manifold
    if kind == "constant":
        return ConstantFactor(groupoid, p["matrix"])
    if kind == "tube":
        return CompactSection(groupoid, field_from_dict({"kind": "tube", **p}, M), kind=kind)
    if kind == "gauge":
        return CompactSection(groupoid, None, FiberBump.from_dict(p), kind=kind)
    if kind in ("bump", "action-bump"):
        return CompactSection(groupoid, field_from_dict({"kind": "bump", **p}, M), kind=kind)
    if kind == "section":
        fiber = None if p.get("fiber") is None else FiberBump.from_dict(p["fiber"])
        return CompactSection(groupoid, field_from_dict(p["base"], M), fiber, kind=kind)
    raise ParameterError(f"unknown generator type {kind!r}")


def exp_bisection(X, t: float = 1.0) -> BisectionWord:
    """The single-generator word ``exp(t X)``."""
    sign = -1 if t < 0 else 1
    return BisectionWord(X.groupoid, (Generator(X, abs(float(t)), sign),))


# ------------------------------------------------------------------- gauge

def skew_log(R: np.ndarray) -> np.ndarray:
    """Real skew-symmetric ``S`` with ``expm(S) = R`` for a rotation ``R``.

    Built block by block from the real Schur form, so rotations by ``pi``
    (where the principal matrix logarithm is not real) are handled too.
    """
    T, Z = schur(R, output="real")
    k = len(T)
    L = np.zeros((k, k))
    neg = []
    i = 0
    while i < k:
        if i + 1 < k and abs(T[i + 1, i]) > 1e-13:
            theta = np.arctan2(0.5 * (T[i + 1, i] - T[i, i + 1]), 0.5 * (T[i, i] + T[i + 1, i + 1]))
            L[i + 1, i], L[i, i + 1] = theta, -theta
            i += 2
        else:
            if T[i, i] < 0:
                neg.append(i)
            i += 1
    if len(neg) % 2:
        raise ParameterError("matrix is not a rotation (determinant -1)")
    for a, b in zip(neg[::2], neg[1::2]):
        L[b, a], L[a, b] = np.pi, -np.pi
    S = Z @ L @ Z.T
    return 0.5 * (S - S.T)


def spd_log(P: np.ndarray) -> np.ndarray:
    lam, V = np.linalg.eigh(0.5 * (P + P.T))
    S = (V * np.log(lam)) @ V.T
    return 0.5 * (S + S.T)


@dataclass
class GaugeFactors:
    """Gauge sections in application order plus the component correction ``D``."""

    sections: list
    D: np.ndarray

    @property
    def reflects(self) -> bool:
        return bool(self.D[0, 0] < 0)


def gauge_generators(A, y, r: float, orthogonal_only: bool = False,
                     groupoid: Groupoid | None = None) -> GaugeFactors:
    """Factor ``A = D R P`` into isotropy sections supported in the ``r``-ball about ``y``.

    ``R = expm(S1)`` with ``S1`` skew and ``P = expm(S2)`` with ``S2``
    symmetric are the polar factors; ``D`` is the identity or
    ``diag(-1, 1, ..., 1)``.  The returned sections (stretch first, then
    rotation) have zero base field and fiber field ``chi * S_i``; their
    time-1 exponentials followed by ``D`` give ``A`` at ``y``.
    """
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float)
    k = A.shape[0]
    if A.shape != (k, k):
        raise ParameterError("fiber map must be square")
    c = np.linalg.cond(A)
    if not np.isfinite(c) or c > COND_LIMIT:
        raise IllConditionedError(f"singular or ill-conditioned fiber map (cond {c:.3g})")
    if groupoid is None:
        from .geometry.manifold import Manifold
        groupoid = Groupoid.frame(Manifold.euclidean(len(y)), k)
    if r <= 0:
        raise GaugeFitError("gauge ball radius must be positive")
    I = np.eye(k)
    if np.array_equal(A, I):
        return GaugeFactors([], I)
    if orthogonal_only and np.linalg.norm(A.T @ A - I) > 1e-10:
        raise ParameterError("orthogonal variant needs an orthogonal fiber map")
    U, P = polar(A, side="right")
    D = I.copy()
    if np.linalg.det(U) < 0:
        D[0, 0] = -1.0
    R = D @ U
    S1 = skew_log(R)
    if orthogonal_only:
        pieces = [S1]
        recon = D @ expm(S1)
    else:
        S2 = spd_log(P)
        pieces = [S2, S1]
        recon = D @ expm(S1) @ expm(S2)
    if np.linalg.norm(recon - A) > 1e-10 * max(1.0, np.linalg.norm(A)):
        raise GaugeFitError("polar factorisation did not reproduce the fiber map")
    sections = [CompactSection(groupoid, None, FiberBump(y.copy(), GAUGE_INNER * r, float(r), S),
                               kind="gauge") for S in pieces]
    return GaugeFactors(sections, D)


def gauge_word(factors: GaugeFactors, groupoid: Groupoid) -> BisectionWord:
    gens = [Generator(s, 1.0, 1) for s in factors.sections]
    meta = {}
    if factors.reflects:
        gens.append(Generator(ConstantFactor(groupoid, factors.D), 1.0, 1))
        meta["global_factor"] = True
    return BisectionWord(groupoid, tuple(gens), meta)
