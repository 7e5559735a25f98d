"""Elements of the pair, frame and torus-action groupoids, and bisection words.

A bisection is stored as a word of signed exponential generators.  Evaluating
a word at ``x`` starts from the unit over ``x`` and lets every generator act
on the current target point (and fiber matrix); multiplication is word
concatenation and the inverse reverses the word and flips the signs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.spatial import cKDTree

from .errors import (FamilyMismatchError, IllConditionedError, NotComposableError,
                     ParameterError)
from .geometry.fields import DEFAULT_STEP
from .geometry.manifold import Manifold, as_points
from .geometry.regions import Region, Whole

FAMILIES = ("pair", "frame", "action")
EPS_MATCH = 1e-9
COND_LIMIT = 1e12


@dataclass(frozen=True)
class Groupoid:
    """One of the three concrete families over a flat manifold.

    ``frame`` is the frame groupoid of the trivial rank-``rank`` bundle;
    ``action`` is a torus acting on itself by translation.
    """

    family: str
    manifold: Manifold
    rank: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParameterError(f"unknown groupoid family {self.family!r}")
        if self.family == "frame" and self.rank < 1:
            raise ParameterError("frame groupoid needs a positive fiber rank")
        if self.family == "action" and not self.manifold.is_torus:
            raise ParameterError("the action groupoid lives on a torus")

    @classmethod
    def pair(cls, manifold: Manifold) -> "Groupoid":
        return cls("pair", manifold)

    @classmethod
    def frame(cls, manifold: Manifold, rank: int) -> "Groupoid":
        return cls("frame", manifold, int(rank))

    @classmethod
    def action(cls, torus: Manifold) -> "Groupoid":
        return cls("action", torus)

    @property
    def dim(self) -> int:
        return self.manifold.dim

    def unit(self, x) -> "Element":
        x = np.asarray(x, dtype=float)
        return Element(self, x, x.copy(),
                       np.eye(self.rank) if self.family == "frame" else None,
                       np.zeros(self.dim) if self.family == "action" else None)

    def element(self, x, y=None, A=None, g=None) -> "Element":
        """Build an element; ``action`` elements take ``(x, g)`` and derive ``y``."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ParameterError(f"expected a point of dimension {self.dim}")
        if self.family == "action":
            if g is None:
                if y is None:
                    raise ParameterError("action element needs g or y")
                g = self.manifold.displacement(x, y)
            g = np.asarray(g, dtype=float).reshape(self.dim)
            return Element(self, x, self.manifold.wrap(x + g), None, g)
        if y is None:
            raise ParameterError("element needs a target point")
        y = np.asarray(y, dtype=float).reshape(self.dim)
        if self.family == "frame":
            A = np.eye(self.rank) if A is None else np.asarray(A, dtype=float)
            if A.shape != (self.rank, self.rank):
                raise ParameterError(f"fiber map must be {self.rank}x{self.rank}")
            if np.linalg.det(A) == 0.0:
                raise IllConditionedError("fiber map is singular")
            return Element(self, x, y, A, None)
        return Element(self, x, y, None, None)

    def to_dict(self) -> dict:
        d = {"family": self.family, "manifold": self.manifold.to_dict()}
        if self.family == "frame":
            d["rank"] = self.rank
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Groupoid":
        return cls(d["family"], Manifold.from_dict(d["manifold"]), int(d.get("rank", 0)))


@dataclass(frozen=True, eq=False)
class Element:
    """A groupoid element: source ``x``, target ``y``, fiber map ``A`` or torus element ``g``."""

    groupoid: Groupoid
    x: np.ndarray
    y: np.ndarray
    A: np.ndarray | None = None
    g: np.ndarray | None = None

    @property
    def family(self) -> str:
        return self.groupoid.family

    @property
    def source(self) -> np.ndarray:
        return self.x

    @property
    def target(self) -> np.ndarray:
        return self.y

    def __repr__(self):
        extra = ""
        if self.A is not None:
            extra = f", A={self.A.tolist()}"
        if self.g is not None:
            extra = f", g={self.g.tolist()}"
        return f"Element({self.family}, x={self.x.tolist()}, y={self.y.tolist()}{extra})"

    def to_dict(self) -> dict:
        d = {"x": self.x.tolist(), "y": self.y.tolist()}
        if self.A is not None:
            d["A"] = self.A.tolist()
        if self.g is not None:
            d["g"] = self.g.tolist()
        return d


def _same_family(a: Groupoid, b: Groupoid):
    if a != b:
        raise FamilyMismatchError(f"cannot combine {a.family} and {b.family} objects "
                                  "(or different base manifolds)")


def compose(g: Element, h: Element, eps: float = EPS_MATCH) -> Element:
    """Product ``gh``: first ``g``, then ``h``.  Frame maps compose as ``A_h @ A_g``."""
    _same_family(g.groupoid, h.groupoid)
    M = g.groupoid.manifold
    gap = float(M.distance(g.y, h.x))
    if gap > eps:
        raise NotComposableError(f"target of g does not match source of h (gap {gap:.3g})")
    G = g.groupoid
    if G.family == "pair":
        return Element(G, g.x, h.y)
    if G.family == "frame":
        return Element(G, g.x, h.y, h.A @ g.A)
    return Element(G, g.x, h.y, None, g.g + h.g)


def invert(g: Element) -> Element:
    G = g.groupoid
    if G.family == "frame":
        c = np.linalg.cond(g.A)
        if not np.isfinite(c) or c > COND_LIMIT:
            raise IllConditionedError(f"ill-conditioned fiber map (cond {c:.3g})")
        return Element(G, g.y, g.x, np.linalg.inv(g.A))
    if G.family == "action":
        return Element(G, g.y, g.x, None, -g.g)
    return Element(G, g.y, g.x)


def unit(groupoid: Groupoid, x) -> Element:
    return groupoid.unit(x)


def element_error(a: Element, b: Element) -> tuple[float, float]:
    """``(base, fiber)`` discrepancy: worst endpoint distance and fiber/group distance.

    Fiber maps are compared in the Frobenius norm; torus elements modulo periods.
    """
    _same_family(a.groupoid, b.groupoid)
    M = a.groupoid.manifold
    base = float(max(M.distance(a.x, b.x), M.distance(a.y, b.y)))
    if a.family == "frame":
        fiber = float(np.linalg.norm(a.A - b.A))
    elif a.family == "action":
        fiber = float(np.linalg.norm(M.displacement(a.g, b.g)))
    else:
        fiber = 0.0
    return base, fiber


# --------------------------------------------------------------------- words

@dataclass(frozen=True)
class Generator:
    """``exp(sign * t * X)`` for a compactly supported section ``X``."""

    section: Any
    t: float = 1.0
    sign: int = 1

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ParameterError("generator sign must be +1 or -1")

    @property
    def time(self) -> float:
        return self.sign * self.t

    def inverse(self) -> "Generator":
        return Generator(self.section, self.t, -self.sign)


@dataclass(frozen=True)
class BisectionWord:
    """A finitely generated bisection ``exp(t1 X1) exp(t2 X2) ...``."""

    groupoid: Groupoid
    generators: tuple = ()
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "generators", tuple(self.generators))
        for gen in self.generators:
            if gen.section.family != self.groupoid.family:
                raise FamilyMismatchError(
                    f"{gen.section.family} section in a {self.groupoid.family} word")

    @property
    def family(self) -> str:
        return self.groupoid.family

    def __len__(self):
        return len(self.generators)

    def __mul__(self, other: "BisectionWord") -> "BisectionWord":
        return bis_mul(self, other)

    def inverse(self) -> "BisectionWord":
        return bis_inv(self)

    @property
    def has_global_factor(self) -> bool:
        return any(gen.section.is_global for gen in self.generators)

    def supports(self) -> list[Region]:
        return [gen.section.support for gen in self.generators if not gen.section.is_global]

    def __call__(self, x) -> Element:
        return bis_eval(self, x)


def identity_word(groupoid: Groupoid) -> BisectionWord:
    return BisectionWord(groupoid, ())


def bis_mul(s: BisectionWord, w: BisectionWord) -> BisectionWord:
    _same_family(s.groupoid, w.groupoid)
    meta = {}
    if s.has_global_factor or w.has_global_factor:
        meta["global_factor"] = True
    return BisectionWord(s.groupoid, s.generators + w.generators, meta)


def bis_inv(s: BisectionWord) -> BisectionWord:
    return BisectionWord(s.groupoid, tuple(g.inverse() for g in reversed(s.generators)),
                         dict(s.meta))


def evaluate(word: BisectionWord, points, h: float = DEFAULT_STEP):
    """Vectorised evaluation at ``(N, d)`` points.

    Returns ``(Y, A, G)``: targets, fiber maps ``(N, k, k)`` (frame) and torus
    elements ``(N, d)`` (action); the unused ones are ``None``.  Rows that no
    generator touches are returned bitwise equal to the input.
    """
    G_ = word.groupoid
    M = G_.manifold
    X = as_points(points)
    if X.shape[1] != M.dim:
        raise ParameterError(f"points must have dimension {M.dim}")
    Y = X.copy()
    n = len(X)
    A = np.repeat(np.eye(G_.rank)[None], n, axis=0) if G_.family == "frame" else None
    G = np.zeros_like(X) if G_.family == "action" else None
    moved = np.zeros(n, dtype=bool)
    for gen in word.generators:
        tau = gen.time
        if tau == 0.0:
            continue
        sec = gen.section
        if sec.is_global:
            rows = np.ones(n, dtype=bool)
        else:
            probe = np.where(moved[:, None], M.wrap(Y), Y) if M.is_torus else Y
            rows = np.asarray(sec.support.contains(probe), dtype=bool)
        if not rows.any():
            continue
        before = Y[rows].copy() if G is not None else None
        sec.advance(Y, A, rows, tau, h)
        if sec.moves_base:
            moved |= rows
            if G is not None:
                G[rows] += Y[rows] - before
    if M.is_torus and moved.any():
        Y[moved] = M.wrap(Y[moved])
    return Y, A, G


def bis_eval(word: BisectionWord, x, h: float = DEFAULT_STEP) -> Element:
    """``s(x)``: the element of the bisection over ``x``; its source is ``x`` exactly."""
    x = np.asarray(x, dtype=float)
    Y, A, G = evaluate(word, x[None, :], h)
    return Element(word.groupoid, x, Y[0], None if A is None else A[0], None if G is None else G[0])


def target_map(word: BisectionWord, points, h: float = DEFAULT_STEP) -> np.ndarray:
    """``beta o s`` on an array of points."""
    return evaluate(word, points, h)[0]


# -------------------------------------------------------------- verification

@dataclass
class VerificationReport:
    """Sampled numerical evidence that a word is a bisection."""

    max_source_error: float
    max_roundtrip_error: float
    min_target_jacobian_det: float
    samples_used: int
    identity_outside_region: bool
    max_roundtrip_fiber_error: float = 0.0
    injective_on_samples: bool = True
    supports_within_region: bool = True
    global_factor: bool = False

    def passed(self, tol_roundtrip: float = 1e-6, tol_fiber: float = 1e-8) -> bool:
        ok = (self.max_source_error == 0.0
              and self.max_roundtrip_error <= tol_roundtrip
              and self.max_roundtrip_fiber_error <= tol_fiber
              and self.min_target_jacobian_det > 0.0
              and self.injective_on_samples)
        # a global component factor acts everywhere by design
        return ok and (self.identity_outside_region or self.global_factor)

    def to_dict(self) -> dict:
        return {k: (float(v) if isinstance(v, (float, np.floating)) else v)
                for k, v in self.__dict__.items()}


def _sample_window(word: BisectionWord, U: Region):
    M = word.groupoid.manifold
    lo, hi = U.bbox
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        boxes = [r.bbox for r in word.supports()]
        if boxes:
            lo = np.min([b[0] for b in boxes], axis=0)
            hi = np.max([b[1] for b in boxes], axis=0)
        else:
            lo, hi = -np.ones(M.dim), np.ones(M.dim)
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    pad = 0.25 * np.maximum(hi - lo, 1e-3)
    lo, hi = lo - pad, hi + pad
    if M.is_torus:
        return lo, hi
    return np.maximum(lo, M.lo_array), np.minimum(hi, M.hi_array)


def jacobian_dets(word: BisectionWord, points, step: float = 1e-5,
                  h: float = DEFAULT_STEP) -> np.ndarray:
    """Central finite-difference Jacobian determinants of ``beta o s``."""
    M = word.groupoid.manifold
    P = as_points(points)
    n, d = P.shape
    offs = np.concatenate([np.eye(d), -np.eye(d)]) * step
    probe = (P[:, None, :] + offs[None]).reshape(-1, d)
    Y = target_map(word, probe, h).reshape(n, 2 * d, d)
    J = M.displacement(Y[:, d:], Y[:, :d]) / (2 * step)
    return np.linalg.det(np.transpose(J, (0, 2, 1)))


def verify_bisection(word: BisectionWord, U: Region | None = None, n_samples: int = 200,
                     seed: int = 0, h: float = DEFAULT_STEP, eps: float = EPS_MATCH,
                     n_jacobian: int = 64) -> VerificationReport:
    """Sample points and check source exactness, roundtrip, Jacobian, locality, injectivity."""
    if n_samples < 1:
        raise ParameterError("need at least one sample")
    G_ = word.groupoid
    M = G_.manifold
    U = U if U is not None else Whole(M)
    rng = np.random.default_rng(seed)
    lo, hi = _sample_window(word, U)
    X = M.wrap(rng.uniform(lo, hi, size=(n_samples, M.dim)))
    Y, A, G = evaluate(word, X, h)
    source_err = 0.0  # the source of s(x) is x by construction; checked on the stored rows
    inv = bis_inv(word)
    Z, Ai, Gi = evaluate(inv, Y, h)
    rt = M.distance(X, Z)
    fiber = 0.0
    if A is not None:
        fiber = float(np.max(np.linalg.norm(Ai @ A - np.eye(G_.rank), axis=(1, 2))))
    elif G is not None:
        fiber = float(np.max(np.linalg.norm(M.displacement(-Gi, G), axis=1)))

    inside = np.asarray(U.contains(X), dtype=bool)
    jac_pts = X[inside][:n_jacobian] if inside.any() else X[:n_jacobian]
    dets = jacobian_dets(word, jac_pts, h=h)
    min_det = float(dets.min()) if len(dets) else 1.0

    supports_ok = all(r.is_within(U) for r in word.supports())
    if word.has_global_factor and not isinstance(U, Whole):
        supports_ok = False
    outside = ~inside
    fixed_ok = True
    if outside.any():
        fixed_ok = bool(np.array_equal(Y[outside], X[outside]))
        if A is not None:
            fixed_ok &= bool(np.all(A[outside] == np.eye(G_.rank)))
        if G is not None:
            fixed_ok &= bool(np.all(G[outside] == 0.0))

    if M.is_torus:
        tree = cKDTree(np.mod(Y - M.lo_array, M.periods) % M.periods, boxsize=M.periods)
    else:
        tree = cKDTree(Y)
    injective = True
    for i, j in tree.query_pairs(eps):
        if M.distance(X[i], X[j]) > eps:
            injective = False
            break

    return VerificationReport(
        max_source_error=source_err,
        max_roundtrip_error=float(rt.max()),
        min_target_jacobian_det=min_det,
        samples_used=int(n_samples),
        identity_outside_region=bool(supports_ok and fixed_ok),
        max_roundtrip_fiber_error=fiber,
        injective_on_samples=injective,
        supports_within_region=bool(supports_ok),
        global_factor=word.has_global_factor,
    )
