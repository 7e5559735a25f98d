"""Compiled inner loops: smooth cutoff, field evaluation, RK4 transport.

Field kinds understood by ``integrate``:

* ``KIND_ZERO`` -- identically zero base field;
* ``KIND_BUMP`` -- ``chi(|p - c|) * (v + W (p - c))`` with ``bp = [c, r_in, r_out, v, W.ravel()]``;
* ``KIND_TUBE`` -- ``chi(dist(p, curve)) * curve'(t_near(p))`` with the curve given as
  piecewise cubic coefficients and ``tp = [rho, r_in, cutoff, bbox_lo, bbox_hi]``.

``periods[i] > 0`` marks a periodic axis; all differences use the minimal image.
"""
import math

import numpy as np
from numba import njit

KIND_ZERO = 0
KIND_BUMP = 1
KIND_TUBE = 2


@njit(cache=True)
def _edge(s):
    if s <= 0.0:
        return 0.0
    return math.exp(-1.0 / s)


@njit(cache=True)
def smooth_step(r, r_in, r_out):
    if r <= r_in:
        return 1.0
    if r >= r_out:
        return 0.0
    u = (r - r_in) / (r_out - r_in)
    a = _edge(1.0 - u)
    b = _edge(u)
    return a / (a + b)


@njit(cache=True)
def _min_image(v, periods):
    for i in range(v.shape[0]):
        P = periods[i]
        if P > 0.0:
            v[i] -= P * math.floor(v[i] / P + 0.5)


@njit(cache=True)
def _bump_velocity(p, bp, periods, out):
    d = p.shape[0]
    dp = np.empty(d)
    r2 = 0.0
    for i in range(d):
        dp[i] = p[i] - bp[i]
    _min_image(dp, periods)
    for i in range(d):
        r2 += dp[i] * dp[i]
    w = smooth_step(math.sqrt(r2), bp[d], bp[d + 1])
    if w == 0.0:
        for i in range(d):
            out[i] = 0.0
        return
    off = 2 * d + 2
    for i in range(d):
        acc = bp[d + 2 + i]
        for j in range(d):
            acc += bp[off + i * d + j] * dp[j]
        out[i] = w * acc


@njit(cache=True)
def _ppoly(breaks, coeffs, t, g0, g1, g2):
    m = breaks.shape[0] - 1
    j = np.searchsorted(breaks, t, side="right") - 1
    if j < 0:
        j = 0
    if j > m - 1:
        j = m - 1
    s = t - breaks[j]
    for i in range(coeffs.shape[2]):
        c0 = coeffs[0, j, i]
        c1 = coeffs[1, j, i]
        c2 = coeffs[2, j, i]
        c3 = coeffs[3, j, i]
        g0[i] = ((c0 * s + c1) * s + c2) * s + c3
        g1[i] = (3.0 * c0 * s + 2.0 * c1) * s + c2
        g2[i] = 6.0 * c0 * s + 2.0 * c1


@njit(cache=True)
def _tube_project(p, breaks, coeffs, poly, poly_t, tp, periods, g0, g1):
    """Nearest curve parameter of ``p`` (over all periodic images).

    Returns ``(t, dist)``; ``dist`` is ``inf`` when no image lies within the
    coarse cutoff.  On return ``g1`` holds the curve velocity at ``t``.
    """
    d = p.shape[0]
    cutoff = tp[2]
    klo = np.zeros(d, dtype=np.int64)
    kcount = np.ones(d, dtype=np.int64)
    total = 1
    for i in range(d):
        lo = tp[3 + i]
        hi = tp[3 + d + i]
        P = periods[i]
        if P > 0.0:
            a = int(math.ceil((lo - p[i]) / P))
            b = int(math.floor((hi - p[i]) / P))
            klo[i] = a
            kcount[i] = b - a + 1 if b >= a else 0
        elif p[i] < lo or p[i] > hi:
            kcount[i] = 0
        total *= kcount[i]
    if total == 0:
        return -1.0, np.inf
    q = np.empty(d)
    bestq = np.empty(d)
    best = np.inf
    best_t = 0.0
    npoly = poly.shape[0]
    for code in range(total):
        c = code
        for i in range(d):
            k = klo[i] + c % kcount[i]
            c //= kcount[i]
            q[i] = p[i] + k * periods[i]
        for j in range(npoly - 1):
            ab2 = 0.0
            apq = 0.0
            for i in range(d):
                e = poly[j + 1, i] - poly[j, i]
                ab2 += e * e
                apq += e * (q[i] - poly[j, i])
            lam = 0.0
            if ab2 > 0.0:
                lam = apq / ab2
                if lam < 0.0:
                    lam = 0.0
                elif lam > 1.0:
                    lam = 1.0
            d2 = 0.0
            for i in range(d):
                e = poly[j, i] + lam * (poly[j + 1, i] - poly[j, i]) - q[i]
                d2 += e * e
            if d2 < best:
                best = d2
                best_t = poly_t[j] + lam * (poly_t[j + 1] - poly_t[j])
                for i in range(d):
                    bestq[i] = q[i]
    if best > cutoff * cutoff:
        return -1.0, np.inf
    t0 = breaks[0]
    t1 = breaks[breaks.shape[0] - 1]
    t = best_t
    g2 = np.empty(d)
    for _ in range(40):
        _ppoly(breaks, coeffs, t, g0, g1, g2)
        f = 0.0
        v2 = 0.0
        curv = 0.0
        for i in range(d):
            diff = g0[i] - bestq[i]
            f += diff * g1[i]
            v2 += g1[i] * g1[i]
            curv += diff * g2[i]
        fp = v2 + curv
        if fp < 0.1 * v2:
            fp = v2
        tn = t - f / fp
        if tn < t0:
            tn = t0
        elif tn > t1:
            tn = t1
        if abs(tn - t) <= 4e-16 * (1.0 + abs(t)):
            t = tn
            break
        t = tn
    _ppoly(breaks, coeffs, t, g0, g1, g2)
    d2 = 0.0
    for i in range(d):
        e = g0[i] - bestq[i]
        d2 += e * e
    return t, math.sqrt(d2)


@njit(cache=True)
def _tube_velocity(p, breaks, coeffs, poly, poly_t, tp, periods, out):
    d = p.shape[0]
    g0 = np.empty(d)
    g1 = np.empty(d)
    t, dist = _tube_project(p, breaks, coeffs, poly, poly_t, tp, periods, g0, g1)
    w = 0.0
    if dist < tp[0]:
        w = smooth_step(dist, tp[1], tp[0])
    if w == 0.0:
        for i in range(d):
            out[i] = 0.0
        return
    for i in range(d):
        out[i] = w * g1[i]


@njit(cache=True)
def _velocity(kind, y, bp, breaks, coeffs, poly, poly_t, periods, out):
    if kind == KIND_BUMP:
        _bump_velocity(y, bp, periods, out)
    elif kind == KIND_TUBE:
        _tube_velocity(y, breaks, coeffs, poly, poly_t, bp, periods, out)
    else:
        for i in range(y.shape[0]):
            out[i] = 0.0


@njit(cache=True)
def _fiber_weight(y, fp, periods):
    d = y.shape[0]
    dp = np.empty(d)
    for i in range(d):
        dp[i] = y[i] - fp[i]
    _min_image(dp, periods)
    r2 = 0.0
    for i in range(d):
        r2 += dp[i] * dp[i]
    return smooth_step(math.sqrt(r2), fp[d], fp[d + 1])


@njit(cache=True)
def _fiber_rate(w, S, A, out):
    k = S.shape[0]
    for i in range(k):
        for j in range(k):
            acc = 0.0
            for l in range(k):
                acc += S[i, l] * A[l, j]
            out[i, j] = w * acc


@njit(cache=True)
def eval_field(points, kind, bp, breaks, coeffs, poly, poly_t, periods):
    n, d = points.shape
    out = np.zeros((n, d))
    v = np.empty(d)
    for i in range(n):
        _velocity(kind, points[i], bp, breaks, coeffs, poly, poly_t, periods, v)
        for j in range(d):
            out[i, j] = v[j]
    return out


@njit(cache=True)
def tube_project_many(points, breaks, coeffs, poly, poly_t, tp, periods):
    n, d = points.shape
    ts = np.empty(n)
    dist = np.empty(n)
    g0 = np.empty(d)
    g1 = np.empty(d)
    for i in range(n):
        t, dd = _tube_project(points[i], breaks, coeffs, poly, poly_t, tp, periods, g0, g1)
        ts[i] = t
        dist[i] = dd
    return ts, dist


@njit(cache=True)
def integrate(points, mats, active, t, h, kind, bp, breaks, coeffs, poly, poly_t,
              periods, has_fiber, fp, S):
    """Classical RK4 for ``y' = X(y)`` (and ``A' = w(y) S A`` when ``has_fiber``).

    Fixed step ``h``; the last partial step is shortened.  Rows with
    ``active[i] == False`` are not touched.  Works in place.
    """
    n, d = points.shape
    T = abs(t)
    sgn = 1.0 if t >= 0.0 else -1.0
    nfull = int(T / h + 1e-9)
    rem = T - nfull * h
    if rem <= 1e-12 * (1.0 + T):
        rem = 0.0
    nsteps = nfull + (1 if rem > 0.0 else 0)
    k = S.shape[0]
    k1 = np.empty(d)
    k2 = np.empty(d)
    k3 = np.empty(d)
    k4 = np.empty(d)
    ys = np.empty(d)
    a1 = np.empty((k, k))
    a2 = np.empty((k, k))
    a3 = np.empty((k, k))
    a4 = np.empty((k, k))
    As = np.empty((k, k))
    for i in range(n):
        if not active[i]:
            continue
        y = points[i].copy()
        A = mats[i].copy() if has_fiber else np.empty((0, 0))
        for s in range(nsteps):
            hs = sgn * (h if s < nfull else rem)
            _velocity(kind, y, bp, breaks, coeffs, poly, poly_t, periods, k1)
            if has_fiber:
                _fiber_rate(_fiber_weight(y, fp, periods), S, A, a1)
            for j in range(d):
                ys[j] = y[j] + 0.5 * hs * k1[j]
            if has_fiber:
                for r in range(k):
                    for c in range(k):
                        As[r, c] = A[r, c] + 0.5 * hs * a1[r, c]
            _velocity(kind, ys, bp, breaks, coeffs, poly, poly_t, periods, k2)
            if has_fiber:
                _fiber_rate(_fiber_weight(ys, fp, periods), S, As, a2)
            for j in range(d):
                ys[j] = y[j] + 0.5 * hs * k2[j]
            if has_fiber:
                for r in range(k):
                    for c in range(k):
                        As[r, c] = A[r, c] + 0.5 * hs * a2[r, c]
            _velocity(kind, ys, bp, breaks, coeffs, poly, poly_t, periods, k3)
            if has_fiber:
                _fiber_rate(_fiber_weight(ys, fp, periods), S, As, a3)
            for j in range(d):
                ys[j] = y[j] + hs * k3[j]
            if has_fiber:
                for r in range(k):
                    for c in range(k):
                        As[r, c] = A[r, c] + hs * a3[r, c]
            _velocity(kind, ys, bp, breaks, coeffs, poly, poly_t, periods, k4)
            if has_fiber:
                _fiber_rate(_fiber_weight(ys, fp, periods), S, As, a4)
            for j in range(d):
                y[j] += hs / 6.0 * (k1[j] + 2.0 * (k2[j] + k3[j]) + k4[j])
            if has_fiber:
                for r in range(k):
                    for c in range(k):
                        A[r, c] += hs / 6.0 * (a1[r, c] + 2.0 * (a2[r, c] + a3[r, c]) + a4[r, c])
        for j in range(d):
            points[i, j] = y[j]
        if has_fiber:
            for r in range(k):
                for c in range(k):
                    mats[i, r, c] = A[r, c]
