"""Compiled kernels for conditional-sum-of-squares SARMA fitting.

Parameter vectors are laid out as ``(ar[p], ma[q], sar[P], sma[Q])``.
"""

import numpy as np
from numba import njit

BOUND = 0.99


@njit(cache=True)
def expand_polys(x, p, q, P, Q, s):
    """Expanded AR and MA lag polynomials, both with leading coefficient 1.

    AR: (1 - sum ar_k B^k)(1 - sum sar_k B^(ks)); MA: (1 + sum ma_k B^k)(1 + sum sma_k B^(ks)).
    """
    ar_ns = np.zeros(p + 1)
    ar_ns[0] = 1.0
    for k in range(p):
        ar_ns[k + 1] = -x[k]
    ma_ns = np.zeros(q + 1)
    ma_ns[0] = 1.0
    for k in range(q):
        ma_ns[k + 1] = x[p + k]
    ar_s = np.zeros(P * s + 1)
    ar_s[0] = 1.0
    for k in range(P):
        ar_s[(k + 1) * s] = -x[p + q + k]
    ma_s = np.zeros(Q * s + 1)
    ma_s[0] = 1.0
    for k in range(Q):
        ma_s[(k + 1) * s] = x[p + q + P + k]
    return np.convolve(ar_ns, ar_s), np.convolve(ma_ns, ma_s)


@njit(cache=True)
def residuals(w, ar, ma):
    """One-step residuals of a zero-mean series; entries before len(ar)-1 stay 0."""
    n = w.shape[0]
    start = ar.shape[0] - 1
    e = np.zeros(n)
    for t in range(start, n):
        acc = 0.0
        for k in range(ar.shape[0]):
            acc += ar[k] * w[t - k]
        for k in range(1, ma.shape[0]):
            if t - k >= 0:
                acc -= ma[k] * e[t - k]
        e[t] = acc
    return e


@njit(cache=True)
def css(x, w, p, q, P, Q, s):
    xc = np.minimum(np.maximum(x, -BOUND), BOUND)
    ar, ma = expand_polys(xc, p, q, P, Q, s)
    e = residuals(w, ar, ma)
    start = ar.shape[0] - 1
    total = 0.0
    for t in range(start, w.shape[0]):
        total += e[t] * e[t]
    return total


@njit(cache=True)
def _diameter(simplex):
    m = simplex.shape[0]
    best = 0.0
    for i in range(m):
        for j in range(i + 1, m):
            d = np.sqrt(np.sum((simplex[i] - simplex[j]) ** 2))
            if d > best:
                best = d
    return best


@njit(cache=True)
def nelder_mead(w, p, q, P, Q, s, x0, step, max_iter, tol):
    """Minimise the CSS objective; returns (x, f, iterations, converged)."""
    k = x0.shape[0]
    simplex = np.empty((k + 1, k))
    fvals = np.empty(k + 1)
    simplex[0] = x0
    for i in range(k):
        v = x0.copy()
        v[i] += step
        simplex[i + 1] = v
    for i in range(k + 1):
        fvals[i] = css(simplex[i], w, p, q, P, Q, s)

    it = 0
    while it < max_iter:
        order = np.argsort(fvals, kind="mergesort")
        simplex = simplex[order]
        fvals = fvals[order]
        if _diameter(simplex) < tol:
            return simplex[0], fvals[0], it, True
        it += 1
        centroid = np.zeros(k)
        for i in range(k):
            centroid += simplex[i]
        centroid /= k
        worst = simplex[k]
        xr = centroid + (centroid - worst)
        fr = css(xr, w, p, q, P, Q, s)
        if fr < fvals[0]:
            xe = centroid + 2.0 * (centroid - worst)
            fe = css(xe, w, p, q, P, Q, s)
            if fe < fr:
                simplex[k] = xe
                fvals[k] = fe
            else:
                simplex[k] = xr
                fvals[k] = fr
            continue
        if fr < fvals[k - 1]:
            simplex[k] = xr
            fvals[k] = fr
            continue
        if fr < fvals[k]:
            xc = centroid + 0.5 * (xr - centroid)
        else:
            xc = centroid + 0.5 * (worst - centroid)
        fc = css(xc, w, p, q, P, Q, s)
        if fc < min(fr, fvals[k]):
            simplex[k] = xc
            fvals[k] = fc
            continue
        for i in range(1, k + 1):
            simplex[i] = simplex[0] + 0.5 * (simplex[i] - simplex[0])
            fvals[i] = css(simplex[i], w, p, q, P, Q, s)
    order = np.argsort(fvals, kind="mergesort")
    simplex = simplex[order]
    fvals = fvals[order]
    return simplex[0], fvals[0], it, _diameter(simplex) < tol
