"""Compiled inner loops: 1-D discrete Legendre transform and interval deposition."""

import numpy as np
from numba import njit


@njit(cache=True)
def legendre_rows(y, vals, x, out_val, out_idx):
    """Row-wise discrete conjugate ``max_k x*y[k] - vals[r, k]``.

    Linear-time: lower convex hull of ``(y, vals[r])`` followed by a merge
    against the sorted query points. Ties go to the lowest index.

    Args:
        y: strictly increasing abscissae, shape ``(K,)``.
        vals: function values, shape ``(R, K)``.
        x: nondecreasing query points, shape ``(M,)``.
        out_val: output conjugate values, shape ``(R, M)``.
        out_idx: output argmax indices into ``y``, shape ``(R, M)``.
    """
    R, K = vals.shape
    M = x.shape[0]
    hull = np.empty(K, np.int64)
    for r in range(R):
        v = vals[r]
        nh = 0
        for k in range(K):
            while nh >= 2:
                i0 = hull[nh - 2]
                i1 = hull[nh - 1]
                # drop i1 when it lies on or above the chord i0 -> k
                if (v[i1] - v[i0]) * (y[k] - y[i0]) >= (v[k] - v[i0]) * (y[i1] - y[i0]):
                    nh -= 1
                else:
                    break
            hull[nh] = k
            nh += 1
        j = 0
        for t in range(M):
            xt = x[t]
            while j < nh - 1 and (v[hull[j + 1]] - v[hull[j]]) < xt * (y[hull[j + 1]] - y[hull[j]]):
                j += 1
            kk = hull[j]
            out_idx[r, t] = kk
            out_val[r, t] = xt * y[kk] - v[kk]


@njit(cache=True)
def deposit_intervals(a, b, mass, lo, h, n, out):
    """Spread ``mass[r, k]`` uniformly over ``[a[r, k], b[r, k]]`` onto dual cells.

    Target cell ``j`` is ``[lo + (j - 1/2) h, lo + (j + 1/2) h]`` clipped to the
    domain, i.e. the dual cell of node ``j`` on a node-centred grid with ``n``
    nodes. Intervals narrower than ``1e-9 h`` are treated as point masses.
    Callers clamp the endpoints into the domain beforehand.
    """
    R, K = a.shape
    tiny = 1e-9 * h
    for r in range(R):
        for k in range(K):
            m = mass[r, k]
            if m == 0.0:
                continue
            p = a[r, k]
            q = b[r, k]
            if q < p:
                p, q = q, p
            j = int(np.floor((p - lo) / h + 0.5))
            if j < 0:
                j = 0
            if j > n - 1:
                j = n - 1
            width = q - p
            if width <= tiny:
                out[r, j] += m
                continue
            dens = m / width
            while j < n:
                left = lo + (j - 0.5) * h
                right = lo + (j + 0.5) * h
                if j == 0:
                    left = p
                if j == n - 1:
                    right = q
                lo_ov = p if p > left else left
                hi_ov = q if q < right else right
                if hi_ov > lo_ov:
                    out[r, j] += dens * (hi_ov - lo_ov)
                if right >= q:
                    break
                j += 1


@njit(cache=True)
def ngp_deposit_2d(px, py, mass, lo0, h0, n0, lo1, h1, n1, out):
    """Nearest-node deposition of weighted 2-D points, batched over rows."""
    R, P = px.shape
    for r in range(R):
        for p in range(P):
            i = int(np.floor((px[r, p] - lo0) / h0 + 0.5))
            j = int(np.floor((py[r, p] - lo1) / h1 + 0.5))
            if i < 0:
                i = 0
            elif i > n0 - 1:
                i = n0 - 1
            if j < 0:
                j = 0
            elif j > n1 - 1:
                j = n1 - 1
            out[r, i, j] += mass[r, p]
