"""Compiled kernels for first returns to a base rectangle.

A rectangle is the float vector (c1, c2, hu, hs): center on the torus and
eigenframe half-lengths.  Membership uses the minimal-image displacement.
"""

import math

import numpy as np
from numba import njit

from . import _surface as _s

MIX = 1099511628211


@njit(cache=True)
def rect_coords(x1, x2, rect, frame):
    d1 = x1 - rect[0]
    d1 -= math.floor(d1 + 0.5)
    d2 = x2 - rect[1]
    d2 -= math.floor(d2 + 0.5)
    return frame[0, 0] * d1 + frame[0, 1] * d2, frame[1, 0] * d1 + frame[1, 1] * d2


@njit(cache=True)
def in_rect(x1, x2, rect, frame):
    zu, zs = rect_coords(x1, x2, rect, frame)
    return abs(zu) < rect[2] and abs(zs) < rect[3]


@njit(cache=True)
def mix(h, v):
    return (h ^ v) * MIX


@njit(cache=True)
def first_entry_many(pts, cap, inverse, geo, mat, minv, frame, marks):
    """First n in [0, cap] with g^n(x) in a chart disk, or cap + 1."""
    out = np.empty(pts.shape[0], dtype=np.int64)
    for i in range(pts.shape[0]):
        x1 = pts[i, 0]
        x2 = pts[i, 1]
        out[i] = cap + 1
        for n in range(cap + 1):
            k, _, _ = _s.locate(x1, x2, frame, marks, geo[_s.G_ZR])
            if k >= 0:
                out[i] = n
                break
            x1, x2, _ = _s.g_step(x1, x2, inverse, geo, mat, minv, frame, marks)
    return out


@njit(cache=True)
def first_return(x1, x2, v1, v2, n_max, rect, vbuf, off, geo, mat, minv, frame, marks):
    """Iterate g from x in the rectangle until it is back inside.

    Disk visits (chart, entry step, exit step, quadrant code) are written to
    ``vbuf`` starting at row ``off`` while space lasts.  Returns
    (tau or -1, L, slow steps, hash, log J^u sum, max one-step log J^u, y1, y2).
    """
    zr = geo[_s.G_ZR]
    L = 0
    prev = False
    logj = 0.0
    maxlog = -np.inf
    slow = 0
    h = 14695981039346656037 - 2 ** 64
    cap = vbuf.shape[0]
    for n in range(n_max + 1):
        if n > 0 and in_rect(x1, x2, rect, frame):
            return n, L, slow, h, logj, maxlog, x1, x2
        k, zu, zs = _s.locate(x1, x2, frame, marks, zr)
        inside = k >= 0
        if inside and not prev:
            quad = (2 if zu < 0.0 else 0) + (1 if zs < 0.0 else 0)
            if off + L < cap:
                vbuf[off + L, 0] = k
                vbuf[off + L, 1] = n
                vbuf[off + L, 3] = quad
            h = mix(mix(mix(h, k), n), quad)
        elif prev and not inside:
            if off + L < cap:
                vbuf[off + L, 2] = n
            h = mix(h, n)
            L += 1
        prev = inside
        if n == n_max:
            break
        kk, _, _ = _s.nonlinear_here(x1, x2, False, geo, frame, marks)
        if kk >= 0:
            slow += 1
        j11, j12, j21, j22 = _s.dg_step(x1, x2, False, geo, frame, marks)
        v1, v2, lg = _s.push_unit(j11, j12, j21, j22, v1, v2)
        logj += lg
        if lg > maxlog:
            maxlog = lg
        x1, x2, _ = _s.g_step(x1, x2, False, geo, mat, minv, frame, marks)
    return -1, L, slow, h, logj, maxlog, x1, x2


@njit(cache=True)
def first_return_many(pts, dirs, n_max, rect, vbuf, start, geo, mat, minv, frame, marks):
    """Batch version; stops early when ``vbuf`` fills and reports where.

    Returns (ints (n, 5): tau, L, slow, hash, visit offset;
    floats (n, 4): log J^u, max step, y1, y2; next index to process).
    """
    n = pts.shape[0]
    ints = np.zeros((n, 5), dtype=np.int64)
    flts = np.zeros((n, 4))
    off = 0
    for i in range(start, n):
        tau, L, slow, h, lj, ml, y1, y2 = first_return(
            pts[i, 0], pts[i, 1], dirs[i, 0], dirs[i, 1], n_max, rect, vbuf, off,
            geo, mat, minv, frame, marks)
        if off + L > vbuf.shape[0]:
            return ints, flts, i
        ints[i, 0] = tau
        ints[i, 1] = L
        ints[i, 2] = slow
        ints[i, 3] = h
        ints[i, 4] = off
        flts[i, 0] = lj
        flts[i, 1] = ml
        flts[i, 2] = y1
        flts[i, 3] = y2
        off += L
    return ints, flts, n


@njit(cache=True)
def branch_through(w1, w2, inverse, rect, cap, depth, buf, geo, mat, minv, frame, marks):
    """Branch of the rectangle's return map that passes through w.

    Walks the opposite map from w until it lands in the rectangle (the branch
    start) and the map itself until it returns; the orbit is written to
    ``buf`` in forward order.  Returns (length, steps before w, status)
    with status 0 ok, 1 no start found, 2 no return found.
    """
    m = 0
    x1 = w1
    x2 = w2
    half = buf.shape[0] // 2
    tmp1 = np.empty(cap + 1)
    tmp2 = np.empty(cap + 1)
    tmp1[0] = w1
    tmp2[0] = w2
    found = False
    for i in range(1, min(cap, half - 1) + 1):
        x1, x2, _ = _s.g_step(x1, x2, not inverse, geo, mat, minv, frame, marks)
        tmp1[i] = x1
        tmp2[i] = x2
        if in_rect(x1, x2, rect, frame):
            m = i
            found = True
            break
    if not found:
        return 0, 0, 1
    for i in range(m + 1):
        buf[i, 0] = tmp1[m - i]
        buf[i, 1] = tmp2[m - i]
    x1 = w1
    x2 = w2
    n = m + 1
    for _ in range(cap):
        if n >= buf.shape[0]:
            break
        x1, x2, _ = _s.g_step(x1, x2, inverse, geo, mat, minv, frame, marks)
        buf[n, 0] = x1
        buf[n, 1] = x2
        n += 1
        if in_rect(x1, x2, rect, frame):
            return n, m, 0
    return n, m, 2


@njit(cache=True)
def backward_returns(x1, x2, v1, v2, inverse, rect, depth, cap, geo, mat, minv, frame, marks):
    """Log expansion of v under the opposite map, recorded at each rectangle hit.

    Entry 0 is 0 (the start itself); entries past the last hit are NaN.
    """
    out = np.full(depth, np.nan)
    out[0] = 0.0
    acc = 0.0
    got = 1
    for _ in range(cap):
        if got >= depth:
            break
        j11, j12, j21, j22 = _s.dg_step(x1, x2, not inverse, geo, frame, marks)
        v1, v2, lg = _s.push_unit(j11, j12, j21, j22, v1, v2)
        acc += lg
        x1, x2, _ = _s.g_step(x1, x2, not inverse, geo, mat, minv, frame, marks)
        if in_rect(x1, x2, rect, frame):
            out[got] = acc
            got += 1
    return out


@njit(cache=True)
def push_series(jac, v1, v2):
    """Unit vectors v_n = J_{n-1} ... J_0 v / |.| and one-step log stretches."""
    n = jac.shape[0]
    vec = np.empty((n + 1, 2))
    logs = np.empty(n)
    vec[0, 0] = v1
    vec[0, 1] = v2
    for i in range(n):
        v1, v2, lg = _s.push_unit(jac[i, 0, 0], jac[i, 0, 1], jac[i, 1, 0], jac[i, 1, 1], v1, v2)
        vec[i + 1, 0] = v1
        vec[i + 1, 1] = v2
        logs[i] = lg
    return vec, logs


@njit(cache=True)
def pull_series(jac, v1, v2):
    """Pull v back through J_{n-1}, ..., J_0; logs[i] = log |J_i s_i| for the pulled s_i."""
    n = jac.shape[0]
    vec = np.empty((n + 1, 2))
    logs = np.empty(n)
    vec[n, 0] = v1
    vec[n, 1] = v2
    for i in range(n - 1, -1, -1):
        a = jac[i, 0, 0]
        b = jac[i, 0, 1]
        c = jac[i, 1, 0]
        d = jac[i, 1, 1]
        det = a * d - b * c
        v1, v2, lg = _s.push_unit(d / det, -b / det, -c / det, a / det, v1, v2)
        vec[i, 0] = v1
        vec[i, 1] = v2
        logs[i] = -lg
    return vec, logs


@njit(cache=True)
def linear_distortion(orbit, u, log_u, s, log_s, log_eps, inverse, geo, frame, marks):
    """First-order change of log |J_{n-1} ... J_0 u_0| when the orbit is moved
    along its stable offsets delta_k = eps * exp(sum log_s[:k]) * s_k.

    Only nonlinear steps contribute; dJ/dx is a central difference in the
    chart.  Products are handled through an adjoint vector kept in log form,
    so offsets far below machine resolution are still accounted for.
    Returns (log |D|, sign of D, number of contributing steps).
    """
    n = log_u.shape[0]
    b1 = u[n, 0]
    b2 = u[n, 1]
    lt = 0.0
    suffix = 0.0
    logd = np.empty(n + 1)
    logd[0] = log_eps
    for k in range(n):
        logd[k + 1] = logd[k] + log_s[k]
    tl = np.empty(n)
    ts = np.empty(n)
    m = 0
    for k in range(n - 1, -1, -1):
        x1 = orbit[k, 0]
        x2 = orbit[k, 1]
        c, zs1, zs2 = _s.nonlinear_here(x1, x2, inverse, geo, frame, marks)
        j11, j12, j21, j22 = _s.dg_step(x1, x2, inverse, geo, frame, marks)
        if c >= 0:
            h = 1e-5 * 2.0 * math.sqrt(zs1 * zs1 + zs2 * zs2)
            d1 = s[k, 0] * frame[0, 0] + s[k, 1] * frame[1, 0]
            d2 = s[k, 0] * frame[0, 1] + s[k, 1] * frame[1, 1]
            p11, p12, p21, p22 = _s.dg_step(_s.wrap(x1 + h * d1), _s.wrap(x2 + h * d2),
                                            inverse, geo, frame, marks)
            q11, q12, q21, q22 = _s.dg_step(_s.wrap(x1 - h * d1), _s.wrap(x2 - h * d2),
                                            inverse, geo, frame, marks)
            v1 = u[k, 0]
            v2 = u[k, 1]
            w1 = ((p11 - q11) * v1 + (p12 - q12) * v2) / (2.0 * h)
            w2 = ((p21 - q21) * v1 + (p22 - q22) * v2) / (2.0 * h)
            dot = w1 * b1 + w2 * b2
            if dot != 0.0:
                tl[m] = math.log(abs(dot)) + logd[k] + lt - suffix - log_u[k]
                ts[m] = 1.0 if dot > 0 else -1.0
                m += 1
        # adjoint: b <- J_k^T b
        c1 = j11 * b1 + j21 * b2
        c2 = j12 * b1 + j22 * b2
        nb = math.sqrt(c1 * c1 + c2 * c2)
        b1 = c1 / nb
        b2 = c2 / nb
        lt += math.log(nb)
        suffix += log_u[k]
    if m == 0:
        return -np.inf, 0.0, 0
    top = tl[:m].max()
    acc = 0.0
    for i in range(m):
        acc += ts[i] * math.exp(tl[i] - top)
    if acc == 0.0:
        return -np.inf, 0.0, m
    return top + math.log(abs(acc)), (1.0 if acc > 0 else -1.0), m


@njit(cache=True)
def jacobian_derivatives(orbit, s, inverse, geo, frame, marks):
    """dJ/dx along the unit offsets s_k (eigenframe) at nonlinear steps, zero elsewhere."""
    n = orbit.shape[0] - 1
    out = np.zeros((n, 2, 2))
    for k in range(n):
        x1 = orbit[k, 0]
        x2 = orbit[k, 1]
        c, zs1, zs2 = _s.nonlinear_here(x1, x2, inverse, geo, frame, marks)
        if c < 0:
            continue
        h = 1e-5 * 2.0 * math.sqrt(zs1 * zs1 + zs2 * zs2)
        d1 = s[k, 0] * frame[0, 0] + s[k, 1] * frame[1, 0]
        d2 = s[k, 0] * frame[0, 1] + s[k, 1] * frame[1, 1]
        p11, p12, p21, p22 = _s.dg_step(_s.wrap(x1 + h * d1), _s.wrap(x2 + h * d2),
                                        inverse, geo, frame, marks)
        q11, q12, q21, q22 = _s.dg_step(_s.wrap(x1 - h * d1), _s.wrap(x2 - h * d2),
                                        inverse, geo, frame, marks)
        out[k, 0, 0] = (p11 - q11) / (2.0 * h)
        out[k, 0, 1] = (p12 - q12) / (2.0 * h)
        out[k, 1, 0] = (p21 - q21) / (2.0 * h)
        out[k, 1, 1] = (p22 - q22) / (2.0 * h)
    return out
