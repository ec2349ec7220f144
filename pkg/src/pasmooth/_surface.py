"""Compiled kernels for the torus model: chart lookup, g, g^-1 and dg.

Geometry is passed as plain arrays so every kernel stays a pure function:

* ``geo``    float64 vector, layout given by the ``G_*`` indices below
* ``mat``    the integer matrix M as float64 (2, 2)
* ``minv``   M^-1 as float64 (2, 2)
* ``frame``  rows e_u and e_s (orthonormal eigenvectors)
* ``marks``  (4, 2) marked points

Chart coordinates: z = frame @ (x - mark) with the minimal image
displacement; the sector coordinate is s = z / 2.
"""

import math

import numpy as np
from numba import njit

from ._kernels import flow_jacobian, flow_point, touches_slow_region

G_LAM, G_L, G_ZR, G_P, G_U0, G_U1, G_KC, G_SLOW, G_QTOL, G_RTOL, G_ATOL = range(11)
GEO_SIZE = 11


@njit(cache=True)
def wrap(v):
    return v - math.floor(v)


@njit(cache=True)
def locate(x1, x2, frame, marks, zr):
    """Index of the chart containing x (or -1) and the chart coordinate z."""
    for k in range(marks.shape[0]):
        d1 = x1 - marks[k, 0]
        d1 -= math.floor(d1 + 0.5)
        d2 = x2 - marks[k, 1]
        d2 -= math.floor(d2 + 0.5)
        zu = frame[0, 0] * d1 + frame[0, 1] * d2
        zs = frame[1, 0] * d1 + frame[1, 1] * d2
        if zu * zu + zs * zs < zr * zr:
            return k, zu, zs
    return -1, 0.0, 0.0


@njit(cache=True)
def chart_to_torus(k, zu, zs, frame, marks):
    y1 = marks[k, 0] + frame[0, 0] * zu + frame[1, 0] * zs
    y2 = marks[k, 1] + frame[0, 1] * zu + frame[1, 1] * zs
    return wrap(y1), wrap(y2)


@njit(cache=True)
def linear_step(x1, x2, a):
    return wrap(a[0, 0] * x1 + a[0, 1] * x2), wrap(a[1, 0] * x1 + a[1, 1] * x2)


@njit(cache=True)
def nonlinear_here(x1, x2, inverse, geo, frame, marks):
    """Chart index and sector coordinate when the step at x is nonlinear."""
    if geo[G_SLOW] == 0.0:
        return -1, 0.0, 0.0
    k, zu, zs = locate(x1, x2, frame, marks, geo[G_ZR])
    if k < 0:
        return -1, 0.0, 0.0
    lt = -geo[G_L] if inverse else geo[G_L]
    s1 = 0.5 * zu
    s2 = 0.5 * zs
    if touches_slow_region(s1, s2, lt, geo[G_U0]):
        return k, s1, s2
    return -1, 0.0, 0.0


@njit(cache=True)
def g_step(x1, x2, inverse, geo, mat, minv, frame, marks):
    """One step of g (or g^-1); returns (y1, y2, chart index or -1)."""
    k, s1, s2 = nonlinear_here(x1, x2, inverse, geo, frame, marks)
    if k < 0:
        if inverse:
            y1, y2 = linear_step(x1, x2, minv)
        else:
            y1, y2 = linear_step(x1, x2, mat)
        return y1, y2, -1
    lt = -geo[G_L] if inverse else geo[G_L]
    a, b, _ = flow_point(s1, s2, lt, geo[G_P], geo[G_U0], geo[G_U1], geo[G_KC], geo[G_QTOL])
    y1, y2 = chart_to_torus(k, 2.0 * a, 2.0 * b, frame, marks)
    return y1, y2, k


@njit(cache=True)
def dg_step(x1, x2, inverse, geo, frame, marks):
    """Eigenframe Jacobian of g (or g^-1) at x as (j11, j12, j21, j22)."""
    k, s1, s2 = nonlinear_here(x1, x2, inverse, geo, frame, marks)
    if k < 0:
        lam = geo[G_LAM]
        if inverse:
            return 1.0 / lam, 0.0, 0.0, lam
        return lam, 0.0, 0.0, 1.0 / lam
    lt = -geo[G_L] if inverse else geo[G_L]
    j11, j12, j21, j22, _, _ = flow_jacobian(s1, s2, lt, geo[G_P], geo[G_U0], geo[G_U1],
                                            geo[G_KC], geo[G_RTOL], geo[G_ATOL])
    return j11, j12, j21, j22


@njit(cache=True)
def slow_index(x1, x2, geo, frame, marks):
    """Chart index when x lies in the slow region |s| < rt0, else -1."""
    k, zu, zs = locate(x1, x2, frame, marks, geo[G_ZR])
    if k < 0:
        return -1
    if 0.25 * (zu * zu + zs * zs) < geo[G_U0]:
        return k
    return -1


@njit(cache=True)
def step_many(pts, inverse, geo, mat, minv, frame, marks):
    n = pts.shape[0]
    out = np.empty((n, 2))
    for i in range(n):
        y1, y2, _ = g_step(pts[i, 0], pts[i, 1], inverse, geo, mat, minv, frame, marks)
        out[i, 0] = y1
        out[i, 1] = y2
    return out


@njit(cache=True)
def jac_many(pts, inverse, geo, frame, marks):
    n = pts.shape[0]
    out = np.empty((n, 2, 2))
    for i in range(n):
        j11, j12, j21, j22 = dg_step(pts[i, 0], pts[i, 1], inverse, geo, frame, marks)
        out[i, 0, 0] = j11
        out[i, 0, 1] = j12
        out[i, 1, 0] = j21
        out[i, 1, 1] = j22
    return out


@njit(cache=True)
def orbit(x1, x2, n, inverse, geo, mat, minv, frame, marks):
    """Orbit table with columns x1, x2, chart index, s1, s2."""
    out = np.empty((n + 1, 5))
    for i in range(n + 1):
        k, zu, zs = locate(x1, x2, frame, marks, geo[G_ZR])
        out[i, 0] = x1
        out[i, 1] = x2
        out[i, 2] = k
        out[i, 3] = 0.5 * zu
        out[i, 4] = 0.5 * zs
        if i < n:
            x1, x2, _ = g_step(x1, x2, inverse, geo, mat, minv, frame, marks)
    return out


@njit(cache=True)
def push_unit(j11, j12, j21, j22, v1, v2):
    """Apply J to v; return normalized image and log of the stretch."""
    w1 = j11 * v1 + j12 * v2
    w2 = j21 * v1 + j22 * v2
    nrm = math.sqrt(w1 * w1 + w2 * w2)
    return w1 / nrm, w2 / nrm, math.log(nrm)


@njit(cache=True)
def unstable_dirs(pts, n_back, geo, mat, minv, frame, marks):
    """Cone-center vector pushed from g^-n(x) to x; returns dirs and residuals."""
    n = pts.shape[0]
    out = np.empty((n, 2))
    res = np.empty(n)
    back = np.empty((n_back + 1, 2))
    for i in range(n):
        x1 = pts[i, 0]
        x2 = pts[i, 1]
        back[0, 0] = x1
        back[0, 1] = x2
        for k in range(1, n_back + 1):
            x1, x2, _ = g_step(x1, x2, True, geo, mat, minv, frame, marks)
            back[k, 0] = x1
            back[k, 1] = x2
        # push from depth n_back and from depth n_back - 1
        va1, va2 = 1.0, 0.0
        vb1, vb2 = 1.0, 0.0
        for k in range(n_back, 0, -1):
            j11, j12, j21, j22 = dg_step(back[k, 0], back[k, 1], False, geo, frame, marks)
            va1, va2, _ = push_unit(j11, j12, j21, j22, va1, va2)
            if k < n_back:
                vb1, vb2, _ = push_unit(j11, j12, j21, j22, vb1, vb2)
        if n_back == 0:
            va1, va2 = 1.0, 0.0
        out[i, 0] = va1
        out[i, 1] = va2
        cr = abs(va1 * vb2 - va2 * vb1)
        res[i] = math.asin(min(1.0, cr))
    return out, res


@njit(cache=True)
def stable_dirs(pts, n_fwd, geo, mat, minv, frame, marks):
    """Stable direction at x from the forward orbit pulled back with dg^-1."""
    n = pts.shape[0]
    out = np.empty((n, 2))
    res = np.empty(n)
    fwd = np.empty((n_fwd + 1, 2))
    for i in range(n):
        x1 = pts[i, 0]
        x2 = pts[i, 1]
        fwd[0, 0] = x1
        fwd[0, 1] = x2
        for k in range(1, n_fwd + 1):
            x1, x2, _ = g_step(x1, x2, False, geo, mat, minv, frame, marks)
            fwd[k, 0] = x1
            fwd[k, 1] = x2
        va1, va2 = 0.0, 1.0
        vb1, vb2 = 0.0, 1.0
        for k in range(n_fwd, 0, -1):
            j11, j12, j21, j22 = dg_step(fwd[k, 0], fwd[k, 1], True, geo, frame, marks)
            va1, va2, _ = push_unit(j11, j12, j21, j22, va1, va2)
            if k < n_fwd:
                vb1, vb2, _ = push_unit(j11, j12, j21, j22, vb1, vb2)
        if n_fwd == 0:
            va1, va2 = 0.0, 1.0
        out[i, 0] = va1
        out[i, 1] = va2
        res[i] = math.asin(min(1.0, abs(va1 * vb2 - va2 * vb1)))
    return out, res


@njit(cache=True)
def log_stretch_many(pts, dirs, geo, frame, marks):
    """log |dg_x v| for unit vectors v at points x."""
    n = pts.shape[0]
    out = np.empty(n)
    for i in range(n):
        j11, j12, j21, j22 = dg_step(pts[i, 0], pts[i, 1], False, geo, frame, marks)
        _, _, lg = push_unit(j11, j12, j21, j22, dirs[i, 0], dirs[i, 1])
        out[i] = lg
    return out


@njit(cache=True)
def lyapunov_many(pts, n, geo, mat, minv, frame, marks):
    """(1/n) log growth of the cone-center vector along forward orbits."""
    m = pts.shape[0]
    out = np.empty(m)
    for i in range(m):
        x1 = pts[i, 0]
        x2 = pts[i, 1]
        v1, v2 = 1.0, 0.0
        acc = 0.0
        for _ in range(n):
            j11, j12, j21, j22 = dg_step(x1, x2, False, geo, frame, marks)
            v1, v2, lg = push_unit(j11, j12, j21, j22, v1, v2)
            acc += lg
            x1, x2, _ = g_step(x1, x2, False, geo, mat, minv, frame, marks)
        out[i] = acc / n
    return out
