"""Compiled kernels for the slowed hyperbolic flow.

Every kernel takes the profile as four scalars ``(p, u0, u1, kc)``:
``u0 = rt0**2`` and ``u1 = rt1**2`` bound the blend band and
``kc = (p/2)**((2p-4)/p)`` is the power-law prefactor.

Trajectories are handled in hyperbola coordinates.  Write

    s1 = sign1 * sqrt(A) * exp(theta),  s2 = sign2 * sqrt(B) * exp(-theta)

so that ``u = A exp(2 theta) + B exp(-2 theta)`` and the flow reads
``dtheta/dt = L * psi(u)``.  Off the axes ``A = B = |s1 s2|``; on the
``s1`` axis ``(A, B) = (1, 0)`` and on the ``s2`` axis ``(A, B) = (0, 1)``.
Time-t maps reduce to a scalar root find for the theta increment.
"""

import math

import numpy as np
from numba import njit
from scipy.integrate._ivp import dop853_coefficients as _dop

INF = 1.0e300
DEGENERATE_RADIUS = 1.0e-14

_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)
_RK_A = np.ascontiguousarray(_dop.A[:_dop.N_STAGES, :_dop.N_STAGES])
_RK_B = np.ascontiguousarray(_dop.B)
_RK_C = np.ascontiguousarray(_dop.C[:_dop.N_STAGES])
_RK_E3 = np.ascontiguousarray(_dop.E3)
_RK_E5 = np.ascontiguousarray(_dop.E5)
_RK_STAGES = _dop.N_STAGES


# ---------------------------------------------------------------- profile

@njit(cache=True)
def _step_weight(u, u0, u1):
    # C-infinity step from 0 (u <= u1) to 1 (u >= u0)
    if u <= u1:
        return 0.0
    if u >= u0:
        return 1.0
    x = (u - u1) / (u0 - u1)
    q = 1.0 / x - 1.0 / (1.0 - x)
    if q > 0.0:
        e = math.exp(-q)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(q))


@njit(cache=True)
def psi(u, p, u0, u1, kc):
    if u <= 0.0:
        return 0.0
    if u >= u0:
        return 1.0
    cf = kc * u ** ((p - 2.0) / p)
    if u <= u1:
        return cf
    w = _step_weight(u, u0, u1)
    return (1.0 - w) * cf + w


@njit(cache=True)
def psi_dot(u, p, u0, u1, kc):
    if u >= u0:
        return 0.0
    dcf = (p - 2.0) / p * kc * u ** (-2.0 / p)
    if u <= u1:
        return dcf
    cf = kc * u ** ((p - 2.0) / p)
    x = (u - u1) / (u0 - u1)
    w = _step_weight(u, u0, u1)
    dw = w * (1.0 - w) * (1.0 / (x * x) + 1.0 / ((1.0 - x) * (1.0 - x))) / (u0 - u1)
    return (1.0 - w) * dcf + dw * (1.0 - cf)


@njit(cache=True)
def psi_and_dot(u, p, u0, u1, kc):
    return psi(u, p, u0, u1, kc), psi_dot(u, p, u0, u1, kc)


# ------------------------------------------------------ hyperbola coords

@njit(cache=True)
def hyperbola(s1, s2):
    """Return (A, B, theta0) for the point (s1, s2)."""
    a1 = abs(s1)
    a2 = abs(s2)
    if a2 == 0.0:
        return 1.0, 0.0, math.log(a1)
    if a1 == 0.0:
        return 0.0, 1.0, -math.log(a2)
    c = a1 * a2
    return c, c, 0.5 * (math.log(a1) - math.log(a2))


@njit(cache=True)
def u_of_theta(th, A, B):
    v = 0.0
    if A > 0.0:
        v += A * math.exp(2.0 * th)
    if B > 0.0:
        v += B * math.exp(-2.0 * th)
    return v


@njit(cache=True)
def level_interval(A, B, level):
    """Theta interval on which u(theta) < level (may be empty: lo >= hi)."""
    if B == 0.0:
        return -INF, 0.5 * math.log(level)
    if A == 0.0:
        return -0.5 * math.log(level), INF
    c2 = 2.0 * A
    if level <= c2:
        return 0.0, 0.0
    h = 0.5 * math.acosh(level / c2)
    return -h, h


# ------------------------------------------------------------ quadrature

@njit(cache=True)
def _panel(a, b, A, B, p, u0, u1, kc):
    m = 0.5 * (a + b)
    r = 0.5 * (b - a)
    acc = 0.0
    for i in range(_GL_X.shape[0]):
        th = m + r * _GL_X[i]
        acc += _GL_W[i] / psi(u_of_theta(th, A, B), p, u0, u1, kc)
    return acc * r


@njit(cache=True)
def _adaptive(a, b, A, B, p, u0, u1, kc, rtol):
    stack_a = np.empty(200)
    stack_b = np.empty(200)
    stack_v = np.empty(200)
    top = 0
    stack_a[0] = a
    stack_b[0] = b
    stack_v[0] = _panel(a, b, A, B, p, u0, u1, kc)
    total = 0.0
    while top >= 0:
        pa = stack_a[top]
        pb = stack_b[top]
        whole = stack_v[top]
        top -= 1
        m = 0.5 * (pa + pb)
        left = _panel(pa, m, A, B, p, u0, u1, kc)
        right = _panel(m, pb, A, B, p, u0, u1, kc)
        fine = left + right
        if abs(fine - whole) <= rtol * abs(fine) or top >= 196 or (pb - pa) < 1e-13:
            total += fine
        else:
            top += 1
            stack_a[top] = pa
            stack_b[top] = m
            stack_v[top] = left
            top += 1
            stack_a[top] = m
            stack_b[top] = pb
            stack_v[top] = right
    return total


@njit(cache=True)
def time_integral(ta, tb, A, B, p, u0, u1, kc, rtol):
    """Integral of dtheta / psi(u(theta)) from ta to tb (signed)."""
    if ta == tb:
        return 0.0
    sign = 1.0
    lo = ta
    hi = tb
    if tb < ta:
        sign = -1.0
        lo = tb
        hi = ta
    brk = np.empty(7)
    nb = 0
    brk[nb] = lo
    nb += 1
    l0, h0 = level_interval(A, B, u0)
    l1, h1 = level_interval(A, B, u1)
    cands = (l0, h0, l1, h1, 0.0)
    for k in range(5):
        c = cands[k]
        if k == 4 and (A == 0.0 or B == 0.0):
            continue
        if lo < c < hi:
            brk[nb] = c
            nb += 1
    brk[nb] = hi
    nb += 1
    seg = np.sort(brk[:nb])
    total = 0.0
    for i in range(nb - 1):
        a = seg[i]
        b = seg[i + 1]
        if b <= a:
            continue
        um = u_of_theta(0.5 * (a + b), A, B)
        if um >= u0:
            total += b - a
        else:
            total += _adaptive(a, b, A, B, p, u0, u1, kc, rtol)
    return sign * total


# ---------------------------------------------------------- time-t map

@njit(cache=True)
def _delta_forward(A, B, th0, lt, p, u0, u1, kc, rtol):
    # theta increment for flow time lt/L >= 0
    if lt == 0.0:
        return 0.0
    lo_s, hi_s = level_interval(A, B, u0)
    if hi_s <= lo_s or th0 >= hi_s or th0 + lt <= lo_s:
        return lt
    d_lo = 0.0
    d_hi = lt
    d = 0.0
    acc = 0.0
    for _ in range(200):
        g = acc - lt
        w = psi(u_of_theta(th0 + d, A, B), p, u0, u1, kc)
        d_new = d - g * w
        if not (d_lo < d_new < d_hi):
            d_new = 0.5 * (d_lo + d_hi)
        acc += time_integral(th0 + d, th0 + d_new, A, B, p, u0, u1, kc, rtol)
        step = d_new - d
        d = d_new
        if acc - lt > 0.0:
            d_hi = d
        else:
            d_lo = d
        if abs(step) <= 2e-16 * (1.0 + abs(th0) + abs(d)) or d_hi - d_lo <= 4e-16 * (1.0 + abs(th0)):
            break
    return d


@njit(cache=True)
def flow_delta(s1, s2, lt, p, u0, u1, kc, rtol):
    """Theta increment D with flow_t(s) = (s1 e^D, s2 e^-D); lt = L*t."""
    if s1 * s1 + s2 * s2 < DEGENERATE_RADIUS * DEGENERATE_RADIUS:
        return 0.0
    if lt >= 0.0:
        A, B, th0 = hyperbola(s1, s2)
        return _delta_forward(A, B, th0, lt, p, u0, u1, kc, rtol)
    # backward time: swap coordinates and run forward
    A, B, th0 = hyperbola(s2, s1)
    return -_delta_forward(A, B, th0, -lt, p, u0, u1, kc, rtol)


@njit(cache=True)
def flow_point(s1, s2, lt, p, u0, u1, kc, rtol):
    d = flow_delta(s1, s2, lt, p, u0, u1, kc, rtol)
    return s1 * math.exp(d), s2 * math.exp(-d), d


@njit(cache=True)
def touches_slow_region(s1, s2, lt, u0):
    """True when the unit orbit segment meets u < u0 (so the map is nonlinear)."""
    if s1 * s1 + s2 * s2 < DEGENERATE_RADIUS * DEGENERATE_RADIUS:
        return True
    if lt >= 0.0:
        A, B, th0 = hyperbola(s1, s2)
        lo_s, hi_s = level_interval(A, B, u0)
        return not (hi_s <= lo_s or th0 >= hi_s or th0 + lt <= lo_s)
    A, B, th0 = hyperbola(s2, s1)
    lo_s, hi_s = level_interval(A, B, u0)
    return not (hi_s <= lo_s or th0 >= hi_s or th0 - lt <= lo_s)


# ------------------------------------------------- variational equation

@njit(cache=True)
def _jac_rhs(th, y, A, B, sgn, p, u0, u1, kc, out):
    s1sq = A * math.exp(2.0 * th) if A > 0.0 else 0.0
    s2sq = B * math.exp(-2.0 * th) if B > 0.0 else 0.0
    u = s1sq + s2sq
    ps, pd = psi_and_dot(u, p, u0, u1, kc)
    r = pd / ps
    m11 = 1.0 + 2.0 * s1sq * r
    m12 = 2.0 * sgn * math.sqrt(A * B) * r
    m22 = -1.0 - 2.0 * s2sq * r
    # y = (j11, j12, j21, j22); dJ/dtheta = Mtheta @ J
    out[0] = m11 * y[0] + m12 * y[2]
    out[1] = m11 * y[1] + m12 * y[3]
    out[2] = -m12 * y[0] + m22 * y[2]
    out[3] = -m12 * y[1] + m22 * y[3]


@njit(cache=True)
def _dop853_jac(ta, tb, A, B, sgn, p, u0, u1, kc, rtol, atol):
    y = np.array([1.0, 0.0, 0.0, 1.0])
    n = 4
    kst = np.zeros((_RK_STAGES + 1, n))
    tmp = np.empty(n)
    f = np.empty(n)
    ynew = np.empty(n)
    direction = 1.0 if tb >= ta else -1.0
    span = abs(tb - ta)
    if span == 0.0:
        return y, 0
    h = min(0.05, span) * direction
    t = ta
    _jac_rhs(t, y, A, B, sgn, p, u0, u1, kc, f)
    steps = 0
    while (tb - t) * direction > 0.0:
        if (t + h - tb) * direction > 0.0:
            h = tb - t
        kst[0, :] = f
        for s in range(1, _RK_STAGES):
            for i in range(n):
                acc = 0.0
                for j in range(s):
                    acc += _RK_A[s, j] * kst[j, i]
                tmp[i] = y[i] + h * acc
            _jac_rhs(t + _RK_C[s] * h, tmp, A, B, sgn, p, u0, u1, kc, kst[s])
        for i in range(n):
            acc = 0.0
            for j in range(_RK_STAGES):
                acc += _RK_B[j] * kst[j, i]
            ynew[i] = y[i] + h * acc
        _jac_rhs(t + h, ynew, A, B, sgn, p, u0, u1, kc, kst[_RK_STAGES])
        e5 = 0.0
        e3 = 0.0
        for i in range(n):
            sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
            a5 = 0.0
            a3 = 0.0
            for j in range(_RK_STAGES + 1):
                a5 += _RK_E5[j] * kst[j, i]
                a3 += _RK_E3[j] * kst[j, i]
            e5 += (a5 / sc) ** 2
            e3 += (a3 / sc) ** 2
        if e5 == 0.0 and e3 == 0.0:
            err = 0.0
        else:
            den = e5 + 0.01 * e3
            err = abs(h) * e5 / math.sqrt(den * n)
        if err <= 1.0:
            t = t + h
            for i in range(n):
                y[i] = ynew[i]
                f[i] = kst[_RK_STAGES, i]
            steps += 1
            fac = 10.0 if err == 0.0 else min(10.0, 0.9 * err ** (-1.0 / 8.0))
            h = h * fac
        else:
            h = h * max(0.2, 0.9 * err ** (-1.0 / 8.0))
            # only a rejected step can underflow; short final steps are fine
            if abs(h) < 1e-14 * (1.0 + abs(t)):
                return y, -1
    return y, steps


@njit(cache=True)
def flow_jacobian(s1, s2, lt, p, u0, u1, kc, rtol, atol):
    """Return (j11, j12, j21, j22, D, status) for the time lt/L flow at s."""
    if s1 * s1 + s2 * s2 < DEGENERATE_RADIUS * DEGENERATE_RADIUS:
        return 1.0, 0.0, 0.0, 1.0, 0.0, 0
    d = flow_delta(s1, s2, lt, p, u0, u1, kc, 1e-13)
    A, B, th0 = hyperbola(s1, s2)
    th1 = th0 + d
    lo_s, hi_s = level_interval(A, B, u0)
    a = max(min(th0, th1), lo_s)
    b = min(max(th0, th1), hi_s)
    if b <= a:
        return math.exp(d), 0.0, 0.0, math.exp(-d), d, 0
    sgn = 1.0
    if s1 * s2 < 0.0:
        sgn = -1.0
    if d >= 0.0:
        pre = a - th0
        post = th1 - b
        y, st = _dop853_jac(a, b, A, B, sgn, p, u0, u1, kc, rtol, atol)
    else:
        pre = b - th0
        post = th1 - a
        y, st = _dop853_jac(b, a, A, B, sgn, p, u0, u1, kc, rtol, atol)
    e1 = math.exp(post)
    e0 = math.exp(pre)
    # J = diag(e^post, e^-post) @ Y @ diag(e^pre, e^-pre)
    j11 = e1 * y[0] * e0
    j12 = e1 * y[1] / e0
    j21 = y[2] * e0 / e1
    j22 = y[3] / (e0 * e1)
    return j11, j12, j21, j22, d, st


# ------------------------------------------------------------ trajectory

@njit(cache=True)
def trajectory_times(A, B, thetas, p, u0, u1, kc, lg, rtol):
    """Flow times at which the hyperbola passes the increasing thetas."""
    n = thetas.shape[0]
    out = np.empty(n)
    out[0] = 0.0
    for i in range(1, n):
        out[i] = out[i - 1] + time_integral(thetas[i - 1], thetas[i], A, B, p, u0, u1, kc, rtol) / lg
    return out


@njit(cache=True)
def band_residence(A, B, p, u0, u1, kc, lg, rtol):
    """Total time the full hyperbola spends in rt1 <= |s| < rt0."""
    l0, h0 = level_interval(A, B, u0)
    if h0 <= l0:
        return 0.0
    l1, h1 = level_interval(A, B, u1)
    if h1 <= l1:
        return time_integral(l0, h0, A, B, p, u0, u1, kc, rtol) / lg
    if B == 0.0 or A == 0.0:
        # axis: only one side of the core lies on the hyperbola
        if B == 0.0:
            return time_integral(h1, h0, A, B, p, u0, u1, kc, rtol) / lg
        return time_integral(l0, l1, A, B, p, u0, u1, kc, rtol) / lg
    left = time_integral(l0, l1, A, B, p, u0, u1, kc, rtol)
    right = time_integral(h1, h0, A, B, p, u0, u1, kc, rtol)
    return (left + right) / lg


# ----------------------------------------------------------- batch loops

@njit(cache=True)
def flow_many(pts, lt, p, u0, u1, kc, rtol):
    n = pts.shape[0]
    out = np.empty((n, 2))
    for i in range(n):
        a, b, _ = flow_point(pts[i, 0], pts[i, 1], lt, p, u0, u1, kc, rtol)
        out[i, 0] = a
        out[i, 1] = b
    return out


@njit(cache=True)
def jacobian_many(pts, lt, p, u0, u1, kc, rtol, atol):
    n = pts.shape[0]
    out = np.empty((n, 2, 2))
    status = np.empty(n, dtype=np.int64)
    for i in range(n):
        j11, j12, j21, j22, _, st = flow_jacobian(pts[i, 0], pts[i, 1], lt, p, u0, u1, kc, rtol, atol)
        out[i, 0, 0] = j11
        out[i, 0, 1] = j12
        out[i, 1, 0] = j21
        out[i, 1, 1] = j22
        status[i] = st
    return out, status


@njit(cache=True)
def psi_many(u, p, u0, u1, kc):
    out = np.empty(u.shape[0])
    for i in range(u.shape[0]):
        out[i] = psi(u[i], p, u0, u1, kc)
    return out


@njit(cache=True)
def psi_dot_many(u, p, u0, u1, kc):
    out = np.empty(u.shape[0])
    for i in range(u.shape[0]):
        out[i] = psi_dot(u[i], p, u0, u1, kc)
    return out
