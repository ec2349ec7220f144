"""Sampled verification of the inequalities governing orbits near a singularity.

Local checks work in the plane model for arbitrary p and lambda; the
discrete checks run on the torus model.  Trajectories are represented on a
theta grid of their hyperbola (s1 = sqrt(c) e^theta, s2 = sqrt(c) e^-theta)
with flow times from quadrature, so s1 * s2 is conserved to rounding.

Envelope inequalities of the form y(t) <= y(a) (1 + C y(a)**q (t - a))**(-1/q)
are equivalent to monotonicity of y**(-q) -/+ C t, which is what the
kernels test; margins are relative slacks in those variables.
"""

import math

import numpy as np
from numba import njit

from . import _kernels as _k
from . import _surface as _s
from .reports import LemmaReport
from .slowdown import SlowdownProfile
from .surface import MARKED_POINTS

REL_TOL = 1e-9
DEFAULT_LOCAL = (0.2, 0.1)
GRID_POINTS = 1001


def c0_constant(p, lam):
    return (2.0 * p - 4.0) / p * (p / 2.0) ** ((2.0 * p - 4.0) / p) * math.log(lam)


def beta_constant(p, alpha):
    return 2.0 ** (-(3.0 * p - 2.0) / p) * (1.0 - alpha)


def residence_bounds(profile, lam):
    """The two case formulas for the annulus residence time and their max."""
    p, r0, r1 = profile.p, profile.r0, profile.r1
    lg = math.log(lam)
    f1 = (4 * r0 ** (2 * p) - r1 ** (2 * p)) / (2 * r1 ** (3 * p - 2) * lg)
    f2 = 2 ** ((p - 2) / 2) * (2 * r0 ** p - r1 ** p) / (2 * r1 ** (2 * p - 2) * lg)
    return f1, f2, max(f1, f2)


def dij_bound_constant(p):
    return (6.0 * p - 12.0) / p * (p / 2.0) ** ((2.0 * p - 4.0) / p)


def dij_closed_form(p, s1, s2):
    """Second partials (d11, d12, d22) of s2 * psi(s1^2 + s2^2) where psi is the pure power."""
    kc = (p / 2.0) ** ((2.0 * p - 4.0) / p)
    e = (p - 2.0) / p
    u = s1 * s1 + s2 * s2
    base = 2.0 * e * kc * u ** (e - 1.0)
    d11 = base * s2 * (1.0 + 2.0 * (e - 1.0) * s1 * s1 / u)
    d12 = base * s1 * (1.0 + 2.0 * (e - 1.0) * s2 * s2 / u)
    d22 = base * s2 * (3.0 + 2.0 * (e - 1.0) * s2 * s2 / u)
    return d11, d12, d22


def _local_profile(profile):
    return profile if isinstance(profile, SlowdownProfile) else SlowdownProfile(*profile)


# ------------------------------------------------------------------ kernels

@njit(cache=True)
def _residence_sides(s1, s2, p, u0, u1, kc, lg, rtol):
    """(total, inbound, outbound) annulus residence of the hyperbola through s."""
    A, B, _ = _k.hyperbola(s1, s2)
    l0, h0 = _k.level_interval(A, B, u0)
    if h0 <= l0:
        return 0.0, 0.0, 0.0
    l1, h1 = _k.level_interval(A, B, u1)
    if h1 <= l1:
        t = _k.time_integral(l0, h0, A, B, p, u0, u1, kc, rtol) / lg
        return t, t, 0.0
    left = 0.0
    right = 0.0
    if A > 0.0 and B > 0.0:
        left = _k.time_integral(l0, l1, A, B, p, u0, u1, kc, rtol) / lg
        right = _k.time_integral(h1, h0, A, B, p, u0, u1, kc, rtol) / lg
    elif B == 0.0:
        right = _k.time_integral(h1, h0, A, B, p, u0, u1, kc, rtol) / lg
    else:
        left = _k.time_integral(l0, l1, A, B, p, u0, u1, kc, rtol) / lg
    return left + right, left, right


@njit(cache=True)
def _residence_many(pts, p, u0, u1, kc, lg, rtol):
    n = pts.shape[0]
    out = np.empty((n, 3))
    for i in range(n):
        a, b, c = _residence_sides(pts[i, 0], pts[i, 1], p, u0, u1, kc, lg, rtol)
        out[i, 0] = a
        out[i, 1] = b
        out[i, 2] = c
    return out


@njit(cache=True)
def _crossing_trajectory(c, n, p, u0, u1, kc, lg, rtol):
    """Grid trajectory through D_rt1 on the hyperbola s1 s2 = c (first quadrant)."""
    h = 0.5 * math.acosh(u1 / (2.0 * c))
    th = np.linspace(-h, h, n)
    sq = math.sqrt(c)
    s1 = sq * np.exp(th)
    s2 = sq * np.exp(-th)
    t = _k.trajectory_times(c, c, th, p, u0, u1, kc, lg, rtol)
    return s1, s2, t


@njit(cache=True)
def _envelope_margins(s1, s2, t, mid, C0, q, c2):
    """Worst relative slack of envelopes (a)-(d) on one trajectory."""
    n = t.shape[0]
    out = np.full(4, np.inf)
    # (a) s1^-q + C0 t nonincreasing on [0, T]
    best = -np.inf
    for i in range(n - 1, -1, -1):
        g = s1[i] ** (-q) + C0 * t[i]
        if g > best:
            best = g
        m = (g - best) / g
        if m < out[0]:
            out[0] = m
    # (b) s2^-q - C0 t nondecreasing on [0, T]
    best = -np.inf
    for i in range(n):
        g = s2[i] ** (-q) - C0 * t[i]
        if g > best:
            best = g
        m = (g - best) / abs(s2[i] ** (-q))
        if m < out[1]:
            out[1] = m
    # (c) s2^-q - c2 C0 t nonincreasing on [0, T1]
    best = np.inf
    for i in range(mid + 1):
        g = s2[i] ** (-q) - c2 * C0 * t[i]
        if g < best:
            best = g
        m = (best - g) / abs(s2[i] ** (-q))
        if m < out[2]:
            out[2] = m
    # (d) s1^-q + c2 C0 t nondecreasing on [T1, T]
    best = np.inf
    for i in range(n - 1, mid - 1, -1):
        g = s1[i] ** (-q) + c2 * C0 * t[i]
        if g < best:
            best = g
        m = (best - g) / g
        if m < out[3]:
            out[3] = m
    return out


@njit(cache=True)
def _envelope_batch(cs, n, p, u0, u1, kc, lg, rtol, C0, q, c2):
    m = cs.shape[0]
    out = np.empty((m, 4))
    for k in range(m):
        s1, s2, t = _crossing_trajectory(cs[k], n, p, u0, u1, kc, lg, rtol)
        out[k] = _envelope_margins(s1, s2, t, n // 2, C0, q, c2)
    return out


@njit(cache=True)
def _partner_forward(s1, s2, t, rel, p, u0, u1, kc, lg, rtol, d1, d2):
    """Partner with s2(0) scaled by 1 + rel, integrated forward.

    Returns the relative drift of s1 s2, or -1 if the partner leaves D_rt0.
    """
    n = t.shape[0]
    a1 = s1[0]
    a2 = s2[0] * (1.0 + rel)
    c_tilde = a1 * a2
    drift = 0.0
    for i in range(n):
        if i > 0:
            a1, a2, _ = _k.flow_point(a1, a2, lg * (t[i] - t[i - 1]), p, u0, u1, kc, rtol)
        d1[i] = a1 - s1[i]
        d2[i] = a2 - s2[i]
        if a1 * a1 + a2 * a2 >= u0:
            return -1.0
        drift = max(drift, abs(a1 * a2 - c_tilde) / c_tilde)
    return drift


@njit(cache=True)
def _partner_backward(s1, s2, t, delta, p, u0, u1, kc, lg, rtol, d1, d2):
    """Partner with s(T) + (0, delta), integrated backward (drift or -1 as above)."""
    n = t.shape[0]
    a1 = s1[n - 1]
    a2 = s2[n - 1] + delta
    c_tilde = a1 * a2
    drift = 0.0
    for i in range(n - 1, -1, -1):
        if i < n - 1:
            a1, a2, _ = _k.flow_point(a1, a2, -lg * (t[i + 1] - t[i]), p, u0, u1, kc, rtol)
        d1[i] = a1 - s1[i]
        d2[i] = a2 - s2[i]
        if a1 * a1 + a2 * a2 >= u0:
            return -1.0
        drift = max(drift, abs(a1 * a2 - c_tilde) / c_tilde)
    return drift


@njit(cache=True)
def _spread_pair(c, rel, alpha, n, p, u0, u1, kc, lg, rtol, C0, q, c2, beta, bstride, stable):
    """Margins of the spread displays for one pair; status 0 ok, 1 inadmissible.

    ``stable`` anchors the partner on the stable side of the exit point and
    integrates backward, scaled so that ds2(0)/s2(0) is close to ``rel``;
    otherwise the partner is s(0) with s2 scaled by 1 + rel.
    Returns (status, m1, m2, m3, drift) where drift is the largest relative
    change of s1 * s2 along the partner trajectory.
    """
    s1, s2, t = _crossing_trajectory(c, n, p, u0, u1, kc, lg, rtol)
    mid = n // 2
    d1 = np.empty(n)
    d2 = np.empty(n)
    if stable:
        # tune delta on the endpoint map alone, then integrate the full partner
        delta = rel * s2[n - 1]
        span = -lg * (t[n - 1] - t[0])
        for _ in range(80):
            a1, a2, _ = _k.flow_point(s1[n - 1], s2[n - 1] + delta, span, p, u0, u1, kc, rtol)
            k0 = (a2 - s2[0]) / s2[0]
            if a1 * a1 + a2 * a2 < u0 and abs(k0 / rel - 1.0) < 0.05:
                break
            if a1 * a1 + a2 * a2 >= u0 or k0 > 10.0 * rel:
                delta *= 0.1
            elif k0 > 0.0:
                delta *= max(0.1, rel / k0)
            else:
                break
        drift = _partner_backward(s1, s2, t, delta, p, u0, u1, kc, lg, rtol, d1, d2)
    else:
        drift = _partner_forward(s1, s2, t, rel, p, u0, u1, kc, lg, rtol, d1, d2)
    if drift < 0.0:
        return 1, 0.0, 0.0, 0.0, 0.0
    kap0 = d2[0] / s2[0]
    for i in range(n):
        if d2[i] <= 0.0 or abs(d1[i]) > alpha * d2[i]:
            return 1, 0.0, 0.0, 0.0, drift
    if kap0 > (1.0 - alpha) / 72.0:
        return 1, 0.0, 0.0, 0.0, drift
    m1 = np.inf
    for i in range(mid + 1):
        bound = kap0 * s2[i] * (1.0 + c2 * C0 * s2[0] ** q * t[i]) ** (-beta)
        m1 = min(m1, (bound - d2[i]) / bound)
    chi = d2[mid] / s1[mid]
    m2 = np.inf
    for j in range(mid, n):
        if (j - mid) % bstride != 0 and j != n - 1:
            continue
        cb = c2 * C0 * s1[j] ** q
        den = 1.0 + cb * (t[j] - t[mid])
        for i in range(mid, j + 1):
            bound = chi * s1[i] * ((1.0 + cb * (t[j] - t[i])) / den) ** beta
            m2 = min(m2, (bound - d2[i]) / bound)
    ra = 0.0
    for i in range(mid + 1):
        ra = max(ra, s2[i] / math.sqrt(d1[i] ** 2 + d2[i] ** 2))
    rb = 0.0
    for j in range(mid, n):
        rb = max(rb, math.sqrt(d1[j] ** 2 + d2[j] ** 2) / s1[j])
    lim = math.sqrt(1.0 + alpha * alpha)
    m3 = (lim - ra * rb) / lim
    return 0, m1, m2, m3, drift


@njit(cache=True)
def _spread_batch(cs, rel, alpha, n, p, u0, u1, kc, lg, rtol, C0, q, c2, beta, bstride, stable):
    m = cs.shape[0]
    out = np.empty((m, 5))
    for k in range(m):
        st, a, b, c, d = _spread_pair(cs[k], rel, alpha, n, p, u0, u1, kc, lg, rtol,
                                      C0, q, c2, beta, bstride, stable)
        out[k, 0] = st
        out[k, 1] = a
        out[k, 2] = b
        out[k, 3] = c
        out[k, 4] = d
    return out


@njit(cache=True)
def gamma_kernel(j11, j12, j21, j22, alpha):
    """Exact angle-contraction supremum of J over the closed cone |xi_s| <= alpha |xi_u|."""
    det = abs(j11 * j22 - j12 * j21)
    a = j11 * j11 + j21 * j21
    b = j11 * j12 + j21 * j22
    c = j12 * j12 + j22 * j22
    m = 0.5 * (a + c)
    hd = 0.5 * (a - c)
    r = math.sqrt(hd * hd + b * b)
    half = math.atan(alpha)
    vals = m + hd * math.cos(2.0 * half) + b * math.sin(2.0 * half)
    vals2 = m + hd * math.cos(-2.0 * half) + b * math.sin(-2.0 * half)
    best = min(vals, vals2)
    # minimizer of m + r cos(2 phi - psi): phi = (psi + pi) / 2 modulo pi
    psi_ = math.atan2(b, hd)
    phi = 0.5 * (psi_ + math.pi)
    while phi > 0.5 * math.pi:
        phi -= math.pi
    while phi < -0.5 * math.pi:
        phi += math.pi
    if abs(phi) <= half:
        best = min(best, m - r)
    return det / best


@njit(cache=True)
def slope_gamma_kernel(j11, j12, j21, j22, alpha):
    """Sup over |eta| <= alpha of |d eta'/d eta| for the slope map of J."""
    det = abs(j11 * j22 - j12 * j21)
    lo = min(abs(j11 - alpha * j12), abs(j11 + alpha * j12))
    if (j11 - alpha * j12) * (j11 + alpha * j12) <= 0.0:
        lo = 0.0
    return det / (lo * lo)


@njit(cache=True)
def _angle_product_orbit(s1, s2, lg, alpha, kmax, p, u0, u1, kc, qtol, rtol, atol, C0, q):
    """Worst relative slack of prod gamma_j against the bound along one orbit in D_rt1.

    Returns (angle margin, slope-ratio margin, steps).
    """
    e = p / (p - 2.0)
    s20 = abs(s2)
    prod = 1.0
    prod_slope = 1.0
    worst = np.inf
    worst_slope = np.inf
    k = 0
    while k < kmax:
        if s1 * s1 + s2 * s2 >= u1:
            break
        j11, j12, j21, j22, _, st = _k.flow_jacobian(s1, s2, lg, p, u0, u1, kc, rtol, atol)
        if st < 0:
            return -np.inf, -np.inf, k
        n1, n2, _ = _k.flow_point(s1, s2, lg, p, u0, u1, kc, qtol)
        if n1 * n1 + n2 * n2 >= u1:
            break
        prod *= gamma_kernel(j11, j12, j21, j22, alpha)
        prod_slope *= slope_gamma_kernel(j11, j12, j21, j22, alpha)
        k += 1
        bound = (1.0 + C0 * s20 ** q * k) ** (-e)
        worst = min(worst, (bound - prod) / bound)
        worst_slope = min(worst_slope, (bound - prod_slope) / bound)
        s1 = n1
        s2 = n2
    return worst, worst_slope, k


@njit(cache=True)
def _angle_product_batch(pts, lg, alpha, kmax, p, u0, u1, kc, qtol, rtol, atol, C0, q):
    n = pts.shape[0]
    out = np.empty((n, 3))
    for i in range(n):
        w, ws, k = _angle_product_orbit(pts[i, 0], pts[i, 1], lg, alpha, kmax, p, u0, u1, kc,
                                        qtol, rtol, atol, C0, q)
        out[i, 0] = w
        out[i, 1] = ws
        out[i, 2] = k
    return out


@njit(cache=True)
def _annulus_run(x1, x2, geo, mat, minv, frame, marks, cap):
    """Consecutive iterates from x that stay in the annulus rt1 <= |s| < rt0."""
    n = 0
    while n < cap:
        k, zu, zs = _s.locate(x1, x2, frame, marks, geo[_s.G_ZR])
        if k < 0:
            break
        u = 0.25 * (zu * zu + zs * zs)
        if u >= geo[_s.G_U0] or u < geo[_s.G_U1]:
            break
        n += 1
        x1, x2, _ = _s.g_step(x1, x2, False, geo, mat, minv, frame, marks)
    return n


@njit(cache=True)
def _annulus_runs(pts, geo, mat, minv, frame, marks, cap):
    out = np.empty(pts.shape[0], dtype=np.int64)
    for i in range(pts.shape[0]):
        out[i] = _annulus_run(pts[i, 0], pts[i, 1], geo, mat, minv, frame, marks, cap)
    return out


# --------------------------------------------------------------- sampling

def _disk_points(rng, n, radius, floor=1e-12):
    """Half area-uniform, half log-radial points in the disk (all quadrants)."""
    na = n // 2
    r = np.concatenate([radius * np.sqrt(rng.random(na)),
                        radius * np.exp(rng.uniform(math.log(floor), 0.0, n - na))])
    ang = rng.random(n) * 2.0 * math.pi
    return np.column_stack([r * np.cos(ang), r * np.sin(ang)])


def _crossing_constants(rng, n, u1, floor=1e-8):
    """Hyperbola constants c = s1 s2 for trajectories crossing D_rt1."""
    return 0.5 * u1 * np.exp(rng.uniform(math.log(floor), math.log(0.999), n))


def _params_dict(profile, lam):
    return {"p": profile.p, "lambda": lam, "r0": profile.r0, "r1": profile.r1}


# ------------------------------------------------------------------- checks

def check_residence_time(profile, lam, n_samples, seed, tol=None):
    """Total time a trajectory spends in rt1 <= |s| < rt0 stays below T_p."""
    profile = _local_profile(profile)
    f1, f2, tp = residence_bounds(profile, lam)
    det = {"params": _params_dict(profile, lam), "T_case1": f1, "T_case2": f2, "T_p": tp}
    if n_samples == 0:
        return LemmaReport("residence_time", 0, 0, float("inf"), details=det)
    rng = np.random.default_rng(seed)
    pts = _disk_points(rng, int(n_samples), profile.rt0)
    rtol = 1e-12 if tol is None else tol.quad_rtol
    res = _residence_many(pts, *profile.args, math.log(lam), rtol)
    margin = (tp - res[:, 0]) / tp
    viol = int(np.sum(res[:, 0] >= tp))
    c = np.abs(pts[:, 0] * pts[:, 1])
    case1 = c >= 0.5 * profile.u1
    det.update({
        "max_total": float(res[:, 0].max()),
        "max_case1_total": float(res[case1, 0].max()) if case1.any() else 0.0,
        "max_case2_segment": float(res[~case1, 1:].max()) if (~case1).any() else 0.0,
        "case1_never_enters_inner_disk": bool(np.all(c[case1] * 2 >= profile.u1)),
    })
    return LemmaReport("residence_time", len(pts), viol, float(margin.min()), details=det)


def check_discrete_residence(params, n_samples, seed, cap=100000):
    """Runs of consecutive iterates of g inside the annulus are at most ceil(T_4)."""
    prof = params.profile
    _, _, tp = residence_bounds(prof, params.lam)
    bound = math.ceil(tp)
    det = {"params": params.describe(), "bound": bound}
    if n_samples == 0:
        return LemmaReport("discrete_residence", 0, 0, float("inf"), details=det)
    rng = np.random.default_rng(seed)
    s = _disk_points(rng, int(n_samples), prof.rt0)
    which = rng.integers(0, 4, len(s))
    x = np.mod(MARKED_POINTS[which] + (2.0 * s) @ params.frame, 1.0)
    runs = _annulus_runs(x, *params.kernel_args, cap)
    det["max_run"] = int(runs.max())
    viol = int(np.sum(runs > bound))
    return LemmaReport("discrete_residence", len(x), viol, float(bound - runs.max()), details=det)


def check_dij_bound(profile, grid_spec=(200, 64), fd_rel=1e-3):
    """Second partials of s2 psi(|s|^2) inside D_rt1 against the closed-form bound.

    ``grid_spec`` is (radial nodes, angular nodes); radii are log-spaced from
    1e-6 rt1 to 0.99 rt1.  Finite differences of the profile kernel give an
    independent check of the closed forms.
    """
    profile = _local_profile(profile)
    nr, na = grid_spec
    r = profile.rt1 * np.geomspace(1e-6, 0.99, nr)
    ang = np.linspace(0.0, 2.0 * math.pi, na, endpoint=False)
    rr, aa = np.meshgrid(r, ang, indexing="ij")
    s1 = (rr * np.cos(aa)).ravel()
    s2 = (rr * np.sin(aa)).ravel()
    p = profile.p
    d11, d12, d22 = dij_closed_form(p, s1, s2)
    u = s1 ** 2 + s2 ** 2
    bound = dij_bound_constant(p) * u ** ((p - 4.0) / (2.0 * p))
    worst = np.maximum(np.abs(d11), np.maximum(np.abs(d12), np.abs(d22)))
    margin = (bound - worst) / bound
    # finite-difference cross-check
    h = fd_rel * np.sqrt(u)
    args = profile.args

    def f(a, b):
        return b * _k.psi_many(a * a + b * b, *args)

    fd11 = (f(s1 + h, s2) - 2 * f(s1, s2) + f(s1 - h, s2)) / h ** 2
    fd22 = (f(s1, s2 + h) - 2 * f(s1, s2) + f(s1, s2 - h)) / h ** 2
    fd12 = (f(s1 + h, s2 + h) - f(s1 + h, s2 - h) - f(s1 - h, s2 + h) + f(s1 - h, s2 - h)) / (4 * h ** 2)
    scale = np.maximum(worst, 1e-300)
    fd_err = np.max(np.abs(np.column_stack([fd11 - d11, fd12 - d12, fd22 - d22])) / scale[:, None])
    det = {"params": {"p": p, "r0": profile.r0, "r1": profile.r1}, "fd_max_rel_error": float(fd_err)}
    return LemmaReport("dij_bound", len(s1), int(np.sum(margin < -REL_TOL)), float(margin.min()),
                       details=det)


def check_envelopes(profile, lam, n_samples, seed, grid_points=GRID_POINTS, tol=None):
    """Upper and lower power-law envelopes of s1, s2 on trajectories crossing D_rt1."""
    profile = _local_profile(profile)
    p = profile.p
    C0 = c0_constant(p, lam)
    q = (2.0 * p - 4.0) / p
    c2 = 2.0 ** ((p - 2.0) / p)
    det = {"params": _params_dict(profile, lam), "C0": C0}
    if n_samples == 0:
        return LemmaReport("envelopes", 0, 0, float("inf"), details=det)
    rng = np.random.default_rng(seed)
    cs = _crossing_constants(rng, int(n_samples), profile.u1)
    rtol = 1e-12 if tol is None else tol.quad_rtol
    m = _envelope_batch(cs, grid_points, *profile.args, math.log(lam), rtol, C0, q, c2)
    worst = m.min(axis=0)
    det["worst_by_part"] = {"a": worst[0], "b": worst[1], "c": worst[2], "d": worst[3]}
    viol = int(np.sum(np.any(m < -REL_TOL, axis=1)))
    return LemmaReport("envelopes", len(cs), viol, float(worst.min()), details=det)


def check_spread(profile, lam, alpha, n_pairs, seed, rel=None, grid_points=GRID_POINTS,
                 b_stride=16, tol=None, pairing="forward"):
    """Decay of kappa = ds2/s2 and chi = ds2/s1 and the deviation bound for nearby pairs.

    The base trajectory runs from entry to exit of D_rt1.  With
    ``pairing="forward"`` the partner starts at s(0) with s2 scaled by
    1 + rel (default rel = (1 - alpha)/100); most such pairs drift out of the
    stable cone and are counted inadmissible.  ``pairing="stable"`` starts the
    partner at s(T) + (0, delta) and integrates backward, which keeps the
    difference in the stable cone; delta is tuned so ds2(0)/s2(0) = rel.
    """
    if pairing not in ("forward", "stable"):
        raise ValueError("pairing must be 'forward' or 'stable'")
    profile = _local_profile(profile)
    p = profile.p
    C0 = c0_constant(p, lam)
    q = (2.0 * p - 4.0) / p
    c2 = 2.0 ** ((p - 2.0) / p)
    beta = beta_constant(p, alpha)
    rel = (1.0 - alpha) / 100.0 if rel is None else rel
    det = {"params": _params_dict(profile, lam), "alpha": alpha, "beta": beta,
           "relative_offset": rel, "pairing": pairing}
    if n_pairs == 0:
        return LemmaReport("spread", 0, 0, float("inf"), details=det)
    rng = np.random.default_rng(seed)
    cs = _crossing_constants(rng, int(n_pairs), profile.u1)
    rtol = 1e-12 if tol is None else tol.quad_rtol
    out = _spread_batch(cs, rel, alpha, grid_points, *profile.args, math.log(lam), rtol,
                        C0, q, c2, beta, b_stride, pairing == "stable")
    ok = out[:, 0] == 0
    inadm = int(np.sum(~ok))
    det["max_product_drift"] = float(out[ok, 4].max()) if ok.any() else 0.0
    if not ok.any():
        return LemmaReport("spread", 0, 0, float("inf"), inadmissible=inadm, details=det)
    m = out[ok, 1:4]
    worst = m.min(axis=0)
    det["worst_by_part"] = {"kappa": worst[0], "chi": worst[1], "deviation": worst[2]}
    viol = int(np.sum(np.any(m < -REL_TOL, axis=1)))
    return LemmaReport("spread", int(ok.sum()), viol, float(worst.min()), inadmissible=inadm,
                       details=det)


def angle_product_bound(p, lam, s2_0, k):
    return (1.0 + c0_constant(p, lam) * abs(s2_0) ** ((2.0 * p - 4.0) / p) * k) ** (-p / (p - 2.0))


def check_angle_product_local(profile, lam, alpha, n_samples, seed, kmax=2000, tol=None):
    """Products of per-step angle contraction along time-one orbits inside D_rt1."""
    from .slowdown import DEFAULT_TOL
    profile = _local_profile(profile)
    tol = DEFAULT_TOL if tol is None else tol
    p = profile.p
    C0 = c0_constant(p, lam)
    q = (2.0 * p - 4.0) / p
    det = {"params": _params_dict(profile, lam), "alpha": alpha, "kmax": kmax}
    if n_samples == 0:
        return LemmaReport("angle_product", 0, 0, float("inf"), details=det)
    rng = np.random.default_rng(seed)
    pts = _disk_points(rng, int(n_samples), profile.rt1 * 0.999999)
    out = _angle_product_batch(pts, math.log(lam), alpha, kmax, *profile.args, tol.quad_rtol,
                               tol.ode_rtol, tol.ode_atol, C0, q)
    steps = out[:, 2]
    valid = steps >= 1
    det["orbits_with_steps"] = int(valid.sum())
    det["max_steps"] = int(steps.max())
    if not valid.any():
        return LemmaReport("angle_product", 0, 0, float("inf"), inadmissible=len(pts), details=det)
    w = out[valid, 0]
    ws = out[valid, 1]
    det["slope_ratio_violations"] = int(np.sum(ws < -REL_TOL))
    det["slope_ratio_worst_margin"] = float(ws.min())
    return LemmaReport("angle_product", int(valid.sum()), int(np.sum(w < -REL_TOL)), float(w.min()),
                       inadmissible=int((~valid).sum()), details=det)


def check_angle_product(params, n_samples, seed, alpha=0.99, kmax=2000):
    """Surface-model version: orbits inside the inner disks of the charts."""
    rep = check_angle_product_local(params.profile, params.lam, alpha, n_samples, seed,
                                    kmax=kmax, tol=params.tol)
    rep.details["params"] = params.describe()
    return rep


# ------------------------------------------------------- cocycle comparison

@njit(cache=True)
def _gamma_many(jac, alpha):
    out = np.empty(jac.shape[0])
    for i in range(jac.shape[0]):
        out[i] = gamma_kernel(jac[i, 0, 0], jac[i, 0, 1], jac[i, 1, 0], jac[i, 1, 1], alpha)
    return out


def _cone_ratio_max(dj, jac, alpha, n_slopes=129):
    """max over v in the closed cone K+ of |dJ v| / |J v|, per step."""
    m = np.linspace(-alpha, alpha, n_slopes)
    v = np.stack([np.ones_like(m), m])
    num = np.linalg.norm(dj @ v, axis=1)
    den = np.linalg.norm(jac @ v, axis=1)
    return (num / den).max(axis=1)


def _orbit_of(params, branch):
    from .tower import branch_orbit
    if isinstance(branch, np.ndarray):
        return branch
    if hasattr(branch, "orbit"):
        return branch.orbit
    return branch_orbit(params, branch)


def cocycle_terms(params, orbit, alpha=0.99):
    """Per-step delta_n (per unit initial stable offset) and gamma_n along a branch.

    delta_n = max over v in K+ of |(A_n - B_n) v| / (d |A_n v|) with B_n the
    derivative at the stable partner at distance d, to first order in d.
    """
    from .tower import branch_tangents
    tg = branch_tangents(params, orbit)
    dj = _t_derivs(params, tg)
    logs = np.concatenate([[0.0], np.cumsum(tg.log_s)])[:-1]
    delta = np.zeros(len(tg.jac))
    nl = np.any(dj != 0.0, axis=(1, 2))
    if nl.any():
        delta[nl] = _cone_ratio_max(dj[nl], tg.jac[nl], alpha) * np.exp(logs[nl])
    gamma = _gamma_many(tg.jac, alpha)
    return tg, delta, gamma


def _t_derivs(params, tg):
    from . import _tower
    return _tower.jacobian_derivatives(np.ascontiguousarray(tg.orbit), tg.s, False,
                                       params.geo, params.frame, MARKED_POINTS)


def _sum_terms(delta, gamma):
    prods = np.cumprod(gamma)
    return float(delta.sum()), float(prods.sum()), float(prods[-1]) if prods.size else 1.0


def check_cocycle_comparison(params, branches, pair_offset=1e-6, seed=0, alpha=0.99,
                             c_max=1e3):
    """|log |A v| / |B w|| against d sum delta_n + angle(v, w) sum prod gamma_k.

    A is the derivative cocycle along a branch, B the one along its stable
    partner at distance d = pair_offset; w is v turned by an angle of the same
    size.  Both differences are evaluated to first order.  The report's
    ``C`` is the largest ratio of the two sides.
    """
    from . import _tower
    from .tower import signed_log_distortion
    if not isinstance(branches, (list, tuple)):
        branches = [branches]
    rng = np.random.default_rng(seed)
    d = float(pair_offset)
    det = {"pair_offset": d, "alpha": alpha, "c_max": c_max}
    if not branches:
        return LemmaReport("cocycle_comparison", 0, 0, float("inf"), details=det)
    ratios = []
    nonlinear = 0
    for b in branches:
        orbit = _orbit_of(params, b)
        tg, delta, gamma = cocycle_terms(params, orbit, alpha)
        theta = d * rng.uniform(0.5, 1.0) * rng.choice([-1.0, 1.0])
        c, s = math.cos(theta), math.sin(theta)
        v = tg.u[0]
        w = np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])
        _, lw = _tower.push_series(tg.jac, w[0], w[1])
        turn = float(np.sum(lw) - np.sum(tg.log_u))
        lg, sign = signed_log_distortion(params, tg, 1.0)
        shift = sign * math.exp(lg) if math.isfinite(lg) else 0.0
        nonlinear += int(shift != 0.0)
        lhs = abs(turn + d * shift)
        sd, sg, _ = _sum_terms(delta, gamma)
        rhs = d * sd + abs(theta) * sg
        ratios.append(lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf))
    ratios = np.array(ratios)
    C = float(ratios.max())
    det.update({"C": C, "C_median": float(np.median(ratios)), "branches": len(ratios),
                "branches_with_nonlinear_steps": nonlinear})
    return LemmaReport("cocycle_comparison", len(ratios), int(np.sum(ratios > c_max)), float(c_max - C),
                       details=det)


def check_sum_bounds(params, branches, seed=0, alpha=0.99):
    """sum delta_n, sum prod gamma_k and prod gamma_n per branch; prod < 1 required.

    ``seed`` is accepted for interface symmetry; the quantities are deterministic.
    """
    from .cones import gamma_outside
    det = {"alpha": alpha, "seed": seed}
    q = getattr(getattr(branches, "rect", None), "Q", params.q_min)
    g_out = gamma_outside(params.lam, alpha)
    det["gamma_outside"] = g_out
    det["Q"] = int(q)
    det["linear_example_bound"] = params.lam ** (-2.0 * q)
    det["linear_example_product"] = g_out ** q
    det["linear_example_holds"] = bool(g_out ** q <= params.lam ** (-2.0 * q))
    if len(branches) == 0:
        return LemmaReport("sum_bounds", 0, 0, float("inf"), details=det)
    rows = []
    for b in branches:
        _, delta, gamma = cocycle_terms(params, _orbit_of(params, b), alpha)
        rows.append(_sum_terms(delta, gamma))
    rows = np.array(rows)
    det.update({"C_tilde_delta": float(rows[:, 0].max()),
                "C_tilde_gamma": float(rows[:, 1].max()),
                "theta2": float(rows[:, 2].max()), "branches": len(rows)})
    viol = int(np.sum(~(rows[:, 2] < 1.0)))
    return LemmaReport("sum_bounds", len(rows), viol, float(1.0 - rows[:, 2].max()), details=det)
