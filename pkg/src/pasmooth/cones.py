"""Cone fields, the unstable/stable splitting and angle contraction.

K+(x) = {|xi_s| < alpha |xi_u|} and K-(x) = {|xi_u| < alpha |xi_s|} in
eigenframe components.  Tangent norms are Euclidean in these components.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _surface as _s
from .reports import LemmaReport
from .surface import MARKED_POINTS, _pts, jacobian_g, smooth_map_g

N_PROBES = 16
DEFAULT_N_BACK = 60
RESIDUAL_THRESHOLD = 1e-8
ALPHA_GRID = np.round(np.arange(0.01, 1.0, 0.01), 2)


@dataclass
class Splitting:
    eu: np.ndarray
    es: np.ndarray
    residual: float
    residual_s: float
    converged: bool
    degenerate: bool = False


def probe_slopes(alpha, n_probes=N_PROBES):
    """Boundary slopes -alpha, +alpha and interior probes strictly between."""
    inner = alpha * np.linspace(-1.0, 1.0, n_probes + 2)[1:-1]
    return np.concatenate([[-alpha, alpha], inner])


def image_slopes(jac, slopes):
    """Slopes xi_s / xi_u of J (1, m) for each Jacobian (n,2,2) and slope m."""
    num = jac[:, 1, 0, None] + jac[:, 1, 1, None] * slopes[None, :]
    den = jac[:, 0, 0, None] + jac[:, 0, 1, None] * slopes[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den != 0, num / den, np.inf)


def admissible_alpha(jac, jinv, grid=ALPHA_GRID, n_probes=N_PROBES):
    """Smallest grid alpha for which every sample keeps both cones invariant."""
    for a in grid:
        if _cone_margins(jac, jinv, a, n_probes).min() >= -1e-12:
            return float(a)
    return float("nan")


def _cone_margins(jac, jinv, alpha, n_probes):
    sl = probe_slopes(alpha, n_probes)
    mu = np.abs(image_slopes(jac, sl))
    # stable cone: swap roles of the two components
    swap = jinv[:, ::-1, ::-1]
    ms = np.abs(image_slopes(swap, sl))
    worst = np.minimum((alpha - mu).min(axis=1), (alpha - ms).min(axis=1))
    # interior probes must land strictly inside
    inner = np.minimum((alpha - mu[:, 2:]).min(axis=1), (alpha - ms[:, 2:]).min(axis=1))
    return np.where(inner > 0, worst, np.minimum(worst, inner - 1e-300))


def sample_active_region(params, n, rng):
    """Points in the charts where g is nonlinear: half area-uniform, half log-radial."""
    rmax = min(params.lam * params.profile.rt0 * 1.05, 0.5 * params.disk_radius)
    n_area = n // 2
    r = np.concatenate([rmax * np.sqrt(rng.random(n_area)),
                        np.exp(rng.uniform(math.log(1e-10), math.log(rmax), n - n_area))])
    ang = rng.random(n) * 2.0 * math.pi
    which = rng.integers(0, 4, n)
    z = 2.0 * np.column_stack([r * np.cos(ang), r * np.sin(ang)])
    x = MARKED_POINTS[which] + z @ params.frame
    return np.mod(x, 1.0)


def check_cone_invariance(params, alpha, samples, seed, points=None):
    """Invariance of K+ under dg and of K- under dg^-1 at sampled points.

    Without explicit ``points`` the samples are drawn from the region where g
    is nonlinear; elsewhere dg is diagonal and invariance is immediate.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    x = sample_active_region(params, int(samples), rng) if points is None else _pts(points)[0]
    if len(x) == 0:
        return LemmaReport("cone_invariance", 0, 0, float("inf"), details={"alpha": alpha})
    jac = jacobian_g(params, x).reshape(-1, 2, 2)
    jinv = np.linalg.inv(jac)
    margins = _cone_margins(jac, jinv, alpha, N_PROBES)
    viol = int(np.sum(margins < -1e-12))
    emp = admissible_alpha(jac, jinv)
    r = params.profile.rt1 / params.profile.rt0
    p = params.profile.p
    pred_a = max(0.0, 1.0 - math.sqrt(2.0 * p / (p - 2.0)) * r)
    pred_b = max(0.0, 1.0 - math.sqrt(2.0 * p / (p - 2.0)))
    worst = int(np.argmin(margins))
    return LemmaReport(
        "cone_invariance", len(x), viol, float(margins.min()),
        details={"alpha": alpha, "empirical_alpha0": emp,
                 "predicted_alpha0_ratio_rt1_rt0": pred_a,
                 "predicted_alpha0_ratio_one": pred_b,
                 "worst_point": x[worst].tolist()})


def cone_report_json(report):
    d = report.details
    return {"alpha": d["alpha"], "samples": report.samples, "violations": report.violations,
            "empirical_alpha0": d.get("empirical_alpha0"), "worst_margin": report.worst_margin,
            "predicted_alpha0": {"rt1_over_rt0": d.get("predicted_alpha0_ratio_rt1_rt0"),
                                 "ratio_one": d.get("predicted_alpha0_ratio_one")}}


def unstable_direction(params, x, n_back=DEFAULT_N_BACK, threshold=RESIDUAL_THRESHOLD):
    """Splitting at x from n_back pushes of the cone centers."""
    pts, single = _pts(x)
    eu, ru = _s.unstable_dirs(pts, int(n_back), *params.kernel_args)
    es, rs = _s.stable_dirs(pts, int(n_back), *params.kernel_args)
    out = []
    for i in range(len(pts)):
        deg = bool(np.any(np.all(np.abs(pts[i] - MARKED_POINTS) < 1e-15, axis=1)))
        if deg:
            out.append(Splitting(np.array([1.0, 0.0]), np.array([0.0, 1.0]), 0.0, 0.0, False, True))
            continue
        u = eu[i] * np.sign(eu[i, 0]) if eu[i, 0] != 0 else eu[i]
        s = es[i] * np.sign(es[i, 1]) if es[i, 1] != 0 else es[i]
        out.append(Splitting(u, s, float(ru[i]), float(rs[i]),
                             bool(ru[i] <= threshold and rs[i] <= threshold)))
    return out[0] if single else out


def unstable_dirs(params, x, n_back=DEFAULT_N_BACK):
    """Vectorized unstable directions (n, 2) and residuals (n,)."""
    pts, _ = _pts(x)
    return _s.unstable_dirs(pts, int(n_back), *params.kernel_args)


def gamma_from_jacobian(jac, alpha):
    """Exact sup over v != w in the closed cone K+ of angle(Jv, Jw) / angle(v, w).

    The induced map on directions has derivative |det J| / |J v|^2 at the unit
    vector v, so the supremum is |det J| over the minimum of |J v|^2 on the
    cone's arc: attained at a boundary ray or at the least singular direction.
    """
    jac = np.asarray(jac, dtype=float)
    det = abs(jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0])
    half = math.atan(alpha)
    cands = [-half, half]
    g = jac.T @ jac
    w, v = np.linalg.eigh(g)
    th = math.atan2(v[1, 0], v[0, 0])
    for t in (th, th + math.pi, th - math.pi):
        if -half <= t <= half:
            cands.append(t)
    best = min(float(np.sum((jac @ np.array([math.cos(t), math.sin(t)])) ** 2)) for t in cands)
    return det / best


def _angle(a, b):
    c = a[0] * b[1] - a[1] * b[0]
    d = a[0] * b[0] + a[1] * b[1]
    return abs(math.atan2(c, d))


def gamma_coefficient(params, x, probe_count=64, alpha=0.99, seed=0, jac=None):
    """Angle contraction coefficient of dg_x over pairs in K+(x).

    Sampled pairs give a lower estimate; the exact supremum is added so the
    result is nondecreasing in ``probe_count``.
    """
    if jac is None:
        jac = jacobian_g(params, x)
    rng = np.random.default_rng(seed)
    half = math.atan(alpha)
    th = np.sort(np.concatenate([[-half, half], rng.uniform(-half, half, max(0, probe_count - 2))]))
    vecs = np.column_stack([np.cos(th), np.sin(th)])
    img = vecs @ jac.T
    sampled = 0.0
    for i in range(len(th) - 1):
        den = th[i + 1] - th[i]
        if den > 0:
            sampled = max(sampled, _angle(img[i], img[i + 1]) / den)
    return max(sampled, gamma_from_jacobian(jac, alpha))


def gamma_outside(lam, alpha):
    """Closed form of the coefficient for diag(lam, 1/lam)."""
    return (1.0 + alpha ** 2) / (lam ** 2 + alpha ** 2 / lam ** 2)


def invariance_defect(params, x, n_back=DEFAULT_N_BACK):
    """Angle between dg E^u(x) and E^u(g x)."""
    pts, _ = _pts(x)
    eu, _ = _s.unstable_dirs(pts, int(n_back), *params.kernel_args)
    gx = smooth_map_g(params, pts).reshape(-1, 2)
    eg, _ = _s.unstable_dirs(gx, int(n_back), *params.kernel_args)
    jac = jacobian_g(params, pts).reshape(-1, 2, 2)
    img = np.einsum("nij,nj->ni", jac, eu)
    img /= np.linalg.norm(img, axis=1)[:, None]
    cr = np.abs(img[:, 0] * eg[:, 1] - img[:, 1] * eg[:, 0])
    return np.arcsin(np.minimum(cr, 1.0))
