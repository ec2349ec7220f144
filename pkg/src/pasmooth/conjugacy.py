"""Conjugacy H with g o H = H o f, by shadowing on a finite orbit window.

H(x) is the point whose g-orbit stays close to the f-orbit of x.  On the
window k = -N..N the g-orbit is written y_k = p_k + h_k (p_k the f-orbit,
h_k an eigenframe displacement) and Newton's method solves

    g(y_k) = y_{k+1},   h^s_{-N} = 0,   h^u_N = 0.

The boundary conditions select the unique bounded solution up to an error of
order lambda^-N at k = 0.  Equivalently, the unstable part of h_0 is a sum of
defects D = g - f along forward iterates weighted by lambda^-(k+1), and the
stable part a sum along backward iterates.  When no step of the f-orbit in
the window is nonlinear, h = 0 solves the system exactly and H(x) = x.

H^-1 is linear in the defects along a known g-orbit and needs no iteration.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from numba import njit
from scipy.sparse.linalg import spsolve

from . import _surface as _s
from .surface import MARKED_POINTS, _pts, base_map_f, dist, smooth_map_g

DEFAULT_DEPTH = 80


@dataclass
class ConjugacyApprox:
    N: int = DEFAULT_DEPTH
    tol: float = 1e-6
    direction: str = "H"
    newton_tol: float = 1e-13
    max_rounds: int = 60
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.direction not in ("H", "H_inv"):
            raise ValueError("direction must be 'H' or 'H_inv'")
        if self.N < 1:
            raise ValueError("N must be positive")


class ConjugacyError(RuntimeError):
    pass


@njit(cache=True)
def _window(x1, x2, n, geo, mat, minv, frame, marks, use_g):
    """Orbit rows k = -n..n of f (or of g when use_g) through x, stored at k + n."""
    out = np.empty((2 * n + 1, 2))
    out[n, 0] = x1
    out[n, 1] = x2
    a1, a2 = x1, x2
    b1, b2 = x1, x2
    for k in range(1, n + 1):
        if use_g:
            a1, a2, _ = _s.g_step(a1, a2, False, geo, mat, minv, frame, marks)
            b1, b2, _ = _s.g_step(b1, b2, True, geo, mat, minv, frame, marks)
        else:
            a1, a2 = _s.linear_step(a1, a2, mat)
            b1, b2 = _s.linear_step(b1, b2, minv)
        out[n + k, 0] = a1
        out[n + k, 1] = a2
        out[n - k, 0] = b1
        out[n - k, 1] = b2
    return out


@njit(cache=True)
def _touches(p, geo, frame, marks):
    """True when some step g(p_k), k < last, is nonlinear."""
    for k in range(p.shape[0] - 1):
        c, _, _ = _s.nonlinear_here(p[k, 0], p[k, 1], False, geo, frame, marks)
        if c >= 0:
            return True
    return False


@njit(cache=True)
def _touch_many(pts, n, geo, mat, minv, frame, marks):
    out = np.zeros(pts.shape[0], dtype=np.bool_)
    for i in range(pts.shape[0]):
        w = _window(pts[i, 0], pts[i, 1], n, geo, mat, minv, frame, marks, False)
        out[i] = _touches(w, geo, frame, marks)
    return out


def _wrapdiff(a, b):
    d = a - b
    return d - np.floor(d + 0.5)


def _system(jac, n):
    """Sparse Newton matrix for unknowns h_0..h_{n-1} (eigenframe, interleaved)."""
    m = n - 1
    rows, cols, vals = [], [], []
    k = np.arange(m)
    for i in range(2):
        for j in range(2):
            rows.append(2 * k + i)
            cols.append(2 * k + j)
            vals.append(jac[:, i, j])
        rows.append(2 * k + i)
        cols.append(2 * (k + 1) + i)
        vals.append(-np.ones(m))
    rows.append(np.array([2 * m, 2 * m + 1]))
    cols.append(np.array([1, 2 * m]))
    vals.append(np.ones(2))
    return sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(2 * n, 2 * n))


def _residual(params, p, h):
    fr = params.frame
    y = np.mod(p + h @ fr, 1.0)
    gy = _s.step_many(np.ascontiguousarray(y[:-1]), False, *params.kernel_args)
    r = _wrapdiff(gy, p[1:]) @ fr.T - h[1:]
    return y, np.concatenate([r.ravel(), [h[0, 1], h[-1, 0]]])


def _shadow(params, p, approx):
    """Newton solve on the window; returns (h, residual norm, converged, rounds)."""
    n = len(p)
    h = np.zeros((n, 2))
    y, r = _residual(params, p, h)
    norm = np.abs(r).max()
    for it in range(approx.max_rounds):
        if norm < approx.newton_tol:
            return h, norm, True, it
        jac = _s.jac_many(np.ascontiguousarray(y[:-1]), False, params.geo, params.frame,
                          MARKED_POINTS)
        dh = spsolve(_system(jac, n), -r).reshape(n, 2)
        step = 1.0
        for _ in range(30):
            hn = h + step * dh
            yn, rn = _residual(params, p, hn)
            nn = np.abs(rn).max()
            if nn < norm or nn < approx.newton_tol:
                break
            step *= 0.5
        else:
            return h, norm, False, it
        h, y, r, norm = hn, yn, rn, nn
    return h, norm, norm < approx.newton_tol, approx.max_rounds


def _inverse_one(params, y, N):
    """H^-1(y): the f-pseudo-orbit x_k = q_k - h_k shadowing the g-orbit q of y."""
    q = _window(y[0], y[1], N, *params.kernel_args, True)
    fr = params.frame
    mq = np.mod(q[:-1] @ params.mat.T, 1.0)
    D = _wrapdiff(q[1:], mq) @ fr.T
    lam = params.lam
    n = len(q)
    h = np.zeros((n, 2))
    # h_{k+1} = diag(lam, 1/lam) h_k + D_k
    for k in range(n - 1):
        h[k + 1, 1] = h[k, 1] / lam + D[k, 1]
    for k in range(n - 2, -1, -1):
        h[k, 0] = (h[k + 1, 0] - D[k, 0]) / lam
    return np.mod(q[N] - h[N] @ fr, 1.0)


def conjugate_point(params, approx, x, return_info=False):
    """H(x) (or H^-1(x) when approx.direction == 'H_inv')."""
    pts, single = _pts(x)
    out = pts.copy()
    info = [{"identity": True, "converged": True, "residual": 0.0, "rounds": 0}
            for _ in range(len(pts))]
    if approx.direction == "H_inv":
        for i, y in enumerate(pts):
            out[i] = _inverse_one(params, y, approx.N)
            info[i]["identity"] = False
    elif params.slowdown:
        touched = _touch_many(pts, int(approx.N), *params.kernel_args)
        for i in np.nonzero(touched)[0]:
            p = _window(pts[i, 0], pts[i, 1], approx.N, *params.kernel_args, False)
            h, norm, ok, it = _shadow(params, p, approx)
            out[i] = np.mod(pts[i] + h[approx.N] @ params.frame, 1.0)
            info[i] = {"identity": False, "converged": bool(ok), "residual": float(norm),
                       "rounds": it}
    res = out[0] if single else out
    if return_info:
        return res, (info[0] if single else info)
    return res


def visits_nonlinear(params, x, N=DEFAULT_DEPTH):
    """True where the f-orbit window of x meets a nonlinear step of g."""
    pts, _ = _pts(x)
    return _touch_many(pts, int(N), *params.kernel_args)


def disk_visiting_points(params, n, seed, spread=10):
    """Points whose f-orbit passes the slow balls within ``spread`` iterates.

    Most of them meet a nonlinear step; those drawn from the outer part of
    the balls may not.
    """
    from .thermo import _ball_points
    rng = np.random.default_rng(seed)
    w, _ = _ball_points(params, int(n), params.lam * params.profile.rt0, rng)
    shifts = rng.integers(-spread, spread + 1, len(w))
    out = np.empty_like(w)
    for i, (x0, j) in enumerate(zip(w, shifts)):
        a = params.minv if j > 0 else params.mat
        x = x0
        for _ in range(abs(int(j))):
            x = np.mod(a @ x, 1.0)
        out[i] = x
    return out


def conjugacy_residual(params, approx, x):
    """|g(H x) - H(f x)| per point, with per-point solver info for both evaluations."""
    pts, _ = _pts(x)
    hx, i1 = conjugate_point(params, approx, pts, return_info=True)
    hfx, i2 = conjugate_point(params, approx, base_map_f(params, pts), return_info=True)
    r = dist(smooth_map_g(params, hx), hfx)
    ok = np.array([a["converged"] and b["converged"] for a, b in zip(i1, i2)])
    ident = np.array([a["identity"] for a in i1])
    return np.atleast_1d(r), ok, ident, hx


def validate(params, approx, n_points=10000, seed=0, n_visiting=500):
    """Residual of the conjugacy equation on random points and on disk-visiting ones."""
    rng = np.random.default_rng(seed)
    x = rng.random((int(n_points), 2))
    r, ok, ident, hx = conjugacy_residual(params, approx, x)
    moved = dist(hx, x) > 0
    out = {"n_points": len(x), "sup_residual": float(r.max()), "unconverged": int((~ok).sum()),
           "identity_points": int(ident.sum()),
           "identity_exact": bool(np.all(~moved[ident])),
           "tol": approx.tol, "N": approx.N}
    if n_visiting:
        xv = disk_visiting_points(params, n_visiting, seed + 1)
        rv, okv, _, hv = conjugacy_residual(params, approx, xv)
        back = conjugate_point(params, ConjugacyApprox(approx.N, direction="H_inv"), hv)
        out.update({"visiting_points": len(xv), "visiting_sup_residual": float(rv.max()),
                    "visiting_unconverged": int((~okv).sum()),
                    "visiting_max_displacement": float(dist(hv, xv).max()),
                    "inverse_roundtrip_max": float(dist(back, xv).max())})
    worst = max(out["sup_residual"], out.get("visiting_sup_residual", 0.0))
    out["passed"] = bool(worst <= approx.tol and out["unconverged"] == 0
                         and out.get("visiting_unconverged", 0) == 0 and out["identity_exact"])
    approx.stats.update(out)
    return out


def sample_mme(params, approx, n, seed):
    """n points of H_* Lebesgue (the measure of maximal entropy of g)."""
    n = int(n)
    if n < 0:
        raise ValueError("n must be non-negative")
    rng = np.random.default_rng(seed)
    out = np.empty((n, 2))
    got = 0
    flagged = 0
    while got < n:
        y = rng.random((n - got, 2))
        hy, info = conjugate_point(params, approx, y, return_info=True)
        ok = np.array([i["converged"] for i in info], dtype=bool)
        flagged += int((~ok).sum())
        hy = hy[ok]
        out[got:got + len(hy)] = hy
        got += len(hy)
    approx.stats["mme_resampled"] = approx.stats.get("mme_resampled", 0) + flagged
    return out
