"""Geometric potentials, unstable Lyapunov exponents and the pressure curve.

phi_t(x) = -t log |dg_x e^u(x)|.  Pressure is computed on a set of return
branches as the root of

    Z(P) = sum over s-set keys of  w_k exp(-t S_k - P tau_k) = 1,

with S_k the Birkhoff sum of log J^u of the key's representative.  For a
plain list of branches w_k = 1.  For a sampled BranchSet, w_k = m_k e^{S_k}
where m_k is the share of seeds that landed in the key: a key whose branch
crosses the base fully occupies a u-fraction e^{-S_k} of it, so w_k estimates
how many s-sets the sampled key stands for.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.optimize import brentq
from scipy.special import logsumexp

from . import _surface as _s
from .reports import LemmaReport, write_csv
from .surface import MARKED_POINTS, _disk_mass, _pts, sample_zeta_volume, total_volume
from .slowdown import psi

N_BACK = 60
ROOT_TOL = 1e-10


# ------------------------------------------------------------------ potential

def _marked_mask(pts):
    d = pts[:, None, :] - MARKED_POINTS[None, :, :]
    d -= np.floor(d + 0.5)
    return np.any(np.all(d == 0.0, axis=2), axis=1)


def phi_t(params, x, t, splitting=None):
    """-t log of the expansion of the unit unstable vector under dg at x.

    ``splitting`` may be a Splitting, a unit vector or an (n, 2) array of
    them; by default the unstable direction is computed from the past orbit.
    Marked points give 0.
    """
    pts, single = _pts(x)
    marked = _marked_mask(pts)
    if splitting is None:
        dirs, res = _s.unstable_dirs(pts, N_BACK, *params.kernel_args)
        bad = (res > 1e-8) & ~marked
        if np.any(bad):
            warnings.warn(f"{int(bad.sum())} unstable directions not converged; "
                          "using the cone-center proxy", RuntimeWarning, stacklevel=2)
    elif hasattr(splitting, "eu"):
        if getattr(splitting, "degenerate", False):
            warnings.warn("degenerate splitting; using the cone-center proxy", RuntimeWarning,
                          stacklevel=2)
        dirs = np.atleast_2d(splitting.eu)
    else:
        dirs = np.atleast_2d(np.asarray(splitting, dtype=float))
    dirs = np.ascontiguousarray(np.broadcast_to(dirs, pts.shape), dtype=float)
    dirs = dirs / np.linalg.norm(dirs, axis=1)[:, None]
    lg = _s.log_stretch_many(pts, dirs, params.geo, params.frame, MARKED_POINTS)
    out = np.where(marked, 0.0, -t * lg)
    return float(out[0]) if single else out


# ---------------------------------------------------------------- exponents

@dataclass
class LyapunovEstimate:
    chi_u: float
    n_steps: int
    stderr: float = 0.0
    details: dict = field(default_factory=dict)


@njit(cache=True)
def _lyapunov_blocks(x1, x2, n, n_blocks, geo, mat, minv, frame, marks):
    """Log growth of the cone-center vector per block of n // n_blocks steps."""
    out = np.zeros(n_blocks)
    per = n // n_blocks
    v1, v2 = 1.0, 0.0
    for b in range(n_blocks):
        acc = 0.0
        for _ in range(per):
            j11, j12, j21, j22 = _s.dg_step(x1, x2, False, geo, frame, marks)
            v1, v2, lg = _s.push_unit(j11, j12, j21, j22, v1, v2)
            acc += lg
            x1, x2, _ = _s.g_step(x1, x2, False, geo, mat, minv, frame, marks)
        out[b] = acc / per
    return out


def lyapunov_u(params, x, n, n_blocks=20):
    """(1/n) log growth of a cone vector along the forward orbit of x."""
    n = int(n)
    if n < 1:
        raise ValueError("n must be at least 1")
    x = np.asarray(x, dtype=float).reshape(2)
    nb = max(1, min(int(n_blocks), n))
    n_used = (n // nb) * nb
    blocks = _lyapunov_blocks(x[0], x[1], n_used, nb, *params.kernel_args)
    se = float(blocks.std(ddof=1) / math.sqrt(nb)) if nb > 1 else 0.0
    return LyapunovEstimate(float(blocks.mean()), n_used, se)


def lyapunov_many(params, pts, n):
    """Per-orbit exponents for many starting points."""
    pts = np.ascontiguousarray(np.atleast_2d(pts), dtype=float)
    return _s.lyapunov_many(pts, int(n), *params.kernel_args)


def _ball_points(params, n, radius, rng):
    """Invariant-volume points in the sector balls |s| < radius; returns (pts, mass)."""
    prof = params.profile
    rt0 = prof.rt0
    inner = 4.0 * _disk_mass(params)
    ann = 4.0 * math.pi * 4.0 * (radius ** 2 - rt0 ** 2)
    n_in = rng.binomial(n, inner / (inner + ann))
    rad = np.empty(n)
    got = 0
    while got < n_in:
        m = max(64, int(1.2 * (n_in - got)) + 16)
        r = rng.random(m) * rt0
        acc = rng.random(m) < 2.0 * r / psi(prof, r * r)
        r = r[acc][: n_in - got]
        rad[got:got + len(r)] = r
        got += len(r)
    rad[n_in:] = np.sqrt(rng.uniform(rt0 ** 2, radius ** 2, n - n_in))
    ang = rng.random(n) * 2.0 * math.pi
    which = rng.integers(0, 4, n)
    z = 2.0 * np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
    pts = np.mod(MARKED_POINTS[which] + z @ params.frame, 1.0)
    return np.ascontiguousarray(pts), inner + ann


def srb_exponent(params, n_samples=20000, seed=0):
    """Unstable exponent of the invariant volume (its entropy, by Pesin's formula).

    In the adapted norm |v|_* = |v_u| every linear step expands by exactly
    lambda, so chi = log lambda - (1/V) int (log lambda - psi_*) over the
    balls around the marked points that contain all nonlinear steps, with
    psi_*(x) = log |(dg e^u)_u| / |e^u_u|.  The integral is sampled there.
    """
    lg = params.loglam
    if not params.slowdown:
        return LyapunovEstimate(lg, 0, 0.0, {"method": "linear"})
    rng = np.random.default_rng(seed)
    radius = 1.02 * params.lam * params.profile.rt0
    pts, mass = _ball_points(params, int(n_samples), radius, rng)
    dirs, _ = _s.unstable_dirs(pts, N_BACK, *params.kernel_args)
    jac = _s.jac_many(pts, False, params.geo, params.frame, MARKED_POINTS)
    img_u = jac[:, 0, 0] * dirs[:, 0] + jac[:, 0, 1] * dirs[:, 1]
    deficit = lg - (np.log(np.abs(img_u)) - np.log(np.abs(dirs[:, 0])))
    vol = total_volume(params)
    chi = lg - mass * deficit.mean() / vol
    se = mass * deficit.std(ddof=1) / math.sqrt(len(deficit)) / vol
    return LyapunovEstimate(float(chi), 0, float(se),
                            {"method": "stratified", "samples": len(pts), "ball_mass": mass,
                             "ball_radius": radius, "mean_deficit": float(deficit.mean())})


# ------------------------------------------------------------------ pressure

@dataclass
class PressureCurve:
    t: np.ndarray
    P: np.ndarray
    residual: np.ndarray
    branch_count: np.ndarray
    truncation_delta: np.ndarray
    monotone: bool = True
    convex: bool = True
    details: dict = field(default_factory=dict)

    def rows(self):
        return list(zip(self.t, self.P, self.residual, self.branch_count,
                        self.truncation_delta))


class PressureError(RuntimeError):
    pass


def _key_table(branches, n_max=None):
    """Arrays (tau, S, log weight) with one entry per s-set key."""
    reps = {}
    counts = {}
    for b in branches:
        if n_max is not None and b.tau > n_max:
            continue
        reps.setdefault(b.sset_key, b)
        counts[b.sset_key] = counts.get(b.sset_key, 0) + 1
    if not reps:
        raise PressureError("no branches")
    keys = list(reps)
    tau = np.array([reps[k].tau for k in keys], dtype=float)
    S = np.array([reps[k].birkhoff_logJu for k in keys])
    n_seeds = getattr(branches, "n_seeds", 0)
    if n_seeds:
        logw = np.log(np.array([counts[k] for k in keys]) / n_seeds) + S
    else:
        logw = np.zeros(len(keys))
    return tau, S, logw


def _solve(tau, S, logw, t, tol):
    c = logw - t * S

    def logz(P):
        return logsumexp(c - P * tau)

    lo, hi = -1.0, 1.0
    for _ in range(200):
        if logz(lo) > 0.0:
            break
        lo = 2.0 * lo - 1.0
    else:
        raise PressureError(f"no lower bracket at t={t}")
    for _ in range(200):
        if logz(hi) < 0.0:
            break
        hi = 2.0 * hi + 1.0
    else:
        raise PressureError(f"no upper bracket at t={t}")
    if not logz(lo) > logz(hi):
        raise PressureError("Z is not decreasing on the bracket")
    P = brentq(logz, lo, hi, xtol=tol * 1e-3, maxiter=500)
    return P, abs(math.expm1(logz(P)))


def pressure_root(params, branches, t, tol=ROOT_TOL, return_info=False):
    """Root P of Z(P) = 1 for phi_t on the branch set."""
    tau, S, logw = _key_table(branches)
    P, res = _solve(tau, S, logw, t, tol)
    if not return_info:
        return float(P)
    info = {"residual": res, "branch_count": len(tau)}
    n_max = getattr(branches, "n_max", 0) or int(tau.max())
    try:
        P2, _ = _solve(*_key_table(branches, n_max // 2), t, tol)
        info["truncation_delta"] = abs(P - P2)
    except PressureError:
        info["truncation_delta"] = float("nan")
    return float(P), info


def parse_t_grid(spec):
    """'a:b:step' -> inclusive grid."""
    a, b, st = (float(v) for v in spec.split(":"))
    if st <= 0 or b < a:
        raise ValueError("t grid must be a:b:step with a <= b and step > 0")
    n = int(math.floor((b - a) / st + 1e-9)) + 1
    return np.round(a + st * np.arange(n), 12)


def pressure_curve(params, branches, t_grid, tol=ROOT_TOL):
    t_grid = np.asarray(t_grid, dtype=float)
    vals = [pressure_root(params, branches, t, tol, return_info=True) for t in t_grid]
    P = np.array([v[0] for v in vals])
    curve = PressureCurve(
        t=t_grid, P=P, residual=np.array([v[1]["residual"] for v in vals]),
        branch_count=np.array([v[1]["branch_count"] for v in vals]),
        truncation_delta=np.array([v[1]["truncation_delta"] for v in vals]))
    dp = np.diff(P)
    curve.monotone = bool(np.all(dp <= 1e-9))
    if len(P) >= 3:
        d2 = P[2:] - 2.0 * P[1:-1] + P[:-2]
        curve.convex = bool(np.all(d2 >= -1e-9))
        curve.details["max_second_difference"] = float(np.abs(d2).max())
        curve.details["second_difference_variation"] = float(np.abs(np.diff(d2)).max()) \
            if len(d2) > 1 else 0.0
    return curve


def write_pressure_csv(path, curve):
    write_csv(path, ["t", "P", "residual", "branch_count", "truncation_delta"], curve.rows())


# ----------------------------------------------------------- lambda_1 and t0

def lambda1_and_t0(params, branches, h_fit, h_srb):
    """log lambda_1 = max over branches of S_tau log J^u / tau, and
    t0 = (h - h_srb) / (log lambda_1 - h_srb)."""
    if len(branches) == 0:
        raise ValueError("need at least one branch")
    if not h_fit < h_srb:
        raise ValueError("need h_fit < h_srb")
    loglam1 = max(b.birkhoff_logJu / b.tau for b in branches)
    max_step = max(b.max_step_logJu for b in branches)
    if not (h_srb <= loglam1 <= max_step + 1e-12):
        raise AssertionError(f"ordering h_srb <= log lambda_1 <= max log J^u fails: "
                             f"{h_srb}, {loglam1}, {max_step}")
    gap = loglam1 - h_srb
    t0 = (h_fit - h_srb) / gap if gap > 0 else -math.inf
    return float(loglam1), float(t0)


# ------------------------------------------------------------ Dirac measures

def dirac_check(params, t, n_orbits=64, n_steps=20000, seed=0):
    """Free energy h + int phi_t for Diracs at marked points and volume orbits.

    Diracs: entropy 0 and phi_t = 0, so exactly 0.  Volume orbits: entropy
    taken as the orbit's exponent (Pesin), giving (1 - t) chi.
    """
    if t < 1:
        raise ValueError("t must be at least 1")
    phi_marked = phi_t(params, MARKED_POINTS, t)
    dirac = 0.0 + phi_marked
    pts = sample_zeta_volume(params, n_orbits, seed)
    chi = lyapunov_many(params, pts, n_steps)
    free = chi - t * chi
    chi_mean = float(chi.mean())
    viol = int(np.sum(dirac != 0.0))
    if t > 1:
        viol += int(np.sum(~(free < 0.0)))
    margin = float(-free.max()) if t > 1 else float(-np.abs(dirac).max())
    det = {"t": t, "dirac_free_energy": dirac.tolist(), "chi_u_mean": chi_mean,
           "chi_u_min": float(chi.min()), "volume_free_energy_max": float(free.max()),
           "margin_over_chi": float(-free.max() / chi_mean) if chi_mean > 0 else float("nan"),
           "n_orbits": n_orbits, "n_steps": n_steps}
    return LemmaReport("dirac", len(dirac) + len(free), viol, margin, details=det)
