"""Torus model: the automorphism f(x) = Mx mod 1 and its slowed version g.

The four half-integer points are fixed by M (M = I mod 2).  Around each
one the chart coordinate is z = E (x - mark), E the orthonormal eigenframe,
and inside |z| < a**2 the map g applies the time-one map of the slow-down
field with p = 4 to s = z / 2.  Away from the slow region the field is
linear, so g and f coincide there; the kernels switch to the exact integer
arithmetic of f whenever the unit-time orbit never enters |s| < rt0.

Tangent vectors are given by their eigenframe components (xi_u, xi_s).
"""

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.integrate import quad

from . import _surface as _s
from .slowdown import DEFAULT_TOL, DomainError, SlowdownProfile, Tolerances, psi

MARKED_POINTS = np.array([[0.0, 0.0], [0.5, 0.0], [0.0, 0.5], [0.5, 0.5]])
SHEET_BASE = np.array([0.25, 0.25])


class ConfigError(ValueError):
    """Invalid model parameters; ``field`` names the offending setting."""

    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class ModelParams:
    """Model data.  Radii are stored as ratios: r0 = r0_ratio * a, r1 = r1_ratio * r0."""

    matrix: tuple = ((5, 2), (2, 1))
    a: float = 0.2
    r0_ratio: float = 0.1
    r1_ratio: float = 0.5
    q_min: int = 1
    slowdown: bool = True
    tol: Tolerances = field(default=DEFAULT_TOL)

    def __post_init__(self):
        m = np.array(self.matrix)
        if m.shape != (2, 2) or not np.all(m == np.round(m)):
            raise ConfigError("matrix", "must be a 2x2 integer matrix")
        m = m.astype(np.int64)
        if round(np.linalg.det(m)) != 1:
            raise ConfigError("matrix", "determinant must be 1")
        if abs(int(np.trace(m))) <= 2:
            raise ConfigError("matrix", "|trace| must exceed 2")
        if m[0, 1] != m[1, 0]:
            raise ConfigError("matrix", "must be symmetric")
        if np.any((m - np.eye(2, dtype=np.int64)) % 2):
            raise ConfigError("matrix", "must be congruent to the identity mod 2")
        if np.trace(m) < 0:
            raise ConfigError("matrix", "trace must be positive (orientation of the flow)")
        if not (0.0 < self.a < 0.5):
            # marked points are 1/2 apart; charts of radius a**2 must not meet
            raise ConfigError("a", "chart radius must lie in (0, 0.5)")
        if not (0.0 < self.r1_ratio < 1.0):
            raise ConfigError("r1_ratio", "need 0 < r1 < r0")
        if self.r0_ratio <= 0:
            raise ConfigError("r0_ratio", "must be positive")
        try:
            prof = self.profile
        except DomainError as exc:
            raise ConfigError("r0_ratio", str(exc)) from None
        bound = self.a ** 2 / (2.0 * self.lam)
        if prof.rt0 >= bound:
            raise ConfigError(
                "r0_ratio",
                f"slow region radius {prof.rt0:.4g} must be below a^2/(2 lambda) = {bound:.4g} "
                "so that every orbit touching it stays inside the chart")
        if int(self.q_min) != self.q_min or self.q_min < 0:
            raise ConfigError("q_min", "must be a non-negative integer")

    @cached_property
    def mat(self):
        return np.array(self.matrix, dtype=float)

    @cached_property
    def minv(self):
        m = self.mat
        return np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]])

    @cached_property
    def lam(self):
        tr = float(np.trace(self.mat))
        return 0.5 * (tr + math.sqrt(tr * tr - 4.0))

    @property
    def loglam(self):
        return math.log(self.lam)

    @cached_property
    def frame(self):
        """Rows e_u, e_s."""
        m = self.mat
        eu = np.array([m[0, 1], self.lam - m[0, 0]])
        if np.allclose(eu, 0):
            eu = np.array([self.lam - m[1, 1], m[1, 0]])
        eu /= np.linalg.norm(eu)
        if eu[0] < 0:
            eu = -eu
        es = np.array([eu[1], -eu[0]])
        return np.ascontiguousarray(np.vstack([eu, es]))

    @property
    def e_u(self):
        return self.frame[0]

    @property
    def e_s(self):
        return self.frame[1]

    @property
    def marked(self):
        return MARKED_POINTS.copy()

    @property
    def disk_radius(self):
        return self.a ** 2

    @property
    def r0(self):
        return self.r0_ratio * self.a

    @property
    def r1(self):
        return self.r1_ratio * self.r0

    @cached_property
    def profile(self):
        return SlowdownProfile(4, self.r0, self.r1)

    @cached_property
    def geo(self):
        p = self.profile
        g = np.zeros(_s.GEO_SIZE)
        g[_s.G_LAM] = self.lam
        g[_s.G_L] = self.loglam
        g[_s.G_ZR] = self.disk_radius
        g[_s.G_P] = 4.0
        g[_s.G_U0] = p.u0
        g[_s.G_U1] = p.u1
        g[_s.G_KC] = p.kc
        g[_s.G_SLOW] = 1.0 if self.slowdown else 0.0
        g[_s.G_QTOL] = self.tol.quad_rtol
        g[_s.G_RTOL] = self.tol.ode_rtol
        g[_s.G_ATOL] = self.tol.ode_atol
        return g

    @property
    def kernel_args(self):
        """(geo, mat, minv, frame, marks) as passed to the compiled kernels."""
        return self.geo, self.mat, self.minv, self.frame, MARKED_POINTS

    def with_changes(self, **kw):
        vals = {k: getattr(self, k) for k in
                ("matrix", "a", "r0_ratio", "r1_ratio", "q_min", "slowdown", "tol")}
        vals.update(kw)
        return ModelParams(**vals)

    def describe(self):
        return {"matrix": [list(r) for r in self.matrix], "lambda": self.lam, "a": self.a,
                "r0": self.r0, "r1": self.r1, "rt0": self.profile.rt0,
                "rt1": self.profile.rt1, "q_min": self.q_min, "slowdown": self.slowdown}


def _pts(x):
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    arr = np.ascontiguousarray(arr.reshape(-1, 2))
    if not np.all(np.isfinite(arr)):
        raise DomainError("surface points must be finite")
    return np.mod(arr, 1.0), single


def _vecs(v, n):
    arr = np.asarray(v, dtype=float).reshape(-1, 2)
    if arr.shape[0] == 1 and n > 1:
        arr = np.repeat(arr, n, axis=0)
    return arr


def chart_coordinates(params, x):
    """(chart index or -1, z) for each point."""
    pts, single = _pts(x)
    idx = np.full(pts.shape[0], -1)
    z = np.zeros_like(pts)
    for i, (x1, x2) in enumerate(pts):
        k, zu, zs = _s.locate(x1, x2, params.frame, MARKED_POINTS, params.disk_radius)
        idx[i] = k
        z[i] = (zu, zs)
    if single:
        return int(idx[0]), z[0]
    return idx, z


def in_slow_region(params, x):
    """True where x lies in the slow region |s| < rt0 of some chart."""
    pts, single = _pts(x)
    geo = params.geo
    out = np.array([_s.slow_index(a, b, geo, params.frame, MARKED_POINTS) >= 0 for a, b in pts])
    return bool(out[0]) if single else out


def _crossings(a, c):
    """Parity of crossings of the segment a -> c (in R^2) with the branch cuts."""
    y0, y1 = a[1], c[1]
    if y0 == y1:
        return 0
    lo, hi = min(y0, y1), max(y0, y1)
    n = 0
    for k in range(math.floor(2 * lo) + 1, math.ceil(2 * hi)):
        h = 0.5 * k
        x = a[0] + (c[0] - a[0]) * (h - y0) / (y1 - y0)
        if (x - math.floor(x)) < 0.5:
            n += 1
    return n & 1


def base_map_f(params, x, sheet=None):
    """x -> Mx mod 1; with ``sheet`` given, also returns the updated sheet bits.

    Cuts join (0,0)-(1/2,0) and (0,1/2)-(1/2,1/2).  The lift is normalized so
    that the straight path from b = (1/4, 1/4) on sheet 0 maps to the straight
    path from Mb on sheet parity([b, Mb]).
    """
    pts, single = _pts(x)
    raw = pts @ params.mat.T
    out = np.mod(raw, 1.0)
    if sheet is None:
        return out[0] if single else out
    bits = np.asarray(sheet, dtype=np.int64).reshape(-1) & 1
    if bits.size == 1 and pts.shape[0] > 1:
        bits = np.repeat(bits, pts.shape[0])
    b = SHEET_BASE
    mb = params.mat @ b
    base = _crossings(b, mb)
    new = np.array([bits[i] ^ base ^ _crossings(b, pts[i]) ^ _crossings(mb, raw[i])
                    for i in range(pts.shape[0])])
    if single:
        return out[0], int(new[0])
    return out, new


def smooth_map_g(params, x):
    pts, single = _pts(x)
    out = _s.step_many(pts, False, *params.kernel_args)
    return out[0] if single else out


def g_inverse(params, x):
    pts, single = _pts(x)
    out = _s.step_many(pts, True, *params.kernel_args)
    return out[0] if single else out


def jacobian_g(params, x, inverse=False):
    """Eigenframe matrix of dg_x (or of d(g^-1)_x)."""
    pts, single = _pts(x)
    out = _s.jac_many(pts, inverse, params.geo, params.frame, MARKED_POINTS)
    return out[0] if single else out


def dg(params, x, v):
    jac = jacobian_g(params, x)
    if jac.ndim == 2:
        return jac @ np.asarray(v, dtype=float)
    return np.einsum("nij,nj->ni", jac, _vecs(v, jac.shape[0]))


def dg_inverse(params, x, v):
    """Derivative of g^-1 at x applied to v."""
    jac = jacobian_g(params, x, inverse=True)
    if jac.ndim == 2:
        return jac @ np.asarray(v, dtype=float)
    return np.einsum("nij,nj->ni", jac, _vecs(v, jac.shape[0]))


def orbit(params, x, n, inverse=False):
    """Table with columns step, x1, x2, chartflag, s1, s2 (n + 1 rows)."""
    pts, _ = _pts(x)
    tab = _s.orbit(pts[0, 0], pts[0, 1], int(n), inverse, *params.kernel_args)
    return np.column_stack([np.arange(n + 1), tab])


def write_orbit_csv(path, table):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "x1", "x2", "chartflag", "s1", "s2"])
        for row in table:
            w.writerow([int(row[0]), repr(row[1]), repr(row[2]), int(row[3]),
                        repr(row[4]), repr(row[5])])


def zeta_density(params, x):
    """Downstairs area density of the invariant volume (1 away from the slow region)."""
    idx, z = chart_coordinates(params, x)
    idx = np.atleast_1d(idx)
    z = np.atleast_2d(z)
    u = 0.25 * (z ** 2).sum(axis=1)
    out = np.ones(len(idx))
    inside = (idx >= 0) & (u < params.profile.u0) & params.slowdown
    if np.any(inside & (u == 0)):
        raise DomainError("density is infinite at a marked point")
    if np.any(inside):
        out[inside] = 1.0 / psi(params.profile, u[inside])
    return float(out[0]) if np.ndim(x) == 1 else out


def _disk_mass(params):
    """Volume of one slow disk |s| < rt0, measured in torus area."""
    prof = params.profile
    val, _ = quad(lambda r: r / psi(prof, r * r), 0.0, prof.rt0,
                  points=[prof.rt1], epsabs=0.0, epsrel=1e-13, limit=200)
    return 4.0 * 2.0 * math.pi * val


def total_volume(params):
    if not params.slowdown:
        return 1.0
    rt0 = params.profile.rt0
    return 1.0 - 4.0 * math.pi * (2.0 * rt0) ** 2 + 4.0 * _disk_mass(params)


def sample_zeta_volume(params, n, seed):
    """i.i.d. samples of the normalized invariant volume; deterministic in seed."""
    n = int(n)
    if n < 0:
        raise ValueError("n must be non-negative")
    if n == 0:
        return np.empty((0, 2))
    rng = np.random.default_rng(seed)
    if not params.slowdown:
        return rng.random((n, 2))
    prof = params.profile
    rt0 = prof.rt0
    outer = 1.0 - 4.0 * math.pi * (2.0 * rt0) ** 2
    inner = 4.0 * _disk_mass(params)
    n_in = rng.binomial(n, inner / (outer + inner))
    out = np.empty((n, 2))
    # outside the slow disks the density is 1: uniform with rejection
    got = 0
    n_out = n - n_in
    while got < n_out:
        cand = rng.random((max(64, int(1.1 * (n_out - got)) + 16), 2))
        keep = ~in_slow_region(params, cand)
        cand = cand[keep][: n_out - got]
        out[got:got + len(cand)] = cand
        got += len(cand)
    # inside: radial density 2 pi r / psi(r^2) <= pi on (0, rt0) (psi >= 2r for p = 4)
    got = 0
    rad = np.empty(n_in)
    while got < n_in:
        m = max(64, int(1.2 * (n_in - got)) + 16)
        r = rng.random(m) * rt0
        acc = rng.random(m) < 2.0 * r / psi(prof, r * r)
        r = r[acc][: n_in - got]
        rad[got:got + len(r)] = r
        got += len(r)
    ang = rng.random(n_in) * 2.0 * math.pi
    which = rng.integers(0, 4, n_in)
    zu = 2.0 * rad * np.cos(ang)
    zs = 2.0 * rad * np.sin(ang)
    disp = zu[:, None] * params.frame[0] + zs[:, None] * params.frame[1]
    out[n_out:] = np.mod(MARKED_POINTS[which] + disp, 1.0)
    perm = rng.permutation(n)
    return out[perm]


def dist(x, y):
    """Flat torus distance (vectorized over leading axes)."""
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    d -= np.round(d)
    out = np.sqrt((d ** 2).sum(axis=-1))
    return float(out) if out.ndim == 0 else out
