"""Inducing scheme for g: base rectangle, first returns and s-set bookkeeping.

The base P is an eigenframe rectangle away from the chart disks.  A seed
x in P is iterated until it returns; its branch records the return time,
the itinerary of visits to the chart disks (the set U_0) and the Birkhoff
sum of log J^u.  Branches are grouped into s-sets by a discrete key:

    (tau, number of disk visits, hash of the visit record, interval id)

where the visit record lists chart index, entry and exit step and the
quadrant of the sector coordinate at entry, and the interval id numbers the
maximal runs of consecutive grid seeds on the unstable segment through the
center that share the same (tau, visit record).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _surface as _s
from . import _tower as _t
from .reports import LemmaReport, linear_fit, write_csv, write_json
from .surface import MARKED_POINTS, SHEET_BASE, jacobian_g

DEFAULT_SIZE = (0.05, 0.05)
DEFAULT_N_MAX = 5000
N_BACK = 60


class RectangleError(ValueError):
    """Rectangle rejected; ``point`` and ``iterate`` locate the failure when known."""

    def __init__(self, message, point=None, iterate=None):
        super().__init__(message)
        self.point = point
        self.iterate = iterate


@dataclass
class Rectangle:
    center: np.ndarray
    u_halflength: float
    s_halflength: float
    Q: int = 0
    Q_ok: bool = False
    q_max: int = 0

    def as_array(self):
        return np.array([self.center[0], self.center[1], self.u_halflength, self.s_halflength])

    @property
    def area(self):
        return 4.0 * self.u_halflength * self.s_halflength

    def point(self, params, zu, zs):
        """Torus point with eigenframe offsets (zu, zs) from the center."""
        zu = np.asarray(zu, dtype=float)
        zs = np.asarray(zs, dtype=float)
        x = self.center + zu[..., None] * params.e_u + zs[..., None] * params.e_s
        return np.mod(x, 1.0)

    def coords(self, params, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        d = x - self.center
        d -= np.floor(d + 0.5)
        return d @ params.frame.T

    def contains(self, params, x):
        z = self.coords(params, x)
        return (np.abs(z[:, 0]) < self.u_halflength) & (np.abs(z[:, 1]) < self.s_halflength)


@dataclass
class ReturnBranch:
    seed: tuple
    tau: int
    itinerary: tuple
    sset_key: tuple
    birkhoff_logJu: float
    L: int = 0
    slow_steps: int = 0
    max_step_logJu: float = 0.0
    return_point: tuple = ()
    u_coord: float = 0.0
    on_grid: bool = False


class BranchSet(list):
    """List of returning branches plus the sampling bookkeeping."""

    def __init__(self, items=(), params=None, rect=None, n_seeds=0, n_none=0, n_max=0,
                 grid_density=0, spacing=0.0):
        super().__init__(items)
        self.params = params
        self.rect = rect
        self.n_seeds = n_seeds
        self.n_none = n_none
        self.n_max = n_max
        self.grid_density = grid_density
        self.spacing = spacing

    @property
    def none_fraction(self):
        return self.n_none / self.n_seeds if self.n_seeds else 0.0


@dataclass
class TowerStats:
    S_n: dict
    h_fit: float
    r2: float
    kac_sum: float
    kac_partial: list = field(default_factory=list)
    n_keys: int = 0
    log_lambda: float = float("nan")

    @property
    def h_below_log_lambda(self):
        return self.h_fit < self.log_lambda


@dataclass
class SlowBranch:
    """Return branch built around a point w of the slow region.

    ``orbit`` runs from the branch start in P to the return; ``depth_logs[n]``
    is the log expansion of the contracting direction at the start under the
    opposite map up to its n-th earlier visit to P.
    """

    orbit: np.ndarray
    w_index: int
    depth_logs: np.ndarray
    inverse: bool = False

    @property
    def tau(self):
        return len(self.orbit) - 1


# ------------------------------------------------------------------ rectangle

def _box_distance(params, center, hu, hs, point):
    best = np.inf
    for a in (-1, 0, 1):
        for b in (-1, 0, 1):
            z = params.frame @ (np.asarray(point) + (a, b) - center)
            du = max(abs(z[0]) - hu, 0.0)
            ds = max(abs(z[1]) - hs, 0.0)
            best = min(best, math.hypot(du, ds))
    return best


def _box_hits_disk(params, ck, hu, hs):
    """True when the eigenframe box (ck, hu, hs) comes within the disk radius of S."""
    zr = params.disk_radius
    eu, es = params.e_u, params.e_s
    wu, ws = hu + zr, hs + zr
    reach = abs(eu[0]) * wu + abs(es[0]) * ws
    for m in MARKED_POINTS:
        n1 = np.arange(math.floor(ck[0] - m[0] - reach), math.ceil(ck[0] - m[0] + reach) + 1)
        y1 = m[0] + n1 - ck[0]
        # |es . (y - ck)| < ws fixes y2 to a short interval per column
        mid = -es[0] * y1 / es[1]
        half = ws / abs(es[1])
        lo = np.floor(mid - half + ck[1] - m[1]).astype(np.int64)
        for j in range(int(np.ceil(2 * half)) + 2):
            y2 = m[1] + lo + j - ck[1]
            zu = eu[0] * y1 + eu[1] * y2
            zs = es[0] * y1 + es[1] * y2
            d = np.hypot(np.maximum(np.abs(zu) - hu, 0.0), np.maximum(np.abs(zs) - hs, 0.0))
            if np.any(d <= zr):
                return True
    return False


def rectangle_entry_time(params, center, hu, hs, cap=64):
    """First n with g^n(P) meeting U_0, or cap + 1; exact for the closed box.

    Until the first entry g agrees with f, so g^n(P) is the box centered at
    M^n c with half-lengths lam^n hu and lam^-n hs.
    """
    c = np.mod(np.asarray(center, dtype=float), 1.0)
    lam = params.lam
    for n in range(cap + 1):
        if lam ** n * hu > 1e6:
            # such a box passes within any fixed distance of every point
            return n
        if _box_hits_disk(params, c, lam ** n * hu, lam ** -n * hs):
            return n
        c = np.mod(params.mat @ c, 1.0)
    return cap + 1


def choose_rectangle(params, size_spec=DEFAULT_SIZE, center=None, q=None, q_cap=64):
    """Rectangle with edges along e_u, e_s none of whose points enters U_0 within q steps.

    ``q`` defaults to ``params.q_min``.  ``q_max`` is the largest q the
    rectangle supports (capped at ``q_cap``).  The check covers every point
    of the closed rectangle, so shrinking it can only raise ``q_max``.
    """
    hu, hs = (size_spec, size_spec) if np.isscalar(size_spec) else size_spec
    hu = float(hu)
    hs = float(hs)
    if hu <= 0 or hs <= 0:
        raise RectangleError("size_spec must be positive")
    c = np.mod(np.asarray(SHEET_BASE if center is None else center, dtype=float), 1.0)
    q = int(params.q_min if q is None else q)
    for m in MARKED_POINTS:
        dd = _box_distance(params, c, hu, hs, m)
        if dd <= params.disk_radius:
            raise RectangleError(
                f"rectangle meets the disk around {tuple(m)} (clearance {dd:.4g} <= "
                f"{params.disk_radius:.4g})", point=tuple(m), iterate=0)
    entry = rectangle_entry_time(params, c, hu, hs, max(q_cap, q))
    if entry <= q:
        raise RectangleError(
            f"iterate {entry} of the rectangle meets U_0, so Q = {q} fails "
            f"(largest supported Q is {entry - 1})", iterate=entry)
    return Rectangle(c, hu, hs, Q=q, Q_ok=True, q_max=entry - 1)


# -------------------------------------------------------------- first returns

def _run_returns(params, rect, pts, n_max):
    pts = np.ascontiguousarray(pts, dtype=float)
    dirs, _ = _s.unstable_dirs(pts, N_BACK, *params.kernel_args)
    ra = rect.as_array()
    vbuf = np.zeros((max(64, 8 * len(pts)), 4), dtype=np.int64)
    start = 0
    ints_all = np.zeros((len(pts), 5), dtype=np.int64)
    flts_all = np.zeros((len(pts), 4))
    visits = []
    while start < len(pts):
        vbuf[:] = 0
        ints, flts, nxt = _t.first_return_many(pts, dirs, int(n_max), ra, vbuf, start,
                                               *params.kernel_args)
        ints_all[start:nxt] = ints[start:nxt]
        flts_all[start:nxt] = flts[start:nxt]
        used = ints[nxt - 1, 4] + ints[nxt - 1, 1] if nxt > start else 0
        base = sum(len(v) for v in visits)
        ints_all[start:nxt, 4] += base
        visits.append(vbuf[:used].copy())
        if nxt == start:
            vbuf = np.zeros((2 * vbuf.shape[0], 4), dtype=np.int64)
        start = nxt
    vis = np.concatenate(visits) if visits else np.zeros((0, 4), dtype=np.int64)
    return ints_all, flts_all, vis


def first_return(params, rect, x, n_max=DEFAULT_N_MAX):
    """ReturnBranch for x in the interior of P, or None when it does not return."""
    x = np.mod(np.asarray(x, dtype=float).reshape(1, 2), 1.0)
    if not rect.contains(params, x)[0]:
        raise ValueError("x must lie in the interior of the rectangle")
    ints, flts, vis = _run_returns(params, rect, x, n_max)
    if ints[0, 0] < 0:
        return None
    u = float(rect.coords(params, x)[0, 0])
    return _make_branch(x[0], ints[0], flts[0], vis, (int(ints[0, 0]), int(ints[0, 1]),
                                                      int(ints[0, 3]), 0), u, False)


def _itinerary(tau, L, off, vis):
    it = [0]
    for row in vis[off:off + L]:
        it.extend((int(row[1]), int(row[2])))
    it.append(int(tau))
    return tuple(it)


def _make_branch(x, ints, flts, vis, key, u, on_grid):
    tau, L, slow, _, off = (int(v) for v in ints)
    return ReturnBranch(
        seed=(float(x[0]), float(x[1])), tau=tau, itinerary=_itinerary(tau, L, off, vis),
        sset_key=key, birkhoff_logJu=float(flts[0]), L=L, slow_steps=slow,
        max_step_logJu=float(flts[1]), return_point=(float(flts[2]), float(flts[3])),
        u_coord=u, on_grid=on_grid)


def enumerate_branches(params, rect, grid_density, n_max=DEFAULT_N_MAX, seed=0, n_random=None):
    """Branches from a grid on the unstable segment through the center plus random seeds."""
    if not rect.Q_ok:
        raise RectangleError("rectangle has not been validated")
    g = int(grid_density)
    n_random = g if n_random is None else int(n_random)
    if g <= 0 and n_random <= 0:
        return BranchSet(params=params, rect=rect, n_max=n_max, grid_density=g)
    hu, hs = rect.u_halflength, rect.s_halflength
    spacing = 2.0 * hu / max(g, 1)
    ug = -hu + (np.arange(g) + 0.5) * spacing
    rng = np.random.default_rng(seed)
    ur = rng.uniform(-hu, hu, n_random)
    sr = rng.uniform(-hs, hs, n_random)
    pts = np.vstack([rect.point(params, ug, np.zeros(g)).reshape(-1, 2),
                     rect.point(params, ur, sr).reshape(-1, 2)])
    ints, flts, vis = _run_returns(params, rect, pts, n_max)
    sig = [(int(a), int(b), int(c)) for a, b, c in ints[:, [0, 1, 3]]]
    run = np.full(g, -1)
    rid = -1
    for j in range(g):
        if j == 0 or sig[j] != sig[j - 1] or sig[j][0] < 0:
            rid += 1
        run[j] = rid
    out = BranchSet(params=params, rect=rect, n_seeds=len(pts), n_max=n_max,
                    grid_density=g, spacing=spacing)
    for i in range(len(pts)):
        if ints[i, 0] < 0:
            out.n_none += 1
            continue
        if i < g:
            ident = int(run[i])
            u = float(ug[i])
        else:
            u = float(ur[i - g])
            ident = None
            j = int(math.floor((u + hu) / spacing - 0.5)) if g else -1
            for c in (j, j + 1):
                if 0 <= c < g and sig[c] == sig[i]:
                    ident = int(run[c])
                    break
            if ident is None:
                rid += 1
                ident = rid
        key = sig[i] + (ident,)
        out.append(_make_branch(pts[i], ints[i], flts[i], vis, key, u, i < g))
    return out


def tower_stats(branches):
    """S_n over distinct keys, least-squares growth exponent and Kac partial sums."""
    if len(branches) == 0:
        raise ValueError("need at least one branch")
    reps = {}
    counts = {}
    for b in branches:
        reps.setdefault(b.sset_key, b)
        counts[b.sset_key] = counts.get(b.sset_key, 0) + 1
    s_n = {}
    for k in reps:
        s_n[k[0]] = s_n.get(k[0], 0) + 1
    ns = np.array(sorted(s_n))
    h, _, r2 = linear_fit(ns, np.log([s_n[n] for n in ns]))
    total = getattr(branches, "n_seeds", 0) or len(branches)
    kac = {}
    for k, c in counts.items():
        kac[k[0]] = kac.get(k[0], 0.0) + k[0] * c / total
    partial = np.cumsum([kac[n] for n in ns])
    params = getattr(branches, "params", None)
    return TowerStats(S_n={int(n): int(s_n[n]) for n in ns}, h_fit=float(h), r2=float(r2),
                      kac_sum=float(partial[-1]),
                      kac_partial=[(int(n), float(v)) for n, v in zip(ns, partial)],
                      n_keys=len(reps),
                      log_lambda=params.loglam if params is not None else float("nan"))


def representatives(branches):
    """One branch per s-set key (the first seen)."""
    reps = {}
    for b in branches:
        reps.setdefault(b.sset_key, b)
    return list(reps.values())


# ------------------------------------------------------------ branch geometry

def sample_slow_points(params, n, rng, log_floor=None):
    """Area-uniform points of the slow region.

    With ``log_floor`` set, half of them are log-radial down to
    log_floor * rt0 instead (these dwell much longer).
    """
    rt0 = params.profile.rt0
    na = n if log_floor is None else n // 2
    r = np.concatenate([rt0 * np.sqrt(rng.random(na)),
                        rt0 * np.exp(rng.uniform(math.log(log_floor or 1.0), 0.0, n - na))])
    ang = rng.random(n) * 2.0 * math.pi
    which = rng.integers(0, 4, n)
    z = 2.0 * np.column_stack([r * np.cos(ang), r * np.sin(ang)])
    return np.mod(MARKED_POINTS[which] + z @ params.frame, 1.0)


def slow_branches(params, rect, n, seed, depth=100, cap=20000, inverse=False):
    """Return branches of g (or of g^-1) whose orbit passes through the slow region."""
    rng = np.random.default_rng(seed)
    ws = sample_slow_points(params, int(n), rng)
    ra = rect.as_array()
    out = []
    buf = np.empty((2 * cap + 2, 2))
    for i, w in enumerate(ws):
        ln, _, st = _t.branch_through(w[0], w[1], inverse, ra, cap, depth, buf,
                                      *params.kernel_args)
        if st != 0:
            continue
        orb = buf[:ln].copy()
        v = contracting_dirs(params, orb[:1], inverse)[0]
        logs = _t.backward_returns(orb[0, 0], orb[0, 1], v[0], v[1], inverse, ra, int(depth),
                                   cap, *params.kernel_args)
        out.append(SlowBranch(orb, i, logs, inverse))
    return out


def branch_orbit(params, branch):
    """Orbit of a branch from its start in P to its return."""
    if isinstance(branch, SlowBranch):
        return branch.orbit
    tab = _s.orbit(branch.seed[0], branch.seed[1], int(branch.tau), False, *params.kernel_args)
    return np.ascontiguousarray(tab[:, :2])


def expanding_dirs(params, pts, inverse=False):
    pts = np.ascontiguousarray(pts, dtype=float)
    if inverse:
        return _s.stable_dirs(pts, N_BACK, *params.kernel_args)[0]
    return _s.unstable_dirs(pts, N_BACK, *params.kernel_args)[0]


def contracting_dirs(params, pts, inverse=False):
    return expanding_dirs(params, pts, not inverse)


@dataclass
class BranchTangents:
    """Tangent data along a branch orbit x_0, ..., x_tau of the map (g or g^-1).

    ``jac[n]`` is the map's eigenframe Jacobian at x_n; ``u[n]`` the unit
    expanding vector at x_n pushed from x_0 and ``log_u[n]`` its stretch;
    ``s[n]`` the unit contracting vector at x_n pulled back from the return
    and ``log_s[n]`` the log of its one-step contraction.
    """

    orbit: np.ndarray
    jac: np.ndarray
    u: np.ndarray
    log_u: np.ndarray
    s: np.ndarray
    log_s: np.ndarray


def branch_tangents(params, orbit, inverse=False):
    orbit = np.ascontiguousarray(orbit)
    jac = jacobian_g(params, orbit[:-1], inverse=inverse).reshape(-1, 2, 2)
    u0 = expanding_dirs(params, orbit[:1], inverse)[0]
    u, log_u = _t.push_series(jac, u0[0], u0[1])
    se = contracting_dirs(params, orbit[-1:], inverse)[0]
    s, log_s = _t.pull_series(jac, se[0], se[1])
    return BranchTangents(orbit, jac, u, log_u, s, log_s)


def partner_orbit(params, tangents, eps, direction="s"):
    """Linearized partner y_n = x_n + delta_n with delta_0 = eps * (s_0 or u_0).

    The offsets are carried as (unit vector, log length) so that neither the
    stable nor the unstable one loses precision over long branches.
    """
    if direction == "s":
        vec, steps = tangents.s, tangents.log_s
    else:
        vec, steps = tangents.u, tangents.log_u
    logs = np.concatenate([[0.0], np.cumsum(steps)])
    delta = vec * (eps * np.exp(logs))[:, None]
    y = np.mod(tangents.orbit + delta @ params.frame, 1.0)
    return y, delta


def signed_log_distortion(params, tangents, eps, inverse=False):
    """(log |D|, sign) for D = log J(y) - log J(x) over the branch, y the stable
    partner at offset eps, to first order in eps; (-inf, 0) when no step is nonlinear."""
    val, sign, _ = _t.linear_distortion(np.ascontiguousarray(tangents.orbit), tangents.u,
                                        tangents.log_u, tangents.s, tangents.log_s,
                                        math.log(eps), inverse, params.geo, params.frame,
                                        MARKED_POINTS)
    return float(val), float(sign)


def log_distortion(params, tangents, eps, inverse=False):
    return signed_log_distortion(params, tangents, eps, inverse)[0]


def distortion(params, tangents, eps, inverse=False):
    return math.exp(log_distortion(params, tangents, eps, inverse))


# ------------------------------------------------------------------- checks

def _sample(branches, n, rng):
    n = min(int(n), len(branches))
    if n == 0:
        return []
    idx = rng.choice(len(branches), n, replace=False)
    return [branches[i] for i in sorted(idx)]


def _distortion_fit(params, rect, n_pairs, seed, inverse, depth, eps, max_rounds=8):
    """Fit log D_n = n log kappa + log c over n_pairs admissible slow branches.

    Seeds whose branch does not close within the step cap are skipped and
    replaced by fresh ones, up to ``max_rounds`` batches.
    """
    rng = np.random.default_rng(seed + 1)
    d0 = 2.0 * (rect.u_halflength if inverse else rect.s_halflength)
    xs, ys = [], []
    raw = []
    tried = 0
    for rnd in range(max_rounds):
        need = n_pairs - len(xs)
        if need <= 0:
            break
        batch = max(16, int(need * 1.7))
        tried += batch
        for b in slow_branches(params, rect, batch, seed + 7919 * rnd, depth=depth,
                               inverse=inverse):
            if len(xs) >= n_pairs:
                break
            tg = branch_tangents(params, b.orbit, inverse)
            ld = log_distortion(params, tg, eps, inverse)
            raw.append(ld - math.log(eps))
            ok = np.nonzero(np.isfinite(b.depth_logs))[0]
            if not math.isfinite(ld) or ok.size == 0:
                continue
            n = int(rng.choice(ok))
            xs.append(n)
            ys.append(ld - math.log(eps) + math.log(d0) - b.depth_logs[n])
    if len(xs) < 2:
        if raw and all(v == -math.inf for v in raw):
            # every sampled branch is linear: D_n = 0 for all n
            return {"pairs": len(raw), "seeds": tried, "kappa": 0.0, "c": 0.0,
                    "r2": float("nan"), "all_zero": True}
        return {"pairs": len(xs), "kappa": float("nan"), "c": float("nan"), "r2": float("nan")}
    k, c, r2 = linear_fit(np.array(xs, float), np.array(ys))
    return {"pairs": len(xs), "seeds": tried, "kappa": math.exp(k), "log_kappa": k,
            "c": math.exp(c), "r2": r2,
            "max_log_distortion_per_unit": float(max(raw)) if raw else float("-inf")}


def _contraction_factors(params, branches, inverse=False):
    """Per branch: contraction of the stable direction and of u under the inverse."""
    a_s, a_u = [], []
    for b in branches:
        orb = branch_orbit(params, b)
        tg = branch_tangents(params, orb, inverse)
        a_s.append(math.exp(float(np.sum(tg.log_s))))
        a_u.append(math.exp(-float(np.sum(tg.log_u))))
    return np.array(a_s), np.array(a_u)


def markov_crossing_fraction(params, branches):
    """Share of grid runs whose g^tau image spans the rectangle's u-extent (within one image step)."""
    rect = branches.rect
    runs = {}
    for b in branches:
        if b.on_grid:
            runs.setdefault(b.sset_key, []).append(b)
    full = 0
    tested = 0
    for group in runs.values():
        if len(group) < 2:
            continue
        tested += 1
        ends = rect.coords(params, [group[0].return_point, group[-1].return_point])[:, 0]
        step = branches.spacing * math.exp(group[0].birkhoff_logJu)
        if abs(ends[1] - ends[0]) + step >= 2.0 * rect.u_halflength:
            full += 1
    return full / tested if tested else float("nan"), tested


def check_tower_conditions(params, rect, branches, pairs=1000, seed=0, depth=100, eps=1e-9):
    """Contraction along stable/unstable leaves and decay of distortion.

    Random branches and branches routed through the slow region are both used
    for contraction.  The forward distortion fit uses stable pairs of g, the
    backward one the same construction for g^-1; each yields a fit
    log D_n = log c + n log kappa.
    """
    rng = np.random.default_rng(seed)
    picked = _sample(branches, pairs, rng)
    slow = slow_branches(params, rect, max(1, pairs // 10), seed + 7, depth=2)
    a_s, a_u = _contraction_factors(params, picked + slow)
    y4a = _distortion_fit(params, rect, pairs, seed + 11, False, depth, eps)
    y4b = _distortion_fit(params, rect, pairs, seed + 13, True, depth, eps)
    frac, tested = markov_crossing_fraction(params, branches) if isinstance(branches, BranchSet) \
        else (float("nan"), 0)
    det = {"stable_contraction_max": float(a_s.max()) if a_s.size else float("nan"),
           "unstable_contraction_max": float(a_u.max()) if a_u.size else float("nan"),
           "contraction_pairs": int(a_s.size), "distortion_forward": y4a, "distortion_backward": y4b,
           "markov_full_crossing_fraction": frac, "markov_runs_tested": tested}
    viol = 0
    margins = []
    for key in ("stable_contraction_max", "unstable_contraction_max"):
        v = det[key]
        margins.append(1.0 - v)
        viol += int(not (v < 1.0))
    for fit in (y4a, y4b):
        margins.append(1.0 - fit["kappa"] if math.isfinite(fit["kappa"]) else -math.inf)
        viol += int(not (fit["kappa"] < 1.0))
        if fit.get("all_zero"):
            continue
        margins.append(fit["r2"] - 0.9 if math.isfinite(fit["r2"]) else -math.inf)
        viol += int(not (fit["r2"] >= 0.9))
    return LemmaReport("tower_conditions", int(a_s.size) + y4a["pairs"] + y4b["pairs"], viol,
                       float(min(margins)), details=det)


def _intermediate_ratio(params, orbit, inverse=False):
    """max_j |delta_j| / max(|delta_0|, |delta_tau|) for stable and unstable tangent pairs."""
    tg = branch_tangents(params, orbit, inverse)
    out = []
    for steps in (tg.log_s, tg.log_u):
        logs = np.concatenate([[0.0], np.cumsum(steps)])
        out.append(float(math.exp(logs.max() - max(logs[0], logs[-1]))))
    return out


def check_intermediate_bound(params, branches, pairs=1000, seed=0):
    """Intermediate distances along a branch against the endpoint distances.

    Pairs are infinitesimal (tangent) pairs along the stable and unstable
    directions of sampled branches and of branches through the slow region.
    K is reported for ``pairs`` and for twice as many samples.
    """
    rng = np.random.default_rng(seed)
    rect = branches.rect
    res = {}
    for tag, n in (("K", pairs), ("K_doubled", 2 * pairs)):
        bs = _sample(branches, n, rng)
        sl = slow_branches(params, rect, max(1, n // 10), seed + n, depth=2) if rect else []
        vals = np.array([_intermediate_ratio(params, branch_orbit(params, b)) for b in bs + sl])
        if vals.size == 0:
            res[tag] = {"stable": 0.0, "unstable": 0.0, "K": 0.0, "pairs": 0}
            continue
        res[tag] = {"stable": float(vals[:, 0].max()), "unstable": float(vals[:, 1].max()),
                    "K": float(vals.max()), "pairs": int(len(vals))}
    k1, k2 = res["K"]["K"], res["K_doubled"]["K"]
    stable = bool(k1 > 0 and abs(k2 / k1 - 1.0) <= 0.2)
    res["doubling_ratio"] = k2 / k1 if k1 > 0 else float("nan")
    res["stable_under_doubling"] = stable
    viol = int(not (math.isfinite(k1) and math.isfinite(k2))) + int(not stable)
    return LemmaReport("intermediate_bound", res["K"]["pairs"] + res["K_doubled"]["pairs"], viol,
                       0.2 - abs(res["doubling_ratio"] - 1.0), details=res)


# -------------------------------------------------------------------- output

def write_branch_csv(path, branches):
    rows = [("|".join(str(v) for v in b.sset_key), b.tau, b.L, repr(b.birkhoff_logJu),
             repr(b.seed[0]), repr(b.seed[1])) for b in branches]
    write_csv(path, ["sset_key", "tau", "L", "birkhoff_logJu", "seed_x1", "seed_x2"], rows)


def write_stats_json(path, stats, extra=None):
    payload = {"S_n": stats.S_n, "h_fit": stats.h_fit, "r2": stats.r2,
               "kac_sum": stats.kac_sum, "kac_partial": stats.kac_partial,
               "n_keys": stats.n_keys, "log_lambda": stats.log_lambda}
    if extra:
        payload.update(extra)
    write_json(path, payload)
