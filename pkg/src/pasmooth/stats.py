"""Decay of correlations and CLT checks from i.i.d.-start ensembles.

Observables are built-ins evaluated inside compiled loops; each carries a
kind code and a parameter vector:

    sine      sin(2 pi k x_i)
    bump      exp(-|x - c|^2 / (2 w^2)) on the flat torus
    distpow   min(dist(x, marked points), cap) ** beta    (Hoelder, not Lipschitz)
    constant  c
    cobound   sin(2 pi k (g x)_i) - sin(2 pi k x_i)       (a coboundary)
"""

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import stats as sps

from . import _surface as _s
from .reports import linear_fit, write_csv, write_json
from .surface import sample_zeta_volume

SINE, BUMP, DISTPOW, CONST, COBOUND = range(5)


@dataclass(frozen=True)
class Observable:
    name: str
    kind: int
    par: tuple
    holder_only: bool = False

    @property
    def args(self):
        return self.kind, np.array(self.par, dtype=float)

    def __call__(self, params, x):
        x = np.ascontiguousarray(np.atleast_2d(x), dtype=float)
        return _eval_many(x, *self.args, *params.kernel_args)


def sine(coord=0, freq=1):
    return Observable(f"sin(2pi*{freq}*x{coord + 1})", SINE, (coord, freq))


def bump(center=(0.25, 0.25), width=0.1):
    return Observable(f"bump{tuple(center)}w{width}", BUMP, (center[0], center[1], width))


def distance_power(beta=0.5, cap=0.25):
    return Observable(f"dist^{beta}", DISTPOW, (beta, cap), holder_only=beta < 1)


def constant(c=1.0):
    return Observable(f"const{c}", CONST, (c,))


def sine_coboundary(coord=0, freq=1):
    return Observable(f"cobound-sin{coord + 1}", COBOUND, (coord, freq))


@njit(cache=True)
def _eval(x1, x2, kind, par, geo, mat, minv, frame, marks):
    if kind == SINE:
        v = x1 if par[0] == 0 else x2
        return math.sin(2.0 * math.pi * par[1] * v)
    if kind == BUMP:
        d1 = x1 - par[0]
        d1 -= math.floor(d1 + 0.5)
        d2 = x2 - par[1]
        d2 -= math.floor(d2 + 0.5)
        return math.exp(-(d1 * d1 + d2 * d2) / (2.0 * par[2] * par[2]))
    if kind == DISTPOW:
        best = 1.0
        for k in range(marks.shape[0]):
            d1 = x1 - marks[k, 0]
            d1 -= math.floor(d1 + 0.5)
            d2 = x2 - marks[k, 1]
            d2 -= math.floor(d2 + 0.5)
            best = min(best, math.sqrt(d1 * d1 + d2 * d2))
        return min(best, par[1]) ** par[0]
    if kind == CONST:
        return par[0]
    y1, y2, _ = _s.g_step(x1, x2, False, geo, mat, minv, frame, marks)
    a = x1 if par[0] == 0 else x2
    b = y1 if par[0] == 0 else y2
    return math.sin(2.0 * math.pi * par[1] * b) - math.sin(2.0 * math.pi * par[1] * a)


@njit(cache=True)
def _eval_many(pts, kind, par, geo, mat, minv, frame, marks):
    out = np.empty(pts.shape[0])
    for i in range(pts.shape[0]):
        out[i] = _eval(pts[i, 0], pts[i, 1], kind, par, geo, mat, minv, frame, marks)
    return out


@njit(cache=True)
def _lagged(pts, max_lag, kind, par, geo, mat, minv, frame, marks):
    """h(g^n x_i) for n = 0..max_lag."""
    m = pts.shape[0]
    out = np.empty((max_lag + 1, m))
    for i in range(m):
        x1 = pts[i, 0]
        x2 = pts[i, 1]
        for n in range(max_lag + 1):
            out[n, i] = _eval(x1, x2, kind, par, geo, mat, minv, frame, marks)
            if n < max_lag:
                x1, x2, _ = _s.g_step(x1, x2, False, geo, mat, minv, frame, marks)
    return out


@njit(cache=True)
def _birkhoff(pts, n, kind, par, geo, mat, minv, frame, marks):
    out = np.empty(pts.shape[0])
    for i in range(pts.shape[0]):
        x1 = pts[i, 0]
        x2 = pts[i, 1]
        acc = 0.0
        for _ in range(n):
            acc += _eval(x1, x2, kind, par, geo, mat, minv, frame, marks)
            x1, x2, _ = _s.g_step(x1, x2, False, geo, mat, minv, frame, marks)
        out[i] = acc
    return out


# ------------------------------------------------------------------ samplers

class Sampler:
    """i.i.d. initial points; ``name`` is 'mu0' (conjugacy) or 'mu1' (volume)."""

    def __init__(self, name, draw):
        self.name = name
        self._draw = draw

    def __call__(self, n, seed):
        return np.ascontiguousarray(self._draw(int(n), seed), dtype=float)


def volume_sampler(params):
    return Sampler("mu1", lambda n, seed: sample_zeta_volume(params, n, seed))


def mme_sampler(params, approx=None, validate_first=True):
    """Sampler for H_* Lebesgue; refuses to run when the conjugacy fails validation."""
    from .conjugacy import ConjugacyApprox, ConjugacyError, sample_mme, validate
    approx = approx or ConjugacyApprox()
    if validate_first and "passed" not in approx.stats:
        validate(params, approx, n_points=2000, n_visiting=100)
    if validate_first and not approx.stats.get("passed", False):
        raise ConjugacyError("conjugacy validation failed; mu0 statistics disabled")
    return Sampler("mu0", lambda n, seed: sample_mme(params, approx, n, seed))


# ---------------------------------------------------------------- reports

@dataclass
class CorrelationReport:
    sampler: str
    observable: str
    lags: np.ndarray = None
    C: np.ndarray = None
    err: np.ndarray = None
    kappa: float = float("nan")
    r2: float = float("nan")
    conclusive: bool = False
    fit_lags: list = field(default_factory=list)
    ks: float = float("nan")
    sigma: float = float("nan")
    details: dict = field(default_factory=dict)

    def summary(self):
        return {"sampler": self.sampler, "observable": self.observable, "kappa": self.kappa,
                "r2": self.r2, "conclusive": self.conclusive, "fit_lags": self.fit_lags,
                "ks": self.ks, "sigma": self.sigma, **self.details}


def correlations(params, sampler, h1, h2, lags, n_samples, seed, min_fit_points=3):
    """C_n = E[h1(g^n x) h2(x)] - E[h1(g^n x)] E[h2(x)] with Monte Carlo error bars.

    The exponential fit uses the lags with |C_n| above 3 standard errors;
    fewer than ``min_fit_points`` such lags make the fit inconclusive.
    """
    lags = np.asarray(sorted(set(int(v) for v in lags)))
    x = sampler(n_samples, seed)
    a = _lagged(x, int(lags.max()), *h1.args, *params.kernel_args)[lags]
    b = _eval_many(x, *h2.args, *params.kernel_args)
    bc = b - b.mean()
    ac = a - a.mean(axis=1)[:, None]
    prod = ac * bc[None, :]
    n = len(b)
    C = prod.sum(axis=1) / n
    err = prod.std(axis=1, ddof=1) / math.sqrt(n)
    rep = CorrelationReport(sampler.name, f"{h1.name}|{h2.name}", lags, C, err)
    above = np.abs(C) > 3.0 * err
    rep.fit_lags = [int(v) for v in lags[above]]
    rep.details = {"n_samples": n, "noise_floor": (3.0 * err).tolist()}
    if above.sum() >= min_fit_points:
        k, c, r2 = linear_fit(lags[above].astype(float), np.log(np.abs(C[above])))
        rep.kappa, rep.r2, rep.conclusive = math.exp(k), r2, True
        rep.details["prefactor"] = math.exp(c)
    return rep


def clt_check(params, sampler, h, n, n_samples, seed, ks_threshold=0.02, sigma_floor=1e-3):
    """KS distance of n^-1/2 (S_n h - n mean) to the fitted centered Gaussian."""
    x = sampler(n_samples, seed)
    S = _birkhoff(x, int(n), *h.args, *params.kernel_args)
    mean = S.mean() / n
    z = (S - n * mean) / math.sqrt(n)
    sigma = float(z.std(ddof=1))
    rep = CorrelationReport(sampler.name, h.name, sigma=sigma)
    rep.details = {"n": int(n), "n_samples": len(z), "mean": float(mean),
                   "ks_threshold": ks_threshold, "sigma_floor": sigma_floor}
    if sigma <= sigma_floor:
        rep.details["coboundary_suspect"] = True
        return rep
    rep.ks = float(sps.kstest(z, "norm", args=(0.0, sigma)).statistic)
    rep.conclusive = True
    rep.details["passed"] = bool(rep.ks <= ks_threshold)
    return rep


def write_correlation_csv(path, rep):
    write_csv(path, ["n", "C_n", "err"], zip(rep.lags, rep.C, rep.err))


def write_summary_json(path, reports):
    write_json(path, [r.summary() for r in reports])
