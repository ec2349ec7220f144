"""Local model near a p-pronged singularity.

The planar field is

    ds1/dt =  L * s1 * psi(s1**2 + s2**2)
    ds2/dt = -L * s2 * psi(s1**2 + s2**2)

with ``L = log(lambda)``.  ``psi`` equals ``kc * u**((p-2)/p)`` below
``rt1**2``, equals 1 above ``rt0**2`` and is blended in between by a
C-infinity step built from ``exp(-1/x)``.  The field preserves the area
form ``ds1 ds2 / psi`` and the product ``s1 * s2``.

Points are passed as length-2 sequences or as ``(n, 2)`` arrays.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as _k

BLEND_NAME = "smoothstep-exp(-1/x): w(x) = 1 / (1 + exp(1/x - 1/(1-x)))"


class DomainError(ValueError):
    """Raised for arguments outside the domain of a profile function."""


class IntegrationError(RuntimeError):
    """Raised when a trajectory cannot be integrated; carries diagnostics."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class Tolerances:
    quad_rtol: float = 1e-12
    ode_rtol: float = 1e-11
    ode_atol: float = 1e-14


DEFAULT_TOL = Tolerances()


@dataclass(frozen=True)
class SlowdownProfile:
    p: int
    r0: float
    r1: float
    blend: str = field(default=BLEND_NAME, compare=False)

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 3:
            raise DomainError(f"p must be an integer >= 3, got {self.p}")
        if not (0.0 < self.r1 < self.r0):
            raise DomainError(f"radii must satisfy 0 < r1 < r0, got r0={self.r0}, r1={self.r1}")
        if self.r0 ** (self.p - 2) > 1.0:
            # closedform(rt0**2) = r0**(p-2) must not exceed 1 for a monotone blend
            raise DomainError(f"blend is not monotone: r0**(p-2) = {self.r0 ** (self.p - 2):.4g} > 1")

    @property
    def rt0(self):
        return 2.0 / self.p * self.r0 ** (self.p / 2.0)

    @property
    def rt1(self):
        return 2.0 / self.p * self.r1 ** (self.p / 2.0)

    @property
    def u0(self):
        return self.rt0 ** 2

    @property
    def u1(self):
        return self.rt1 ** 2

    @property
    def kc(self):
        return (self.p / 2.0) ** ((2.0 * self.p - 4.0) / self.p)

    @property
    def args(self):
        return float(self.p), self.u0, self.u1, self.kc

    def closed_form(self, u):
        return self.kc * np.asarray(u, dtype=float) ** ((self.p - 2.0) / self.p)

    def closed_form_dot(self, u):
        u = np.asarray(u, dtype=float)
        return (self.p - 2.0) / self.p * self.kc * u ** (-2.0 / self.p)

    def describe(self):
        return {"p": self.p, "r0": self.r0, "r1": self.r1, "rt0": self.rt0,
                "rt1": self.rt1, "blend": self.blend}


def _points(s):
    arr = np.asarray(s, dtype=float)
    single = arr.ndim == 1
    arr = np.ascontiguousarray(arr.reshape(-1, 2))
    if not np.all(np.isfinite(arr)):
        raise DomainError("points must be finite")
    return arr, single


def psi(profile, u):
    """Blended slow-down profile evaluated at u >= 0."""
    ua = np.asarray(u, dtype=float)
    if np.any(ua < 0):
        raise DomainError("psi is defined for u >= 0")
    out = _k.psi_many(np.ascontiguousarray(ua.ravel()), *profile.args)
    return out.reshape(ua.shape)[()] if ua.ndim else float(out[0])


def psi_dot(profile, u):
    """Derivative of psi for u > 0 (it diverges at 0)."""
    ua = np.asarray(u, dtype=float)
    if np.any(ua <= 0):
        raise DomainError("psi_dot is defined for u > 0")
    out = _k.psi_dot_many(np.ascontiguousarray(ua.ravel()), *profile.args)
    return out.reshape(ua.shape)[()] if ua.ndim else float(out[0])


def vector_field(profile, loglambda, s):
    pts, single = _points(s)
    u = (pts ** 2).sum(axis=1)
    ps = _k.psi_many(u, *profile.args)
    v = np.column_stack([loglambda * pts[:, 0] * ps, -loglambda * pts[:, 1] * ps])
    return v[0] if single else v


def flow(profile, loglambda, s, t, tol=DEFAULT_TOL):
    """Time-t map of the slow-down field (t may be negative)."""
    if loglambda <= 0:
        raise DomainError("loglambda must be positive")
    pts, single = _points(s)
    out = _k.flow_many(pts, float(loglambda) * float(t), *profile.args, tol.quad_rtol)
    if not np.all(np.isfinite(out)):
        bad = np.flatnonzero(~np.isfinite(out).all(axis=1))
        raise IntegrationError("non-finite flow output", indices=bad.tolist(),
                               points=pts[bad].tolist())
    return out[0] if single else out


def time1_map(profile, loglambda, s, tol=DEFAULT_TOL):
    return flow(profile, loglambda, s, 1.0, tol)


def variational_matrix(profile, loglambda, s):
    """Generator of the tangent dynamics at s; zero matrix at the origin."""
    pts, single = _points(s)
    out = np.zeros((pts.shape[0], 2, 2))
    u = (pts ** 2).sum(axis=1)
    nz = u > 0
    if np.any(nz):
        s1 = pts[nz, 0]
        s2 = pts[nz, 1]
        ps = _k.psi_many(u[nz], *profile.args)
        pd = _k.psi_dot_many(u[nz], *profile.args)
        out[nz, 0, 0] = ps + 2 * s1 ** 2 * pd
        out[nz, 0, 1] = 2 * s1 * s2 * pd
        out[nz, 1, 0] = -2 * s1 * s2 * pd
        out[nz, 1, 1] = -ps - 2 * s2 ** 2 * pd
        out[nz] *= loglambda
    return out[0] if single else out


def jacobian_flow(profile, loglambda, s, t, tol=DEFAULT_TOL):
    """Derivative of flow(., t) at s, from the variational equation."""
    pts, single = _points(s)
    jac, status = _k.jacobian_many(pts, float(loglambda) * float(t), *profile.args,
                                   tol.ode_rtol, tol.ode_atol)
    if np.any(status < 0):
        bad = np.flatnonzero(status < 0)
        raise IntegrationError("step size underflow in variational integration",
                               indices=bad.tolist(), points=pts[bad].tolist())
    return jac[0] if single else jac


def invariant_density(profile, s):
    """Area density 1/psi(|s|^2) of the invariant volume."""
    pts, single = _points(s)
    u = (pts ** 2).sum(axis=1)
    if np.any(u == 0):
        raise DomainError("invariant density is infinite at the origin")
    d = 1.0 / _k.psi_many(u, *profile.args)
    return float(d[0]) if single else d


def liouville_defect(profile, loglambda, s, t=1.0, tol=DEFAULT_TOL):
    """|det J * psi(|s|^2) / psi(|flow(s)|^2) - 1| per point."""
    pts, _ = _points(s)
    jac = jacobian_flow(profile, loglambda, pts, t, tol)
    img = flow(profile, loglambda, pts, t, tol).reshape(-1, 2)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    before = _k.psi_many((pts ** 2).sum(axis=1), *profile.args)
    after = _k.psi_many((img ** 2).sum(axis=1), *profile.args)
    return np.abs(det * before / after - 1.0)
