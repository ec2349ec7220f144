"""Regenerate the frozen reference values in oracles.py.

Everything here is computed with mpmath at 40 digits from a from-scratch
implementation of the profile; nothing is imported from the package.
Run:  python3 tests/make_oracles.py > tests/oracles.py
"""

import mpmath as mp

mp.mp.dps = 40


def profile(p, r0, r1):
    p = mp.mpf(p)
    rt0 = 2 / p * mp.mpf(r0) ** (p / 2)
    rt1 = 2 / p * mp.mpf(r1) ** (p / 2)
    kc = (p / 2) ** ((2 * p - 4) / p)
    u0, u1 = rt0 ** 2, rt1 ** 2

    def psi(u):
        if u >= u0:
            return mp.mpf(1)
        cf = kc * u ** ((p - 2) / p)
        if u <= u1:
            return cf
        x = (u - u1) / (u0 - u1)
        w = 1 / (1 + mp.exp(1 / x - 1 / (1 - x)))
        return (1 - w) * cf + w
    return psi


def flow_hyperbola(psi, L, s, t):
    """Time-t map via dtheta/dt = L psi(c (e^2th + e^-2th)) on s1 s2 = c (s1, s2 > 0)."""
    s1, s2 = mp.mpf(s[0]), mp.mpf(s[1])
    c = s1 * s2
    th0 = mp.log(s1 / mp.sqrt(c))
    rate = lambda th: 1 / (L * psi(c * (mp.exp(2 * th) + mp.exp(-2 * th))))
    elapsed = lambda d: mp.quad(rate, [th0, th0 + d]) - t
    d = mp.findroot(elapsed, L * t * psi(s1 ** 2 + s2 ** 2))
    return mp.sqrt(c) * mp.exp(th0 + d), mp.sqrt(c) * mp.exp(-th0 - d)


def flow_taylor(psi, L, s, t):
    """Same map from a high-order Taylor ODE solver (independent of the reduction)."""
    f = mp.odefun(lambda _, y: [L * y[0] * psi(y[0] ** 2 + y[1] ** 2),
                                -L * y[1] * psi(y[0] ** 2 + y[1] ** 2)],
                  0, [mp.mpf(s[0]), mp.mpf(s[1])])
    return f(t)


def fd_jacobian(fl, s, h):
    cols = []
    for k in range(2):
        a = list(map(mp.mpf, s))
        b = list(map(mp.mpf, s))
        a[k] += h
        b[k] -= h
        fa, fb = fl(a), fl(b)
        cols.append([(fa[i] - fb[i]) / (2 * h) for i in range(2)])
    return [[cols[0][0], cols[1][0]], [cols[0][1], cols[1][1]]]


def main():
    out = {}
    lam_big = 3 + 2 * mp.sqrt(2)

    psi3 = profile(3, 0.2, 0.1)
    L2 = mp.log(2)
    s = (0.01, 0.02)
    out["FLOW_P3"] = [float(v) for v in flow_hyperbola(psi3, L2, s, 1)]
    fl = lambda q: flow_hyperbola(psi3, L2, q, 1)
    J = fd_jacobian(fl, s, mp.mpf("1e-12"))
    out["JAC_P3"] = [[float(v) for v in row] for row in J]
    img = fl(s)
    det = J[0][0] * J[1][1] - J[0][1] * J[1][0]
    out["LIOUVILLE_P3"] = float(det * psi3(s[0] ** 2 + s[1] ** 2) / psi3(img[0] ** 2 + img[1] ** 2))

    psi4 = profile(4, 0.2, 0.1)
    out["FLOW_P4"] = [float(v) for v in flow_taylor(psi4, mp.log(lam_big), (0.001, 0.003), 1)]
    out["FLOW_P4_BACK"] = [float(v) for v in flow_taylor(psi4, -mp.log(lam_big), (0.001, 0.003), 1)]

    u = mp.mpf("0.001")
    h = mp.mpf("1e-12")
    out["PSI_P3_U"] = float(psi3(u))
    out["PSI_DOT_P3_U"] = float((psi3(u + h) - psi3(u - h)) / (2 * h))

    # default model: p = 4, r0 = 0.02, r1 = 0.01; s = z / 2 so a disk of s-radius
    # rt0 has torus area 4 pi rt0^2 scaled by 4
    psi_d = profile(4, 0.02, 0.01)
    rt0 = mp.mpf(2) / 4 * mp.mpf(0.02) ** 2
    rt1 = mp.mpf(2) / 4 * mp.mpf(0.01) ** 2
    mass = 4 * 2 * mp.pi * mp.quad(lambda r: r / psi_d(r * r), [0, rt1, rt0])
    out["DISK_MASS_DEFAULT"] = float(mass)
    out["TOTAL_VOLUME_DEFAULT"] = float(1 - 4 * mp.pi * (2 * rt0) ** 2 + 4 * mass)

    for k, v in out.items():
        print(f"{k} = {v!r}")


if __name__ == "__main__":
    print('"""Frozen reference values; regenerate with make_oracles.py."""\n')
    main()
