"""A short tour of the smoothed pseudo-Anosov model at the default parameters.

Run with ``python3 demos/walkthrough.py``; it takes about a minute.
"""

import math

import numpy as np

from pasmooth.conjugacy import ConjugacyApprox, validate
from pasmooth.surface import ModelParams, base_map_f, dist, orbit, smooth_map_g
from pasmooth.thermo import lambda1_and_t0, pressure_root, srb_exponent
from pasmooth.tower import choose_rectangle, enumerate_branches, tower_stats


def main():
    p = ModelParams()
    print(f"lambda = {p.lam:.6f}, log lambda = {p.loglam:.6f}")
    print(f"slow region radius {p.profile.rt0:.1e}, chart radius {p.disk_radius:g}")

    # g agrees with the cat map except near the four marked points
    x = np.random.default_rng(0).random((100000, 2))
    same = np.array_equal(smooth_map_g(p, x), base_map_f(p, x))
    print(f"g == f on 10^5 uniform points: {same}")
    y = np.mod(np.random.default_rng(1).uniform(-3e-4, 3e-4, (100000, 2)), 1.0)
    moved = dist(smooth_map_g(p, y), base_map_f(p, y))
    print(f"near the origin g moves {np.mean(moved > 0):.1%} of points, by at most {moved.max():.1e}")

    # an orbit starting next to a marked point lingers there
    traj = orbit(p, np.array([1e-5, 1e-5]), 200)[:, 1:3]
    d = traj - np.round(traj)
    near = np.sum(np.hypot(d[:, 0], d[:, 1]) < 1e-3)
    print(f"orbit from (1e-5, 1e-5): {near} of its first {len(d)} points lie within 1e-3 of the origin")

    rect = choose_rectangle(p)
    bs = enumerate_branches(p, rect, 5000, 5000, seed=0)
    st = tower_stats(bs)
    print(f"first returns: {len(bs)} branches, Q_max = {rect.q_max}, fitted h = {st.h_fit:.4f}")

    chi = srb_exponent(p, 5000, 0).chi_u
    l1, t0 = lambda1_and_t0(p, bs, st.h_fit, chi)
    print(f"volume exponent {chi:.5f}, log lambda_1 = {l1:.5f}, t0 = {t0:.1f}")
    for t in (0.0, 0.5, 1.0):
        print(f"  P({t}) = {pressure_root(p, bs, t):.5f}   (linear model: {(1 - t) * p.loglam:.5f})")

    out = validate(p, ConjugacyApprox(), n_points=1000, n_visiting=50)
    print(f"conjugacy residual {out['sup_residual']:.1e}, "
          f"largest displacement on visiting orbits {out['visiting_max_displacement']:.1e}")
    print(f"(for scale: lambda^-80 = {math.exp(-80 * p.loglam):.1e})")


if __name__ == "__main__":
    main()
