import numpy as np
import pytest
from scipy import stats as sps

from pasmooth.conjugacy import (ConjugacyApprox, conjugacy_residual, conjugate_point,
                                disk_visiting_points, sample_mme, validate, visits_nonlinear)
from pasmooth.surface import MARKED_POINTS, base_map_f, dist, smooth_map_g


def test_approx_validation():
    with pytest.raises(ValueError):
        ConjugacyApprox(direction="sideways")
    with pytest.raises(ValueError):
        ConjugacyApprox(N=0)


def test_identity_off_visiting_orbits(params):
    rng = np.random.default_rng(0)
    x = rng.random((3000, 2))
    vis = visits_nonlinear(params, x)
    hx = conjugate_point(params, ConjugacyApprox(), x)
    assert np.array_equal(hx[~vis], x[~vis])


def test_marked_points_fixed(params):
    hx = conjugate_point(params, ConjugacyApprox(), MARKED_POINTS)
    assert np.all(dist(hx, MARKED_POINTS) == 0.0)


def test_linear_model_identity(linear_params):
    x = disk_visiting_points(linear_params, 50, 0)
    assert np.array_equal(conjugate_point(linear_params, ConjugacyApprox(), x), x)


def test_residual_on_visiting_points(params):
    x = disk_visiting_points(params, 200, 1)
    vis = visits_nonlinear(params, x)
    assert vis.mean() >= 0.9
    r, ok, ident, hx = conjugacy_residual(params, ConjugacyApprox(), x)
    assert ok.all() and np.array_equal(ident, ~vis)
    assert r.max() <= 1e-6
    # H moves points by at most the size of the slow region
    assert dist(hx, x).max() <= 10 * params.lam * params.profile.rt0


def test_inverse_round_trip(params):
    x = disk_visiting_points(params, 100, 2)
    hx = conjugate_point(params, ConjugacyApprox(), x)
    back = conjugate_point(params, ConjugacyApprox(direction="H_inv"), hx)
    assert dist(back, x).max() <= 1e-9


def test_validate_small(params):
    ap = ConjugacyApprox()
    out = validate(params, ap, n_points=1000, n_visiting=100)
    assert out["passed"] and out["identity_exact"]
    assert ap.stats["passed"]


def test_sample_mme_invariance(params):
    ap = ConjugacyApprox()
    y = sample_mme(params, ap, 20000, 3)
    assert np.array_equal(y[:5], sample_mme(params, ap, 20000, 3)[:5])
    gy = smooth_map_g(params, y)
    for k in range(2):
        assert sps.ks_2samp(y[:, k], gy[:, k]).pvalue > 0.01
    with pytest.raises(ValueError):
        sample_mme(params, ap, -1, 0)


def test_conjugacy_intertwines_single_point(params):
    x = disk_visiting_points(params, 1, 5)[0]
    ap = ConjugacyApprox()
    lhs = smooth_map_g(params, conjugate_point(params, ap, x))
    rhs = conjugate_point(params, ap, base_map_f(params, x))
    assert dist(lhs, rhs) <= 1e-6
