import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as sps

import oracles
from pasmooth.surface import (MARKED_POINTS, ConfigError, ModelParams, _disk_mass,
                              base_map_f, chart_coordinates, dg, dist, g_inverse,
                              in_slow_region, jacobian_g, orbit, sample_zeta_volume,
                              smooth_map_g, total_volume, zeta_density)

LAM = 3 + 2 * math.sqrt(2)


@pytest.mark.parametrize("kw, field", [
    ({"matrix": ((2, 1), (1, 1))}, "matrix"),      # not congruent to I mod 2
    ({"matrix": ((1, 0), (0, 1))}, "matrix"),      # trace 2
    ({"matrix": ((5, 2), (3, 1))}, "matrix"),      # det != 1
    ({"a": 0.6}, "a"),
    ({"r1_ratio": 1.2}, "r1_ratio"),
    ({"r0_ratio": 2.0}, "r0_ratio"),
    ({"q_min": -1}, "q_min"),
])
def test_invalid_params_name_the_field(kw, field):
    with pytest.raises(ConfigError) as info:
        ModelParams(**kw)
    assert info.value.field == field


def test_eigen_data(params):
    assert params.lam == pytest.approx(LAM, rel=1e-15)
    assert params.lam == pytest.approx(5.828427, abs=1e-6)
    fr = params.frame
    assert fr @ fr.T == pytest.approx(np.eye(2), abs=1e-15)
    assert params.mat @ params.e_u == pytest.approx(LAM * params.e_u, rel=1e-14)
    assert params.mat @ params.e_s == pytest.approx(params.e_s / LAM, abs=1e-14)


def test_half_integer_points_fixed(params):
    assert base_map_f(params, (0.5, 0.0)) == pytest.approx((0.5, 0.0), abs=0)
    for m in MARKED_POINTS:
        assert dist(base_map_f(params, m), m) == 0.0
        assert dist(smooth_map_g(params, m), m) == 0.0


def test_dist_examples():
    assert dist((0.0, 0.0), (0.0, 0.0)) == 0.0
    assert dist((0.0, 0.0), (0.5, 0.0)) == 0.5
    assert dist((0.95, 0.0), (0.05, 0.0)) == pytest.approx(0.1, abs=1e-15)
    rng = np.random.default_rng(3)
    a, b, c = rng.random((3, 1000, 2))
    assert np.all(dist(a, c) <= dist(a, b) + dist(b, c) + 1e-15)


def test_g_equals_f_outside_disks(params):
    rng = np.random.default_rng(0)
    x = rng.random((20000, 2))
    idx, _ = chart_coordinates(params, x)
    out = idx < 0
    assert out.sum() > 19000
    assert np.array_equal(smooth_map_g(params, x[out]), base_map_f(params, x[out]))


def test_linear_baseline_is_f(linear_params):
    rng = np.random.default_rng(1)
    x = rng.random((2000, 2))
    assert np.array_equal(smooth_map_g(linear_params, x), base_map_f(linear_params, x))


def test_c0_closeness(params):
    g1 = np.linspace(0, 1, 301)
    x = np.stack(np.meshgrid(g1, g1), -1).reshape(-1, 2)
    # add points concentrated near the marked points
    rng = np.random.default_rng(2)
    r = params.disk_radius * np.sqrt(rng.random(20000))
    a = rng.uniform(0, 2 * math.pi, 20000)
    near = np.mod(MARKED_POINTS[rng.integers(0, 4, 20000)]
                  + np.column_stack([r * np.cos(a), r * np.sin(a)]), 1.0)
    x = np.vstack([x, near])
    sup = dist(smooth_map_g(params, x), base_map_f(params, x)).max()
    assert sup <= 2 * params.disk_radius


def test_round_trip(params):
    rng = np.random.default_rng(4)
    x = rng.random((5000, 2))
    assert dist(g_inverse(params, smooth_map_g(params, x)), x).max() <= 1e-9
    w = sample_zeta_volume(params, 5000, 5)
    assert dist(smooth_map_g(params, g_inverse(params, w)), w).max() <= 1e-9


def test_jacobian_outside_is_diagonal(params):
    j = jacobian_g(params, (0.3, 0.7))
    assert j == pytest.approx(np.diag([LAM, 1 / LAM]), rel=1e-14)
    assert dg(params, (0.3, 0.7), (1.0, 0.0)) == pytest.approx((LAM, 0.0), rel=1e-14)


def test_jacobian_matches_finite_difference(params):
    w = sample_zeta_volume(params, 4000, 6)
    w = w[in_slow_region(params, w)][:40]
    assert len(w) >= 10
    fr = params.frame
    for x in w:
        h = 1e-8
        cols = []
        for e in fr:
            d = smooth_map_g(params, x + h * e) - smooth_map_g(params, x - h * e)
            d -= np.round(d)
            cols.append(fr @ d / (2 * h))
        fd = np.array(cols).T
        j = jacobian_g(params, x)
        assert np.max(np.abs(fd - j)) <= 1e-5 * np.abs(j).max()


def test_volume_preserved_pointwise(params):
    w = sample_zeta_volume(params, 20000, 7)
    w = w[in_slow_region(params, w)]
    det = np.linalg.det(jacobian_g(params, w))
    ratio = det * zeta_density(params, smooth_map_g(params, w)) / zeta_density(params, w)
    assert np.max(np.abs(ratio - 1.0)) <= 1e-8


def test_density_near_marked_point(params):
    # pure power region for p = 4: psi(u) = 2 sqrt(u), density 1/(2 sqrt(u))
    u = (0.5 * params.profile.rt1) ** 2
    x = MARKED_POINTS[1] + 2 * math.sqrt(u) * params.e_u
    assert zeta_density(params, x) == pytest.approx(1 / (2 * math.sqrt(u)), rel=1e-12)
    assert zeta_density(params, (0.3, 0.7)) == 1.0


def test_disk_mass_oracle(params):
    assert _disk_mass(params) == pytest.approx(oracles.DISK_MASS_DEFAULT, rel=1e-10)
    assert total_volume(params) == pytest.approx(oracles.TOTAL_VOLUME_DEFAULT, rel=1e-12)


def test_volume_sampler_statistics(params):
    n = 10 ** 6
    x = sample_zeta_volume(params, n, 11)
    assert np.array_equal(x[:10], sample_zeta_volume(params, n, 11)[:10])
    slow = in_slow_region(params, x)
    expect = 4 * oracles.DISK_MASS_DEFAULT / oracles.TOTAL_VOLUME_DEFAULT
    # about 4000 hits at this n: the binomial error is 1.6%, so test at 4 sigma
    sigma = math.sqrt(expect * (1 - expect) / n)
    assert abs(slow.mean() - expect) <= 4 * sigma
    counts, _, _ = np.histogram2d(x[~slow, 0], x[~slow, 1], bins=20, range=[[0, 1], [0, 1]])
    assert sps.chisquare(counts.ravel()).pvalue > 0.01


def test_orbit_table(params):
    tab = orbit(params, (0.1, 0.2), 5)
    assert tab.shape == (6, 6)
    assert tab[1, 1:3] == pytest.approx(smooth_map_g(params, (0.1, 0.2)), abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1, exclude_max=True), st.floats(0, 1, exclude_max=True))
def test_g_and_inverse_property(x1, x2):
    p = ModelParams()
    x = np.array([x1, x2])
    assert dist(g_inverse(p, smooth_map_g(p, x)), x) <= 1e-9
