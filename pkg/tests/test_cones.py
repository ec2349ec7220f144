import math

import numpy as np
import pytest

from pasmooth.cones import (admissible_alpha, check_cone_invariance, cone_report_json,
                            gamma_coefficient, gamma_from_jacobian, gamma_outside,
                            image_slopes, invariance_defect, unstable_direction)
from pasmooth.surface import MARKED_POINTS, in_slow_region, jacobian_g, sample_zeta_volume

LAM = 3 + 2 * math.sqrt(2)


def test_slopes_contract_by_lambda_squared_outside():
    jac = np.diag([LAM, 1 / LAM])[None]
    m = np.array([-0.99, -0.3, 0.5, 0.99])
    assert image_slopes(jac, m)[0] == pytest.approx(m / LAM ** 2, rel=1e-14)
    assert LAM ** -2 == pytest.approx(0.0294, abs=1e-4)


def test_cone_invariance_small_run(params):
    rep = check_cone_invariance(params, 0.99, 5000, seed=0)
    assert rep.violations == 0 and rep.samples == 5000
    assert rep.details["empirical_alpha0"] < 0.99
    d = cone_report_json(rep)
    assert d["violations"] == 0 and "predicted_alpha0" in d


def test_cone_invariance_rejects_bad_alpha(params):
    with pytest.raises(ValueError):
        check_cone_invariance(params, 1.0, 10, 0)


def test_admissible_alpha_rotation_fails():
    c, s = math.cos(0.3), math.sin(0.3)
    jac = np.repeat(np.array([[c, -s], [s, c]])[None], 3, axis=0)
    assert math.isnan(admissible_alpha(jac, np.linalg.inv(jac)))


def test_admissible_alpha_linear_step():
    jac = np.diag([LAM, 1 / LAM])[None]
    assert admissible_alpha(jac, np.linalg.inv(jac)) == 0.01


def test_splitting_converges_and_is_invariant(params):
    w = sample_zeta_volume(params, 300, 1)
    sp = unstable_direction(params, w)
    ok = np.array([s.converged for s in sp])
    # near the fixed points expansion is weak and a few splittings stay flagged
    assert ok.mean() >= 0.98
    assert not np.any(~ok & ~in_slow_region(params, w))
    assert invariance_defect(params, w[ok]).max() <= 1e-8
    far = unstable_direction(params, (0.3, 0.7))
    assert far.eu == pytest.approx((1.0, 0.0), abs=1e-14)


def test_marked_point_splitting_is_degenerate(params):
    sp = unstable_direction(params, MARKED_POINTS[2])
    assert sp.degenerate and not sp.converged


def test_gamma_outside_closed_form():
    jac = np.diag([LAM, 1 / LAM])
    for a in (0.1, 0.5, 0.99):
        assert gamma_from_jacobian(jac, a) == pytest.approx(gamma_outside(LAM, a), rel=1e-12)
    assert gamma_outside(LAM, 0.0) == pytest.approx(LAM ** -2, rel=1e-15)


def test_gamma_outside_below_lambda_minus_two(params):
    # stated bound for points away from the disks, at the default cone opening
    g = gamma_coefficient(params, (0.3, 0.7), alpha=0.99)
    assert g <= LAM ** -2 + 1e-12


def test_gamma_probe_monotone(params):
    w = sample_zeta_volume(params, 2000, 2)
    x = w[np.argmax(np.abs(jacobian_g(params, w)[:, 0, 1]))]
    lo = gamma_coefficient(params, x, probe_count=2)
    hi = gamma_coefficient(params, x, probe_count=1000)
    assert lo <= hi
