import math

import numpy as np
import pytest

from pasmooth import lemmas
from pasmooth.slowdown import SlowdownProfile

LAM = 3 + 2 * math.sqrt(2)
LOCAL = {p: SlowdownProfile(p, 0.2, 0.1) for p in (3, 4, 5)}


def test_constants_by_hand():
    # p = 4: C0 = (4/4) * 2^1 * log lam, beta = 2^(-10/4) (1 - alpha)
    assert lemmas.c0_constant(4, LAM) == pytest.approx(2 * math.log(LAM), rel=1e-15)
    assert lemmas.beta_constant(4, 0.5) == pytest.approx(0.5 * 2 ** -2.5, rel=1e-15)
    assert lemmas.dij_bound_constant(4) == pytest.approx(6.0, rel=1e-15)
    f1, f2, tp = lemmas.residence_bounds(SlowdownProfile(4, 0.02, 0.01), LAM)
    L = math.log(LAM)
    assert f1 == pytest.approx((4 * 0.02 ** 8 - 0.01 ** 8) / (2 * 0.01 ** 10 * L), rel=1e-13)
    assert f2 == pytest.approx(2 * (2 * 0.02 ** 4 - 0.01 ** 4) / (2 * 0.01 ** 6 * L), rel=1e-13)
    assert tp == max(f1, f2)


@pytest.mark.parametrize("p", [3, 4, 5])
def test_residence_time(p):
    rep = lemmas.check_residence_time(LOCAL[p], LAM, 400, seed=p)
    assert rep.passed, rep.to_dict()
    assert rep.details["max_total"] < rep.details["T_p"]


def test_empty_samples_give_empty_reports(params):
    for rep in (lemmas.check_residence_time(LOCAL[4], LAM, 0, 0),
                lemmas.check_discrete_residence(params, 0, 0),
                lemmas.check_envelopes(LOCAL[4], LAM, 0, 0),
                lemmas.check_spread(LOCAL[4], LAM, 0.5, 0, 0),
                lemmas.check_angle_product_local(LOCAL[4], LAM, 0.99, 0, 0)):
        assert rep.samples == 0 and rep.violations == 0 and not rep.passed


def test_discrete_residence(params):
    rep = lemmas.check_discrete_residence(params, 1000, seed=1)
    assert rep.passed
    assert rep.details["max_run"] <= rep.details["bound"]


def test_marked_point_spends_no_steps_in_annulus(params):
    runs = lemmas._annulus_runs(params.marked.copy(), *params.kernel_args, 100)
    assert np.all(runs == 0)


@pytest.mark.parametrize("p", [3, 4, 5])
def test_dij_bound(p):
    rep = lemmas.check_dij_bound(LOCAL[p], grid_spec=(60, 32))
    assert rep.passed
    assert rep.details["fd_max_rel_error"] <= 1e-4


def test_dij_closed_form_on_diagonal():
    s = 1e-3
    h = 1e-7
    kc = 2.0

    def f(a, b):
        return b * kc * math.sqrt(a * a + b * b)

    fd12 = (f(s + h, s + h) - f(s + h, s - h) - f(s - h, s + h) + f(s - h, s - h)) / (4 * h * h)
    _, d12, _ = lemmas.dij_closed_form(4, s, s)
    assert d12 == pytest.approx(fd12, rel=1e-6)


@pytest.mark.parametrize("p", [3, 4, 5])
def test_envelopes(p):
    rep = lemmas.check_envelopes(LOCAL[p], LAM, 300, seed=p)
    assert rep.passed, rep.details["worst_by_part"]


@pytest.mark.parametrize("p", [3, 4, 5])
def test_spread_stable_pairs(p):
    rep = lemmas.check_spread(LOCAL[p], LAM, 0.5, 300, seed=p, pairing="stable")
    assert rep.passed
    # partners pushed outside D_rt0 are outside the hypotheses
    assert rep.samples >= rep.inadmissible
    assert rep.details["max_product_drift"] <= 1e-9


def test_spread_forward_pairs_mostly_leave_the_cone():
    rep = lemmas.check_spread(LOCAL[4], LAM, 0.99, 200, seed=0)
    assert rep.violations == 0
    assert rep.inadmissible > rep.samples


def test_spread_rejects_unknown_pairing():
    with pytest.raises(ValueError):
        lemmas.check_spread(LOCAL[4], LAM, 0.5, 10, 0, pairing="sideways")


def test_angle_product_slope_variant_holds(params):
    rep = lemmas.check_angle_product(params, 300, seed=0)
    assert rep.details["slope_ratio_violations"] == 0


def test_gamma_kernel_matches_cone_module():
    from pasmooth.cones import gamma_from_jacobian
    rng = np.random.default_rng(0)
    for _ in range(200):
        j = np.eye(2) + 0.3 * rng.standard_normal((2, 2))
        a = rng.uniform(0.05, 0.99)
        assert lemmas.gamma_kernel(*j.ravel(), a) == pytest.approx(gamma_from_jacobian(j, a),
                                                                    rel=1e-10)
