import math

import numpy as np
import pytest

from pasmooth.lemmas import check_cocycle_comparison, check_sum_bounds
from pasmooth.tower import (BranchSet, RectangleError, branch_orbit, branch_tangents,
                            check_intermediate_bound, check_tower_conditions, choose_rectangle,
                            enumerate_branches, first_return, log_distortion,
                            representatives, slow_branches, tower_stats, write_branch_csv)

LOGLAM = math.log(3 + 2 * math.sqrt(2))


def test_default_rectangle_is_valid(rect):
    assert rect.Q_ok and rect.q_max >= rect.Q >= 1


def test_default_rectangle_supports_q_twenty(params):
    # stated target for the default configuration
    assert choose_rectangle(params).q_max >= 20


def test_rectangle_rejects_large_q(params):
    with pytest.raises(RectangleError) as info:
        choose_rectangle(params, q=30)
    assert info.value.iterate is not None and info.value.iterate <= 30


def test_rectangle_rejects_disk_overlap(params):
    with pytest.raises(RectangleError):
        choose_rectangle(params, center=(0.01, 0.0))


def test_shrinking_never_breaks_q(params):
    q = choose_rectangle(params).q_max
    for size in (0.04, 0.02, 0.01, 0.005):
        r = choose_rectangle(params, size_spec=(size, size), q=q)
        assert r.Q_ok and r.q_max >= q


@pytest.mark.parametrize("center, period", [((0.375, 0.125), 2),
                                            ((11 / 14, 1 / 7), 3)])
def test_periodic_center_returns_at_its_period(params, center, period):
    r = choose_rectangle(params, size_spec=(0.005, 0.005), center=center)
    b = first_return(params, r, center)
    assert b.tau == period
    assert b.birkhoff_logJu == pytest.approx(period * LOGLAM, rel=1e-12)


def test_first_return_requires_interior(params, rect):
    with pytest.raises(ValueError):
        first_return(params, rect, (0.9, 0.9))


def test_branch_set_bookkeeping(branches, rect):
    assert isinstance(branches, BranchSet)
    assert branches.n_seeds == 8000
    assert branches.none_fraction <= 0.01
    assert len(branches) + branches.n_none == branches.n_seeds
    assert all(b.tau >= 1 for b in branches)
    assert len(representatives(branches)) == len({b.sset_key for b in branches})


def test_unvalidated_rectangle_refused(params, rect):
    from dataclasses import replace
    with pytest.raises(RectangleError):
        enumerate_branches(params, replace(rect, Q_ok=False), 10)


def test_tower_stats(branches):
    st = tower_stats(branches)
    assert st.h_fit < LOGLAM and st.h_below_log_lambda
    kac = [v for _, v in st.kac_partial]
    assert np.all(np.diff(kac) > 0)
    # Kac sum is 1 / mu(P) up to sampling: area 0.01
    assert st.kac_sum == pytest.approx(100.0, rel=0.05)


def test_branch_count_grows_with_density(params, rect):
    a = enumerate_branches(params, rect, 500, seed=1, n_random=0)
    b = enumerate_branches(params, rect, 2000, seed=1, n_random=0)
    assert len(representatives(b)) > len(representatives(a))


def test_linear_model_has_zero_distortion(linear_params):
    r = choose_rectangle(linear_params)
    bs = enumerate_branches(linear_params, r, 50, seed=0)
    tg = branch_tangents(linear_params, branch_orbit(linear_params, bs[0]))
    assert log_distortion(linear_params, tg, 1e-9) == -math.inf
    y = check_tower_conditions(linear_params, r, bs, pairs=20, seed=0)
    assert y.passed and y.details["distortion_forward"]["all_zero"]


def test_tower_conditions_small(params, rect, branches):
    y = check_tower_conditions(params, rect, branches, pairs=60, seed=0)
    assert y.details["stable_contraction_max"] < 1 and y.details["unstable_contraction_max"] < 1
    assert y.details["distortion_forward"]["kappa"] < 1 and y.details["distortion_backward"]["kappa"] < 1


def test_slow_branches_visit_slow_region(params, rect):
    from pasmooth.surface import in_slow_region
    sb = slow_branches(params, rect, 20, seed=0, depth=2)
    assert len(sb) >= 15
    assert all(in_slow_region(params, b.orbit).any() for b in sb)


def test_intermediate_bound(params, branches):
    k = check_intermediate_bound(params, branches, pairs=200, seed=0)
    assert k.passed and math.isfinite(k.details["K"]["K"])


def test_cocycle_comparison(params, rect, branches):
    pool = representatives(branches)[:50] + slow_branches(params, rect, 50, 3, depth=2)
    rep = check_cocycle_comparison(params, pool, seed=0)
    assert rep.passed and rep.details["C"] <= 1e3
    assert rep.details["branches_with_nonlinear_steps"] >= 30


def test_sum_bounds(params, rect, branches):
    pool = representatives(branches)[:50] + slow_branches(params, rect, 50, 3, depth=2)
    rep = check_sum_bounds(params, pool)
    assert rep.passed and rep.details["theta2"] < 1


def test_sum_bounds_linear_example(params):
    # branch with tau = Q and no disk visits: product of gammas below lam^(-2Q)
    rep = check_sum_bounds(params, [])
    assert rep.details["linear_example_holds"]


def test_branch_csv(tmp_path, branches):
    path = tmp_path / "b.csv"
    write_branch_csv(path, branches[:10])
    assert len(path.read_text().splitlines()) == 11
