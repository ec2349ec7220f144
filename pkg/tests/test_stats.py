import json

import numpy as np
import pytest

from pasmooth.conjugacy import ConjugacyApprox, ConjugacyError
from pasmooth.stats import (bump, clt_check, constant, correlations, distance_power,
                            mme_sampler, sine, sine_coboundary, volume_sampler,
                            write_correlation_csv, write_summary_json)
from pasmooth.surface import smooth_map_g


def test_observable_values(params):
    x = np.array([[0.25, 0.0], [0.0, 0.25], [0.5, 0.5]])
    assert sine()(params, x) == pytest.approx([1.0, 0.0, 0.0], abs=1e-15)
    assert sine(coord=1)(params, x) == pytest.approx([0.0, 1.0, 0.0], abs=1e-15)
    assert bump((0.25, 0.0), 0.1)(params, x)[0] == 1.0
    assert constant(2.5)(params, x) == pytest.approx([2.5] * 3)
    d = distance_power(0.5)(params, x)
    assert d[2] == 0.0 and d[0] == pytest.approx(0.5, rel=1e-15)
    assert distance_power(0.5).holder_only and not distance_power(1.0).holder_only


def test_coboundary_values(params):
    x = np.random.default_rng(0).random((50, 2))
    gx = smooth_map_g(params, x)
    h = sine_coboundary()
    assert h(params, x) == pytest.approx(np.sin(2 * np.pi * gx[:, 0]) - np.sin(2 * np.pi * x[:, 0]),
                                         abs=1e-12)


def test_constant_has_no_correlation(params):
    rep = correlations(params, volume_sampler(params), constant(), constant(), range(4), 500, 0)
    assert np.all(rep.C == 0.0) and not rep.conclusive


def test_bump_correlation_under_volume(params, tmp_path):
    rep = correlations(params, volume_sampler(params), bump(), bump(), range(6), 20000, 1)
    assert rep.C[0] > 0 and rep.sampler == "mu1"
    assert rep.fit_lags[0] == 0
    write_correlation_csv(tmp_path / "c.csv", rep)
    assert len((tmp_path / "c.csv").read_text().splitlines()) == 7


def test_clt_flags_coboundary(params):
    # S_n stays bounded, so sigma ~ n^-1/2: 0.07 here
    rep = clt_check(params, volume_sampler(params), sine_coboundary(), 200, 2000, 0,
                    sigma_floor=0.2)
    assert rep.details["coboundary_suspect"] and not rep.conclusive


def test_clt_small(params, tmp_path):
    mu0 = mme_sampler(params)
    rep = clt_check(params, mu0, sine(), 500, 5000, 0)
    assert rep.conclusive and rep.details["passed"]
    assert 0.6 < rep.sigma < 0.8
    write_summary_json(tmp_path / "s.json", [rep])
    assert json.loads((tmp_path / "s.json").read_text())[0]["sampler"] == "mu0"


def test_mme_sampler_refuses_failed_conjugacy(params):
    ap = ConjugacyApprox()
    ap.stats["passed"] = False
    with pytest.raises(ConjugacyError):
        mme_sampler(params, ap)


def test_sine_correlations_vanish_past_lag_zero_for_the_linear_map(linear_params):
    # sin(2 pi x1) composed with M^n is a different character: exactly uncorrelated
    mu = volume_sampler(linear_params)
    rep = correlations(linear_params, mu, sine(), sine(), range(4), 20000, 0)
    assert abs(rep.C[0] - 0.5) < 0.02
    assert np.all(np.abs(rep.C[1:]) <= 4 * rep.err[1:] + 1e-12)
