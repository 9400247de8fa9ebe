import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from radonrisk.core import DataError, MortalityTable, NumericalError, bundled_path
from radonrisk.mortality import (GroupFit, RateDistribution, RateObservation,
                                 bundled_rate_distributions, center_gamma, center_lognormal,
                                 fit_gamma_mle, fit_lognormal_mle, fit_rate_distribution,
                                 load_observations, load_rate_distributions,
                                 poisson_pooled_rate, sample_mortality_table,
                                 save_rate_distributions, theta_posterior)


def test_gamma_mean_matching_simple():
    a, b = fit_gamma_mle([1.0, 2.0, 3.0])
    assert a / b == 2.0


@given(st.lists(st.floats(1e-7, 1e-1), min_size=2, max_size=200).filter(
    lambda v: np.std(v) > 1e-3 * np.mean(v)))
def test_gamma_mean_matching_fuzzed(values):
    a, b = fit_gamma_mle(values)
    assert a / b == pytest.approx(np.mean(values), rel=1e-12)


def test_gamma_recovery(rng):
    x = rng.gamma(1.74, 1 / 1595.66, 100_000)
    a, b = fit_gamma_mle(x)
    assert a == pytest.approx(1.74, rel=0.03)
    assert b == pytest.approx(1595.66, rel=0.03)


def test_gamma_agrees_with_scipy(rng):
    x = rng.gamma(3.0, 2.0, 2000)
    a, b = fit_gamma_mle(x)
    a_ref, _, scale = stats.gamma.fit(x, floc=0)
    assert a == pytest.approx(a_ref, rel=1e-4)
    assert 1 / b == pytest.approx(scale, rel=1e-4)


@pytest.mark.parametrize("values", [[0.5], [0.2, 0.2, 0.2]])
def test_gamma_degenerate(values):
    with pytest.raises(DataError):
        fit_gamma_mle(values)


def test_lognormal_two_point():
    mu, sigma = fit_lognormal_mle([1.0, math.e**2])
    assert (mu, sigma) == pytest.approx((1.0, 1.0))
    with pytest.raises(DataError):
        fit_lognormal_mle([math.e] * 3)


def test_lognormal_recovery(rng):
    x = rng.lognormal(-6.8, 0.5, 100_000)
    mu, sigma = fit_lognormal_mle(x)
    assert mu == pytest.approx(-6.8, rel=0.02)
    assert sigma == pytest.approx(0.5, rel=0.02)


@given(st.lists(st.floats(1e-6, 1.0), min_size=2, max_size=100).filter(
    lambda v: np.std(np.log(v)) > 1e-6))
def test_lognormal_geometric_mean(values):
    mu, _ = fit_lognormal_mle(values)
    assert math.exp(mu) == pytest.approx(stats.gmean(values), rel=1e-12)


def test_center_gamma():
    assert center_gamma(1.74, 107.21e-5) == pytest.approx(1622.98, abs=0.01)
    assert center_gamma(1.0, 1.0) == 1.0


def test_centered_sampling_mean(rng):
    b = center_gamma(1.74, 107.21e-5)
    x = rng.gamma(1.74, 1 / b, 1_000_000)
    assert x.mean() == pytest.approx(107.21e-5, rel=0.005)
    mu = center_lognormal(0.6, 107.21e-5)
    y = rng.lognormal(mu, 0.6, 1_000_000)
    assert y.mean() == pytest.approx(107.21e-5, rel=0.005)


def test_sample_table_vary_none(icrp, rng):
    assert sample_mortality_table(bundled_rate_distributions(), icrp, rng, vary=()) is icrp


def test_sample_table_group_means(icrp):
    dists = bundled_rate_distributions()
    rng = np.random.default_rng(0)
    draws = np.array([sample_mortality_table(dists, icrp, rng, vary=("r0",)).r0
                      for _ in range(20_000)])
    for fit in dists["r0"].groups:
        col = draws[:, fit.age_start]
        # one draw per group: every age of the group carries the same value
        assert np.all(draws[:, fit.age_end] == col)
        assert col.mean() == pytest.approx(fit.mean, rel=0.03)
    # q0 untouched
    t = sample_mortality_table(dists, icrp, rng, vary=("r0",))
    np.testing.assert_array_equal(t.q0, icrp.q0)


def test_sample_table_missing_group(icrp, rng):
    partial = RateDistribution("r0", (GroupFit(20, 24, "gamma", (2.0, 1e5)),))
    with pytest.raises(DataError):
        sample_mortality_table({"r0": partial}, icrp, rng, vary=("r0",))


def test_bundled_fits_cover_table_groups(icrp):
    # international fits: same order of magnitude as the table, not centred on it
    for rate in ("r0", "q0"):
        arr = icrp.r0 if rate == "r0" else icrp.q0
        dist = bundled_rate_distributions()[rate]
        assert not dist.centered
        assert [(g.age_start, g.age_end) for g in dist.groups] == [g for g in icrp.groups if g[0] >= 20]
        for g in dist.groups:
            assert 0.3 < g.mean / arr[g.age_start] < 3.5


def test_pooled_rate_examples():
    assert round(poisson_pooled_rate([(326, 195.89e6)]) * 1e6, 2) == 1.66
    assert poisson_pooled_rate([(5, 100)]) == 0.05
    assert round(poisson_pooled_rate([(5833, 5.24e6)]) * 1e6, 2) == 1113.17
    with pytest.raises(DataError):
        poisson_pooled_rate([])


@given(st.lists(st.tuples(st.integers(1, 10_000), st.floats(1e3, 1e8)), min_size=1, max_size=30))
def test_pooled_rate_between_extremes(pairs):
    r = poisson_pooled_rate(pairs)
    rates = [d / n for d, n in pairs]
    assert min(rates) * (1 - 1e-12) <= r <= max(rates) * (1 + 1e-12)


def test_theta_posterior_flat_prior(rng):
    obs = [(120, 1e6), (80, 5e5), (300, 2e6)]
    post = theta_posterior(obs, None, rng, n_samples=2000)
    assert post.mode == math.log(500 / 3.5e6)
    assert post.curvature == pytest.approx(500.0, rel=1e-12)
    # finite-difference curvature of the log posterior
    D, N = 500, 3.5e6
    f = lambda th: D * th - N * math.exp(th)  # noqa: E731
    h = 1e-4
    fd = -(f(post.mode + h) - 2 * f(post.mode) + f(post.mode - h)) / h**2
    assert fd == pytest.approx(D, rel=1e-4)
    assert post.samples.mean() == pytest.approx(post.mode, abs=4 / math.sqrt(D))


def test_theta_posterior_prior_domination(rng):
    mu = math.log(2e-4)
    post = theta_posterior([(120, 1e6)], (mu, 1e-6), n_samples=0)
    assert post.mode == pytest.approx(mu, abs=1e-6)


def test_theta_posterior_likelihood_dominates():
    obs = [(50_000, 1e8), (60_000, 1.1e8)]
    mu = math.log(110_000 / 2.1e8) + 0.2
    post = theta_posterior(obs, (mu, 0.05), n_samples=0)
    grid = np.linspace(post.mode - 0.01, post.mode + 0.01, 200_001)
    D, N = 110_000, 2.1e8
    lp = D * grid - N * np.exp(grid) - 0.5 * ((grid - mu) / 0.05) ** 2
    assert post.mode == pytest.approx(grid[np.argmax(lp)], abs=2e-7)
    assert abs(post.mode - math.log(D / N)) < 1e-3


def test_theta_posterior_nonfinite():
    with pytest.raises(NumericalError):
        theta_posterior([(0, 1e6)], n_samples=0)


def test_observation_file(tmp_path):
    p = tmp_path / "obs.csv"
    p.write_text("country,sex,year,age_start,age_end,deaths,population\n"
                 "A,male,2010,60,64,10,1000\nA,female,2010,60,64,0,1000\n"
                 "B,both,2011,60,64,30,2000\n")
    obs = load_observations(p)
    assert len(obs) == 2 and obs[0].rate == 0.01
    with pytest.raises(DataError):
        load_observations(p, drop_nonpositive=False)
    with pytest.raises(DataError):
        RateObservation("A", "other", 2010, 60, 64, 1, 1)


def test_fit_bundled_extract_roundtrip(tmp_path, icrp, rng):
    obs = load_observations(bundled_path("synthetic_obs_r0.csv"))
    dist = fit_rate_distribution(obs, "r0", "gamma")
    assert all(g.params[0] > 0 and g.params[1] > 0 for g in dist.groups)
    save_rate_distributions({"r0": dist}, tmp_path / "f.json")
    back = load_rate_distributions(tmp_path / "f.json")
    t = sample_mortality_table(back, icrp, rng, vary=("r0",))
    assert isinstance(t, MortalityTable) and np.all(t.r0[20:] > 0)
    centered = fit_rate_distribution(obs, "r0", "lognormal", center_on=icrp)
    assert all(g.params[1] > 0 for g in centered.groups)
    for g in centered.groups:
        assert g.mean == pytest.approx(icrp.r0[g.age_start], rel=1e-12)
