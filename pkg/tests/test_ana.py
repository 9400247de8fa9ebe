import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from radonrisk.ana import (LogNormalExposure, SampleSet, analytic_linear, block_rng,
                           constant_C, kde, mc_distribution, measure_for_parameters,
                           percentile_interval, read_samples_csv, run_blocks, sample_mvn,
                           silverman_bandwidth, write_density_csv, write_samples_csv)
from radonrisk.core import DataError, NumericalError
from radonrisk.exposure import ExposureHistory
from radonrisk.lifetime import lear
from radonrisk.models import RiskModel
from radonrisk.mortality import bundled_rate_distributions


def test_mvn_identity_means(rng):
    x = sample_mvn(np.zeros(3), np.eye(3), 1_000_000, rng)
    assert np.all(np.abs(x.mean(axis=0)) < 0.005)


def test_mvn_zero_covariance(rng):
    x = sample_mvn([1.0, 2.0], np.zeros((2, 2)), 100, rng)
    assert np.all(x == [1.0, 2.0])


def test_mvn_wald_sds(rng, parametric):
    x = sample_mvn(parametric.theta, parametric.covariance, 200_000, rng)
    np.testing.assert_allclose(x.std(axis=0), parametric.se, rtol=0.01)


def test_mvn_partial_zero_variance(rng):
    cov = np.diag([0.0, 4.0])
    x = sample_mvn([5.0, 0.0], cov, 50_000, rng)
    assert np.all(x[:, 0] == 5.0)
    assert x[:, 1].std() == pytest.approx(2.0, rel=0.02)


def test_mvn_non_psd(rng):
    with pytest.raises(NumericalError, match="2"):
        sample_mvn([0, 0], [[1, 2], [2, 1]], 10, rng)


def test_mvn_deterministic():
    a = sample_mvn([0, 0], np.eye(2), 10, np.random.default_rng(5))
    b = sample_mvn([0, 0], np.eye(2), 10, np.random.default_rng(5))
    assert a.tobytes() == b.tobytes()


def test_percentile_order_statistics():
    r = percentile_interval(np.arange(1, 1001), 0.95)
    assert (r.lower, r.upper) == (26, 975)
    assert r.method == "percentile"
    c = percentile_interval(np.full(100, 3.0))
    assert c.lower == c.upper == 3.0


def test_percentile_too_few():
    with pytest.raises(DataError):
        percentile_interval(np.arange(39))


@given(st.integers(40, 3000), st.floats(0.5, 0.99), st.integers(0, 2**31))
def test_percentile_coverage_count(n, level, seed):
    x = np.random.default_rng(seed).normal(size=n)
    r = percentile_interval(x, level)
    inside = np.count_nonzero((x >= r.lower) & (x <= r.upper))
    assert level * n - 2 <= inside <= level * n + 2


def test_analytic_linear_moments():
    r = analytic_linear(0.0134, 0.003005, 4.27)
    assert r.point_estimate == pytest.approx(0.0572, abs=5e-5)
    var = (0.003005 * 4.27) ** 2
    assert var == pytest.approx(1.65e-4, abs=5e-7)
    lo, hi = stats.norm.interval(0.95, loc=0.0134 * 4.27, scale=np.sqrt(var))
    assert (r.lower, r.upper) == pytest.approx((lo, hi), rel=1e-12)
    assert r.method == "wald-analytic"


def test_analytic_linear_degenerate_and_nested():
    r = analytic_linear(0.0134, 0.0, 4.27)
    assert r.lower == r.upper == r.point_estimate
    a, b = analytic_linear(0.0134, 0.003, 4.27, 0.95), analytic_linear(0.0134, 0.003, 4.27, 0.99)
    assert b.lower < a.lower and b.upper > a.upper


def test_constant_c(icrp, scenario):
    C = constant_C(icrp, scenario)
    assert C == pytest.approx(4.27, rel=0.10)
    assert constant_C(icrp, ExposureHistory(np.zeros(95))) == 0


@pytest.mark.parametrize("factor", [5.49 / 4.27, 2.67 / 4.27])
def test_constant_c_scales_with_r0(icrp, scenario, factor):
    # a table whose lung cancer rates scale by f changes C by about f
    ratio = constant_C(icrp.scaled(r0_factor=factor), scenario) / constant_C(icrp, scenario)
    assert ratio == pytest.approx(factor, rel=0.02)


def test_linear_samples_are_beta_times_c(icrp, scenario, linear):
    s = mc_distribution(linear, icrp, scenario, n=5000, seed=3)
    C = constant_C(icrp, scenario)
    betas = run_blocks(5000, 3, lambda rng, m: sample_mvn(linear.theta, linear.covariance, m,
                                                          rng)[:, 0])
    np.testing.assert_allclose(s.values, betas * C, rtol=1e-12)


def test_linear_mc_matches_normal(icrp, scenario, linear):
    s = mc_distribution(linear, icrp, scenario, n=100_000, seed=11)
    a = analytic_linear(0.0134, 0.003005, constant_C(icrp, scenario))
    sd = (a.upper - a.point_estimate) / stats.norm.ppf(0.975)
    ks = stats.kstest(s.values, "norm", args=(a.point_estimate, sd)).statistic
    assert ks < 0.01
    assert s.values.var() == pytest.approx(sd**2, rel=0.02)


def test_vary_none_is_constant(icrp, scenario, parametric):
    s = mc_distribution(parametric, icrp, scenario, n=100, seed=0, vary=())
    assert np.all(s.values == lear(icrp, parametric, scenario))
    assert s.reference == s.values[0]


def test_mc_reproducible_across_workers(icrp, scenario, parametric):
    rates = bundled_rate_distributions()
    kw = dict(n=5000, seed=42, vary=("params", "r0", "q0"), rates=rates)
    a = mc_distribution(parametric, icrp, scenario, workers=1, **kw)
    b = mc_distribution(parametric, icrp, scenario, workers=4, **kw)
    assert a.values.tobytes() == b.values.tobytes()
    c = mc_distribution(parametric, icrp, scenario, workers=1, **{**kw, "seed": 43})
    assert a.values.tobytes() != c.values.tobytes()


def test_block_streams_independent_of_chunking():
    a = run_blocks(5000, 1, lambda rng, m: rng.random(m), block_size=2048)
    first = block_rng(1, 0).random(2048)
    np.testing.assert_array_equal(a[:2048], first)


def test_mc_requirements(icrp, scenario):
    bare = RiskModel.simple_linear(0.0134)
    with pytest.raises(DataError):
        mc_distribution(bare, icrp, scenario, n=10)
    with pytest.raises(DataError):
        mc_distribution(bare, icrp, scenario, n=10, vary=("r0",))
    with pytest.raises(DataError):
        mc_distribution(bare, icrp, scenario, n=10, vary=("exposure",))
    with pytest.raises(ValueError):
        mc_distribution(bare, icrp, scenario, n=10, vary=("sex",))


def test_mortality_span_per_age_draws(icrp, scenario, linear):
    """Relative span of the lung-cancer-rate effect on the linear model (soft check)."""
    s = mc_distribution(linear, icrp, scenario, n=20_000, seed=8, vary=("r0", "q0"),
                        rates=bundled_rate_distributions(), rate_draws="age")
    span = percentile_interval(s).relative_span
    assert 0.35 < span < 0.6


@pytest.mark.parametrize("name", ["simple_linear_sub", "parametric_sub"])
def test_joint_and_params_contain_estimate(icrp, scenario, name):
    from radonrisk.models import bundled_model
    m = bundled_model(name)
    rates = bundled_rate_distributions()
    for vary in (("params",), ("params", "r0")):
        r = percentile_interval(mc_distribution(m, icrp, scenario, n=10_000, seed=2, vary=vary,
                                                rates=rates))
        assert r.lower <= r.point_estimate <= r.upper


def test_exposure_variation(icrp, scenario, linear):
    exp = LogNormalExposure(2.0, 0.0)
    s = mc_distribution(linear, icrp, scenario, n=50, seed=1, vary=("exposure",), exposure=exp)
    np.testing.assert_allclose(s.values, lear(icrp, linear, scenario), rtol=1e-12)


def test_measure_for_parameters(icrp, scenario, parametric):
    th = parametric.theta + np.array([[0, 0, 0], [0.01, 0, 0]])
    v = measure_for_parameters(parametric, th, icrp, scenario, "reid")
    from radonrisk.lifetime import reid
    assert v[1] == pytest.approx(reid(icrp, parametric.with_theta(th[1]), scenario), rel=1e-12)


def test_kde_standard_normal(rng):
    x = rng.standard_normal(20_000)
    d = kde(x)
    assert abs(d.mode) < 0.15
    assert np.trapezoid(d.density, d.x) == pytest.approx(1.0, abs=0.01)
    assert d.x.size == 512
    assert d.bandwidth == pytest.approx(silverman_bandwidth(x))


def test_kde_two_points_symmetric():
    d = kde(np.array([0.0, 1.0]))
    np.testing.assert_allclose(d.density, d.density[::-1], rtol=1e-9, atol=1e-15)
    mid = d.density[d.x.size // 2]
    assert d.density.max() > mid


def test_kde_constant_error():
    with pytest.raises(DataError):
        kde(np.ones(10))


def test_csv_roundtrip(tmp_path, rng):
    s = SampleSet(rng.normal(size=50), 1, "lear")
    write_samples_csv(s, tmp_path / "s.csv")
    np.testing.assert_array_equal(read_samples_csv(tmp_path / "s.csv"), s.values)
    write_density_csv(kde(s), tmp_path / "d.csv")
    assert (tmp_path / "d.csv").read_text().startswith("x,density\n")


def test_sampleset_rejects_nonfinite():
    with pytest.raises(NumericalError):
        SampleSet(np.array([1.0, np.nan]))
