"""
Uncertain annual exposure
=========================

Each working year draws its exposure from a log-normal with mean 2 WLM.
The LEAR sums many such years, so its distribution tightens and loses its
skew as the log-scale spread shrinks.
"""

# %%
from scipy import stats

from radonrisk import bundled_model, load_mortality_table, occupational_scenario
from radonrisk.ana import LogNormalExposure, mc_distribution, percentile_interval

table = load_mortality_table()
h = occupational_scenario(2.0, 18, 64)
linear = bundled_model("simple_linear_sub")

# %%
for sigma in (0.1, 0.5, 1.0, 2.0):
    s = mc_distribution(linear, table, h, "lear", 10_000, seed=6, vary="exposure",
                        exposure=LogNormalExposure(2.0, sigma, 18, 64))
    iv = percentile_interval(s)
    print(f"sigma {sigma:3.1f}: LEAR [{100 * iv.lower:.2f}, {100 * iv.upper:.2f}]%  "
          f"skew {stats.skew(s.values):6.3f}")
