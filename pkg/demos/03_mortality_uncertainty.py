"""
Baseline mortality as a source of uncertainty
=============================================

Fit per-age-group gamma distributions to national death counts, then
redraw the baseline lung cancer rate of the table inside the Monte Carlo
loop. Observations here are the bundled synthetic extract.
"""

# %%
from radonrisk import bundled_model, load_mortality_table, occupational_scenario
from radonrisk.ana import mc_distribution, percentile_interval
from radonrisk.core import bundled_path
from radonrisk.mortality import (bundled_rate_distributions, fit_rate_distribution,
                                 load_observations, poisson_pooled_rate)

table = load_mortality_table()
h = occupational_scenario(2.0, 18, 64)
obs = load_observations(bundled_path("synthetic_obs_r0.csv"))

# %%
fit = fit_rate_distribution(obs, "r0", "gamma")
for g in fit.groups[::3]:
    pooled = poisson_pooled_rate([o for o in obs if o.age_start == g.age_start])
    print(f"{g.age_start}-{g.age_end}: shape {g.params[0]:6.2f}  mean {g.mean:.2e}  "
          f"pooled {pooled:.2e}  table {table.r0[g.age_start]:.2e}")

# %%
# Centring keeps each group's shape but moves its mean onto the table value.
centred = fit_rate_distribution(obs, "r0", "gamma", center_on=table)
rates = {"r0": centred, "q0": bundled_rate_distributions()["q0"]}
linear = bundled_model("simple_linear_sub")
for per in ("group", "age"):
    s = mc_distribution(linear, table, h, "lear", 50_000, seed=3, vary="r0", rates=rates,
                        rate_draws=per)
    print(f"one draw per {per:5s} (%):", percentile_interval(s).scaled(100))

# %%
# Parameters and baseline rates together.
parametric = bundled_model("parametric_sub")
s = mc_distribution(parametric, table, h, "lear", 50_000, seed=4, vary=("params", "r0"),
                    rates=rates)
print("joint (%):", percentile_interval(s).scaled(100))
