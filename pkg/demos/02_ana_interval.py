"""
Parameter uncertainty under asymptotic normality
================================================

Draw risk-model parameters from their estimated normal distribution and
push each draw through the LEAR. For the linear model the interval also has
a closed form, which the simulation should reproduce.
"""

# %%
import numpy as np

from radonrisk import bundled_model, load_mortality_table, occupational_scenario
from radonrisk.ana import analytic_linear, constant_C, kde, mc_distribution, percentile_interval

table = load_mortality_table()
h = occupational_scenario(2.0, 18, 64)
linear = bundled_model("simple_linear_sub")

# %%
samples = mc_distribution(linear, table, h, "lear", n=100_000, seed=1, workers=4)
mc = percentile_interval(samples)
exact = analytic_linear(linear.theta[0], linear.se[0], constant_C(table, h))
print("Monte Carlo (%)", mc.scaled(100))
print("closed form (%)", exact.scaled(100))

# %%
# The parametric model has no closed form; its interval is skewed.
parametric = bundled_model("parametric_sub")
res = percentile_interval(mc_distribution(parametric, table, h, "lear", 100_000, seed=2))
print(f"parametric LEAR {100 * res.point_estimate:.2f}% "
      f"[{100 * res.lower:.2f}, {100 * res.upper:.2f}], relative span {res.relative_span:.2f}")

# %%
curve = kde(samples)
peak = curve.x[np.argmax(curve.density)]
print(f"density peak at LEAR {100 * peak:.2f}%, bandwidth {100 * curve.bandwidth:.3f} pp")
