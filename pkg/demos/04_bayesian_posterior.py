"""
Posterior of the risk-model parameters
======================================

Grouped Poisson data, stratum baselines integrated out. A synthetic
cohort generated from the parametric model stands in for real mining data.
"""

# %%
import numpy as np

from radonrisk import bundled_model, load_mortality_table, occupational_scenario
from radonrisk.bayes import (GammaMode, PriorSpec, Uniform, find_mode, load_cohort_csv,
                             posterior_risk, posterior_target)
from radonrisk.core import bundled_path
from radonrisk.lifetime import lear
from radonrisk.models import RiskModel

table = load_mortality_table()
h = occupational_scenario(2.0, 18, 64)
model = bundled_model("parametric_sub")
cohort = load_cohort_csv(bundled_path("synthetic_cohort.csv"))
print(f"{cohort.n_cells} cells in {cohort.n_strata} strata, {int(cohort.cases.sum())} cases")

# %%
run = posterior_risk(cohort, model, table, h, n=20_000, burn_in=2_000, seed=1)
print("mode", np.round(run.mode, 4), "acceptance", round(run.acceptance_rate, 3))
print("LEAR HPDI (%)", run.interval.scaled(100))

# %%
# An informative gamma prior on beta pulls the mode towards its own value.
flat = run.mode
for a in (2, 10, 50):
    prior = PriorSpec((GammaMode(a, 0.5 * flat[0]), Uniform(), Uniform()))
    m = find_mode(posterior_target(cohort, model, prior), flat)
    print(f"a = {a:2d}: beta {m[0]:.4f}, LEAR at mode "
          f"{100 * lear(table, RiskModel('ParametricSub', m), h):.2f}%")
