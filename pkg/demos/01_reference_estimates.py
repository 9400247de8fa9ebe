"""
Reference lifetime risks
========================

Deterministic ELR, REID, LEAR and RADS for a miner exposed to 2 WLM per
year from age 18 to 64, with the bundled mixed-population mortality table.
"""

# %%
from radonrisk import all_measures, bundled_model, load_mortality_table, occupational_scenario
from radonrisk.ana import constant_C

table = load_mortality_table()
h = occupational_scenario(2.0, 18, 64)

# %%
# The linear model reduces to slope times a constant of the table and scenario.
C = constant_C(table, h)
print(f"C = {C:.3f}  (LEAR per unit slope)")

for name in ("simple_linear_sub", "parametric_sub"):
    model = bundled_model(name)
    m = all_measures(table, model, h)
    print(f"{model.label:45s}", "  ".join(f"{k.upper()} {100 * v:5.2f}%" for k, v in m.items()))

# %%
# Risk grows with the annual exposure, but not quite linearly for RADS.
linear = bundled_model("simple_linear_sub")
for wlm in (0.5, 1, 2, 4, 8):
    m = all_measures(table, linear, occupational_scenario(wlm, 18, 64))
    print(f"{wlm:4} WLM/yr  LEAR {100 * m['lear']:6.2f}%  RADS {100 * m['rads']:6.2f}%")
