"""
Kaplan-Meier curves by cumulative exposure
==========================================

Lung cancer survival per exposure category for the bundled synthetic
subjects, the naive LEAR read off at age 85 and a log-rank comparison.
"""

# %%
from radonrisk.core import bundled_path
from radonrisk.km import exposure_category, km_estimate, load_subjects, logrank_test, naive_lear_table

subjects = load_subjects(bundled_path("synthetic_subjects.csv"))
curves = km_estimate(subjects)
for cat, c in curves.items():
    print(f"{cat:>12}: {c.n_subjects:5d} subjects, {int(c.d.sum()):4d} deaths, "
          f"S(85) = {c.survival(85):.4f}")

# %%
for cat, res in naive_lear_table(curves, "none", cut_age=85).items():
    print(f"{cat:>12}: naive LEAR (%)", res.scaled(100))

# %%
none = [s for s in subjects if exposure_category(s.cumulative_wlm) == "none"]
high = [s for s in subjects if exposure_category(s.cumulative_wlm) == "[500,1000)"]
stat, p = logrank_test(none, high)
print(f"log-rank none vs [500,1000): chi2 {stat:.2f}, p {p:.2g}")
