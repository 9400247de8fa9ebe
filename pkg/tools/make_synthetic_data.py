"""Regenerate the synthetic input files shipped in ``radonrisk/data``.

    python tools/make_synthetic_data.py [--seed 20240601]

Writes rate observations in the country/sex/year layout for r0 and q0, a
grouped cohort drawn from the parametric sub-cohort model and a subject file
for the Kaplan-Meier command. All draws derive from one seed.
"""

import argparse
import csv
from pathlib import Path

import numpy as np

from radonrisk.cohort import CohortDesign, generate
from radonrisk.bayes import write_cohort_csv
from radonrisk.models import bundled_model
from radonrisk.mortality import bundled_rate_distributions

DATA = Path(__file__).resolve().parents[1] / "src" / "radonrisk" / "data"


def observations(dist, rng, n_countries=25, years=range(2010, 2016)):
    rows = []
    for g in dist.groups:
        for c in range(n_countries):
            for sex in ("male", "female"):
                for yr in years:
                    pop = int(np.round(np.exp(rng.uniform(np.log(2e4), np.log(3e6)))))
                    rate = g.sample(rng, 1)[0]
                    deaths = int(rng.poisson(rate * pop))
                    rows.append((f"C{c + 1:02d}", sex, yr, g.age_start, g.age_end, deaths, pop))
    return rows


def write_observations(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["country", "sex", "year", "age_start", "age_end", "deaths", "population"])
        w.writerows(rows)


def subjects(rng, n=8000):
    """Exit ages with a lung cancer hazard growing with cumulative exposure."""
    cats = np.array([0.0, 5.0, 30.0, 75.0, 250.0, 700.0, 1500.0])
    share = np.array([0.3, 0.15, 0.15, 0.1, 0.15, 0.1, 0.05])
    k = rng.choice(cats.size, n, p=share)
    wlm = np.where(cats[k] == 0, 0.0, cats[k] * rng.uniform(0.6, 1.3, n))
    # Gompertz baseline hazard from age 40, scaled by 1 + 0.002 * WLM
    b, c = 3e-6, 0.09
    scale = b * (1 + 0.002 * wlm)
    u = rng.random(n)
    event_age = 40 + np.log1p(-np.log(u) * c / scale / np.exp(c * 40)) / c
    censor_age = rng.uniform(60, 100, n)
    exit_age = np.round(np.minimum(event_age, censor_age) * 365.25) / 365.25
    return exit_age, event_age <= censor_age, np.round(wlm, 1)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=20240601)
    args = ap.parse_args()
    ss = np.random.SeedSequence(args.seed)
    r_obs, r_coh, r_km = (np.random.default_rng(s) for s in ss.spawn(3))

    dists = bundled_rate_distributions()
    for rate in ("r0", "q0"):
        write_observations(observations(dists[rate], r_obs), DATA / f"synthetic_obs_{rate}.csv")

    cohort = generate(CohortDesign(), bundled_model("parametric_sub"), r_coh)
    write_cohort_csv(cohort, DATA / "synthetic_cohort.csv")

    age, event, wlm = subjects(r_km)
    with open(DATA / "synthetic_subjects.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "exit_age", "event", "cumulative_wlm"])
        for i in range(age.size):
            w.writerow([i + 1, f"{age[i]:.4f}", int(event[i]), f"{wlm[i]:g}"])


if __name__ == "__main__":
    main()
