"""Synthetic grouped cohorts drawn from a known ERR model.

Each cell gets random covariates, an ERR from the model and a Poisson case
count ``C ~ Poi(PY exp(delta_k) (1 + ERR))``. Used to exercise the
likelihood and the samplers where real cohort data is unavailable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bayes import GroupedCohort
from .core import DataError, NumericalError
from .exposure import Covariates
from .models import RiskModel, err_from_covariates

__all__ = ["CohortDesign", "generate"]


@dataclass(frozen=True)
class CohortDesign:
    """Layout and covariate ranges of a synthetic cohort.

    Parameters
    ----------
    n_strata, cells_per_stratum : int
        ``K`` strata of equal size.
    py_range : (float, float)
        Person-years per cell, uniform.
    log_rate_range : (float, float)
        Baseline log-rates ``delta_k``, evenly spaced over the strata.
    w_range : (float, float)
        Cumulative exposure of exposed cells in WLM, uniform.
    unexposed_fraction : float
        Share of cells with ``W = 0``.
    ame_range, tme_range : (float, float)
        Age at and time since median exposure in years, uniform.
    n_rate_classes : int
        Exposure-rate classes are drawn uniformly from ``0..n-1``.
    """

    n_strata: int = 20
    cells_per_stratum: int = 30
    py_range: tuple = (1e3, 1e5)
    log_rate_range: tuple = (np.log(1e-4), np.log(3e-3))
    w_range: tuple = (1.0, 400.0)
    unexposed_fraction: float = 0.2
    ame_range: tuple = (20.0, 50.0)
    tme_range: tuple = (5.0, 40.0)
    n_rate_classes: int = 6
    max_retries: int = 100

    def __post_init__(self):
        if self.n_strata < 1 or self.cells_per_stratum < 1:
            raise DataError("need at least one stratum and one cell per stratum")
        if not 0 < self.py_range[0] <= self.py_range[1]:
            raise DataError("person-years must be positive")
        for name in ("w_range", "ame_range", "tme_range"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise DataError(f"{name} must be non-degenerate")
        if self.w_range[0] < 0:
            raise DataError("exposure must be non-negative")
        if not 0 <= self.unexposed_fraction < 1:
            raise DataError("unexposed_fraction must lie in [0, 1)")

    @property
    def n_cells(self) -> int:
        return self.n_strata * self.cells_per_stratum

    def deltas(self) -> np.ndarray:
        return np.linspace(*self.log_rate_range, self.n_strata)


def _draw_covariates(design: CohortDesign, rng: np.random.Generator, n: int) -> Covariates:
    W = rng.uniform(*design.w_range, n)
    W[rng.random(n) < design.unexposed_fraction] = 0.0
    ame = rng.uniform(*design.ame_range, n)
    tme = rng.uniform(*design.tme_range, n)
    split = rng.dirichlet(np.ones(4), n) * W[:, None]
    windows = dict(zip(("w5_14", "w15_24", "w25_34", "w35p"), split.T))
    windows["w25p"] = windows["w25_34"] + windows["w35p"]
    rate_cat = rng.integers(0, design.n_rate_classes, n)
    exposed = W > 0
    return Covariates(W, np.where(exposed, ame, np.nan), np.where(exposed, tme, np.nan),
                      windows, None, ame + tme, rate_cat)


def _replace(cov: Covariates, new: Covariates, idx: np.ndarray) -> Covariates:
    def put(a, b):
        if a is None:
            return None
        a = np.array(a)
        a[idx] = b
        return a

    return Covariates(put(cov.W, new.W), put(cov.AME, new.AME), put(cov.TME, new.TME),
                      {k: put(v, new.windows[k]) for k, v in cov.windows.items()},
                      None, put(cov.age, new.age), put(cov.rate_cat, new.rate_cat))


def generate(design: CohortDesign, model: RiskModel, rng: np.random.Generator,
             deltas=None) -> GroupedCohort:
    """Draw a grouped cohort whose cases follow ``model``.

    Cells whose ERR makes the Poisson mean non-positive get fresh covariates,
    up to ``design.max_retries`` times.
    """
    if model.family == "ParametricFull" and design.n_rate_classes > model.n_rate_classes:
        raise DataError("design has more rate classes than the model")
    n = design.n_cells
    deltas = design.deltas() if deltas is None else np.asarray(deltas, dtype=float)
    if deltas.shape != (design.n_strata,):
        raise DataError(f"need {design.n_strata} baseline log-rates")
    stratum = np.repeat(np.arange(design.n_strata), design.cells_per_stratum)
    py = rng.uniform(*design.py_range, n)
    cov = _draw_covariates(design, rng, n)
    rel = 1.0 + err_from_covariates(model, cov)
    for _ in range(design.max_retries):
        bad = np.flatnonzero(~(rel > 0) | ~np.isfinite(rel))
        if bad.size == 0:
            break
        cov = _replace(cov, _draw_covariates(design, rng, bad.size), bad)
        rel = 1.0 + err_from_covariates(model, cov)
    else:
        if np.any(~(rel > 0) | ~np.isfinite(rel)):
            raise NumericalError("could not draw covariates with a positive case rate")
    mu = py * np.exp(deltas[stratum]) * rel
    cases = rng.poisson(mu)
    return GroupedCohort(py, cases, stratum, cov)
