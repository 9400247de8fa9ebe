"""Survival curves and the four excess lifetime risk measures.

With baseline lung cancer rate ``r0``, all-cause rate ``q0`` and an ERR
profile over integer ages ``0..t_max``:

* baseline survival ``S0(t) = exp(-sum_{u<t} q0(u))``
* exposed survival ``SE(t) = S0(t) * exp(-sum_{u<t} r0(u) ERR(u))``
* ``LEAR = sum r0 ERR S0``
* ``REID = sum r0 ERR SE``
* ``ELR  = sum r0 (1 + ERR) SE - r0 S0``
* ``RADS = 1 - exp(-sum r0 ERR)``

Every function here broadcasts over leading batch axes so Monte Carlo
replicates can be evaluated in one call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import AgeGrid, DataError, MortalityTable
from .exposure import ExposureHistory
from .models import RiskModel, err_profile

__all__ = [
    "MEASURES",
    "SurvivalCurve",
    "survival_baseline",
    "survival_exposed",
    "lear",
    "reid",
    "elr",
    "rads",
    "all_measures",
    "measures_from_profile",
]

MEASURES = ("lear", "reid", "elr", "rads")


@dataclass(frozen=True)
class SurvivalCurve:
    """Survival probability at each integer age; ``kind`` is baseline or exposed."""

    s: np.ndarray
    kind: str = "baseline"

    def __post_init__(self):
        s = np.array(self.s, dtype=float)
        if self.kind not in ("baseline", "exposed"):
            raise ValueError(f"unknown curve kind {self.kind!r}")
        s.setflags(write=False)
        object.__setattr__(self, "s", s)

    def __call__(self, t: int) -> float:
        return float(self.s[t])


def _survival_from_hazard(h: np.ndarray) -> np.ndarray:
    # exp(-sum_{u<t} h(u)) along the last axis, starting at 1
    c = np.cumsum(h, axis=-1)
    c = np.concatenate([np.zeros(c.shape[:-1] + (1,)), c[..., :-1]], axis=-1)
    return np.exp(-c)


def _check(table: MortalityTable, grid: AgeGrid | None, n: int):
    size = table.r0.size if grid is None else grid.size
    if table.r0.size < size or n != size:
        raise DataError(f"table ({table.r0.size} ages) and profile ({n}) must cover {size} ages")


def _profile(model, h):
    return err_profile(model, h) if isinstance(model, RiskModel) else np.asarray(model, dtype=float)


def survival_baseline(table: MortalityTable, grid: AgeGrid | None = None) -> SurvivalCurve:
    size = table.r0.size if grid is None else grid.size
    return SurvivalCurve(_survival_from_hazard(table.q0[:size]), "baseline")


def survival_exposed(table: MortalityTable, model, h: ExposureHistory | None = None,
                     grid: AgeGrid | None = None) -> SurvivalCurve:
    """Exposed survival. ``model`` may also be a precomputed ERR profile."""
    e = _profile(model, h)
    _check(table, grid, e.shape[-1])
    return SurvivalCurve(_survival_from_hazard(table.q0 + table.r0 * e), "exposed")


def measures_from_profile(r0, q0, err, which=MEASURES) -> dict:
    """Risk measures for an ERR profile; ``r0``, ``q0``, ``err`` broadcast.

    Arrays carry ages on the last axis. Returns a dict of arrays with the
    age axis summed out.
    """
    r0 = np.asarray(r0, dtype=float)
    q0 = np.asarray(q0, dtype=float)
    e = np.asarray(err, dtype=float)
    excess = r0 * e
    out = {}
    need_exp = {"reid", "elr"} & set(which)
    s0 = _survival_from_hazard(q0) if need_exp or "lear" in which else None
    se = s0 * _survival_from_hazard(excess) if need_exp else None
    if "lear" in which:
        out["lear"] = np.sum(excess * s0, axis=-1)
    if need_exp:
        reid = np.sum(excess * se, axis=-1)
        if "reid" in which:
            out["reid"] = reid
        if "elr" in which:
            # same sum as r0(1+ERR)SE - r0 S0, arranged so ELR <= REID holds exactly
            out["elr"] = reid + np.sum(r0 * (se - s0), axis=-1)
    if "rads" in which:
        out["rads"] = -np.expm1(-np.sum(excess, axis=-1))
    unknown = set(which) - set(MEASURES)
    if unknown:
        raise ValueError(f"unknown measures {sorted(unknown)}")
    return out


def _measure(name, table, model, h, grid):
    e = _profile(model, h)
    _check(table, grid, e.shape[-1])
    return float(measures_from_profile(table.r0, table.q0, e, (name,))[name])


def lear(table: MortalityTable, model, h: ExposureHistory | None = None,
         grid: AgeGrid | None = None) -> float:
    """Lifetime excess absolute risk, weighted by baseline survival."""
    return _measure("lear", table, model, h, grid)


def reid(table: MortalityTable, model, h: ExposureHistory | None = None,
         grid: AgeGrid | None = None) -> float:
    """Risk of exposure-induced death, weighted by exposed survival."""
    return _measure("reid", table, model, h, grid)


def elr(table: MortalityTable, model, h: ExposureHistory | None = None,
        grid: AgeGrid | None = None) -> float:
    """Excess lifetime risk: exposed minus baseline lifetime lung cancer risk."""
    return _measure("elr", table, model, h, grid)


def rads(table: MortalityTable, model, h: ExposureHistory | None = None,
         grid: AgeGrid | None = None) -> float:
    """Radiation-attributed decrease of survival; does not depend on ``q0``."""
    return _measure("rads", table, model, h, grid)


def all_measures(table: MortalityTable, model, h: ExposureHistory | None = None,
                 grid: AgeGrid | None = None) -> dict:
    e = _profile(model, h)
    _check(table, grid, e.shape[-1])
    return {k: float(v) for k, v in measures_from_profile(table.r0, table.q0, e).items()}
