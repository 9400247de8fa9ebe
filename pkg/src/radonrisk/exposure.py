"""Annual radon exposure histories and the covariates derived from them.

All covariates use lagged exposure: only exposure at ages ``u <= t - latency``
counts towards the value at attained age ``t``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import AgeGrid, DataError

__all__ = [
    "WL_MONTHS_PER_YEAR",
    "ExposureHistory",
    "Covariates",
    "occupational_scenario",
    "load_exposure_csv",
    "cumulative_exposure",
    "ame_tme",
    "window_exposures",
    "covariates",
    "sample_lognormal_history",
    "sample_lognormal_exposures",
]

# annual WLM -> WL; one working level month is 1 WL over 170 h, about 12 per year
WL_MONTHS_PER_YEAR = 12.0

# (name, years-ago start, years-ago end); None = open ended
WINDOWS = (("w5_14", 5, 14), ("w15_24", 15, 24), ("w25_34", 25, 34), ("w35p", 35, None))


@dataclass(frozen=True)
class ExposureHistory:
    """Per-age exposure ``w`` in WLM and exposure rate ``rate`` in WL."""

    w: np.ndarray
    rate: np.ndarray | None = None
    latency: int = 5

    def __post_init__(self):
        w = np.array(self.w, dtype=float)
        rate = w / WL_MONTHS_PER_YEAR if self.rate is None else np.array(self.rate, dtype=float)
        if w.ndim != 1 or rate.shape != w.shape:
            raise DataError("w and rate must be 1-D arrays of equal length")
        if np.any(w < 0) or np.any(rate < 0):
            raise DataError("exposure and exposure rate must be non-negative")
        if self.latency < 0:
            raise DataError("latency must be non-negative")
        w.setflags(write=False)
        rate.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "rate", rate)

    @property
    def t_max(self) -> int:
        return self.w.size - 1

    @property
    def total(self) -> float:
        return float(self.w.sum())

    def scaled(self, factor: float) -> "ExposureHistory":
        return ExposureHistory(self.w * factor, self.rate * factor, self.latency)


def occupational_scenario(
    annual_wlm: float = 2.0,
    age_from: int = 18,
    age_to: int = 64,
    grid: AgeGrid = AgeGrid(),
    latency: int = 5,
    wl_divisor: float = WL_MONTHS_PER_YEAR,
) -> ExposureHistory:
    """Constant ``annual_wlm`` for every age in ``[age_from, age_to]``."""
    if annual_wlm < 0:
        raise DataError("annual exposure must be non-negative")
    if not 0 <= age_from <= age_to <= grid.t_max:
        raise DataError(f"need 0 <= age_from <= age_to <= {grid.t_max}")
    w = np.zeros(grid.size)
    w[age_from : age_to + 1] = annual_wlm
    return ExposureHistory(w, w / wl_divisor, latency)


def load_exposure_csv(path, grid: AgeGrid = AgeGrid(), latency: int = 5,
                      wl_divisor: float = WL_MONTHS_PER_YEAR) -> ExposureHistory:
    """Read ``age,wlm[,wl]``; ages not listed have zero exposure."""
    w = np.zeros(grid.size)
    rate = np.zeros(grid.size)
    with open(Path(path), newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"age", "wlm"} <= set(reader.fieldnames):
            raise DataError(f"{path}: header must contain age,wlm")
        for lineno, row in enumerate(reader, start=2):
            try:
                age = int(row["age"])
                wlm = float(row["wlm"])
                wl = float(row["wl"]) if row.get("wl") not in (None, "") else wlm / wl_divisor
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if not 0 <= age <= grid.t_max:
                raise DataError(f"{path}:{lineno}: age {age} outside 0..{grid.t_max}")
            w[age] = wlm
            rate[age] = wl
    return ExposureHistory(w, rate, latency)


def _padded_cumsum(w: np.ndarray) -> np.ndarray:
    # P[..., i] = sum of w[..., :i]
    shape = w.shape[:-1] + (1,)
    return np.concatenate([np.zeros(shape), np.cumsum(w, axis=-1)], axis=-1)


def _range_sum(P: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Sum of w[u] for lo <= u <= hi, vectorised over the last axis of P."""
    n = P.shape[-1] - 1
    a = np.clip(lo, 0, n)
    b = np.clip(hi + 1, 0, n)
    b = np.maximum(a, b)
    return np.take(P, b, axis=-1) - np.take(P, a, axis=-1)


def _lagged_cumulative(w: np.ndarray, latency: int) -> np.ndarray:
    t = np.arange(w.shape[-1])
    return _range_sum(_padded_cumsum(w), np.zeros_like(t), t - latency)


def _ame_row(w: np.ndarray, latency: int) -> np.ndarray:
    """Age at median lagged exposure for every attained age (NaN where W = 0)."""
    T = w.size
    cs = np.cumsum(w)
    ame = np.full(T, np.nan)
    t = np.arange(T)
    idx = t - latency
    ok = idx >= 0
    W = np.where(ok, cs[np.clip(idx, 0, T - 1)], 0.0)
    ok &= W > 0
    if not ok.any():
        return ame
    half = W[ok] / 2
    k = np.searchsorted(cs, half, side="left")
    prev = np.where(k > 0, cs[np.maximum(k - 1, 0)], 0.0)
    frac = (half - prev) / w[k]
    val = k + frac
    # running sum flat at exactly W/2 across unexposed years: take the midpoint
    # of the bracketing exposed ages. Adjacent exposed years are no tie.
    tie = (cs[k] == half) & (w[np.minimum(k + 1, T - 1)] == 0)
    if tie.any():
        nz = np.flatnonzero(w > 0)
        nxt = nz[np.searchsorted(nz, k[tie], side="right")]
        val[tie] = (k[tie] + nxt) / 2
    ame[ok] = val
    return ame


@dataclass(frozen=True)
class Covariates:
    """Risk-model covariates, one entry per cell or attained age.

    Arrays share a common shape; for histories this is ``(..., T)``. Any of
    the optional fields may be ``None`` if the models in use do not need
    them. ``rate_cat`` overrides the lookup of ``rate`` when given.
    """

    W: np.ndarray
    AME: np.ndarray | None = None
    TME: np.ndarray | None = None
    windows: dict = field(default_factory=dict)
    rate: np.ndarray | None = None
    age: np.ndarray | None = None
    rate_cat: np.ndarray | None = None

    @property
    def shape(self) -> tuple:
        return np.shape(self.W)

    def take(self, index) -> "Covariates":
        sel = lambda a: None if a is None else np.asarray(a)[index]  # noqa: E731
        return Covariates(
            sel(self.W), sel(self.AME), sel(self.TME),
            {k: sel(v) for k, v in self.windows.items()},
            sel(self.rate), sel(self.age), sel(self.rate_cat),
        )


def covariates(w, rate=None, latency: int = 5) -> Covariates:
    """Covariates at every attained age for one history or a batch ``(n, T)``."""
    w = np.asarray(w, dtype=float)
    T = w.shape[-1]
    t = np.arange(T)
    P = _padded_cumsum(w)
    W = _range_sum(P, np.zeros_like(t), t - latency)
    if w.ndim == 1:
        ame = _ame_row(w, latency)
    else:
        flat = w.reshape(-1, T)
        ame = np.stack([_ame_row(row, latency) for row in flat]).reshape(w.shape)
    tme = t - ame
    windows = {}
    for name, a, b in WINDOWS:
        lo = np.zeros_like(t) if b is None else t - b
        windows[name] = _range_sum(P, lo, t - a)
    windows["w25p"] = windows["w25_34"] + windows["w35p"]
    if rate is None:
        rate = w / WL_MONTHS_PER_YEAR
    age = np.broadcast_to(t, w.shape)
    return Covariates(W, ame, tme, windows, np.asarray(rate, dtype=float), age)


def cumulative_exposure(h: ExposureHistory, t: int) -> float:
    """Lagged cumulative exposure W(t) in WLM."""
    if not 0 <= t <= h.t_max:
        raise ValueError(f"age {t} outside 0..{h.t_max}")
    return float(h.w[: max(t - h.latency + 1, 0)].sum())


def ame_tme(h: ExposureHistory, t: int) -> tuple[float, float]:
    """Age at, and time since, the median of lagged exposure at attained age ``t``.

    The running sum is linearly interpolated within the year in which it
    crosses W(t)/2, with year ``u`` spanning ``[u, u+1)``. When the sum
    reaches exactly W(t)/2 at the end of exposed year ``k`` and the following
    years are unexposed, the result is ``(k + j) / 2`` with ``j`` the next
    exposed age.
    """
    if not 0 <= t <= h.t_max:
        raise ValueError(f"age {t} outside 0..{h.t_max}")
    if cumulative_exposure(h, t) <= 0:
        raise ValueError(f"AME undefined at age {t}: no lagged exposure")
    ame = float(_ame_row(h.w, h.latency)[t])
    return ame, t - ame


def window_exposures(h: ExposureHistory, t: int) -> dict:
    """Exposure received 5-14, 15-24, 25-34, 35+ and 25+ years before age ``t``."""
    if not 0 <= t <= h.t_max:
        raise ValueError(f"age {t} outside 0..{h.t_max}")
    P = _padded_cumsum(h.w)
    out = {}
    for name, a, b in WINDOWS:
        lo = 0 if b is None else t - b
        out[name] = float(_range_sum(P, np.array(lo), np.array(t - a)))
    out["w25p"] = out["w25_34"] + out["w35p"]
    return out


def sample_lognormal_exposures(
    mean_wlm: float,
    sigma: float,
    age_from: int,
    age_to: int,
    rng: np.random.Generator,
    n: int,
    grid: AgeGrid = AgeGrid(),
) -> np.ndarray:
    """``n`` exposure rows ``(n, T)`` with independent log-normal annual values.

    Each exposed year draws ``LogNormal(log(mean_wlm) - sigma**2/2, sigma**2)``
    so its mean is ``mean_wlm``.
    """
    if mean_wlm <= 0:
        raise DataError("mean annual exposure must be positive")
    if sigma < 0:
        raise DataError("sigma must be non-negative")
    if not 0 <= age_from <= age_to <= grid.t_max:
        raise DataError(f"need 0 <= age_from <= age_to <= {grid.t_max}")
    out = np.zeros((n, grid.size))
    k = age_to - age_from + 1
    if sigma == 0:
        out[:, age_from : age_to + 1] = mean_wlm
    else:
        mu = np.log(mean_wlm) - sigma**2 / 2
        out[:, age_from : age_to + 1] = rng.lognormal(mu, sigma, size=(n, k))
    return out


def sample_lognormal_history(
    mean_wlm: float,
    sigma: float,
    age_from: int,
    age_to: int,
    rng: np.random.Generator,
    grid: AgeGrid = AgeGrid(),
    latency: int = 5,
    wl_divisor: float = WL_MONTHS_PER_YEAR,
) -> ExposureHistory:
    """One randomised history; ``sigma = 0`` gives the constant scenario."""
    w = sample_lognormal_exposures(mean_wlm, sigma, age_from, age_to, rng, 1, grid)[0]
    return ExposureHistory(w, w / wl_divisor, latency)
