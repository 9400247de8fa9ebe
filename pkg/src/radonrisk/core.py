"""Shared domain types: age grid, mortality tables and uncertainty results."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

__all__ = [
    "RadonRiskError",
    "DataError",
    "NumericalError",
    "ConfigError",
    "AgeGrid",
    "MortalityTable",
    "UncertaintyResult",
    "load_mortality_table",
    "bundled_path",
    "relative_uncertainty_span",
]


class RadonRiskError(Exception):
    """Base class for errors raised by this package."""


class DataError(RadonRiskError, ValueError):
    """Malformed or inconsistent input data."""


class NumericalError(RadonRiskError, ArithmeticError):
    """A numerical procedure failed (non-PSD matrix, stuck sampler, ...)."""


class ConfigError(RadonRiskError, ValueError):
    """Invalid or incomplete run configuration."""


def bundled_path(name: str) -> Path:
    """Path of a data file shipped inside the package (``data/<name>``)."""
    return Path(str(resources.files("radonrisk") / "data" / name))


@dataclass(frozen=True)
class AgeGrid:
    """Integer ages ``0..t_max`` inclusive."""

    t_max: int = 94

    def __post_init__(self):
        if int(self.t_max) != self.t_max or self.t_max < 1:
            raise ValueError(f"t_max must be an integer >= 1, got {self.t_max!r}")

    @property
    def size(self) -> int:
        return self.t_max + 1

    @property
    def ages(self) -> np.ndarray:
        return np.arange(self.size)


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class MortalityTable:
    """Per-age baseline lung cancer rate ``r0`` and all-cause rate ``q0``.

    Rates are deaths per person-year. ``groups`` keeps the tabulated age
    groups the table was expanded from; rate distributions are attached to
    those groups.
    """

    r0: np.ndarray
    q0: np.ndarray
    label: str = ""
    groups: tuple[tuple[int, int], ...] = ()
    check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        r0 = _frozen(self.r0)
        q0 = _frozen(self.q0)
        object.__setattr__(self, "r0", r0)
        object.__setattr__(self, "q0", q0)
        object.__setattr__(self, "groups", tuple(tuple(map(int, g)) for g in self.groups))
        if r0.ndim != 1 or r0.shape != q0.shape:
            raise DataError("r0 and q0 must be 1-D arrays of equal length")
        if not self.check:
            return
        if not (np.all(np.isfinite(r0)) and np.all(np.isfinite(q0))):
            raise DataError("mortality rates must be finite")
        if np.any(r0 < 0) or np.any(q0 < 0):
            raise DataError("mortality rates must be non-negative")
        bad = np.flatnonzero(r0 > q0)
        if bad.size:
            raise DataError(f"r0 exceeds q0 at ages {bad.tolist()}")

    @property
    def t_max(self) -> int:
        return self.r0.size - 1

    @property
    def grid(self) -> AgeGrid:
        return AgeGrid(self.t_max)

    def replace(self, r0=None, q0=None, label=None, check=True) -> "MortalityTable":
        return MortalityTable(
            self.r0 if r0 is None else r0,
            self.q0 if q0 is None else q0,
            self.label if label is None else label,
            self.groups,
            check,
        )

    def scaled(self, r0_factor: float = 1.0, q0_factor: float = 1.0) -> "MortalityTable":
        return self.replace(self.r0 * r0_factor, self.q0 * q0_factor)


def load_mortality_table(
    path=None,
    grid: AgeGrid = AgeGrid(),
    fill_below: str = "first_q0",
    label: str | None = None,
) -> MortalityTable:
    """Read an age-group CSV (``age_start,age_end,r0,q0``) and expand it to single ages.

    Each age in ``[age_start, age_end]`` receives its group's rates. Ages
    below the first group get ``r0 = 0`` and either the first group's ``q0``
    (``fill_below="first_q0"``) or zero (``fill_below="zero"``). Groups
    must be sorted, contiguous and reach ``grid.t_max``; ages above
    ``grid.t_max`` are dropped.

    ``path=None`` loads the bundled ICRP 103 mixed-population table.
    """
    if path is None:
        path = bundled_path("icrp103_mixed.csv")
        label = label or "ICRP 103 Euro-American-Asian"
    path = Path(path)
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        needed = {"age_start", "age_end", "r0", "q0"}
        if reader.fieldnames is None or not needed <= {f.strip() for f in reader.fieldnames}:
            raise DataError(f"{path}: header must contain {sorted(needed)}")
        for lineno, raw in enumerate(reader, start=2):
            row = {k.strip(): (v or "").strip() for k, v in raw.items() if k is not None}
            try:
                a0, a1 = int(row["age_start"]), int(row["age_end"])
                r0, q0 = float(row["r0"]), float(row["q0"])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if a1 < a0 or a0 < 0:
                raise DataError(f"{path}:{lineno}: bad age range {a0}-{a1}")
            if r0 < 0 or q0 < 0:
                raise DataError(f"{path}:{lineno}: negative rate")
            if r0 > q0:
                raise DataError(f"{path}:{lineno}: r0 > q0")
            rows.append((a0, a1, r0, q0))
    if not rows:
        raise DataError(f"{path}: no age groups")
    for (s0, e0, *_), (s1, e1, *_) in zip(rows, rows[1:]):
        if s1 != e0 + 1:
            raise DataError(f"{path}: groups {s0}-{e0} and {s1}-{e1} are not contiguous")
    if rows[-1][1] < grid.t_max:
        raise DataError(f"{path}: last group ends at {rows[-1][1]} < t_max={grid.t_max}")

    r0 = np.zeros(grid.size)
    q0 = np.zeros(grid.size)
    groups = []
    for a0, a1, r, q in rows:
        if a0 > grid.t_max:
            break
        hi = min(a1, grid.t_max)
        r0[a0 : hi + 1] = r
        q0[a0 : hi + 1] = q
        groups.append((a0, hi))
    first = rows[0][0]
    if first > 0:
        if fill_below == "first_q0":
            q0[:first] = rows[0][3]
        elif fill_below != "zero":
            raise ValueError(f"unknown fill policy {fill_below!r}")
    return MortalityTable(r0, q0, label if label is not None else path.stem, tuple(groups))


@dataclass(frozen=True)
class UncertaintyResult:
    """Point estimate with a two-sided interval."""

    point_estimate: float
    lower: float
    upper: float
    level: float = 0.95
    method: str = "percentile"
    n_samples: int = 0
    seed: int | None = None

    METHODS = ("percentile", "hpdi", "wald-analytic", "greenwood", "naive-km")

    def __post_init__(self):
        for name in ("point_estimate", "lower", "upper", "level"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not 0 < self.level < 1:
            raise ValueError("level must lie in (0, 1)")
        if self.lower > self.upper:
            raise ValueError(f"lower bound {self.lower} exceeds upper bound {self.upper}")
        if self.method not in self.METHODS:
            raise ValueError(f"unknown interval method {self.method!r}")

    def __str__(self) -> str:
        return (f"{self.point_estimate:.4g} [{self.lower:.4g}, {self.upper:.4g}] "
                f"({self.method}, {100 * self.level:g}%)")

    @property
    def relative_span(self) -> float:
        if self.point_estimate == 0:
            return float("nan")
        return (self.upper - self.lower) / self.point_estimate

    def scaled(self, factor: float) -> "UncertaintyResult":
        lo, hi = sorted((self.lower * factor, self.upper * factor))
        return UncertaintyResult(
            self.point_estimate * factor, lo, hi, self.level, self.method, self.n_samples, self.seed
        )

    def to_dict(self) -> dict:
        return {
            "estimate": self.point_estimate,
            "lower": self.lower,
            "upper": self.upper,
            "level": self.level,
            "method": self.method,
            "n": self.n_samples,
            "seed": self.seed,
            "relative_span": None if self.point_estimate == 0 else self.relative_span,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kw)


def relative_uncertainty_span(result: UncertaintyResult) -> float:
    """Interval width divided by the point estimate."""
    if result.point_estimate == 0:
        raise ZeroDivisionError("relative span undefined for a zero point estimate")
    return (result.upper - result.lower) / result.point_estimate
