"""Kaplan-Meier lung cancer survival by cumulative exposure category.

Simultaneous events form one step with ``d_k > 1``. A subject censored at an
event time is still at risk for that event (``n_k`` counts exit ages
``>= t_k``).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .core import DataError, UncertaintyResult

__all__ = [
    "DEFAULT_BOUNDS",
    "SubjectRecord",
    "KMCurve",
    "load_subjects",
    "exposure_category",
    "category_labels",
    "km_curve",
    "km_estimate",
    "greenwood_interval",
    "naive_lear",
    "naive_lear_table",
    "logrank_test",
    "write_curves_csv",
]

DEFAULT_BOUNDS = (10.0, 50.0, 100.0, 500.0, 1000.0)


@dataclass(frozen=True)
class SubjectRecord:
    exit_age: float
    event: bool
    cumulative_wlm: float = 0.0

    def __post_init__(self):
        if not self.exit_age > 0:
            raise DataError("exit age must be positive")
        if not self.cumulative_wlm >= 0:
            raise DataError("cumulative exposure must be non-negative")


def load_subjects(path) -> list[SubjectRecord]:
    """Read ``id,exit_age,event,cumulative_wlm``; ``event`` is 1/0 or true/false."""
    path = Path(path)
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"id", "exit_age", "event", "cumulative_wlm"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise DataError(f"{path}: header must contain id,exit_age,event,cumulative_wlm")
        for lineno, row in enumerate(reader, start=2):
            ev = row["event"].strip().lower()
            if ev not in ("0", "1", "true", "false"):
                raise DataError(f"{path}:{lineno}: event must be 0/1, got {row['event']!r}")
            try:
                rec = SubjectRecord(float(row["exit_age"]), ev in ("1", "true"),
                                    float(row["cumulative_wlm"]))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            out.append(rec)
    if not out:
        raise DataError(f"{path}: no subjects")
    return out


def _fmt(x: float) -> str:
    return "inf" if np.isinf(x) else f"{x:g}"


def category_labels(bounds=DEFAULT_BOUNDS) -> list[str]:
    """``["none", "(0,b1)", "[b1,b2)", ..., "[bk,inf)"]``."""
    b = [float(x) for x in bounds]
    if any(x <= 0 for x in b) or any(y <= x for x, y in zip(b, b[1:])):
        raise DataError("category bounds must be positive and strictly increasing")
    edges = b + [np.inf]
    labels = ["none", f"(0,{_fmt(edges[0])})"]
    labels += [f"[{_fmt(lo)},{_fmt(hi)})" for lo, hi in zip(edges, edges[1:])]
    return labels


def exposure_category(wlm: float, bounds=DEFAULT_BOUNDS) -> str:
    labels = category_labels(bounds)
    if wlm == 0:
        return labels[0]
    return labels[1 + int(np.searchsorted(np.asarray(bounds, float), wlm, side="right"))]


@dataclass(frozen=True)
class KMCurve:
    """Product-limit estimate at event times ``t`` with Greenwood variance."""

    t: np.ndarray
    d: np.ndarray
    n: np.ndarray
    S: np.ndarray
    var: np.ndarray
    gw_sum: np.ndarray
    n_subjects: int

    def _index(self, t: float) -> int:
        return int(np.searchsorted(self.t, t, side="right")) - 1

    def survival(self, t: float) -> float:
        i = self._index(t)
        return 1.0 if i < 0 else float(self.S[i])

    def variance(self, t: float) -> float:
        i = self._index(t)
        return 0.0 if i < 0 else float(self.var[i])

    def greenwood_sum(self, t: float) -> float:
        i = self._index(t)
        return 0.0 if i < 0 else float(self.gw_sum[i])


def _arrays(records):
    if not len(records):
        raise DataError("no records")
    t = np.array([r.exit_age for r in records], dtype=float)
    e = np.array([bool(r.event) for r in records])
    w = np.array([r.cumulative_wlm for r in records], dtype=float)
    return t, e, w


def km_curve(records) -> KMCurve:
    """Product-limit estimate for one group of subjects."""
    age, event, _ = _arrays(records)
    times = np.unique(age[event])
    sorted_age = np.sort(age)
    n = age.size - np.searchsorted(sorted_age, times, side="left")
    d = np.array([np.count_nonzero(event & (age == t)) for t in times], dtype=float)
    S = np.cumprod(1.0 - d / n)
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(n > d, d / (n * (n - d)), np.inf)
    gw = np.cumsum(term)
    with np.errstate(invalid="ignore"):
        var = np.where(S > 0, S**2 * gw, 0.0)
    return KMCurve(times, d, n.astype(float), S, var, gw, age.size)


def km_estimate(records, strata_bounds=DEFAULT_BOUNDS, categories=None) -> dict[str, KMCurve]:
    """Kaplan-Meier curve per exposure category.

    Only categories with subjects are returned, in label order. Naming
    ``categories`` explicitly makes an empty one an error.
    """
    _, _, w = _arrays(records)
    labels = category_labels(strata_bounds)
    cats = np.array([exposure_category(x, strata_bounds) for x in w])
    wanted = labels if categories is None else list(categories)
    unknown = set(wanted) - set(labels)
    if unknown:
        raise DataError(f"unknown categories {sorted(unknown)}; known: {labels}")
    out = {}
    empty = []
    for lab in wanted:
        idx = np.flatnonzero(cats == lab)
        if idx.size == 0:
            empty.append(lab)
            continue
        out[lab] = km_curve([records[i] for i in idx])
    if categories is not None and empty:
        raise DataError(f"empty strata: {', '.join(empty)}")
    if not out:
        raise DataError("no subjects in any category")
    return out


def greenwood_interval(curve: KMCurve, t: float, level: float = 0.95) -> UncertaintyResult:
    """Symmetric normal interval ``S(t) +- z sqrt(Var)``; bounds are not clamped."""
    s = curve.survival(t)
    z = stats.norm.ppf(0.5 + level / 2)
    half = z * np.sqrt(curve.variance(t))
    return UncertaintyResult(s, s - half, s + half, level, "greenwood", curve.n_subjects, None)


def naive_lear(unexposed, exposed, cut_age: float = 85.0, level: float = 0.95) -> UncertaintyResult:
    """Difference of two survival curves at ``cut_age`` with crossed interval bounds.

    Each argument is a :class:`KMCurve` or an already evaluated Greenwood
    :class:`UncertaintyResult`. The lower bound is the unexposed lower bound
    minus the exposed upper bound; the upper bound pairs the other two.
    """
    a = unexposed if isinstance(unexposed, UncertaintyResult) else greenwood_interval(
        unexposed, cut_age, level)
    b = exposed if isinstance(exposed, UncertaintyResult) else greenwood_interval(
        exposed, cut_age, level)
    return UncertaintyResult(a.point_estimate - b.point_estimate, a.lower - b.upper,
                             a.upper - b.lower, a.level, "naive-km", a.n_samples + b.n_samples)


def naive_lear_table(curves: dict, reference: str = "none", cut_age: float = 85.0,
                     level: float = 0.95) -> dict[str, UncertaintyResult]:
    """Naive LEAR of every category against ``reference``."""
    if reference not in curves:
        raise DataError(f"reference category {reference!r} has no subjects")
    return {k: naive_lear(curves[reference], c, cut_age, level)
            for k, c in curves.items() if k != reference}


def logrank_test(records_a, records_b) -> tuple[float, float]:
    """Two-group log-rank chi-square statistic (1 df) and its p-value."""
    ta, ea, _ = _arrays(records_a)
    tb, eb, _ = _arrays(records_b)
    if not ea.any() or not eb.any():
        raise DataError("both groups need at least one event")
    times = np.unique(np.concatenate([ta[ea], tb[eb]]))
    sa, sb = np.sort(ta), np.sort(tb)
    na = ta.size - np.searchsorted(sa, times, side="left")
    nb = tb.size - np.searchsorted(sb, times, side="left")
    da = np.array([np.count_nonzero(ea & (ta == t)) for t in times], dtype=float)
    db = np.array([np.count_nonzero(eb & (tb == t)) for t in times], dtype=float)
    n = na + nb
    d = da + db
    expected = d * na / n
    with np.errstate(invalid="ignore", divide="ignore"):
        v = np.where(n > 1, d * (na / n) * (nb / n) * (n - d) / (n - 1), 0.0)
    V = v.sum()
    diff = da.sum() - expected.sum()
    if V <= 0:
        return 0.0, 1.0
    stat = float(diff**2 / V)
    return stat, float(stats.chi2.sf(stat, 1))


def write_curves_csv(curves: dict, path, level: float = 0.95) -> None:
    """``category,t,n_at_risk,d,S,var,lo,hi`` with bounds clamped to [0, 1] for display."""
    z = stats.norm.ppf(0.5 + level / 2)
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["category", "t", "n_at_risk", "d", "S", "var", "lo", "hi"])
        for cat, c in curves.items():
            half = z * np.sqrt(c.var)
            lo = np.clip(c.S - half, 0, 1)
            hi = np.clip(c.S + half, 0, 1)
            for i in range(c.t.size):
                w.writerow([cat, repr(float(c.t[i])), int(c.n[i]), int(c.d[i]),
                            repr(float(c.S[i])), repr(float(c.var[i])),
                            repr(float(lo[i])), repr(float(hi[i]))])

