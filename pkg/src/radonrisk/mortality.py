"""Uncertainty in baseline mortality rates.

Two routes are provided. The first fits a gamma or log-normal distribution
to observed rates ``d/n`` of one age group, every observation weighted
equally, and draws randomised mortality tables from those fits. The second
pools the observations of a group as Poisson counts, ``d_i ~ Poi(n_i e^theta)``,
and returns the posterior of the log-rate ``theta`` under a normal or flat
prior.
"""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import optimize, special

from .core import DataError, MortalityTable, NumericalError, bundled_path

__all__ = [
    "RateObservation",
    "GroupFit",
    "RateDistribution",
    "load_observations",
    "group_observations",
    "fit_gamma_mle",
    "fit_lognormal_mle",
    "center_gamma",
    "center_lognormal",
    "fit_rate_distribution",
    "sample_group_rates",
    "expand_group_rates",
    "sample_mortality_table",
    "load_rate_distributions",
    "save_rate_distributions",
    "bundled_rate_distributions",
    "poisson_pooled_rate",
    "ThetaPosterior",
    "theta_posterior",
]


@dataclass(frozen=True)
class RateObservation:
    """Deaths and mid-year population of one country, sex and calendar year."""

    country: str
    sex: str
    year: int
    age_start: int
    age_end: int
    deaths: float
    population: float

    def __post_init__(self):
        if self.sex not in ("male", "female", "both"):
            raise DataError(f"sex must be male, female or both, got {self.sex!r}")
        if not (self.deaths > 0 and self.population > 0):
            raise DataError("observations need positive deaths and population")
        if self.age_end < self.age_start:
            raise DataError(f"bad age range {self.age_start}-{self.age_end}")

    @property
    def rate(self) -> float:
        return self.deaths / self.population

    @property
    def group(self) -> tuple[int, int]:
        return (self.age_start, self.age_end)


def load_observations(path, drop_nonpositive: bool = True) -> list[RateObservation]:
    """Read ``country,sex,year,age_start,age_end,deaths,population``.

    Rows with zero deaths or zero population are skipped when
    ``drop_nonpositive`` is set and rejected otherwise.
    """
    path = Path(path)
    cols = ["country", "sex", "year", "age_start", "age_end", "deaths", "population"]
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not set(cols) <= set(reader.fieldnames):
            raise DataError(f"{path}: header must contain {','.join(cols)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                d, n = float(row["deaths"]), float(row["population"])
                a0, a1, yr = int(row["age_start"]), int(row["age_end"]), int(row["year"])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if d < 0 or n < 0:
                raise DataError(f"{path}:{lineno}: negative count")
            if (d == 0 or n == 0) and drop_nonpositive:
                continue
            try:
                out.append(RateObservation(row["country"], row["sex"], yr, a0, a1, d, n))
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    if not out:
        raise DataError(f"{path}: no usable observations")
    return out


def group_observations(obs) -> dict[tuple[int, int], list[RateObservation]]:
    groups = defaultdict(list)
    for o in obs:
        groups[o.group].append(o)
    return dict(sorted(groups.items()))


def _rates(values) -> np.ndarray:
    x = np.array([v.rate if isinstance(v, RateObservation) else v for v in values], dtype=float)
    if x.size < 2:
        raise DataError("need at least 2 observations")
    if np.any(~np.isfinite(x)) or np.any(x <= 0):
        raise DataError("rates must be positive and finite")
    if np.all(x == x[0]):
        raise DataError("zero variance: all observed rates are equal")
    return x


def fit_gamma_mle(values, tol: float = 1e-10, max_iter: int = 100) -> tuple[float, float]:
    """Maximum likelihood shape ``a`` and rate ``b`` of a gamma distribution.

    The shape solves ``log a - digamma(a) = log(mean) - mean(log x)`` by
    Newton's method on ``log a`` started from the method-of-moments value;
    the rate is then ``a / mean``, so ``a/b`` reproduces the sample mean.
    """
    x = _rates(values)
    m = x.mean()
    s = np.log(m) - np.mean(np.log(x))
    if s <= 0:
        raise DataError("degenerate sample for gamma fit")
    a = m * m / x.var()
    for _ in range(max_iter):
        f = np.log(a) - special.digamma(a) - s
        df = 1.0 - a * special.polygamma(1, a)  # d f / d log a
        step = f / df
        a *= np.exp(-step)
        if abs(step) < tol:
            break
    else:
        raise NumericalError(f"gamma shape iteration did not converge (a={a:g})")
    return float(a), float(a / m)


def fit_lognormal_mle(values) -> tuple[float, float]:
    """Mean and population standard deviation of the log rates."""
    lx = np.log(_rates(values))
    return float(lx.mean()), float(lx.std())


def center_gamma(a: float, target_mean: float) -> float:
    """Rate parameter giving a gamma(a, b) distribution the mean ``target_mean``."""
    if target_mean <= 0:
        raise DataError("target mean must be positive")
    return a / target_mean


def center_lognormal(sigma: float, target_mean: float) -> float:
    """Log-mean giving a log-normal distribution the mean ``target_mean``."""
    if target_mean <= 0:
        raise DataError("target mean must be positive")
    return float(np.log(target_mean) - sigma**2 / 2)


@dataclass(frozen=True)
class GroupFit:
    """Fitted distribution of one age group's rate.

    ``params`` is ``(a, b)`` for ``family="gamma"`` (shape, rate) and
    ``(mu, sigma)`` for ``family="lognormal"``.
    """

    age_start: int
    age_end: int
    family: str
    params: tuple[float, float]

    def __post_init__(self):
        p = tuple(float(v) for v in self.params)
        object.__setattr__(self, "params", p)
        if self.family == "gamma":
            if not (p[0] > 0 and p[1] > 0):
                raise DataError("gamma parameters must be positive")
        elif self.family == "lognormal":
            if not p[1] > 0:
                raise DataError("log-normal sigma must be positive")
        else:
            raise DataError(f"unknown rate family {self.family!r}")

    @property
    def mean(self) -> float:
        a, b = self.params
        return a / b if self.family == "gamma" else float(np.exp(a + b * b / 2))

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        a, b = self.params
        if self.family == "gamma":
            return rng.gamma(a, 1.0 / b, size)
        return rng.lognormal(a, b, size)


@dataclass(frozen=True)
class RateDistribution:
    """Per-group rate distributions for ``r0`` or ``q0``."""

    rate: str
    groups: tuple[GroupFit, ...]
    centered: bool = False

    def __post_init__(self):
        if self.rate not in ("r0", "q0"):
            raise DataError(f"rate must be r0 or q0, got {self.rate!r}")
        object.__setattr__(self, "groups", tuple(self.groups))

    def fit_for(self, group: tuple[int, int]) -> GroupFit:
        for g in self.groups:
            if (g.age_start, g.age_end) == tuple(group):
                return g
        raise DataError(f"no {self.rate} distribution for age group {group[0]}-{group[1]}")

    def to_dict(self) -> dict:
        return {
            "rate": self.rate,
            "centered": self.centered,
            "groups": [
                {"age_start": g.age_start, "age_end": g.age_end, "family": g.family,
                 "params": list(g.params)}
                for g in self.groups
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RateDistribution":
        try:
            groups = [GroupFit(int(g["age_start"]), int(g["age_end"]), g["family"],
                               tuple(g["params"])) for g in d["groups"]]
            return cls(d["rate"], tuple(groups), bool(d.get("centered", False)))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed rate distribution: {exc}") from None


def fit_rate_distribution(obs, rate: str = "r0", family: str = "gamma",
                          center_on: MortalityTable | None = None) -> RateDistribution:
    """Fit every age group in ``obs``; optionally center the means on a table."""
    fits = []
    for (a0, a1), items in group_observations(obs).items():
        try:
            if family == "gamma":
                a, b = fit_gamma_mle(items)
                if center_on is not None:
                    b = center_gamma(a, _table_rate(center_on, rate, a0))
                params = (a, b)
            elif family == "lognormal":
                mu, sigma = fit_lognormal_mle(items)
                if center_on is not None:
                    mu = center_lognormal(sigma, _table_rate(center_on, rate, a0))
                params = (mu, sigma)
            else:
                raise DataError(f"unknown rate family {family!r}")
        except DataError as exc:
            raise DataError(f"age group {a0}-{a1}: {exc}") from None
        fits.append(GroupFit(a0, a1, family, params))
    return RateDistribution(rate, tuple(fits), center_on is not None)


def _table_rate(table: MortalityTable, rate: str, age: int) -> float:
    arr = table.r0 if rate == "r0" else table.q0
    if age > table.t_max:
        raise DataError(f"age {age} outside the mortality table")
    return float(arr[age])


def _groups_of(base: MortalityTable):
    if not base.groups:
        raise DataError("base table carries no age groups")
    return base.groups


def sample_group_rates(dist: RateDistribution, groups, rng: np.random.Generator,
                       size: int, per: str = "group") -> np.ndarray:
    """Independent rate draws for every age group.

    With ``per="group"`` the result is ``(size, n_groups)``, one draw per
    group. With ``per="age"`` every single age of a group gets its own draw
    from the group's distribution and the result is ``(size, n_ages)`` with
    ages concatenated group by group.
    """
    if per not in ("group", "age"):
        raise ValueError(f"per must be 'group' or 'age', got {per!r}")
    cols = []
    for g in groups:
        fit = dist.fit_for(g)
        cols.append(fit.sample(rng, (size, 1 if per == "group" else g[1] - g[0] + 1)))
    return np.concatenate(cols, axis=-1)


def expand_group_rates(values: np.ndarray, groups, base: np.ndarray,
                       per: str = "group") -> np.ndarray:
    """Spread drawn rates over single ages; ages outside ``groups`` copy ``base``.

    ``values`` is laid out as returned by :func:`sample_group_rates` with the
    same ``per``.
    """
    values = np.asarray(values, dtype=float)
    widths = [1 if per == "group" else a1 - a0 + 1 for a0, a1 in groups]
    if values.shape[-1] != sum(widths):
        raise DataError(f"expected {sum(widths)} drawn rates, got {values.shape[-1]}")
    out = np.broadcast_to(base, values.shape[:-1] + base.shape).copy()
    j = 0
    for (a0, a1), k in zip(groups, widths):
        out[..., a0 : a1 + 1] = values[..., j : j + k]
        j += k
    return out


def sample_mortality_table(dists, base: MortalityTable, rng: np.random.Generator,
                           vary=("r0", "q0"), per: str = "group") -> MortalityTable:
    """One randomised table: one draw per age group for each rate in ``vary``.

    ``per="age"`` draws every single age independently from its group's
    distribution instead.

    ``dists`` maps ``"r0"``/``"q0"`` to a :class:`RateDistribution`. Rates
    are drawn independently, so a draw may put ``r0`` above ``q0``; the
    result therefore skips that consistency check.
    """
    vary = tuple(vary)
    if not vary:
        return base
    groups = _groups_of(base)
    r0, q0 = base.r0, base.q0
    for name in ("r0", "q0"):
        if name not in vary:
            continue
        if name not in dists:
            raise DataError(f"no distribution supplied for {name}")
        vals = sample_group_rates(dists[name], groups, rng, 1, per)[0]
        arr = expand_group_rates(vals, groups, base.r0 if name == "r0" else base.q0, per)
        if name == "r0":
            r0 = arr
        else:
            q0 = arr
    return MortalityTable(r0, q0, base.label + " (sampled)", groups, check=False)


def save_rate_distributions(dists: dict, path) -> None:
    Path(path).write_text(json.dumps({k: v.to_dict() for k, v in dists.items()}, indent=2) + "\n")


def load_rate_distributions(path) -> dict:
    """Read ``{"r0": {...}, "q0": {...}}`` (either key optional)."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: {exc}") from None
    if "groups" in raw:
        raw = {raw["rate"]: raw}
    return {k: RateDistribution.from_dict(v) for k, v in raw.items() if k in ("r0", "q0")}


def bundled_rate_distributions() -> dict:
    """Gamma fits to pooled international data for ages 20-94 (r0 and q0)."""
    return load_rate_distributions(bundled_path("who_gamma_fits.json"))


def poisson_pooled_rate(obs) -> float:
    """Maximum likelihood rate of the pooled Poisson model: sum(d) / sum(n)."""
    obs = list(obs)
    if not obs:
        raise DataError("no observations")
    d = sum(o.deaths if isinstance(o, RateObservation) else o[0] for o in obs)
    n = sum(o.population if isinstance(o, RateObservation) else o[1] for o in obs)
    if n <= 0:
        raise DataError("total population must be positive")
    return d / n


@dataclass(frozen=True)
class ThetaPosterior:
    """Gridded posterior of the log-rate with inverse-CDF samples."""

    grid: np.ndarray
    log_density: np.ndarray
    mode: float
    curvature: float
    samples: np.ndarray

    @property
    def rate_samples(self) -> np.ndarray:
        return np.exp(self.samples)


def _counts(obs):
    d = np.array([o.deaths if isinstance(o, RateObservation) else o[0] for o in obs], float)
    n = np.array([o.population if isinstance(o, RateObservation) else o[1] for o in obs], float)
    return d.sum(), n.sum()


def theta_posterior(obs, prior: tuple[float, float] | None = None,
                    rng: np.random.Generator | None = None, n_samples: int = 10_000,
                    n_grid: int = 10_000, width: float = 10.0) -> ThetaPosterior:
    """Posterior of ``theta = log rate`` for pooled Poisson observations.

    Parameters
    ----------
    obs : sequence
        :class:`RateObservation` items or ``(deaths, population)`` pairs.
    prior : (mu, sigma), optional
        Normal prior on ``theta``; ``None`` means a flat prior.
    rng : Generator, optional
        Required when ``n_samples > 0``.

    The log posterior ``D*theta - N*exp(theta) + log prior`` is evaluated on
    ``n_grid`` points spanning ``width`` posterior standard deviations either
    side of the mode, then sampled by inverting its cumulative sum.
    """
    obs = list(obs)
    if not obs:
        raise DataError("no observations")
    D, N = _counts(obs)
    if not (D > 0 and N > 0):
        raise NumericalError("log-likelihood is not finite: need positive deaths and population")
    mle = np.log(D / N)

    if prior is None:
        mode = mle
        prec = 0.0
        logprior = lambda th: np.zeros_like(th)  # noqa: E731
    else:
        mu, sigma = map(float, prior)
        if not sigma > 0:
            raise DataError("prior sigma must be positive")
        prec = 1.0 / sigma**2
        logprior = lambda th: -0.5 * prec * (th - mu) ** 2  # noqa: E731
        score = lambda th: D - N * np.exp(th) - prec * (th - mu)  # noqa: E731
        mode = mle if mle == mu else optimize.brentq(score, min(mle, mu), max(mle, mu),
                                                     xtol=1e-14, rtol=4 * np.finfo(float).eps)

    curvature = N * np.exp(mode) + prec
    sd = 1.0 / np.sqrt(curvature)
    grid = np.linspace(mode - width * sd, mode + width * sd, n_grid)
    logp = D * grid - N * np.exp(grid) + logprior(grid)
    if not np.all(np.isfinite(logp)):
        raise NumericalError("non-finite log posterior on the grid")
    logp -= logp.max()

    samples = np.empty(0)
    if n_samples:
        if rng is None:
            raise ValueError("rng is required to draw samples")
        p = np.exp(logp)
        cdf = np.concatenate([[0.0], np.cumsum((p[1:] + p[:-1]) / 2 * np.diff(grid))])
        cdf /= cdf[-1]
        samples = np.interp(rng.random(n_samples), cdf, grid)
    return ThetaPosterior(grid, logp, float(mode), float(curvature), samples)
