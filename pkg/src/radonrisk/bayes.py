"""Bayesian inference for ERR model parameters on grouped Poisson data.

Cell ``i`` of stratum ``k`` has ``C_i ~ Poi(PY_i exp(delta_k) (1 + ERR_i))``.
Integrating out the stratum baselines ``delta_k`` under flat priors leaves
the marginal posterior

    log P(theta | X) = log P(theta) + sum_i C_i log(1 + ERR_i)
                       - sum_k S_k log(sum_{i in k} PY_i (1 + ERR_i)) + const,

with ``S_k`` the total cases in stratum ``k``. Samplers here work on any
log-density callable, so they are reused for toy targets in the tests.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import optimize, stats

from .core import DataError, NumericalError, UncertaintyResult
from .exposure import Covariates
from .models import RiskModel, err_from_covariates

__all__ = [
    "GroupedCohort",
    "load_cohort_csv",
    "write_cohort_csv",
    "Uniform",
    "GammaMode",
    "Normal",
    "LogNormalMode",
    "PriorSpec",
    "prior_gamma_mode",
    "prior_lognormal_mode",
    "lognormal_sigma_for_shape",
    "prior_from_dict",
    "log_marginal_posterior",
    "posterior_target",
    "RejectionResult",
    "rejection_sample",
    "MCMCResult",
    "mh_sample",
    "find_mode",
    "laplace_covariance",
    "hpdi",
    "mcse",
    "PosteriorRun",
    "posterior_risk",
]


@dataclass(frozen=True)
class GroupedCohort:
    """Poisson cells with person-years, cases, stratum labels and ERR covariates.

    ``stratum`` holds 0-based labels ``0..K-1``; the CSV form is 1-based.
    """

    person_years: np.ndarray
    cases: np.ndarray
    stratum: np.ndarray
    covariates: Covariates
    cell_id: tuple = ()

    def __post_init__(self):
        py = np.array(self.person_years, dtype=float).reshape(-1)
        c = np.array(self.cases, dtype=float).reshape(-1)
        s = np.array(self.stratum).reshape(-1)
        n = py.size
        if c.size != n or s.size != n or np.shape(self.covariates.W) != (n,):
            raise DataError("cohort arrays must all have one entry per cell")
        if n == 0:
            raise DataError("cohort has no cells")
        if not np.all(py > 0):
            raise DataError("person-years must be positive")
        if np.any(c < 0) or np.any(c != np.round(c)):
            raise DataError("cases must be non-negative integers")
        if not np.issubdtype(s.dtype, np.integer):
            if np.any(s != np.round(s)):
                raise DataError("stratum labels must be integers")
            s = s.astype(int)
        if s.min() < 0:
            raise DataError("stratum labels must be non-negative")
        missing = np.setdiff1d(np.arange(s.max() + 1), s)
        if missing.size:
            raise DataError(f"strata without cells: {(missing + 1).tolist()}")
        for a in (py, c, s):
            a.setflags(write=False)
        object.__setattr__(self, "person_years", py)
        object.__setattr__(self, "cases", c)
        object.__setattr__(self, "stratum", s)
        ids = tuple(self.cell_id) or tuple(range(1, n + 1))
        object.__setattr__(self, "cell_id", ids)
        # cells x strata indicator, for batched per-stratum sums
        ind = np.zeros((n, self.n_strata))
        ind[np.arange(n), s] = 1.0
        ind.setflags(write=False)
        object.__setattr__(self, "_indicator", ind)
        object.__setattr__(self, "_stratum_cases", ind.T @ c)

    @property
    def n_cells(self) -> int:
        return self.person_years.size

    @property
    def n_strata(self) -> int:
        return int(self.stratum.max()) + 1

    @property
    def stratum_cases(self) -> np.ndarray:
        return self._stratum_cases

    def take(self, index) -> "GroupedCohort":
        ids = np.asarray(self.cell_id, dtype=object)[index]
        return GroupedCohort(self.person_years[index], self.cases[index], self.stratum[index],
                             self.covariates.take(index), tuple(ids.tolist()))


_WINDOW_COLS = ("w5_14", "w15_24", "w25_34", "w35p")


def load_cohort_csv(path) -> GroupedCohort:
    """Read ``cell_id,stratum,person_years,cases,W,AME,TME[,rate_cat,w5_14,...,age]``."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"cell_id", "stratum", "person_years", "cases", "W", "AME", "TME"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise DataError(f"{path}: header must contain {sorted(need)}")
        fields = set(reader.fieldnames)
        rows = list(reader)
    if not rows:
        raise DataError(f"{path}: no cells")

    def col(name, kind=float):
        out = []
        for lineno, r in enumerate(rows, start=2):
            v = r[name].strip()
            try:
                out.append(np.nan if v == "" and kind is float else kind(v))
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad {name} value {v!r}") from None
        return np.array(out)

    stratum = col("stratum", int)
    if stratum.min() < 1:
        raise DataError(f"{path}: strata are numbered from 1")
    windows = {}
    if set(_WINDOW_COLS) <= fields:
        windows = {k: col(k) for k in _WINDOW_COLS}
        windows["w25p"] = windows["w25_34"] + windows["w35p"]
    cov = Covariates(
        W=col("W"), AME=col("AME"), TME=col("TME"), windows=windows,
        age=col("age") if "age" in fields else None,
        rate_cat=col("rate_cat", int) if "rate_cat" in fields else None,
    )
    return GroupedCohort(col("person_years"), col("cases"), stratum - 1, cov,
                         tuple(r["cell_id"] for r in rows))


def write_cohort_csv(cohort: GroupedCohort, path) -> None:
    cov = cohort.covariates
    cols = ["cell_id", "stratum", "person_years", "cases", "W", "AME", "TME"]
    extra = {}
    if cov.rate_cat is not None:
        extra["rate_cat"] = np.asarray(cov.rate_cat)
    if cov.windows:
        extra.update({k: np.asarray(cov.windows[k]) for k in _WINDOW_COLS})
    if cov.age is not None:
        extra["age"] = np.asarray(cov.age)
    fmt = lambda v: "" if isinstance(v, float) and math.isnan(v) else repr(v)  # noqa: E731
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols + list(extra))
        for i in range(cohort.n_cells):
            row = [cohort.cell_id[i], int(cohort.stratum[i]) + 1,
                   float(cohort.person_years[i]), int(cohort.cases[i]),
                   float(cov.W[i]), float(cov.AME[i]), float(cov.TME[i])]
            row += [v[i].item() for v in extra.values()]
            w.writerow([fmt(v) for v in row])


# --- priors -----------------------------------------------------------------

@dataclass(frozen=True)
class Uniform:
    """Flat prior on ``[lo, hi]``; the default bounds give an improper prior."""

    lo: float = -np.inf
    hi: float = np.inf

    def __post_init__(self):
        if not self.lo < self.hi:
            raise DataError("uniform prior needs lo < hi")

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.lo) & (x <= self.hi)
        width = self.hi - self.lo
        c = -np.log(width) if np.isfinite(width) else 0.0
        return np.where(inside, c, -np.inf)

    @property
    def mode(self) -> float:
        return float("nan")


@dataclass(frozen=True)
class GammaMode:
    """Gamma prior with shape ``a`` and rate ``(a - 1) / mode``."""

    a: float
    mode: float

    def __post_init__(self):
        if not self.a > 1:
            raise DataError("gamma prior with a mode needs shape a > 1")
        if not self.mode > 0:
            raise DataError("gamma prior mode must be positive")

    @property
    def b(self) -> float:
        return (self.a - 1) / self.mode

    def logpdf(self, x):
        return stats.gamma.logpdf(x, self.a, scale=1.0 / self.b)


@dataclass(frozen=True)
class Normal:
    mean: float
    sd: float

    def __post_init__(self):
        if not self.sd > 0:
            raise DataError("normal prior needs sd > 0")

    @property
    def mode(self) -> float:
        return self.mean

    def logpdf(self, x):
        return stats.norm.logpdf(x, self.mean, self.sd)


@dataclass(frozen=True)
class LogNormalMode:
    """Log-normal prior with the given mode: ``mu = log(mode) + sigma**2``."""

    mode: float
    sigma: float

    def __post_init__(self):
        if not self.mode > 0:
            raise DataError("log-normal prior mode must be positive")
        if not self.sigma > 0:
            raise DataError("log-normal prior needs sigma > 0")

    @property
    def mu(self) -> float:
        return math.log(self.mode) + self.sigma**2

    def logpdf(self, x):
        return stats.lognorm.logpdf(x, self.sigma, scale=math.exp(self.mu))


def prior_gamma_mode(a: float, mode: float) -> GammaMode:
    return GammaMode(a, mode)


def prior_lognormal_mode(mode: float, sigma: float) -> LogNormalMode:
    return LogNormalMode(mode, sigma)


def lognormal_sigma_for_shape(a: float) -> float:
    """Log-normal sigma whose coefficient of variation matches a gamma with shape ``a``."""
    if not a > 0:
        raise DataError("shape must be positive")
    return math.sqrt(math.log1p(1.0 / a))


def prior_from_dict(d: dict):
    """Build one marginal prior from its config form.

    ``{"family": "uniform", "lo": .., "hi": ..}``,
    ``{"family": "gamma_mode", "a": .., "mode": ..}``,
    ``{"family": "normal", "mean": .., "sd": ..}`` or
    ``{"family": "lognormal_mode", "mode": .., "sigma": ..}`` where ``sigma``
    may be replaced by a gamma shape ``a`` to match.
    """
    fam = d.get("family", "uniform")
    try:
        if fam == "uniform":
            return Uniform(float(d.get("lo", -np.inf)), float(d.get("hi", np.inf)))
        if fam == "gamma_mode":
            return GammaMode(float(d["a"]), float(d["mode"]))
        if fam == "normal":
            return Normal(float(d["mean"]), float(d["sd"]))
        if fam == "lognormal_mode":
            sigma = d["sigma"] if "sigma" in d else lognormal_sigma_for_shape(float(d["a"]))
            return LogNormalMode(float(d["mode"]), float(sigma))
    except KeyError as exc:
        raise DataError(f"{fam} prior is missing {exc}") from None
    raise DataError(f"unknown prior family {fam!r}")


@dataclass(frozen=True)
class PriorSpec:
    """Product of independent marginal priors, one per parameter."""

    marginals: tuple

    @classmethod
    def uniform(cls, p: int) -> "PriorSpec":
        return cls(tuple(Uniform() for _ in range(p)))

    @classmethod
    def from_config(cls, entries, p: int) -> "PriorSpec":
        if not entries:
            return cls.uniform(p)
        if len(entries) != p:
            raise DataError(f"prior lists {len(entries)} marginals for {p} parameters")
        return cls(tuple(e if hasattr(e, "logpdf") else prior_from_dict(e) for e in entries))

    def logpdf(self, theta) -> np.ndarray:
        th = np.atleast_2d(np.asarray(theta, dtype=float))
        if th.shape[1] != len(self.marginals):
            raise DataError(f"prior has {len(self.marginals)} marginals, theta {th.shape[1]}")
        out = np.zeros(th.shape[0])
        for j, m in enumerate(self.marginals):
            out = out + m.logpdf(th[:, j])
        return out


# --- posterior --------------------------------------------------------------

def log_marginal_posterior(theta, cohort: GroupedCohort, model: RiskModel,
                           prior: PriorSpec | None = None):
    """Unnormalised log marginal posterior; ``-inf`` where some ``1 + ERR <= 0``.

    ``theta`` may be one vector (returns a float) or a batch ``(m, p)``.
    """
    theta = np.asarray(theta, dtype=float)
    single = theta.ndim == 1
    th = np.atleast_2d(theta)
    prior = prior or PriorSpec.uniform(model.n_params)
    lp = prior.logpdf(th)
    rel = 1.0 + err_from_covariates(model, cohort.covariates, th)  # (m, cells)
    ok = np.all(rel > 0, axis=1) & np.isfinite(lp) & np.all(np.isfinite(rel), axis=1)
    out = np.full(th.shape[0], -np.inf)
    if ok.any():
        r = rel[ok]
        c = cohort.cases
        num = np.log(r) @ c
        den = np.log((r * cohort.person_years) @ cohort._indicator) @ cohort.stratum_cases
        out[ok] = lp[ok] + num - den
    return float(out[0]) if single else out


def posterior_target(cohort: GroupedCohort, model: RiskModel, prior: PriorSpec | None = None):
    """Closure ``theta -> log posterior`` for the samplers."""
    return lambda theta: log_marginal_posterior(theta, cohort, model, prior)


@dataclass(frozen=True)
class RejectionResult:
    samples: np.ndarray
    acceptance_rate: float
    log_envelope: float


def rejection_sample(log_target, lo: float, hi: float, n: int, rng: np.random.Generator,
                     grid_points: int = 10_000, batch: int = 8192,
                     min_rate: float = 1e-4) -> RejectionResult:
    """Rejection sampling of a scalar density on ``[lo, hi]`` with a uniform proposal.

    The envelope is 1.1 times the largest target value on an even grid of
    ``grid_points`` points (``log M = max + log 1.1``). A proposal ``x`` is
    kept when ``log u < log_target(x) - log M``. ``log_target`` must accept
    an array of points.
    """
    if not hi > lo:
        raise DataError("rejection sampling needs lo < hi")
    grid = np.linspace(lo, hi, grid_points)
    gvals = np.asarray(log_target(grid), dtype=float)
    top = np.max(gvals)
    if not np.isfinite(top):
        raise NumericalError("target has no finite value on the proposal range")
    log_m = top + math.log(1.1)
    kept = []
    n_kept = 0
    proposed = 0
    while n_kept < n:
        x = rng.uniform(lo, hi, batch)
        lu = np.log(rng.random(batch))
        acc = x[lu < np.asarray(log_target(x), dtype=float) - log_m]
        kept.append(acc)
        n_kept += acc.size
        proposed += batch
        if proposed >= 100 * batch and n_kept / proposed < min_rate:
            raise NumericalError(f"acceptance rate {n_kept / proposed:.2e} below {min_rate:g}; "
                                 "envelope or proposal range badly scaled")
    samples = np.concatenate(kept)[:n]
    return RejectionResult(samples, n_kept / proposed, log_m)


@dataclass(frozen=True)
class MCMCResult:
    samples: np.ndarray
    acceptance_rate: float
    log_density: np.ndarray


def mh_sample(log_target, proposal_cov, init, n_total: int = 110_000, burn_in: int = 10_000,
              rng: np.random.Generator | None = None, abort_after: int = 1000) -> MCMCResult:
    """Random-walk Metropolis-Hastings with multivariate normal increments.

    Returns the ``n_total - burn_in`` states after burn-in and the acceptance
    rate over all proposals.

    Raises
    ------
    NumericalError
        If the target is not finite at ``init`` or none of the first
        ``abort_after`` proposals is accepted.
    """
    if rng is None:
        raise ValueError("rng is required")
    if not 0 <= burn_in < n_total:
        raise ValueError("need 0 <= burn_in < n_total")
    x = np.asarray(init, dtype=float).reshape(-1).copy()
    p = x.size
    cov = np.atleast_2d(np.asarray(proposal_cov, dtype=float))
    if cov.shape != (p, p):
        raise DataError(f"proposal covariance must be {p}x{p}")
    try:
        L = np.linalg.cholesky(cov + np.eye(p) * 1e-12 * np.max(np.diag(cov)))
    except np.linalg.LinAlgError:
        raise NumericalError("proposal covariance is not positive definite") from None
    fx = float(log_target(x))
    if not np.isfinite(fx):
        raise NumericalError("log target is not finite at the initial point")
    steps = rng.standard_normal((n_total, p)) @ L.T
    log_u = np.log(rng.random(n_total))
    chain = np.empty((n_total - burn_in, p))
    dens = np.empty(n_total - burn_in)
    accepted = 0
    for i in range(n_total):
        y = x + steps[i]
        fy = float(log_target(y))
        if log_u[i] < fy - fx:
            x, fx = y, fy
            accepted += 1
        if i + 1 == abort_after and accepted == 0:
            raise NumericalError(f"no proposal accepted in the first {abort_after} steps")
        if i >= burn_in:
            chain[i - burn_in] = x
            dens[i - burn_in] = fx
    return MCMCResult(chain, accepted / n_total, dens)


def find_mode(log_target, x0, xatol: float = 1e-10, fatol: float = 1e-10,
              max_iter: int = 20_000) -> np.ndarray:
    """Maximise ``log_target`` from ``x0`` with Nelder-Mead."""
    x0 = np.asarray(x0, dtype=float).reshape(-1)

    def neg(x):
        v = float(log_target(x))
        return -v if np.isfinite(v) else 1e300

    if neg(x0) >= 1e300:
        raise NumericalError("log target is not finite at the starting point")
    step = np.where(x0 != 0, 0.05 * np.abs(x0), 0.00025)
    simplex = np.vstack([x0] + [x0 + np.eye(x0.size)[i] * step[i] for i in range(x0.size)])
    res = optimize.minimize(neg, x0, method="Nelder-Mead",
                            options={"xatol": xatol, "fatol": fatol, "maxiter": max_iter,
                                     "maxfev": 2 * max_iter, "initial_simplex": simplex})
    return np.asarray(res.x, dtype=float)


def laplace_covariance(log_target, mode, rel_step: float = 1e-3) -> np.ndarray:
    """Inverse negative Hessian of ``log_target`` at ``mode`` by central differences."""
    x = np.asarray(mode, dtype=float).reshape(-1)
    p = x.size
    h = rel_step * np.maximum(np.abs(x), 1e-2)
    f0 = float(log_target(x))
    H = np.empty((p, p))
    for i in range(p):
        ei = np.eye(p)[i] * h[i]
        H[i, i] = (float(log_target(x + ei)) - 2 * f0 + float(log_target(x - ei))) / h[i] ** 2
        for j in range(i):
            ej = np.eye(p)[j] * h[j]
            H[i, j] = H[j, i] = (
                float(log_target(x + ei + ej)) - float(log_target(x + ei - ej))
                - float(log_target(x - ei + ej)) + float(log_target(x - ei - ej))
            ) / (4 * h[i] * h[j])
    if not np.all(np.isfinite(H)):
        raise NumericalError("Hessian is not finite at the mode")
    try:
        cov = np.linalg.inv(-H)
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise NumericalError("negative Hessian at the mode is not positive definite") from None
    return (cov + cov.T) / 2


def hpdi(samples, level: float = 0.95, point_estimate: float | None = None) -> UncertaintyResult:
    """Narrowest window of sorted samples holding ``ceil(level * n)`` of them.

    Ties go to the leftmost window. The point estimate defaults to the
    sample median.
    """
    x = np.sort(np.asarray(samples, dtype=float).reshape(-1))
    n = x.size
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    if n < 40:
        raise DataError(f"need at least 40 samples, got {n}")
    m = int(math.ceil(level * n - 1e-9))
    widths = x[m - 1 :] - x[: n - m + 1]
    i = int(np.argmin(widths))
    est = float(np.median(x)) if point_estimate is None else float(point_estimate)
    return UncertaintyResult(est, float(x[i]), float(x[i + m - 1]), level, "hpdi", n, None)


def mcse(x, n_batches: int | None = None) -> float:
    """Monte Carlo standard error of the mean by non-overlapping batch means."""
    x = np.asarray(x, dtype=float).reshape(-1)
    n = x.size
    b = n_batches or max(int(math.isqrt(n)), 2)
    size = n // b
    if size < 1:
        raise DataError("too few samples for batch means")
    means = x[: b * size].reshape(b, size).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(b))


@dataclass(frozen=True)
class PosteriorRun:
    """Posterior parameter draws and the risk measure derived from them."""

    theta: np.ndarray
    mode: np.ndarray
    risk: "SampleSet"
    interval: UncertaintyResult
    acceptance_rate: float
    method: str


def posterior_risk(cohort: GroupedCohort, model: RiskModel, table, h, prior: PriorSpec | None = None,
                   measure: str = "lear", method: str = "mh", n: int = 100_000, seed: int = 0,
                   burn_in: int = 10_000, level: float = 0.95, bounds=None,
                   proposal_scale: float | None = None) -> PosteriorRun:
    """Sample the parameter posterior and summarise a risk measure by its HPDI.

    ``method="mh"`` starts a random-walk chain at the posterior mode with the
    Laplace covariance times ``proposal_scale`` (default ``2.38**2 / p``) as
    proposal; ``n`` counts the states kept after ``burn_in``.
    ``method="reject"`` needs a one-parameter model and draws from a uniform
    proposal on ``bounds`` (default: mode +- 8 Laplace standard deviations).
    The point estimate is the measure at the posterior mode.
    """
    from .ana import SampleSet, block_rng, measure_for_parameters

    prior = prior or PriorSpec.from_config(model.prior, model.n_params)
    target = posterior_target(cohort, model, prior)
    mode = find_mode(target, model.theta)
    cov = laplace_covariance(target, mode)
    rng = block_rng(seed, 0)
    if method == "mh":
        scale = 2.38**2 / mode.size if proposal_scale is None else proposal_scale
        res = mh_sample(target, cov * scale, mode, n + burn_in, burn_in, rng)
        theta, rate = res.samples, res.acceptance_rate
    elif method == "reject":
        if model.n_params != 1:
            raise DataError("rejection sampling supports one-parameter models only")
        if bounds is None:
            sd = math.sqrt(cov[0, 0])
            bounds = (mode[0] - 8 * sd, mode[0] + 8 * sd)
        res = rejection_sample(lambda x: log_marginal_posterior(np.asarray(x)[:, None], cohort,
                                                                model, prior),
                               bounds[0], bounds[1], n, rng)
        theta, rate = res.samples[:, None], res.acceptance_rate
    else:
        raise ValueError(f"unknown posterior method {method!r}")
    risk = measure_for_parameters(model, theta, table, h, measure)
    ref = float(measure_for_parameters(model, mode[None, :], table, h, measure)[0])
    sset = SampleSet(risk, seed, measure, ref)
    iv = hpdi(risk, level, point_estimate=ref)
    iv = UncertaintyResult(iv.point_estimate, iv.lower, iv.upper, level, "hpdi", iv.n_samples, seed)
    return PosteriorRun(theta, mode, sset, iv, rate, method)
