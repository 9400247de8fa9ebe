"""Monte Carlo uncertainty propagation under approximate normality (ANA).

Risk-model parameters are drawn from a multivariate normal centred on the
estimate; mortality rates and annual exposures may be randomised in the same
replicate. Replicates are split into fixed blocks of :data:`BLOCK_SIZE`; block
``i`` draws from ``SeedSequence(seed, spawn_key=(i,))``, so the samples do not
depend on how many workers evaluate the blocks.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .core import AgeGrid, DataError, MortalityTable, NumericalError, UncertaintyResult
from .exposure import ExposureHistory, covariates, sample_lognormal_exposures
from .lifetime import MEASURES, measures_from_profile
from .models import RiskModel, err_from_covariates, psd_violation
from .mortality import expand_group_rates, sample_group_rates

__all__ = [
    "BLOCK_SIZE",
    "SampleSet",
    "LogNormalExposure",
    "DensityCurve",
    "block_rng",
    "run_blocks",
    "sample_mvn",
    "mc_distribution",
    "measure_for_parameters",
    "percentile_interval",
    "analytic_linear",
    "constant_C",
    "silverman_bandwidth",
    "kde",
    "write_samples_csv",
    "read_samples_csv",
    "write_density_csv",
]

BLOCK_SIZE = 2048
VARY_FLAGS = ("params", "r0", "q0", "exposure")


@dataclass(frozen=True)
class SampleSet:
    """Monte Carlo risk samples plus the deterministic reference estimate."""

    values: np.ndarray
    seed: int | None = None
    measure: str = "lear"
    reference: float | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise NumericalError("non-finite risk samples")
        if self.measure not in MEASURES:
            raise ValueError(f"unknown measure {self.measure!r}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.size

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class LogNormalExposure:
    """Randomised annual exposure: mean ``mean_wlm`` with log-SD ``sigma`` each year."""

    mean_wlm: float = 2.0
    sigma: float = 1.0
    age_from: int = 18
    age_to: int = 64
    latency: int = 5
    wl_divisor: float = 12.0

    def draw(self, rng: np.random.Generator, n: int, grid: AgeGrid) -> np.ndarray:
        return sample_lognormal_exposures(self.mean_wlm, self.sigma, self.age_from,
                                          self.age_to, rng, n, grid)


def block_rng(seed: int, block: int) -> np.random.Generator:
    """Generator for replicate block ``block``; independent of worker layout."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))


def run_blocks(n: int, seed: int, fn, workers: int = 1, block_size: int = BLOCK_SIZE):
    """Evaluate ``fn(rng, m)`` on consecutive blocks and concatenate in block order."""
    if n < 0:
        raise ValueError("n must be non-negative")
    sizes = [min(block_size, n - s) for s in range(0, n, block_size)]
    jobs = [(i, m) for i, m in enumerate(sizes)]
    call = lambda job: np.asarray(fn(block_rng(seed, job[0]), job[1]))  # noqa: E731
    if workers <= 1 or len(jobs) <= 1:
        parts = [call(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(call, jobs))
    return np.concatenate(parts) if parts else np.empty(0)


def sample_mvn(mean, covariance, n: int, rng: np.random.Generator,
               jitter: float = 1e-12) -> np.ndarray:
    """``n`` draws ``(n, p)`` from a multivariate normal via a Cholesky factor.

    Parameters with zero variance stay at their mean. The positive-variance
    block receives a diagonal jitter of ``jitter`` times its largest variance
    so that semidefinite matrices factorise.

    Raises
    ------
    NumericalError
        If the covariance is asymmetric or not positive semidefinite; the
        message names the first leading principal minor that fails.
    """
    mean = np.asarray(mean, dtype=float).reshape(-1)
    cov = np.asarray(covariance, dtype=float)
    p = mean.size
    if cov.shape != (p, p):
        raise DataError(f"covariance must be {p}x{p}, got {cov.shape}")
    if not np.allclose(cov, cov.T, rtol=1e-10, atol=1e-15):
        raise NumericalError("covariance is not symmetric")
    k = psd_violation(cov)
    if k is not None:
        raise NumericalError(f"covariance is not positive semidefinite: leading minor {k} "
                             "has a negative eigenvalue")
    out = np.tile(mean, (n, 1))
    live = np.flatnonzero(np.diag(cov) > 0)
    if live.size == 0:
        return out
    sub = cov[np.ix_(live, live)]
    sub = sub + np.eye(live.size) * jitter * np.max(np.diag(sub))
    try:
        L = np.linalg.cholesky(sub)
    except np.linalg.LinAlgError:
        raise NumericalError("Cholesky factorisation failed") from None
    z = rng.standard_normal((n, live.size))
    out[:, live] += z @ L.T
    return out


def _normalise_vary(vary) -> tuple:
    if vary is None:
        return ()
    if isinstance(vary, str):
        vary = [v for v in vary.replace("+", ",").split(",") if v]
    vary = tuple(dict.fromkeys(v.strip() for v in vary))
    bad = set(vary) - set(VARY_FLAGS)
    if bad:
        raise ValueError(f"unknown vary flags {sorted(bad)}; expected {VARY_FLAGS}")
    return vary


def mc_distribution(
    model: RiskModel,
    table: MortalityTable,
    h: ExposureHistory,
    measure: str = "lear",
    n: int = 100_000,
    seed: int = 0,
    vary=("params",),
    rates: dict | None = None,
    exposure: LogNormalExposure | None = None,
    workers: int = 1,
    grid: AgeGrid | None = None,
    rate_draws: str = "group",
) -> SampleSet:
    """Monte Carlo distribution of a risk measure.

    Parameters
    ----------
    model, table, h : RiskModel, MortalityTable, ExposureHistory
        Reference inputs; their deterministic measure is stored as
        ``SampleSet.reference``.
    measure : {"lear", "reid", "elr", "rads"}
    n : int
        Number of replicates.
    seed : int
        Root seed of the block substreams.
    vary : iterable of {"params", "r0", "q0", "exposure"}
        Components drawn afresh in each replicate. ``params`` needs
        ``model.covariance``, ``r0``/``q0`` need ``rates`` (a dict of
        :class:`~radonrisk.mortality.RateDistribution`) and ``exposure``
        needs an ``exposure`` spec, which replaces ``h``.
    workers : int
        Threads evaluating blocks; the output does not depend on it.
    rate_draws : {"group", "age"}
        One mortality-rate draw per age group, or one per single age.
    """
    vary = _normalise_vary(vary)
    if measure not in MEASURES:
        raise ValueError(f"unknown measure {measure!r}")
    grid = grid or AgeGrid(table.t_max)
    if h.w.size != grid.size or table.r0.size != grid.size:
        raise DataError("table, history and grid must cover the same ages")
    if "params" in vary and model.covariance is None:
        raise DataError("vary=params requires a model covariance")
    for r in ("r0", "q0"):
        if r in vary and (rates is None or r not in rates):
            raise DataError(f"vary={r} requires a fitted {r} rate distribution")
        if r in vary and not table.groups:
            raise DataError("rate sampling needs a table with age groups")
    if "exposure" in vary and exposure is None:
        raise DataError("vary=exposure requires an exposure specification")

    base_cov = covariates(h.w, h.rate, h.latency)
    ref = float(measures_from_profile(table.r0, table.q0,
                                      err_from_covariates(model, base_cov), (measure,))[measure])

    def block(rng, m):
        theta = sample_mvn(model.theta, model.covariance, m, rng) if "params" in vary else None
        r0 = table.r0
        q0 = table.q0
        if "r0" in vary:
            r0 = expand_group_rates(
                sample_group_rates(rates["r0"], table.groups, rng, m, rate_draws),
                table.groups, table.r0, rate_draws)
        if "q0" in vary:
            q0 = expand_group_rates(
                sample_group_rates(rates["q0"], table.groups, rng, m, rate_draws),
                table.groups, table.q0, rate_draws)
        if "exposure" in vary:
            w = exposure.draw(rng, m, grid)
            cov = covariates(w, w / exposure.wl_divisor, exposure.latency)
            e = err_from_covariates(model, cov, theta, paired=theta is not None)
        else:
            e = err_from_covariates(model, base_cov, theta)
        vals = measures_from_profile(r0, q0, e, (measure,))[measure]
        return np.broadcast_to(vals, (m,))

    values = run_blocks(n, seed, block, workers)
    return SampleSet(values, seed, measure, ref)


def measure_for_parameters(model: RiskModel, thetas, table: MortalityTable, h: ExposureHistory,
                           measure: str = "lear", chunk: int = BLOCK_SIZE) -> np.ndarray:
    """Risk measure for each parameter vector in ``thetas`` ``(m, p)``."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    cov = covariates(h.w, h.rate, h.latency)
    out = np.empty(thetas.shape[0])
    for s in range(0, thetas.shape[0], chunk):
        e = err_from_covariates(model, cov, thetas[s : s + chunk])
        out[s : s + chunk] = measures_from_profile(table.r0, table.q0, e, (measure,))[measure]
    return out


def _as_values(samples) -> tuple[np.ndarray, float | None]:
    if isinstance(samples, SampleSet):
        return samples.values, samples.reference
    return np.asarray(samples, dtype=float).reshape(-1), None


def percentile_interval(samples, level: float = 0.95,
                        point_estimate: float | None = None) -> UncertaintyResult:
    """Central interval dropping ``floor((1 - level)/2 * n)`` samples per tail.

    The point estimate defaults to the sample set's reference value, else the
    sample median.
    """
    x, ref = _as_values(samples)
    n = x.size
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    if n < 40:
        raise DataError(f"need at least 40 samples, got {n}")
    k = int(np.floor((1 - level) / 2 * n + 1e-9))
    s = np.sort(x)
    est = point_estimate if point_estimate is not None else ref
    if est is None:
        est = float(np.median(s))
    seed = samples.seed if isinstance(samples, SampleSet) else None
    return UncertaintyResult(float(est), float(s[k]), float(s[n - 1 - k]), level,
                             "percentile", n, seed)


def analytic_linear(beta_hat: float, beta_se: float, C: float,
                    level: float = 0.95) -> UncertaintyResult:
    """Normal-theory interval for a linear model, where LEAR = beta * C exactly."""
    if beta_se < 0:
        raise DataError("standard error must be non-negative")
    if C <= 0:
        raise DataError("C must be positive")
    z = stats.norm.ppf(0.5 + level / 2)
    est = beta_hat * C
    half = z * beta_se * C
    return UncertaintyResult(est, est - half, est + half, level, "wald-analytic", 0, None)


def constant_C(table: MortalityTable, h: ExposureHistory, grid: AgeGrid | None = None) -> float:
    """``sum r0(t) W(t) S0(t)``: the LEAR per unit slope of a linear ERR model."""
    size = table.r0.size if grid is None else grid.size
    if h.w.size != size:
        raise DataError("history and table must cover the same ages")
    W = covariates(h.w, h.rate, h.latency).W
    return float(measures_from_profile(table.r0[:size], table.q0[:size], W, ("lear",))["lear"])


@dataclass(frozen=True)
class DensityCurve:
    x: np.ndarray
    density: np.ndarray
    bandwidth: float

    @property
    def mode(self) -> float:
        return float(self.x[np.argmax(self.density)])


def silverman_bandwidth(x) -> float:
    """``0.9 * min(sd, IQR/1.34) * n^(-1/5)``; falls back to ``sd`` when IQR is 0."""
    x = np.asarray(x, dtype=float)
    sd = x.std(ddof=1)
    iqr = np.subtract(*np.percentile(x, [75, 25]))
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return float(0.9 * spread * x.size ** (-0.2))


def kde(samples, bandwidth: float | None = None, n_grid: int = 512) -> DensityCurve:
    """Gaussian kernel density on an even grid over the sample range +- 3 bandwidths."""
    x, _ = _as_values(samples)
    if x.size < 2:
        raise DataError("need at least 2 samples for a density estimate")
    sd = x.std(ddof=1)
    if not sd > 0:
        raise DataError("zero-variance samples have no density estimate")
    bw = silverman_bandwidth(x) if bandwidth is None else float(bandwidth)
    if not bw > 0:
        raise DataError("bandwidth must be positive")
    grid = np.linspace(x.min() - 3 * bw, x.max() + 3 * bw, n_grid)
    dens = stats.gaussian_kde(x, bw_method=bw / sd)(grid)
    return DensityCurve(grid, dens, bw)


def write_samples_csv(samples: SampleSet, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        fh.write(f"{samples.measure}\n")
        fh.writelines(f"{v!r}\n" for v in samples.values.tolist())


def read_samples_csv(path) -> np.ndarray:
    with open(Path(path), newline="") as fh:
        rows = list(csv.reader(fh))
    try:
        return np.array([float(r[0]) for r in rows[1:]])
    except (ValueError, IndexError) as exc:
        raise DataError(f"{path}: {exc}") from None


def write_density_csv(curve: DensityCurve, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        fh.write("x,density\n")
        fh.writelines(f"{a!r},{b!r}\n" for a, b in zip(curve.x.tolist(), curve.density.tolist()))
