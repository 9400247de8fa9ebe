"""Excess relative risk (ERR) models.

Five families share one evaluation path. Parameters live in a flat vector
``theta`` whose layout depends on the family:

=================  ===========================================================
SimpleLinear       ``[beta]``
ParametricSub      ``[beta, alpha, eps]``
ParametricFull     ``[beta_1 .. beta_k, alpha, eps]``, one beta per rate class
Beir6Full          ``[beta, th15_24, th25_34, th35p, phi_1.., gamma_1..]``
Beir6Sub           ``[beta, th15_24, th25p, phi_1.., gamma_1..]``
=================  ===========================================================

The 5-14 year window weight of the BEIR VI type models is fixed at 1.
``phi`` holds one factor per attained-age class and ``gamma`` one per
exposure-rate class.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import DataError, bundled_path
from .exposure import Covariates, ExposureHistory, covariates

__all__ = [
    "FAMILIES",
    "RiskModel",
    "err",
    "err_profile",
    "err_from_covariates",
    "load_model",
    "save_model",
    "bundled_model",
    "psd_violation",
]

FAMILIES = ("SimpleLinear", "ParametricSub", "ParametricFull", "Beir6Sub", "Beir6Full")
_ALIASES = {f.lower(): f for f in FAMILIES}
_ALIASES.update({
    "simple_linear": "SimpleLinear",
    "parametric_sub": "ParametricSub",
    "parametric_full": "ParametricFull",
    "beir6_sub": "Beir6Sub",
    "beir6_full": "Beir6Full",
})

DEFAULT_RATE_BOUNDS = (0.5, 1.0, 3.0, 5.0, 15.0)
DEFAULT_AGE_BOUNDS = (55.0, 65.0, 75.0)

# reference point of the effect modifiers in the parametric models
AME_REF = 30.0
TME_REF = 20.0


def psd_violation(cov: np.ndarray, rtol: float = 1e-10) -> int | None:
    """Size of the first leading principal block that is not PSD, or None."""
    cov = np.asarray(cov, dtype=float)
    scale = max(float(np.max(np.abs(np.diag(cov)), initial=0.0)), 1e-300)
    for k in range(1, cov.shape[0] + 1):
        if np.linalg.eigvalsh(cov[:k, :k])[0] < -rtol * scale:
            return k
    return None


def _canonical_family(name: str) -> str:
    try:
        return _ALIASES[str(name).lower()]
    except KeyError:
        raise DataError(f"unknown model family {name!r}; expected one of {FAMILIES}") from None


def _check_bounds(bounds, what):
    b = tuple(float(x) for x in bounds)
    if any(not np.isfinite(x) for x in b) or any(y <= x for x, y in zip(b, b[1:])):
        raise DataError(f"{what} must be finite and strictly increasing, got {b}")
    return b


@dataclass(frozen=True)
class RiskModel:
    """An ERR model family together with its parameter vector.

    Parameters
    ----------
    family : str
        One of :data:`FAMILIES` (snake_case aliases accepted).
    theta : array_like
        Parameter vector in the family's layout (see module docstring).
    covariance : array_like, optional
        Covariance of the estimator of ``theta``; required for ANA sampling.
    rate_category_bounds, age_category_bounds : sequence of float
        Class boundaries in WL and years. A value ``x`` falls in class
        ``searchsorted(bounds, x, side="right")``.
    prior : tuple of dict
        Raw prior specification, one entry per parameter (see
        :mod:`radonrisk.bayes`).
    """

    family: str
    theta: np.ndarray
    covariance: np.ndarray | None = None
    rate_category_bounds: tuple = DEFAULT_RATE_BOUNDS
    age_category_bounds: tuple = DEFAULT_AGE_BOUNDS
    label: str = ""
    prior: tuple = field(default=(), compare=False)

    def __post_init__(self):
        fam = _canonical_family(self.family)
        object.__setattr__(self, "family", fam)
        rb = _check_bounds(self.rate_category_bounds, "rate category bounds")
        ab = _check_bounds(self.age_category_bounds, "age category bounds")
        object.__setattr__(self, "rate_category_bounds", rb)
        object.__setattr__(self, "age_category_bounds", ab)
        theta = np.array(self.theta, dtype=float).reshape(-1)
        if theta.size != self.n_params:
            raise DataError(f"{fam} needs {self.n_params} parameters, got {theta.size}")
        if not np.all(np.isfinite(theta)):
            raise DataError("theta must be finite")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        if self.covariance is not None:
            cov = np.array(self.covariance, dtype=float)
            if cov.shape != (theta.size, theta.size):
                raise DataError(f"covariance must be {theta.size}x{theta.size}, got {cov.shape}")
            if not np.allclose(cov, cov.T, rtol=1e-10, atol=1e-15):
                raise DataError("covariance must be symmetric")
            k = psd_violation(cov)
            if k is not None:
                raise DataError(f"covariance is not positive semidefinite (leading minor {k})")
            cov.setflags(write=False)
            object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "prior", tuple(self.prior))

    @property
    def n_rate_classes(self) -> int:
        return len(self.rate_category_bounds) + 1

    @property
    def n_age_classes(self) -> int:
        return len(self.age_category_bounds) + 1

    @property
    def n_params(self) -> int:
        fam = self.family
        if fam == "SimpleLinear":
            return 1
        if fam == "ParametricSub":
            return 3
        if fam == "ParametricFull":
            return self.n_rate_classes + 2
        windows = 3 if fam == "Beir6Full" else 2
        return 1 + windows + self.n_age_classes + self.n_rate_classes

    @property
    def names(self) -> list[str]:
        fam = self.family
        if fam == "SimpleLinear":
            return ["beta"]
        if fam == "ParametricSub":
            return ["beta", "alpha", "eps"]
        if fam == "ParametricFull":
            return [f"beta_{j + 1}" for j in range(self.n_rate_classes)] + ["alpha", "eps"]
        win = ["theta_15_24", "theta_25_34", "theta_35p"] if fam == "Beir6Full" else [
            "theta_15_24", "theta_25p"]
        return (["beta"] + win + [f"phi_{j + 1}" for j in range(self.n_age_classes)]
                + [f"gamma_{j + 1}" for j in range(self.n_rate_classes)])

    @property
    def beta_index(self) -> np.ndarray:
        """Indices of the parameters that scale ERR linearly."""
        if self.family == "ParametricFull":
            return np.arange(self.n_rate_classes)
        return np.array([0])

    @property
    def se(self) -> np.ndarray | None:
        return None if self.covariance is None else np.sqrt(np.diag(self.covariance))

    def with_theta(self, theta) -> "RiskModel":
        return RiskModel(self.family, theta, self.covariance, self.rate_category_bounds,
                         self.age_category_bounds, self.label, self.prior)

    def with_covariance(self, covariance) -> "RiskModel":
        return RiskModel(self.family, self.theta, covariance, self.rate_category_bounds,
                         self.age_category_bounds, self.label, self.prior)

    def scale_beta(self, c: float) -> "RiskModel":
        """Multiply the linear ERR coefficient(s) by ``c``."""
        th = self.theta.copy()
        th[self.beta_index] *= c
        return self.with_theta(th)

    @classmethod
    def simple_linear(cls, beta: float, se: float | None = None, **kw) -> "RiskModel":
        cov = None if se is None else [[se**2]]
        return cls("SimpleLinear", [beta], cov, **kw)

    @classmethod
    def parametric_sub(cls, beta, alpha, eps, se=None, **kw) -> "RiskModel":
        cov = None if se is None else np.diag(np.asarray(se, dtype=float) ** 2)
        return cls("ParametricSub", [beta, alpha, eps], cov, **kw)

    @classmethod
    def beir6_identity(cls, family: str, beta: float, windows, **kw) -> "RiskModel":
        """BEIR VI type model with all age and rate factors equal to 1."""
        m = cls(family, np.ones(_probe_size(family, kw)), **kw)
        th = np.ones(m.n_params)
        th[0] = beta
        nw = 3 if m.family == "Beir6Full" else 2
        th[1 : 1 + nw] = windows
        return m.with_theta(th)


def _probe_size(family: str, kw: dict) -> int:
    fam = _canonical_family(family)
    nr = len(kw.get("rate_category_bounds", DEFAULT_RATE_BOUNDS)) + 1
    na = len(kw.get("age_category_bounds", DEFAULT_AGE_BOUNDS)) + 1
    return 1 + (3 if fam == "Beir6Full" else 2) + na + nr


def _categories(x: np.ndarray, bounds: tuple) -> np.ndarray:
    return np.searchsorted(np.asarray(bounds), x, side="right")


def err_from_covariates(model: RiskModel, cov: Covariates, theta=None,
                        paired: bool = False) -> np.ndarray:
    """ERR for every entry of ``cov``.

    Parameters
    ----------
    model : RiskModel
        Supplies the family and category tables.
    cov : Covariates
        Covariate arrays of common shape ``S``.
    theta : array_like, optional
        Parameter vector ``(p,)`` or batch ``(m, p)``; defaults to
        ``model.theta``.
    paired : bool
        Pair row ``i`` of a batch with ``cov[i]`` (``S`` must start with
        ``m``) instead of evaluating every vector on every entry.

    Returns
    -------
    ndarray
        Shape ``S`` for a single vector or a paired batch, ``(m,) + S``
        otherwise.
    """
    theta = model.theta if theta is None else np.asarray(theta, dtype=float)
    single = theta.ndim == 1
    th = np.atleast_2d(theta)
    if th.shape[1] != model.n_params:
        raise DataError(f"{model.family} needs {model.n_params} parameters, got {th.shape[1]}")
    W = np.asarray(cov.W, dtype=float)
    if np.any(W < 0):
        raise DataError("negative cumulative exposure")
    nd = W.ndim - 1 if paired and not single else W.ndim
    if paired and not single and W.shape[:1] != (th.shape[0],):
        raise DataError("paired evaluation needs one covariate row per parameter vector")
    col = lambda j: th[:, j].reshape((-1,) + (1,) * nd)  # noqa: E731

    def pick(block, cat):
        # per-class parameters -> value for each entry's class
        if paired and not single:
            flat = cat.reshape(cat.shape[0], -1)
            return np.take_along_axis(block, flat, axis=1).reshape(cat.shape)
        return block[:, cat]
    exposed = W > 0
    fam = model.family

    if fam in ("ParametricSub", "ParametricFull"):
        if cov.AME is None or cov.TME is None:
            raise DataError(f"{fam} needs AME and TME covariates")
        ame = np.where(exposed, np.nan_to_num(cov.AME, nan=AME_REF), AME_REF)
        tme = np.where(exposed, np.nan_to_num(cov.TME, nan=TME_REF), TME_REF)
        if fam == "ParametricSub":
            beta, a, e = col(0), col(1), col(2)
        else:
            k = model.n_rate_classes
            cat = _rate_classes(model, cov)
            beta = pick(th[:, :k], cat)
            a, e = col(k), col(k + 1)
        out = beta * W * np.exp(a * (ame - AME_REF) + e * (tme - TME_REF))
    elif fam == "SimpleLinear":
        out = col(0) * W
    else:
        if not cov.windows:
            raise DataError(f"{fam} needs window exposures")
        w = cov.windows
        if fam == "Beir6Full":
            eff = w["w5_14"] + col(1) * w["w15_24"] + col(2) * w["w25_34"] + col(3) * w["w35p"]
            off = 4
        else:
            w25p = w.get("w25p", w["w25_34"] + w["w35p"])
            eff = w["w5_14"] + col(1) * w["w15_24"] + col(2) * w25p
            off = 3
        if cov.age is None:
            raise DataError(f"{fam} needs attained age")
        na = model.n_age_classes
        age_cat = _categories(np.broadcast_to(cov.age, W.shape), model.age_category_bounds)
        phi = pick(th[:, off : off + na], age_cat)
        gamma = pick(th[:, off + na :], _rate_classes(model, cov))
        out = col(0) * eff * phi * gamma
    out = np.where(exposed, out, 0.0)
    return out[0] if single else out


def _rate_classes(model: RiskModel, cov: Covariates) -> np.ndarray:
    if cov.rate_cat is not None:
        cat = np.asarray(cov.rate_cat, dtype=int)
        if np.any(cat < 0) or np.any(cat >= model.n_rate_classes):
            raise DataError(f"rate category outside 0..{model.n_rate_classes - 1}")
        return cat
    if cov.rate is None:
        raise DataError(f"{model.family} needs the exposure rate")
    return _categories(np.asarray(cov.rate), model.rate_category_bounds)


def err_profile(model: RiskModel, h: ExposureHistory, grid=None) -> np.ndarray:
    """ERR at every attained age of the history's grid."""
    if grid is not None and grid.size != h.w.size:
        raise DataError(f"history covers {h.w.size} ages, grid needs {grid.size}")
    return err_from_covariates(model, covariates(h.w, h.rate, h.latency))


def err(model: RiskModel, h: ExposureHistory, t: int) -> float:
    """ERR at attained age ``t``."""
    if not 0 <= t <= h.t_max:
        raise ValueError(f"age {t} outside 0..{h.t_max}")
    return float(err_profile(model, h)[t])


def _lower_triangle(cov: np.ndarray) -> list[float]:
    i, j = np.tril_indices(cov.shape[0])
    return cov[i, j].tolist()


def _from_lower_triangle(values, p: int) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.size != p * (p + 1) // 2:
        raise DataError(f"covariance_lower needs {p * (p + 1) // 2} entries, got {values.size}")
    cov = np.zeros((p, p))
    i, j = np.tril_indices(p)
    cov[i, j] = values
    cov[j, i] = values
    return cov


def model_from_dict(d: dict) -> RiskModel:
    """Build a model from its JSON form (see :func:`load_model`)."""
    if "family" not in d or "theta" not in d:
        raise DataError("model spec needs 'family' and 'theta'")
    theta = np.asarray(d["theta"], dtype=float)
    kw = {}
    for key in ("rate_category_bounds", "age_category_bounds"):
        if key in d:
            kw[key] = d[key]
    cov = None
    if "covariance_lower" in d:
        cov = _from_lower_triangle(d["covariance_lower"], theta.size)
    elif "covariance" in d:
        cov = np.asarray(d["covariance"], dtype=float)
    elif "se" in d:
        se = np.asarray(d["se"], dtype=float)
        if se.shape != theta.shape:
            raise DataError("'se' must match theta in length")
        cov = np.diag(se**2)
    return RiskModel(d["family"], theta, cov, label=d.get("label", ""),
                     prior=tuple(d.get("prior", ())), **kw)


def model_to_dict(model: RiskModel) -> dict:
    d = {
        "family": model.family,
        "label": model.label,
        "names": model.names,
        "theta": model.theta.tolist(),
        "rate_category_bounds": list(model.rate_category_bounds),
        "age_category_bounds": list(model.age_category_bounds),
    }
    if model.covariance is not None:
        d["covariance_lower"] = _lower_triangle(model.covariance)
    if model.prior:
        d["prior"] = list(model.prior)
    return d


def load_model(path) -> RiskModel:
    """Read a model spec JSON.

    Keys: ``family``, ``theta``, optional ``label``, ``rate_category_bounds``,
    ``age_category_bounds``, ``prior`` and one of ``covariance_lower``
    (row-major lower triangle), ``covariance`` (full matrix) or ``se``
    (standard errors, giving a diagonal covariance).
    """
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: {exc}") from None
    return model_from_dict(d)


def save_model(model: RiskModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2) + "\n")


def bundled_model(name: str) -> RiskModel:
    """Load a shipped model spec, e.g. ``"simple_linear_sub"`` or ``"parametric_sub"``."""
    return load_model(bundled_path(f"models/{name}.json"))
