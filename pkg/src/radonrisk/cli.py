"""Command-line front end.

Subcommands ``point``, ``uncertainty``, ``fit-mortality`` and ``km``. Runs are
described by a flat ``key = value`` config file; command-line flags override
config values. Every JSON output carries the package version, the seed and a
hash of the effective configuration, and holds fractions; percentages are
only used for the console summary.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import os
import sys
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .ana import (LogNormalExposure, SampleSet, analytic_linear, constant_C, kde,
                  mc_distribution, percentile_interval, write_density_csv, write_samples_csv)
from .bayes import load_cohort_csv, posterior_risk
from .core import (AgeGrid, ConfigError, DataError, NumericalError, UncertaintyResult,
                   load_mortality_table)
from .exposure import load_exposure_csv, occupational_scenario
from .km import DEFAULT_BOUNDS, km_estimate, load_subjects, naive_lear_table, write_curves_csv
from .lifetime import MEASURES, all_measures
from .models import bundled_model, load_model
from .mortality import (bundled_rate_distributions, fit_rate_distribution,
                        load_observations, load_rate_distributions)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4

METHODS = ("ana", "bayes-mh", "bayes-reject", "mortality", "joint", "km", "exposure-sim")
DEFAULT_VARY = {"ana": "params", "mortality": "r0", "joint": "params,r0",
                "exposure-sim": "exposure"}

# keys holding file paths, resolved relative to the config file that sets them
PATH_KEYS = ("mortality_table", "model", "exposure_csv", "rate_distributions", "cohort",
             "prior", "subjects", "observations")
# keys that never change results and so stay out of the config hash
UNHASHED = ("workers", "out", "samples_out", "density_out", "curves_out")

DEFAULTS = {
    "model": "simple_linear_sub",
    "annual_wlm": "2",
    "age_from": "18",
    "age_to": "64",
    "latency": "5",
    "wl_divisor": "12",
    "t_max": "94",
    "samples": "100000",
    "level": "0.95",
    "measure": "lear",
    "rate_draws": "group",
    "exposure_sigma": "1.0",
    "burn_in": "10000",
    "cut_age": "85",
    "reference": "none",
}


# --- configuration ----------------------------------------------------------

def _read_flat(path: Path, seen: tuple = ()) -> dict:
    path = path.resolve()
    if path in seen:
        raise ConfigError(f"include cycle through {path}")
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string("[run]\n" + path.read_text(), source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    raw = dict(parser["run"])
    out = {}
    for inc in (s.strip() for s in raw.pop("include", "").split(",")):
        if inc:
            out.update(_read_flat(path.parent / inc, seen + (path,)))
    for k, v in raw.items():
        if k in PATH_KEYS and v:
            v = ",".join(_resolve(path.parent, p.strip()) for p in v.split(","))
        out[k] = v
    return out


def _resolve(base: Path, value: str) -> str:
    p = base / value
    return str(p.resolve()) if p.exists() else value


def load_config(path) -> dict:
    """Read a flat config; ``include = a.cfg, b.cfg`` pulls in files first."""
    return _read_flat(Path(path))


@dataclass
class RunConfig:
    """Effective settings of one run, as strings from file or flags."""

    values: dict = field(default_factory=dict)

    @classmethod
    def build(cls, path=None, overrides: dict | None = None) -> "RunConfig":
        vals = dict(DEFAULTS)
        if path is not None:
            vals.update(load_config(path))
        for k, v in (overrides or {}).items():
            if v is not None:
                vals[k] = str(v)
        return cls(vals)

    def get(self, key, default=None):
        v = self.values.get(key, default)
        return None if v in (None, "") else v

    def require(self, key) -> str:
        v = self.get(key)
        if v is None:
            raise ConfigError(f"missing config key {key!r}")
        return v

    def num(self, key, kind=float):
        v = self.get(key)
        if v is None:
            return None
        try:
            return kind(float(v)) if kind is int else kind(v)
        except ValueError:
            raise ConfigError(f"{key} must be a number, got {v!r}") from None

    def hash(self) -> str:
        """SHA-256 over the settings and the contents of every input file."""
        settings, files = {}, {}
        for k, v in sorted(self.values.items()):
            if k in UNHASHED:
                continue
            if k in PATH_KEYS and v:
                parts = []
                for p in v.split(","):
                    fp = Path(p)
                    parts.append(hashlib.sha256(fp.read_bytes()).hexdigest() if fp.is_file() else p)
                files[k] = parts
            else:
                settings[k] = v
        blob = json.dumps({"settings": settings, "files": files}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()


# --- input assembly -----------------------------------------------------------

def _grid(cfg: RunConfig) -> AgeGrid:
    return AgeGrid(cfg.num("t_max", int))


def _table(cfg: RunConfig):
    return load_mortality_table(cfg.get("mortality_table"), _grid(cfg))


def _model(cfg: RunConfig):
    spec = cfg.require("model")
    model = load_model(spec) if Path(spec).is_file() else None
    if model is None:
        try:
            model = bundled_model(spec)
        except FileNotFoundError:
            raise ConfigError(f"model {spec!r} is neither a file nor a bundled model") from None
    prior = cfg.get("prior")
    if prior:
        model = replace(model, prior=tuple(json.loads(Path(prior).read_text())))
    return model


def _history(cfg: RunConfig):
    grid = _grid(cfg)
    latency = cfg.num("latency", int)
    divisor = cfg.num("wl_divisor")
    if cfg.get("exposure_csv"):
        return load_exposure_csv(cfg.get("exposure_csv"), grid, latency, divisor)
    return occupational_scenario(cfg.num("annual_wlm"), cfg.num("age_from", int),
                                 cfg.num("age_to", int), grid, latency, divisor)


def _rates(cfg: RunConfig) -> dict:
    paths = cfg.get("rate_distributions")
    if not paths:
        return bundled_rate_distributions()
    out = {}
    for p in paths.split(","):
        out.update(load_rate_distributions(p.strip()))
    return out


def _measure(cfg: RunConfig) -> str:
    m = cfg.require("measure").lower()
    if m not in MEASURES:
        raise ConfigError(f"measure must be one of {MEASURES}, got {m!r}")
    return m


def _level(cfg: RunConfig) -> float:
    level = cfg.num("level")
    if not 0 < level < 1:
        raise ConfigError("level must lie in (0, 1)")
    return level


def _workers(cfg: RunConfig) -> int:
    w = cfg.num("workers", int)
    return max(1, w if w is not None else (os.cpu_count() or 1))


# --- output -------------------------------------------------------------------

def _provenance(cfg: RunConfig, command: str, seed) -> dict:
    return {"version": __version__, "config_hash": cfg.hash(), "seed": seed, "command": command}


def _write_json(doc: dict, path) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _pct(x: float) -> float:
    return 100.0 * x


def _fmt_interval(res: UncertaintyResult) -> str:
    return (f"{_pct(res.point_estimate):.2f}% "
            f"[{_pct(res.lower):.2f}, {_pct(res.upper):.2f}]")


def _interval_doc(res: UncertaintyResult) -> dict:
    d = res.to_dict()
    d["percent"] = {"estimate": _pct(res.point_estimate), "lower": _pct(res.lower),
                    "upper": _pct(res.upper)}
    return d


def _say(cfg: RunConfig, msg: str) -> None:
    # keep stdout clean when the JSON itself goes there
    print(msg, file=sys.stdout if cfg.get("out") else sys.stderr)


# --- commands -----------------------------------------------------------------

def cmd_point(cfg: RunConfig) -> dict:
    """All four measures for the configured scenario."""
    table, model, h = _table(cfg), _model(cfg), _history(cfg)
    vals = all_measures(table, model, h)
    doc = _provenance(cfg, "point", None)
    doc.update({
        "model": model.family,
        "measures": {k: float(v) for k, v in vals.items()},
        "percent": {k: _pct(float(v)) for k, v in vals.items()},
    })
    if model.family == "SimpleLinear":
        doc["linear_constant"] = constant_C(table, h)
    _write_json(doc, cfg.get("out"))
    _say(cfg, "  ".join(f"{k.upper()} {_pct(float(v)):.2f}%" for k, v in vals.items()))
    return doc


def _seed(cfg: RunConfig) -> int:
    seed = cfg.num("seed", int)
    if seed is None:
        raise ConfigError("a seed is required for sampling methods (--seed or seed = ...)")
    if seed < 0:
        raise ConfigError("seed must be non-negative")
    return seed


def cmd_uncertainty(cfg: RunConfig) -> dict:
    """Uncertainty interval of one measure by the configured method."""
    method = cfg.require("method")
    if method not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}, got {method!r}")
    if method == "km":
        return cmd_km(cfg)
    seed = _seed(cfg)
    n = cfg.num("samples", int)
    if n is None or n < 40:
        raise ConfigError("samples must be at least 40")
    level, measure = _level(cfg), _measure(cfg)
    table, model, h = _table(cfg), _model(cfg), _history(cfg)
    details = {"model": model.family}

    if method in ("bayes-mh", "bayes-reject"):
        cohort = load_cohort_csv(cfg.require("cohort"))
        bounds = None
        if cfg.get("reject_lo") is not None or cfg.get("reject_hi") is not None:
            bounds = (cfg.num("reject_lo"), cfg.num("reject_hi"))
        run = posterior_risk(cohort, model, table, h, None, measure,
                             "mh" if method == "bayes-mh" else "reject", n, seed,
                             cfg.num("burn_in", int), level, bounds)
        samples, res = run.risk, run.interval
        details.update({"posterior_mode": run.mode.tolist(),
                        "acceptance_rate": run.acceptance_rate,
                        "n_cells": cohort.n_cells, "n_strata": cohort.n_strata})
    else:
        vary = cfg.get("vary", DEFAULT_VARY[method])
        rate_draws = cfg.require("rate_draws")
        if rate_draws not in ("group", "age"):
            raise ConfigError("rate_draws must be 'group' or 'age'")
        needs_rates = any(r in vary for r in ("r0", "q0"))
        exposure = None
        if "exposure" in vary:
            exposure = LogNormalExposure(cfg.num("annual_wlm"), cfg.num("exposure_sigma"),
                                         cfg.num("age_from", int), cfg.num("age_to", int),
                                         cfg.num("latency", int), cfg.num("wl_divisor"))
        try:
            samples = mc_distribution(model, table, h, measure, n, seed, vary,
                                      _rates(cfg) if needs_rates else None, exposure,
                                      _workers(cfg), rate_draws=rate_draws)
        except ValueError as exc:
            if isinstance(exc, DataError):
                raise
            raise ConfigError(str(exc)) from None
        res = percentile_interval(samples, level)
        details.update({"vary": vary, "rate_draws": rate_draws})
        if method == "ana" and model.family == "SimpleLinear" and model.covariance is not None:
            C = constant_C(table, h)
            details["analytic"] = _interval_doc(
                analytic_linear(float(model.theta[0]), float(model.se[0]), C, level))
            details["linear_constant"] = C

    doc = _provenance(cfg, "uncertainty", seed)
    doc.update({"method": method, "measure": measure, "result": _interval_doc(res),
                "details": details})
    _write_outputs(cfg, samples)
    _write_json(doc, cfg.get("out"))
    _say(cfg, f"{measure.upper()} {_fmt_interval(res)} ({res.method}, n={res.n_samples})")
    return doc


def _write_outputs(cfg: RunConfig, samples: SampleSet) -> None:
    if cfg.get("samples_out"):
        write_samples_csv(samples, cfg.get("samples_out"))
    if cfg.get("density_out"):
        write_density_csv(kde(samples), cfg.get("density_out"))


def cmd_fit_mortality(cfg: RunConfig) -> dict:
    """Per-age-group rate distributions fitted to an observation file."""
    obs = load_observations(cfg.require("observations"))
    family = cfg.get("family", "gamma")
    if family not in ("gamma", "lognormal"):
        raise ConfigError("family must be 'gamma' or 'lognormal'")
    rate = cfg.get("rate", "r0")
    if rate not in ("r0", "q0"):
        raise ConfigError("rate must be 'r0' or 'q0'")
    centered = cfg.get("centered", "false").lower() in ("1", "true", "yes")
    center_on = _table(cfg) if centered else None
    dist = fit_rate_distribution(obs, rate, family, center_on)
    doc = dist.to_dict()
    doc["provenance"] = _provenance(cfg, "fit-mortality", None)
    doc["group_means"] = {f"{g.age_start}-{g.age_end}": g.mean for g in dist.groups}
    _write_json(doc, cfg.get("out"))
    _say(cfg, f"fitted {len(dist.groups)} age groups ({family}, {rate}"
              f"{', centered' if centered else ''})")
    return doc


def _bounds(cfg: RunConfig) -> tuple:
    raw = cfg.get("bounds")
    if raw is None:
        return DEFAULT_BOUNDS
    try:
        return tuple(float(x) for x in raw.split(","))
    except ValueError:
        raise ConfigError(f"bounds must be comma-separated numbers, got {raw!r}") from None


def cmd_km(cfg: RunConfig) -> dict:
    """Kaplan-Meier curves per exposure category and naive LEAR against the reference."""
    records = load_subjects(cfg.require("subjects"))
    level = _level(cfg)
    cut = cfg.num("cut_age")
    curves = km_estimate(records, _bounds(cfg))
    if cfg.get("curves_out"):
        write_curves_csv(curves, cfg.get("curves_out"), level)
    ref = cfg.require("reference")
    doc = _provenance(cfg, "km", None)
    doc.update({"cut_age": cut, "level": level, "reference": ref,
                "categories": {k: {"n_subjects": c.n_subjects, "n_events": int(c.d.sum()),
                                   "survival_at_cut": c.survival(cut)}
                               for k, c in curves.items()}})
    if len(curves) < 2:
        warnings.warn("only one exposure category present; naive LEAR skipped", stacklevel=2)
        doc["naive_lear"] = {}
    else:
        table = naive_lear_table(curves, ref, cut, level)
        doc["naive_lear"] = {k: _interval_doc(v) for k, v in table.items()}
        for k, v in table.items():
            _say(cfg, f"{k:>12}  naive LEAR {_fmt_interval(v)}")
    _write_json(doc, cfg.get("out"))
    return doc


# --- argument parsing ---------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value run configuration")
    p.add_argument("--out", help="JSON result path (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="radonrisk",
        description="Lifetime lung cancer risk from radon exposure, with uncertainty intervals.",
        epilog="exit codes: 0 ok, 2 configuration error, 3 data error, 4 numerical failure",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("point", help="deterministic ELR, REID, LEAR and RADS")
    _common(p)
    p.add_argument("--model", help="model spec JSON or bundled model name")
    p.add_argument("--measure", choices=MEASURES, help="accepted for symmetry; all are reported")

    p = sub.add_parser("uncertainty", help="uncertainty interval for one measure")
    _common(p)
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--seed", type=int)
    p.add_argument("--samples", type=int, help="number of samples (default 100000)")
    p.add_argument("--level", type=float)
    p.add_argument("--measure", choices=MEASURES)
    p.add_argument("--workers", type=int, help="worker threads (default: all cores)")
    p.add_argument("--model", help="model spec JSON or bundled model name")
    p.add_argument("--samples-out", dest="samples_out", help="write raw samples CSV")
    p.add_argument("--density-out", dest="density_out", help="write KDE curve CSV")
    p.add_argument("--cohort", help="grouped cohort CSV for the bayes methods")
    p.add_argument("--burn-in", dest="burn_in", type=int, help="discarded MH steps (default 10000)")
    p.add_argument("--subjects", help="subject CSV for --method km")
    p.add_argument("--curves-out", dest="curves_out")

    p = sub.add_parser("fit-mortality", help="fit per-group rate distributions")
    _common(p)
    p.add_argument("--observations", help="country,sex,year,age_start,age_end,deaths,population")
    p.add_argument("--family", choices=("gamma", "lognormal"))
    p.add_argument("--rate", choices=("r0", "q0"))
    p.add_argument("--centered", action="store_const", const="true")
    p.add_argument("--table", dest="mortality_table", help="table to center on")

    p = sub.add_parser("km", help="Kaplan-Meier curves and naive LEAR")
    _common(p)
    p.add_argument("--subjects", help="id,exit_age,event,cumulative_wlm")
    p.add_argument("--bounds", help="comma-separated WLM category edges")
    p.add_argument("--cut-age", dest="cut_age", type=float)
    p.add_argument("--level", type=float)
    p.add_argument("--curves-out", dest="curves_out", help="write curves CSV")
    return parser


COMMANDS = {"point": cmd_point, "uncertainty": cmd_uncertainty,
            "fit-mortality": cmd_fit_mortality, "km": cmd_km}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    try:
        cfg = RunConfig.build(args.config, overrides)
        COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"radonrisk: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"radonrisk: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"radonrisk: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
