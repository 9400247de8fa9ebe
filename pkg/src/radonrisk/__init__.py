"""Lifetime lung cancer risk from radon exposure, with uncertainty intervals.

The most used names are re-exported here; the submodules hold the rest:

- :mod:`radonrisk.core`: age grid, mortality tables, interval results
- :mod:`radonrisk.exposure`: exposure histories and derived covariates
- :mod:`radonrisk.models`: ERR model families and their parameters
- :mod:`radonrisk.lifetime`: ELR, REID, LEAR and RADS
- :mod:`radonrisk.ana`: Monte Carlo propagation under asymptotic normality
- :mod:`radonrisk.mortality`: baseline-rate distributions and pooling
- :mod:`radonrisk.bayes`: marginal posterior, samplers and HPDI
- :mod:`radonrisk.cohort`: synthetic grouped cohorts
- :mod:`radonrisk.km`: Kaplan-Meier curves and naive risk differences
"""

__version__ = "0.1.0"

from .core import (AgeGrid, ConfigError, DataError, MortalityTable, NumericalError,  # noqa: E402
                   RadonRiskError, UncertaintyResult, load_mortality_table,
                   relative_uncertainty_span)
from .exposure import ExposureHistory, occupational_scenario  # noqa: E402
from .models import RiskModel, bundled_model, err_profile, load_model  # noqa: E402
from .lifetime import all_measures, elr, lear, rads, reid  # noqa: E402
from .ana import mc_distribution, percentile_interval  # noqa: E402
from .bayes import hpdi, posterior_risk  # noqa: E402

__all__ = [
    "AgeGrid",
    "MortalityTable",
    "UncertaintyResult",
    "ExposureHistory",
    "RiskModel",
    "RadonRiskError",
    "DataError",
    "NumericalError",
    "ConfigError",
    "load_mortality_table",
    "occupational_scenario",
    "bundled_model",
    "load_model",
    "err_profile",
    "lear",
    "reid",
    "elr",
    "rads",
    "all_measures",
    "mc_distribution",
    "percentile_interval",
    "hpdi",
    "posterior_risk",
    "relative_uncertainty_span",
]
