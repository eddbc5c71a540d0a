"""Score-driven (GAS) time-series models: filtering, estimation and forecasting."""

__version__ = "0.1.0"

from scoredriven.distributions import DISTRIBUTIONS, Distribution, get_distribution
from scoredriven.errors import (
    AllStartsFailed,
    DegenerateData,
    DomainError,
    EmptyInput,
    FilterDivergence,
    NonstationaryB,
    ScoreDrivenError,
    SingularInformation,
    UnsupportedScaling,
)
from scoredriven.estimation import (
    FitOptions,
    FitResult,
    ThetaLayout,
    fit,
    fit_stats,
    objective,
    random_starts,
)
from scoredriven.forecasting import Forecast, empirical_quantile, forecast
from scoredriven.links import (
    IdentityLink,
    Link,
    LogitLink,
    LogLink,
    information_sqrt,
    jacobian_link,
    link,
    parse_link,
    scaled_score,
    unlink,
)
from scoredriven.model import (
    Coefficients,
    FilterResult,
    ModelSpec,
    dynamic_initial_params,
    filter_series,
    simulate_series,
    unconditional_mean_init,
    update_step,
)

__all__ = [
    "__version__",
    "DISTRIBUTIONS",
    "Distribution",
    "get_distribution",
    "AllStartsFailed",
    "DegenerateData",
    "DomainError",
    "EmptyInput",
    "FilterDivergence",
    "NonstationaryB",
    "ScoreDrivenError",
    "SingularInformation",
    "UnsupportedScaling",
    "FitOptions",
    "FitResult",
    "ThetaLayout",
    "fit",
    "fit_stats",
    "objective",
    "random_starts",
    "Forecast",
    "empirical_quantile",
    "forecast",
    "IdentityLink",
    "Link",
    "LogitLink",
    "LogLink",
    "information_sqrt",
    "jacobian_link",
    "link",
    "parse_link",
    "scaled_score",
    "unlink",
    "Coefficients",
    "FilterResult",
    "ModelSpec",
    "dynamic_initial_params",
    "filter_series",
    "simulate_series",
    "unconditional_mean_init",
    "update_step",
]
