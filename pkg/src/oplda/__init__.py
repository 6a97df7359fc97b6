"""Loss distribution approach for operational risk: severity fitting under a
reporting threshold, model selection, annual-loss simulation and capital."""

from oplda.annual_loss import AnnualLossModel, CapitalReport, QuantileFunction, capital_proxy, simulate_annual_losses
from oplda.distributions import Family, Mixture, ParameterDomainError, SeverityModel, TailClass
from oplda.frequency import estimate_rate, scale_rate
from oplda.kernels import BACKEND
from oplda.likelihood import CensoredSample, FitConfig, FitResult, TruncatedSample, fit, fit_censored, fit_truncated
from oplda.selection import SelectionMode, ad_test, aic, integrated_qs, modified_ad_statistic, quantile_score

__version__ = "0.1.0"

__all__ = [
    "AnnualLossModel",
    "BACKEND",
    "CapitalReport",
    "CensoredSample",
    "Family",
    "FitConfig",
    "FitResult",
    "Mixture",
    "ParameterDomainError",
    "QuantileFunction",
    "SelectionMode",
    "SeverityModel",
    "TailClass",
    "TruncatedSample",
    "ad_test",
    "aic",
    "capital_proxy",
    "estimate_rate",
    "fit",
    "fit_censored",
    "fit_truncated",
    "integrated_qs",
    "modified_ad_statistic",
    "quantile_score",
    "scale_rate",
    "simulate_annual_losses",
]
