"""Probabilistic short-term wind power forecasting.

Wind speed is filtered as a log-space state-space model with time-varying
drift and volatility (dual Kalman filter), converted through an online
kernel power curve into a closed-form log-normal power density, and read
out as quantiles, shortest prediction intervals and asymmetric-cost
point forecasts.
"""

from .data import HyperGrid, RunConfig, SeriesFrame, load_config, load_csv, split_train_test
from .density import LogNormalDensity, PowerDynamics, power_dynamics, predictive_power_density
from .evaluation import MetricReport, pce, pce_alpha_sweep, summarize
from .forecaster import (
    ForecastRecord,
    WindPowerForecaster,
    optimal_point,
    prediction_interval,
    quantile,
    run_backtest,
)
from .power_curve import CurveEvaluation, KernelPowerCurve, gaussian_kernel
from .simulate import LogisticCurve, SimSpec, one_step_transition_sample, simulate
from .speed_filter import SpeedFilter, SpeedPrediction

__version__ = "0.1.0"

__all__ = [
    "SeriesFrame",
    "RunConfig",
    "HyperGrid",
    "load_csv",
    "load_config",
    "split_train_test",
    "SpeedFilter",
    "SpeedPrediction",
    "KernelPowerCurve",
    "CurveEvaluation",
    "gaussian_kernel",
    "LogNormalDensity",
    "PowerDynamics",
    "power_dynamics",
    "predictive_power_density",
    "quantile",
    "prediction_interval",
    "optimal_point",
    "ForecastRecord",
    "WindPowerForecaster",
    "run_backtest",
    "pce",
    "MetricReport",
    "summarize",
    "pce_alpha_sweep",
    "SimSpec",
    "LogisticCurve",
    "simulate",
    "one_step_transition_sample",
    "__version__",
]
