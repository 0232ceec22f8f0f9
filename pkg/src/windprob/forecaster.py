"""Quantile, interval and point forecasts, plus the one-step backtest loop.

The loop follows the filtering cycle: predict the speed density, evaluate
the curve at the predicted speed, assemble the power density, issue the
forecasts, then absorb the realized observation into the filter and the
curve. A forecast for step t+1 therefore only ever sees data through t.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import norm
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .data import RunConfig, SeriesFrame
from .density import LogNormalDensity, power_dynamics, predictive_power_density
from .power_curve import KernelPowerCurve
from .speed_filter import SpeedFilter, tune_speed_hyperparameters
from .validation import check_unit_open

__all__ = [
    "quantile",
    "prediction_interval",
    "optimal_point",
    "ForecastRecord",
    "WindPowerForecaster",
    "run_backtest",
    "tune_curve_hyperparameters",
    "tune_pipeline_hyperparameters",
    "records_to_csv",
    "records_to_jsonl",
]


def _phi(x: float) -> float:
    """Standard normal CDF via erf (fast scalar path for the bisection)."""
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def quantile(density: LogNormalDensity, beta: float) -> float:
    """beta-quantile exp(mu' + sigma' * PhiInv(beta)) of the log-normal."""
    check_unit_open(beta, "beta")
    return math.exp(density.mu_prime + density.sigma_prime * float(norm.ppf(beta)))


def prediction_interval(density: LogNormalDensity, level: float, tol=1e-10, max_iter=200):
    """Shortest interval with the requested coverage.

    Solves Phi(B) - Phi(A) = level subject to A + B = -2*sigma' by
    bisection on A; the constraint equalizes the log-normal density at
    both endpoints, which makes the interval highest-density (shortest).

    Returns
    -------
    (lo, hi) : tuple of float
        exp(mu' + sigma' * A), exp(mu' + sigma' * B).
    """
    check_unit_open(level, "level")
    mu, sig = density.mu_prime, density.sigma_prime
    if sig == 0.0:
        warnings.warn("degenerate density (sigma'=0); returning a point interval", stacklevel=2)
        point = math.exp(mu)
        return point, point

    def g(a):
        return _phi(-2.0 * sig - a) - _phi(a) - level

    hi = -sig           # g(hi) = -level < 0
    lo = -sig - 60.0    # far enough into the tail that g ~ 1 - level > 0
    if g(lo) <= 0.0:
        raise RuntimeError("failed to bracket the interval equation")
    a = 0.5 * (lo + hi)
    for _ in range(max_iter):
        ga = g(a)
        if abs(ga) <= tol:
            break
        if ga > 0.0:
            lo = a
        else:
            hi = a
        a = 0.5 * (lo + hi)
    b = -2.0 * sig - a
    return math.exp(mu + sig * a), math.exp(mu + sig * b)


def optimal_point(density: LogNormalDensity, alpha: float) -> float:
    """Point forecast minimizing the asymmetric expected cost.

    With weight ``alpha`` on expected underestimation and ``1 - alpha`` on
    expected overestimation, the minimizer is the alpha-quantile.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(
            f"alpha={alpha}: the expected-cost minimizer is unbounded or degenerate at 0 and 1"
        )
    return quantile(density, alpha)


@dataclass(frozen=True)
class ForecastRecord:
    """One backtest step: forecasts issued before the step, realization after."""

    step: int
    point: float
    quantiles: dict = field(default_factory=dict)
    intervals: dict = field(default_factory=dict)
    density: LogNormalDensity | None = None
    realized_power: float = math.nan
    realized_speed: float = math.nan
    flags: tuple = ()
    speed_density: tuple | None = None
    alpha_power: dict | None = None

    def __post_init__(self):
        betas = sorted(self.quantiles)
        values = [self.quantiles[b] for b in betas]
        if any(v2 < v1 for v1, v2 in zip(values, values[1:])):
            raise ValueError("quantiles must be nondecreasing in beta")
        for lvl, (lo, hi) in self.intervals.items():
            if lo > hi:
                raise ValueError(f"interval at level {lvl} has lo > hi")


def _filter_kwargs(cfg: RunConfig) -> dict:
    return {
        "sigma_s2_min": cfg.sigma_s2_min,
        "sigma_floor": cfg.sigma_floor,
        "literal_ratio_returns": cfg.literal_ratio_returns,
    }


def _pipeline_rmse(speeds, powers, trajectory, warmup, delta, gamma, window, delta_t,
                   power_floor, sigma_prime_max, f_s_floor):
    """One-step power RMSE of the full density pipeline for one (delta, gamma)."""
    curve = KernelPowerCurve(
        delta=delta, gamma=gamma, window=window, delta_t=delta_t, f_s_floor=f_s_floor
    ).fit(speeds[:warmup], powers[:warmup])
    try:
        sigma_f = curve.estimate_sigma_f(powers[:warmup])
    except ValueError:
        sigma_f = 0.0
    p_now = max(powers[warmup - 1], power_floor)
    err2 = 0.0
    for i, (s_point, mu_s, sigma_s2, s_post) in enumerate(trajectory):
        ev = curve.evaluate(s_point)
        dyn = power_dynamics(s_point, p_now, mu_s, sigma_s2, ev, sigma_f, power_floor=power_floor)
        density = predictive_power_density(p_now, dyn, delta_t, sigma_max=sigma_prime_max)
        err2 += (math.exp(density.mu_prime) - powers[warmup + i]) ** 2
        curve.update(s_post, powers[warmup + i])
        p_now = max(powers[warmup + i], power_floor)
    return math.sqrt(err2 / len(trajectory))


def tune_curve_hyperparameters(speeds, powers, grid, filter_params, delta_t=1.0, window=None,
                               warmup_fraction=0.5, power_floor=0.1, sigma_prime_max=5.0,
                               f_s_floor=1e-3, n_jobs=1):
    """Pick (delta, gamma) by rolling one-step power-prediction RMSE.

    The filter (with already-tuned noise parameters) and each candidate
    curve are grown on the warmup prefix; the remainder of the training
    window is walked exactly like a backtest and scored on the median
    power forecast. The filter trajectory is shared across candidates
    since it does not depend on the curve. Ties break toward smaller
    delta, then smaller gamma.
    """
    from joblib import Parallel, delayed

    candidates = [(float(d), float(g)) for d in grid.delta for g in grid.gamma]
    if not candidates:
        raise ValueError("empty (delta, gamma) grid")
    if len(candidates) == 1:
        return candidates[0]
    speeds = np.asarray(speeds, dtype=float)
    powers = np.asarray(powers, dtype=float)
    if len(speeds) < 10:
        raise ValueError(f"need at least 10 training rows to tune the curve, got {len(speeds)}")

    warmup = max(3, int(warmup_fraction * len(speeds)))
    filt = SpeedFilter(delta_t=delta_t, **filter_params)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        filt.fit(speeds[:warmup])
    trajectory = []
    for s in speeds[warmup:]:
        pred = filt.predict()
        filt.update(s)
        trajectory.append((pred.s_point, pred.mu_s, pred.sigma_s2, math.exp(filt.x_)))

    eff_window = window if window is not None else len(speeds)
    scores = Parallel(n_jobs=n_jobs)(
        delayed(_pipeline_rmse)(
            speeds, powers, trajectory, warmup, d, g, eff_window, delta_t,
            power_floor, sigma_prime_max, f_s_floor,
        )
        for d, g in candidates
    )
    order = sorted(zip(scores, candidates), key=lambda t: (t[0], t[1][0], t[1][1]))
    return order[0][1]


def tune_pipeline_hyperparameters(train: SeriesFrame, config: RunConfig) -> dict:
    """Cross-validate the filter noise parameters, then the curve parameters."""
    q_mu, q_sigma2, sigma_z2 = tune_speed_hyperparameters(
        train.speed, config.hyper_grid,
        warmup_fraction=config.cv_warmup_fraction,
        n_jobs=config.n_jobs,
        delta_t=train.delta_t,
        **_filter_kwargs(config),
    )
    delta, gamma = tune_curve_hyperparameters(
        train.speed, train.power, config.hyper_grid,
        filter_params={"q_mu": q_mu, "q_sigma2": q_sigma2, "sigma_z2": sigma_z2,
                       **_filter_kwargs(config)},
        delta_t=train.delta_t, window=config.curve_window,
        warmup_fraction=config.cv_warmup_fraction,
        power_floor=config.power_floor, sigma_prime_max=config.sigma_prime_max,
        f_s_floor=config.f_s_floor, n_jobs=config.n_jobs,
    )
    return {"q_mu": q_mu, "q_sigma2": q_sigma2, "sigma_z2": sigma_z2,
            "delta": delta, "gamma": gamma}


class WindPowerForecaster(BaseEstimator):
    """End-to-end probabilistic forecaster: dual Kalman filter + kernel curve.

    ``fit`` tunes the noise covariances and kernel hyperparameters on the
    training window, initializes the filter and the curve, and estimates
    the conversion-noise scale. ``backtest`` then walks a test frame one
    step at a time.
    """

    def __init__(self, config: RunConfig | None = None):
        self.config = config

    def fit(self, train: SeriesFrame) -> "WindPowerForecaster":
        cfg = self.config if self.config is not None else RunConfig()
        if len(train) < 10:
            raise ValueError(f"need at least 10 training rows, got {len(train)}")
        self.config_ = cfg
        tuned = tune_pipeline_hyperparameters(train, cfg)
        self.filter_ = SpeedFilter(
            q_mu=tuned["q_mu"], q_sigma2=tuned["q_sigma2"], sigma_z2=tuned["sigma_z2"],
            delta_t=train.delta_t, **_filter_kwargs(cfg),
        ).fit(train.speed)
        delta, gamma = tuned["delta"], tuned["gamma"]
        self.curve_ = KernelPowerCurve(
            delta=delta, gamma=gamma, window=cfg.curve_window,
            delta_t=train.delta_t, f_s_floor=cfg.f_s_floor,
        ).fit(train.speed, train.power)
        self.sigma_f_ = self.curve_.estimate_sigma_f(train.power)
        self.last_power_ = float(train.power[-1])
        self.last_speed_ = float(train.speed[-1])
        self.n_trained_ = len(train)
        self.step_ = 0
        return self

    def _check_fitted(self):
        if not hasattr(self, "filter_"):
            raise NotFittedError("WindPowerForecaster is not fitted; call fit first")

    def forecast_step(self) -> ForecastRecord:
        """Issue the forecast for the next step without observing it."""
        self._check_fitted()
        cfg = self.config_
        pred = self.filter_.predict()
        if cfg.curve_eval_at == "median":
            s_eval = pred.s_point
        else:
            s_eval = math.exp(pred.x_prior + 0.5 * pred.sigma_s2 * self.filter_.delta_t)
        ev = self.curve_.evaluate(s_eval)

        flags = []
        p_now = self.last_power_
        if p_now < cfg.power_floor:
            p_now = cfg.power_floor
            flags.append("floored")
        dyn = power_dynamics(
            s_eval, p_now, pred.mu_s, pred.sigma_s2, ev, self.sigma_f_,
            power_floor=cfg.power_floor,
        )
        delta_t = self.filter_.delta_t
        if dyn.sigma_p * math.sqrt(delta_t) > cfg.sigma_prime_max:
            flags.append("capped")
        density = predictive_power_density(p_now, dyn, delta_t, sigma_max=cfg.sigma_prime_max)

        point = optimal_point(density, cfg.alpha_loss)
        quantiles = {beta: quantile(density, beta) for beta in cfg.quantile_levels}
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            intervals = {lvl: prediction_interval(density, lvl) for lvl in cfg.interval_levels}
        return ForecastRecord(
            step=self.step_,
            point=point,
            quantiles=quantiles,
            intervals=intervals,
            density=density,
            flags=tuple(flags),
        )

    def observe(self, speed: float, power: float) -> "WindPowerForecaster":
        """Absorb the realized observation: filter the speed, update the curve.

        The curve update happens at the filtered (posterior) speed, keeping
        the dictionary on the same scale as the forecast-time evaluations.
        """
        self._check_fitted()
        self.filter_.update(speed)
        self.curve_.update(math.exp(self.filter_.x_), power)
        self.last_power_ = float(power)
        self.last_speed_ = float(speed)
        self.step_ += 1
        return self

    def backtest(self, test: SeriesFrame) -> list:
        """One record per test step; forecasts precede their observations."""
        self._check_fitted()
        records = []
        for i in range(len(test)):
            fc = self.forecast_step()
            records.append(
                ForecastRecord(
                    step=fc.step,
                    point=fc.point,
                    quantiles=fc.quantiles,
                    intervals=fc.intervals,
                    density=fc.density,
                    realized_power=float(test.power[i]),
                    realized_speed=float(test.speed[i]),
                    flags=fc.flags,
                )
            )
            self.observe(test.speed[i], test.power[i])
        return records

    # -- persistence ---------------------------------------------------------

    def to_dict(self) -> dict:
        self._check_fitted()
        return {
            "config": self.config_.to_dict(),
            "speed_filter": self.filter_.to_dict(),
            "power_curve": self.curve_.to_dict(),
            "sigma_f": self.sigma_f_,
            "last_power": self.last_power_,
            "last_speed": self.last_speed_,
            "n_trained": self.n_trained_,
            "step": self.step_,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WindPowerForecaster":
        cfg = RunConfig.from_dict(d["config"])
        fc = cls(config=cfg)
        fc.config_ = cfg
        fc.filter_ = SpeedFilter.from_dict(d["speed_filter"], **_filter_kwargs(cfg))
        fc.curve_ = KernelPowerCurve.from_dict(d["power_curve"])
        fc.curve_.f_s_floor = cfg.f_s_floor
        fc.sigma_f_ = d["sigma_f"]
        fc.last_power_ = d["last_power"]
        fc.last_speed_ = d["last_speed"]
        fc.n_trained_ = d["n_trained"]
        fc.step_ = d.get("step", 0)
        return fc


def run_backtest(train: SeriesFrame, test: SeriesFrame, config: RunConfig) -> list:
    """Fit on the training frame and walk the test frame one step at a time."""
    return WindPowerForecaster(config=config).fit(train).backtest(test)


# -- record serialization ------------------------------------------------------


def _quantile_label(beta: float) -> str:
    return f"q{int(round(beta * 100)):02d}"


def _interval_labels(level: float) -> tuple:
    pct = int(round(level * 100))
    return f"lo{pct:02d}", f"hi{pct:02d}"


def record_columns(config: RunConfig) -> list:
    cols = ["step", "point"]
    cols += [_quantile_label(b) for b in config.quantile_levels]
    for lvl in config.interval_levels:
        cols += list(_interval_labels(lvl))
    cols += ["mu_prime", "sigma_prime", "realized_power", "flags"]
    return cols


def _record_row(rec: ForecastRecord, config: RunConfig) -> dict:
    row = {"step": rec.step, "point": repr(float(rec.point))}
    for beta in config.quantile_levels:
        row[_quantile_label(beta)] = repr(rec.quantiles[beta]) if beta in rec.quantiles else ""
    for lvl in config.interval_levels:
        lo_lbl, hi_lbl = _interval_labels(lvl)
        if lvl in rec.intervals:
            lo, hi = rec.intervals[lvl]
            row[lo_lbl], row[hi_lbl] = repr(lo), repr(hi)
        else:
            row[lo_lbl] = row[hi_lbl] = ""
    row["mu_prime"] = repr(rec.density.mu_prime) if rec.density else ""
    row["sigma_prime"] = repr(rec.density.sigma_prime) if rec.density else ""
    row["realized_power"] = repr(rec.realized_power)
    row["flags"] = "|".join(rec.flags)
    return row


def records_to_csv(records, path, config: RunConfig) -> None:
    cols = record_columns(config)
    with Path(path).open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        writer.writeheader()
        for rec in records:
            writer.writerow(_record_row(rec, config))


def records_to_jsonl(records, path, config: RunConfig) -> None:
    with Path(path).open("w") as fh:
        for rec in records:
            row = _record_row(rec, config)
            clean = {k: (None if v == "" else v) for k, v in row.items()}
            for k, v in clean.items():
                if isinstance(v, str) and k != "flags":
                    clean[k] = float(v)
            fh.write(json.dumps(clean) + "\n")
