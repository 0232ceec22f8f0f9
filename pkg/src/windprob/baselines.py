"""Reference wind-speed forecasters pushed through the shared power curve.

Persistent repeats the last observed speed; ARMA and AR-GARCH model the
raw speed as Gaussian with orders chosen by BIC. Estimation is
self-contained: conditional least squares for ARMA (AR part exact, MA by
iterated residual regression) and Gaussian likelihood maximized with a
derivative-free simplex for the GARCH(1,1) variance.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.stats import norm

from .data import RunConfig, SeriesFrame
from .forecaster import ForecastRecord, tune_pipeline_hyperparameters
from .power_curve import KernelPowerCurve
from .validation import check_unit_open

__all__ = [
    "ArmaModel",
    "ArGarchModel",
    "persistent_forecast",
    "fit_arma",
    "arma_predictive_density",
    "arma_quantile_forecast",
    "fit_ar_garch",
    "ar_garch_predictive_density",
    "ar_garch_quantile_forecast",
    "baseline_power_forecast",
    "run_baseline_backtest",
    "BASELINE_METHODS",
]

_LOG_2PI = math.log(2.0 * math.pi)

BASELINE_METHODS = ("persistent", "arma", "ar_garch")


def persistent_forecast(s_now: float) -> float:
    """Next-step speed equals the current speed, for every loss weight."""
    return float(s_now)


# -- ARMA ----------------------------------------------------------------------


@dataclass(frozen=True)
class ArmaModel:
    p: int
    q: int
    ar: np.ndarray
    ma: np.ndarray
    intercept: float
    noise_var: float

    def __post_init__(self):
        if self.noise_var <= 0.0:
            raise ValueError("noise_var must be positive")
        if len(self.ar) != self.p or len(self.ma) != self.q:
            raise ValueError("coefficient lengths must match the orders")


def _arma_residuals(y: np.ndarray, intercept: float, ar: np.ndarray, ma: np.ndarray) -> np.ndarray:
    """Conditional residual recursion; pre-sample residuals treated as zero."""
    p, q = len(ar), len(ma)
    start = max(p, q)
    e = np.zeros(len(y))
    for t in range(start, len(y)):
        pred = intercept
        for i in range(p):
            pred += ar[i] * y[t - 1 - i]
        for j in range(q):
            pred += ma[j] * e[t - 1 - j]
        e[t] = y[t] - pred
    return e


def _cls_fit(y: np.ndarray, p: int, q: int, rows: np.ndarray, max_iter=50, tol=1e-6):
    """Conditional least squares for one (p, q) on a fixed row range.

    Returns (intercept, ar, ma, rss, converged). The MA part is estimated
    by regressing on lagged residuals and re-deriving the residual series,
    iterated to a fixed point.
    """
    ones = np.ones(len(rows))
    x_ar = [y[rows - i] for i in range(1, p + 1)]
    if q == 0:
        design = np.column_stack([ones] + x_ar)
        coef, *_ = np.linalg.lstsq(design, y[rows], rcond=None)
        resid = y[rows] - design @ coef
        return float(coef[0]), coef[1:], np.empty(0), float(resid @ resid), True

    design0 = np.column_stack([ones] + x_ar)
    coef0, *_ = np.linalg.lstsq(design0, y[rows], rcond=None)
    e = np.zeros(len(y))
    e[rows] = y[rows] - design0 @ coef0

    prev = None
    converged = False
    intercept, ar, ma = float(coef0[0]), coef0[1:], np.zeros(q)
    for _ in range(max_iter):
        design = np.column_stack([ones] + x_ar + [e[rows - j] for j in range(1, q + 1)])
        coef, *_ = np.linalg.lstsq(design, y[rows], rcond=None)
        if not np.all(np.isfinite(coef)):
            break
        intercept, ar, ma = float(coef[0]), coef[1 : p + 1], coef[p + 1 :]
        e = _arma_residuals(y, intercept, ar, ma)
        if not np.all(np.isfinite(e)):
            break
        if prev is not None and np.max(np.abs(coef - prev)) < tol:
            converged = True
            break
        prev = coef
    rss = float(e[rows] @ e[rows])
    return intercept, ar, ma, rss, converged and np.isfinite(rss)


def fit_arma(history, max_order: int = 3) -> ArmaModel:
    """BIC-selected ARMA(p, q) over (p, q) in {0..max_order}^2 minus (0, 0).

    All candidates are scored on the common row range t >= max_order so
    their BIC values are comparable. Candidates whose MA iteration fails
    to converge are dropped (with a warning), which falls back to the pure
    AR candidates in the worst case. Ties break toward fewer parameters.
    """
    y = np.asarray(history, dtype=float)
    if len(y) < 30:
        raise ValueError(f"need at least 30 observations to fit ARMA, got {len(y)}")
    rows = np.arange(max_order, len(y))
    n_eff = len(rows)

    fits = []
    dropped = []
    for p in range(max_order + 1):
        for q in range(max_order + 1):
            if p == 0 and q == 0:
                continue
            intercept, ar, ma, rss, ok = _cls_fit(y, p, q, rows)
            if not ok:
                dropped.append((p, q))
                continue
            k = p + q + 1
            bic = n_eff * math.log(max(rss / n_eff, 1e-300)) + k * math.log(n_eff)
            fits.append((bic, k, p, q, intercept, ar, ma, rss))
    if dropped:
        warnings.warn(
            f"MA iteration did not converge for orders {dropped}; "
            "selection restricted to the remaining candidates",
            stacklevel=2,
        )
    bic, k, p, q, intercept, ar, ma, rss = min(fits, key=lambda f: (f[0], f[1], f[2], f[3]))
    return ArmaModel(p=p, q=q, ar=ar, ma=ma, intercept=intercept,
                     noise_var=max(rss / n_eff, 1e-12))


def arma_predictive_density(model: ArmaModel, history) -> tuple:
    """One-step Gaussian predictive (mean, std) given the full history."""
    y = np.asarray(history, dtype=float)
    e = _arma_residuals(y, model.intercept, model.ar, model.ma)
    mean = model.intercept
    for i in range(model.p):
        mean += model.ar[i] * y[len(y) - 1 - i]
    for j in range(model.q):
        mean += model.ma[j] * e[len(y) - 1 - j]
    return float(mean), math.sqrt(model.noise_var)


def arma_quantile_forecast(model: ArmaModel, history, alpha: float, speed_floor=0.1) -> float:
    """alpha-quantile of the Gaussian one-step speed density, floored."""
    check_unit_open(alpha, "alpha")
    mean, std = arma_predictive_density(model, history)
    return max(mean + std * float(norm.ppf(alpha)), speed_floor)


# -- AR-GARCH ------------------------------------------------------------------


@dataclass(frozen=True)
class ArGarchModel:
    p: int
    ar: np.ndarray
    intercept: float
    omega: float
    a1: float
    b1: float
    last_resid: float
    last_condvar: float

    def __post_init__(self):
        if self.omega <= 0.0 or self.a1 < 0.0 or self.b1 < 0.0:
            raise ValueError("GARCH parameters must satisfy omega>0, a1>=0, b1>=0")
        if self.a1 + self.b1 >= 1.0:
            raise ValueError("covariance stationarity requires a1 + b1 < 1")


def _fit_ar_by_bic(y: np.ndarray, max_ar: int):
    rows = np.arange(max_ar, len(y))
    n_eff = len(rows)
    best = None
    for p in range(max_ar + 1):
        design = np.column_stack([np.ones(n_eff)] + [y[rows - i] for i in range(1, p + 1)])
        coef, *_ = np.linalg.lstsq(design, y[rows], rcond=None)
        resid = y[rows] - design @ coef
        rss = float(resid @ resid)
        bic = n_eff * math.log(max(rss / n_eff, 1e-300)) + (p + 1) * math.log(n_eff)
        if best is None or (bic, p) < (best[0], best[1]):
            best = (bic, p, float(coef[0]), coef[1:])
    _, p, intercept, ar = best
    return p, intercept, ar


def _ar_residuals(y: np.ndarray, intercept: float, ar: np.ndarray) -> np.ndarray:
    p = len(ar)
    e = np.empty(len(y) - p)
    for t in range(p, len(y)):
        pred = intercept
        for i in range(p):
            pred += ar[i] * y[t - 1 - i]
        e[t - p] = y[t] - pred
    return e


def _sigmoid(x: float) -> float:
    x = max(min(x, 35.0), -35.0)
    return 1.0 / (1.0 + math.exp(-x))


def _unpack_garch(u) -> tuple:
    """Map unconstrained coordinates onto omega>0, a1>=0, b1>=0, a1+b1<1."""
    omega = math.exp(max(min(u[0], 30.0), -30.0))
    rho = (1.0 - 1e-6) * _sigmoid(u[1])
    frac = _sigmoid(u[2])
    return omega, rho * frac, rho * (1.0 - frac)


def _garch_nll(e2: list, h0: float, omega: float, a1: float, b1: float) -> float:
    h = h0
    nll = 0.5 * (_LOG_2PI + math.log(h) + e2[0] / h)
    prev = e2[0]
    for t in range(1, len(e2)):
        h = omega + a1 * prev + b1 * h
        x = e2[t]
        nll += 0.5 * (_LOG_2PI + math.log(h) + x / h)
        prev = x
    return nll


_GARCH_STARTS = ((0.05, 0.90), (0.10, 0.70), (0.20, 0.40), (0.02, 0.05))


def fit_ar_garch(history, max_ar: int = 3) -> ArGarchModel:
    """AR mean (order by BIC) with GARCH(1,1) residual variance.

    The variance parameters maximize the Gaussian likelihood via
    Nelder-Mead in a logistic reparameterization that enforces the
    positivity and stationarity constraints by construction.
    """
    y = np.asarray(history, dtype=float)
    if len(y) < 100:
        raise ValueError(f"need at least 100 observations to fit AR-GARCH, got {len(y)}")
    p, intercept, ar = _fit_ar_by_bic(y, max_ar)
    e = _ar_residuals(y, intercept, ar)
    e2 = (e**2).tolist()
    h0 = max(float(np.var(e)), 1e-12)

    best = None
    tried = []
    for a_start, b_start in _GARCH_STARTS:
        rho = a_start + b_start
        u0 = (
            math.log(max(h0 * (1.0 - rho), 1e-10)),
            math.log(rho / (1.0 - rho)),
            math.log(a_start / b_start) if b_start > 0 else 0.0,
        )
        tried.append((a_start, b_start))
        if not math.isfinite(_garch_nll(e2, h0, *_unpack_garch(u0))):
            continue
        res = minimize(
            lambda u: _garch_nll(e2, h0, *_unpack_garch(u)),
            u0,
            method="Nelder-Mead",
            options={"xatol": 1e-6, "fatol": 1e-8, "maxiter": 600},
        )
        if math.isfinite(res.fun) and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise RuntimeError(f"GARCH likelihood non-finite at all starts {tried}")
    omega, a1, b1 = _unpack_garch(best.x)

    h = _garch_condvar_path(e2, h0, omega, a1, b1)
    return ArGarchModel(p=p, ar=ar, intercept=intercept, omega=omega, a1=a1, b1=b1,
                        last_resid=float(e[-1]), last_condvar=float(h[-1]))


def _garch_condvar_path(e2: list, h0: float, omega: float, a1: float, b1: float) -> np.ndarray:
    h = np.empty(len(e2))
    h[0] = h0
    for t in range(1, len(e2)):
        h[t] = omega + a1 * e2[t - 1] + b1 * h[t - 1]
    return h


def ar_garch_predictive_density(model: ArGarchModel, history) -> tuple:
    """One-step Gaussian predictive (mean, std) with GARCH-propagated variance."""
    y = np.asarray(history, dtype=float)
    e = _ar_residuals(y, model.intercept, model.ar)
    e2 = (e**2).tolist()
    h0 = max(float(np.var(e)), 1e-12)
    h = _garch_condvar_path(e2, h0, model.omega, model.a1, model.b1)
    var_next = model.omega + model.a1 * e[-1] ** 2 + model.b1 * h[-1]
    mean = model.intercept
    for i in range(model.p):
        mean += model.ar[i] * y[len(y) - 1 - i]
    return float(mean), math.sqrt(var_next)


def ar_garch_quantile_forecast(model: ArGarchModel, history, alpha: float, speed_floor=0.1) -> float:
    check_unit_open(alpha, "alpha")
    mean, std = ar_garch_predictive_density(model, history)
    return max(mean + std * float(norm.ppf(alpha)), speed_floor)


# -- shared conversion and backtest loop ----------------------------------------


def baseline_power_forecast(speed_forecast: float, curve: KernelPowerCurve) -> float:
    """Predicted speed through the fitted curve, clamped to [0, 100]."""
    value = curve.evaluate(float(speed_forecast)).f
    return float(min(max(value, 0.0), 100.0))


def _alpha_key(alpha: float) -> float:
    return round(float(alpha), 6)


def run_baseline_backtest(train: SeriesFrame, test: SeriesFrame, config: RunConfig,
                          method: str, curve_params: tuple | None = None) -> list:
    """Walk the test frame with one baseline, mirroring the main loop.

    The baseline sees its own copy of the kernel power curve, fitted on
    the training pairs and updated each step with the measured speed and
    realized power. ARMA/AR-GARCH refit every ``config.refit_every``
    steps on the history available at that point. Each record stores the
    power forecasts for the whole sweep-alpha grid, so loss sweeps never
    refit.
    """
    if method not in BASELINE_METHODS:
        raise ValueError(f"unknown baseline {method!r}; expected one of {BASELINE_METHODS}")
    check_unit_open(config.alpha_loss, "alpha_loss")
    if curve_params is None:
        tuned = tune_pipeline_hyperparameters(train, config)
        curve_params = (tuned["delta"], tuned["gamma"])
    delta, gamma = curve_params
    curve = KernelPowerCurve(
        delta=delta, gamma=gamma, window=config.curve_window,
        delta_t=train.delta_t, f_s_floor=config.f_s_floor,
    ).fit(train.speed, train.power)

    alphas = sorted({_alpha_key(a) for a in config.sweep_alphas} | {_alpha_key(config.alpha_loss)})
    z_scores = {a: float(norm.ppf(a)) for a in alphas}
    history = list(train.speed)
    records = []
    model = None
    for i in range(len(test)):
        if method == "persistent":
            speed_fc = {a: persistent_forecast(history[-1]) for a in alphas}
            speed_density = None
        else:
            if model is None or i % config.refit_every == 0:
                if method == "arma":
                    model = fit_arma(history, max_order=config.max_order)
                else:
                    model = fit_ar_garch(history, max_ar=config.max_order)
            if method == "arma":
                mean, std = arma_predictive_density(model, history)
            else:
                mean, std = ar_garch_predictive_density(model, history)
            speed_density = (mean, std)
            speed_fc = {a: max(mean + std * z_scores[a], config.speed_floor) for a in alphas}

        alpha_power = {a: baseline_power_forecast(speed_fc[a], curve) for a in alphas}
        records.append(
            ForecastRecord(
                step=i,
                point=alpha_power[_alpha_key(config.alpha_loss)],
                realized_power=float(test.power[i]),
                realized_speed=float(test.speed[i]),
                speed_density=speed_density,
                alpha_power=alpha_power,
            )
        )
        history.append(float(test.speed[i]))
        curve.update(float(test.speed[i]), float(test.power[i]))
    return records
