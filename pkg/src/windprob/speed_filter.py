"""Dual Kalman filtering of log wind speed.

Log speed follows a linear state-space model driven by an inhomogeneous
geometric Brownian motion; the drift/volatility pair is itself a Gaussian
random walk. Two coupled scalar/2x2 Kalman recursions track the state and
the parameter vector, each treating the other's estimate as known.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .density import LogNormalDensity
from .validation import check_positive_array, check_positive_scalar

__all__ = ["SpeedPrediction", "SpeedFilter", "tune_speed_hyperparameters"]


@dataclass(frozen=True)
class SpeedPrediction:
    """One-step-ahead speed forecast.

    ``x_prior`` is the prior log-speed estimate, ``s_point = exp(x_prior)``
    the point forecast (the median of ``density``), and ``mu_s``/
    ``sigma_s2`` the predicted per-step drift and squared volatility.
    """

    x_prior: float
    mu_s: float
    sigma_s2: float
    s_point: float
    density: LogNormalDensity


class SpeedFilter(BaseEstimator):
    """Dual Kalman filter for log wind speed and its GBM parameters.

    Parameters
    ----------
    q_mu, q_sigma2 : float
        Diagonal entries of the parameter random-walk covariance Q.
    sigma_z2 : float
        Observation noise variance of measured log speed.
    delta_t : float
        Step length of the recursion (1 for one-step-ahead use).
    sigma_s2_min : float
        Lower clamp on the filtered squared volatility; the parameter
        update can drive it negative and it enters the state prediction
        as a variance.
    sigma_floor : float
        Fallback volatility when the training log-returns are constant.
    p_theta_scale : float
        Initial parameter covariance as a multiple of Q.
    literal_ratio_returns : bool
        Audit switch: compute training returns as ln(s_k)/ln(s_{k-1})
        instead of the log difference ln(s_k) - ln(s_{k-1}).
    """

    def __init__(self, q_mu=1e-6, q_sigma2=1e-7, sigma_z2=1e-3, delta_t=1.0,
                 sigma_s2_min=1e-8, sigma_floor=1e-4, p_theta_scale=10.0,
                 literal_ratio_returns=False):
        self.q_mu = q_mu
        self.q_sigma2 = q_sigma2
        self.sigma_z2 = sigma_z2
        self.delta_t = delta_t
        self.sigma_s2_min = sigma_s2_min
        self.sigma_floor = sigma_floor
        self.p_theta_scale = p_theta_scale
        self.literal_ratio_returns = literal_ratio_returns

    @property
    def a_row_(self) -> np.ndarray:
        """Design row A = (dt, -dt/2) mapping theta onto the log-speed drift."""
        return np.array([self.delta_t, -0.5 * self.delta_t])

    def _training_returns(self, log_speeds: np.ndarray) -> np.ndarray:
        if self.literal_ratio_returns:
            if np.any(log_speeds[:-1] == 0.0):
                raise ValueError("literal ratio returns undefined at speed exactly 1 m/s")
            return log_speeds[1:] / log_speeds[:-1]
        return np.diff(log_speeds)

    def fit(self, speeds) -> "SpeedFilter":
        """Initialize state and parameters from a training speed window.

        Volatility starts at the sample standard deviation of the
        log-returns, drift at their mean plus half the squared volatility,
        and the state at the last observed log speed.
        """
        speeds = check_positive_array(speeds, "speeds")
        if len(speeds) < 3:
            raise ValueError(f"need at least 3 training speeds, got {len(speeds)}")
        check_positive_scalar(self.sigma_z2, "sigma_z2")
        if self.q_mu < 0 or self.q_sigma2 < 0:
            raise ValueError("Q diagonal entries must be >= 0")

        r = self._training_returns(np.log(speeds))
        sigma_s = float(np.std(r, ddof=1))
        if sigma_s < self.sigma_floor:
            warnings.warn(
                f"training log-returns nearly constant (std={sigma_s:.3g}); "
                f"flooring volatility at {self.sigma_floor}",
                stacklevel=2,
            )
            sigma_s = self.sigma_floor
        mu_s = float(np.mean(r)) + 0.5 * sigma_s**2

        self.theta_ = np.array([mu_s, sigma_s**2])
        self.p_theta_ = self.p_theta_scale * np.diag([self.q_mu, self.q_sigma2])
        self.q_ = np.diag([self.q_mu, self.q_sigma2])
        self.x_ = float(np.log(speeds[-1]))
        self.p_x_ = float(self.sigma_z2)
        self.n_steps_ = 0
        self._pending = None
        return self

    def _check_fitted(self):
        if not hasattr(self, "theta_"):
            raise NotFittedError("SpeedFilter is not initialized; call fit first")

    def predict(self) -> SpeedPrediction:
        """One-step prediction of parameters, state and the speed density.

        Parameters propagate unchanged with covariance inflated by Q; the
        state gains the drift A.theta and variance dt * sigma_s2. The speed
        density is log-normal located at the prior log speed with scale
        sigma_s * sqrt(dt).
        """
        self._check_fitted()
        theta_prior = self.theta_.copy()
        p_theta_prior = self.p_theta_ + self.q_
        x_prior = self.x_ + float(self.a_row_ @ theta_prior)
        p_x_prior = self.p_x_ + self.delta_t * theta_prior[1]
        self._pending = (theta_prior, p_theta_prior, x_prior, p_x_prior)
        mu_s, sigma_s2 = float(theta_prior[0]), float(theta_prior[1])
        density = LogNormalDensity(mu_prime=x_prior, sigma_prime=math.sqrt(sigma_s2 * self.delta_t))
        return SpeedPrediction(
            x_prior=float(x_prior),
            mu_s=mu_s,
            sigma_s2=sigma_s2,
            s_point=math.exp(x_prior),
            density=density,
        )

    def update(self, observed_speed: float) -> "SpeedFilter":
        """Filter the newly observed speed into state and parameters.

        Both gains share the innovation Y - X_prior. The filtered squared
        volatility is clamped from below so it stays a valid variance.
        """
        self._check_fitted()
        if self._pending is None:
            raise RuntimeError("update called without a preceding predict for this step")
        if not (observed_speed > 0.0) or not math.isfinite(observed_speed):
            raise ValueError(f"observed speed must be positive and finite, got {observed_speed}")
        theta_prior, p_theta_prior, x_prior, p_x_prior = self._pending
        y = math.log(observed_speed)
        innovation = y - x_prior

        k_x = p_x_prior / (p_x_prior + self.sigma_z2)
        self.x_ = float(x_prior + k_x * innovation)
        self.p_x_ = float((1.0 - k_x) * p_x_prior)

        a = self.a_row_
        s_theta = float(a @ p_theta_prior @ a) + self.sigma_z2
        k_theta = (p_theta_prior @ a) / s_theta
        theta = theta_prior + k_theta * innovation
        theta[1] = max(theta[1], self.sigma_s2_min)
        self.theta_ = theta
        self.p_theta_ = (np.eye(2) - np.outer(k_theta, a)) @ p_theta_prior

        self._pending = None
        self.n_steps_ += 1
        return self

    # -- persistence ---------------------------------------------------------

    def to_dict(self) -> dict:
        self._check_fitted()
        return {
            "x_hat": self.x_,
            "p_x": self.p_x_,
            "sigma_z2": float(self.sigma_z2),
            "theta_hat": self.theta_.tolist(),
            "p_theta": self.p_theta_.tolist(),
            "q": self.q_.tolist(),
            "a_row": self.a_row_.tolist(),
            "delta_t": float(self.delta_t),
            "n_steps": self.n_steps_,
        }

    @classmethod
    def from_dict(cls, d: dict, **params) -> "SpeedFilter":
        q = np.asarray(d["q"])
        filt = cls(q_mu=q[0, 0], q_sigma2=q[1, 1], sigma_z2=d["sigma_z2"],
                   delta_t=d.get("delta_t", 1.0), **params)
        filt.theta_ = np.asarray(d["theta_hat"], dtype=float)
        filt.p_theta_ = np.asarray(d["p_theta"], dtype=float)
        filt.q_ = q.astype(float)
        filt.x_ = float(d["x_hat"])
        filt.p_x_ = float(d["p_x"])
        filt.n_steps_ = int(d.get("n_steps", 0))
        filt._pending = None
        return filt


def _rolling_rmse(speeds, q_mu, q_sigma2, sigma_z2, warmup, **filter_params):
    """One-step speed RMSE of a filter initialized on the warmup prefix."""
    filt = SpeedFilter(q_mu=q_mu, q_sigma2=q_sigma2, sigma_z2=sigma_z2, **filter_params)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        filt.fit(speeds[:warmup])
    err2 = 0.0
    for s in speeds[warmup:]:
        pred = filt.predict()
        err2 += (pred.s_point - s) ** 2
        filt.update(s)
    return math.sqrt(err2 / (len(speeds) - warmup))


def tune_speed_hyperparameters(speeds, grid, warmup_fraction=0.5, n_jobs=1, **filter_params):
    """Grid-search (Q diagonal, sigma_z2) by rolling one-step speed RMSE.

    The filter is initialized on the warmup prefix of the training window
    and scored on one-step point predictions over the remainder. Ties break
    toward the smallest sigma_z2, then the smallest trace of Q.

    Returns
    -------
    (q_mu, q_sigma2, sigma_z2) : tuple of float
    """
    from joblib import Parallel, delayed

    speeds = check_positive_array(speeds, "speeds")
    candidates = [
        (float(qm), float(qs), float(sz))
        for qm, qs, sz in itertools.product(grid.q_mu, grid.q_sigma2, grid.sigma_z2)
    ]
    if not candidates:
        raise ValueError("empty hyperparameter grid")
    if len(candidates) == 1:
        return candidates[0]
    if len(speeds) < 50:
        raise ValueError(f"need at least 50 training points to tune, got {len(speeds)}")
    warmup = max(3, int(warmup_fraction * len(speeds)))
    if warmup >= len(speeds):
        raise ValueError("warmup covers the whole window; nothing to score")

    scores = Parallel(n_jobs=n_jobs)(
        delayed(_rolling_rmse)(speeds, qm, qs, sz, warmup, **filter_params)
        for qm, qs, sz in candidates
    )
    order = sorted(
        zip(scores, candidates),
        key=lambda t: (t[0], t[1][2], t[1][0] + t[1][1], t[1][0], t[1][1]),
    )
    return order[0][1]
