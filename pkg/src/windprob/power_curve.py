"""Online nonparametric power curve via kernel adaptive learning.

Each new (speed, power) sample adds one Gaussian-kernel center whose
Lagrange multiplier solves a proximal-regularized exact-fit program in
closed form. The fitted curve exposes analytic speed derivatives and a
finite-difference time derivative, which the density transfer needs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .validation import check_positive_scalar

__all__ = ["gaussian_kernel", "CurveEvaluation", "KernelPowerCurve", "conversion_noise_scale"]


def gaussian_kernel(s1, s2, delta: float):
    """Gaussian kernel exp(-(s1-s2)^2 / (2*delta)); works elementwise on arrays."""
    check_positive_scalar(delta, "delta")
    diff = np.asarray(s1, dtype=float) - np.asarray(s2, dtype=float)
    return np.exp(-(diff**2) / (2.0 * delta))


@dataclass(frozen=True)
class CurveEvaluation:
    """Curve value and derivatives at one speed: F, F_t, F_S, F_SS."""

    f: float
    f_t: float
    f_s: float
    f_ss: float


class KernelPowerCurve(BaseEstimator):
    """Wind-to-power curve learned one sample at a time.

    Parameters
    ----------
    delta : float
        Gaussian kernel bandwidth, in (m/s)^2.
    gamma : float
        Regularization weight on the per-sample fitting error. Larger
        values move the curve more aggressively toward each new sample.
    window : int or None
        Maximum dictionary size; the oldest center is evicted once the
        budget is exceeded. ``None`` defers to the training length at
        ``fit`` time (and is unbounded for update-only usage).
    delta_t : float
        Step length used by the finite-difference time derivative.
    f_s_floor : float
        Slope threshold below which a step carries no usable
        conversion-noise information in :meth:`estimate_sigma_f`.
    """

    def __init__(self, delta=1.0, gamma=10.0, window=None, delta_t=1.0, f_s_floor=1e-3):
        self.delta = delta
        self.gamma = gamma
        self.window = window
        self.delta_t = delta_t
        self.f_s_floor = f_s_floor

    # -- construction -----------------------------------------------------

    def _ensure_state(self):
        if not hasattr(self, "centers_"):
            self.centers_ = []
            self.lambdas_ = []
            self.lambda_last_ = 0.0
            self.center_last_ = None

    @classmethod
    def from_arrays(cls, centers, lambdas, delta, gamma=10.0, window=None, delta_t=1.0):
        """Build a curve directly from dictionary arrays (used by tests and resume)."""
        centers = [float(c) for c in centers]
        lambdas = [float(v) for v in lambdas]
        if len(centers) != len(lambdas):
            raise ValueError("centers and lambdas must have equal length")
        curve = cls(delta=delta, gamma=gamma, window=window, delta_t=delta_t)
        curve.centers_ = centers
        curve.lambdas_ = lambdas
        curve.lambda_last_ = lambdas[-1] if lambdas else 0.0
        curve.center_last_ = centers[-1] if centers else None
        return curve

    # -- evaluation --------------------------------------------------------

    def _value(self, s: float) -> float:
        """Curve value at speed ``s``; 0 for the empty curve F == 0."""
        if not getattr(self, "centers_", None):
            return 0.0
        c = np.asarray(self.centers_)
        k = np.exp(-((s - c) ** 2) / (2.0 * self.delta))
        return float(np.dot(self.lambdas_, k))

    def predict(self, speeds) -> np.ndarray:
        """Vectorized curve values at ``speeds``."""
        if not getattr(self, "centers_", None):
            raise NotFittedError("power curve has no centers; call fit or update first")
        s = np.atleast_1d(np.asarray(speeds, dtype=float))
        c = np.asarray(self.centers_)
        k = np.exp(-((s[:, None] - c[None, :]) ** 2) / (2.0 * self.delta))
        return k @ np.asarray(self.lambdas_)

    def evaluate(self, s: float) -> CurveEvaluation:
        """Curve value plus time and speed derivatives at speed ``s``.

        F_S and F_SS are the analytic derivatives of the kernel expansion;
        F_t is the finite-difference time derivative, which collapses to
        the newest multiplier's contribution.
        """
        if not getattr(self, "centers_", None):
            raise NotFittedError("power curve has no centers; call fit or update first")
        s = float(s)
        c = np.asarray(self.centers_)
        lam = np.asarray(self.lambdas_)
        diff = s - c
        k = np.exp(-(diff**2) / (2.0 * self.delta))
        f = float(np.dot(lam, k))
        f_s = float(np.dot(lam, k * (-diff / self.delta)))
        f_ss = float(np.dot(lam, k * (diff**2 / self.delta**2 - 1.0 / self.delta)))
        k_last = math.exp(-((s - self.center_last_) ** 2) / (2.0 * self.delta))
        f_t = self.lambda_last_ * k_last / self.delta_t
        return CurveEvaluation(f=f, f_t=f_t, f_s=f_s, f_ss=f_ss)

    # -- learning ----------------------------------------------------------

    def update(self, s: float, p: float) -> "KernelPowerCurve":
        """Absorb one (speed, power) sample.

        The new multiplier is the closed-form solution of the proximal
        program: lambda = (p - F_prev(s)) / (k(s,s) + 1/gamma). The oldest
        center is evicted when the dictionary exceeds the window budget.
        """
        check_positive_scalar(self.gamma, "gamma")
        self._ensure_state()
        s = float(s)
        residual = float(p) - self._value(s)
        lam = residual / (1.0 + 1.0 / self.gamma)  # k(s, s) = 1 for the Gaussian kernel
        self.centers_.append(s)
        self.lambdas_.append(lam)
        self.lambda_last_ = lam
        self.center_last_ = s
        budget = self.window_ if hasattr(self, "window_") else self.window
        if budget is not None and len(self.centers_) > budget:
            del self.centers_[0]
            del self.lambdas_[0]
        return self

    def fit(self, speeds, powers) -> "KernelPowerCurve":
        """Sequentially absorb the training pairs, starting from F == 0.

        Also records the per-step curve values and slopes at each visited
        speed as of the moment the sample arrives (before it is absorbed),
        which :meth:`estimate_sigma_f` consumes.
        """
        speeds = np.asarray(speeds, dtype=float)
        powers = np.asarray(powers, dtype=float)
        if len(speeds) != len(powers):
            raise ValueError("speeds and powers must have equal length")
        self.centers_ = []
        self.lambdas_ = []
        self.lambda_last_ = 0.0
        self.center_last_ = None
        self.window_ = self.window if self.window is not None else len(speeds)
        fit_values = np.empty(len(speeds))
        fit_slopes = np.empty(len(speeds))
        for i, (s, p) in enumerate(zip(speeds, powers)):
            if self.centers_:
                ev = self.evaluate(s)
                fit_values[i], fit_slopes[i] = ev.f, ev.f_s
            else:
                fit_values[i] = fit_slopes[i] = 0.0
            self.update(s, p)
        self.fit_values_ = fit_values
        self.fit_slopes_ = fit_slopes
        self.sigma_f_ = None
        return self

    def estimate_sigma_f(self, powers) -> float:
        """Conversion-noise scale from the curve trajectory recorded by fit."""
        if not hasattr(self, "fit_values_"):
            raise NotFittedError("estimate_sigma_f requires a sequential fit first")
        powers = np.asarray(powers, dtype=float)
        if len(powers) != len(self.fit_values_):
            raise ValueError("powers must be the training series the curve was fitted on")
        sigma_f = conversion_noise_scale(
            powers, self.fit_values_, self.fit_slopes_,
            delta_t=self.delta_t, f_s_floor=self.f_s_floor,
        )
        self.sigma_f_ = sigma_f
        return sigma_f


def conversion_noise_scale(powers, curve_values, curve_slopes, delta_t=1.0, f_s_floor=1e-3) -> float:
    """Noise scale of the wind-to-power conversion from paired increments.

    Standardizes each power-minus-curve increment by sqrt(F_S * dt) and
    takes the root mean square with divisor (usable increments - 1), which
    is N0 - 2 when no steps are skipped. Steps whose slope is at or below
    ``f_s_floor`` carry no usable conversion-noise information and are
    skipped, reducing the divisor accordingly.
    """
    powers = np.asarray(powers, dtype=float)
    curve_values = np.asarray(curve_values, dtype=float)
    curve_slopes = np.asarray(curve_slopes, dtype=float)
    if not len(powers) == len(curve_values) == len(curve_slopes):
        raise ValueError("powers, curve_values and curve_slopes must have equal length")
    if len(powers) < 3:
        raise ValueError("need at least 3 points to form increments")
    dp = np.diff(powers)
    df = np.diff(curve_values)
    slopes = curve_slopes[1:]
    usable = slopes > f_s_floor
    n_usable = int(usable.sum())
    if n_usable < 2:
        raise ValueError(
            f"only {n_usable} usable increments (slope > {f_s_floor}); cannot estimate sigma_f"
        )
    z = (dp[usable] - df[usable]) / np.sqrt(slopes[usable] * delta_t)
    return float(np.sqrt(np.sum(z**2) / (n_usable - 1)))

    # -- persistence ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "centers": list(getattr(self, "centers_", [])),
            "lambdas": list(getattr(self, "lambdas_", [])),
            "lambda_last": getattr(self, "lambda_last_", 0.0),
            "delta": float(self.delta),
            "gamma": float(self.gamma),
            "window": getattr(self, "window_", self.window),
            "delta_t": float(self.delta_t),
            "sigma_f": getattr(self, "sigma_f_", None),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KernelPowerCurve":
        curve = cls.from_arrays(
            d["centers"], d["lambdas"], delta=d["delta"], gamma=d["gamma"], delta_t=d.get("delta_t", 1.0)
        )
        curve.window_ = d.get("window")
        curve.lambda_last_ = d.get("lambda_last", curve.lambda_last_)
        curve.sigma_f_ = d.get("sigma_f")
        return curve
