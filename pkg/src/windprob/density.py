"""Closed-form log-normal predictive densities via the Ito drift/volatility map.

Given the filtered speed dynamics and the local shape of the power curve,
the one-step power distribution is log-normal with parameters assembled
here. All functions are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = ["LogNormalDensity", "PowerDynamics", "power_dynamics", "predictive_power_density"]


@dataclass(frozen=True)
class LogNormalDensity:
    """Parameters (mu', sigma') of ln X ~ N(mu', sigma'^2)."""

    mu_prime: float
    sigma_prime: float

    def __post_init__(self):
        if not math.isfinite(self.mu_prime) or not math.isfinite(self.sigma_prime):
            raise ValueError("density parameters must be finite")
        if self.sigma_prime < 0.0:
            raise ValueError(f"sigma_prime must be >= 0, got {self.sigma_prime}")

    @property
    def median(self) -> float:
        return math.exp(self.mu_prime)


@dataclass(frozen=True)
class PowerDynamics:
    """Relative drift and volatility of the power process at the current step."""

    mu_p: float
    sigma_p: float

    def __post_init__(self):
        if self.sigma_p < 0.0:
            raise ValueError(f"sigma_p must be >= 0, got {self.sigma_p}")


def power_dynamics(s, p_now, mu_s, sigma_s2, curve, sigma_f, power_floor=0.1) -> PowerDynamics:
    """Map speed dynamics through the curve's local shape onto the power process.

    Parameters
    ----------
    s : float
        Speed at which the curve was evaluated, m/s.
    p_now : float
        Current power level dividing both terms; must be at or above the
        power floor (the caller applies the floor).
    mu_s, sigma_s2 : float
        Per-step drift and squared volatility of log speed.
    curve : CurveEvaluation
        Curve value and derivatives at ``s``.
    sigma_f : float
        Conversion-noise scale.

    The slope enters the conversion-noise variance clamped at zero (a
    variance cannot be negative even where the fitted curve slopes down);
    the squared-slope term uses the raw slope.
    """
    if p_now < power_floor:
        raise ValueError(
            f"p_now={p_now} is below the power floor {power_floor}; "
            "apply the floor before computing power dynamics"
        )
    for name, v in (("f", curve.f), ("f_t", curve.f_t), ("f_s", curve.f_s), ("f_ss", curve.f_ss)):
        if not math.isfinite(v):
            raise ValueError(f"curve evaluation field {name} is not finite")
    if sigma_s2 < 0.0:
        raise ValueError(f"sigma_s2 must be >= 0, got {sigma_s2}")
    mu_p = (curve.f_t + mu_s * s * curve.f_s + 0.5 * sigma_s2 * s**2 * curve.f_ss) / p_now
    var = sigma_s2 * s**2 * curve.f_s**2 + sigma_f**2 * max(curve.f_s, 0.0)
    sigma_p = math.sqrt(var) / p_now
    return PowerDynamics(mu_p=mu_p, sigma_p=sigma_p)


def predictive_power_density(p_now, dyn: PowerDynamics, delta_t=1.0, sigma_max=None) -> LogNormalDensity:
    """One-step-ahead log-normal density of power given current dynamics.

    mu' = ln(p_now) + (mu_P - sigma_P^2/2) * dt and sigma' = sigma_P * sqrt(dt).
    ``sigma_max`` optionally caps sigma' to keep quantile arithmetic finite
    under transient filter blow-ups; callers flag capped steps.
    """
    if p_now <= 0.0:
        raise ValueError(f"p_now must be positive, got {p_now}")
    sigma_prime = dyn.sigma_p * math.sqrt(delta_t)
    if sigma_max is not None:
        sigma_prime = min(sigma_prime, sigma_max)
    mu_prime = math.log(p_now) + (dyn.mu_p - 0.5 * dyn.sigma_p**2) * delta_t
    return LogNormalDensity(mu_prime=mu_prime, sigma_prime=sigma_prime)
