"""Synthetic generator matching the model's own assumptions.

Speed paths come from Euler steps of the log-speed SDE with (optionally
time-varying) drift and volatility; power is a smooth logistic curve of
speed plus an accumulated conversion-noise random walk whose increment
variance scales with the local curve slope. Every Monte-Carlo oracle in
the test suite draws its ground truth from here.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import SeriesFrame

__all__ = [
    "ConstantProfile",
    "SinusoidProfile",
    "LogisticCurve",
    "SimSpec",
    "SimResult",
    "simulate",
    "one_step_transition_sample",
    "write_simulation_csv",
]


@dataclass(frozen=True)
class ConstantProfile:
    value: float

    def __call__(self, t: np.ndarray) -> np.ndarray:
        return np.full_like(np.asarray(t, dtype=float), self.value)


@dataclass(frozen=True)
class SinusoidProfile:
    """base + amplitude * sin(2*pi*t / period)."""

    base: float
    amplitude: float
    period: float

    def __call__(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return self.base + self.amplitude * np.sin(2.0 * math.pi * t / self.period)


@dataclass(frozen=True)
class LogisticCurve:
    """Smooth saturating power curve F(s) = level / (1 + exp(-steepness*(s - midpoint)))."""

    level: float = 100.0
    steepness: float = 0.6
    midpoint: float = 8.0

    def __post_init__(self):
        if not 0.0 < self.level <= 100.0:
            raise ValueError(f"level must lie in (0, 100], got {self.level}")

    def value(self, s):
        return self.level / (1.0 + np.exp(-self.steepness * (np.asarray(s, dtype=float) - self.midpoint)))

    def slope(self, s):
        f = self.value(s)
        return self.steepness * f * (1.0 - f / self.level)

    def curvature(self, s):
        f = self.value(s)
        return self.steepness**2 * f * (1.0 - f / self.level) * (1.0 - 2.0 * f / self.level)


@dataclass(frozen=True)
class SimSpec:
    """Everything needed to reproduce one synthetic series bit-for-bit."""

    n_steps: int = 1000
    delta_t: float = 1.0
    mu_profile: object = field(default_factory=lambda: ConstantProfile(0.0))
    sigma_profile: object = field(default_factory=lambda: ConstantProfile(0.02))
    s0: float = 8.0
    true_curve: LogisticCurve = field(default_factory=LogisticCurve)
    sigma_f_true: float = 0.3
    obs_noise_var: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.s0 <= 0:
            raise ValueError("s0 must be positive")
        if self.sigma_f_true < 0 or self.obs_noise_var < 0:
            raise ValueError("noise scales must be >= 0")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")


@dataclass(frozen=True)
class SimResult:
    """Synthetic frame plus the per-step ground truth sidecar."""

    frame: SeriesFrame
    true_speed: np.ndarray
    true_mu: np.ndarray
    true_sigma: np.ndarray
    true_f: np.ndarray
    true_f_s: np.ndarray
    true_f_ss: np.ndarray
    conversion_noise: np.ndarray
    clamped: np.ndarray

    @property
    def n_clamped(self) -> int:
        return int(self.clamped.sum())


def simulate(spec: SimSpec) -> SimResult:
    """Generate one series under the generative assumptions.

    The log-speed path is the Euler recursion with N(0, dt) Brownian
    increments; measured speed adds log-domain observation noise; power is
    the true curve plus an accumulated noise walk with slope-scaled
    increments, clamped to [0, 100].
    """
    rng = np.random.default_rng(spec.seed)
    n, dt = spec.n_steps, spec.delta_t
    t = np.arange(n, dtype=float) * dt
    mu = np.asarray(spec.mu_profile(t), dtype=float)
    sigma = np.asarray(spec.sigma_profile(t), dtype=float)
    if sigma.min() < 0:
        raise ValueError("sigma profile must be >= 0")

    x = np.empty(n)
    x[0] = math.log(spec.s0)
    dw = rng.standard_normal(n - 1) * math.sqrt(dt)
    for k in range(n - 1):
        x[k + 1] = x[k] + (mu[k] - 0.5 * sigma[k] ** 2) * dt + sigma[k] * dw[k]
    s_true = np.exp(x)

    z = rng.standard_normal(n) * math.sqrt(spec.obs_noise_var)
    measured = np.exp(x + z)

    f = spec.true_curve.value(s_true)
    f_s = spec.true_curve.slope(s_true)
    f_ss = spec.true_curve.curvature(s_true)
    e = np.empty(n)
    e[0] = 0.0
    de = rng.standard_normal(n - 1)
    for k in range(n - 1):
        e[k + 1] = e[k] + de[k] * math.sqrt(spec.sigma_f_true**2 * f_s[k] * dt)
    power_raw = f + e
    power = np.clip(power_raw, 0.0, 100.0)
    clamped = power_raw != power

    ts = (np.arange(n, dtype=np.int64)) * max(int(round(dt * 60)), 1)
    frame = SeriesFrame(timestamps=ts, speed=measured, power=power, delta_t=dt)
    return SimResult(
        frame=frame,
        true_speed=s_true,
        true_mu=mu,
        true_sigma=sigma,
        true_f=f,
        true_f_s=f_s,
        true_f_ss=f_ss,
        conversion_noise=e,
        clamped=clamped,
    )


def one_step_transition_sample(s, p, mu_s, sigma_s, curve: LogisticCurve, sigma_f,
                               n_draws=10_000, delta_t=1.0, seed=0) -> np.ndarray:
    """Empirical sample of next-step power under the true dynamics.

    Draws speed transitions from the Euler step, maps them through the
    true curve, and adds a conversion-noise increment with slope-scaled
    variance. Serves as the Monte-Carlo oracle for the closed-form
    log-normal power density.
    """
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    rng = np.random.default_rng(seed)
    x = math.log(s)
    x_next = x + (mu_s - 0.5 * sigma_s**2) * delta_t \
        + sigma_s * math.sqrt(delta_t) * rng.standard_normal(n_draws)
    s_next = np.exp(x_next)
    de = rng.standard_normal(n_draws) * math.sqrt(sigma_f**2 * curve.slope(s) * delta_t)
    return p + (curve.value(s_next) - curve.value(s)) + de


def write_simulation_csv(result: SimResult, path) -> Path:
    """Write the synthetic series plus a ``.truth`` sidecar; returns the sidecar path."""
    path = Path(path)
    frame = result.frame
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["timestamp", "wind_speed", "power"])
        for ts, ws, p in zip(frame.timestamps, frame.speed, frame.power):
            writer.writerow([int(ts), repr(float(ws)), repr(float(p))])

    sidecar = path.with_name(path.name + ".truth")
    with sidecar.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["timestamp", "true_speed", "true_mu", "true_sigma",
             "true_f", "true_f_s", "true_f_ss", "conversion_noise", "clamped"]
        )
        for i in range(len(frame)):
            writer.writerow(
                [int(frame.timestamps[i]), repr(float(result.true_speed[i])),
                 repr(float(result.true_mu[i])), repr(float(result.true_sigma[i])),
                 repr(float(result.true_f[i])), repr(float(result.true_f_s[i])),
                 repr(float(result.true_f_ss[i])), repr(float(result.conversion_noise[i])),
                 int(result.clamped[i])]
            )
    return sidecar
