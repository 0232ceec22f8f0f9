"""Forecast scoring: asymmetric power-curve error, RMSE/MAE, interval coverage.

The loss sweep re-derives each method's loss-optimal forecast from what
the backtest records already carry (log-normal density parameters for the
main method, precomputed per-alpha conversions for the speed baselines,
the unchanged point for persistent), so no model is ever refitted here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

__all__ = ["pce", "MetricReport", "summarize", "pce_alpha_sweep"]


def pce(realized: float, forecast: float, alpha: float) -> float:
    """Asymmetric piecewise-linear loss.

    Underestimation (forecast below realized) costs ``alpha`` per unit,
    overestimation ``1 - alpha`` per unit.
    """
    if forecast < realized:
        return alpha * (realized - forecast)
    return (1.0 - alpha) * (forecast - realized)


@dataclass(frozen=True)
class MetricReport:
    method: str
    alpha: float
    pce_avg: float
    rmse: float
    mae: float
    n_test: int
    coverage: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("pce_avg", "rmse", "mae"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for lvl, frac in self.coverage.items():
            if not 0.0 <= frac <= 1.0:
                raise ValueError(f"coverage fraction at level {lvl} outside [0, 1]")


def summarize(records_by_method: dict, alpha: float) -> list:
    """One :class:`MetricReport` per method.

    Errors are forecast minus realized. Interval coverage (closed
    endpoints, so boundary ties count as covered) is reported for
    whichever methods carry intervals.
    """
    reports = []
    for method, records in records_by_method.items():
        if not records:
            raise ValueError(f"no records for method {method!r}")
        realized = np.array([r.realized_power for r in records])
        points = np.array([r.point for r in records])
        errors = points - realized
        pce_avg = float(np.mean([pce(p, f, alpha) for p, f in zip(realized, points)]))
        coverage = {}
        levels = sorted({lvl for r in records for lvl in r.intervals})
        for lvl in levels:
            hits = [
                r.intervals[lvl][0] <= r.realized_power <= r.intervals[lvl][1]
                for r in records
                if lvl in r.intervals
            ]
            coverage[lvl] = float(np.mean(hits))
        reports.append(
            MetricReport(
                method=method,
                alpha=alpha,
                pce_avg=pce_avg,
                rmse=float(np.sqrt(np.mean(errors**2))),
                mae=float(np.mean(np.abs(errors))),
                n_test=len(records),
                coverage=coverage,
            )
        )
    return reports


def _sweep_forecast(record, method: str, alpha: float, z_alpha: float) -> float:
    if record.density is not None:
        return math.exp(record.density.mu_prime + record.density.sigma_prime * z_alpha)
    if record.alpha_power is not None:
        key = round(alpha, 6)
        if key not in record.alpha_power:
            raise KeyError(
                f"method {method!r} has no stored forecast for alpha={alpha}; "
                "add it to sweep_alphas in the run config and rerun the backtest"
            )
        return record.alpha_power[key]
    return record.point  # persistent: loss-invariant point forecast


def pce_alpha_sweep(records_by_method: dict, alphas) -> list:
    """Average PCE per (alpha, method) over a grid of loss weights.

    Returns rows of ``{"alpha": a, "method": m, "avg_pce": v}`` sorted by
    alpha then method name.
    """
    alphas = [float(a) for a in alphas]
    if not alphas:
        raise ValueError("alpha grid must be non-empty")
    for a in alphas:
        if not 0.0 < a < 1.0:
            raise ValueError(f"alpha={a} outside the open interval (0, 1)")
    rows = []
    for a in sorted(alphas):
        z = float(norm.ppf(a))
        for method in sorted(records_by_method):
            records = records_by_method[method]
            if not records:
                raise ValueError(f"no records for method {method!r}")
            losses = [
                pce(r.realized_power, _sweep_forecast(r, method, a, z), a) for r in records
            ]
            rows.append({"alpha": a, "method": method, "avg_pce": float(np.mean(losses))})
    return rows
