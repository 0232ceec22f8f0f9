"""Time-series ingestion, scaling and train/test splitting.

The on-disk format is a plain CSV with header ``timestamp,wind_speed,power``.
Timestamps may be ISO-8601 strings or integer epoch seconds; spacing must be
uniform because every downstream recursion assumes a constant step.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np

__all__ = [
    "SeriesFrame",
    "HyperGrid",
    "RunConfig",
    "load_csv",
    "load_config",
    "split_train_test",
    "scale_power",
    "unscale_power",
]


class DataError(ValueError):
    """Raised for malformed input files or frames violating invariants."""


@dataclass(frozen=True)
class SeriesFrame:
    """Uniformly spaced (wind speed, power) observations.

    Attributes
    ----------
    timestamps : np.ndarray
        Strictly increasing epoch seconds with constant spacing.
    speed : np.ndarray
        Wind speed per step, m/s, strictly positive.
    power : np.ndarray
        Power output per step, percent of rated capacity, in [0, 100].
    delta_t : float
        Step length used by the one-step recursions (dimensionless 1).
    """

    timestamps: np.ndarray
    speed: np.ndarray
    power: np.ndarray
    delta_t: float = 1.0

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.int64)
        sp = as_speed_array(self.speed)
        pw = np.asarray(self.power, dtype=float)
        if not (len(ts) == len(sp) == len(pw)):
            raise DataError("timestamps, speed and power must have equal length")
        if len(ts) > 1:
            gaps = np.diff(ts)
            if gaps.min() <= 0:
                raise DataError("timestamps must be strictly increasing")
            if gaps.max() != gaps.min():
                bad = int(np.argmax(gaps != gaps[0])) + 1
                raise DataError(f"non-uniform timestamp spacing at row {bad}")
        if pw.size and (pw.min() < 0.0 or pw.max() > 100.0):
            raise DataError(
                f"power must lie in [0, 100] after scaling "
                f"(observed range [{pw.min():g}, {pw.max():g}])"
            )
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "speed", sp)
        object.__setattr__(self, "power", pw)

    def __len__(self) -> int:
        return len(self.timestamps)

    def slice(self, start: int, stop: int) -> "SeriesFrame":
        return SeriesFrame(
            timestamps=self.timestamps[start:stop],
            speed=self.speed[start:stop],
            power=self.power[start:stop],
            delta_t=self.delta_t,
        )


def as_speed_array(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.size and (not np.all(np.isfinite(arr)) or arr.min() <= 0.0):
        raise DataError("speed values must be finite and strictly positive")
    return arr


@dataclass(frozen=True)
class HyperGrid:
    """Search grids for the cross-validated hyperparameters.

    ``q_mu`` and ``q_sigma2`` are candidate diagonal entries of the
    parameter random-walk covariance; ``sigma_z2`` candidate observation
    noise variances; ``delta``/``gamma`` candidate kernel bandwidths and
    regularizers for the power curve.
    """

    q_mu: tuple = (1e-7, 1e-6, 1e-5)
    q_sigma2: tuple = (1e-8, 1e-7, 1e-6)
    sigma_z2: tuple = (1e-4, 1e-3, 1e-2)
    delta: tuple = (0.5, 1.0, 2.0)
    gamma: tuple = (1.0, 10.0, 100.0)

    def __post_init__(self):
        for name in ("q_mu", "q_sigma2", "sigma_z2", "delta", "gamma"):
            vals = tuple(float(v) for v in getattr(self, name))
            if not vals:
                raise ValueError(f"hyper grid '{name}' must be non-empty")
            if min(vals) <= 0:
                raise ValueError(f"hyper grid '{name}' must be strictly positive")
            object.__setattr__(self, name, vals)


@dataclass(frozen=True)
class RunConfig:
    """Run configuration shared by the CLI and the forecasting pipeline."""

    n0_fraction: float = 0.70
    alpha_loss: float = 0.5
    interval_levels: tuple = (0.5, 0.9)
    hyper_grid: HyperGrid = field(default_factory=HyperGrid)
    rated_capacity: float | None = None
    speed_floor: float = 0.1
    power_floor: float = 0.1
    sigma_floor: float = 1e-4
    sigma_s2_min: float = 1e-8
    sigma_prime_max: float = 5.0
    f_s_floor: float = 1e-3
    curve_window: int | None = None
    curve_eval_at: str = "median"
    literal_ratio_returns: bool = False
    quantile_levels: tuple = tuple(round(0.05 * i, 2) for i in range(1, 20))
    sweep_alphas: tuple = (0.1, 0.2, 0.27, 0.3, 0.4, 0.5, 0.6, 0.7, 0.73, 0.8, 0.9)
    refit_every: int = 1
    max_order: int = 3
    cv_warmup_fraction: float = 0.5
    n_jobs: int = 1
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.n0_fraction < 1.0:
            raise ValueError(f"n0_fraction must lie in (0, 1), got {self.n0_fraction}")
        if not 0.0 <= self.alpha_loss <= 1.0:
            raise ValueError(f"alpha_loss must lie in [0, 1], got {self.alpha_loss}")
        for lvl in tuple(self.interval_levels) + tuple(self.quantile_levels):
            if not 0.0 < lvl < 1.0:
                raise ValueError(f"coverage/quantile level {lvl} outside (0, 1)")
        if self.curve_eval_at not in ("median", "mean"):
            raise ValueError("curve_eval_at must be 'median' or 'mean'")
        if self.refit_every < 1:
            raise ValueError("refit_every must be >= 1")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["hyper_grid"] = dataclasses.asdict(self.hyper_grid)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        grid = d.pop("hyper_grid", None)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise DataError(f"unknown config keys: {sorted(unknown)}")
        for name in ("interval_levels", "quantile_levels", "sweep_alphas"):
            if name in d:
                d[name] = tuple(d[name])
        if grid is not None:
            d["hyper_grid"] = HyperGrid(**grid)
        return cls(**d)


def load_config(path) -> RunConfig:
    """Read a JSON key-value file mirroring :class:`RunConfig` fields."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise DataError(f"config file {path} must contain a JSON object")
    return RunConfig.from_dict(payload)


def _parse_timestamp(raw: str, line_no: int) -> int:
    raw = raw.strip()
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return int(datetime.fromisoformat(raw.replace("Z", "+00:00")).timestamp())
    except ValueError:
        raise DataError(
            f"line {line_no}: timestamp {raw!r} is neither epoch seconds nor ISO-8601"
        ) from None


def scale_power(raw_power: np.ndarray, rated_capacity: float | None) -> np.ndarray:
    """Map raw power onto the [0, 100] percent-of-capacity scale."""
    raw_power = np.asarray(raw_power, dtype=float)
    if rated_capacity is None:
        return raw_power
    if rated_capacity <= 0:
        raise DataError("rated_capacity must be positive")
    return raw_power * (100.0 / rated_capacity)


def unscale_power(scaled_power: np.ndarray, rated_capacity: float | None) -> np.ndarray:
    scaled_power = np.asarray(scaled_power, dtype=float)
    if rated_capacity is None:
        return scaled_power
    return scaled_power * (rated_capacity / 100.0)


def load_csv(path, config: RunConfig) -> SeriesFrame:
    """Load a ``timestamp,wind_speed,power`` CSV into a validated frame.

    Power is rescaled by ``config.rated_capacity`` (left as-is when the
    capacity is ``None``, in which case the file must already be on the
    [0, 100] scale). Speeds at or below ``config.speed_floor`` are clamped
    to the floor so the log transform stays defined.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        header = [h.strip().lower() for h in header]
        required = ("timestamp", "wind_speed", "power")
        missing = [c for c in required if c not in header]
        if missing:
            raise DataError(f"{path} header is missing columns {missing}")
        idx = {c: header.index(c) for c in required}

        timestamps, speeds, powers = [], [], []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < len(header):
                raise DataError(f"line {line_no}: expected {len(header)} fields, got {len(row)}")
            cells = [row[idx[c]].strip() for c in required]
            if any(not cell for cell in cells):
                raise DataError(f"line {line_no}: missing field")
            timestamps.append(_parse_timestamp(cells[0], line_no))
            try:
                speeds.append(float(cells[1]))
                powers.append(float(cells[2]))
            except ValueError as exc:
                raise DataError(f"line {line_no}: {exc}") from None

    if not timestamps:
        raise DataError(f"{path} contains no data rows")

    speed = np.asarray(speeds, dtype=float)
    if not np.all(np.isfinite(speed)):
        raise DataError("wind_speed column contains non-finite values")
    speed = np.maximum(speed, config.speed_floor)
    power = scale_power(np.asarray(powers, dtype=float), config.rated_capacity)
    return SeriesFrame(timestamps=np.asarray(timestamps, dtype=np.int64), speed=speed, power=power)


def split_train_test(frame: SeriesFrame, config: RunConfig) -> tuple[SeriesFrame, SeriesFrame]:
    """Chronological split: first ``floor(n0_fraction * N)`` rows train, rest test."""
    n = len(frame)
    if n < 10:
        raise DataError(f"need at least 10 rows to split, got {n}")
    n0 = int(np.floor(config.n0_fraction * n))
    return frame.slice(0, n0), frame.slice(n0, n)
