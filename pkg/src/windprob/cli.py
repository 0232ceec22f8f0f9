"""Command-line front end: simulate, fit, forecast, evaluate, sweep-alpha.

Every run writes a ``<out>.manifest.json`` sidecar with content hashes of
the config, input and output so reruns can be checked for bit-identity.
All outputs are plain CSV/JSON-lines; plotting is left to external tools.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import sys
from pathlib import Path

from .baselines import BASELINE_METHODS, run_baseline_backtest
from .data import DataError, RunConfig, load_config, load_csv, split_train_test
from .evaluation import pce_alpha_sweep, summarize
from .forecaster import WindPowerForecaster, records_to_csv, records_to_jsonl
from .simulate import ConstantProfile, LogisticCurve, SimSpec, SinusoidProfile, simulate, write_simulation_csv

__all__ = ["main"]


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out: Path, command: str, config_dict: dict, seed, data_path: Path | None):
    manifest = {
        "command": command,
        "seed": seed,
        "config": config_dict,
        "config_sha256": hashlib.sha256(
            json.dumps(config_dict, sort_keys=True).encode()
        ).hexdigest(),
        "input": str(data_path) if data_path else None,
        "input_sha256": _sha256(data_path) if data_path else None,
        "output": str(out),
        "output_sha256": _sha256(out),
    }
    Path(str(out) + ".manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _load_run_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = {}
    if getattr(args, "alpha", None) is not None:
        overrides["alpha_loss"] = args.alpha
    if getattr(args, "refit_every", None) is not None:
        overrides["refit_every"] = args.refit_every
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


def _profile_from_dict(d) -> object:
    if isinstance(d, (int, float)):
        return ConstantProfile(float(d))
    kind = d.get("kind", "constant")
    if kind == "constant":
        return ConstantProfile(float(d["value"]))
    if kind == "sinusoid":
        return SinusoidProfile(base=float(d["base"]), amplitude=float(d["amplitude"]),
                               period=float(d["period"]))
    raise DataError(f"unknown profile kind {kind!r}")


def _sim_spec(args) -> SimSpec:
    payload = {}
    if args.config:
        payload = json.loads(Path(args.config).read_text())
        if not isinstance(payload, dict):
            raise DataError("simulate config must be a JSON object")
    curve = LogisticCurve(**payload.get("curve", {}))
    return SimSpec(
        n_steps=args.steps,
        delta_t=float(payload.get("delta_t", 1.0)),
        mu_profile=_profile_from_dict(payload.get("mu", 0.0)),
        sigma_profile=_profile_from_dict(payload.get("sigma", 0.02)),
        s0=float(payload.get("s0", 8.0)),
        true_curve=curve,
        sigma_f_true=float(payload.get("sigma_f_true", 0.3)),
        obs_noise_var=float(payload.get("obs_noise_var", 1e-4)),
        seed=args.seed,
    )


def _cmd_simulate(args) -> int:
    spec = _sim_spec(args)
    result = simulate(spec)
    out = Path(args.out)
    write_simulation_csv(result, out)
    _write_manifest(out, "simulate", {"n_steps": spec.n_steps, "seed": spec.seed}, args.seed, None)
    print(f"wrote {out} ({spec.n_steps} rows) and {out.name}.truth")
    return 0


def _split(args, config: RunConfig):
    data_path = Path(args.data)
    frame = load_csv(data_path, config)
    train, test = split_train_test(frame, config)
    return data_path, train, test


def _cmd_fit(args) -> int:
    config = _load_run_config(args)
    data_path, train, _ = _split(args, config)
    forecaster = WindPowerForecaster(config=config).fit(train)
    out = Path(args.out)
    out.write_text(json.dumps(forecaster.to_dict(), sort_keys=True) + "\n")
    _write_manifest(out, "fit", config.to_dict(), config.seed, data_path)
    print(f"wrote model snapshot {out} "
          f"(sigma_f={forecaster.sigma_f_:.4g}, dictionary={len(forecaster.curve_.centers_)})")
    return 0


def _cmd_forecast(args) -> int:
    config = _load_run_config(args)
    data_path = Path(args.data)
    if args.resume:
        forecaster = WindPowerForecaster.from_dict(json.loads(Path(args.resume).read_text()))
        config = forecaster.config_
        frame = load_csv(data_path, config)
        test = frame.slice(forecaster.n_trained_, len(frame))
    else:
        _, train, test = _split(args, config)
        forecaster = WindPowerForecaster(config=config).fit(train)
    records = forecaster.backtest(test)
    out = Path(args.out)
    if out.suffix == ".jsonl":
        records_to_jsonl(records, out, config)
    else:
        records_to_csv(records, out, config)
    _write_manifest(out, "forecast", config.to_dict(), config.seed, data_path)
    print(f"wrote {len(records)} forecast records to {out}")
    return 0


def _run_all_methods(train, test, config: RunConfig) -> dict:
    forecaster = WindPowerForecaster(config=config).fit(train)
    records = {"proposed": forecaster.backtest(test)}
    curve_params = (forecaster.curve_.delta, forecaster.curve_.gamma)
    for method in BASELINE_METHODS:
        records[method] = run_baseline_backtest(train, test, config, method, curve_params=curve_params)
    return records


def _cmd_evaluate(args) -> int:
    config = _load_run_config(args)
    data_path, train, test = _split(args, config)
    records = _run_all_methods(train, test, config)
    reports = summarize(records, config.alpha_loss)
    out = Path(args.out)
    levels = sorted(config.interval_levels)
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["method", "alpha", "avg_pce", "rmse", "mae", "n_test"]
                        + [f"coverage{int(round(l * 100)):02d}" for l in levels])
        for rep in sorted(reports, key=lambda r: r.method):
            row = [rep.method, repr(rep.alpha), repr(rep.pce_avg), repr(rep.rmse),
                   repr(rep.mae), rep.n_test]
            row += [repr(rep.coverage[l]) if l in rep.coverage else "" for l in levels]
            writer.writerow(row)
    _write_manifest(out, "evaluate", config.to_dict(), config.seed, data_path)
    print(f"wrote metric table for {len(reports)} methods to {out}")
    return 0


def _cmd_sweep_alpha(args) -> int:
    config = _load_run_config(args)
    data_path, train, test = _split(args, config)
    records = _run_all_methods(train, test, config)
    rows = pce_alpha_sweep(records, config.sweep_alphas)
    out = Path(args.out)
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["alpha", "method", "avg_pce"])
        for row in rows:
            writer.writerow([repr(row["alpha"]), row["method"], repr(row["avg_pce"])])
    _write_manifest(out, "sweep-alpha", config.to_dict(), config.seed, data_path)
    print(f"wrote {len(rows)} sweep rows to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="windprob",
        description="Probabilistic short-term wind power forecasting",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a synthetic series plus truth sidecar")
    p_sim.add_argument("--steps", type=int, default=1000)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--config", help="JSON file with simulation settings")
    p_sim.add_argument("--out", required=True)
    p_sim.set_defaults(func=_cmd_simulate)

    p_fit = sub.add_parser("fit", help="tune hyperparameters and write a model snapshot")
    p_fit.add_argument("--data", required=True)
    p_fit.add_argument("--config")
    p_fit.add_argument("--seed", type=int)
    p_fit.add_argument("--out", required=True)
    p_fit.set_defaults(func=_cmd_fit)

    p_fc = sub.add_parser("forecast", help="run the one-step backtest over the test split")
    p_fc.add_argument("--data", required=True)
    p_fc.add_argument("--config")
    p_fc.add_argument("--alpha", type=float)
    p_fc.add_argument("--resume", help="model snapshot written by fit")
    p_fc.add_argument("--out", required=True, help=".csv or .jsonl")
    p_fc.set_defaults(func=_cmd_forecast)

    p_ev = sub.add_parser("evaluate", help="metric table for the proposed method and baselines")
    p_ev.add_argument("--data", required=True)
    p_ev.add_argument("--config")
    p_ev.add_argument("--alpha", type=float)
    p_ev.add_argument("--refit-every", type=int, dest="refit_every")
    p_ev.add_argument("--out", required=True)
    p_ev.set_defaults(func=_cmd_evaluate)

    p_sw = sub.add_parser("sweep-alpha", help="average PCE over a grid of loss weights")
    p_sw.add_argument("--data", required=True)
    p_sw.add_argument("--config")
    p_sw.add_argument("--refit-every", type=int, dest="refit_every")
    p_sw.add_argument("--out", required=True)
    p_sw.set_defaults(func=_cmd_sweep_alpha)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(parser.format_usage().strip(), file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(parser.format_usage().strip(), file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures map to exit 1 per the CLI contract
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
