#!/usr/bin/env python3
"""Command line entry point; every command prints a JSON payload.

Exit codes: 0 success, 2 configuration error, 3 runtime or numeric error, 4 I/O error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Any, Dict, List, Optional

from config import LOG_LEVEL, SYNTH_SAMPLES
from experiment_config import ExperimentConfig, describe_settings, load_config
from harness import run_experiment, synthesize_dataset, train_baseline_file, train_predictor_file
from logger import setup_logging
from metrics import compare_runs
from radio_sim import SimConfig
from utils import ConfigError, TiltShieldError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_IO = 4


def _sim_from(config_path: Optional[str]) -> SimConfig:
    if config_path is None:
        return SimConfig().validate()
    return load_config(config_path).sim


def cmd_synth(args) -> Dict[str, Any]:
    transitions = synthesize_dataset(_sim_from(args.config), args.samples, args.seed, args.out)
    return {"dataset": args.out, "samples": len(transitions), "seed": args.seed}


def cmd_train_baseline(args) -> Dict[str, Any]:
    kwargs = {"epochs": args.epochs} if args.epochs is not None else {}
    policy = train_baseline_file(args.data, args.out, seed=args.seed, **kwargs)
    return {"model": args.out, "layer_dims": list(policy.q_net.layer_dims)}


def cmd_train_predictor(args) -> Dict[str, Any]:
    kwargs = {"epochs": args.epochs} if args.epochs is not None else {}
    predictor = train_predictor_file(args.data, args.out, seed=args.seed, **kwargs)
    rmse = predictor.holdout_rmse or (None, None, None)
    return {
        "model": args.out,
        "layer_dims": list(predictor.net.layer_dims),
        "holdout_rmse": {"cov": rmse[0], "cap": rmse[1], "qual": rmse[2]},
        "within_threshold": predictor.within_threshold(),
    }


def cmd_run(args) -> Dict[str, Any]:
    config = load_config(args.config)
    return run_experiment(config).to_dict()


def cmd_compare(args) -> Dict[str, Any]:
    comparison = compare_runs(args.dirs, args.metric)
    comparison.write(args.out)
    return {
        "metric": comparison.metric,
        "table": args.out,
        "episodes": len(comparison.table),
        "summary": comparison.summary.to_dict(orient="records"),
    }


def cmd_settings_info(args) -> Dict[str, Any]:
    return {"defaults": ExperimentConfig().to_dict(), "schema": describe_settings()}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tiltshield", description="Safe tilt-optimisation experiments")
    parser.add_argument("--log-level", default=LOG_LEVEL, help="Console logging level")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="Synthesize a random-action transition dataset")
    synth.add_argument("--config", help="Experiment config whose sim_* keys define the network")
    synth.add_argument("--samples", type=int, default=SYNTH_SAMPLES)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", required=True)
    synth.set_defaults(handler=cmd_synth)

    baseline = sub.add_parser("train-baseline", help="Train the offline model baseline")
    baseline.add_argument("--data", required=True)
    baseline.add_argument("--out", required=True)
    baseline.add_argument("--seed", type=int, default=0)
    baseline.add_argument("--epochs", type=int)
    baseline.set_defaults(handler=cmd_train_baseline)

    predictor = sub.add_parser("train-predictor", help="Train the next-KPI state predictor")
    predictor.add_argument("--data", required=True)
    predictor.add_argument("--out", required=True)
    predictor.add_argument("--seed", type=int, default=0)
    predictor.add_argument("--epochs", type=int)
    predictor.set_defaults(handler=cmd_train_predictor)

    run = sub.add_parser("run", help="Run an experiment over all configured seeds")
    run.add_argument("--config", required=True)
    run.set_defaults(handler=cmd_run)

    compare = sub.add_parser("compare", help="Align one aggregated metric across runs")
    compare.add_argument("--metric", default="reward")
    compare.add_argument("--out", default="comparison.csv")
    compare.add_argument("dirs", nargs="+")
    compare.set_defaults(handler=cmd_compare)

    info = sub.add_parser("settings-info", help="Print the configuration schema")
    info.set_defaults(handler=cmd_settings_info)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)

    try:
        payload = args.handler(args)
    except ConfigError as exc:
        print(json.dumps({"error": str(exc), "field": exc.field, "kind": "config"}))
        return EXIT_CONFIG
    except OSError as exc:
        print(json.dumps({"error": str(exc), "kind": "io"}))
        return EXIT_IO
    except (TiltShieldError, ArithmeticError, RuntimeError, ValueError) as exc:
        logging.getLogger(__name__).error(f"{args.command} failed: {exc}")
        print(json.dumps({"error": str(exc), "kind": "runtime"}))
        return EXIT_RUNTIME
    except Exception as exc:
        logging.getLogger(__name__).exception(f"{args.command} failed unexpectedly")
        print(json.dumps({"error": f"{type(exc).__name__}: {exc}", "kind": "runtime"}))
        return EXIT_RUNTIME

    print(json.dumps(payload, default=str))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
