#!/usr/bin/env python3
"""
Lévy density estimation pipeline
=================================

Runs the simulation study from one JSON config (see run_config.py):

  simulate     draw increments, write sample.csv + sample.json
  estimate     |x|²ν̂, ν̂ and the volatility-corrected |x|²ν̂ as grids,
               a slice along x1 at x2 = 0, diagnostics.json
  evaluate     metrics.json against the reference model
  convergence  metrics for every (n, seed) of the sweep, per-n medians and
               the fitted log-log slope (convergence.csv / convergence.json)

Usage:
  python pipeline.py estimate --config configs/cpp_experiment.json
  python pipeline.py convergence --config configs/cpp_convergence.json
  python pipeline.py estimate --config ... --n 500000 --seed 3 --bandwidth 0.2

Environment Variables:
  LEVY_OUTPUT_ROOT  base for relative output directories (default ./runs)
  LEVY_LOG_LEVEL    logging level (default INFO)
  LEVY_WORKERS      threads for seed sweeps (default 1)
  LEVY_ECF_CHUNK    increments per ECF pass (default 20000)

Exit codes: 0 success, 2 configuration / model / input error, 3 capacity error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from field_io import CSV_FLOAT_FORMAT, write_field_binary, write_field_csv, write_json, write_slice_csv
from fourier_inversion import SpaceGrid
from levy_density_estimator import (
    EstimatorConfig, estimate_all, integrate_against_test_function, select_bandwidth,
)
from levy_errors import CapacityError, DomainError, InvalidInputError, InvalidModelError, ConfigurationError
from levy_simulator import IncrementSample, load_sample, model_components, save_sample, simulate_model
from reference_models import (
    l2_error, reference_from_spec, reference_functional, relative_l2_error, sup_error,
    true_trace_sigma, truth_on_grid,
)
from run_config import ConfigError, RunConfig, apply_overrides, load_run_config

logger = logging.getLogger(__name__)

LOG_LEVEL = os.environ.get("LEVY_LOG_LEVEL", "INFO").upper()
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CAPACITY = 3
MAX_CSV_DIMENSION = 2
SWEEP_METRICS = ("relative_l2_error", "sup_error", "l2_error")


# ── Shared steps ───────────────────────────────────────────────────────────

def obtain_sample(config: RunConfig) -> IncrementSample:
    """Load ``sampling.sample_path`` when set, otherwise simulate from the model."""
    sampling = config.sampling
    if sampling.sample_path:
        sample = load_sample(sampling.sample_path)
        if sample.dimension != config.model.dimension:
            raise ConfigError("sampling.sample_path",
                              f"sample dimension {sample.dimension} != model dimension {config.model.dimension}")
        logger.info(f"[Pipeline] loaded {sample.n} increments from {sampling.sample_path}")
        return sample
    return simulate_model(config.model, sampling.delta, sampling.n, sampling.seed)


def resolve_estimator(config: RunConfig, n: int, delta: float) -> EstimatorConfig:
    """Estimator config with the kernel bandwidth taken from the configured rule at T = nδ."""
    band = config.bandwidth
    h = select_bandwidth(band.rule, delta, n * delta, config.model.dimension, params=band.rate, h=band.h)
    if not 0 < h <= 1:
        raise DomainError(f"bandwidth rule {band.rule!r} gave h = {h:.4g} outside (0, 1] at T = {n * delta:g}")
    logger.info(f"[Pipeline] bandwidth h = {h:.5g} ({band.rule}, T = {n * delta:g})")
    return config.estimator.with_bandwidth(h)


# ── Commands ───────────────────────────────────────────────────────────────

def cmd_simulate(config: RunConfig) -> Dict[str, Path]:
    out_dir = config.outputs.resolve()
    sample = obtain_sample(config)
    csv_path, meta_path = save_sample(sample, out_dir / "sample")
    logger.info(f"[Pipeline] wrote {csv_path} ({sample.n} x {sample.dimension})")
    return {"csv": csv_path, "json": meta_path}


def cmd_estimate(config: RunConfig) -> Dict:
    sample = obtain_sample(config)
    est_cfg = resolve_estimator(config, sample.n, sample.delta)
    estimate = estimate_all(sample, est_cfg)
    out_dir = config.outputs.resolve()
    files: Dict[str, Path] = {}

    fields = {
        "xsq_nu_hat": estimate.xsq_nu_hat,
        "nu_hat": estimate.nu_hat,
        "xsq_nu_corrected": estimate.xsq_nu_corrected,
    }
    if config.evaluation.use_reference and not config.model.blocks:
        reference = reference_from_spec(config.model)
        for quantity in ("xsq_nu", "nu"):
            fields[f"truth_{quantity}"] = truth_on_grid(reference, estimate.xsq_nu_hat.grid, quantity)
    for name, fld in fields.items():
        if config.outputs.binary:
            files[f"{name}.bin"] = write_field_binary(fld, out_dir / name)["payload"]
        if config.outputs.csv and fld.grid.dimension <= MAX_CSV_DIMENSION:
            files[f"{name}.csv"] = write_field_csv(fld, out_dir / f"{name}.csv")
    if config.outputs.slices and sample.dimension >= 2:
        files["slice_x2_0.csv"] = write_slice_csv(estimate.xsq_nu_hat, out_dir / "slice_x2_0.csv", axis=0)

    diagnostics = dict(estimate.diagnostics)
    diagnostics.update({
        "bandwidth_rule": config.bandwidth.rule,
        "seed": sample.seed,
        "components": list(model_components(config.model)),
    })
    files["diagnostics.json"] = write_json(diagnostics, out_dir / "diagnostics.json")
    logger.info(f"[Pipeline] estimate written to {out_dir} ({len(files)} files)")
    return {"diagnostics": diagnostics, "files": files, "estimate": estimate}


def evaluate_run(config: RunConfig) -> Dict:
    """Metrics for one (n, seed) as a flat dict of plain numbers.

    The bandwidth follows the horizon of the increments actually used, so a
    loaded sample overrides ``sampling.n`` and ``sampling.delta``.
    """
    evaluation = config.evaluation
    if not evaluation.use_reference:
        raise ConfigError("evaluation.use_reference", "evaluate needs the reference model; set it to true")
    reference = reference_from_spec(config.model)

    trace = None
    if evaluation.use_truth_as_estimate:
        n, seed = config.sampling.n, config.sampling.seed
        est_cfg = resolve_estimator(config, n, config.sampling.delta)
        field = truth_on_grid(reference, SpaceGrid.dual(est_cfg.freq_grid(config.model.dimension)), "xsq_nu")
        metrics: Dict = {"n": n, "seed": seed, "bandwidth": est_cfg.bandwidth}
    else:
        sample = obtain_sample(config)
        est_cfg = resolve_estimator(config, sample.n, sample.delta)
        estimate = estimate_all(sample, est_cfg)
        field = estimate.xsq_nu_hat
        trace = estimate.trace_sigma
        metrics = {"n": sample.n, "seed": sample.seed, "bandwidth": est_cfg.bandwidth,
                   "masked_fraction": estimate.diagnostics["masked_fraction"]}

    pointwise = reference.kind != "blocks"
    for name in evaluation.metrics:
        if name in ("sup", "l2", "relative_l2") and not pointwise:
            logger.warning(f"[Pipeline] metric {name!r} is undefined for a block model; skipped")
            continue
        if name == "sup":
            metrics["sup_error"] = sup_error(field, reference, evaluation.region)
        elif name == "l2":
            metrics["l2_error"] = l2_error(field, reference, evaluation.region)
        elif name == "relative_l2":
            metrics["relative_l2_error"] = relative_l2_error(field, reference, evaluation.region)
        elif name == "trace_sigma" and trace is not None:
            metrics["trace_sigma"] = trace
            metrics["trace_sigma_truth"] = true_trace_sigma(reference)
        elif name == "functional":
            for i, f in enumerate(evaluation.test_functions):
                estimated = integrate_against_test_function(field, f, evaluation.region)
                expected = reference_functional(reference, f)
                metrics[f"functional_{i}_estimate"] = estimated
                metrics[f"functional_{i}_reference"] = expected
                metrics[f"functional_{i}_error"] = expected - estimated
    return metrics


def cmd_evaluate(config: RunConfig) -> Dict:
    metrics = evaluate_run(config)
    path = write_json(metrics, config.outputs.resolve() / "metrics.json")
    logger.info(f"[Pipeline] metrics written to {path}")
    return metrics


def _sweep_configs(config: RunConfig) -> List[RunConfig]:
    if config.sampling.sample_path:
        raise ConfigError("sampling.sample_path", "a convergence sweep simulates its own samples; drop sample_path")
    if config.evaluation.use_truth_as_estimate:
        raise ConfigError("evaluation.use_truth_as_estimate", "not meaningful in a convergence sweep")
    return [replace(config, sampling=replace(config.sampling, n=n, seed=seed))
            for n in config.sweep.n_values for seed in config.sweep.seeds]


def convergence_summary(table: pd.DataFrame) -> Dict:
    """Per-n medians and the least-squares slope of log(median) against log(n)."""
    metric = next((m for m in SWEEP_METRICS if m in table.columns), None)
    if metric is None:
        raise ConfigError("evaluation.metrics", f"a convergence sweep needs one of {SWEEP_METRICS}")
    medians = table.groupby("n")[metric].median().sort_index()
    slope = None
    if len(medians) >= 2 and np.all(medians.to_numpy() > 0):
        slope = float(np.polyfit(np.log(medians.index.to_numpy(dtype=float)), np.log(medians.to_numpy()), 1)[0])
    return {
        "metric": metric,
        "medians": {str(int(n)): float(v) for n, v in medians.items()},
        "slope": slope,
        "monotone_decreasing": bool(np.all(np.diff(medians.to_numpy()) < 0)),
        "n_values": [int(n) for n in medians.index],
        "seeds": int(table["seed"].nunique()),
    }


def cmd_convergence(config: RunConfig) -> Dict:
    runs = _sweep_configs(config)
    workers = max(1, config.sweep.workers)
    logger.info(f"[Pipeline] convergence sweep: {len(runs)} runs on {workers} worker(s)")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(evaluate_run, runs))
    else:
        rows = [evaluate_run(run) for run in runs]

    table = pd.DataFrame(rows).sort_values(["n", "seed"]).reset_index(drop=True)
    summary = convergence_summary(table)
    out_dir = config.outputs.resolve()
    out_dir.mkdir(parents=True, exist_ok=True)
    table.to_csv(out_dir / "convergence.csv", index=False, float_format=CSV_FLOAT_FORMAT)
    write_json(summary, out_dir / "convergence.json")
    slope = "n/a" if summary["slope"] is None else f"{summary['slope']:.3f}"
    logger.info(f"[Pipeline] median {summary['metric']} by n: {summary['medians']} (slope {slope})")
    return summary


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "evaluate": cmd_evaluate,
    "convergence": cmd_convergence,
}


# ── CLI ────────────────────────────────────────────────────────────────────

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON run config")
    common.add_argument("--n", type=int, default=None, help="override sampling.n")
    common.add_argument("--seed", type=int, default=None, help="override sampling.seed")
    common.add_argument("--bandwidth", type=float, default=None, help="explicit kernel bandwidth h")
    common.add_argument("--verbose", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(description="Spectral Lévy density estimation pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=COMMANDS[name].__name__.replace("cmd_", ""))
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else LOG_LEVEL,
        format='%(asctime)s [%(levelname)s] %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S',
    )
    try:
        config = apply_overrides(load_run_config(args.config), n=args.n, seed=args.seed, bandwidth=args.bandwidth)
        COMMANDS[args.command](config)
    except (CapacityError, MemoryError) as e:
        logger.error(f"[Pipeline] capacity exceeded: {e}")
        return EXIT_CAPACITY
    except (ConfigurationError, InvalidModelError, InvalidInputError, DomainError) as e:
        logger.error(f"[Pipeline] {type(e).__name__}: {e}")
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
