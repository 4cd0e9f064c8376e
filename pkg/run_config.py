"""
Run configuration — one JSON file drives simulate / estimate / evaluate / convergence

    {
      "model":      {LevyModelSpec JSON, see levy_simulator.model_spec_from_dict},
      "sampling":   {"delta": 0.001, "n": 100000, "seed": 7, "sample_path": null},
      "estimator":  {"kernel": {"kind", "b", "c", "order"},
                     "weight": {"shape", "bandwidth"},
                     "points", "u_max", "u_max_factor", "post_process",
                     "origin_exclusion_radius"},
      "bandwidth":  {"rule": "sim_default" | "explicit" | "mild" | "severe" |
                              "mild_high_frequency" | "severe_high_frequency",
                     "h": null, "rate": {"regime", "s", "alpha", "r"}},
      "outputs":    {"directory", "csv", "binary", "slices"},
      "evaluation": {"region": {...}, "metrics": [...], "use_reference",
                     "use_truth_as_estimate", "test_functions": [...]},
      "sweep":      {"n_values": [...], "seeds": [...], "workers"}
    }

Every parse error is a ConfigError naming the dotted path of the bad entry.
to_dict() writes the same layout back; parse → serialise → parse is identity.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Optional, Tuple

from flat_top_kernel import DEFAULT_B, DEFAULT_C, KernelSpec, WeightSpec
from levy_density_estimator import (
    BANDWIDTH_RULES, BumpFunction, EstimatorConfig, RateParams, Region,
)
from levy_errors import ConfigurationError, InvalidModelError, LevyEstimationError
from levy_simulator import LevyModelSpec, model_spec_from_dict, model_spec_to_dict

# ── Environment ────────────────────────────────────────────────────────────
OUTPUT_ROOT = os.environ.get("LEVY_OUTPUT_ROOT", "runs")
DEFAULT_WORKERS = int(os.environ.get("LEVY_WORKERS", "1"))

METRICS = ("sup", "l2", "relative_l2", "functional", "trace_sigma")


class ConfigError(ConfigurationError):
    """A run config entry is missing or malformed; ``path`` is its dotted JSON path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


# ── Sections ───────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class SamplingConfig:
    delta: float = 0.001
    n: int = 100_000
    seed: int = 0
    sample_path: Optional[str] = None


@dataclass(frozen=True)
class BandwidthConfig:
    rule: str = "sim_default"
    h: Optional[float] = None
    rate: Optional[RateParams] = None


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "run"
    csv: bool = True
    binary: bool = True
    slices: bool = True

    def resolve(self) -> Path:
        path = Path(self.directory)
        return path if path.is_absolute() else Path(OUTPUT_ROOT) / path


@dataclass(frozen=True)
class EvaluationConfig:
    region: Region = field(default_factory=Region)
    metrics: Tuple[str, ...] = ("sup", "l2", "relative_l2")
    use_reference: bool = True
    use_truth_as_estimate: bool = False
    test_functions: Tuple[BumpFunction, ...] = ()


@dataclass(frozen=True)
class SweepConfig:
    n_values: Tuple[int, ...] = (10_000, 100_000)
    seeds: Tuple[int, ...] = tuple(range(10))
    workers: int = DEFAULT_WORKERS


@dataclass(frozen=True)
class RunConfig:
    model: LevyModelSpec
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    bandwidth: BandwidthConfig = field(default_factory=BandwidthConfig)
    outputs: OutputConfig = field(default_factory=OutputConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def to_dict(self) -> Dict:
        return {
            "model": model_spec_to_dict(self.model),
            "sampling": {
                "delta": self.sampling.delta, "n": self.sampling.n, "seed": self.sampling.seed,
                "sample_path": self.sampling.sample_path,
            },
            "estimator": _estimator_to_dict(self.estimator),
            "bandwidth": {
                "rule": self.bandwidth.rule, "h": self.bandwidth.h,
                "rate": None if self.bandwidth.rate is None else {
                    "regime": self.bandwidth.rate.regime, "s": self.bandwidth.rate.s,
                    "alpha": self.bandwidth.rate.alpha, "r": self.bandwidth.rate.r,
                },
            },
            "outputs": {
                "directory": self.outputs.directory, "csv": self.outputs.csv,
                "binary": self.outputs.binary, "slices": self.outputs.slices,
            },
            "evaluation": {
                "region": _region_to_dict(self.evaluation.region),
                "metrics": list(self.evaluation.metrics),
                "use_reference": self.evaluation.use_reference,
                "use_truth_as_estimate": self.evaluation.use_truth_as_estimate,
                "test_functions": [
                    {"center": list(f.center), "width": f.width, "kind": f.kind, "amplitude": f.amplitude}
                    for f in self.evaluation.test_functions
                ],
            },
            "sweep": {
                "n_values": list(self.sweep.n_values), "seeds": list(self.sweep.seeds),
                "workers": self.sweep.workers,
            },
        }


def _estimator_to_dict(cfg: EstimatorConfig) -> Dict:
    return {
        "kernel": {"kind": cfg.kernel.kind, "b": cfg.kernel.b, "c": cfg.kernel.c, "order": cfg.kernel.order},
        "weight": {"shape": cfg.weight.shape, "bandwidth": cfg.weight.bandwidth},
        "points": cfg.points,
        "u_max": cfg.u_max,
        "u_max_factor": cfg.u_max_factor,
        "post_process": cfg.post_process,
        "origin_exclusion_radius": cfg.origin_exclusion_radius,
    }


def _region_to_dict(region: Region) -> Dict:
    out: Dict = {"kind": region.kind}
    if region.kind == "annulus":
        out.update(inner=region.inner, outer=region.outer)
    elif region.kind == "box":
        out.update(lower=list(region.lower), upper=list(region.upper))
    return out


# ── Parsing helpers ────────────────────────────────────────────────────────

def _section(data: Dict, key: str, path: str) -> Dict:
    value = data.get(key)
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"{path}.{key}" if path else key, "expected an object")
    return value


def _number(data: Dict, key: str, path: str, default=None, kind=float, required: bool = False):
    where = f"{path}.{key}"
    if key not in data or data[key] is None:
        if required:
            raise ConfigError(where, "required")
        return default
    value = data[key]
    if isinstance(value, bool):
        raise ConfigError(where, f"expected a number, got {value!r}")
    try:
        if kind is int:
            if float(value) != int(value):
                raise ValueError
            return int(value)
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(where, f"expected {'an integer' if kind is int else 'a number'}, got {value!r}") from None


def _flag(data: Dict, key: str, path: str, default: bool) -> bool:
    value = data.get(key, default)
    if not isinstance(value, bool):
        raise ConfigError(f"{path}.{key}", f"expected true/false, got {value!r}")
    return value


def _string(data: Dict, key: str, path: str, default: Optional[str]) -> Optional[str]:
    value = data.get(key, default)
    if value is not None and not isinstance(value, str):
        raise ConfigError(f"{path}.{key}", f"expected a string, got {value!r}")
    return value


def _int_list(data: Dict, key: str, path: str, default: Tuple[int, ...]) -> Tuple[int, ...]:
    value = data.get(key)
    if value is None:
        return default
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{path}.{key}", "expected a nonempty list of integers")
    return tuple(_number({"v": v}, "v", f"{path}.{key}[{i}]", kind=int, required=True) for i, v in enumerate(value))


def _build(path: str, fn):
    try:
        return fn()
    except ConfigError:
        raise
    except LevyEstimationError as e:
        raise ConfigError(path, str(e)) from None


# ── Section parsers ────────────────────────────────────────────────────────

def _parse_sampling(data: Dict) -> SamplingConfig:
    path = "sampling"
    delta = _number(data, "delta", path, default=0.001)
    n = _number(data, "n", path, default=100_000, kind=int)
    seed = _number(data, "seed", path, default=0, kind=int)
    if not delta > 0:
        raise ConfigError(f"{path}.delta", f"must be > 0, got {delta}")
    if n < 1:
        raise ConfigError(f"{path}.n", f"must be >= 1, got {n}")
    return SamplingConfig(delta=delta, n=n, seed=seed, sample_path=_string(data, "sample_path", path, None))


def _parse_estimator(data: Dict) -> EstimatorConfig:
    path = "estimator"
    kernel = _section(data, "kernel", path)
    weight = _section(data, "weight", path)
    kernel_spec = _build(f"{path}.kernel", lambda: KernelSpec(
        kind=_string(kernel, "kind", f"{path}.kernel", "flat_top_radial"),
        b=_number(kernel, "b", f"{path}.kernel", default=DEFAULT_B),
        c=_number(kernel, "c", f"{path}.kernel", default=DEFAULT_C),
        order=_number(kernel, "order", f"{path}.kernel", default=2, kind=int),
    ))
    weight_spec = _build(f"{path}.weight", lambda: WeightSpec(
        shape=_string(weight, "shape", f"{path}.weight", "indicator_box"),
        bandwidth=_number(weight, "bandwidth", f"{path}.weight", default=1.0),
    ))
    return _build(path, lambda: EstimatorConfig(
        kernel=kernel_spec,
        weight=weight_spec,
        points=_number(data, "points", path, default=128, kind=int),
        u_max=_number(data, "u_max", path),
        u_max_factor=_number(data, "u_max_factor", path, default=1.0),
        post_process=_string(data, "post_process", path, "real_positive_part"),
        origin_exclusion_radius=_number(data, "origin_exclusion_radius", path),
    ))


def _parse_bandwidth(data: Dict) -> BandwidthConfig:
    path = "bandwidth"
    rule = _string(data, "rule", path, "sim_default")
    if rule not in BANDWIDTH_RULES:
        raise ConfigError(f"{path}.rule", f"must be one of {BANDWIDTH_RULES}, got {rule!r}")
    h = _number(data, "h", path)
    if rule == "explicit":
        if h is None:
            raise ConfigError(f"{path}.h", "required when rule is 'explicit'")
        if not 0 < h <= 1:
            raise ConfigError(f"{path}.h", f"must lie in (0, 1], got {h}")
    elif h is not None:
        raise ConfigError(f"{path}.h", f"exactly one bandwidth source: drop h or set rule to 'explicit' (rule is {rule!r})")

    rate = None
    if data.get("rate") is not None:
        raw = _section(data, "rate", path)
        rate = _build(f"{path}.rate", lambda: RateParams(
            regime=_string(raw, "regime", f"{path}.rate", "mild"),
            s=_number(raw, "s", f"{path}.rate", default=2.0),
            alpha=_number(raw, "alpha", f"{path}.rate", default=1.0),
            r=_number(raw, "r", f"{path}.rate", default=1.0),
        ))
    if rule in ("mild", "severe", "mild_high_frequency", "severe_high_frequency") and rate is None:
        raise ConfigError(f"{path}.rate", f"required for rule {rule!r}")
    return BandwidthConfig(rule=rule, h=h, rate=rate)


def _parse_outputs(data: Dict) -> OutputConfig:
    path = "outputs"
    directory = _string(data, "directory", path, "run")
    if not directory:
        raise ConfigError(f"{path}.directory", "must be a nonempty path")
    return OutputConfig(
        directory=directory,
        csv=_flag(data, "csv", path, True),
        binary=_flag(data, "binary", path, True),
        slices=_flag(data, "slices", path, True),
    )


def _parse_region(data: Dict, path: str) -> Region:
    kind = _string(data, "kind", path, "annulus")

    def corners(key):
        value = data.get(key)
        if value is None:
            return None
        if not isinstance(value, list):
            raise ConfigError(f"{path}.{key}", "expected a list of numbers")
        return tuple(_number({"v": v}, "v", f"{path}.{key}[{i}]", required=True) for i, v in enumerate(value))

    return _build(path, lambda: Region(
        kind=kind,
        inner=_number(data, "inner", path, default=0.5),
        outer=_number(data, "outer", path, default=2.0),
        lower=corners("lower"),
        upper=corners("upper"),
    ))


def _parse_evaluation(data: Dict) -> EvaluationConfig:
    path = "evaluation"
    region = _parse_region(_section(data, "region", path), f"{path}.region")
    metrics = data.get("metrics", ["sup", "l2", "relative_l2"])
    if not isinstance(metrics, list):
        raise ConfigError(f"{path}.metrics", "expected a list of metric names")
    for i, name in enumerate(metrics):
        if name not in METRICS:
            raise ConfigError(f"{path}.metrics[{i}]", f"unknown metric {name!r}; choose from {METRICS}")

    functions = []
    for i, raw in enumerate(data.get("test_functions") or []):
        where = f"{path}.test_functions[{i}]"
        if not isinstance(raw, dict) or not isinstance(raw.get("center"), list):
            raise ConfigError(where, "expected an object with a 'center' list")
        center = tuple(_number({"v": v}, "v", f"{where}.center[{j}]", required=True)
                       for j, v in enumerate(raw["center"]))
        functions.append(_build(where, lambda raw=raw, center=center, where=where: BumpFunction(
            center=center,
            width=_number(raw, "width", where, required=True),
            kind=_string(raw, "kind", where, "product"),
            amplitude=_number(raw, "amplitude", where, default=1.0),
        )))
    if "functional" in metrics and not functions:
        raise ConfigError(f"{path}.test_functions", "the 'functional' metric needs at least one test function")

    return EvaluationConfig(
        region=region,
        metrics=tuple(metrics),
        use_reference=_flag(data, "use_reference", path, True),
        use_truth_as_estimate=_flag(data, "use_truth_as_estimate", path, False),
        test_functions=tuple(functions),
    )


def _parse_sweep(data: Dict) -> SweepConfig:
    path = "sweep"
    n_values = _int_list(data, "n_values", path, (10_000, 100_000))
    if any(n < 1 for n in n_values):
        raise ConfigError(f"{path}.n_values", "every n must be >= 1")
    workers = _number(data, "workers", path, default=DEFAULT_WORKERS, kind=int)
    if workers < 1:
        raise ConfigError(f"{path}.workers", f"must be >= 1, got {workers}")
    return SweepConfig(n_values=n_values, seeds=_int_list(data, "seeds", path, tuple(range(10))), workers=workers)


# ── Public API ─────────────────────────────────────────────────────────────

def run_config_from_dict(data: Dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("$", "run config must be a JSON object")
    if data.get("model") is None:
        raise ConfigError("model", "required")
    try:
        model = model_spec_from_dict(data["model"], path="model")
    except InvalidModelError as e:
        raise ConfigError(str(e).split(":", 1)[0], str(e).split(":", 1)[-1].strip()) from None

    config = RunConfig(
        model=model,
        sampling=_parse_sampling(_section(data, "sampling", "")),
        estimator=_parse_estimator(_section(data, "estimator", "")),
        bandwidth=_parse_bandwidth(_section(data, "bandwidth", "")),
        outputs=_parse_outputs(_section(data, "outputs", "")),
        evaluation=_parse_evaluation(_section(data, "evaluation", "")),
        sweep=_parse_sweep(_section(data, "sweep", "")),
    )
    for i, f in enumerate(config.evaluation.test_functions):
        if f.dimension != model.dimension:
            raise ConfigError(f"evaluation.test_functions[{i}].center",
                              f"has {f.dimension} coordinates, model dimension is {model.dimension}")
    return config


def load_run_config(path) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError("$", f"config file {path} not found") from None
    except json.JSONDecodeError as e:
        raise ConfigError("$", f"invalid JSON in {path} (line {e.lineno}, column {e.colno}): {e.msg}") from None
    return run_config_from_dict(data)


def apply_overrides(config: RunConfig, n: Optional[int] = None, seed: Optional[int] = None,
                    bandwidth: Optional[float] = None) -> RunConfig:
    """CLI overrides for the sweep variables n, seed and h."""
    sampling = config.sampling
    if n is not None:
        if n < 1:
            raise ConfigError("--n", f"must be >= 1, got {n}")
        sampling = replace(sampling, n=int(n))
    if seed is not None:
        sampling = replace(sampling, seed=int(seed))
    band = config.bandwidth
    if bandwidth is not None:
        if not 0 < bandwidth <= 1:
            raise ConfigError("--bandwidth", f"must lie in (0, 1], got {bandwidth}")
        band = BandwidthConfig(rule="explicit", h=float(bandwidth), rate=config.bandwidth.rate)
    return replace(config, sampling=sampling, bandwidth=band)
