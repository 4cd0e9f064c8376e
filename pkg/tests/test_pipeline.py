"""
Pipeline tests — simulate / estimate / evaluate / convergence and CLI exit codes.

All output goes under a temporary LEVY_OUTPUT_ROOT.

Run: pytest tests/test_pipeline.py -v
"""
import copy
import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT))

import pipeline  # noqa: E402
import run_config  # noqa: E402
from field_io import read_field_binary  # noqa: E402
from run_config import ConfigError, run_config_from_dict  # noqa: E402

CPP_MODEL = {
    "dimension": 2,
    "compound_poisson": [{"intensity": 100.0, "jump_mean": [0.0, 0.0], "jump_cov": [[1.0, 0.0], [0.0, 1.0]]}],
}

BASE = {
    "model": CPP_MODEL,
    "sampling": {"delta": 0.001, "n": 5000, "seed": 1},
    "estimator": {"points": 32, "u_max_factor": 2.0},
    "bandwidth": {"rule": "explicit", "h": 0.5},
    "outputs": {"directory": "run"},
    "evaluation": {"metrics": ["sup", "l2", "relative_l2", "trace_sigma"]},
    "sweep": {"n_values": [2000, 20000], "seeds": [0, 1, 2], "workers": 2},
}


@pytest.fixture(autouse=True)
def output_root(tmp_path, monkeypatch):
    root = tmp_path / "runs"
    monkeypatch.setattr(run_config, "OUTPUT_ROOT", str(root))
    return root


def _config(**sections):
    data = copy.deepcopy(BASE)
    for key, value in sections.items():
        data[key] = value
    return data


def _write(tmp_path, data, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


# ── simulate / estimate ────────────────────────────────────────────────────

def test_simulate_writes_sample(output_root):
    files = pipeline.cmd_simulate(run_config_from_dict(BASE))
    assert files["csv"] == output_root / "run" / "sample.csv"
    frame = pd.read_csv(files["csv"])
    assert list(frame.columns) == ["y1", "y2"] and len(frame) == 5000


def test_estimate_writes_fields_and_diagnostics(output_root):
    result = pipeline.cmd_estimate(run_config_from_dict(BASE))
    out = output_root / "run"
    expected = {
        "xsq_nu_hat.bin", "xsq_nu_hat.csv", "nu_hat.bin", "nu_hat.csv",
        "xsq_nu_corrected.bin", "xsq_nu_corrected.csv", "slice_x2_0.csv", "diagnostics.json",
        "truth_xsq_nu.bin", "truth_xsq_nu.csv", "truth_nu.bin", "truth_nu.csv",
    }
    assert set(result["files"]) == expected
    for name in expected:
        assert (out / name).exists(), f"{name} missing"

    diagnostics = json.loads((out / "diagnostics.json").read_text())
    assert diagnostics["bandwidth"] == 0.5 and diagnostics["bandwidth_rule"] == "explicit"
    assert diagnostics["seed"] == 1 and diagnostics["n"] == 5000
    assert diagnostics["components"] == ["cpp(λ=100)"]

    nu = read_field_binary(out / "nu_hat")
    assert nu.mask[nu.grid.zero_index]
    assert np.allclose(nu.values[~nu.mask], result["estimate"].nu_hat.values[~nu.mask])

    truth = read_field_binary(out / "truth_xsq_nu")
    estimate = result["estimate"].xsq_nu_hat
    assert truth.grid.shape == estimate.grid.shape
    assert truth.grid.spacing == pytest.approx(estimate.grid.spacing)
    assert truth.quantity == "xsq_nu" and not truth.mask.any()
    peak = 100.0 * 2.0 * np.exp(-1.0) / (2.0 * np.pi)
    assert truth.values.max() == pytest.approx(peak, rel=0.05)


def test_estimate_skips_truth_without_full_dimensional_reference(output_root):
    one_d = {"dimension": 1, "compound_poisson": [{"intensity": 100.0}]}
    model = {"dimension": 2, "blocks": [{"coordinates": [0], "model": one_d},
                                        {"coordinates": [1], "model": one_d}]}
    blocked = pipeline.cmd_estimate(run_config_from_dict(_config(model=model)))
    assert not any(name.startswith("truth_") for name in blocked["files"])

    config = run_config_from_dict(_config(evaluation={"use_reference": False}, outputs={"directory": "plain"}))
    plain = pipeline.cmd_estimate(config)
    assert not any(name.startswith("truth_") for name in plain["files"])


def test_estimate_from_saved_sample(output_root):
    pipeline.cmd_simulate(run_config_from_dict(BASE))
    stored = str(output_root / "run" / "sample")
    config = run_config_from_dict(_config(sampling={"delta": 0.001, "n": 10, "sample_path": stored},
                                          outputs={"directory": "reuse", "csv": False}))
    result = pipeline.cmd_estimate(config)
    assert result["diagnostics"]["n"] == 5000
    assert not (output_root / "reuse" / "nu_hat.csv").exists()


def test_saved_sample_dimension_must_match_model(output_root):
    pipeline.cmd_simulate(run_config_from_dict(BASE))
    one_d = {"dimension": 1, "compound_poisson": [{"intensity": 10.0}]}
    config = run_config_from_dict(_config(model=one_d, sampling={"sample_path": str(output_root / "run" / "sample")}))
    with pytest.raises(ConfigError):
        pipeline.obtain_sample(config)


# ── evaluate ───────────────────────────────────────────────────────────────

def test_evaluate_reports_metrics(output_root):
    metrics = pipeline.cmd_evaluate(run_config_from_dict(BASE))
    for key in ("n", "seed", "bandwidth", "masked_fraction", "sup_error", "l2_error",
                "relative_l2_error", "trace_sigma", "trace_sigma_truth"):
        assert key in metrics, f"{key} missing"
    assert metrics["trace_sigma_truth"] == 0.0
    written = json.loads((output_root / "run" / "metrics.json").read_text())
    assert written["relative_l2_error"] == pytest.approx(metrics["relative_l2_error"])


def test_evaluate_uses_loaded_sample_horizon(output_root):
    pipeline.cmd_simulate(run_config_from_dict(_config(sampling={"delta": 0.001, "n": 20000, "seed": 5})))
    stored = str(output_root / "run" / "sample")
    config = run_config_from_dict(_config(sampling={"delta": 0.001, "n": 500000, "sample_path": stored},
                                          bandwidth={"rule": "sim_default"},
                                          outputs={"directory": "reuse"}))
    metrics = pipeline.evaluate_run(config)
    assert metrics["n"] == 20000 and metrics["seed"] == 5
    assert metrics["bandwidth"] == pytest.approx(4.0 / np.sqrt(20.0))
    assert metrics["bandwidth"] == pipeline.cmd_estimate(config)["diagnostics"]["bandwidth"]


def test_metrics_file_is_deterministic(output_root):
    for directory in ("first", "second"):
        pipeline.cmd_evaluate(run_config_from_dict(_config(outputs={"directory": directory})))
    first = (output_root / "first" / "metrics.json").read_bytes()
    assert first == (output_root / "second" / "metrics.json").read_bytes()


def test_truth_as_estimate_has_zero_pointwise_error():
    evaluation = {
        "metrics": ["sup", "l2", "relative_l2", "functional"],
        "use_truth_as_estimate": True,
        "test_functions": [{"center": [1.0, 0.0], "width": 0.5}],
    }
    config = run_config_from_dict(_config(evaluation=evaluation,
                                          estimator={"points": 256, "u_max_factor": 16.0}))
    metrics = pipeline.evaluate_run(config)
    assert metrics["sup_error"] <= 1e-12
    assert metrics["l2_error"] <= 1e-12
    assert metrics["relative_l2_error"] <= 1e-12
    reference = metrics["functional_0_reference"]
    assert reference > 0
    assert abs(metrics["functional_0_error"]) <= 0.05 * reference
    assert "masked_fraction" not in metrics


def test_block_model_skips_pointwise_metrics(caplog):
    one_d = {"dimension": 1, "compound_poisson": [{"intensity": 100.0}]}
    model = {"dimension": 2, "blocks": [{"coordinates": [0], "model": one_d},
                                        {"coordinates": [1], "model": one_d}]}
    evaluation = {"metrics": ["sup", "functional"], "test_functions": [{"center": [1.0, 0.0], "width": 0.5}]}
    metrics = pipeline.evaluate_run(run_config_from_dict(_config(model=model, evaluation=evaluation)))
    assert "sup_error" not in metrics
    assert "undefined for a block model" in caplog.text
    assert metrics["functional_0_reference"] > 0
    assert np.isfinite(metrics["functional_0_estimate"])


def test_evaluate_needs_reference():
    config = run_config_from_dict(_config(evaluation={"use_reference": False}))
    with pytest.raises(ConfigError):
        pipeline.evaluate_run(config)


# ── convergence ────────────────────────────────────────────────────────────

def test_convergence_sweep_outputs(output_root):
    summary = pipeline.cmd_convergence(run_config_from_dict(BASE))
    table = pd.read_csv(output_root / "run" / "convergence.csv")
    assert len(table) == 6
    assert table["n"].tolist() == [2000, 2000, 2000, 20000, 20000, 20000]
    assert table["seed"].tolist() == [0, 1, 2, 0, 1, 2]
    assert summary["metric"] == "relative_l2_error"
    assert summary["n_values"] == [2000, 20000] and summary["seeds"] == 3
    assert set(summary["medians"]) == {"2000", "20000"}
    written = json.loads((output_root / "run" / "convergence.json").read_text())
    assert written["medians"] == pytest.approx(summary["medians"])


def test_convergence_summary_slope():
    table = pd.DataFrame({
        "n": [100, 100, 10_000, 10_000],
        "seed": [0, 1, 0, 1],
        "relative_l2_error": [0.1, 0.1, 0.01, 0.01],
    })
    summary = pipeline.convergence_summary(table)
    assert summary["slope"] == pytest.approx(-0.5)
    assert summary["monotone_decreasing"] is True
    assert summary["medians"] == {"100": 0.1, "10000": 0.01}


def test_convergence_rejects_fixed_sample_and_truth_mode():
    with pytest.raises(ConfigError):
        pipeline.cmd_convergence(run_config_from_dict(_config(sampling={"sample_path": "x"})))
    with pytest.raises(ConfigError):
        pipeline.cmd_convergence(run_config_from_dict(_config(evaluation={"use_truth_as_estimate": True})))


# ── CLI ────────────────────────────────────────────────────────────────────

def test_cli_estimate_succeeds(tmp_path, output_root):
    code = pipeline.main(["estimate", "--config", _write(tmp_path, BASE), "--n", "3000", "--seed", "4"])
    assert code == pipeline.EXIT_OK
    diagnostics = json.loads((output_root / "run" / "diagnostics.json").read_text())
    assert diagnostics["n"] == 3000 and diagnostics["seed"] == 4


def test_cli_bandwidth_override(tmp_path, output_root):
    data = _config(bandwidth={"rule": "sim_default"})
    assert pipeline.main(["estimate", "--config", _write(tmp_path, data), "--bandwidth", "0.25"]) == 0
    diagnostics = json.loads((output_root / "run" / "diagnostics.json").read_text())
    assert diagnostics["bandwidth"] == 0.25 and diagnostics["bandwidth_rule"] == "explicit"


@pytest.mark.parametrize("data", [
    {"sampling": {"n": 10}},
    _config(model={"dimension": 2, "compound_poisson": [{"intensity": -5.0}]}),
    _config(bandwidth={"rule": "mild", "rate": {"s": 2.0}}, sampling={"delta": 0.001, "n": 10}),
], ids=["missing_model", "bad_intensity", "horizon_too_short"])
def test_cli_configuration_errors_exit_2(tmp_path, data):
    assert pipeline.main(["estimate", "--config", _write(tmp_path, data)]) == pipeline.EXIT_CONFIG


def test_cli_missing_config_exits_2(tmp_path):
    assert pipeline.main(["simulate", "--config", str(tmp_path / "nope.json")]) == pipeline.EXIT_CONFIG


def test_cli_capacity_error_exits_3(tmp_path):
    model = {"dimension": 1, "compound_poisson": [{"intensity": 1e12}]}
    data = _config(model=model, sampling={"delta": 0.01, "n": 1})
    assert pipeline.main(["simulate", "--config", _write(tmp_path, data)]) == pipeline.EXIT_CAPACITY


def test_cli_requires_command():
    with pytest.raises(SystemExit):
        pipeline.main([])
