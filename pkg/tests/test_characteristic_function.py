"""
Empirical characteristic function tests — grid sums, derivatives, Δψ̂.

Grid evaluations are checked against the direct per-point sums, derivatives
against finite differences of φ̂, and Δψ̂ against its closed form at the
origin for a compound Poisson sample.

Run: pytest tests/test_characteristic_function.py -v
"""
import json
import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT))

import characteristic_function as cf  # noqa: E402
from characteristic_function import (  # noqa: E402
    ComplexField, FreqGrid, ecf, ecf_at_points, ecf_derivatives, ecf_derivatives_at_points,
    ecf_weight, psi_laplacian_hat, weighted_sup_deviation,
)
from levy_errors import CapacityError, ConfigurationError, InvalidInputError  # noqa: E402
from levy_simulator import IncrementSample, simulate_compound_poisson, simulate_model  # noqa: E402
from reference_models import ReferenceModel, true_cf  # noqa: E402

with open(ROOT / "tests" / "fixtures" / "reference_values.json") as f:
    REFERENCE = json.load(f)

SIGMAS = REFERENCE["tolerance"]["monte_carlo_sigmas"]


def _gaussian_sample(n=200, d=2, seed=0, scale=0.7):
    rng = np.random.default_rng(seed)
    return IncrementSample(delta=0.01, values=scale * rng.standard_normal((n, d)))


# ── Grid ───────────────────────────────────────────────────────────────────

def test_grid_axis_is_half_open_and_centred():
    grid = FreqGrid(dimension=1, u_max=2.0, points=8)
    assert grid.spacing == pytest.approx(0.5)
    assert np.allclose(grid.axis(), [-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5])
    assert grid.axis()[grid.zero_index[0]] == 0.0


@pytest.mark.parametrize("kwargs,error", [
    ({"dimension": 4, "u_max": 1.0, "points": 8}, CapacityError),
    ({"dimension": 3, "u_max": 1.0, "points": 1024}, CapacityError),
    ({"dimension": 2, "u_max": 1.0, "points": 7}, ConfigurationError),
    ({"dimension": 2, "u_max": 0.0, "points": 8}, ConfigurationError),
])
def test_grid_rejects_bad_shapes(kwargs, error):
    with pytest.raises(error):
        FreqGrid(**kwargs)


# ── φ̂ and its derivatives ─────────────────────────────────────────────────

def test_values_at_origin_are_sample_moments():
    sample = _gaussian_sample()
    grid = FreqGrid(2, 3.0, 16)
    phi = ecf(sample, grid)
    grad, lap = ecf_derivatives(sample, grid)
    y = sample.values
    assert phi.at_zero() == pytest.approx(1.0, abs=1e-12)
    for j in range(2):
        assert grad[j].at_zero() == pytest.approx(1j * y[:, j].mean(), abs=1e-12)
    assert lap.at_zero() == pytest.approx(-np.mean(np.sum(y ** 2, axis=1)), abs=1e-12)


def test_ecf_is_bounded_and_hermitian():
    sample = _gaussian_sample(d=2)
    phi = ecf(sample, FreqGrid(2, 5.0, 32))
    assert np.all(np.abs(phi.values) <= 1.0 + 1e-12)
    at_u, at_minus_u = phi.mirrored_pairs()
    assert np.allclose(at_u, np.conj(at_minus_u), atol=1e-12)


@pytest.mark.parametrize("d,points", [(1, 64), (2, 16), (3, 8)])
def test_grid_sums_match_pointwise_sums(d, points):
    sample = _gaussian_sample(n=150, d=d, seed=d)
    grid = FreqGrid(d, 4.0, points)
    nodes = grid.nodes()

    phi_pts, grad_pts, lap_pts = ecf_derivatives_at_points(sample, nodes)
    grad, lap = ecf_derivatives(sample, grid)
    failures = []
    if not np.allclose(ecf(sample, grid).values.reshape(-1), phi_pts, atol=1e-12):
        failures.append("phi")
    if not np.allclose(ecf_at_points(sample, nodes), phi_pts, atol=1e-12):
        failures.append("phi (ecf_at_points)")
    for j in range(d):
        if not np.allclose(grad[j].values.reshape(-1), grad_pts[j], atol=1e-12):
            failures.append(f"grad[{j}]")
    if not np.allclose(lap.values.reshape(-1), lap_pts, atol=1e-11):
        failures.append("laplacian")
    if failures:
        pytest.fail(f"grid and pointwise sums disagree for d={d}:\n" + "\n".join(failures))


def test_chunk_size_does_not_change_result(monkeypatch):
    sample = _gaussian_sample(n=301)
    grid = FreqGrid(2, 3.0, 16)
    baseline = psi_laplacian_hat(sample, grid)
    monkeypatch.setattr(cf, "ECF_CHUNK", 7)
    chunked = psi_laplacian_hat(sample, grid)
    assert np.allclose(baseline.values, chunked.values, rtol=1e-12, atol=1e-12)
    assert np.array_equal(baseline.mask, chunked.mask)


def test_derivatives_match_finite_differences():
    sample = _gaussian_sample(n=50, d=2, seed=3)
    u = np.array([[0.4, -1.1], [1.7, 0.3], [-0.6, 2.2]])
    phi, grad, lap = ecf_derivatives_at_points(sample, u)

    step_1, step_2 = 1e-5, 1e-4
    fd_lap = -2.0 * sample.dimension * phi
    for j in range(sample.dimension):
        e = np.zeros(sample.dimension)
        e[j] = 1.0
        fd_grad = (ecf_at_points(sample, u + step_1 * e) - ecf_at_points(sample, u - step_1 * e)) / (2 * step_1)
        assert np.allclose(grad[j], fd_grad, atol=1e-6), f"∂_{j} φ̂ disagrees with central difference"
        fd_lap = fd_lap + ecf_at_points(sample, u + step_2 * e) + ecf_at_points(sample, u - step_2 * e)
    fd_lap = fd_lap / step_2 ** 2
    assert np.allclose(lap, fd_lap, atol=1e-6 * max(1.0, np.abs(lap).max()))


# ── Δψ̂ ───────────────────────────────────────────────────────────────────

def test_psi_laplacian_matches_closed_form_away_from_mask():
    sample = _gaussian_sample(n=400, d=2, seed=5, scale=0.3)
    grid = FreqGrid(2, 4.0, 16)
    field = psi_laplacian_hat(sample, grid)

    phi, grad, lap = ecf_derivatives_at_points(sample, grid.nodes())
    expected = (phi * lap - np.sum(grad ** 2, axis=0)) / (sample.delta * phi ** 2)
    keep = ~field.mask.reshape(-1)
    assert keep.any()
    got = field.values.reshape(-1)[keep]
    assert np.allclose(got, expected[keep], rtol=1e-8, atol=1e-8 * np.abs(expected[keep]).max())


def test_psi_laplacian_masks_small_ecf():
    """Y = (0, π), δ = 1: T^{−1/2} ≈ 0.71 and φ̂ vanishes at u = 1."""
    sample = IncrementSample(delta=1.0, values=np.array([[0.0], [np.pi]]))
    grid = FreqGrid(1, 2.0, 8)
    field = psi_laplacian_hat(sample, grid)
    index_one = int(np.argmin(np.abs(grid.axis() - 1.0)))
    assert field.mask[index_one]
    assert field.values[index_one] == 0
    assert not field.mask[grid.zero_index]


def test_psi_laplacian_is_drift_invariant():
    sample = _gaussian_sample(n=500, d=2, seed=11, scale=0.1)
    grid = FreqGrid(2, 6.0, 16)
    base = psi_laplacian_hat(sample, grid)
    moved = psi_laplacian_hat(sample.shifted([5.0, -3.0]), grid)
    assert np.array_equal(base.mask, moved.mask)
    scale = np.abs(base.values).max()
    assert np.allclose(base.values, moved.values, rtol=1e-8, atol=1e-10 * scale)


def test_psi_laplacian_at_origin_estimates_jump_second_moment():
    """For compound Poisson, Δψ(0) = −λ E|ξ|²; Δψ̂(0) = −(sample variance sum)/δ."""
    exp = REFERENCE["experiments"]["cpp"]
    sample = simulate_compound_poisson(exp["intensity"], [0.0, 0.0], np.eye(2),
                                       delta=exp["delta"], n=exp["n_reduced"], seed=7)
    field = psi_laplacian_hat(sample, FreqGrid(2, 2.0, 8))
    estimate = field.at_zero()
    centred = sample.values - sample.values.mean(axis=0)
    sq = np.sum(centred ** 2, axis=1) / sample.delta
    se = sq.std(ddof=1) / np.sqrt(sample.n)

    assert abs(estimate.imag) < 1e-9 * abs(estimate.real)
    assert abs(estimate.real - REFERENCE["values"]["cpp_psi_laplacian_at_origin_2d"]) <= SIGMAS * se


# ── Errors ─────────────────────────────────────────────────────────────────

def test_missing_sample_is_rejected():
    with pytest.raises(InvalidInputError):
        ecf(None, FreqGrid(1, 1.0, 8))
    with pytest.raises(InvalidInputError):
        ecf_at_points(None, [[0.0]])


def test_dimension_mismatch_is_rejected():
    with pytest.raises(ConfigurationError):
        ecf(_gaussian_sample(d=2), FreqGrid(1, 1.0, 8))
    with pytest.raises(InvalidInputError):
        ecf_at_points(_gaussian_sample(d=2), [[0.0, 0.0, 0.0]])


def test_field_rejects_wrong_shape():
    with pytest.raises(ConfigurationError):
        ComplexField(FreqGrid(1, 1.0, 8), np.zeros(6))


# ── Uniform risk diagnostics ───────────────────────────────────────────────

def test_ecf_weight_is_one_at_origin_and_decays():
    grid = FreqGrid(1, 50.0, 100)
    w = ecf_weight(grid, chi=0.5)
    assert w[grid.zero_index] == pytest.approx(1.0)
    assert np.all(w <= 1.0 + 1e-15)
    assert w[0] < w[grid.zero_index[0] - 1]
    with pytest.raises(ConfigurationError):
        ecf_weight(grid, chi=0.0)


def test_weighted_sup_deviation_of_constant_offset():
    sample = _gaussian_sample(d=1)
    field = ecf(sample, FreqGrid(1, 5.0, 32))
    assert weighted_sup_deviation(field, field.values) == 0.0
    # the weight peaks at u = 0, so a constant offset is seen at full size there
    assert weighted_sup_deviation(field, field.values + 0.25) == pytest.approx(0.25)


def test_weighted_sup_error_decays_at_root_n():
    params = REFERENCE["experiments"]["cpp"]
    model = ReferenceModel.cpp_gaussian(params["intensity"], [0.0, 0.0], np.eye(2))
    grid = FreqGrid(2, 4.0, 16)
    truth = true_cf(model, params["delta"], grid.nodes())
    sizes = [1_000, 10_000, 100_000]
    means = []
    for n in sizes:
        errors = [
            weighted_sup_deviation(
                ecf(simulate_compound_poisson(params["intensity"], [0.0, 0.0], np.eye(2), params["delta"], n, seed),
                    grid),
                truth,
            )
            for seed in range(20)
        ]
        means.append(np.mean(errors))
    slope = np.polyfit(np.log(sizes), np.log(means), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.1), f"means {means}"


def _one_d_cpp():
    return ReferenceModel.cpp_gaussian(100.0, [0.0], [[1.0]])


@pytest.mark.parametrize("model", [
    ReferenceModel.variance_gamma(1.0, dimension=2),
    ReferenceModel.blocks([([0], _one_d_cpp()), ([1], _one_d_cpp())]),
], ids=["variance_gamma", "blocks"])
def test_ecf_tracks_true_cf_of_simulated_model(model):
    delta, n = 0.001, 10_000
    rng = np.random.default_rng(17)
    directions = rng.standard_normal((20, 2))
    u = 2.0 * rng.uniform(size=(20, 1)) * directions / np.linalg.norm(directions, axis=1, keepdims=True)
    truth = true_cf(model, delta, u)
    deviations = [
        float(np.max(np.abs(ecf_at_points(simulate_model(model.spec, delta, n, seed), u) - truth)))
        for seed in range(5)
    ]
    assert np.median(deviations) <= SIGMAS / np.sqrt(n), f"deviations {deviations}"
