"""
Fourier inversion tests — FFT path, direct quadrature, transform pairs.

Run: pytest tests/test_fourier_inversion.py -v
"""
import logging
import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT))

from characteristic_function import ComplexField, FreqGrid  # noqa: E402
from fourier_inversion import (  # noqa: E402
    DensityField, SpaceGrid, forward_fourier_quadrature, inverse_fourier_fft,
    inverse_fourier_quadrature,
)
from levy_errors import ConfigurationError, InvalidInputError  # noqa: E402


def _gaussian_field(grid: FreqGrid) -> ComplexField:
    return ComplexField(grid, np.exp(-0.5 * grid.norms() ** 2))


# ── Grids ──────────────────────────────────────────────────────────────────

def test_dual_grid_spacing():
    grid = FreqGrid(2, 12.0, 256)
    space = SpaceGrid.dual(grid)
    assert space.points == 256
    assert space.spacing * grid.spacing * grid.points == pytest.approx(2 * np.pi)
    assert space.extent == pytest.approx(128 * space.spacing)


def test_space_grid_validation():
    with pytest.raises(ConfigurationError):
        SpaceGrid(dimension=1, points=9, spacing=0.1)
    with pytest.raises(ConfigurationError):
        SpaceGrid(dimension=1, points=8, spacing=-0.1)


# ── Transform pairs ────────────────────────────────────────────────────────

@pytest.mark.parametrize("d,points", [(1, 4096), (2, 256)])
def test_gaussian_transform_pair(d, points):
    """F^{−1}[exp(−|u|²/2)] = (2π)^{−d/2} exp(−|x|²/2)."""
    grid = FreqGrid(d, 12.0, points)
    density = inverse_fourier_fft(_gaussian_field(grid)).density("gaussian")
    expected = (2 * np.pi) ** (-d / 2) * np.exp(-0.5 * density.grid.norms() ** 2)
    assert np.max(np.abs(density.values - expected)) < 1e-12
    assert density.imag_residual < 1e-12


def test_forward_quadrature_recovers_transform():
    grid = FreqGrid(2, 12.0, 256)
    density = inverse_fourier_fft(_gaussian_field(grid)).density("gaussian")
    u = np.array([[0.0, 0.0], [1.0, -0.5], [2.0, 2.0]])
    recovered = forward_fourier_quadrature(density.values, density.grid, u)
    assert np.allclose(recovered, np.exp(-0.5 * np.sum(u ** 2, axis=1)), atol=1e-12)


def test_shifted_gaussian_transform_pair():
    """exp(i u a) g(u) inverts to the density translated by a."""
    grid = FreqGrid(1, 12.0, 4096)
    a = 1.5
    field = ComplexField(grid, np.exp(1j * a * grid.axis() - 0.5 * grid.axis() ** 2))
    density = inverse_fourier_fft(field).density("shifted")
    x = density.grid.axis()
    assert np.max(np.abs(density.values - np.exp(-0.5 * (x - a) ** 2) / np.sqrt(2 * np.pi))) < 1e-12


# ── FFT against direct quadrature ──────────────────────────────────────────

@pytest.mark.parametrize("d,points", [(1, 64), (2, 32), (3, 8)])
def test_fft_matches_direct_quadrature(d, points):
    rng = np.random.default_rng(d)
    grid = FreqGrid(d, 3.0, points)
    values = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    field = ComplexField(grid, values)

    spatial = inverse_fourier_fft(field)
    direct = inverse_fourier_quadrature(field, spatial.grid.nodes())
    scale = np.abs(direct).max()
    assert np.allclose(spatial.values.reshape(-1), direct, atol=1e-11 * scale)


@pytest.mark.parametrize("d,points", [(1, 64), (2, 32), (3, 8)])
def test_hermitian_input_gives_real_output(d, points):
    rng = np.random.default_rng(10 + d)
    grid = FreqGrid(d, 3.0, points)
    raw = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    # u ↦ −u on the centred grid; the −u_max row pairs with itself
    mirror = (points - np.arange(points)) % points
    hermitian = raw + np.conj(raw[np.ix_(*([mirror] * d))])

    spatial = inverse_fourier_fft(ComplexField(grid, hermitian))
    assert spatial.imag_residual <= 1e-9
    direct = inverse_fourier_quadrature(ComplexField(grid, hermitian), spatial.grid.nodes())
    assert np.abs(direct.imag).max() <= 1e-9 * np.abs(direct.real).max()


def test_quadrature_rejects_wrong_point_dimension():
    field = _gaussian_field(FreqGrid(2, 4.0, 16))
    with pytest.raises(InvalidInputError):
        inverse_fourier_quadrature(field, [[0.0, 0.0, 0.0]])


def test_forward_quadrature_rejects_shape_mismatch():
    with pytest.raises(ConfigurationError):
        forward_fourier_quadrature(np.zeros(8), SpaceGrid(1, 16, 0.1), [[0.0]])


# ── Real part and residuals ────────────────────────────────────────────────

def test_non_hermitian_input_warns(caplog):
    grid = FreqGrid(1, 12.0, 512)
    field = ComplexField(grid, (1.0 + 1.0j) * np.exp(-0.5 * grid.axis() ** 2))
    with caplog.at_level(logging.WARNING, logger="fourier_inversion"):
        density = inverse_fourier_fft(field).density("skewed")
    assert density.imag_residual == pytest.approx(1.0, rel=1e-9)
    assert "imaginary residual" in caplog.text


def test_negated_density():
    grid = FreqGrid(1, 12.0, 512)
    spatial = inverse_fourier_fft(_gaussian_field(grid))
    assert np.allclose(spatial.density("neg", sign=-1.0).values, -spatial.values.real)


# ── DensityField ───────────────────────────────────────────────────────────

def test_density_clamp_keeps_masked_nodes():
    grid = SpaceGrid(1, 4, 1.0)
    mask = np.array([False, True, False, False])
    field = DensityField(grid, np.array([-1.0, np.nan, 2.0, -0.5]), "nu", mask=mask)
    clamped = field.clamped()
    assert clamped.values[0] == 0.0 and clamped.values[2] == 2.0 and clamped.values[3] == 0.0
    assert np.isnan(clamped.values[1]) and clamped.mask[1]
    assert field.at((2,)) == 2.0


def test_density_rejects_nan_at_defined_nodes():
    with pytest.raises(InvalidInputError):
        DensityField(SpaceGrid(1, 4, 1.0), np.array([0.0, np.nan, 0.0, 0.0]), "nu")
