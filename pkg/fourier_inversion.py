"""
Continuous Fourier inversion on tensor grids

    F^{−1}[g](x) = (2π)^{−d} ∫ exp(−i⟨u, x⟩) g(u) du

approximated by the rectangle rule on the half-open symmetric frequency grid
{−M/2, …, M/2−1}·Δu. The spatial grid is the FFT dual, Δx·Δu = 2π/M, so the
FFT path evaluates exactly the same Riemann sum as the direct quadrature:

    f(x_l) = (Δu/2π)^d Σ_j exp(−i⟨u_j, x_l⟩) g_j
           = (Δu/2π)^d · fftshift(fftn(ifftshift(g)))[l]

Memory contract: d ≤ 3 and at most 2^26 nodes (enforced by FreqGrid).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from characteristic_function import MAX_DIMENSION, MAX_GRID_NODES, ComplexField, FreqGrid
from levy_errors import CapacityError, ConfigurationError, InvalidInputError

logger = logging.getLogger(__name__)

QUADRATURE_POINT_CHUNK = 256
IMAG_WARN_RATIO = 1e-6


@dataclass(frozen=True)
class SpaceGrid:
    """Tensor grid {−M/2, …, M/2−1}·Δx per axis."""
    dimension: int
    points: int
    spacing: float

    def __post_init__(self):
        if not 1 <= self.dimension <= MAX_DIMENSION:
            raise CapacityError(f"dimension {self.dimension} outside the supported range 1..{MAX_DIMENSION}")
        if self.points < 2 or self.points % 2:
            raise ConfigurationError(f"points per axis must be even and >= 2, got {self.points}")
        if self.points ** self.dimension > MAX_GRID_NODES:
            raise CapacityError(f"{self.points}^{self.dimension} grid nodes exceed {MAX_GRID_NODES}")
        if not (np.isfinite(self.spacing) and self.spacing > 0):
            raise ConfigurationError(f"spacing must be > 0, got {self.spacing}")

    @classmethod
    def dual(cls, grid: FreqGrid) -> "SpaceGrid":
        return cls(dimension=grid.dimension, points=grid.points,
                   spacing=2.0 * np.pi / (grid.points * grid.spacing))

    @property
    def extent(self) -> float:
        """Half-width of the grid (the most negative node sits at −extent)."""
        return self.points // 2 * self.spacing

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dimension

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.points,) * self.dimension

    @property
    def zero_index(self) -> Tuple[int, ...]:
        return (self.points // 2,) * self.dimension

    def axis(self) -> np.ndarray:
        return (np.arange(self.points) - self.points // 2) * self.spacing

    def mesh(self) -> List[np.ndarray]:
        return np.meshgrid(*([self.axis()] * self.dimension), indexing="ij")

    def nodes(self) -> np.ndarray:
        return np.stack([m.reshape(-1) for m in self.mesh()], axis=1)

    def norms(self) -> np.ndarray:
        return np.sqrt(sum(m ** 2 for m in self.mesh()))


@dataclass(eq=False)
class DensityField:
    """Real values on a SpaceGrid. ``mask`` flags nodes where the quantity is undefined."""
    grid: SpaceGrid
    values: np.ndarray
    quantity: str
    mask: Optional[np.ndarray] = None
    imag_residual: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ConfigurationError(f"field shape {self.values.shape} does not match grid {self.grid.shape}")
        if self.mask is None:
            self.mask = np.zeros(self.grid.shape, dtype=bool)
        if not np.all(np.isfinite(self.values[~self.mask])):
            raise InvalidInputError(f"{self.quantity} has non-finite values at defined nodes")

    def clamped(self) -> "DensityField":
        """Negative parts set to 0 (masked nodes untouched)."""
        values = np.where(self.mask, self.values, np.maximum(self.values, 0.0))
        return DensityField(self.grid, values, self.quantity, self.mask.copy(), self.imag_residual)

    def at(self, index) -> float:
        return float(self.values[tuple(index)])


@dataclass(eq=False)
class SpatialField:
    """Complex output of an inverse transform, before the real part is taken."""
    grid: SpaceGrid
    values: np.ndarray

    @property
    def imag_residual(self) -> float:
        """max|Im| relative to max|Re| (0 when the real part vanishes too)."""
        re = float(np.max(np.abs(self.values.real))) if self.values.size else 0.0
        im = float(np.max(np.abs(self.values.imag))) if self.values.size else 0.0
        if re == 0.0:
            return 0.0 if im == 0.0 else float("inf")
        return im / re

    def density(self, quantity: str, sign: float = 1.0) -> DensityField:
        residual = self.imag_residual
        if residual > IMAG_WARN_RATIO:
            logger.warning(f"[Fourier] {quantity}: imaginary residual {residual:.2e} of the real part")
        return DensityField(self.grid, sign * self.values.real, quantity, imag_residual=residual)


def _check_field(field: ComplexField):
    grid = field.grid
    if not isinstance(grid, FreqGrid):
        raise ConfigurationError("inverse transform needs a field on a symmetric FreqGrid")
    if field.values.shape != grid.shape:
        raise ConfigurationError("field values do not match the grid shape")


def inverse_fourier_fft(field: ComplexField) -> SpatialField:
    """Rectangle-rule F^{−1} on the dual SpaceGrid via a shifted n-dimensional FFT."""
    _check_field(field)
    grid = field.grid
    weight = (grid.spacing / (2.0 * np.pi)) ** grid.dimension
    transformed = np.fft.fftshift(np.fft.fftn(np.fft.ifftshift(field.values)))
    return SpatialField(SpaceGrid.dual(grid), weight * transformed)


def inverse_fourier_quadrature(field: ComplexField, points) -> np.ndarray:
    """The same Riemann sum evaluated directly at arbitrary spatial points (m, d)."""
    _check_field(field)
    grid = field.grid
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != grid.dimension:
        raise InvalidInputError(f"points must have {grid.dimension} columns, got {pts.shape[1]}")
    nodes = grid.nodes()
    g = field.values.reshape(-1)
    weight = (grid.spacing / (2.0 * np.pi)) ** grid.dimension
    out = np.empty(pts.shape[0], dtype=complex)
    for lo in range(0, pts.shape[0], QUADRATURE_POINT_CHUNK):
        chunk = pts[lo:lo + QUADRATURE_POINT_CHUNK]
        out[lo:lo + QUADRATURE_POINT_CHUNK] = np.exp(-1j * chunk @ nodes.T) @ g
    return weight * out


def forward_fourier_quadrature(values: np.ndarray, grid: SpaceGrid, freq_points) -> np.ndarray:
    """F[f](u) = Σ_x exp(i⟨u, x⟩) f(x) Δx^d at arbitrary frequencies (m, d)."""
    values = np.asarray(values)
    if values.shape != grid.shape:
        raise ConfigurationError(f"values shape {values.shape} does not match grid {grid.shape}")
    pts = np.atleast_2d(np.asarray(freq_points, dtype=float))
    nodes = grid.nodes()
    f = values.reshape(-1)
    out = np.empty(pts.shape[0], dtype=complex)
    for lo in range(0, pts.shape[0], QUADRATURE_POINT_CHUNK):
        chunk = pts[lo:lo + QUADRATURE_POINT_CHUNK]
        out[lo:lo + QUADRATURE_POINT_CHUNK] = np.exp(1j * chunk @ nodes.T) @ f
    return grid.cell_volume * out
