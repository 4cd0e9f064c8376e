"""
Empirical characteristic function on frequency grids

Evaluates, by exact direct summation over the increments,

    φ̂(u)    = (1/n) Σ_k exp(i⟨u, Y_k⟩)
    ∂_j φ̂(u) = (1/n) Σ_k i Y_kj exp(i⟨u, Y_k⟩)
    Δφ̂(u)   = −(1/n) Σ_k |Y_k|² exp(i⟨u, Y_k⟩)

and the plug-in estimate of the Laplacian of the characteristic exponent

    Δψ̂(u) = [φ̂Δφ̂ − (∇φ̂)²] / (δ φ̂²) · 1{|φ̂| ≥ T^{−1/2}}

with (∇φ̂)² = Σ_j (∂_j φ̂)² (complex squares, not moduli).

Grid sums use separability, exp(i⟨u,Y⟩) = Π_j exp(i u_j Y_j): for each chunk
of increments the per-axis factor matrices are contracted over k with BLAS.
Chunks are visited in increment order so results do not depend on threads.

Exposed:  FreqGrid, ComplexField, ecf, ecf_derivatives, psi_laplacian_hat,
          ecf_at_points, ecf_derivatives_at_points, ecf_weight,
          weighted_sup_deviation
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from levy_errors import CapacityError, ConfigurationError, InvalidInputError
from levy_simulator import IncrementSample

logger = logging.getLogger(__name__)

# ── Configuration ──────────────────────────────────────────────────────────
ECF_CHUNK = int(os.environ.get("LEVY_ECF_CHUNK", "20000"))   # increments per BLAS pass
MAX_GRID_NODES = 2 ** 26
MAX_DIMENSION = 3
MASKED_WARN_FRACTION = 0.5


# ── Grid and field types ───────────────────────────────────────────────────

@dataclass(frozen=True)
class FreqGrid:
    """Tensor grid {−M/2, …, M/2−1}·Δu per axis with Δu = 2·u_max/M."""
    dimension: int
    u_max: float
    points: int

    def __post_init__(self):
        if not 1 <= self.dimension <= MAX_DIMENSION:
            raise CapacityError(f"dimension {self.dimension} outside the supported range 1..{MAX_DIMENSION}")
        if self.points < 2 or self.points % 2:
            raise ConfigurationError(f"points per axis must be even and >= 2, got {self.points}")
        if not (np.isfinite(self.u_max) and self.u_max > 0):
            raise ConfigurationError(f"u_max must be > 0, got {self.u_max}")
        if self.points ** self.dimension > MAX_GRID_NODES:
            raise CapacityError(f"{self.points}^{self.dimension} grid nodes exceed {MAX_GRID_NODES}")

    @property
    def spacing(self) -> float:
        return 2.0 * self.u_max / self.points

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
        """All nodes as an (M^d, d) array in row-major order."""
        return np.stack([m.reshape(-1) for m in self.mesh()], axis=1)

    def norms(self) -> np.ndarray:
        return np.sqrt(sum(m ** 2 for m in self.mesh()))

    def covers(self, radius: float) -> bool:
        """True when [−radius, radius]^d lies inside the grid's span."""
        return self.u_max * (1.0 + 1e-12) >= radius


@dataclass(eq=False)
class ComplexField:
    """Complex values on a FreqGrid; ``mask`` flags nodes where the value is not defined."""
    grid: FreqGrid
    values: np.ndarray
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != self.grid.shape:
            raise ConfigurationError(f"field shape {self.values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise InvalidInputError("field has non-finite values")
        if self.mask is None:
            self.mask = np.zeros(self.grid.shape, dtype=bool)

    @property
    def masked_fraction(self) -> float:
        return float(self.mask.mean())

    def at_zero(self) -> complex:
        return complex(self.values[self.grid.zero_index])

    def mirrored_pairs(self) -> Tuple[np.ndarray, np.ndarray]:
        """(values at u, values at −u) over the nodes whose mirror lies on the half-open grid."""
        interior = self.values[(slice(1, None),) * self.grid.dimension]
        flipped = interior[(slice(None, None, -1),) * self.grid.dimension]
        return interior, flipped


# ── Direct sums ────────────────────────────────────────────────────────────

def _require_sample(sample: IncrementSample, dimension: int):
    if sample is None or sample.n < 1:
        raise InvalidInputError("empirical characteristic function needs a nonempty sample")
    if sample.dimension != dimension:
        raise ConfigurationError(f"sample dimension {sample.dimension} != grid dimension {dimension}")


def _chunk_rows(grid: FreqGrid) -> int:
    if grid.dimension == 3:
        return max(1, min(ECF_CHUNK, 2 ** 22 // grid.points ** 2))
    return max(1, ECF_CHUNK)


def _contract(weights: np.ndarray, factors: List[np.ndarray]) -> np.ndarray:
    """Σ_k w_k Π_j F_j[k, a_j] for d = 1, 2, 3 per-axis factor matrices."""
    first = factors[0] * weights[:, None]
    if len(factors) == 1:
        return first.sum(axis=0)
    if len(factors) == 2:
        return first.T @ factors[1]
    k, m = first.shape
    outer = (first[:, :, None] * factors[1][:, None, :]).reshape(k, m * m)
    return (outer.T @ factors[2]).reshape(m, m, m)


def _grid_sums(values: np.ndarray, grid: FreqGrid, derivatives: bool):
    """Accumulate φ̂·n, ∇φ̂·n, Δφ̂·n over increment chunks in order."""
    axis = grid.axis()
    d = grid.dimension
    phi = np.zeros(grid.shape, dtype=complex)
    grad = [np.zeros(grid.shape, dtype=complex) for _ in range(d)] if derivatives else []
    lap = np.zeros(grid.shape, dtype=complex) if derivatives else None
    step = _chunk_rows(grid)

    for lo in range(0, values.shape[0], step):
        y = values[lo:lo + step]
        factors = [np.exp(1j * np.outer(y[:, j], axis)) for j in range(d)]
        ones = np.ones(y.shape[0])
        phi += _contract(ones, factors)
        if derivatives:
            for j in range(d):
                grad[j] += _contract(1j * y[:, j], factors)
            lap += _contract(-np.einsum("kj,kj->k", y, y), factors)
    return phi, grad, lap


def ecf(sample: IncrementSample, grid: FreqGrid) -> ComplexField:
    """φ̂ at every grid node."""
    _require_sample(sample, grid.dimension)
    phi, _, _ = _grid_sums(sample.values, grid, derivatives=False)
    return ComplexField(grid, phi / sample.n)


def ecf_derivatives(sample: IncrementSample, grid: FreqGrid) -> Tuple[List[ComplexField], ComplexField]:
    """(∂_1 φ̂, …, ∂_d φ̂) and Δφ̂ at every grid node."""
    _require_sample(sample, grid.dimension)
    _, grad, lap = _grid_sums(sample.values, grid, derivatives=True)
    return [ComplexField(grid, g / sample.n) for g in grad], ComplexField(grid, lap / sample.n)


def psi_laplacian_hat(sample: IncrementSample, grid: FreqGrid) -> ComplexField:
    """Δψ̂ on the grid; nodes failing |φ̂| ≥ T^{−1/2} are zero and flagged in ``mask``.

    Δψ̂ is invariant under a constant shift of all increments, so the sums are
    taken over increments centred at their sample mean, which keeps the
    numerator free of cancellation between large drift terms.
    """
    _require_sample(sample, grid.dimension)
    centred = sample.values - sample.values.mean(axis=0, keepdims=True)
    phi, grad, lap = _grid_sums(centred, grid, derivatives=True)
    n = sample.n
    phi, lap = phi / n, lap / n
    grad_sq = sum((g / n) ** 2 for g in grad)

    threshold = sample.horizon ** -0.5
    keep = np.abs(phi) >= threshold
    out = np.zeros(grid.shape, dtype=complex)
    out[keep] = (phi[keep] * lap[keep] - grad_sq[keep]) / (sample.delta * phi[keep] ** 2)

    field = ComplexField(grid, out, mask=~keep)
    if field.masked_fraction > MASKED_WARN_FRACTION:
        logger.warning(f"[Spectral] {field.masked_fraction:.1%} of frequency nodes fail the "
                       f"|φ̂| ≥ T^-1/2 = {threshold:.3g} indicator")
    else:
        logger.debug(f"[Spectral] masked fraction {field.masked_fraction:.3%} (threshold {threshold:.3g})")
    return field


# ── Off-grid evaluation ────────────────────────────────────────────────────

def _points(points, dimension: int) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != dimension:
        raise InvalidInputError(f"frequency points must have {dimension} columns, got {pts.shape[1]}")
    return pts


def ecf_at_points(sample: IncrementSample, points) -> np.ndarray:
    """φ̂ at arbitrary frequencies (m, d) → (m,)."""
    if sample is None or sample.n < 1:
        raise InvalidInputError("empirical characteristic function needs a nonempty sample")
    pts = _points(points, sample.dimension)
    total = np.zeros(pts.shape[0], dtype=complex)
    for lo in range(0, sample.n, ECF_CHUNK):
        total += np.exp(1j * sample.values[lo:lo + ECF_CHUNK] @ pts.T).sum(axis=0)
    return total / sample.n


def ecf_derivatives_at_points(sample: IncrementSample, points) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(φ̂, ∇φ̂ as (d, m), Δφ̂) at arbitrary frequencies."""
    if sample is None or sample.n < 1:
        raise InvalidInputError("empirical characteristic function needs a nonempty sample")
    pts = _points(points, sample.dimension)
    d = sample.dimension
    phi = np.zeros(pts.shape[0], dtype=complex)
    grad = np.zeros((d, pts.shape[0]), dtype=complex)
    lap = np.zeros(pts.shape[0], dtype=complex)
    for lo in range(0, sample.n, ECF_CHUNK):
        y = sample.values[lo:lo + ECF_CHUNK]
        e = np.exp(1j * y @ pts.T)
        phi += e.sum(axis=0)
        grad += 1j * (y.T @ e)
        lap -= (y ** 2).sum(axis=1) @ e
    return phi / sample.n, grad / sample.n, lap / sample.n


# ── Uniform risk diagnostics ───────────────────────────────────────────────

def ecf_weight(grid: FreqGrid, chi: float = 0.5) -> np.ndarray:
    """w(u) = log(e + |u|)^{−(1+χ)/2}."""
    if chi <= 0:
        raise ConfigurationError(f"chi must be > 0, got {chi}")
    return np.log(np.e + grid.norms()) ** (-(1.0 + chi) / 2.0)


def weighted_sup_deviation(field: ComplexField, truth: np.ndarray, chi: float = 0.5) -> float:
    """sup over the grid of |w(u)·(φ̂ − φ)(u)|."""
    truth = np.asarray(truth, dtype=complex).reshape(field.grid.shape)
    return float(np.max(ecf_weight(field.grid, chi) * np.abs(field.values - truth)))
