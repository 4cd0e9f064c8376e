"""
Flat-top kernels and trace weights, specified in the Fourier domain

Flat-top profile (decay b > 0, flat radius 0 < c < 1):

    FK(r) = 1                                          r ≤ c
          = exp(−b·exp(−b/(r − c)²) / (r − 1)²)        c < r < 1
          = 0                                          r ≥ 1

The radial kernel applies it to |u|, the product kernel to each |u_j|. With
bandwidth h the kernel used on data is FK_h(u) = FK(h·u). FK is 1 on a
neighbourhood of 0, so every polynomial moment of K = F^{−1}[FK] beyond the
zeroth vanishes.

Weights for the trace estimator: W_h(u) = h^d W(h·u) with ∫W = 1 and
supp W ⊆ [−1, 1]^d, either the box 2^{−d}·1[−1,1]^d (cell-averaged on the
grid and rescaled so its grid integral is exactly 1) or a normalised product
of smooth bumps.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Tuple

import numpy as np
from scipy import integrate

from characteristic_function import ComplexField, FreqGrid
from fourier_inversion import DensityField, inverse_fourier_fft
from levy_errors import ConfigurationError

# ── Defaults ───────────────────────────────────────────────────────────────
DEFAULT_B = 1.0
DEFAULT_C = 1.0 / 50.0

KERNEL_KINDS = ("flat_top_radial", "product_flat_top")
WEIGHT_SHAPES = ("indicator_box", "smooth_bump")


# ── Profiles ───────────────────────────────────────────────────────────────

def flat_top_profile(r, b: float = DEFAULT_B, c: float = DEFAULT_C) -> np.ndarray:
    """FK as a function of the radius r ≥ 0 (vectorised)."""
    r = np.abs(np.asarray(r, dtype=float))
    out = np.zeros_like(r)
    out[r <= c] = 1.0
    mid = (r > c) & (r < 1.0)
    if np.any(mid):
        rm = r[mid]
        with np.errstate(over="ignore", under="ignore", divide="ignore"):
            inner = np.exp(-b / (rm - c) ** 2)
            out[mid] = np.exp(-b * inner / (rm - 1.0) ** 2)
    return out


def flat_top_fk(u, b: float = DEFAULT_B, c: float = DEFAULT_C):
    """Radial flat-top FK at a point u ∈ R^d (or an array of points along the last axis)."""
    _check_shape_params(b, c)
    u = np.asarray(u, dtype=float)
    r = np.abs(u) if u.ndim == 0 else np.sqrt(np.sum(u ** 2, axis=-1))
    value = flat_top_profile(r, b, c)
    return float(value) if np.ndim(value) == 0 else value


def smooth_bump(t) -> np.ndarray:
    """g(t) = exp(−1/(1 − t²)) on |t| < 1, 0 elsewhere."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return out


@lru_cache(maxsize=1)
def smooth_bump_mass() -> float:
    """∫_{−1}^{1} g(t) dt."""
    value, _ = integrate.quad(lambda t: float(np.exp(-1.0 / (1.0 - t * t))), -1.0, 1.0,
                              epsabs=1e-14, epsrel=1e-12)
    return value


def _check_shape_params(b: float, c: float):
    if not b > 0:
        raise ConfigurationError(f"flat-top decay b must be > 0, got {b}")
    if not 0 < c < 1:
        raise ConfigurationError(f"flat-top radius c must lie in (0, 1), got {c}")


# ── Specs ──────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class KernelSpec:
    """Fourier-domain kernel. ``order`` is declared; the flat-top satisfies every finite order."""
    kind: str = "flat_top_radial"
    b: float = DEFAULT_B
    c: float = DEFAULT_C
    order: int = 2
    bandwidth: float = 1.0

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ConfigurationError(f"kernel kind must be one of {KERNEL_KINDS}, got {self.kind!r}")
        _check_shape_params(self.b, self.c)
        if int(self.order) < 1:
            raise ConfigurationError(f"kernel order must be a positive integer, got {self.order}")
        if not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise ConfigurationError(f"bandwidth must be > 0, got {self.bandwidth}")

    def with_bandwidth(self, h: float) -> "KernelSpec":
        return KernelSpec(self.kind, self.b, self.c, self.order, float(h))


@dataclass(frozen=True)
class WeightSpec:
    shape: str = "indicator_box"
    bandwidth: float = 1.0

    def __post_init__(self):
        if self.shape not in WEIGHT_SHAPES:
            raise ConfigurationError(f"weight shape must be one of {WEIGHT_SHAPES}, got {self.shape!r}")
        if not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise ConfigurationError(f"weight bandwidth must be > 0, got {self.bandwidth}")

    def with_bandwidth(self, h: float) -> "WeightSpec":
        return WeightSpec(self.shape, float(h))


# ── Grid evaluation ────────────────────────────────────────────────────────

def _require_cover(grid: FreqGrid, bandwidth: float, what: str):
    if not grid.covers(1.0 / bandwidth):
        raise ConfigurationError(
            f"{what} support [-{1.0 / bandwidth:.4g}, {1.0 / bandwidth:.4g}]^d exceeds the "
            f"frequency grid (u_max = {grid.u_max:.4g})")


def fk_on_grid(spec: KernelSpec, grid: FreqGrid) -> ComplexField:
    """FK_h(u) = FK(h·u) at every node (real-valued field)."""
    _require_cover(grid, spec.bandwidth, "kernel")
    h = spec.bandwidth
    if spec.kind == "flat_top_radial":
        values = flat_top_profile(h * grid.norms(), spec.b, spec.c)
    else:
        values = np.ones(grid.shape)
        for axis_values in grid.mesh():
            values = values * flat_top_profile(h * np.abs(axis_values), spec.b, spec.c)
    return ComplexField(grid, values.astype(complex))


def _box_cell_average(axis: np.ndarray, spacing: float, half_width: float) -> np.ndarray:
    """Fraction of each cell [u − Δu/2, u + Δu/2] inside [−half_width, half_width]."""
    lo = np.maximum(axis - spacing / 2.0, -half_width)
    hi = np.minimum(axis + spacing / 2.0, half_width)
    return np.clip(hi - lo, 0.0, None) / spacing


def weight_on_grid(spec: WeightSpec, grid: FreqGrid) -> np.ndarray:
    """W_h(u) = h^d W(h·u) at every node; Σ W_h Δu^d ≈ 1."""
    _require_cover(grid, spec.bandwidth, "weight")
    h = spec.bandwidth
    axis = grid.axis()
    if spec.shape == "indicator_box":
        per_axis = _box_cell_average(axis, grid.spacing, 1.0 / h)
        # the half-open grid has no node above u_max − Δu/2; put the box mass back
        per_axis = per_axis / (per_axis.sum() * grid.spacing)
    else:
        per_axis = h * smooth_bump(h * axis) / smooth_bump_mass()
    values = np.ones(grid.shape)
    for j in range(grid.dimension):
        shape = [1] * grid.dimension
        shape[j] = grid.points
        values = values * per_axis.reshape(shape)
    return values


# ── Spatial kernel ─────────────────────────────────────────────────────────

def kernel_from_profile(profile: np.ndarray, grid: FreqGrid) -> DensityField:
    """K = F^{−1}[g] / g(0) for an even, compactly supported g sampled on the grid."""
    field = ComplexField(grid, profile)
    g0 = field.at_zero()
    if g0 == 0:
        raise ConfigurationError("kernel profile must not vanish at the origin")
    spatial = inverse_fourier_fft(ComplexField(grid, field.values / g0))
    return spatial.density("K")


def spatial_kernel(spec: KernelSpec, grid: FreqGrid) -> DensityField:
    """K_h = F^{−1}[FK_h] on the dual spatial grid."""
    return inverse_fourier_fft(fk_on_grid(spec, grid)).density("K_h")


def kernel_moments(spec: KernelSpec, grid: FreqGrid, max_order: int = 2) -> Dict[Tuple[int, ...], float]:
    """∫x^β K_h(x) dx for every multi-index with |β|₁ ≤ max_order (rectangle rule)."""
    kernel = spatial_kernel(spec, grid)
    mesh = kernel.grid.mesh()
    moments: Dict[Tuple[int, ...], float] = {}
    for beta in itertools.product(range(max_order + 1), repeat=grid.dimension):
        if sum(beta) > max_order:
            continue
        monomial = np.ones(kernel.grid.shape)
        for axis_values, power in zip(mesh, beta):
            if power:
                monomial = monomial * axis_values ** power
        moments[beta] = float(np.sum(monomial * kernel.values) * kernel.grid.cell_volume)
    return moments
