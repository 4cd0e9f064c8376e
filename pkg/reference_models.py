"""
Reference models — true Lévy densities, characteristic functions and error metrics

Ground truth for the example processes, all in unit-time parameterisation:

  * Gaussian compound Poisson:  ν = λ·Normal(m, C)
  * variance gamma (standard BM subordinated by a gamma process of variance κ):
        ν(x) = ∫₀^∞ (2πt)^{−d/2} e^{−|x|²/(2t)} κ^{−1} t^{−1} e^{−t/κ} dt
    by adaptive quadrature in s = log t, cross-checked by the Bessel form
        (2π)^{−d/2} κ^{−1} · 2(a/b)^{−d/4} K_{d/2}(2√(ab)),  a = |x|²/2, b = 1/κ
  * independent blocks: a singular measure living on the coordinate
    subspaces, so densities are reported per block.

Characteristic exponents ψ (φ_δ = e^{δψ}) and the analytic Laplacian
Δψ = −trΣ − F[|x|²ν] are provided for every model, plus sup / L² error
metrics over a region and the ∫f·|x|²dν functional.

Exposed:  ReferenceModel, reference_from_spec, true_trace_sigma, true_levy_density,
          true_xsq_levy_density, characteristic_exponent, true_cf,
          true_psi_laplacian, vg_density, vg_density_bessel, truth_on_grid,
          sup_error, l2_error, relative_l2_error, reference_functional,
          population_xsq_field, population_trace_sigma
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy import integrate, special, stats

from characteristic_function import ComplexField
from flat_top_kernel import fk_on_grid, weight_on_grid
from fourier_inversion import DensityField, SpaceGrid
from levy_density_estimator import (
    BumpFunction, EstimatorConfig, Region, invert_psi_laplacian, trace_integral,
)
from levy_errors import DomainError, InvalidInputError
from levy_simulator import (
    CompoundPoissonPart, LevyModelSpec, ModelBlock, VarianceGammaPart, compound_poisson_part,
)

logger = logging.getLogger(__name__)

# ── Constants ──────────────────────────────────────────────────────────────
DEFAULT_TOLERANCE = 1e-10      # absolute tolerance of the subordination integral
VG_RADIUS_FLOOR = 1e-3         # VG density reported as +inf below this radius
_EXP_CUTOFF = 700.0


# ── Model ──────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class ReferenceModel:
    """Truth for a LevyModelSpec; ``tolerance`` drives quadrature-based kinds."""
    spec: LevyModelSpec
    tolerance: float = DEFAULT_TOLERANCE

    def __post_init__(self):
        if not self.tolerance > 0:
            raise InvalidInputError(f"tolerance must be > 0, got {self.tolerance}")

    @property
    def dimension(self) -> int:
        return self.spec.dimension

    @property
    def kind(self) -> str:
        spec = self.spec
        if spec.blocks:
            return "blocks"
        if spec.cpp_parts and spec.vg_part is not None:
            return "mixed"
        if spec.cpp_parts:
            return "cpp_gaussian"
        if spec.vg_part is not None:
            return "variance_gamma"
        return "brownian" if spec.brownian is not None else "empty"

    def block_models(self) -> Sequence[Tuple[Tuple[int, ...], "ReferenceModel"]]:
        return [(b.coordinates, ReferenceModel(b.model, self.tolerance)) for b in self.spec.blocks]

    @classmethod
    def cpp_gaussian(cls, intensity: float, jump_mean, jump_cov,
                     tolerance: float = DEFAULT_TOLERANCE) -> "ReferenceModel":
        part = compound_poisson_part(intensity, jump_mean, jump_cov)
        return cls(LevyModelSpec(dimension=part.dimension, cpp_parts=(part,)), tolerance)

    @classmethod
    def variance_gamma(cls, kappa: float, dimension: int = 2,
                       tolerance: float = DEFAULT_TOLERANCE) -> "ReferenceModel":
        return cls(LevyModelSpec(dimension=dimension, vg_part=VarianceGammaPart(kappa=float(kappa))), tolerance)

    @classmethod
    def blocks(cls, parts: Sequence[Tuple[Sequence[int], "ReferenceModel"]],
               tolerance: float = DEFAULT_TOLERANCE) -> "ReferenceModel":
        blocks = tuple(ModelBlock(tuple(int(c) for c in coords), ref.spec) for coords, ref in parts)
        dimension = sum(len(b.coordinates) for b in blocks)
        return cls(LevyModelSpec(dimension=dimension, blocks=blocks), tolerance)


def true_trace_sigma(model: ReferenceModel) -> float:
    if model.spec.blocks:
        return sum(true_trace_sigma(ref) for _, ref in model.block_models())
    return model.spec.brownian.trace if model.spec.brownian is not None else 0.0


def reference_from_spec(spec: LevyModelSpec, tolerance: float = DEFAULT_TOLERANCE) -> ReferenceModel:
    if spec.is_empty:
        logger.warning("[Reference] model has no components; its Lévy measure is zero")
    return ReferenceModel(spec, tolerance)


def _as_points(x, dimension: int) -> Tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    single = arr.ndim <= 1
    pts = arr.reshape(1, -1) if single else arr.reshape(-1, arr.shape[-1])
    if pts.shape[1] != dimension:
        raise InvalidInputError(f"points must have {dimension} coordinates, got {pts.shape[1]}")
    return pts, single


# ── Variance gamma density ─────────────────────────────────────────────────

def _vg_density_scalar(kappa: float, dimension: int, radius: float, tolerance: float) -> float:
    r2 = radius * radius

    def integrand(s: float) -> float:
        t = math.exp(s)
        return (2.0 * math.pi * t) ** (-dimension / 2.0) * math.exp(-r2 / (2.0 * t) - t / kappa) / kappa

    lo = math.log(r2 / (2.0 * _EXP_CUTOFF))
    hi = math.log(kappa * _EXP_CUTOFF)
    peak = kappa / 2.0 * (-dimension / 2.0 + math.sqrt(dimension ** 2 / 4.0 + 2.0 * r2 / kappa))
    value, _ = integrate.quad(integrand, lo, hi, points=[math.log(peak)],
                              epsabs=tolerance, epsrel=1e-10, limit=200)
    return value


def vg_density(kappa: float, dimension: int, radius, tolerance: float = DEFAULT_TOLERANCE) -> np.ndarray:
    """Subordination integral at each radius; +inf below VG_RADIUS_FLOOR."""
    r = np.atleast_1d(np.asarray(radius, dtype=float))
    out = np.full(r.shape, np.inf)
    finite = r >= VG_RADIUS_FLOOR
    if np.any(finite):
        unique, inverse = np.unique(r[finite], return_inverse=True)
        values = np.array([_vg_density_scalar(kappa, dimension, float(v), tolerance) for v in unique])
        out[finite] = values[inverse]
    return out


def vg_density_bessel(kappa: float, dimension: int, radius) -> np.ndarray:
    """Closed form of the subordination integral via the modified Bessel function K_{d/2}."""
    r = np.atleast_1d(np.asarray(radius, dtype=float))
    out = np.full(r.shape, np.inf)
    pos = r > 0
    a = r[pos] ** 2 / 2.0
    b = 1.0 / kappa
    out[pos] = ((2.0 * np.pi) ** (-dimension / 2.0) / kappa
                * 2.0 * (a / b) ** (-dimension / 4.0) * special.kv(dimension / 2.0, 2.0 * np.sqrt(a * b)))
    return out


# ── Densities ──────────────────────────────────────────────────────────────

def _cpp_density(part: CompoundPoissonPart, pts: np.ndarray) -> np.ndarray:
    cov = np.asarray(part.jump_cov)
    if np.linalg.eigvalsh(cov).min() <= 0:
        raise DomainError("compound Poisson jumps with a singular covariance have no Lebesgue density")
    pdf = stats.multivariate_normal(mean=np.asarray(part.jump_mean), cov=cov).pdf(pts)
    return part.intensity * np.atleast_1d(pdf).reshape(-1)


def _jump_density(model: ReferenceModel, pts: np.ndarray, method: str) -> np.ndarray:
    spec = model.spec
    out = np.zeros(pts.shape[0])
    for part in spec.cpp_parts:
        out += _cpp_density(part, pts)
    if spec.vg_part is not None:
        radius = np.sqrt(np.sum(pts ** 2, axis=1))
        if method == "bessel":
            out += vg_density_bessel(spec.vg_part.kappa, spec.dimension, radius)
        else:
            out += vg_density(spec.vg_part.kappa, spec.dimension, radius, model.tolerance)
    return out


def true_levy_density(model: ReferenceModel, x, method: str = "quadrature"):
    """ν(x); for blocks an array of per-block densities ν_b(x_b) along the last axis."""
    pts, single = _as_points(x, model.dimension)
    if model.spec.blocks:
        out = np.column_stack([true_levy_density(ref, pts[:, list(coords)], method).reshape(-1)
                               for coords, ref in model.block_models()])
    else:
        out = _jump_density(model, pts, method)
    return out[0] if single else out


def true_xsq_levy_density(model: ReferenceModel, x, method: str = "quadrature"):
    """|x|²ν(x); the VG part is evaluated at max(|x|, VG_RADIUS_FLOOR) so it stays finite."""
    pts, single = _as_points(x, model.dimension)
    if model.spec.blocks:
        out = np.column_stack([true_xsq_levy_density(ref, pts[:, list(coords)], method).reshape(-1)
                               for coords, ref in model.block_models()])
        return out[0] if single else out

    spec = model.spec
    r2 = np.sum(pts ** 2, axis=1)
    out = np.zeros(pts.shape[0])
    for part in spec.cpp_parts:
        out += r2 * _cpp_density(part, pts)
    if spec.vg_part is not None:
        radius = np.maximum(np.sqrt(r2), VG_RADIUS_FLOOR)
        if method == "bessel":
            density = vg_density_bessel(spec.vg_part.kappa, spec.dimension, radius)
        else:
            density = vg_density(spec.vg_part.kappa, spec.dimension, radius, model.tolerance)
        out += radius ** 2 * density
    return out[0] if single else out


# ── Characteristic functions ───────────────────────────────────────────────

def characteristic_exponent(model: ReferenceModel, u) -> np.ndarray:
    """ψ(u) with φ_t = e^{tψ}: drift, volatility, Gaussian jumps and VG terms."""
    pts, single = _as_points(u, model.dimension)
    out = np.zeros(pts.shape[0], dtype=complex)
    if model.spec.blocks:
        for coords, ref in model.block_models():
            out += np.atleast_1d(characteristic_exponent(ref, pts[:, list(coords)]))
        return out[0] if single else out

    spec = model.spec
    if spec.brownian is not None:
        sigma = np.asarray(spec.brownian.sigma)
        out += 1j * pts @ np.asarray(spec.brownian.drift) - 0.5 * np.einsum("mi,ij,mj->m", pts, sigma, pts)
    for part in spec.cpp_parts:
        cov = np.asarray(part.jump_cov)
        jump_cf = np.exp(1j * pts @ np.asarray(part.jump_mean) - 0.5 * np.einsum("mi,ij,mj->m", pts, cov, pts))
        out += part.intensity * (jump_cf - 1.0)
    if spec.vg_part is not None:
        kappa = spec.vg_part.kappa
        out += -np.log1p(kappa * np.sum(pts ** 2, axis=1) / 2.0) / kappa
    return out[0] if single else out


def true_cf(model: ReferenceModel, delta: float, u):
    """φ_δ(u) = exp(δψ(u)); for blocks the product of the per-block functions."""
    return np.exp(delta * characteristic_exponent(model, u))


def true_psi_laplacian(model: ReferenceModel, u):
    """Δψ(u) = −trΣ − F[|x|²ν](u) in closed form."""
    pts, single = _as_points(u, model.dimension)
    out = np.zeros(pts.shape[0], dtype=complex)
    if model.spec.blocks:
        for coords, ref in model.block_models():
            out += np.atleast_1d(true_psi_laplacian(ref, pts[:, list(coords)]))
        return out[0] if single else out

    spec = model.spec
    if spec.brownian is not None:
        out -= spec.brownian.trace
    for part in spec.cpp_parts:
        mean = np.asarray(part.jump_mean)
        cov = np.asarray(part.jump_cov)
        cu = pts @ cov
        jump_cf = np.exp(1j * pts @ mean - 0.5 * np.einsum("mi,mi->m", cu, pts))
        gradient_sq = np.sum((1j * mean - cu) ** 2, axis=1)
        out += part.intensity * (gradient_sq - np.trace(cov)) * jump_cf
    if spec.vg_part is not None:
        kappa = spec.vg_part.kappa
        norm_sq = np.sum(pts ** 2, axis=1)
        a = kappa * norm_sq / 2.0
        out += -spec.dimension / (1.0 + a) + kappa * norm_sq / (1.0 + a) ** 2
    return out[0] if single else out


# ── Grids and metrics ──────────────────────────────────────────────────────

def truth_on_grid(model: ReferenceModel, grid: SpaceGrid, quantity: str = "xsq_nu") -> DensityField:
    """ν or |x|²ν on every node of a space grid; infinite values are masked."""
    if model.spec.blocks:
        raise InvalidInputError("a block model has no full-dimensional density to put on a grid")
    if quantity not in ("nu", "xsq_nu"):
        raise InvalidInputError(f"quantity must be 'nu' or 'xsq_nu', got {quantity!r}")
    nodes = grid.nodes()
    fn = true_xsq_levy_density if quantity == "xsq_nu" else true_levy_density
    values = np.asarray(fn(model, nodes), dtype=float).reshape(grid.shape)
    mask = ~np.isfinite(values)
    values = np.where(mask, np.nan, values)
    return DensityField(grid, values, quantity, mask=mask)


def _truth_quantity(field: DensityField) -> str:
    return "xsq_nu" if field.quantity.startswith("xsq") else "nu"


def _paired_values(field: DensityField, model: ReferenceModel, region: Region) -> Tuple[np.ndarray, np.ndarray]:
    if model.spec.blocks:
        raise InvalidInputError("pointwise errors are undefined for a block model; use reference_functional")
    select = region.mask_on(field.grid) & ~field.mask
    if not np.any(select):
        raise InvalidInputError(f"no defined grid nodes fall in the {region.kind} region")
    pts = np.stack(field.grid.mesh(), axis=-1)[select]
    fn = true_xsq_levy_density if _truth_quantity(field) == "xsq_nu" else true_levy_density
    truth = np.asarray(fn(model, pts), dtype=float).reshape(-1)
    estimate = field.values[select]
    finite = np.isfinite(truth)
    return estimate[finite], truth[finite]


def sup_error(field: DensityField, model: ReferenceModel, region: Region = Region()) -> float:
    """max over grid nodes in U of |field − truth|."""
    estimate, truth = _paired_values(field, model, region)
    return float(np.max(np.abs(estimate - truth)))


def l2_error(field: DensityField, model: ReferenceModel, region: Region = Region()) -> float:
    """Rectangle-rule L²(U) norm of field − truth."""
    estimate, truth = _paired_values(field, model, region)
    return float(np.sqrt(np.sum((estimate - truth) ** 2) * field.grid.cell_volume))


def relative_l2_error(field: DensityField, model: ReferenceModel, region: Region = Region()) -> float:
    estimate, truth = _paired_values(field, model, region)
    denominator = float(np.sqrt(np.sum(truth ** 2)))
    if denominator == 0:
        raise InvalidInputError("truth vanishes on the region; relative error undefined")
    return float(np.sqrt(np.sum((estimate - truth) ** 2)) / denominator)


# ── Functionals and population targets ─────────────────────────────────────

def _quad_opts():
    return {"epsabs": 1e-9, "epsrel": 1e-8, "limit": 100}


def reference_functional(model: ReferenceModel, f: BumpFunction) -> float:
    """∫ f(x)|x|² ν(dx); block measures integrate each block with the other coordinates at 0."""
    if f.dimension != model.dimension:
        raise InvalidInputError(f"test function dimension {f.dimension} != model dimension {model.dimension}")
    lower, upper = f.support_box()

    if model.spec.blocks:
        total = 0.0
        for coords, ref in model.block_models():
            coords = list(coords)
            others = [j for j in range(model.dimension) if j not in coords]
            if any(lower[j] >= 0 or upper[j] <= 0 for j in others):
                continue

            def block_integrand(*xb, coords=coords, ref=ref):
                x = np.zeros(model.dimension)
                x[coords] = xb
                return float(f(x)) * float(true_xsq_levy_density(ref, np.asarray(xb), method="bessel"))

            ranges = [(lower[j], upper[j]) for j in coords]
            value, _ = integrate.nquad(block_integrand, ranges, opts=_quad_opts())
            total += value
        return total

    def integrand(*x):
        point = np.asarray(x)
        return float(f(point)) * float(true_xsq_levy_density(model, point, method="bessel"))

    value, _ = integrate.nquad(integrand, [(lo, hi) for lo, hi in zip(lower, upper)], opts=_quad_opts())
    return value


def population_xsq_field(model: ReferenceModel, config: EstimatorConfig) -> DensityField:
    """−F^{−1}[FK_h·Δψ] with the true Δψ: the kernel-smoothed |x|²ν (plus trΣ·K_h) the estimator targets."""
    grid = config.freq_grid(model.dimension)
    psi = np.asarray(true_psi_laplacian(model, grid.nodes())).reshape(grid.shape)
    return invert_psi_laplacian(psi, fk_on_grid(config.kernel, grid), quantity="xsq_nu_population")


def population_trace_sigma(model: ReferenceModel, config: EstimatorConfig) -> float:
    """−∫W_h Δψ with the true Δψ: trΣ plus the jump bias ∫W_h F[|x|²ν]."""
    grid = config.freq_grid(model.dimension)
    psi = ComplexField(grid, np.asarray(true_psi_laplacian(model, grid.nodes())).reshape(grid.shape))
    return trace_integral(psi, weight_on_grid(config.weight, grid))
