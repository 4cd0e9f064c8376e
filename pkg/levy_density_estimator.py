"""
Spectral Lévy density estimator — ν̂, tr̂Σ, corrected |x|²ν̂ and bandwidth rules

Given increments Y_1..Y_n at step δ:

  1. Δψ̂ on a frequency grid covering the kernel support (characteristic_function)
  2. |x|²ν̂_h = −F^{−1}[FK_h · Δψ̂]                  (real part, dual space grid)
  3. ν̂_h(x)  = |x|^{−2}·|x|²ν̂_h(x) for |x| ≥ ε₀     (origin ball marked undefined)
  4. tr̂Σ_h   = −∫ W_h(u) Δψ̂(u) du                   (rectangle rule)
  5. |x|²ν̂ corrected = −F^{−1}[FK_h · (Δψ̂ + tr̂Σ_h)]

Post-processing ``real_positive_part`` clamps negatives to 0 after the raw
field has been kept. Bandwidths follow the rate-optimal rules for the mildly
and severely ill-posed regimes plus the 4·T^{−1/2} simulation preset.

Also here: the C^∞ bump test functions, integration regions and the
functional ∫_U f·|x|²ν̂.

Exposed:  EstimatorConfig, RateParams, LevyDensityEstimate,
          estimate_levy_density, estimate_trace_sigma,
          estimate_xsq_nu_corrected, estimate_all, trace_integral,
          bandwidth_mild, bandwidth_severe, bandwidth_mild_high_frequency,
          bandwidth_severe_high_frequency, bandwidth_sim_default,
          select_bandwidth, BumpFunction, Region,
          integrate_against_test_function
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from characteristic_function import ComplexField, FreqGrid, psi_laplacian_hat
from flat_top_kernel import KernelSpec, WeightSpec, fk_on_grid, smooth_bump, weight_on_grid
from fourier_inversion import DensityField, SpaceGrid, inverse_fourier_fft
from levy_errors import ConfigurationError, DomainError, InvalidInputError
from levy_simulator import IncrementSample

logger = logging.getLogger(__name__)

# ── Constants ──────────────────────────────────────────────────────────────
POST_PROCESS_MODES = ("raw", "real_positive_part")
BANDWIDTH_RULES = ("explicit", "mild", "severe", "mild_high_frequency",
                   "severe_high_frequency", "sim_default")
DEFAULT_POINTS = 128
SIM_DEFAULT_SCALE = 4.0


# ── Configuration ──────────────────────────────────────────────────────────

@dataclass(frozen=True)
class EstimatorConfig:
    """Kernel, weight, grid and post-processing choices for one estimate.

    The frequency grid spans u_max = u_max_factor / min(h_kernel, h_weight)
    unless ``u_max`` is given; larger factors zero-pad the spectrum and refine
    the spatial grid (Δx = π / u_max). ``origin_exclusion_radius`` None means
    half a spatial grid cell, so only the origin node is masked; nodes with
    |x| <= radius are masked.
    """
    kernel: KernelSpec = field(default_factory=KernelSpec)
    weight: WeightSpec = field(default_factory=WeightSpec)
    points: int = DEFAULT_POINTS
    u_max: Optional[float] = None
    u_max_factor: float = 1.0
    post_process: str = "real_positive_part"
    origin_exclusion_radius: Optional[float] = None

    def __post_init__(self):
        if not 0 < self.kernel.bandwidth <= 1:
            raise ConfigurationError(f"kernel bandwidth must lie in (0, 1], got {self.kernel.bandwidth}")
        if self.points < 2 or self.points % 2:
            raise ConfigurationError(f"points per axis must be even and >= 2, got {self.points}")
        if self.post_process not in POST_PROCESS_MODES:
            raise ConfigurationError(f"post_process must be one of {POST_PROCESS_MODES}, got {self.post_process!r}")
        if self.u_max is not None and not self.u_max > 0:
            raise ConfigurationError(f"u_max must be > 0, got {self.u_max}")
        if not self.u_max_factor >= 1.0:
            raise ConfigurationError(f"u_max_factor must be >= 1, got {self.u_max_factor}")
        if self.origin_exclusion_radius is not None and self.origin_exclusion_radius < 0:
            raise ConfigurationError(f"origin_exclusion_radius must be >= 0, got {self.origin_exclusion_radius}")

    @property
    def bandwidth(self) -> float:
        return self.kernel.bandwidth

    def freq_grid(self, dimension: int) -> FreqGrid:
        u_max = self.u_max
        if u_max is None:
            u_max = self.u_max_factor / min(self.kernel.bandwidth, self.weight.bandwidth)
        return FreqGrid(dimension=dimension, u_max=float(u_max), points=self.points)

    def with_bandwidth(self, h: float) -> "EstimatorConfig":
        """Same config with the kernel bandwidth replaced (weight bandwidth kept)."""
        return EstimatorConfig(
            kernel=self.kernel.with_bandwidth(h), weight=self.weight, points=self.points,
            u_max=self.u_max, u_max_factor=self.u_max_factor, post_process=self.post_process,
            origin_exclusion_radius=self.origin_exclusion_radius,
        )


@dataclass(frozen=True)
class RateParams:
    """Smoothness s > 1 and decay exponent α of the characteristic function; r for severe decay."""
    regime: str = "mild"
    s: float = 2.0
    alpha: float = 1.0
    r: float = 1.0

    def __post_init__(self):
        if self.regime not in ("mild", "severe"):
            raise ConfigurationError(f"regime must be 'mild' or 'severe', got {self.regime!r}")
        if not self.s > 1:
            raise ConfigurationError(f"smoothness s must be > 1, got {self.s}")
        if not self.alpha > 0:
            raise ConfigurationError(f"alpha must be > 0, got {self.alpha}")
        if not self.r > 0:
            raise ConfigurationError(f"r must be > 0, got {self.r}")


@dataclass(eq=False)
class LevyDensityEstimate:
    nu_hat: DensityField
    xsq_nu_hat: DensityField
    raw_xsq_nu_hat: DensityField
    diagnostics: Dict
    trace_sigma: Optional[float] = None
    xsq_nu_corrected: Optional[DensityField] = None


# ── Bandwidth rules ────────────────────────────────────────────────────────

def _require_horizon(T: float):
    if not (np.isfinite(T) and T > math.e):
        raise DomainError(f"bandwidth rules need T > e (log T > 1), got T = {T}")


def bandwidth_mild(params: RateParams, delta: float, T: float, dimension: int) -> float:
    """h = (log T / T)^{1/(2s + 2δα + d)}."""
    _require_horizon(T)
    return (math.log(T) / T) ** (1.0 / (2.0 * params.s + 2.0 * delta * params.alpha + dimension))


def bandwidth_severe(params: RateParams, delta: float, T: float) -> float:
    """h = (log T / (4rδ))^{−1/α}."""
    _require_horizon(T)
    base = math.log(T) / (4.0 * params.r * delta)
    if base <= 1.0:
        raise DomainError(f"severe rule needs log T > 4rδ, got log T = {math.log(T):.4g}, 4rδ = {4 * params.r * delta:.4g}")
    return base ** (-1.0 / params.alpha)


def bandwidth_mild_high_frequency(s: float, T: float, dimension: int) -> float:
    """h = (log T / T)^{1/(2s + d)}, the δα → 0 limit of the mild rule."""
    _require_horizon(T)
    return (math.log(T) / T) ** (1.0 / (2.0 * s + dimension))


def bandwidth_severe_high_frequency(s: float, T: float, dimension: int) -> float:
    """h = T^{−1/(2(s + d))}, for a Gaussian part observed at δ → 0."""
    _require_horizon(T)
    return T ** (-1.0 / (2.0 * (s + dimension)))


def bandwidth_sim_default(T: float) -> float:
    """4·T^{−1/2}, clamped to 1."""
    if not (np.isfinite(T) and T > 0):
        raise DomainError(f"horizon must be > 0, got {T}")
    h = SIM_DEFAULT_SCALE / math.sqrt(T)
    if h > 1.0:
        logger.warning(f"[Estimator] 4·T^-1/2 = {h:.3g} exceeds 1 at T = {T:g}; using h = 1")
        return 1.0
    return h


def select_bandwidth(rule: str, delta: float, T: float, dimension: int,
                     params: Optional[RateParams] = None, h: Optional[float] = None) -> float:
    """Dispatch on the configured bandwidth source."""
    if rule == "explicit":
        if h is None:
            raise ConfigurationError("explicit bandwidth rule needs h")
        return float(h)
    if rule == "sim_default":
        return bandwidth_sim_default(T)
    if params is None:
        raise ConfigurationError(f"bandwidth rule {rule!r} needs rate parameters")
    if rule == "mild":
        return bandwidth_mild(params, delta, T, dimension)
    if rule == "severe":
        return bandwidth_severe(params, delta, T)
    if rule == "mild_high_frequency":
        return bandwidth_mild_high_frequency(params.s, T, dimension)
    if rule == "severe_high_frequency":
        return bandwidth_severe_high_frequency(params.s, T, dimension)
    raise ConfigurationError(f"bandwidth rule must be one of {BANDWIDTH_RULES}, got {rule!r}")


# ── Core transforms ────────────────────────────────────────────────────────

def invert_psi_laplacian(psi_values: np.ndarray, fk: ComplexField, trace: float = 0.0,
                         quantity: str = "xsq_nu_hat") -> DensityField:
    """−Re F^{−1}[FK_h · (Δψ + trace)] on the dual space grid."""
    spectrum = fk.values * (psi_values + trace)
    return inverse_fourier_fft(ComplexField(fk.grid, spectrum)).density(quantity, sign=-1.0)


def trace_integral(psi_field: ComplexField, weight_values: np.ndarray) -> float:
    """−Re Σ_u W(u) Δψ(u) Δu^d."""
    weight_values = np.asarray(weight_values, dtype=float)
    if weight_values.shape != psi_field.grid.shape:
        raise ConfigurationError("weight values do not match the frequency grid")
    return float(-np.real(np.sum(weight_values * psi_field.values)) * psi_field.grid.cell_volume)


def _psi_for(sample: IncrementSample, config: EstimatorConfig,
             psi_hat: Optional[ComplexField]) -> ComplexField:
    if sample is None or sample.n < 1:
        raise InvalidInputError("estimation needs a nonempty sample")
    grid = config.freq_grid(sample.dimension)
    if psi_hat is None:
        return psi_laplacian_hat(sample, grid)
    if psi_hat.grid != grid:
        raise ConfigurationError(f"precomputed Δψ̂ lives on {psi_hat.grid}, config expects {grid}")
    return psi_hat


def _post_process(field: DensityField, config: EstimatorConfig) -> DensityField:
    return field.clamped() if config.post_process == "real_positive_part" else field


def _divide_by_norm_squared(xsq: DensityField, radius: float) -> DensityField:
    norms = xsq.grid.norms()
    excluded = norms <= radius
    values = np.full(xsq.grid.shape, np.nan)
    values[~excluded] = xsq.values[~excluded] / norms[~excluded] ** 2
    return DensityField(xsq.grid, values, "nu_hat", mask=excluded, imag_residual=xsq.imag_residual)


def _exclusion_radius(config: EstimatorConfig, space: SpaceGrid) -> float:
    radius = 0.5 * space.spacing if config.origin_exclusion_radius is None else config.origin_exclusion_radius
    if radius >= space.extent:
        raise ConfigurationError(
            f"origin exclusion radius {radius:.4g} is not below the spatial extent {space.extent:.4g}")
    return radius


# ── Estimators ─────────────────────────────────────────────────────────────

def estimate_levy_density(sample: IncrementSample, config: EstimatorConfig,
                          psi_hat: Optional[ComplexField] = None) -> LevyDensityEstimate:
    """ν̂_h and |x|²ν̂_h with diagnostics (masked fraction, imaginary residual, grid)."""
    psi = _psi_for(sample, config, psi_hat)
    fk = fk_on_grid(config.kernel, psi.grid)
    space = SpaceGrid.dual(psi.grid)
    radius = _exclusion_radius(config, space)

    raw = invert_psi_laplacian(psi.values, fk)
    xsq = _post_process(raw, config)
    nu = _divide_by_norm_squared(xsq, radius)

    defined = raw.values[~nu.mask]
    diagnostics = {
        "n": sample.n,
        "delta": sample.delta,
        "horizon": sample.horizon,
        "dimension": sample.dimension,
        "bandwidth": config.kernel.bandwidth,
        "kernel": config.kernel.kind,
        "post_process": config.post_process,
        "u_max": psi.grid.u_max,
        "points": psi.grid.points,
        "space_spacing": space.spacing,
        "space_extent": space.extent,
        "origin_exclusion_radius": radius,
        "masked_fraction": psi.masked_fraction,
        "imag_residual": raw.imag_residual,
        "negative_fraction": float(np.mean(defined < 0)) if defined.size else 0.0,
    }
    logger.info(f"[Estimator] n={sample.n} h={config.kernel.bandwidth:.4g} grid={psi.grid.points}^{sample.dimension} "
                f"masked={psi.masked_fraction:.2%} imag={raw.imag_residual:.2e}")
    return LevyDensityEstimate(nu_hat=nu, xsq_nu_hat=xsq, raw_xsq_nu_hat=raw, diagnostics=diagnostics)


def estimate_trace_sigma(sample: IncrementSample, config: EstimatorConfig,
                         psi_hat: Optional[ComplexField] = None) -> float:
    """tr̂Σ_h = −∫W_h Δψ̂; negative values are returned as is with a warning."""
    psi = _psi_for(sample, config, psi_hat)
    value = trace_integral(psi, weight_on_grid(config.weight, psi.grid))
    if value < 0:
        logger.warning(f"[Estimator] negative trace estimate tr(Σ) = {value:.4g} (reported unclamped)")
    else:
        logger.debug(f"[Estimator] tr(Σ) = {value:.6g} (weight h={config.weight.bandwidth:.4g})")
    return value


def estimate_xsq_nu_corrected(sample: IncrementSample, config: EstimatorConfig,
                              psi_hat: Optional[ComplexField] = None,
                              trace_sigma: Optional[float] = None) -> DensityField:
    """−F^{−1}[FK_h(Δψ̂ + tr̂Σ)], defined at the origin too. ``trace_sigma`` overrides the estimate."""
    psi = _psi_for(sample, config, psi_hat)
    if trace_sigma is None:
        trace_sigma = estimate_trace_sigma(sample, config, psi)
    fk = fk_on_grid(config.kernel, psi.grid)
    corrected = invert_psi_laplacian(psi.values, fk, trace=float(trace_sigma), quantity="xsq_nu_corrected")
    return _post_process(corrected, config)


def estimate_all(sample: IncrementSample, config: EstimatorConfig) -> LevyDensityEstimate:
    """One Δψ̂ pass serving ν̂, tr̂Σ and the corrected estimate."""
    psi = _psi_for(sample, config, None)
    estimate = estimate_levy_density(sample, config, psi)
    estimate.trace_sigma = estimate_trace_sigma(sample, config, psi)
    estimate.xsq_nu_corrected = estimate_xsq_nu_corrected(sample, config, psi, estimate.trace_sigma)
    estimate.diagnostics["trace_sigma"] = estimate.trace_sigma
    estimate.diagnostics["trace_sigma_negative"] = estimate.trace_sigma < 0
    estimate.diagnostics["weight_bandwidth"] = config.weight.bandwidth
    return estimate


# ── Test functions and regions ─────────────────────────────────────────────

@dataclass(frozen=True)
class BumpFunction:
    """C^∞ bump with support inside center ± width.

    product: Π_j g((x_j − c_j)/w), sup norm e^{−d}
    radial:  g(|x − c|/w),         sup norm e^{−1}
    with g(t) = exp(−1/(1 − t²)).
    """
    center: Tuple[float, ...]
    width: float
    kind: str = "product"
    amplitude: float = 1.0

    def __post_init__(self):
        if self.kind not in ("product", "radial"):
            raise InvalidInputError(f"bump kind must be 'product' or 'radial', got {self.kind!r}")
        if not self.width > 0:
            raise InvalidInputError(f"bump width must be > 0, got {self.width}")

    @property
    def dimension(self) -> int:
        return len(self.center)

    @property
    def sup_norm(self) -> float:
        return abs(self.amplitude) * math.exp(-(self.dimension if self.kind == "product" else 1))

    def support_box(self) -> Tuple[np.ndarray, np.ndarray]:
        c = np.asarray(self.center, dtype=float)
        return c - self.width, c + self.width

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        offset = (x - np.asarray(self.center)) / self.width
        if self.kind == "product":
            return self.amplitude * np.prod(smooth_bump(offset), axis=-1)
        return self.amplitude * smooth_bump(np.sqrt(np.sum(offset ** 2, axis=-1)))


@dataclass(frozen=True)
class Region:
    """Integration / error region U: annulus {inner ≤ |x| ≤ outer}, a box, or all of R^d."""
    kind: str = "annulus"
    inner: float = 0.5
    outer: float = 2.0
    lower: Optional[Tuple[float, ...]] = None
    upper: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if self.kind == "annulus":
            if not 0 <= self.inner < self.outer:
                raise ConfigurationError(f"annulus needs 0 <= inner < outer, got {self.inner}, {self.outer}")
        elif self.kind == "box":
            if self.lower is None or self.upper is None or len(self.lower) != len(self.upper):
                raise ConfigurationError("box region needs lower and upper corners of equal length")
            if any(lo >= hi for lo, hi in zip(self.lower, self.upper)):
                raise ConfigurationError("box region needs lower < upper on every axis")
        elif self.kind != "everywhere":
            raise ConfigurationError(f"region kind must be annulus, box or everywhere, got {self.kind!r}")

    def contains(self, points) -> np.ndarray:
        """Membership of points stacked along the last axis."""
        points = np.asarray(points, dtype=float)
        if self.kind == "annulus":
            r = np.sqrt(np.sum(points ** 2, axis=-1))
            return (r >= self.inner) & (r <= self.outer)
        if self.kind == "box":
            return np.all((points >= np.asarray(self.lower)) & (points <= np.asarray(self.upper)), axis=-1)
        return np.ones(points.shape[:-1], dtype=bool)

    def contains_box(self, lower, upper) -> bool:
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        if self.kind == "everywhere":
            return True
        if self.kind == "box":
            return bool(np.all(lower >= np.asarray(self.lower)) and np.all(upper <= np.asarray(self.upper)))
        farthest = np.maximum(np.abs(lower), np.abs(upper))
        nearest = np.where((lower <= 0) & (upper >= 0), 0.0, np.minimum(np.abs(lower), np.abs(upper)))
        return bool(np.linalg.norm(farthest) <= self.outer and np.linalg.norm(nearest) >= self.inner)

    def mask_on(self, grid: SpaceGrid) -> np.ndarray:
        return self.contains(np.stack(grid.mesh(), axis=-1))


def integrate_against_test_function(field: DensityField, f: BumpFunction, region: Region) -> float:
    """Σ_{x ∈ U} f(x)·field(x)·Δx^d; f's support must lie inside U."""
    if f.dimension != field.grid.dimension:
        raise InvalidInputError(f"test function dimension {f.dimension} != field dimension {field.grid.dimension}")
    lower, upper = f.support_box()
    if not region.contains_box(lower, upper):
        raise InvalidInputError(f"test function support [{lower}, {upper}] is not contained in the {region.kind} region")
    if f.amplitude == 0:
        return 0.0

    mesh = np.stack(field.grid.mesh(), axis=-1)
    inside = region.mask_on(field.grid)
    weights = f(mesh)
    undefined = inside & field.mask & (weights != 0)
    if np.any(undefined):
        raise InvalidInputError(f"test function is nonzero at {int(undefined.sum())} undefined field nodes")
    use = inside & ~field.mask
    return float(np.sum(weights[use] * field.values[use]) * field.grid.cell_volume)
