"""
Lévy increment simulator — seeded generators for the example processes

Produces i.i.d. increments Y_k = L_{kδ} − L_{(k−1)δ} of

  * a Brownian part with drift:      Y ~ Normal(δγ, δΣ)
  * compound Poisson parts:          Y = Σ_{j ≤ N} ξ_j,  N ~ Poisson(λδ),
                                     ξ_j ~ Normal(jump_mean, jump_cov)
  * a variance gamma part:           Y = √ΔG · Z,  ΔG ~ Gamma(δ/κ, κ),
                                     Z standard normal in R^d
  * independent blocks of coordinates, each with its own sub-model.

No drift compensation is applied anywhere; the estimator does not need it.

Randomness:
  Component c of block b, increment range r draws from
  SeedSequence(seed, spawn_key=(b, c, r)). An unblocked model is block 0 of
  the trivial partition, so wrapping a model in a single block reproduces it
  bit for bit. Ranges are independent streams and may run on a thread pool.

Exposed:  simulate_model, simulate_compound_poisson, simulate_variance_gamma,
          simulate_blocks, simulate_brownian, aggregate_increments,
          model_spec_from_dict, model_spec_to_dict, save_sample, load_sample
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from levy_errors import CapacityError, InvalidInputError, InvalidModelError

logger = logging.getLogger(__name__)

# ── Constants ──────────────────────────────────────────────────────────────
SIM_RANGE_SIZE = 100_000          # increments per independent RNG stream
MAX_JUMPS_PER_STEP = 1e9          # λδ above this is refused
JUMP_BATCH = 10_000_000           # jumps materialised at once inside a range
PSD_TOLERANCE = 1e-12             # eigenvalues ≥ −tol·trace count as PSD

# fixed component slots inside a block (stable stream keys)
_SLOT_BROWNIAN = 0
_SLOT_VARIANCE_GAMMA = 1
_SLOT_FIRST_CPP = 2

Matrix = Tuple[Tuple[float, ...], ...]
Vector = Tuple[float, ...]


# ── Validation helpers ─────────────────────────────────────────────────────

def _as_matrix(value, dimension: int, name: str) -> Matrix:
    arr = np.asarray(value, dtype=float)
    if arr.shape != (dimension, dimension):
        raise InvalidModelError(f"{name} must be {dimension}x{dimension}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidModelError(f"{name} has non-finite entries")
    if not np.allclose(arr, arr.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.abs(arr).max()))):
        raise InvalidModelError(f"{name} is not symmetric")
    eig = np.linalg.eigvalsh(arr)
    if eig.size and eig.min() < -PSD_TOLERANCE * max(float(np.trace(arr)), 0.0):
        raise InvalidModelError(f"{name} is not positive semidefinite (min eigenvalue {eig.min():.3e})")
    return tuple(tuple(float(v) for v in row) for row in arr)


def _as_vector(value, dimension: int, name: str) -> Vector:
    arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.shape != (dimension,):
        raise InvalidModelError(f"{name} must have length {dimension}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise InvalidModelError(f"{name} has non-finite entries")
    return tuple(float(v) for v in arr)


def psd_sqrt(matrix) -> np.ndarray:
    """Symmetric factor L with L Lᵀ = matrix; tiny negative eigenvalues are clipped."""
    w, v = np.linalg.eigh(np.asarray(matrix, dtype=float))
    return v * np.sqrt(np.clip(w, 0.0, None))


# ── Model description ──────────────────────────────────────────────────────

@dataclass(frozen=True)
class BrownianPart:
    """Gaussian part: volatility matrix Σ and drift γ."""
    sigma: Matrix
    drift: Vector

    @property
    def dimension(self) -> int:
        return len(self.drift)

    @property
    def trace(self) -> float:
        return float(np.trace(np.asarray(self.sigma)))


@dataclass(frozen=True)
class CompoundPoissonPart:
    """Jumps at rate λ with Normal(jump_mean, jump_cov) sizes."""
    intensity: float
    jump_mean: Vector
    jump_cov: Matrix

    def __post_init__(self):
        if not (np.isfinite(self.intensity) and self.intensity > 0):
            raise InvalidModelError(f"intensity must be > 0, got {self.intensity}")

    @property
    def dimension(self) -> int:
        return len(self.jump_mean)


@dataclass(frozen=True)
class VarianceGammaPart:
    """Standard Brownian motion subordinated by a gamma process with unit mean rate and variance κ."""
    kappa: float

    def __post_init__(self):
        if not (np.isfinite(self.kappa) and self.kappa > 0):
            raise InvalidModelError(f"kappa must be > 0, got {self.kappa}")


@dataclass(frozen=True)
class ModelBlock:
    coordinates: Tuple[int, ...]
    model: "LevyModelSpec"


@dataclass(frozen=True)
class LevyModelSpec:
    """Generative description of a simulated Lévy process."""
    dimension: int
    brownian: Optional[BrownianPart] = None
    cpp_parts: Tuple[CompoundPoissonPart, ...] = ()
    vg_part: Optional[VarianceGammaPart] = None
    blocks: Tuple[ModelBlock, ...] = ()

    def __post_init__(self):
        if not isinstance(self.dimension, (int, np.integer)) or self.dimension < 1:
            raise InvalidModelError(f"dimension must be a positive integer, got {self.dimension}")
        if self.brownian is not None and self.brownian.dimension != self.dimension:
            raise InvalidModelError("brownian part dimension does not match model dimension")
        for i, part in enumerate(self.cpp_parts):
            if part.dimension != self.dimension:
                raise InvalidModelError(f"compound_poisson[{i}] dimension does not match model dimension")
        if self.blocks:
            if self.brownian is not None or self.cpp_parts or self.vg_part is not None:
                raise InvalidModelError("a blocked model carries its components inside the blocks")
            seen: List[int] = []
            for i, block in enumerate(self.blocks):
                if block.model.blocks:
                    raise InvalidModelError(f"blocks[{i}] is itself blocked; nesting is not supported")
                if block.model.dimension != len(block.coordinates):
                    raise InvalidModelError(
                        f"blocks[{i}] covers {len(block.coordinates)} coordinates "
                        f"but its model has dimension {block.model.dimension}")
                seen.extend(block.coordinates)
            if sorted(seen) != list(range(self.dimension)):
                raise InvalidModelError(
                    f"blocks must partition coordinates 0..{self.dimension - 1} exactly, got {sorted(seen)}")

    @property
    def is_blocked(self) -> bool:
        return bool(self.blocks)

    @property
    def is_empty(self) -> bool:
        return not self.blocks and self.brownian is None and not self.cpp_parts and self.vg_part is None


def brownian_part(sigma, drift) -> BrownianPart:
    drift_v = np.asarray(drift, dtype=float).reshape(-1)
    d = drift_v.shape[0]
    return BrownianPart(sigma=_as_matrix(sigma, d, "sigma"), drift=_as_vector(drift_v, d, "drift"))


def compound_poisson_part(intensity: float, jump_mean, jump_cov) -> CompoundPoissonPart:
    mean_v = np.asarray(jump_mean, dtype=float).reshape(-1)
    d = mean_v.shape[0]
    return CompoundPoissonPart(
        intensity=float(intensity),
        jump_mean=_as_vector(mean_v, d, "jump_mean"),
        jump_cov=_as_matrix(jump_cov, d, "jump_cov"),
    )


# ── Samples ────────────────────────────────────────────────────────────────

@dataclass(eq=False)
class IncrementSample:
    """n observed increments in R^d at sampling interval δ."""
    delta: float
    values: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        if not (np.isfinite(self.delta) and self.delta > 0):
            raise InvalidInputError(f"delta must be > 0, got {self.delta}")
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] < 1:
            raise InvalidInputError("sample must hold at least one increment as an n x d matrix")
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("sample contains non-finite increments")
        self.values = values

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    @property
    def dimension(self) -> int:
        return int(self.values.shape[1])

    @property
    def horizon(self) -> float:
        """T = n·δ."""
        return self.n * self.delta

    def shifted(self, offset) -> "IncrementSample":
        """Same sample with every increment moved by a constant vector."""
        offset = np.asarray(offset, dtype=float).reshape(1, -1)
        return IncrementSample(delta=self.delta, values=self.values + offset, seed=self.seed)


def aggregate_increments(sample: IncrementSample, k: int) -> IncrementSample:
    """Sum k adjacent increments → sample at step kδ (trailing remainder dropped)."""
    if k < 1 or sample.n < k:
        raise InvalidInputError(f"cannot aggregate {sample.n} increments in groups of {k}")
    m = sample.n // k
    grouped = sample.values[: m * k].reshape(m, k, sample.dimension).sum(axis=1)
    return IncrementSample(delta=sample.delta * k, values=grouped, seed=sample.seed)


# ── Component generators (one range, one stream) ───────────────────────────

def _brownian_increments(part: BrownianPart, delta: float, count: int, rng: np.random.Generator) -> np.ndarray:
    factor = psd_sqrt(part.sigma) * np.sqrt(delta)
    z = rng.standard_normal((count, part.dimension))
    return delta * np.asarray(part.drift) + z @ factor.T


def _cpp_increments(part: CompoundPoissonPart, delta: float, count: int, rng: np.random.Generator) -> np.ndarray:
    rate = part.intensity * delta
    if rate > MAX_JUMPS_PER_STEP:
        raise CapacityError(f"λδ = {rate:.3e} expected jumps per step exceeds {MAX_JUMPS_PER_STEP:.0e}")
    d = part.dimension
    counts = rng.poisson(rate, size=count)
    out = np.zeros((count, d))
    factor = psd_sqrt(part.jump_cov)
    mean = np.asarray(part.jump_mean)

    # walk the increments in batches so at most JUMP_BATCH jumps are in memory
    ends = np.cumsum(counts)
    start = 0
    while start < count:
        base = ends[start - 1] if start > 0 else 0
        stop = int(np.searchsorted(ends, base + JUMP_BATCH, side="right"))
        stop = max(stop, start + 1)
        stop = min(stop, count)
        batch_counts = counts[start:stop]
        total = int(batch_counts.sum())
        if total:
            jumps = mean + rng.standard_normal((total, d)) @ factor.T
            owner = np.repeat(np.arange(stop - start), batch_counts)
            for j in range(d):
                out[start:stop, j] = np.bincount(owner, weights=jumps[:, j], minlength=stop - start)
        start = stop
    return out


def _vg_increments(part: VarianceGammaPart, dimension: int, delta: float, count: int,
                   rng: np.random.Generator) -> np.ndarray:
    subordinator = rng.gamma(shape=delta / part.kappa, scale=part.kappa, size=count)
    z = rng.standard_normal((count, dimension))
    return np.sqrt(subordinator)[:, None] * z


def _stream(seed: int, block: int, slot: int, chunk: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(block, slot, chunk)))


def _simulate_range(spec: LevyModelSpec, delta: float, count: int, seed: int, block: int, chunk: int) -> np.ndarray:
    out = np.zeros((count, spec.dimension))
    if spec.brownian is not None:
        out += _brownian_increments(spec.brownian, delta, count, _stream(seed, block, _SLOT_BROWNIAN, chunk))
    if spec.vg_part is not None:
        out += _vg_increments(spec.vg_part, spec.dimension, delta, count,
                              _stream(seed, block, _SLOT_VARIANCE_GAMMA, chunk))
    for i, part in enumerate(spec.cpp_parts):
        out += _cpp_increments(part, delta, count, _stream(seed, block, _SLOT_FIRST_CPP + i, chunk))
    return out


def _simulate_unblocked(spec: LevyModelSpec, delta: float, n: int, seed: int, block: int,
                        workers: int) -> np.ndarray:
    ranges = [(r, r * SIM_RANGE_SIZE, min(n, (r + 1) * SIM_RANGE_SIZE))
              for r in range((n + SIM_RANGE_SIZE - 1) // SIM_RANGE_SIZE)]
    out = np.empty((n, spec.dimension))

    def run(item):
        r, lo, hi = item
        return lo, hi, _simulate_range(spec, delta, hi - lo, seed, block, r)

    if workers > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, ranges))
    else:
        results = [run(item) for item in ranges]
    for lo, hi, values in results:
        out[lo:hi] = values
    return out


# ── Public API ─────────────────────────────────────────────────────────────

def simulate_model(spec: LevyModelSpec, delta: float, n: int, seed: int, workers: int = 1) -> IncrementSample:
    """Simulate n increments of the model at step δ. Deterministic given (spec, δ, n, seed)."""
    if not (np.isfinite(delta) and delta > 0):
        raise InvalidInputError(f"delta must be > 0, got {delta}")
    if int(n) < 1:
        raise InvalidInputError(f"n must be >= 1, got {n}")
    n = int(n)
    seed = int(seed)

    blocks = spec.blocks or (ModelBlock(tuple(range(spec.dimension)), spec),)
    values = np.zeros((n, spec.dimension))
    for b, block in enumerate(blocks):
        values[:, list(block.coordinates)] = _simulate_unblocked(block.model, delta, n, seed, b, workers)

    logger.info(f"[Sim] simulated n={n} d={spec.dimension} δ={delta:g} seed={seed} "
                f"blocks={len(blocks)} T={n * delta:g}")
    return IncrementSample(delta=delta, values=values, seed=seed)


def simulate_compound_poisson(intensity: float, jump_mean, jump_cov, delta: float, n: int,
                              seed: int) -> IncrementSample:
    part = compound_poisson_part(intensity, jump_mean, jump_cov)
    spec = LevyModelSpec(dimension=part.dimension, cpp_parts=(part,))
    return simulate_model(spec, delta, n, seed)


def simulate_variance_gamma(kappa: float, delta: float, n: int, seed: int, dimension: int = 2) -> IncrementSample:
    spec = LevyModelSpec(dimension=dimension, vg_part=VarianceGammaPart(kappa=float(kappa)))
    return simulate_model(spec, delta, n, seed)


def simulate_blocks(spec: LevyModelSpec, delta: float, n: int, seed: int) -> IncrementSample:
    if not spec.is_blocked:
        raise InvalidModelError("simulate_blocks needs a model with a block structure")
    return simulate_model(spec, delta, n, seed)


def simulate_brownian(sigma, drift, delta: float, n: int, seed: int) -> IncrementSample:
    part = brownian_part(sigma, drift)
    spec = LevyModelSpec(dimension=part.dimension, brownian=part)
    return simulate_model(spec, delta, n, seed)


# ── JSON model specs ───────────────────────────────────────────────────────

def model_spec_from_dict(data: Dict, path: str = "model") -> LevyModelSpec:
    """Build a LevyModelSpec from its JSON form; errors name the offending key."""
    if not isinstance(data, dict):
        raise InvalidModelError(f"{path}: expected an object")
    try:
        dimension = int(data["dimension"])
    except (KeyError, TypeError, ValueError):
        raise InvalidModelError(f"{path}.dimension: required positive integer")

    def wrap(sub_path, fn):
        try:
            return fn()
        except InvalidModelError as e:
            raise InvalidModelError(f"{sub_path}: {e}") from None
        except (KeyError, TypeError, ValueError) as e:
            raise InvalidModelError(f"{sub_path}: malformed entry ({e})") from None

    brownian = None
    if data.get("brownian") is not None:
        b = data["brownian"]
        brownian = wrap(f"{path}.brownian", lambda: BrownianPart(
            sigma=_as_matrix(b["sigma"], dimension, "sigma"),
            drift=_as_vector(b.get("drift", [0.0] * dimension), dimension, "drift"),
        ))

    cpp_parts = []
    for i, p in enumerate(data.get("compound_poisson") or []):
        cpp_parts.append(wrap(f"{path}.compound_poisson[{i}]", lambda p=p: CompoundPoissonPart(
            intensity=float(p["intensity"]),
            jump_mean=_as_vector(p.get("jump_mean", [0.0] * dimension), dimension, "jump_mean"),
            jump_cov=_as_matrix(p.get("jump_cov", np.eye(dimension)), dimension, "jump_cov"),
        )))

    vg_part = None
    if data.get("variance_gamma") is not None:
        vg_part = wrap(f"{path}.variance_gamma",
                       lambda: VarianceGammaPart(kappa=float(data["variance_gamma"]["kappa"])))

    blocks = []
    for i, blk in enumerate(data.get("blocks") or []):
        blocks.append(ModelBlock(
            coordinates=wrap(f"{path}.blocks[{i}].coordinates",
                             lambda blk=blk: tuple(int(c) for c in blk["coordinates"])),
            model=model_spec_from_dict(blk.get("model"), f"{path}.blocks[{i}].model"),
        ))

    return wrap(path, lambda: LevyModelSpec(
        dimension=dimension, brownian=brownian, cpp_parts=tuple(cpp_parts),
        vg_part=vg_part, blocks=tuple(blocks),
    ))


def model_spec_to_dict(spec: LevyModelSpec) -> Dict:
    out: Dict = {"dimension": spec.dimension}
    if spec.brownian is not None:
        out["brownian"] = {"sigma": [list(r) for r in spec.brownian.sigma], "drift": list(spec.brownian.drift)}
    if spec.cpp_parts:
        out["compound_poisson"] = [
            {"intensity": p.intensity, "jump_mean": list(p.jump_mean), "jump_cov": [list(r) for r in p.jump_cov]}
            for p in spec.cpp_parts
        ]
    if spec.vg_part is not None:
        out["variance_gamma"] = {"kappa": spec.vg_part.kappa}
    if spec.blocks:
        out["blocks"] = [{"coordinates": list(b.coordinates), "model": model_spec_to_dict(b.model)}
                         for b in spec.blocks]
    return out


# ── Persistence ────────────────────────────────────────────────────────────

def save_sample(sample: IncrementSample, path) -> Tuple[Path, Path]:
    """Write <path>.csv (one row per increment) and a <path>.json sidecar."""
    path = Path(path)
    csv_path = path.with_suffix(".csv")
    meta_path = path.with_suffix(".json")
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    columns = [f"y{j + 1}" for j in range(sample.dimension)]
    pd.DataFrame(sample.values, columns=columns).to_csv(csv_path, index=False, float_format="%.17g")
    meta = {"delta": sample.delta, "n": sample.n, "d": sample.dimension, "seed": sample.seed}
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True))
    return csv_path, meta_path


def load_sample(path) -> IncrementSample:
    path = Path(path)
    meta_path = path.with_suffix(".json")
    try:
        meta = json.loads(meta_path.read_text())
    except FileNotFoundError:
        raise InvalidInputError(f"sample sidecar {meta_path} not found") from None
    frame = pd.read_csv(path.with_suffix(".csv"))
    values = frame.to_numpy(dtype=float)
    if values.shape != (meta["n"], meta["d"]):
        raise InvalidInputError(f"sample file shape {values.shape} disagrees with sidecar ({meta['n']}, {meta['d']})")
    return IncrementSample(delta=float(meta["delta"]), values=values, seed=meta.get("seed"))


def model_components(spec: LevyModelSpec) -> Sequence[str]:
    """Short labels of the components present (for logs and diagnostics)."""
    if spec.blocks:
        return [f"block{list(b.coordinates)}" for b in spec.blocks]
    labels = []
    if spec.brownian is not None:
        labels.append("brownian")
    labels.extend(f"cpp(λ={p.intensity:g})" for p in spec.cpp_parts)
    if spec.vg_part is not None:
        labels.append(f"vg(κ={spec.vg_part.kappa:g})")
    return labels
