"""
Field persistence for plotting and side-by-side comparison

CSV (one row per node):
    space fields      x1..xd, value, mask
    frequency fields  u1..ud, real, imag, mask
    slices            x<axis>, value, mask   (other coordinates at their zero node)

JSON header + little-endian binary (``<stem>.json`` / ``<stem>.bin``):
    header  {"format": "levy-field/1", "domain": "space" | "frequency",
             "quantity", "dimension", "points", "spacing" | "u_max",
             "dtype": "<f8" | "<c16", "order": "C",
             "mask_dtype": "|u1", "mask_offset": bytes of the value block,
             "imag_residual"}
    payload values in C order, then one byte per node for the mask.

JSON documents (diagnostics, metrics) are written with sorted keys so reruns
produce identical bytes.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Dict, Union

import numpy as np
import pandas as pd

from characteristic_function import ComplexField, FreqGrid
from fourier_inversion import DensityField, SpaceGrid
from levy_errors import InvalidInputError

FORMAT_TAG = "levy-field/1"
CSV_FLOAT_FORMAT = "%.17g"

Field = Union[DensityField, ComplexField]


def _json_default(value):
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"cannot serialise {type(value).__name__}")


def _finite_or_none(value):
    if isinstance(value, dict):
        return {k: _finite_or_none(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite_or_none(v) for v in value]
    if isinstance(value, (float, np.floating)) and not math.isfinite(value):
        return None
    return value


def write_json(data: Dict, path) -> Path:
    """Sorted-key JSON; non-finite floats become null."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_finite_or_none(data), indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


# ── CSV ────────────────────────────────────────────────────────────────────

def write_field_csv(field: Field, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    nodes = field.grid.nodes()
    d = field.grid.dimension
    if isinstance(field, ComplexField):
        frame = pd.DataFrame(nodes, columns=[f"u{j + 1}" for j in range(d)])
        frame["real"] = field.values.real.reshape(-1)
        frame["imag"] = field.values.imag.reshape(-1)
    else:
        frame = pd.DataFrame(nodes, columns=[f"x{j + 1}" for j in range(d)])
        frame["value"] = field.values.reshape(-1)
    frame["mask"] = field.mask.reshape(-1).astype(int)
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
    return path


def write_slice_csv(field: DensityField, path, axis: int = 0) -> Path:
    """Values along one axis with every other coordinate at its zero node."""
    grid = field.grid
    if not 0 <= axis < grid.dimension:
        raise InvalidInputError(f"slice axis {axis} outside 0..{grid.dimension - 1}")
    index = list(grid.zero_index)
    index[axis] = slice(None)
    frame = pd.DataFrame({
        f"x{axis + 1}": grid.axis(),
        "value": field.values[tuple(index)],
        "mask": field.mask[tuple(index)].astype(int),
    })
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
    return path


# ── JSON header + binary ───────────────────────────────────────────────────

def write_field_binary(field: Field, stem, quantity: str = None) -> Dict[str, Path]:
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    grid = field.grid
    if isinstance(field, ComplexField):
        values = np.ascontiguousarray(field.values, dtype="<c16")
        header = {"domain": "frequency", "u_max": grid.u_max, "dtype": "<c16",
                  "quantity": quantity or "complex_field", "imag_residual": 0.0}
    else:
        values = np.ascontiguousarray(field.values, dtype="<f8")
        header = {"domain": "space", "spacing": grid.spacing, "dtype": "<f8",
                  "quantity": quantity or field.quantity, "imag_residual": field.imag_residual}
    header.update({
        "format": FORMAT_TAG,
        "dimension": grid.dimension,
        "points": grid.points,
        "order": "C",
        "mask_dtype": "|u1",
        "mask_offset": values.nbytes,
    })
    bin_path = stem.with_suffix(".bin")
    with open(bin_path, "wb") as fh:
        fh.write(values.tobytes(order="C"))
        fh.write(np.ascontiguousarray(field.mask, dtype="u1").tobytes(order="C"))
    json_path = write_json(header, stem.with_suffix(".json"))
    return {"header": json_path, "payload": bin_path}


def read_field_binary(stem) -> Field:
    stem = Path(stem)
    try:
        header = json.loads(stem.with_suffix(".json").read_text())
        payload = stem.with_suffix(".bin").read_bytes()
    except FileNotFoundError as e:
        raise InvalidInputError(f"field file missing: {e.filename}") from None
    if header.get("format") != FORMAT_TAG:
        raise InvalidInputError(f"{stem}: not a {FORMAT_TAG} field header")

    d, m = int(header["dimension"]), int(header["points"])
    shape = (m,) * d
    offset = int(header["mask_offset"])
    values = np.frombuffer(payload[:offset], dtype=header["dtype"]).reshape(shape).copy()
    mask = np.frombuffer(payload[offset:], dtype="u1").reshape(shape).astype(bool)
    if header["domain"] == "frequency":
        return ComplexField(FreqGrid(dimension=d, u_max=float(header["u_max"]), points=m), values, mask=mask)
    return DensityField(SpaceGrid(dimension=d, points=m, spacing=float(header["spacing"])), values,
                        header["quantity"], mask=mask, imag_residual=float(header.get("imag_residual") or 0.0))
