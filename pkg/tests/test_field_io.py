"""
Field persistence tests — CSV layouts, JSON header + binary payload, JSON documents.

Run: pytest tests/test_field_io.py -v
"""
import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT))

from characteristic_function import ComplexField, FreqGrid  # noqa: E402
from field_io import (  # noqa: E402
    FORMAT_TAG, read_field_binary, write_field_binary, write_field_csv, write_json, write_slice_csv,
)
from fourier_inversion import DensityField, SpaceGrid  # noqa: E402
from levy_errors import InvalidInputError  # noqa: E402


def _masked_density():
    grid = SpaceGrid(2, 8, 0.5)
    values = np.arange(64, dtype=float).reshape(grid.shape) - 10.0
    mask = grid.norms() < 0.5
    values[mask] = np.nan
    return DensityField(grid, values, "nu_hat", mask=mask, imag_residual=1e-9)


def test_density_binary_round_trip(tmp_path):
    field = _masked_density()
    paths = write_field_binary(field, tmp_path / "nu_hat")
    header = json.loads(paths["header"].read_text())
    assert header["format"] == FORMAT_TAG
    assert header["domain"] == "space" and header["dtype"] == "<f8"
    assert header["mask_offset"] == 64 * 8
    assert paths["payload"].stat().st_size == 64 * 8 + 64

    back = read_field_binary(tmp_path / "nu_hat")
    assert back.grid == field.grid and back.quantity == "nu_hat"
    assert np.array_equal(back.mask, field.mask)
    assert np.array_equal(back.values[~back.mask], field.values[~field.mask])
    assert back.imag_residual == pytest.approx(1e-9)


def test_complex_binary_round_trip(tmp_path):
    grid = FreqGrid(1, 3.0, 16)
    values = np.exp(1j * grid.axis())
    mask = np.abs(grid.axis()) > 2.5
    write_field_binary(ComplexField(grid, values, mask=mask), tmp_path / "psi", quantity="psi_hat")
    back = read_field_binary(tmp_path / "psi")
    assert isinstance(back, ComplexField)
    assert back.grid == grid
    assert np.array_equal(back.values, values) and np.array_equal(back.mask, mask)


def test_read_rejects_foreign_header(tmp_path):
    write_field_binary(_masked_density(), tmp_path / "f")
    header = json.loads((tmp_path / "f.json").read_text())
    header["format"] = "other/1"
    (tmp_path / "f.json").write_text(json.dumps(header))
    with pytest.raises(InvalidInputError):
        read_field_binary(tmp_path / "f")
    with pytest.raises(InvalidInputError):
        read_field_binary(tmp_path / "absent")


def test_space_and_frequency_csv_columns(tmp_path):
    space = pd.read_csv(write_field_csv(_masked_density(), tmp_path / "nu.csv"))
    assert list(space.columns) == ["x1", "x2", "value", "mask"]
    assert len(space) == 64 and space["mask"].sum() == 1

    grid = FreqGrid(2, 1.0, 4)
    freq = pd.read_csv(write_field_csv(ComplexField(grid, np.ones(grid.shape) * 1j), tmp_path / "psi.csv"))
    assert list(freq.columns) == ["u1", "u2", "real", "imag", "mask"]
    assert (freq["imag"] == 1.0).all()


def test_slice_along_first_axis(tmp_path):
    field = _masked_density()
    frame = pd.read_csv(write_slice_csv(field, tmp_path / "slice.csv", axis=0))
    assert list(frame.columns) == ["x1", "value", "mask"]
    assert np.allclose(frame["x1"], field.grid.axis())
    zero = field.grid.zero_index[1]
    defined = frame["mask"] == 0
    assert np.allclose(frame["value"][defined], field.values[:, zero][defined.to_numpy()])
    with pytest.raises(InvalidInputError):
        write_slice_csv(field, tmp_path / "bad.csv", axis=2)


def test_json_sorted_and_non_finite_to_null(tmp_path):
    path = write_json({"b": float("nan"), "a": np.float64(1.5), "c": [np.int64(2), float("inf")],
                       "d": np.bool_(True)}, tmp_path / "doc.json")
    text = path.read_text()
    assert text.index('"a"') < text.index('"b"') < text.index('"c"')
    assert json.loads(text) == {"a": 1.5, "b": None, "c": [2, None], "d": True}
