import numpy as np
import pytest

from src.data.field_io import FORMAT_VERSION, HEADER_DTYPE, load_field, read_header, save_field
from src.features.spectral import Field, GridSpec
from src.misc.exceptions import FieldFormatError


def test_round_trip_is_bit_identical(tmp_path, grid_2d, rng):
    u = Field(grid_2d, rng.normal(size=grid_2d.shape))
    path = save_field(u, tmp_path / "u.chqf")
    back = load_field(path)
    assert back.grid == grid_2d
    np.testing.assert_array_equal(back.values, u.values)


def test_layout(tmp_path):
    grid = GridSpec(1, 8, 2.5)
    u = Field(grid, np.arange(8, dtype=float))
    raw = save_field(u, tmp_path / "u.chqf").read_bytes()
    assert HEADER_DTYPE.itemsize == 24
    assert len(raw) == 24 + 8 * 8
    assert raw[:4] == b"CHQF"
    assert np.frombuffer(raw[4:16], dtype="<u4").tolist() == [FORMAT_VERSION, 1, 8]
    assert np.frombuffer(raw[16:24], dtype="<f8")[0] == 2.5
    np.testing.assert_array_equal(np.frombuffer(raw[24:], dtype="<f8"), u.values)


def test_header_only(tmp_path, grid_2d):
    path = save_field(Field.zeros(grid_2d), tmp_path / "u.chqf")
    assert read_header(path) == grid_2d


def test_truncated_file(tmp_path, grid_2d):
    path = save_field(Field.gaussian(grid_2d), tmp_path / "u.chqf")
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(FieldFormatError):
        load_field(path)
    path.write_bytes(b"CHQF")
    with pytest.raises(FieldFormatError):
        load_field(path)


def test_bad_magic_and_version(tmp_path, grid_2d):
    path = save_field(Field.gaussian(grid_2d), tmp_path / "u.chqf")
    raw = bytearray(path.read_bytes())
    path.write_bytes(b"XXXX" + bytes(raw[4:]))
    with pytest.raises(FieldFormatError):
        load_field(path)
    raw[4:8] = np.array([FORMAT_VERSION + 1], dtype="<u4").tobytes()
    path.write_bytes(bytes(raw))
    with pytest.raises(FieldFormatError):
        load_field(path)


def test_invalid_grid_in_header(tmp_path, grid_2d):
    path = save_field(Field.gaussian(grid_2d), tmp_path / "u.chqf")
    raw = bytearray(path.read_bytes())
    raw[12:16] = np.array([7], dtype="<u4").tobytes()
    path.write_bytes(bytes(raw))
    with pytest.raises(FieldFormatError):
        load_field(path)


def test_declared_grid_must_match(tmp_path, grid_2d):
    path = save_field(Field.gaussian(grid_2d), tmp_path / "u.chqf")
    assert load_field(path, grid_2d).grid == grid_2d
    with pytest.raises(FieldFormatError):
        load_field(path, GridSpec(2, 32, 8.0))


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_field(tmp_path / "absent.chqf")


def test_non_finite_payload(tmp_path, grid_2d):
    path = save_field(Field.gaussian(grid_2d), tmp_path / "u.chqf")
    raw = bytearray(path.read_bytes())
    raw[24:32] = np.array([np.nan], dtype="<f8").tobytes()
    path.write_bytes(bytes(raw))
    with pytest.raises(FieldFormatError):
        load_field(path)
