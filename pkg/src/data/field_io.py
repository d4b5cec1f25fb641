"""
CHQF field files: a 24 byte little-endian header (magic "CHQF", version u32, N u32,
M u32, L f64) followed by the M^N samples as f64 in row-major order.
"""

from pathlib import Path
from typing import Union

import numpy as np

from src.features.spectral import Field, GridSpec
from src.misc.exceptions import FieldFormatError, InvalidConfigError

MAGIC = b"CHQF"
FORMAT_VERSION = 1

HEADER_DTYPE = np.dtype(
    [("magic", "S4"), ("version", "<u4"), ("dim", "<u4"), ("points", "<u4"), ("box", "<f8")]
)
VALUE_DTYPE = np.dtype("<f8")


def save_field(u: Field, path: Union[str, Path]) -> Path:
    path = Path(path)
    header = np.zeros(1, dtype=HEADER_DTYPE)
    header[0] = (MAGIC, FORMAT_VERSION, u.grid.dim, u.grid.points, u.grid.box)
    with open(path, "wb") as stream:
        header.tofile(stream)
        np.ascontiguousarray(u.values, dtype=VALUE_DTYPE).tofile(stream)
    return path


def read_header(path: Union[str, Path]) -> GridSpec:
    """grid stored in the header, without reading the samples"""
    if Path(path).stat().st_size < HEADER_DTYPE.itemsize:
        raise FieldFormatError("{}: file shorter than the {} byte header".format(path, HEADER_DTYPE.itemsize))
    header = np.fromfile(path, dtype=HEADER_DTYPE, count=1)[0]
    if header["magic"] != MAGIC:
        raise FieldFormatError("{}: bad magic {!r}".format(path, bytes(header["magic"])))
    if header["version"] != FORMAT_VERSION:
        raise FieldFormatError("{}: unsupported format version {}".format(path, int(header["version"])))
    try:
        return GridSpec(int(header["dim"]), int(header["points"]), float(header["box"]))
    except InvalidConfigError as error:
        raise FieldFormatError("{}: invalid grid in header ({})".format(path, error)) from error


def load_field(path: Union[str, Path], grid: GridSpec = None) -> Field:
    """
    read a CHQF file; if `grid` is given the stored grid has to match it
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError("Field file can not be found: {}".format(path))
    stored = read_header(path)
    if grid is not None and grid != stored:
        raise FieldFormatError("{}: stored grid {} does not match declared {}".format(path, stored, grid))
    expected = HEADER_DTYPE.itemsize + stored.size * VALUE_DTYPE.itemsize
    actual = path.stat().st_size
    if actual != expected:
        raise FieldFormatError("{}: size {} bytes, header implies {}".format(path, actual, expected))
    values = np.fromfile(path, dtype=VALUE_DTYPE, offset=HEADER_DTYPE.itemsize)
    try:
        return Field(stored, values.reshape(stored.shape))
    except ValueError as error:
        raise FieldFormatError("{}: {}".format(path, error)) from error
