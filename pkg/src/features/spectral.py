"""
Periodic-box discretization and Fourier multipliers.

Transform convention: u_hat(xi) = int u(x) exp(-i xi.x) dx, approximated on the box
[-L/2, L/2)^N by h^N * sum_j u(x_j) exp(-i xi_k.x_j). Frequencies xi_k = 2*pi*k/L in the
standard FFT wrap order, arrays row-major with axis 0 first.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence, Union

import numpy as np
import scipy.fft

from src.misc.exceptions import GridMismatchError, HermitianSymmetryError, InvalidConfigError, NonFiniteValueError
from src.misc.utils import worker_count

MAX_POINTS = 2**27
SYMMETRY_RTOL = 1e-10

Symbol = Union[Callable[[np.ndarray], np.ndarray], np.ndarray]


def _frozen(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class GridSpec:
    dim: int
    points: int
    box: float

    def __post_init__(self) -> None:
        if self.dim not in (1, 2, 3):
            raise InvalidConfigError("dim must be 1, 2 or 3, got {}".format(self.dim))
        if int(self.points) != self.points or self.points < 8 or self.points % 2:
            raise InvalidConfigError("points per axis must be even and >= 8, got {}".format(self.points))
        if not np.isfinite(self.box) or self.box <= 0:
            raise InvalidConfigError("box length must be positive, got {}".format(self.box))
        if self.points**self.dim > MAX_POINTS:
            raise InvalidConfigError("{}^{} grid points exceed the memory guard".format(self.points, self.dim))
        object.__setattr__(self, "points", int(self.points))
        object.__setattr__(self, "box", float(self.box))

    @property
    def spacing(self) -> float:
        return self.box / self.points

    @property
    def shape(self) -> tuple:
        return (self.points,) * self.dim

    @property
    def size(self) -> int:
        return self.points**self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def volume(self) -> float:
        return self.box**self.dim

    @cached_property
    def axis_coordinates(self) -> np.ndarray:
        return _frozen(-0.5 * self.box + self.spacing * np.arange(self.points))

    @cached_property
    def axis_frequencies(self) -> np.ndarray:
        return _frozen(2.0 * np.pi * np.fft.fftfreq(self.points, d=self.spacing))

    @cached_property
    def coordinates(self) -> tuple:
        return tuple(np.meshgrid(*([self.axis_coordinates] * self.dim), indexing="ij", sparse=True))

    @cached_property
    def radius_squared(self) -> np.ndarray:
        return _frozen(sum(x**2 for x in self.coordinates))

    @cached_property
    def frequency_squared(self) -> np.ndarray:
        xi = np.meshgrid(*([self.axis_frequencies] * self.dim), indexing="ij", sparse=True)
        return _frozen(sum(k**2 for k in xi))

    @cached_property
    def phase(self) -> np.ndarray:
        # exp(i xi_k L/2) = (-1)^k per axis, from centring the samples at x_0 = -L/2
        sign = np.where(np.arange(self.points) % 2 == 0, 1.0, -1.0)
        grids = np.meshgrid(*([sign] * self.dim), indexing="ij", sparse=True)
        return _frozen(np.prod(np.broadcast_arrays(*grids), axis=0))

    @property
    def center_index(self) -> int:
        return self.points // 2

    def rescaled(self, factor: float) -> "GridSpec":
        """same samples on a box of length factor*L"""
        return GridSpec(self.dim, self.points, factor * self.box)

    def refined(self, box_factor: int = 1, points_factor: int = 1) -> "GridSpec":
        return GridSpec(self.dim, self.points * points_factor, self.box * box_factor)

    def to_dict(self) -> dict:
        return {"dim": self.dim, "points": self.points, "box": self.box}


def _require_same_grid(*grids: GridSpec) -> None:
    if any(grid != grids[0] for grid in grids[1:]):
        raise GridMismatchError("fields live on different grids: {}".format(grids))


@dataclass(frozen=True, eq=False)
class Field:
    """real samples of u on the grid, values[j1, ..., jN] = u(x_j)"""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        if values.shape != self.grid.shape:
            if values.size != self.grid.size:
                raise InvalidConfigError(
                    "field has {} samples, grid needs {}".format(values.size, self.grid.size)
                )
            values = values.reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise NonFiniteValueError("field contains non-finite samples")
        object.__setattr__(self, "values", _frozen(values))

    @classmethod
    def zeros(cls, grid: GridSpec) -> "Field":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_function(cls, grid: GridSpec, function: Callable) -> "Field":
        """evaluate function(*coordinates) with broadcastable coordinate arrays"""
        return cls(grid, np.broadcast_to(function(*grid.coordinates), grid.shape))

    @classmethod
    def gaussian(cls, grid: GridSpec, width: float = 1.0, amplitude: float = 1.0, center=None) -> "Field":
        """amplitude * exp(-|x - center|^2 / width^2)"""
        center = np.zeros(grid.dim) if center is None else np.asarray(center, dtype=float)
        r2 = sum((x - c) ** 2 for x, c in zip(grid.coordinates, center))
        return cls(grid, np.broadcast_to(amplitude * np.exp(-r2 / width**2), grid.shape))

    def with_values(self, values: np.ndarray) -> "Field":
        return Field(self.grid, values)

    def shifted(self, offsets: Union[int, Sequence[int]], axis=None) -> "Field":
        """circular shift by whole grid cells"""
        if axis is None:
            offsets = [offsets] * self.grid.dim if np.isscalar(offsets) else list(offsets)
            axis = tuple(range(self.grid.dim))
        return Field(self.grid, np.roll(self.values, offsets, axis=axis))

    def on_grid(self, grid: GridSpec) -> "Field":
        """reinterpret the same samples on another grid of identical shape"""
        return Field(grid, self.values)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def norm(self) -> float:
        return float(np.sqrt(l2_inner(self, self)))

    def __add__(self, other: "Field") -> "Field":
        _require_same_grid(self.grid, other.grid)
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        _require_same_grid(self.grid, other.grid)
        return Field(self.grid, self.values - other.values)

    def __mul__(self, scalar: float) -> "Field":
        return Field(self.grid, float(scalar) * self.values)

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return Field(self.grid, -self.values)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Fourier coefficients on the frequency lattice, same layout as Field"""

    grid: GridSpec
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        coeffs = np.array(self.coeffs, dtype=np.complex128)
        if coeffs.shape != self.grid.shape:
            raise InvalidConfigError("coefficient array shape {} != grid {}".format(coeffs.shape, self.grid.shape))
        object.__setattr__(self, "coeffs", _frozen(coeffs))

    def power(self) -> np.ndarray:
        return np.abs(self.coeffs) ** 2

    def hermitian_defect(self) -> float:
        """max |c(k) - conj(c(-k))| relative to max |c|"""
        axes = tuple(range(self.grid.dim))
        mirrored = np.conj(np.roll(np.flip(self.coeffs, axis=axes), 1, axis=axes))
        scale = np.max(np.abs(self.coeffs))
        if scale == 0:
            return 0.0
        return float(np.max(np.abs(self.coeffs - mirrored)) / scale)


def forward_transform(u: Field) -> SpectralField:
    grid = u.grid
    coeffs = scipy.fft.fftn(u.values, workers=worker_count())
    return SpectralField(grid, grid.cell_volume * grid.phase * coeffs)


def inverse_transform(U: SpectralField) -> Field:
    grid = U.grid
    defect = U.hermitian_defect()
    if defect > SYMMETRY_RTOL:
        raise HermitianSymmetryError("coefficients violate Hermitian symmetry (relative defect {:.3e})".format(defect))
    values = scipy.fft.ifftn(grid.phase * U.coeffs, workers=worker_count()) / grid.cell_volume
    scale = np.max(np.abs(values.real))
    residue = np.max(np.abs(values.imag))
    if residue > SYMMETRY_RTOL * max(scale, np.finfo(float).tiny):
        raise HermitianSymmetryError("inverse transform left an imaginary residue of {:.3e}".format(residue))
    return Field(grid, values.real)


def bessel_symbol(power: float) -> Callable[[np.ndarray], np.ndarray]:
    """m(xi) = (1 + |xi|^2)^power, evaluated on |xi|^2"""

    def symbol(xi_squared: np.ndarray) -> np.ndarray:
        return (1.0 + xi_squared) ** power

    return symbol


sqrt_symbol = bessel_symbol(0.5)
quarter_symbol = bessel_symbol(0.25)
inverse_sqrt_symbol = bessel_symbol(-0.5)


def dilation_symbol(xi_squared: np.ndarray) -> np.ndarray:
    """|xi|^2 (1 + |xi|^2)^(-1/2), the weight of the dilation term B"""
    return xi_squared / np.sqrt(1.0 + xi_squared)


def apply_symbol(U: SpectralField, symbol: Symbol) -> SpectralField:
    """
    coeffs(k) <- m(xi_k) coeffs(k). Symbols are radial and take |xi|^2; an array is used as is.
    The multiplier only has to be finite where the coefficient is non-zero.
    """
    multiplier = symbol(U.grid.frequency_squared) if callable(symbol) else np.asarray(symbol)
    multiplier = np.broadcast_to(multiplier, U.grid.shape)
    used = U.coeffs != 0
    if np.any(~np.isfinite(multiplier) & used):
        raise NonFiniteValueError("multiplier is not finite at a frequency carrying energy")
    with np.errstate(invalid="ignore", over="ignore"):
        coeffs = np.where(used, multiplier * U.coeffs, 0.0)
    return SpectralField(U.grid, coeffs)


def _apply_to(u: Union[Field, SpectralField], symbol: Symbol):
    if isinstance(u, SpectralField):
        return apply_symbol(u, symbol)
    return inverse_transform(apply_symbol(forward_transform(u), symbol))


def sqrt_op(u: Union[Field, SpectralField]):
    """(-Delta + id)^(1/2)"""
    return _apply_to(u, sqrt_symbol)


def quarter_op(u: Union[Field, SpectralField]):
    """(-Delta + id)^(1/4), the H^(1/2) norm operator"""
    return _apply_to(u, quarter_symbol)


def inverse_sqrt_op(u: Union[Field, SpectralField]):
    """(-Delta + id)^(-1/2), used as the Sobolev preconditioner"""
    return _apply_to(u, inverse_sqrt_symbol)


def l2_inner(u: Field, v: Field) -> float:
    _require_same_grid(u.grid, v.grid)
    return float(u.grid.cell_volume * np.sum(u.values * v.values))


def spectral_pairing(u: Field, symbol: Symbol) -> float:
    """L^(-N) sum_k m(xi_k) |u_hat_k|^2"""
    U = forward_transform(u)
    multiplier = symbol(u.grid.frequency_squared) if callable(symbol) else symbol
    return float(np.sum(multiplier * U.power()) / u.grid.volume)


def quadratic_form_A(u: Field) -> float:
    return spectral_pairing(u, sqrt_symbol)


def quadratic_form_B(u: Field) -> float:
    return spectral_pairing(u, dilation_symbol)
