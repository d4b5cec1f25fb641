"""
Riesz potential I_alpha(x) = A_{N,alpha} |x|^(alpha-N), whose Fourier symbol is |xi|^(-alpha)
under the transform convention of src.features.spectral.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numba
import numpy as np
from numba import jit, prange
from scipy.special import gamma

from src.features.spectral import Field, GridSpec, apply_symbol, forward_transform, inverse_transform
from src.misc.exceptions import GridMismatchError, InvalidConfigError, SizeGuardError
from src.misc.utils import worker_count

DIRECT_ORACLE_MAX_POINTS = 4096
ZERO_MODES = ("remove", "cell")


def riesz_constant(dim: int, alpha: float) -> float:
    """A_{N,alpha} = Gamma((N-alpha)/2) / (2^alpha pi^(N/2) Gamma(alpha/2))"""
    if not 0 < alpha < dim:
        raise InvalidConfigError("alpha must lie in (0, N), got alpha={} N={}".format(alpha, dim))
    value = gamma((dim - alpha) / 2) / (2**alpha * math.pi ** (dim / 2) * gamma(alpha / 2))
    if not (np.isfinite(value) and value > 0):
        raise InvalidConfigError("Riesz constant is not finite for alpha={} N={}".format(alpha, dim))
    return float(value)


def sphere_area(dim: int) -> float:
    """surface measure of the unit sphere in R^N"""
    return 2 * math.pi ** (dim / 2) / gamma(dim / 2)


def equal_volume_radius(volume: float, dim: int) -> float:
    """radius of the N-ball whose volume equals `volume`"""
    return (volume * gamma(dim / 2 + 1)) ** (1 / dim) / math.sqrt(math.pi)


@dataclass(frozen=True)
class ProblemParams:
    dim: int
    alpha: float
    p: float
    zero_mode: str = "remove"

    def __post_init__(self) -> None:
        if self.dim not in (1, 2, 3):
            raise InvalidConfigError("dim must be 1, 2 or 3, got {}".format(self.dim))
        if not 0 < self.alpha < self.dim:
            raise InvalidConfigError("alpha must lie in (0, N), got alpha={} N={}".format(self.alpha, self.dim))
        if not self.p > 1:
            raise InvalidConfigError("p must exceed 1, got {}".format(self.p))
        if self.zero_mode not in ZERO_MODES:
            raise InvalidConfigError("zero_mode must be one of {}, got {}".format(ZERO_MODES, self.zero_mode))
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "p", float(self.p))

    @property
    def p_lower_exist(self) -> float:
        return (self.dim + self.alpha) / self.dim

    @property
    def p_upper(self) -> float:
        if self.dim == 1:
            return math.inf
        return (self.dim + self.alpha) / (self.dim - 1)

    @property
    def p_lower_nonexist(self) -> float:
        return (self.dim + self.alpha) / (self.dim + 1)

    @property
    def hls_exponent(self) -> float:
        """2Np/(N+alpha), the Lebesgue exponent paired with D by HLS"""
        return 2 * self.dim * self.p / (self.dim + self.alpha)

    @property
    def riesz_constant(self) -> float:
        return riesz_constant(self.dim, self.alpha)

    @property
    def regime(self) -> str:
        """existence window, proven nonexistence, or the strip in between"""
        if self.p_lower_exist < self.p < self.p_upper:
            return "existence"
        if self.p <= self.p_lower_nonexist or self.p >= self.p_upper:
            return "nonexistence"
        return "untheorized"

    @property
    def in_existence_window(self) -> bool:
        return self.regime == "existence"

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "p": self.p, "zero_mode": self.zero_mode}


@lru_cache(maxsize=32)
def riesz_multiplier(grid: GridSpec, alpha: float, zero_mode: str = "remove") -> np.ndarray:
    """
    |xi_k|^(-alpha) on the lattice. The xi = 0 entry is 0 ("remove") or the mean of
    |xi|^(-alpha) over the ball with the volume of the zero cell ("cell").
    """
    xi_squared = grid.frequency_squared
    multiplier = np.zeros(grid.shape)
    nonzero = xi_squared > 0
    multiplier[nonzero] = xi_squared[nonzero] ** (-alpha / 2)
    if zero_mode == "cell":
        cell = (2 * math.pi / grid.box) ** grid.dim
        radius = equal_volume_radius(cell, grid.dim)
        multiplier[(0,) * grid.dim] = sphere_area(grid.dim) * radius ** (grid.dim - alpha) / ((grid.dim - alpha) * cell)
    multiplier.flags.writeable = False
    return multiplier


def _check_dims(v: Field, params: ProblemParams) -> None:
    if v.grid.dim != params.dim:
        raise GridMismatchError("field is {}-dimensional, params are for N={}".format(v.grid.dim, params.dim))


def riesz_convolve(v: Field, params: ProblemParams) -> Field:
    """spectral I_alpha * v on the periodic box"""
    _check_dims(v, params)
    multiplier = riesz_multiplier(v.grid, params.alpha, params.zero_mode)
    return inverse_transform(apply_symbol(forward_transform(v), multiplier))


# one output point per prange iteration, fixed summation order over sources
@jit("f8[:](f8[:,:],f8[:],f8,f8,f8)", nopython=True, cache=True, parallel=True)
def direct_riesz_sum(points, values, weight, exponent, self_term):
    n_points = points.shape[0]
    out = np.zeros(n_points)
    for i in prange(n_points):
        acc = 0.0
        for j in range(n_points):
            if j != i:
                r2 = 0.0
                for d in range(points.shape[1]):
                    diff = points[i, d] - points[j, d]
                    r2 += diff * diff
                acc += values[j] * r2 ** (0.5 * exponent)
        out[i] = acc * weight + values[i] * self_term
    return out


def riesz_convolve_direct(v: Field, params: ProblemParams, force: bool = False) -> Field:
    """
    Free-space quadrature of I_alpha * v over the samples in the box, no periodic images.
    The singular self-cell is replaced by the equal-volume ball and integrated exactly.
    """
    _check_dims(v, params)
    grid = v.grid
    if grid.size > DIRECT_ORACLE_MAX_POINTS and not force:
        raise SizeGuardError(
            "direct oracle refuses {} points (limit {}), pass force to override".format(
                grid.size, DIRECT_ORACLE_MAX_POINTS
            )
        )
    dim, alpha = params.dim, params.alpha
    radius = equal_volume_radius(grid.cell_volume, dim)
    self_term = sphere_area(dim) * radius**alpha / alpha
    points = np.stack([np.broadcast_to(x, grid.shape).ravel() for x in grid.coordinates], axis=1)
    numba.set_num_threads(min(worker_count(), numba.config.NUMBA_NUM_THREADS))
    summed = direct_riesz_sum(
        np.ascontiguousarray(points, dtype=np.float64),
        np.array(v.values.ravel(), dtype=np.float64, order="C"),
        grid.cell_volume,
        alpha - dim,
        self_term,
    )
    return Field(grid, params.riesz_constant * summed.reshape(grid.shape))
