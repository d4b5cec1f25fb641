"""
Nonlocal functionals of the Choquard problem and the defect certificates built on them.

    A(u) = int |(-Delta+id)^(1/4) u|^2          (src.features.spectral.quadratic_form_A)
    D(u) = int (I_alpha * |u|^p) |u|^p
    S(u) = A(u)/2 - D(u)/(2p)
"""

from typing import Tuple

import numpy as np

from src.features.riesz import ProblemParams, riesz_convolve
from src.features.spectral import Field, l2_inner, quadratic_form_A, quadratic_form_B, sqrt_op
from src.misc.exceptions import GridMismatchError, InvalidConfigError, ZeroFieldError

MACHINE_FLOOR = np.finfo(float).tiny


def power_density(u: Field, p: float) -> Field:
    return u.with_values(np.abs(u.values) ** p)


def signed_power(u: Field, exponent: float) -> Field:
    """|u|^(exponent-1) u, which is 0 where u is 0"""
    return u.with_values(np.sign(u.values) * np.abs(u.values) ** exponent)


def riesz_potential(u: Field, params: ProblemParams) -> Field:
    """I_alpha * |u|^p"""
    return riesz_convolve(power_density(u, params.p), params)


def dterm(u: Field, params: ProblemParams) -> float:
    """raw value; the removed zero mode can make it negative for fields with a large mean"""
    density = power_density(u, params.p)
    return l2_inner(riesz_convolve(density, params), density)


def nonlinearity(u: Field, params: ProblemParams) -> Field:
    """K~(u) = (I_alpha * |u|^p) |u|^(p-2) u, the right side of the equation"""
    potential = riesz_potential(u, params)
    return u.with_values(potential.values * signed_power(u, params.p - 1).values)


def dterm_gradient(u: Field, params: ProblemParams) -> Field:
    """K(u) = 2p K~(u), so that dD(u)[phi] = <K(u), phi>"""
    return 2 * params.p * nonlinearity(u, params)


def action(u: Field, params: ProblemParams) -> float:
    return 0.5 * quadratic_form_A(u) - dterm(u, params) / (2 * params.p)


def _normalized(value: float, scale: float) -> float:
    return value / max(scale, MACHINE_FLOOR)


def nehari_defect(u: Field, params: ProblemParams) -> float:
    """(A - D)/A, zero on the zero field by convention"""
    a_value = quadratic_form_A(u)
    return _normalized(a_value - dterm(u, params), a_value)


def pohozaev_functional(u: Field, params: ProblemParams) -> float:
    """(N A - B)/2 - (N+alpha)/(2p) D, the derivative of S along u(x/lambda) at lambda = 1"""
    n = params.dim
    return 0.5 * (n * quadratic_form_A(u) - quadratic_form_B(u)) - (n + params.alpha) / (2 * params.p) * dterm(
        u, params
    )


def pohozaev_defect(u: Field, params: ProblemParams) -> float:
    return _normalized(pohozaev_functional(u, params), quadratic_form_A(u))


def dilate(u: Field, factor: float) -> Field:
    """u(x/lambda): the same samples on the box of length lambda*L"""
    return u.on_grid(u.grid.rescaled(factor))


def pohozaev_dilation_check(u: Field, params: ProblemParams, eps: float = 1e-4) -> Tuple[float, float]:
    """closed-form Pohozaev functional and the centred difference of S(u_lambda) at lambda = 1"""
    closed = pohozaev_functional(u, params)
    finite = (action(dilate(u, 1 + eps), params) - action(dilate(u, 1 - eps), params)) / (2 * eps)
    return closed, finite


def euler_lagrange_residual(u: Field, params: ProblemParams) -> float:
    """||(-Delta+id)^(1/2) u - K~(u)|| / ||(-Delta+id)^(1/2) u||, 0 for the zero field"""
    lhs = sqrt_op(u)
    scale = lhs.norm()
    if scale == 0:
        return 0.0
    return (lhs - nonlinearity(u, params)).norm() / scale


def hls_ratio(v: Field, params: ProblemParams) -> float:
    """D(v) / (int |v|^s)^((N+alpha)/N) with s = 2Np/(N+alpha); bounded above by HLS"""
    if not np.any(v.values):
        raise ZeroFieldError("hls_ratio is undefined for the zero field")
    s = params.hls_exponent
    lebesgue = v.grid.cell_volume * np.sum(np.abs(v.values) ** s)
    return dterm(v, params) / lebesgue ** ((params.dim + params.alpha) / params.dim)


def _separated_pair(w: Field, g: Field, shift: int) -> Tuple[Field, Field]:
    if w.grid != g.grid:
        raise GridMismatchError("splitting needs both profiles on one grid")
    if not 0 <= shift < w.grid.points:
        raise InvalidConfigError("shift must lie in [0, {}), got {}".format(w.grid.points, shift))
    g_shifted = g.shifted(shift, axis=0)
    return w + g_shifted, g_shifted


def brezis_lieb_gap(w: Field, g: Field, shift: int, params: ProblemParams) -> float:
    """|D(w + g_m) - D(g_m) - D(w)| with g_m the circular shift of g along axis 0"""
    w_m, g_m = _separated_pair(w, g, shift)
    return abs(dterm(w_m, params) - dterm(g_m, params) - dterm(w, params))


def quadratic_splitting_gap(w: Field, g: Field, shift: int) -> float:
    """|A(w + g_m) - A(w) - A(g_m)|, the cross term of the H^(1/2) norm"""
    w_m, g_m = _separated_pair(w, g, shift)
    return abs(quadratic_form_A(w_m) - quadratic_form_A(w) - quadratic_form_A(g_m))


def lebesgue_splitting_gap(w: Field, g: Field, shift: int, q: float, s: float) -> float:
    """int ||w_m|^q - |w_m - w|^q - |w|^q|^(s/q) with w_m = w + g_m, for 1 <= q <= s"""
    if not 1 <= q <= s:
        raise InvalidConfigError("need 1 <= q <= s, got q={} s={}".format(q, s))
    w_m, g_m = _separated_pair(w, g, shift)
    pointwise = np.abs(np.abs(w_m.values) ** q - np.abs(g_m.values) ** q - np.abs(w.values) ** q)
    return float(w.grid.cell_volume * np.sum(pointwise ** (s / q)))
