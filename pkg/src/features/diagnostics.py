"""
Collapse diagnostics of a constrained run: participation ratio, sup-norm, the local
concentration functional and the classification of a finished run.
"""

from enum import Enum
from typing import Optional, Sequence

import numpy as np
import scipy.fft

from src.features.spectral import Field
from src.misc.exceptions import EmptyHistoryError, InvalidConfigError
from src.misc.utils import worker_count


class Classification(str, Enum):
    CONVERGED = "converged"
    CONCENTRATING = "concentrating"
    SPREADING = "spreading"
    MAXITER = "maxiter"
    # only ever written by the experiment harness, for rows whose run raised
    FAILED = "failed"


def participation_ratio(u: Field) -> float:
    """(int u^2)^2 / (L^N int u^4): 1 for a constant field, ~h^N/L^N for a one-cell spike"""
    squared = u.values**2
    quartic = np.sum(squared**2)
    if quartic == 0:
        return 0.0
    h_n = u.grid.cell_volume
    return float((h_n * np.sum(squared)) ** 2 / (u.grid.volume * h_n * quartic))


def linf(u: Field) -> float:
    return u.max_abs()


def local_concentration(u: Field, radius: float = 1.0, q: float = 2.0) -> float:
    """
    sup_z int_{B_r(z)} |u|^q over all lattice centres z, via a periodic FFT
    convolution with the ball indicator
    """
    if radius <= 0 or q < 1:
        raise InvalidConfigError("need radius > 0 and q >= 1, got radius={} q={}".format(radius, q))
    grid = u.grid
    ball = np.fft.ifftshift((grid.radius_squared <= radius**2).astype(float))
    density = np.abs(u.values) ** q
    workers = worker_count()
    local = scipy.fft.ifftn(scipy.fft.fftn(density, workers=workers) * scipy.fft.fftn(ball, workers=workers), workers=workers)
    return float(grid.cell_volume * np.max(local.real))


def sign_align(u: Field) -> Field:
    """flip the global sign so the sample of largest modulus is positive"""
    peak = u.values.flat[np.argmax(np.abs(u.values))]
    return -u if peak < 0 else u


def sign_defect(u: Field) -> float:
    """L2 norm of the negative part after sign alignment, relative to ||u||"""
    aligned = sign_align(u).values
    total = np.sum(aligned**2)
    if total == 0:
        return 0.0
    return float(np.sqrt(np.sum(np.minimum(aligned, 0.0) ** 2) / total))


def detect_collapse(
    linf_history: Sequence[float],
    pr_history: Sequence[float],
    linf_factor: float = 10.0,
    pr_factor: float = 10.0,
) -> Optional[Classification]:
    """
    concentrating: sup-norm up by linf_factor while the participation ratio drops by pr_factor.
    spreading: sup-norm down by linf_factor while the participation ratio grows.
    """
    if len(linf_history) < 2 or len(pr_history) < 2:
        return None
    linf_first, linf_last = linf_history[0], linf_history[-1]
    pr_first, pr_last = pr_history[0], pr_history[-1]
    if linf_first <= 0 or pr_first <= 0:
        return None
    if linf_last >= linf_factor * linf_first and pr_last * pr_factor <= pr_first:
        return Classification.CONCENTRATING
    if linf_last * linf_factor <= linf_first and pr_last > pr_first:
        return Classification.SPREADING
    return None


def classify_run(report, config, params=None) -> Classification:
    """
    One label per run: collapse detectors first, then the residual test against config.tol,
    maxiter otherwise.

    With `params` outside the existence window, a participation ratio that dropped (grew) by
    config.pr_factor labels the run concentrating (spreading) whatever its residual.
    """
    if not report.linf_history or not report.participation_ratio_history:
        raise EmptyHistoryError("classification needs non-empty sup-norm and participation histories")
    collapse = detect_collapse(
        report.linf_history,
        report.participation_ratio_history,
        linf_factor=config.linf_factor,
        pr_factor=config.pr_factor,
    )
    if collapse is not None:
        return collapse
    if params is not None and not params.in_existence_window:
        pr_first, pr_last = report.participation_ratio_history[0], report.participation_ratio_history[-1]
        if pr_first > 0 and pr_last * config.pr_factor <= pr_first:
            return Classification.CONCENTRATING
        if pr_first > 0 and pr_last >= config.pr_factor * pr_first:
            return Classification.SPREADING
    if report.residual <= config.tol:
        return Classification.CONVERGED
    return Classification.MAXITER
