"""
Experiment driver: sweeps over (grid, alpha, p), refinement studies, the Brezis-Lieb splitting
table and the spectral-vs-direct Riesz comparison. Tables are pandas DataFrames.
"""

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from src.data.field_io import save_field
from src.features.diagnostics import Classification
from src.features.functionals import brezis_lieb_gap, dterm, lebesgue_splitting_gap, quadratic_splitting_gap
from src.features.riesz import ProblemParams, riesz_convolve, riesz_convolve_direct
from src.features.spectral import Field, GridSpec, quadratic_form_A
from src.misc.exceptions import InvalidConfigError, SizeGuardError
from src.misc.utils import format_number
from src.models.solver import SolverConfig, rescale_to_solution, solve_ground_state

SWEEP_COLUMNS = ["N", "alpha", "p", "L", "M", "mp", "residual", "nehari", "pohozaev", "classification", "seconds"]
REFINE_MAX_POINTS = 2**22


@dataclass(frozen=True)
class SweepPlan:
    grids: Tuple[GridSpec, ...]
    alphas: Tuple[float, ...]
    ps: Tuple[float, ...]
    config: SolverConfig
    repeats: int = 1
    zero_mode: str = "remove"

    def __post_init__(self) -> None:
        object.__setattr__(self, "grids", tuple(self.grids))
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        object.__setattr__(self, "ps", tuple(float(p) for p in self.ps))
        if self.repeats < 1:
            raise InvalidConfigError("repeats must be >= 1, got {}".format(self.repeats))
        if any(not p > 1 for p in self.ps):
            raise InvalidConfigError("every p must exceed 1, got {}".format(self.ps))
        for grid in self.grids:
            for alpha in self.alphas:
                if not 0 < alpha < grid.dim:
                    raise InvalidConfigError("alpha={} is outside (0, {}) for grid {}".format(alpha, grid.dim, grid))

    def cases(self) -> List[Tuple[GridSpec, float, float, int]]:
        """every (grid, alpha, p, repeat), sorted by (N, alpha, p, L, M, repeat)"""
        cases = [
            (grid, alpha, p, repeat)
            for grid in self.grids
            for alpha in self.alphas
            for p in self.ps
            for repeat in range(self.repeats)
        ]
        return sorted(cases, key=lambda case: (case[0].dim, case[1], case[2], case[0].box, case[0].points, case[3]))


@dataclass
class SweepRow:
    N: int
    alpha: float
    p: float
    L: float
    M: int
    mp_estimate: float
    residual: float
    nehari: float
    pohozaev: float
    classification: str
    wall_time_seconds: float
    repeat: int = 0
    seed: int = 0
    error: str = ""

    def to_record(self) -> dict:
        """CSV column names"""
        record = asdict(self)
        record["mp"] = record.pop("mp_estimate")
        record["seconds"] = record.pop("wall_time_seconds")
        return record


def row_seed(seed: int, index: int) -> int:
    """independent stream per row, fixed by (plan seed, row index)"""
    return int(np.random.SeedSequence(seed, spawn_key=(index,)).generate_state(1)[0])


def snapshot_name(grid: GridSpec, alpha: float, p: float, repeat: int = 0) -> str:
    name = "{}d_a{}_p{}_M{}".format(grid.dim, format_number(alpha), format_number(p), grid.points)
    if repeat:
        name += "_r{}".format(repeat)
    return name + ".chqf"


def _run_case(job) -> SweepRow:
    index, (grid, alpha, p, repeat), config, zero_mode, snapshot_dir = job
    seed = row_seed(config.seed, index)
    nan = float("nan")
    started = time.perf_counter()
    try:
        params = ProblemParams(grid.dim, alpha, p, zero_mode)
        init = config.init if repeat == 0 else "random"
        w, report = solve_ground_state(init, params, config.with_updates(seed=seed), grid=grid)
        if snapshot_dir is not None and report.mp_estimate > 0:
            save_field(
                rescale_to_solution(w, report.mp_estimate, params),
                Path(snapshot_dir) / snapshot_name(grid, alpha, p, repeat),
            )
        values = (report.mp_estimate, report.residual, report.nehari, report.pohozaev)
        classification, error = Classification(report.classification).value, ""
    except Exception as exc:  # one failing row never aborts the sweep
        values = (nan, nan, nan, nan)
        classification, error = Classification.FAILED.value, "{}: {}".format(type(exc).__name__, exc)
    return SweepRow(
        grid.dim, alpha, p, grid.box, grid.points, *values, classification, time.perf_counter() - started,
        repeat=repeat, seed=seed, error=error,
    )


def sweep(plan: SweepPlan, workers: int = 1, snapshot_dir=None, progress: bool = True) -> List[SweepRow]:
    """
    one independent solve per case, in parallel processes when workers > 1;
    rows come back in case order whatever the worker count
    """
    jobs = [(index, case, plan.config, plan.zero_mode, snapshot_dir) for index, case in enumerate(plan.cases())]
    if not jobs:
        return []
    if snapshot_dir is not None:
        Path(snapshot_dir).mkdir(parents=True, exist_ok=True)
    bar = tqdm(total=len(jobs), desc="sweep", disable=not progress)
    rows = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            for row in executor.map(_run_case, jobs):
                rows.append(row)
                bar.update()
    else:
        for job in jobs:
            rows.append(_run_case(job))
            bar.update()
    bar.close()
    return rows


def sweep_table(rows: Sequence[SweepRow]) -> pd.DataFrame:
    """rows in the fixed CSV column order; an empty sweep gives the header only"""
    return pd.DataFrame([row.to_record() for row in rows], columns=SWEEP_COLUMNS)


def refinement_step(level: int) -> str:
    """what changed from the previous level: nothing, the points or the box"""
    if level == 0:
        return "base"
    return "points" if level % 2 else "box"


def refinement_grids(base: GridSpec, levels: int) -> List[GridSpec]:
    """(L, M), (L, 2M), (2L, 2M), (2L, 4M), ...: points and box double in turn"""
    grids = [base]
    for level in range(1, levels):
        previous = grids[-1]
        grids.append(previous.refined(points_factor=2) if refinement_step(level) == "points" else previous.refined(box_factor=2))
    return grids


def refinement_is_monotone(table: pd.DataFrame) -> bool:
    """
    delta_mp non-increasing along the points doublings and along the box doublings, each
    compared with its own kind. The two kinds are not comparable: at fixed L the spectral
    error is already at round-off while every box doubling removes part of the O(1/L)
    truncation error.
    """
    for step in ("points", "box"):
        deltas = table.loc[table["step"] == step, "delta_mp"].to_numpy()
        if any(later > earlier for earlier, later in zip(deltas, deltas[1:])):
            return False
    return True


def refinement_study(
    params: ProblemParams,
    base: GridSpec,
    levels: int,
    config: SolverConfig,
    max_points: int = REFINE_MAX_POINTS,
    force: bool = False,
    progress: bool = True,
) -> pd.DataFrame:
    """
    solve on each level; delta_mp is the relative M_p change to the previous level
    """
    if levels < 1:
        raise InvalidConfigError("levels must be >= 1, got {}".format(levels))
    grids = refinement_grids(base, levels)
    if grids[-1].size > max_points and not force:
        raise SizeGuardError(
            "finest refinement grid has {} points (limit {}), pass force to override".format(grids[-1].size, max_points)
        )
    rows = []
    previous_mp = None
    for level, grid in enumerate(tqdm(grids, desc="refine", disable=not progress)):
        started = time.perf_counter()
        _, report = solve_ground_state(config.init, params, config, grid=grid)
        mp = report.mp_estimate
        rows.append(
            {
                "level": level,
                "step": refinement_step(level),
                "L": grid.box,
                "M": grid.points,
                "mp": mp,
                "delta_mp": float("nan") if previous_mp is None else abs(mp - previous_mp) / abs(mp),
                "residual": report.residual,
                "nehari": report.nehari,
                "pohozaev": report.pohozaev,
                "classification": Classification(report.classification).value,
                "iters": report.iters,
                "seconds": time.perf_counter() - started,
            }
        )
        previous_mp = mp
    return pd.DataFrame(rows)


def brezis_lieb_demo(
    params: ProblemParams, grid: GridSpec, widths: Sequence[float], shifts: Sequence[int]
) -> pd.DataFrame:
    """
    Gaussian pair w, g centred at the origin, g moved by `shift` cells along axis 0.
    Gaps of D (nonlocal), A (quadratic) and the local Lebesgue splitting, each relative to
    its value on w.
    """
    if len(widths) != 2 or min(widths) <= 0:
        raise InvalidConfigError("widths must be two positive numbers, got {}".format(widths))
    shifts = [int(m) for m in shifts]
    if any(b <= a for a, b in zip(shifts, shifts[1:])):
        raise InvalidConfigError("shifts must be strictly increasing, got {}".format(shifts))
    if shifts and (shifts[0] < 0 or shifts[-1] > grid.points // 2):
        raise InvalidConfigError("shifts must lie in [0, {}], got {}".format(grid.points // 2, shifts))
    w = Field.gaussian(grid, width=widths[0])
    g = Field.gaussian(grid, width=widths[1])
    d_w = dterm(w, params)
    a_w = quadratic_form_A(w)
    s = params.hls_exponent
    q = min(2.0, s)
    lebesgue_w = grid.cell_volume * np.sum(np.abs(w.values) ** s)
    rows = []
    for shift in shifts:
        gap = brezis_lieb_gap(w, g, shift, params)
        gap_a = quadratic_splitting_gap(w, g, shift)
        gap_l = lebesgue_splitting_gap(w, g, shift, q, s)
        rows.append(
            {
                "shift": shift,
                "distance": shift * grid.spacing,
                "gap": gap,
                "relative_gap": gap / d_w,
                "quadratic_gap": gap_a,
                "relative_quadratic_gap": gap_a / a_w,
                "lebesgue_gap": gap_l,
                "relative_lebesgue_gap": gap_l / lebesgue_w,
            }
        )
    columns = [
        "shift", "distance", "gap", "relative_gap", "quadratic_gap",
        "relative_quadratic_gap", "lebesgue_gap", "relative_lebesgue_gap",
    ]
    return pd.DataFrame(rows, columns=columns)


def _region_masks(grid: GridSpec) -> List[Tuple[str, np.ndarray]]:
    # sup-norm distance from the centre, in thirds of the half box
    reach = np.zeros(grid.shape)
    for x in grid.coordinates:
        reach = np.maximum(reach, np.abs(x))
    sixth = grid.box / 6
    return [
        ("interior", reach < sixth),
        ("middle", (reach >= sixth) & (reach < 2 * sixth)),
        ("outer", reach >= 2 * sixth),
    ]


def riesz_oracle_table(
    params: ProblemParams, grid: GridSpec, width: float = 1.0, source: str = "gaussian", force: bool = False
) -> pd.DataFrame:
    """
    per-region max error of the spectral convolution against the direct free-space sum,
    relative to the largest direct value in that region (0 where both vanish)
    """
    if source == "gaussian":
        v = Field.gaussian(grid, width=width)
    elif source == "zero":
        v = Field.zeros(grid)
    else:
        raise InvalidConfigError("oracle input must be 'gaussian' or 'zero', got {}".format(source))
    direct = riesz_convolve_direct(v, params, force=force).values
    spectral = riesz_convolve(v, params).values
    rows = []
    for region, mask in _region_masks(grid):
        if not np.any(mask):
            continue
        error = float(np.max(np.abs(spectral[mask] - direct[mask])))
        scale = float(np.max(np.abs(direct[mask])))
        rows.append(
            {
                "region": region,
                "points": int(mask.sum()),
                "max_error": error,
                "relative_error": error / scale if scale > 0 else (0.0 if error == 0 else math.inf),
            }
        )
    return pd.DataFrame(rows)
