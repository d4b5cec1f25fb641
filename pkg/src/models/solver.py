"""
Constrained minimization of A(u) on {D(u) = 1} by a Sobolev-preconditioned, normalized
gradient flow, and the rescaling of the minimizer into a solution of

    (-Delta + id)^(1/2) u = (I_alpha * |u|^p) |u|^(p-2) u.
"""

import itertools
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.features.diagnostics import (
    Classification,
    classify_run,
    detect_collapse,
    linf,
    local_concentration,
    participation_ratio,
    sign_align,
    sign_defect,
)
from src.features.functionals import (
    action,
    dterm,
    hls_ratio,
    nehari_defect,
    nonlinearity,
    pohozaev_defect,
)
from src.features.riesz import ProblemParams
from src.features.spectral import Field, GridSpec, inverse_sqrt_op, l2_inner, quadratic_form_A, sqrt_op
from src.misc.exceptions import (
    ConstraintError,
    InvalidConfigError,
    NonFiniteValueError,
    NonNormalizableError,
    SolverAbortError,
    ZeroFieldError,
)
from src.models.deflation import DeflationOperator

CONSTRAINT_TOL = 1e-8
DISTINCT_THRESHOLD = 0.1
# accepted energy may rise by this many ulps of A when the residual still drops
ROUNDOFF_SLACK = 16 * np.finfo(float).eps

Init = Union[Field, str]


@dataclass(frozen=True)
class SolverConfig:
    tau0: float = 0.5
    backtrack: float = 0.5
    grow: float = 1.25
    tol: float = 1e-8
    max_iter: int = 5000
    recenter_every: int = 25
    precondition: bool = True
    deflation_targets: Tuple[Field, ...] = ()
    symmetrize: bool = False
    seed: int = 0
    init: str = "gaussian"
    max_backtracks: int = 40
    linf_factor: float = 10.0
    pr_factor: float = 10.0
    deflation_power: float = 1.0
    deflation_shift: float = 1.0

    def __post_init__(self) -> None:
        if not self.tau0 > 0:
            raise InvalidConfigError("tau0 must be positive, got {}".format(self.tau0))
        if not 0 < self.backtrack < 1:
            raise InvalidConfigError("backtrack must lie in (0, 1), got {}".format(self.backtrack))
        if not self.grow >= 1:
            raise InvalidConfigError("grow must be >= 1, got {}".format(self.grow))
        if not self.tol > 0:
            raise InvalidConfigError("tol must be positive, got {}".format(self.tol))
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise InvalidConfigError("max_iter must be a positive integer, got {}".format(self.max_iter))
        if self.recenter_every < 0:
            raise InvalidConfigError("recenter_every must be >= 0, got {}".format(self.recenter_every))
        if self.init not in ("gaussian", "random"):
            raise InvalidConfigError("init must be 'gaussian' or 'random', got {}".format(self.init))
        if self.max_backtracks < 1:
            raise InvalidConfigError("max_backtracks must be >= 1")
        object.__setattr__(self, "deflation_targets", tuple(self.deflation_targets))

    @property
    def max_step(self) -> float:
        return 10 * self.tau0

    def with_updates(self, **changes) -> "SolverConfig":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return SolverConfig(**values)

    def to_dict(self) -> dict:
        values = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "deflation_targets"}
        values["deflation_targets"] = len(self.deflation_targets)
        return values


@dataclass
class SolutionReport:
    mp_estimate: float
    residual: float
    nehari: float
    pohozaev: float
    iters: int
    classification: Classification
    participation_ratio_history: List[float]
    linf_history: List[float]
    lagrange_multiplier: float
    energy_history: List[float] = field(default_factory=list)
    concentration_history: List[float] = field(default_factory=list)
    deflation_history: List[float] = field(default_factory=list)
    action: float = float("nan")
    sign_defect: float = float("nan")
    hls: float = float("nan")
    mp_relative_change: float = float("nan")
    stalled: bool = False
    distinct_distance: float = float("inf")

    def to_dict(self) -> dict:
        report = asdict(self)
        report["classification"] = Classification(self.classification).value
        report["lambda"] = report.pop("lagrange_multiplier")
        return report


@dataclass
class _State:
    """one evaluated iterate on the constraint manifold"""

    u: Field
    a_value: float
    raw_gradient: Field
    residual: float


def _last_relative_change(energy: Sequence[float]) -> float:
    if len(energy) < 2 or energy[-2] == 0:
        return float("nan")
    return abs(energy[-1] - energy[-2]) / abs(energy[-2])


def normalize_to_constraint(u: Field, params: ProblemParams) -> Field:
    """t u with t = D(u)^(-1/(2p)), so D(t u) = 1 by homogeneity"""
    d_value = dterm(u, params)
    if not d_value > 0:
        raise NonNormalizableError("D(u) = {:.3e} is not positive, field cannot be normalized".format(d_value))
    return d_value ** (-1 / (2 * params.p)) * u


def _evaluate(u: Field, params: ProblemParams) -> _State:
    lhs = sqrt_op(u)
    a_value = l2_inner(lhs, u)
    raw_gradient = lhs - a_value * nonlinearity(u, params)
    scale = lhs.norm()
    residual = raw_gradient.norm() / scale if scale > 0 else 0.0
    return _State(u, a_value, raw_gradient, residual)


def constrained_gradient(u: Field, params: ProblemParams, config: SolverConfig) -> Tuple[Field, float]:
    """
    lambda = A(u)/p and r = (-Delta+id)^(1/2) u - lambda p K~(u), tangent to the constraint;
    with preconditioning the step is (-Delta+id)^(-1/2) r
    """
    d_value = dterm(u, params)
    if abs(d_value - 1) > CONSTRAINT_TOL:
        raise ConstraintError("constrained gradient needs D(u) = 1, got {:.12g}".format(d_value))
    state = _evaluate(u, params)
    g = inverse_sqrt_op(state.raw_gradient) if config.precondition else state.raw_gradient
    return g, state.a_value / params.p


def recenter(u: Field) -> Field:
    """
    circular shift by whole cells moving the periodic centroid of |u|^2 (circular mean per
    axis) to within one cell of the box centre
    """
    weights = u.values**2
    if not np.any(weights):
        raise ZeroFieldError("cannot recenter the zero field")
    points = u.grid.points
    angles = 2 * np.pi * np.arange(points) / points
    offsets = []
    for axis in range(u.grid.dim):
        other = tuple(a for a in range(u.grid.dim) if a != axis)
        marginal = weights.sum(axis=other) if other else weights
        mean_angle = math.atan2(np.sum(marginal * np.sin(angles)), np.sum(marginal * np.cos(angles)))
        centroid = (mean_angle * points / (2 * np.pi)) % points
        offsets.append(int(round(u.grid.center_index - centroid)) % points)
    if not any(offsets):
        return u
    return u.shifted(offsets)


def _reflect(values: np.ndarray, axis: int) -> np.ndarray:
    # x -> -x maps index j to M - j (mod M)
    return np.roll(np.flip(values, axis=axis), 1, axis=axis)


def symmetrize(u: Field) -> Field:
    """average over axis permutations and reflections (the hyperoctahedral group)"""
    # GridSpec grids are cubic, so every axis permutation maps the grid onto itself
    values = u.values
    dim = u.grid.dim
    total = np.zeros_like(values)
    count = 0
    for permutation in itertools.permutations(range(dim)):
        permuted = np.transpose(values, permutation)
        for flips in itertools.product((False, True), repeat=dim):
            image = permuted
            for axis, flip in enumerate(flips):
                if flip:
                    image = _reflect(image, axis)
            total += image
            count += 1
    return u.with_values(total / count)


def random_smooth_field(grid: GridSpec, rng: np.random.Generator, modes: int = 8, cutoff: int = 3) -> Field:
    """sum of a few random low-frequency cosines, max-normalized"""
    values = np.zeros(grid.shape)
    for _ in range(modes):
        wave = rng.integers(-cutoff, cutoff + 1, size=grid.dim)
        phase = rng.uniform(0, 2 * np.pi)
        argument = sum(2 * np.pi * k * x / grid.box for k, x in zip(wave, grid.coordinates))
        values = values + rng.normal() * np.cos(argument + phase)
    scale = np.max(np.abs(values))
    return Field(grid, values / scale if scale > 0 else values)


def initial_field(kind: str, grid: GridSpec, rng: np.random.Generator) -> Field:
    """
    gaussian: width L/8 at the box centre.
    random: the same bump at a random whole-cell offset, modulated by a smooth random field.
    """
    bump = Field.gaussian(grid, width=grid.box / 8)
    if kind == "gaussian":
        return bump
    if kind == "random":
        quarter = grid.points // 4
        bump = bump.shifted([int(k) for k in rng.integers(-quarter, quarter + 1, size=grid.dim)])
        return bump.with_values(bump.values * (1 + 0.2 * random_smooth_field(grid, rng).values))
    raise InvalidConfigError("unknown initialization {}".format(kind))


def rescale_to_solution(w: Field, mp: float, params: ProblemParams) -> Field:
    """u = mp^(1/(2p-2)) w solves the equation when D(w) = 1 and A(w) = mp"""
    if params.p == 1:
        raise InvalidConfigError("rescaling is singular at p = 1")
    if not mp > 0:
        raise InvalidConfigError("M_p estimate must be positive, got {}".format(mp))
    return mp ** (1 / (2 * params.p - 2)) * w


def solve_ground_state(
    init: Init,
    params: ProblemParams,
    config: SolverConfig,
    grid: Optional[GridSpec] = None,
    callback: Optional[Callable[[int, dict], None]] = None,
) -> Tuple[Field, SolutionReport]:
    """
    u <- normalize(u - tau g) with backtracking on plain decrease of A: tau shrinks by
    `backtrack` on failure, grows by `grow` on success, capped at 10 tau0.
    Once A has levelled off at round-off, a step that raises A by at most ROUNDOFF_SLACK * A
    is still accepted when it lowers the residual; accepted A is otherwise strictly decreasing.
    Returns the sign-aligned constrained minimizer w (D(w) = 1) and its report.
    """
    rng = np.random.default_rng(config.seed)
    if isinstance(init, Field):
        u = init
    else:
        if grid is None:
            raise InvalidConfigError("a grid is needed to build the '{}' initialization".format(init))
        u = initial_field(init, grid, rng)
    if u.grid.dim != params.dim:
        raise InvalidConfigError("initial field is {}-dimensional, params are for N={}".format(u.grid.dim, params.dim))

    deflation = DeflationOperator(config.deflation_targets, power=config.deflation_power, shift=config.deflation_shift)
    concentration_exponent = params.hls_exponent
    histories = {"energy": [], "linf": [], "participation_ratio": [], "concentration": [], "deflation": []}

    def record(state: _State) -> None:
        histories["energy"].append(state.a_value)
        histories["linf"].append(linf(state.u))
        histories["participation_ratio"].append(participation_ratio(state.u))
        histories["concentration"].append(local_concentration(state.u, 1.0, concentration_exponent))

    def abort(message: str, iteration: int, last: Field):
        raise SolverAbortError(message, iteration=iteration, last_field=last, histories=histories)

    if config.symmetrize:
        u = symmetrize(u)
    u = normalize_to_constraint(u, params)
    state = _evaluate(u, params)
    record(state)

    tau = config.tau0
    iters = 0
    stalled = False
    for iteration in range(1, config.max_iter + 1):
        if state.residual <= config.tol:
            break
        if detect_collapse(histories["linf"], histories["participation_ratio"], config.linf_factor, config.pr_factor):
            break

        g = inverse_sqrt_op(state.raw_gradient) if config.precondition else state.raw_gradient
        factor = deflation.operator(state.u)
        g = deflation.deflated_direction(g, state.u)

        accepted = None
        for _ in range(config.max_backtracks):
            try:
                candidate = state.u - tau * g
                if config.symmetrize:
                    candidate = symmetrize(candidate)
                candidate_state = _evaluate(normalize_to_constraint(candidate, params), params)
            except NonFiniteValueError:
                abort("iterate became non-finite at iteration {}".format(iteration), iteration, state.u)
            except NonNormalizableError:
                tau *= config.backtrack
                continue
            if not np.isfinite(candidate_state.a_value):
                abort("A(u) became non-finite at iteration {}".format(iteration), iteration, state.u)
            decrease = candidate_state.a_value < state.a_value
            level = candidate_state.a_value - state.a_value <= ROUNDOFF_SLACK * state.a_value
            if decrease or (level and candidate_state.residual < state.residual):
                accepted = candidate_state
                tau = min(tau * config.grow, config.max_step)
                break
            tau *= config.backtrack
        if accepted is None:
            stalled = True
            break

        state = accepted
        iters = iteration
        if config.recenter_every and iteration % config.recenter_every == 0:
            shifted = recenter(state.u)
            if shifted is not state.u:
                state = _evaluate(shifted, params)
        record(state)
        histories["deflation"].append(factor)
        if callback is not None:
            callback(
                iteration,
                {
                    "A": state.a_value,
                    "residual": state.residual,
                    "tau": tau,
                    "linf": histories["linf"][-1],
                    "participation_ratio": histories["participation_ratio"][-1],
                },
            )

    w = sign_align(state.u)
    mp = state.a_value
    report = SolutionReport(
        mp_estimate=mp,
        residual=state.residual,
        nehari=float("nan"),
        pohozaev=float("nan"),
        iters=iters,
        classification=Classification.MAXITER,
        participation_ratio_history=histories["participation_ratio"],
        linf_history=histories["linf"],
        lagrange_multiplier=mp / params.p,
        energy_history=histories["energy"],
        concentration_history=histories["concentration"],
        deflation_history=histories["deflation"],
        sign_defect=sign_defect(w),
        mp_relative_change=_last_relative_change(histories["energy"]),
        stalled=stalled,
    )
    if mp > 0:
        solution = rescale_to_solution(w, mp, params)
        report.nehari = nehari_defect(solution, params)
        report.pohozaev = pohozaev_defect(solution, params)
        report.action = action(solution, params)
        report.hls = hls_ratio(solution, params)
    report.classification = classify_run(report, config, params)
    return w, report


def deflated_solve(
    found: Sequence[Field],
    params: ProblemParams,
    config: SolverConfig,
    init: Init = "gaussian",
    grid: Optional[GridSpec] = None,
    callback: Optional[Callable[[int, dict], None]] = None,
) -> Tuple[Field, SolutionReport]:
    """
    solve_ground_state with the direction multiplied by the deflation factor of `found`.
    Known states may come at any scale (a stored solution u = t w); each is mapped back
    onto D = 1 before it enters the factor and the distance test.
    A converged run that lands within 0.1 relative L2 distance of a known state (or its
    negative) is reported as maxiter: no distinct solution was found.
    """
    if not found:
        return solve_ground_state(init, params, config, grid=grid, callback=callback)
    found = [normalize_to_constraint(u, params) for u in found]
    w, report = solve_ground_state(
        init, params, config.with_updates(deflation_targets=tuple(found)), grid=grid, callback=callback
    )
    report.distinct_distance = DeflationOperator(found).relative_distance(w)
    if report.classification == Classification.CONVERGED and report.distinct_distance < DISTINCT_THRESHOLD:
        report.classification = Classification.MAXITER
    return w, report
