import numpy as np
import pytest

import src.models.solver as solver
from src.features.diagnostics import Classification
from src.features.functionals import dterm, nehari_defect, nonlinearity, pohozaev_defect
from src.features.riesz import ProblemParams
from src.features.spectral import Field, GridSpec, l2_inner, quadratic_form_A, sqrt_op
from src.misc.exceptions import (
    ConstraintError,
    InvalidConfigError,
    NonFiniteValueError,
    NonNormalizableError,
    SolverAbortError,
    ZeroFieldError,
)
from src.models.solver import (
    SolverConfig,
    constrained_gradient,
    deflated_solve,
    initial_field,
    normalize_to_constraint,
    recenter,
    rescale_to_solution,
    solve_ground_state,
    symmetrize,
)
from tests.fields import smooth_random_field

QUICK = SolverConfig(tol=1e-6, max_iter=1000)


@pytest.mark.parametrize(
    "changes",
    [{"tau0": 0.0}, {"backtrack": 1.0}, {"backtrack": 0.0}, {"grow": 0.5}, {"tol": 0.0}, {"max_iter": 0}, {"init": "flat"}],
)
def test_config_rejects_invalid(changes):
    with pytest.raises(InvalidConfigError):
        SolverConfig(**changes)


def test_config_updates_and_dict():
    config = SolverConfig().with_updates(tol=1e-6, seed=3)
    assert config.tol == 1e-6 and config.seed == 3
    assert config.max_step == pytest.approx(5.0)
    assert config.to_dict()["deflation_targets"] == 0


def test_normalize_hits_constraint(grid_2d, params, rng):
    u = smooth_random_field(grid_2d, rng)
    w = normalize_to_constraint(u, params)
    assert dterm(w, params) == pytest.approx(1.0, rel=1e-12)
    # D(2w) = 16 so the factor is 16^(-1/4) = 1/2
    np.testing.assert_allclose(normalize_to_constraint(2 * w, params).values, w.values, rtol=1e-12)
    np.testing.assert_allclose(normalize_to_constraint(w, params).values, w.values, rtol=1e-12)


def test_normalize_rejects_zero(grid_2d, params):
    with pytest.raises(NonNormalizableError):
        normalize_to_constraint(Field.zeros(grid_2d), params)


def test_constrained_gradient_is_tangent(grid_2d, params, rng):
    u = normalize_to_constraint(smooth_random_field(grid_2d, rng), params)
    g, lam = constrained_gradient(u, params, SolverConfig())
    a_value = quadratic_form_A(u)
    assert lam == pytest.approx(a_value / params.p, rel=1e-12)
    r = sqrt_op(u) - lam * params.p * nonlinearity(u, params)
    assert abs(l2_inner(r, u)) <= 1e-8 * a_value
    assert g.norm() <= r.norm()
    raw, _ = constrained_gradient(u, params, SolverConfig(precondition=False))
    np.testing.assert_allclose(raw.values, r.values, atol=1e-12)


def test_constrained_gradient_needs_constraint(grid_2d, params):
    u = normalize_to_constraint(Field.gaussian(grid_2d), params)
    with pytest.raises(ConstraintError):
        constrained_gradient(1.1 * u, params, SolverConfig())


def test_recenter(grid_2d, params):
    u = Field.gaussian(grid_2d, width=2.0)
    np.testing.assert_array_equal(recenter(u).values, u.values)
    moved = u.shifted(grid_2d.points // 4, axis=1)
    back = recenter(moved)
    peak = np.unravel_index(np.argmax(back.values), grid_2d.shape)
    assert all(abs(index - grid_2d.center_index) <= 1 for index in peak)
    assert quadratic_form_A(back) == pytest.approx(quadratic_form_A(moved), rel=1e-12)
    assert dterm(back, params) == pytest.approx(dterm(moved, params), rel=1e-12)


def test_recenter_across_the_boundary(grid_2d):
    u = Field.gaussian(grid_2d, width=1.5).shifted(grid_2d.points // 2, axis=0)
    back = recenter(u)
    peak = np.unravel_index(np.argmax(back.values), grid_2d.shape)
    assert abs(peak[0] - grid_2d.center_index) <= 1


def test_recenter_rejects_zero(grid_2d):
    with pytest.raises(ZeroFieldError):
        recenter(Field.zeros(grid_2d))


def test_symmetrize(grid_2d, rng):
    radial = Field.gaussian(grid_2d, width=2.0)
    np.testing.assert_allclose(symmetrize(radial).values, radial.values, atol=1e-15)
    u = Field(grid_2d, rng.normal(size=grid_2d.shape))
    once = symmetrize(u)
    np.testing.assert_allclose(symmetrize(once).values, once.values, atol=1e-14)
    assert once.norm() <= u.norm()
    np.testing.assert_allclose(once.values, once.values.T, atol=1e-13)
    mirrored = np.roll(np.flip(once.values, axis=0), 1, axis=0)
    np.testing.assert_allclose(mirrored, once.values, atol=1e-13)


def test_rescale_to_solution(grid_2d, params):
    w = Field.gaussian(grid_2d)
    np.testing.assert_array_equal(rescale_to_solution(w, 1.0, params).values, w.values)
    np.testing.assert_allclose(rescale_to_solution(w, 4.0, params).values, 2 * w.values, rtol=1e-14)
    with pytest.raises(InvalidConfigError):
        rescale_to_solution(w, 0.0, params)


def test_initial_fields(grid_2d):
    rng = np.random.default_rng(0)
    gaussian = initial_field("gaussian", grid_2d, rng)
    assert gaussian.values[grid_2d.center_index, grid_2d.center_index] == 1.0
    random = initial_field("random", grid_2d, np.random.default_rng(5))
    again = initial_field("random", grid_2d, np.random.default_rng(5))
    np.testing.assert_array_equal(random.values, again.values)
    assert np.all(random.values > 0)
    with pytest.raises(InvalidConfigError):
        initial_field("flat", grid_2d, rng)


def test_string_init_needs_grid(params):
    with pytest.raises(InvalidConfigError):
        solve_ground_state("gaussian", params, QUICK)


def test_ground_state_on_small_grid(small_ground_state):
    params = ProblemParams(2, 1.0, 2.0)
    w, report = small_ground_state
    assert report.classification == Classification.CONVERGED
    assert report.residual <= 1e-9
    assert not report.stalled
    assert dterm(w, params) == pytest.approx(1.0, abs=1e-8)
    assert report.mp_estimate == pytest.approx(quadratic_form_A(w), rel=1e-12)
    assert report.lagrange_multiplier == pytest.approx(report.mp_estimate / 2)
    assert report.sign_defect <= 1e-3
    assert abs(report.nehari) <= 1e-6
    u = rescale_to_solution(w, report.mp_estimate, params)
    assert nehari_defect(u, params) == pytest.approx(report.nehari, abs=1e-14)
    assert pohozaev_defect(u, params) == pytest.approx(report.pohozaev, abs=1e-14)


def test_energy_history_is_non_increasing(small_ground_state):
    _, report = small_ground_state
    energy = np.array(report.energy_history)
    assert len(energy) == report.iters + 1
    assert np.all(np.diff(energy) <= 1e-13 * energy[:-1])
    assert len(report.linf_history) == len(report.participation_ratio_history) == len(energy)
    assert len(report.deflation_history) == report.iters
    assert all(factor == 1.0 for factor in report.deflation_history)


def test_accepted_steps_stay_within_roundoff_slack(grid_2d, params):
    config = SolverConfig(tol=1e-6, max_iter=1000, recenter_every=0)
    _, report = solve_ground_state("gaussian", params, config, grid=grid_2d)
    energy = np.array(report.energy_history)
    assert np.all(np.diff(energy) <= solver.ROUNDOFF_SLACK * energy[:-1])
    assert energy[-1] < energy[0]


def test_report_dict(small_ground_state):
    _, report = small_ground_state
    data = report.to_dict()
    assert data["classification"] == "converged"
    assert "lambda" in data and "lagrange_multiplier" not in data
    assert data["mp_estimate"] == report.mp_estimate


def test_callback_sees_every_accepted_step(grid_2d, params):
    seen = []
    _, report = solve_ground_state("gaussian", params, QUICK, grid=grid_2d, callback=lambda i, m: seen.append(i))
    assert seen == list(range(1, report.iters + 1))


def test_field_init_is_used_as_given(grid_2d, params):
    first = solve_ground_state("gaussian", params, QUICK, grid=grid_2d)
    second = solve_ground_state(Field.gaussian(grid_2d, width=grid_2d.box / 8), params, QUICK)
    np.testing.assert_array_equal(first[0].values, second[0].values)


def test_deflated_solve_without_targets_is_plain_solve(grid_2d, params):
    plain_w, plain = solve_ground_state("gaussian", params, QUICK, grid=grid_2d)
    w, report = deflated_solve([], params, QUICK, grid=grid_2d)
    np.testing.assert_array_equal(w.values, plain_w.values)
    assert report.mp_estimate == plain.mp_estimate
    assert report.classification == plain.classification


def test_deflation_targets_are_compared_on_the_constraint(small_ground_state):
    params = ProblemParams(2, 1.0, 2.0)
    w, report = small_ground_state
    stored = rescale_to_solution(w, report.mp_estimate, params)
    # starting on the known state: it must not count as a new one, whatever its scale
    again, deflated = deflated_solve([stored], params, QUICK, init=w)
    assert deflated.distinct_distance < 1e-6
    assert deflated.classification == Classification.MAXITER
    np.testing.assert_allclose(again.values, w.values, atol=1e-12 * w.max_abs())


def test_non_finite_iterate_aborts(grid_2d, params, monkeypatch):
    calls = {"count": 0}
    original = solver.normalize_to_constraint

    def failing(u, p):
        calls["count"] += 1
        if calls["count"] > 1:
            raise NonFiniteValueError("field contains non-finite samples")
        return original(u, p)

    monkeypatch.setattr(solver, "normalize_to_constraint", failing)
    with pytest.raises(SolverAbortError) as info:
        solve_ground_state("gaussian", params, QUICK, grid=grid_2d)
    assert info.value.iteration == 1
    assert info.value.last_field is not None
    assert len(info.value.histories["energy"]) == 1


@pytest.mark.slow
def test_ground_state_certificate():
    params = ProblemParams(2, 1.0, 2.0)
    grid = GridSpec(2, 64, 16.0)
    w, report = solve_ground_state("gaussian", params, SolverConfig(tol=1e-8), grid=grid)
    assert report.classification == Classification.CONVERGED
    assert report.residual <= 1e-8
    assert abs(report.nehari) <= 1e-6
    assert report.sign_defect <= 1e-3
    # mean removal leaves an O(1/L) Pohozaev offset; doubling (L, M) must reduce it
    _, finer = solve_ground_state("gaussian", params, SolverConfig(tol=1e-8), grid=grid.refined(2, 2))
    assert finer.classification == Classification.CONVERGED
    assert abs(finer.pohozaev) < abs(report.pohozaev)


@pytest.mark.slow
def test_shifted_initialization_gives_same_minimum():
    params = ProblemParams(2, 1.0, 2.0)
    grid = GridSpec(2, 64, 16.0)
    _, centred = solve_ground_state("gaussian", params, SolverConfig(tol=1e-8), grid=grid)
    _, shifted = solve_ground_state("random", params, SolverConfig(tol=1e-8, init="random", seed=7), grid=grid)
    assert shifted.classification == Classification.CONVERGED
    assert shifted.mp_estimate == pytest.approx(centred.mp_estimate, rel=1e-6)


@pytest.mark.slow
def test_supercritical_power_concentrates():
    # p = 3.5 >= p_upper = 3: the grid caps the sup-norm growth well below 10x
    params = ProblemParams(2, 1.0, 3.5)
    grid = GridSpec(2, 128, 16.0)
    config = SolverConfig(tol=1e-8, max_iter=5000, linf_factor=2.0, pr_factor=2.0)
    _, report = solve_ground_state("gaussian", params, config, grid=grid)
    assert report.classification == Classification.CONCENTRATING
    assert report.iters < config.max_iter
    assert report.linf_history[-1] >= 2 * report.linf_history[0]


@pytest.mark.slow
def test_deflation_probe(small_ground_state):
    params = ProblemParams(2, 1.0, 2.0)
    w1, _ = small_ground_state
    config = SolverConfig(tol=1e-6, max_iter=2000, symmetrize=True, init="random", seed=1)
    w2, report = deflated_solve([w1], params, config, init="random", grid=w1.grid)
    # best effort: a run that claims convergence must be distinct
    assert report.classification in (Classification.CONVERGED, Classification.MAXITER)
    assert np.isfinite(report.distinct_distance)
    if report.classification == Classification.CONVERGED:
        assert report.distinct_distance >= 0.1
        assert report.residual <= 1e-6
