import argparse
import json
import os
import sys
from pathlib import Path

import yaml

BASE_DIR = os.path.abspath(os.curdir)

if BASE_DIR not in sys.path:
    sys.path.append(BASE_DIR)

from src.data.config import (
    RunManifest,
    build_grid,
    build_params,
    build_solver_config,
    load_config,
    require_physical,
)
from src.data.field_io import load_field, save_field
from src.features.diagnostics import Classification, sign_defect
from src.features.functionals import action, euler_lagrange_residual, hls_ratio, nehari_defect, pohozaev_defect
from src.features.riesz import ProblemParams
from src.misc.exceptions import ChoquardError, NonFiniteValueError, NonNormalizableError, SolverAbortError
from src.misc.tracking import RunTracker
from src.misc.utils import output_dir, to_builtin, worker_count, write_dict
from src.models.harness import (
    SweepPlan,
    brezis_lieb_demo,
    refinement_is_monotone,
    refinement_study,
    riesz_oracle_table,
    sweep,
    sweep_table,
)
from src.models.solver import deflated_solve, rescale_to_solution, solve_ground_state

EXIT_OK = 0
EXIT_SOFT_FAILURE = 1
EXIT_INPUT_ERROR = 2
EXIT_NUMERIC_ABORT = 3

NUMERIC_ABORTS = (SolverAbortError, NonNormalizableError, NonFiniteValueError)


def _out_dir(args, config, command):
    return output_dir(args.out or os.path.join(config["output"]["dir"], command))


def _write_table(table, out_dir, stem, manifest):
    csv_path = out_dir / (stem + ".csv")
    json_path = out_dir / (stem + ".json")
    table.to_csv(csv_path, index=False)
    write_dict({"rows": table.to_dict(orient="records")}, json_path)
    manifest.add_output(csv_path)
    manifest.add_output(json_path)


def _finish_solution(args, config, command, w, report, params, manifest):
    out_dir = _out_dir(args, config, command)
    solution = rescale_to_solution(w, report.mp_estimate, params) if report.mp_estimate > 0 else w
    solution_path = save_field(solution, out_dir / "solution.chqf")
    report_path = out_dir / "report.json"
    write_dict(report.to_dict(), report_path)
    manifest.add_output(solution_path)
    manifest.add_output(report_path)
    manifest.write(out_dir)
    print(
        "---\n {}: {} after {} iterations, M_p = {:.10g}, residual = {:.3e}\n ---".format(
            command, Classification(report.classification).value, report.iters, report.mp_estimate, report.residual
        )
    )
    return EXIT_OK if report.classification == Classification.CONVERGED else EXIT_SOFT_FAILURE


def cmd_solve(args, config):
    grid = build_grid(config["grid"])
    require_physical(grid)
    params = build_params(config)
    solver_config = build_solver_config(config)
    manifest = RunManifest.for_run("solve", config)

    tracker = RunTracker(config, job_type="solve")
    w, report = solve_ground_state(
        solver_config.init, params, solver_config, grid=grid, callback=tracker.iteration_callback
    )
    tracker.summary(
        {"mp": report.mp_estimate, "residual": report.residual, "nehari": report.nehari, "pohozaev": report.pohozaev}
    )
    tracker.finish()
    return _finish_solution(args, config, "solve", w, report, params, manifest)


def cmd_deflate(args, config):
    grid = build_grid(config["grid"])
    require_physical(grid)
    params = build_params(config)
    solver_config = build_solver_config(config)
    paths = list(args.found or config["deflate"]["found"])
    found = [load_field(path, grid) for path in paths]
    manifest = RunManifest.for_run("deflate", config, inputs=paths)

    tracker = RunTracker(config, job_type="deflate")
    w, report = deflated_solve(
        found, params, solver_config, init=solver_config.init, grid=grid, callback=tracker.iteration_callback
    )
    tracker.finish()
    if found and report.classification != Classification.CONVERGED:
        print("---\n deflation found no distinct solution (soft criterion)\n ---")
    return _finish_solution(args, config, "deflate", w, report, params, manifest)


def cmd_check(args, config):
    grid = build_grid(config["grid"])
    params = build_params(config)
    tol = build_solver_config(config).tol
    u = load_field(args.solution, grid)
    result = {
        "residual": euler_lagrange_residual(u, params),
        "nehari": nehari_defect(u, params),
        "pohozaev": pohozaev_defect(u, params),
        "action": action(u, params),
        "sign_defect": sign_defect(u),
        "hls": hls_ratio(u, params) if u.max_abs() > 0 else float("nan"),
        "tol": tol,
    }
    print(json.dumps(to_builtin(result), indent=2, sort_keys=True))
    if args.out:
        out_dir = output_dir(args.out)
        manifest = RunManifest.for_run("check", config, inputs=[args.solution])
        write_dict(result, out_dir / "check.json")
        manifest.add_output(out_dir / "check.json")
        manifest.write(out_dir)
    return EXIT_OK if result["residual"] <= tol else EXIT_SOFT_FAILURE


def cmd_oracle(args, config):
    grid = build_grid(config["grid"])
    params = build_params(config)
    section = config["oracle"]
    threshold = args.threshold if args.threshold is not None else float(section["threshold"])
    table = riesz_oracle_table(params, grid, width=float(section["width"]), source=section["input"], force=args.force)
    print(table.to_string(index=False))
    if args.out:
        out_dir = output_dir(args.out)
        manifest = RunManifest.for_run("oracle", config)
        _write_table(table, out_dir, "oracle", manifest)
        manifest.write(out_dir)
    interior = table.loc[table["region"] == "interior", "relative_error"]
    return EXIT_OK if len(interior) and float(interior.iloc[0]) <= threshold else EXIT_SOFT_FAILURE


def cmd_sweep(args, config):
    section = config["sweep"]
    grids = [build_grid(entry) for entry in section["grids"]] or [build_grid(config["grid"])]
    for grid in grids:
        require_physical(grid)
    plan = SweepPlan(
        grids=grids,
        alphas=section["alphas"] or [config["params"]["alpha"]],
        ps=section["ps"],
        config=build_solver_config(config),
        repeats=int(section["repeats"]),
        zero_mode=config["params"]["zero_mode"],
    )
    out_dir = _out_dir(args, config, "sweep")
    manifest = RunManifest.for_run("sweep", config)
    snapshot_dir = out_dir / "snapshots" if config["output"]["snapshots"] else None

    workers = args.workers if args.workers is not None else min(int(section["workers"]), worker_count())
    rows = sweep(plan, workers=workers, snapshot_dir=snapshot_dir)
    table = sweep_table(rows)
    csv_path = out_dir / "sweep.csv"
    json_path = out_dir / "sweep.json"
    table.to_csv(csv_path, index=False)
    write_dict({"rows": [row.to_record() for row in rows]}, json_path)
    manifest.add_output(csv_path)
    manifest.add_output(json_path)
    if snapshot_dir is not None:
        manifest.add_output(snapshot_dir)
    manifest.write(out_dir)

    tracker = RunTracker(config, job_type="sweep")
    for index, row in enumerate(rows):
        tracker.log({"p": row.p, "mp": row.mp_estimate, "residual": row.residual}, step=index)
    tracker.finish()

    counts = table["classification"].value_counts().to_dict()
    print("---\n sweep: {} rows {}\n ---".format(len(rows), counts))
    if args.strict:
        for row in rows:
            in_window = ProblemParams(row.N, row.alpha, row.p).in_existence_window
            failed = row.classification == Classification.FAILED.value
            if failed or (in_window and row.classification != Classification.CONVERGED.value):
                return EXIT_SOFT_FAILURE
    return EXIT_OK


def cmd_refine(args, config):
    base = build_grid(config["grid"])
    require_physical(base)
    params = build_params(config)
    section = config["refine"]
    table = refinement_study(
        params,
        base,
        int(section["levels"]),
        build_solver_config(config),
        max_points=int(section["max_points"]),
        force=args.force,
    )
    out_dir = _out_dir(args, config, "refine")
    manifest = RunManifest.for_run("refine", config)
    _write_table(table, out_dir, "refine", manifest)
    manifest.write(out_dir)
    print(table.to_string(index=False))

    if (table["classification"] != Classification.CONVERGED.value).any():
        return EXIT_SOFT_FAILURE
    if args.strict and not refinement_is_monotone(table):
        return EXIT_SOFT_FAILURE
    return EXIT_OK


def cmd_brezislieb(args, config):
    grid = build_grid(config["grid"])
    params = build_params(config)
    section = config["brezislieb"]
    shifts = section["shifts"] or [grid.points // 8, grid.points // 4, grid.points // 2]
    threshold = args.threshold if args.threshold is not None else float(section["threshold"])
    table = brezis_lieb_demo(params, grid, [float(width) for width in section["widths"]], shifts)
    out_dir = _out_dir(args, config, "brezislieb")
    manifest = RunManifest.for_run("brezislieb", config)
    _write_table(table, out_dir, "brezislieb", manifest)
    manifest.write(out_dir)
    print(table.to_string(index=False))
    return EXIT_OK if float(table["relative_gap"].iloc[-1]) <= threshold else EXIT_SOFT_FAILURE


COMMANDS = {
    "solve": (cmd_solve, "ground_state.yaml"),
    "check": (cmd_check, "ground_state.yaml"),
    "oracle": (cmd_oracle, "oracle.yaml"),
    "sweep": (cmd_sweep, "sweep.yaml"),
    "refine": (cmd_refine, "refine.yaml"),
    "brezislieb": (cmd_brezislieb, "brezislieb.yaml"),
    "deflate": (cmd_deflate, "deflate.yaml"),
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", default=None)
    common.add_argument("-o", "--out", default=None)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--strict", action="store_true")
    common.add_argument("--force", action="store_true", help="bypass size guards")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE")
    common.add_argument("--workers", type=int, default=None, help="overrides CHOQUARD_THREADS")

    parser = argparse.ArgumentParser(prog="choquard")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        subparser = subparsers.add_parser(name, parents=[common])
        if name == "check":
            subparser.add_argument("solution")
        if name in ("oracle", "brezislieb"):
            subparser.add_argument("--threshold", type=float, default=None)
        if name == "deflate":
            subparser.add_argument("--found", action="append", default=None)
    return parser


def _dump_abort(args, config, command, error):
    out_dir = _out_dir(args, config, command)
    if error.last_field is not None:
        save_field(error.last_field, out_dir / "abort_state.chqf")
    write_dict({"message": str(error), "iteration": error.iteration, "histories": error.histories}, out_dir / "abort.json")


def main(argv=None):
    args = build_parser().parse_args(argv)
    command, default_config = COMMANDS[args.command]
    if args.workers is not None:
        os.environ["CHOQUARD_THREADS"] = str(args.workers)

    config = None
    try:
        config = load_config(args.config or default_config, overrides=args.overrides, seed=args.seed)
        return command(args, config)
    except SolverAbortError as error:
        print("---\n solver aborted: {}\n ---".format(error), file=sys.stderr)
        _dump_abort(args, config, args.command, error)
        return EXIT_NUMERIC_ABORT
    except NUMERIC_ABORTS as error:
        print("---\n numeric abort: {}\n ---".format(error), file=sys.stderr)
        return EXIT_NUMERIC_ABORT
    except (FileNotFoundError, ChoquardError, yaml.YAMLError) as error:
        print("---\n input error: {}\n ---".format(error), file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
