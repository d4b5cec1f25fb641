import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
import yaml

import src.models.cli as cli
from src.data.field_io import load_field, save_field
from src.misc.exceptions import SolverAbortError
from src.models.cli import main

CONFIG_DIR = Path(__file__).resolve().parents[1] / "config"

SMALL = {
    "grid": {"dim": 2, "points": 32, "box": 16.0},
    "params": {"alpha": 1.0, "p": 2.0},
    "solver": {"tol": 1e-6, "max_iter": 1000},
}


def write_config(tmp_path, content=SMALL, name="run.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(content))
    return str(path)


@pytest.fixture
def solved(tmp_path, capsys):
    out = tmp_path / "solve"
    code = main(["solve", "-c", write_config(tmp_path), "-o", str(out)])
    capsys.readouterr()
    return code, out


def test_solve_writes_artifacts(solved):
    code, out = solved
    assert code == 0
    assert {"solution.chqf", "report.json", "manifest.json"} <= {path.name for path in out.iterdir()}
    report = json.loads((out / "report.json").read_text())
    assert report["classification"] == "converged"
    assert abs(report["nehari"]) <= 1e-6
    assert "lambda" in report
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "solve"
    assert manifest["seed"] == 0
    assert str(out / "solution.chqf") in manifest["outputs"]


def test_check_reproduces_report(tmp_path, solved, capsys):
    _, out = solved
    code = main(["check", str(out / "solution.chqf"), "-c", write_config(tmp_path)])
    result = json.loads(capsys.readouterr().out)
    report = json.loads((out / "report.json").read_text())
    assert code == 0
    for key in ("nehari", "pohozaev", "residual"):
        assert result[key] == pytest.approx(report[key], abs=1e-10)


def test_check_detects_scaled_field(tmp_path, solved, capsys):
    _, out = solved
    u = load_field(out / "solution.chqf")
    save_field(2 * u, tmp_path / "scaled.chqf")
    code = main(["check", str(tmp_path / "scaled.chqf"), "-c", write_config(tmp_path)])
    result = json.loads(capsys.readouterr().out)
    # A scales by 4 and D by 16 when p = 2
    assert result["nehari"] == pytest.approx(-3.0, rel=1e-4)
    assert code == 1


def test_check_truncated_file(tmp_path, solved):
    _, out = solved
    path = out / "solution.chqf"
    path.write_bytes(path.read_bytes()[:100])
    assert main(["check", str(path), "-c", write_config(tmp_path)]) == 2


def test_missing_config(tmp_path, capsys):
    missing = str(tmp_path / "missing.yaml")
    assert main(["solve", "-c", missing, "-o", str(tmp_path / "out")]) == 2
    assert missing in capsys.readouterr().err


def test_invalid_config(tmp_path):
    config = write_config(tmp_path, {**SMALL, "params": {"alpha": 1.0, "p": 0.5}})
    assert main(["solve", "-c", config, "-o", str(tmp_path / "out")]) == 2


def test_one_dimension_is_refused(tmp_path):
    config = write_config(tmp_path, {**SMALL, "grid": {"dim": 1, "points": 32, "box": 16.0}})
    assert main(["solve", "-c", config, "-o", str(tmp_path / "out")]) == 2


def test_set_and_seed_flags(tmp_path):
    out = tmp_path / "out"
    code = main(["solve", "-c", write_config(tmp_path), "-o", str(out), "--set", "solver.max_iter=1", "--seed", "5"])
    assert code == 1
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["solver"]["max_iter"] == 1
    assert manifest["seed"] == 5


def test_solver_abort_dumps_state(tmp_path, monkeypatch):
    def aborting(*args, **kwargs):
        raise SolverAbortError("non-finite", iteration=3, last_field=None, histories={"energy": [1.0]})

    monkeypatch.setattr(cli, "solve_ground_state", aborting)
    out = tmp_path / "out"
    assert main(["solve", "-c", write_config(tmp_path), "-o", str(out)]) == 3
    dump = json.loads((out / "abort.json").read_text())
    assert dump["iteration"] == 3


def test_deflate_without_found_matches_solve(tmp_path, solved):
    _, out = solved
    deflated = tmp_path / "deflate"
    code = main(["deflate", "-c", write_config(tmp_path), "-o", str(deflated)])
    assert code == 0
    np.testing.assert_array_equal(
        load_field(deflated / "solution.chqf").values, load_field(out / "solution.chqf").values
    )


def test_deflate_away_from_solved_state(tmp_path, solved):
    _, out = solved
    deflated = tmp_path / "deflate"
    code = main(["deflate", "-c", write_config(tmp_path), "-o", str(deflated), "--found", str(out / "solution.chqf")])
    report = json.loads((deflated / "report.json").read_text())
    if report["classification"] == "converged":
        assert code == 0
        assert report["distinct_distance"] >= 0.1
    else:
        assert code == 1
        assert report["classification"] != "converged"


def test_oracle_zero_input(tmp_path, capsys):
    config = write_config(tmp_path, {**SMALL, "oracle": {"input": "zero"}})
    assert main(["oracle", "-c", config, "-o", str(tmp_path / "out")]) == 0
    assert "interior" in capsys.readouterr().out
    table = pd.read_csv(tmp_path / "out" / "oracle.csv")
    assert (table["relative_error"] == 0).all()


def test_oracle_threshold_flag(tmp_path):
    config = write_config(tmp_path, {**SMALL, "params": {"alpha": 1.0, "p": 2.0, "zero_mode": "cell"}})
    assert main(["oracle", "-c", config, "--threshold", "0.05"]) == 0
    assert main(["oracle", "-c", config, "--threshold", "1e-9"]) == 1


def test_oracle_size_guard(tmp_path):
    config = write_config(tmp_path, {**SMALL, "grid": {"dim": 2, "points": 128, "box": 16.0}})
    assert main(["oracle", "-c", config]) == 2


def test_empty_sweep(tmp_path):
    config = write_config(tmp_path, {**SMALL, "sweep": {"ps": []}})
    out = tmp_path / "sweep"
    assert main(["sweep", "-c", config, "-o", str(out)]) == 0
    lines = (out / "sweep.csv").read_text().strip().splitlines()
    assert lines == ["N,alpha,p,L,M,mp,residual,nehari,pohozaev,classification,seconds"]
    assert json.loads((out / "sweep.json").read_text()) == {"rows": []}
    assert (out / "manifest.json").exists()


def test_sweep_rows_and_snapshots(tmp_path):
    config = write_config(tmp_path, {**SMALL, "sweep": {"ps": [2.0, 1.8]}, "output": {"snapshots": True}})
    out = tmp_path / "sweep"
    assert main(["sweep", "-c", config, "-o", str(out)]) == 0
    table = pd.read_csv(out / "sweep.csv")
    assert list(table["p"]) == [1.8, 2.0]
    assert (out / "snapshots" / "2d_a1_p2_M32.chqf").exists()


def test_refine_single_level(tmp_path):
    config = write_config(tmp_path, {**SMALL, "refine": {"levels": 1}})
    out = tmp_path / "refine"
    assert main(["refine", "-c", config, "-o", str(out)]) == 0
    assert len(pd.read_csv(out / "refine.csv")) == 1


def test_refine_size_guard(tmp_path):
    config = write_config(tmp_path, {**SMALL, "refine": {"levels": 5, "max_points": 1000}})
    assert main(["refine", "-c", config, "-o", str(tmp_path / "refine")]) == 2


def test_brezislieb(tmp_path):
    content = {**SMALL, "grid": {"dim": 2, "points": 64, "box": 32.0}, "brezislieb": {"shifts": [8, 16, 32]}}
    out = tmp_path / "bl"
    code = main(["brezislieb", "-c", write_config(tmp_path, content), "-o", str(out), "--threshold", "0.5"])
    assert code == 0
    table = pd.read_csv(out / "brezislieb.csv")
    assert list(table["shift"]) == [8, 16, 32]
    assert main(["brezislieb", "-c", write_config(tmp_path, content), "-o", str(out), "--threshold", "1e-9"]) == 1


@pytest.mark.slow
def test_shipped_nonexistence_config(tmp_path):
    out = tmp_path / "nonexistence"
    assert main(["solve", "-c", str(CONFIG_DIR / "nonexistence.yaml"), "-o", str(out)]) == 1
    report = json.loads((out / "report.json").read_text())
    assert report["classification"] == "concentrating"


@pytest.mark.slow
def test_sweep_beyond_existence_window(tmp_path):
    out = tmp_path / "sweep"
    args = ["sweep", "-c", str(CONFIG_DIR / "sweep.yaml"), "-o", str(out), "--set", "sweep.ps=[3.5]", "--strict"]
    assert main(args + ["--set", "output.snapshots=false"]) == 0
    table = pd.read_csv(out / "sweep.csv")
    assert list(table["p"]) == [3.5]
    assert list(table["classification"]) == ["concentrating"]
