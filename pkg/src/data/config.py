"""
Experiment configuration: one YAML (or JSON) document with sections grid, params, solver,
output and per-command sections, merged over DEFAULT_CONFIG. Typed objects are built
from the merged dict; their constructors do the validation.
"""

import copy
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, List, Optional

import yaml

from src import __version__
from src.features.riesz import ProblemParams
from src.features.spectral import GridSpec
from src.misc.exceptions import InvalidConfigError
from src.misc.utils import config_hash, load_yaml, resolve_config_path, timestamp, write_dict
from src.models.solver import SolverConfig

DEFAULT_CONFIG = {
    "grid": {"dim": 2, "points": 64, "box": 16.0},
    "params": {"alpha": 1.0, "p": 2.0, "zero_mode": "remove"},
    "solver": {f.name: f.default for f in fields(SolverConfig) if f.name != "deflation_targets"},
    "output": {"dir": "runs", "snapshots": False},
    "sweep": {"grids": [], "alphas": [], "ps": [], "repeats": 1, "workers": 1},
    "refine": {"levels": 3, "max_points": 2**22},
    "brezislieb": {"widths": [1.0, 1.0], "shifts": [], "threshold": 0.05},
    "oracle": {"input": "gaussian", "width": 1.0, "threshold": 0.02},
    "deflate": {"found": []},
    "logging": False,
    "wandb_project": "choquard",
}


def _merge(base: dict, update: dict, where: str = "") -> dict:
    merged = copy.deepcopy(base)
    for key, value in update.items():
        if key not in base:
            raise InvalidConfigError("unknown config key '{}{}'".format(where, key))
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise InvalidConfigError("config section '{}{}' must be a mapping".format(where, key))
            merged[key] = _merge(base[key], value, where + key + ".")
        else:
            merged[key] = value
    return merged


def parse_scalar(text: str):
    """yaml scalar, with exponent floats such as 1e-8 (strings for YAML 1.1) read as floats"""
    value = yaml.safe_load(text)
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            return value
    return value


def apply_override(config: dict, assignment: str) -> dict:
    """section.key=value, the value parsed as a yaml scalar"""
    if "=" not in assignment:
        raise InvalidConfigError("override '{}' is not of the form section.key=value".format(assignment))
    dotted, text = assignment.split("=", 1)
    keys = dotted.strip().split(".")
    update = parse_scalar(text)
    for key in reversed(keys):
        update = {key: update}
    return _merge(config, update)


def load_config(name: str = "debug.yaml", overrides: Iterable[str] = (), seed: Optional[int] = None) -> dict:
    """
    read the config file (path as given, else under config/), merge it over the defaults,
    then apply --set overrides and the --seed flag
    """
    path = resolve_config_path(name)
    try:
        loaded = load_yaml(path) or {}
    except yaml.YAMLError as error:
        raise InvalidConfigError("config {} is not valid YAML/JSON: {}".format(path, error)) from error
    if not isinstance(loaded, dict):
        raise InvalidConfigError("config {} must be a mapping of sections".format(path))
    config = _merge(DEFAULT_CONFIG, loaded)
    for assignment in overrides:
        config = apply_override(config, assignment)
    if seed is not None:
        config["solver"]["seed"] = int(seed)
    return config


def _coerce(value, default, name: str):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise InvalidConfigError("{} must be true or false, got {!r}".format(name, value))
        return value
    try:
        if isinstance(default, int):
            if float(value) != int(float(value)):
                raise ValueError
            return int(float(value))
        if isinstance(default, float):
            return float(value)
    except (TypeError, ValueError):
        raise InvalidConfigError("{} must be a number, got {!r}".format(name, value)) from None
    return value


def build_grid(section: dict) -> GridSpec:
    try:
        return GridSpec(
            dim=_coerce(section["dim"], 0, "grid.dim"),
            points=_coerce(section["points"], 0, "grid.points"),
            box=_coerce(section["box"], 0.0, "grid.box"),
        )
    except KeyError as error:
        raise InvalidConfigError("grid section is missing {}".format(error)) from None


def build_params(config: dict, dim: Optional[int] = None) -> ProblemParams:
    section = config["params"]
    return ProblemParams(
        dim=config["grid"]["dim"] if dim is None else dim,
        alpha=_coerce(section["alpha"], 0.0, "params.alpha"),
        p=_coerce(section["p"], 0.0, "params.p"),
        zero_mode=section["zero_mode"],
    )


def build_solver_config(config: dict) -> SolverConfig:
    section = config["solver"]
    values = {key: _coerce(section[key], default, "solver." + key) for key, default in DEFAULT_CONFIG["solver"].items()}
    return SolverConfig(**values)


def require_physical(grid: GridSpec) -> None:
    if grid.dim < 2:
        raise InvalidConfigError("physics commands need N >= 2, got N={}".format(grid.dim))


@dataclass
class RunManifest:
    command: str
    config: dict
    config_hash: str
    seed: int
    version: str = __version__
    inputs: List[str] = field(default_factory=list)
    outputs: List[str] = field(default_factory=list)
    started: str = field(default_factory=timestamp)
    finished: Optional[str] = None

    @classmethod
    def for_run(cls, command: str, config: dict, inputs: Iterable[str] = ()) -> "RunManifest":
        return cls(
            command=command,
            config=copy.deepcopy(config),
            config_hash=config_hash(config),
            seed=int(config["solver"]["seed"]),
            inputs=[str(path) for path in inputs],
        )

    def add_output(self, path) -> None:
        self.outputs.append(str(path))

    def to_dict(self) -> dict:
        manifest = asdict(self)
        # grid, params and solver are echoed at the top level as well as inside config
        for section in ("grid", "params", "solver"):
            manifest[section] = self.config[section]
        return manifest

    def write(self, out_dir) -> Path:
        self.finished = timestamp()
        path = Path(out_dir) / "manifest.json"
        write_dict(self.to_dict(), path)
        return path
