import hashlib
import json
import os
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import yaml
from dotenv import load_dotenv

load_dotenv()  # picks up CHOQUARD_THREADS / WANDB_API_KEY from .env


def load_yaml(file):
    with open(file, "r") as stream:
        dict = yaml.safe_load(stream)
    return dict


def resolve_config_path(config_name):
    """
    use the path as given, otherwise look for it under config/
    """
    candidate = Path(config_name)
    if candidate.exists():
        return candidate
    if Path("config/" + str(config_name)).exists():
        return Path("config/" + str(config_name))
    raise FileNotFoundError("Config file can not be found: {}".format(config_name))


def write_dict(file: dict, out_path):
    """
    dump dictionary into a .json file
    """
    with open(out_path, "w") as out_file:
        out_file.write(json.dumps(to_builtin(file), indent=2, sort_keys=True))


def to_builtin(obj):
    """
    convert numpy scalars / arrays nested in dicts and lists to plain python for json
    """
    if isinstance(obj, dict):
        return {str(key): to_builtin(value) for key, value in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_builtin(value) for value in obj]
    if isinstance(obj, np.ndarray):
        return to_builtin(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def output_dir(out_path):
    """
    initialize the artifact directory of a run
    """
    os.makedirs(out_path, exist_ok=True)
    return Path(out_path)


def config_hash(config: dict) -> str:
    """
    sha256 over the canonical json dump, stable across platforms
    """
    canonical = json.dumps(to_builtin(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def worker_count() -> int:
    """
    CHOQUARD_THREADS caps the worker count, 0 or unset means all cores
    """
    requested = int(os.environ.get("CHOQUARD_THREADS", "0") or 0)
    available = os.cpu_count() or 1
    if requested <= 0:
        return available
    return min(requested, available)


def timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def format_number(value: float) -> str:
    """
    compact float label for file names, 1.0 -> 1, 2.5 -> 2.5
    """
    return "{:g}".format(value)
