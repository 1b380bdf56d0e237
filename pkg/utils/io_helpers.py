from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict

import numpy as np
import pandas as pd
import yaml
from rich.logging import RichHandler

# 17 significant digits round-trip every float64
FLOAT_FORMAT = "%.17g"


def read_config(config_path: Path) -> Dict[str, Any]:
    path = Path(config_path)
    with open(path, "r", encoding="utf-8") as f:
        if path.suffix.lower() == ".json":
            return json.load(f)
        return yaml.safe_load(f) or {}


def ensure_directory(path: Path) -> None:
    Path(path).mkdir(parents=True, exist_ok=True)


def setup_logging(level: str = "INFO", log_file: Path | None = None) -> None:
    log_level = getattr(logging, level.upper(), logging.INFO)
    handlers: list[logging.Handler] = [RichHandler(rich_tracebacks=True)]
    if log_file:
        ensure_directory(Path(log_file).parent)
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=log_level,
        format="%(asctime)s - %(levelname)s - %(name)s - %(message)s",
        handlers=handlers,
        force=True,
    )


def config_digest(config: Dict[str, Any]) -> str:
    """sha256 of the canonical JSON form; independent of key order."""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def array_digest(*arrays: np.ndarray) -> str:
    h = hashlib.sha256()
    for a in arrays:
        arr = np.ascontiguousarray(a, dtype=float)
        h.update(str(arr.shape).encode("ascii"))
        h.update(arr.tobytes())
    return h.hexdigest()


def write_csv(frame: pd.DataFrame, path: Path) -> Path:
    path = Path(path)
    ensure_directory(path.parent)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def write_matrix_csv(matrix: np.ndarray, path: Path) -> Path:
    path = Path(path)
    ensure_directory(path.parent)
    np.savetxt(path, np.asarray(matrix, dtype=float), delimiter=",", fmt=FLOAT_FORMAT)
    return path


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def _round_floats(value: Any) -> Any:
    # repr-level precision, finite floats only; inf/nan become strings for strict JSON
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if np.isnan(v):
            return "nan"
        if np.isinf(v):
            return "inf" if v > 0 else "-inf"
        return float(FLOAT_FORMAT % v)
    if isinstance(value, dict):
        return {k: _round_floats(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_round_floats(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_round_floats(v) for v in value.tolist()]
    return value


def write_json(payload: Dict[str, Any], path: Path) -> Path:
    path = Path(path)
    ensure_directory(path.parent)
    text = json.dumps(_round_floats(payload), indent=2, sort_keys=True, default=_json_default)
    path.write_text(text + "\n", encoding="utf-8")
    return path
