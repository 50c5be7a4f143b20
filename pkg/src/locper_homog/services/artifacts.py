"""
Run artifacts: JSON documents, CSV tables, binary array dumps and manifests.
"""

import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd

from .. import __version__
from ..exceptions import ConfigError
from shared.logging_config import get_logger

logger = get_logger(__name__)

DEFAULT_FLOAT_FORMAT = "%.12e"


def _default(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    if hasattr(value, "to_dict"):
        return value.to_dict()
    raise TypeError(f"{type(value).__name__} is not JSON serialisable")


def canonical_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), default=_default)


def content_hash(data: Any) -> str:
    """SHA-256 of the canonical JSON form."""
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()


def write_json(data: Any, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=True, default=_default)
        f.write("\n")
    return path


def write_csv(frame: pd.DataFrame, path: Path, float_format: str = DEFAULT_FLOAT_FORMAT) -> Path:
    """CSV with a fixed float format and line terminator so reruns are byte-identical."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=float_format, lineterminator="\n")
    return path


def dump_array(array: np.ndarray, path: Path, metadata: Optional[Dict[str, Any]] = None) -> Path:
    """Write ``<name>.bin`` (little-endian, row-major) and its ``<name>.json`` header; returns the header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.ascontiguousarray(array)
    dtype = data.dtype.newbyteorder("<")
    bin_path = path.with_suffix(".bin")
    data.astype(dtype).tofile(bin_path)
    header = {
        "shape": list(data.shape),
        "dtype": dtype.str,
        "byte_order": "little",
        "order": "C",
        "data": bin_path.name,
        "metadata": metadata or {},
    }
    return write_json(header, path.with_suffix(".json"))


def load_array(header_path: Path) -> np.ndarray:
    header_path = Path(header_path)
    with open(header_path, "r", encoding="utf-8") as f:
        header = json.load(f)
    data = np.fromfile(header_path.parent / header["data"], dtype=np.dtype(header["dtype"]))
    shape = tuple(header["shape"])
    if data.size != int(np.prod(shape)):
        raise ConfigError(f"{header['data']} holds {data.size} values, header says {list(shape)}")
    return data.reshape(shape)


def write_manifest(directory: Path, command: str, run_config: Dict[str, Any],
                   settings: Optional[Dict[str, Any]] = None,
                   outputs: Optional[Dict[str, Any]] = None) -> Path:
    """Everything needed to rerun a command, plus a hash of its run config."""
    manifest = {
        "command": command,
        "version": __version__,
        "created_at": datetime.now(timezone.utc).isoformat(),
        "config_hash": content_hash(run_config),
        "run_config": run_config,
        "settings": settings or {},
        "outputs": outputs or {},
    }
    path = write_json(manifest, Path(directory) / "manifest.json")
    logger.info(f"Wrote manifest for '{command}' to {path}", extra={"config_hash": manifest["config_hash"]})
    return path
