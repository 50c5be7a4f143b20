"""
Configuration management for the application.

Two layers live here: the application settings (YAML file merged over defaults,
then environment overrides) and loading of the per-run JSON configuration.
"""

import json
import os
from pathlib import Path
from typing import Any, Dict, Optional

import yaml


def get_config(config_file: Optional[Path] = None) -> Dict[str, Any]:
    """Get application configuration."""
    config_file = Path(config_file) if config_file else Path("config.yaml")

    # Default configuration
    default_config = {
        "solver": {
            "method": "cg",  # cg or direct
            "rtol": 1e-10,
            "maxiter": None,  # defaults to 10 x number of unknowns
            "cache_quantum": 1e-12,
        },
        "cell": {
            "resolution": 32,
            "symmetry_tolerance": 1e-12,
        },
        "macro": {
            "resolution": 32,
            "elements_per_period": 8,
            "max_resolution": 512,
        },
        "logging": {
            "level": "INFO",
            "format": "json",
            "file": "logs/locper_homog.log",
            "max_size": "10MB",
            "backup_count": 5,
        },
        "output": {
            "directory": "results",
            "float_format": "%.12e",
            "plots": False,
        },
        "parallel": {
            "jobs": None,  # None means available cores
        },
    }

    # Load from file if exists
    if config_file.exists():
        try:
            with open(config_file, "r") as f:
                file_config = yaml.safe_load(f) or {}
            # Merge with defaults
            config = _merge_config(default_config, file_config)
        except Exception as e:
            print(f"Warning: Could not load config file: {e}")
            config = default_config
    else:
        config = default_config

    # Override with environment variables
    config = _apply_env_overrides(config)

    return config


def _merge_config(default: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Recursively merge configuration dictionaries."""
    result = default.copy()

    for key, value in override.items():
        if key in result and isinstance(result[key], dict) and isinstance(value, dict):
            result[key] = _merge_config(result[key], value)
        else:
            result[key] = value

    return result


def _apply_env_overrides(config: Dict[str, Any]) -> Dict[str, Any]:
    """Apply environment variable overrides to configuration."""
    env_mappings = {
        "LOCPER_SOLVER_METHOD": ("solver", "method"),
        "LOCPER_SOLVER_RTOL": ("solver", "rtol"),
        "LOCPER_SOLVER_MAXITER": ("solver", "maxiter"),
        "LOCPER_CELL_RESOLUTION": ("cell", "resolution"),
        "LOCPER_LOG_LEVEL": ("logging", "level"),
        "LOCPER_LOG_FILE": ("logging", "file"),
        "LOCPER_OUTPUT_DIR": ("output", "directory"),
        "LOCPER_JOBS": ("parallel", "jobs"),
    }

    for env_var, (section, key) in env_mappings.items():
        value = os.getenv(env_var)
        if value is not None:
            # Convert numeric values
            if key in ["maxiter", "resolution", "jobs", "backup_count"]:
                try:
                    value = int(value)
                except ValueError:
                    pass
            elif key in ["rtol", "cache_quantum"]:
                try:
                    value = float(value)
                except ValueError:
                    pass
            elif key in ["plots"]:
                value = value.lower() in ("true", "1", "yes", "on")

            config[section][key] = value

    return config


def load_run_config(path: Path) -> Dict[str, Any]:
    """Load a JSON run configuration (validation happens in RunConfig)."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def worker_count(jobs: Optional[int] = None) -> int:
    """Thread pool size: explicit jobs, then parallel.jobs, then the CPU count."""
    if jobs is None:
        jobs = get_config().get("parallel", {}).get("jobs")
    return max(1, int(jobs or os.cpu_count() or 1))


def save_config(config: Dict[str, Any], config_file: Optional[Path] = None) -> None:
    """Save configuration to file."""
    if config_file is None:
        config_file = Path("config.yaml")

    # Ensure directory exists
    config_file.parent.mkdir(parents=True, exist_ok=True)

    with open(config_file, "w") as f:
        yaml.dump(config, f, default_flow_style=False, indent=2)

    print(f"✅ Configuration saved to {config_file}")


def create_default_config_file(config_file: Optional[Path] = None) -> None:
    """Create a default configuration file."""
    config = get_config(config_file)
    save_config(config, config_file)
    print(f"✅ Default configuration file created: {config_file or 'config.yaml'}")
