"""
Unit tests for shared configuration and logging.
"""

import json
import logging

import yaml

from shared.config import create_default_config_file, get_config, load_run_config, worker_count
from shared.logging_config import JSONFormatter, _parse_size, setup_logging


class TestConfig:
    """Tests for get_config and its overrides."""

    def test_defaults_without_file(self):
        config = get_config()
        assert config["solver"]["method"] == "cg"
        assert config["macro"]["elements_per_period"] == 8
        assert config["output"]["directory"] == "results"

    def test_file_values_merge_with_defaults(self, tmp_path):
        path = tmp_path / "custom.yaml"
        path.write_text(yaml.safe_dump({"solver": {"method": "direct"}}))
        config = get_config(path)
        assert config["solver"]["method"] == "direct"
        assert config["solver"]["rtol"] == 1e-10

    def test_environment_overrides(self, monkeypatch):
        monkeypatch.setenv("LOCPER_SOLVER_RTOL", "1e-6")
        monkeypatch.setenv("LOCPER_JOBS", "3")
        config = get_config()
        assert config["solver"]["rtol"] == 1e-6
        assert config["parallel"]["jobs"] == 3

    def test_create_default_config_file(self, tmp_path):
        path = tmp_path / "config.yaml"
        create_default_config_file(path)
        assert yaml.safe_load(path.read_text())["cell"]["resolution"] == 32

    def test_load_run_config(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"seed": 5}))
        assert load_run_config(path) == {"seed": 5}

    def test_worker_count(self, monkeypatch, tmp_path):
        monkeypatch.setattr("shared.config.os.cpu_count", lambda: 6)
        assert worker_count(2) == 2
        assert worker_count() == 6
        monkeypatch.setenv("LOCPER_JOBS", "3")
        assert worker_count() == 3
        assert worker_count(0) == 6
        monkeypatch.delenv("LOCPER_JOBS")
        (tmp_path / "config.yaml").write_text(yaml.safe_dump({"parallel": {"jobs": 4}}))
        assert worker_count() == 4


class TestLogging:
    """Tests for the JSON log format."""

    def test_json_formatter_keeps_extra_fields(self):
        record = logging.LogRecord("solver", logging.INFO, __file__, 10, "Solve: cell", None, None)
        record.unknowns = 128
        entry = json.loads(JSONFormatter().format(record))
        assert entry["level"] == "INFO"
        assert entry["message"] == "Solve: cell"
        assert entry["unknowns"] == 128

    def test_parse_size(self):
        assert _parse_size("10MB") == 10 * 1024 ** 2
        assert _parse_size("2KB") == 2048
        assert _parse_size(512) == 512

    def test_setup_logging_writes_json_lines(self, tmp_path):
        log_file = tmp_path / "logs" / "run.log"
        setup_logging(level="DEBUG", log_file=str(log_file))
        logging.getLogger("test").info("hello", extra={"check_id": "x.y"})
        for handler in logging.getLogger().handlers:
            handler.flush()
        lines = [json.loads(line) for line in log_file.read_text().splitlines()]
        assert any(line.get("check_id") == "x.y" for line in lines)

    def test_text_format_from_config(self, tmp_path):
        (tmp_path / "config.yaml").write_text(yaml.safe_dump({"logging": {"format": "text"}}))
        log_file = tmp_path / "logs" / "run.log"
        setup_logging(level="INFO", log_file=str(log_file))
        logging.getLogger("test").info("plain line")
        for handler in logging.getLogger().handlers:
            handler.flush()
        lines = log_file.read_text().splitlines()
        assert any(line.endswith("test - INFO - plain line") for line in lines)
        assert not any(line.startswith("{") for line in lines)
