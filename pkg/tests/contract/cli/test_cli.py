"""
Contract tests for the command-line interface.
"""

import json

import pandas as pd
import pytest
import yaml

from locper_homog.cli.main import main

LAMINATE = {
    "material": {
        "resolution": 8,
        "geometry": {"type": "laminate", "fraction": 0.5, "axis": 0},
        "phases": [
            {"name": "stiff", "type": "isotropic", "lambda": 10.0, "mu": 10.0},
            {"name": "soft", "type": "isotropic", "lambda": 1.0, "mu": 1.0},
        ],
    },
    "solver": {"method": "direct"},
}


@pytest.fixture
def write_run(tmp_path):
    def write(extra=None):
        document = dict(LAMINATE, **(extra or {}))
        path = tmp_path / "run.json"
        path.write_text(json.dumps(document))
        return str(path)

    return write


class TestCellCommand:
    """Tests for the cell command."""

    def test_writes_effective_tensor(self, write_run, tmp_path, capsys):
        config = write_run({"cell": {"K": [[1.1, 0.0], [0.0, 0.95]],
                                     "strains": [[[1.0, 0.0], [0.0, 0.0]]], "export_strain": True}})
        assert main(["cell", "--config", config, "--output-dir", str(tmp_path / "out")]) == 0
        out = tmp_path / "out" / "cell"
        effective = json.loads((out / "effective.json").read_text())
        assert len(effective["C_hom"]) == 3
        assert effective["coercivity"] > 0.0
        assert effective["symmetry"]["major"]
        assert (out / "corrector_0.bin").exists()
        assert (out / "strain_0.csv").exists()
        assert (out / "phases.json").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "cell"
        assert "✅" in capsys.readouterr().out

    def test_defaults_without_config(self, tmp_path):
        assert main(["cell", "--output-dir", str(tmp_path)]) == 0
        assert (tmp_path / "cell" / "effective.json").exists()


class TestErrors:
    """Exit codes for configuration problems."""

    def test_missing_config(self, tmp_path, capsys):
        assert main(["cell", "--config", str(tmp_path / "absent.json")]) == 2
        assert "ConfigError" in capsys.readouterr().out

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        assert main(["cell", "--config", str(path)]) == 2

    def test_unknown_key(self, write_run):
        assert main(["cell", "--config", write_run({"epsilon": 0.1})]) == 2

    def test_aligned_anchors_need_l(self, write_run, tmp_path):
        config = write_run({"direct": {"epsilon": 0.25, "r": 0.5, "anchor_rule": "aligned"}})
        assert main(["direct", "--config", config, "--output-dir", str(tmp_path)]) == 2


class TestSolveCommands:
    """Tests for homogenize, direct and converge."""

    def test_homogenize(self, write_run, tmp_path):
        config = write_run({"fields": {"K": {"type": "rotation", "gradient": [0.5, 0.0]}},
                            "macro": {"resolution": 8, "body_force": {"type": "sine"}}})
        assert main(["homogenize", "--config", config, "--output-dir", str(tmp_path)]) == 0
        out = tmp_path / "homogenize"
        assert json.loads((out / "law.json").read_text())["strategy"] == "fast_path"
        assert len(pd.read_csv(out / "displacement.csv")) == 81
        assert json.loads((out / "summary.json").read_text())["norms"]["l2"] > 0.0

    def test_homogenize_reuses_a_law_file(self, write_run, tmp_path):
        fields = {"K": {"type": "rotation", "gradient": [0.5, -0.3], "stretch": [[1.1, 0.0], [0.0, 0.95]]}}
        macro = {"resolution": 4, "body_force": {"type": "sine"}}
        assert main(["homogenize", "--config", write_run({"fields": fields, "macro": macro}),
                     "--output-dir", str(tmp_path / "first")]) == 0
        law_file = tmp_path / "first" / "homogenize" / "law.json"
        config = write_run({"fields": fields, "macro": dict(macro, law_file=str(law_file))})
        assert main(["homogenize", "--config", config, "--output-dir", str(tmp_path / "second")]) == 0
        first = json.loads((tmp_path / "first" / "homogenize" / "summary.json").read_text())
        second = json.loads((tmp_path / "second" / "homogenize" / "summary.json").read_text())
        assert second["law"]["strategy"] == "fast_path"
        assert second["law"]["metadata"]["source_strategy"] == "fast_path"
        for name, value in first["norms"].items():
            assert second["norms"][name] == pytest.approx(value, rel=1e-12, abs=1e-14)

    def test_direct(self, write_run, tmp_path):
        config = write_run({"direct": {"epsilon": 0.25, "r": 0.5}, "macro": {"body_force": {"type": "sine"}}})
        assert main(["direct", "--config", config, "--output-dir", str(tmp_path)]) == 0
        assert len(pd.read_csv(tmp_path / "direct" / "displacement.csv")) == 33 * 33
        assert (tmp_path / "direct" / "micro_C.bin").exists()

    def test_direct_refuses_coarse_mesh(self, write_run, tmp_path):
        config = write_run({"direct": {"epsilon": 0.25, "r": 0.5, "resolution": 8}})
        assert main(["direct", "--config", config, "--output-dir", str(tmp_path)]) == 2

    def test_converge(self, write_run, tmp_path, capsys):
        config = write_run({"converge": {"epsilons": [0.5, 0.25], "r": 0.5, "plot": True},
                            "macro": {"body_force": {"type": "sine"}}})
        assert main(["converge", "--config", config, "--output-dir", str(tmp_path), "--jobs", "1"]) == 0
        out = tmp_path / "converge"
        assert pd.read_csv(out / "convergence.csv")["resolution"].tolist() == [16, 32]
        assert (out / "convergence.html").exists()
        assert "eps=0.50000" in capsys.readouterr().out


class TestApplicationConfigDefaults:
    """Run files without resolutions fall back to config.yaml."""

    @pytest.fixture
    def app_config(self, tmp_path):
        (tmp_path / "config.yaml").write_text(yaml.safe_dump({
            "cell": {"resolution": 4},
            "macro": {"resolution": 4, "elements_per_period": 4},
            "output": {"plots": True},
        }))

    @pytest.fixture
    def material(self):
        return {key: value for key, value in LAMINATE["material"].items() if key != "resolution"}

    def test_cell_resolution(self, app_config, write_run, material, tmp_path, capsys):
        assert main(["cell", "--config", write_run({"material": material}), "--output-dir", str(tmp_path)]) == 0
        assert "on 16 elements" in capsys.readouterr().out

    def test_macro_resolution(self, app_config, write_run, material, tmp_path):
        config = write_run({"material": material, "macro": {"body_force": {"type": "sine"}}})
        assert main(["homogenize", "--config", config, "--output-dir", str(tmp_path)]) == 0
        assert len(pd.read_csv(tmp_path / "homogenize" / "displacement.csv")) == 25

    def test_converge_uses_config_mesh_rule_and_plots(self, app_config, write_run, material, tmp_path):
        config = write_run({"material": material, "converge": {"epsilons": [0.5, 0.25], "r": 0.5},
                            "macro": {"body_force": {"type": "sine"}}})
        assert main(["converge", "--config", config, "--output-dir", str(tmp_path), "--jobs", "1"]) == 0
        out = tmp_path / "converge"
        assert pd.read_csv(out / "convergence.csv")["resolution"].tolist() == [8, 16]
        assert (out / "convergence.html").exists()


class TestConfigure:
    """Tests for the configure command and the bare entry point."""

    def test_create_config(self, tmp_path):
        assert main(["configure", "--create-config"]) == 0
        assert (tmp_path / "config.yaml").exists()

    def test_no_command_prints_help(self, capsys):
        assert main([]) == 0
        assert "locper-homog" in capsys.readouterr().out

    def test_version(self, capsys):
        with pytest.raises(SystemExit):
            main(["--version"])
        assert "locper-homogenization" in capsys.readouterr().out


@pytest.mark.slow
def test_verify_command(tmp_path):
    assert main(["verify", "--output-dir", str(tmp_path), "--seed", "0"]) in (0, 4)
    out = tmp_path / "verify"
    assert (out / "checks.xml").exists()
    assert set(pd.read_csv(out / "traceability.csv")["criterion"]) == set(range(1, 11))
