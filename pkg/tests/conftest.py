"""
Shared fixtures for the test suite.
"""

import logging

import numpy as np
import pytest

from locper_homog.models.cell import CellMaterial, Phase
from locper_homog.services.cell_domain import assign_phases, build_cell_mesh
from locper_homog.services.cell_solver import CellSolver, SolverSettings
from locper_homog.services.tensor_core import make_isotropic

LOCPER_ENV = (
    "LOCPER_SOLVER_METHOD", "LOCPER_SOLVER_RTOL", "LOCPER_SOLVER_MAXITER", "LOCPER_CELL_RESOLUTION",
    "LOCPER_LOG_LEVEL", "LOCPER_LOG_FILE", "LOCPER_OUTPUT_DIR", "LOCPER_JOBS",
)


@pytest.fixture(autouse=True)
def isolated_workdir(tmp_path, monkeypatch):
    """Run every test in its own directory so no config.yaml or log file leaks in."""
    monkeypatch.chdir(tmp_path)
    for name in LOCPER_ENV:
        monkeypatch.delenv(name, raising=False)
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    yield tmp_path
    for handler in root.handlers[:]:
        if handler not in handlers:
            root.removeHandler(handler)
            handler.close()
    for handler in handlers:
        if handler not in root.handlers:
            root.addHandler(handler)
    root.setLevel(level)


@pytest.fixture
def stiff_phase():
    return Phase("stiff", make_isotropic(10.0, 10.0, 2))


@pytest.fixture
def soft_phase():
    return Phase("soft", make_isotropic(1.0, 1.0, 2))


@pytest.fixture
def direct_settings():
    """Sparse LU solves, tight enough for exactness checks."""
    return SolverSettings(method="direct", rtol=1e-10)


@pytest.fixture
def homogeneous_material(stiff_phase) -> CellMaterial:
    return assign_phases(build_cell_mesh(2, 8), {"type": "homogeneous"}, [stiff_phase])


@pytest.fixture
def laminate_material(stiff_phase, soft_phase) -> CellMaterial:
    """Two-phase laminate normal to y1 with the interface on a grid line."""
    return assign_phases(build_cell_mesh(2, 16), {"type": "laminate", "fraction": 0.5, "axis": 0},
                         [stiff_phase, soft_phase])


@pytest.fixture
def inclusion_material(stiff_phase, soft_phase) -> CellMaterial:
    return assign_phases(build_cell_mesh(2, 16), {"type": "inclusion", "radius": 0.3},
                         [stiff_phase, soft_phase])


@pytest.fixture
def laminate_solver(laminate_material, direct_settings):
    return CellSolver(laminate_material, direct_settings)


@pytest.fixture
def inclusion_solver(inclusion_material, direct_settings):
    return CellSolver(inclusion_material, direct_settings)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
