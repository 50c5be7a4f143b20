"""
Cell domain service: periodic mesh construction and phase assignment.

Phases are assigned per element by testing the element centroid against the
geometry descriptor. Supported descriptors:

    {"type": "homogeneous"}
    {"type": "laminate", "fraction": f, "axis": d}      phase 0 where y_d < f
    {"type": "inclusion", "radius": r, "center": [...]}  phase 1 inside the ball
    {"type": "checkerboard", "cells": k}
    {"type": "voxel", "path": "phases.json"} or {"type": "voxel", "phases": array}
"""

import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from ..exceptions import ConfigError, GeometryError
from ..models.cell import CellMaterial, CellMesh, Phase
from .tensor_core import make_isotropic, make_rotated_orthotropic, rotation
from shared.logging_config import get_logger

logger = get_logger(__name__)

GEOMETRY_TYPES = ("homogeneous", "laminate", "inclusion", "checkerboard", "voxel")


def build_cell_mesh(n: int, m: int) -> CellMesh:
    """Uniform periodic Q1 mesh of (0,1)^n with m elements per edge."""
    mesh = CellMesh(n=n, m=m)
    logger.debug(f"Built cell mesh n={n} m={m} ({mesh.num_nodes} nodes)")
    return mesh


def periodic_map(mesh: CellMesh, node: Union[int, np.ndarray]) -> Union[int, np.ndarray]:
    """Canonical node id for node ids of the (m+1)^n grid including the upper faces."""
    result = mesh.periodic_map[node]
    return int(result) if np.ndim(result) == 0 else result


def _phase_ids_for(mesh: CellMesh, geometry: Dict[str, Any]) -> np.ndarray:
    kind = geometry.get("type")
    centroids = mesh.element_centroids

    if kind == "homogeneous":
        return np.zeros(mesh.num_elements, dtype=np.int64)

    if kind == "laminate":
        fraction = float(geometry.get("fraction", 0.5))
        axis = int(geometry.get("axis", 0))
        if not 0.0 < fraction < 1.0:
            raise GeometryError(f"laminate fraction must lie in (0, 1), got {fraction}")
        if not 0 <= axis < mesh.n:
            raise GeometryError(f"laminate axis {axis} outside 0..{mesh.n - 1}")
        return (centroids[:, axis] >= fraction).astype(np.int64)

    if kind == "inclusion":
        radius = float(geometry["radius"])
        center = np.asarray(geometry.get("center", [0.5] * mesh.n), dtype=float)
        if center.shape != (mesh.n,):
            raise GeometryError(f"inclusion center must have {mesh.n} coordinates")
        if radius <= 0.0 or np.any(center - radius < 0.0) or np.any(center + radius > 1.0):
            raise GeometryError("inclusion must lie within the unit cell")
        inside = np.linalg.norm(centroids - center, axis=1) < radius
        return inside.astype(np.int64)

    if kind == "checkerboard":
        cells = int(geometry.get("cells", 2))
        if cells < 1:
            raise GeometryError("checkerboard needs at least one cell per edge")
        return (np.floor(centroids * cells).astype(np.int64).sum(axis=1) % 2).astype(np.int64)

    if kind == "voxel":
        if "phases" in geometry:
            voxels = np.asarray(geometry["phases"], dtype=np.int64)
        else:
            voxels = load_voxel_phases(Path(geometry["path"]))
        if voxels.shape != (mesh.m,) * mesh.n:
            raise GeometryError(f"voxel grid {voxels.shape} does not match mesh {(mesh.m,) * mesh.n}")
        if voxels.min() < 0:
            raise GeometryError("voxel phase ids must be non-negative")
        return voxels.reshape(-1)

    raise GeometryError(f"unknown geometry type '{kind}', expected one of {GEOMETRY_TYPES}")


def assign_phases(mesh: CellMesh, geometry: Dict[str, Any], phases: Sequence[Phase]) -> CellMaterial:
    """Assign phases to elements; every declared phase must occupy some element."""
    phase_ids = _phase_ids_for(mesh, geometry)
    if geometry.get("type") == "voxel" and "path" in geometry:
        named = voxel_header(Path(geometry["path"])).get("phases")
        declared = named if isinstance(named, int) or named is None else len(named)
        if declared is not None and declared != len(phases):
            raise ConfigError(f"voxel file {geometry['path']} declares {declared} phases, "
                              f"the material lists {len(phases)}")
    expected = int(phase_ids.max()) + 1
    if len(phases) < expected:
        raise GeometryError(f"geometry '{geometry.get('type')}' needs {expected} phases, got {len(phases)}")
    counts = np.bincount(phase_ids, minlength=len(phases))
    empty = [phases[i].name for i in range(len(phases)) if counts[i] == 0]
    if empty:
        raise GeometryError(f"phases occupy no element at resolution m={mesh.m}: {', '.join(empty)}")

    material = CellMaterial(mesh=mesh, phases=tuple(phases), phase_ids=phase_ids, geometry=dict(geometry))
    logger.info(f"Assigned {len(phases)} phases on {mesh!r}", extra={
        "geometry": geometry.get("type"),
        "volume_fractions": material.volume_fractions.tolist(),
    })
    return material


def sample_phase(material: CellMaterial, points: np.ndarray) -> np.ndarray:
    """Phase ids at cell points (taken modulo Y), using the element containing each point."""
    mesh = material.mesh
    ybar = np.mod(np.atleast_2d(points), 1.0)
    index = np.minimum(np.floor(ybar * mesh.m).astype(np.int64), mesh.m - 1)
    element = np.ravel_multi_index(tuple(index.T), (mesh.m,) * mesh.n)
    return material.phase_ids[element]


def voxel_header(path: Path) -> Dict[str, Any]:
    with open(Path(path), "r", encoding="utf-8") as f:
        return json.load(f)


def load_voxel_phases(path: Path) -> np.ndarray:
    """Read a voxel phase grid: a JSON header with dims and dtype next to a raw row-major file.

    The header may name the phases; assign_phases checks that list against the material.
    """
    path = Path(path)
    header = voxel_header(path)
    dims = tuple(int(d) for d in header["dims"])
    dtype = np.dtype(header.get("dtype", "int32"))
    data_path = path.parent / header.get("data", path.with_suffix(".raw").name)
    voxels = np.fromfile(data_path, dtype=dtype)
    if voxels.size != int(np.prod(dims)):
        raise GeometryError(f"voxel file {data_path} holds {voxels.size} values, header says {dims}")
    return voxels.reshape(dims).astype(np.int64)


def export_voxels(material: CellMaterial, path: Path) -> List[Path]:
    """Write the phase assignment in the voxel format read by load_voxel_phases."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mesh = material.mesh
    data_path = path.with_suffix(".raw")
    material.phase_ids.astype("<i4").reshape((mesh.m,) * mesh.n).tofile(data_path)
    header = {
        "dims": [mesh.m] * mesh.n,
        "dtype": "<i4",
        "data": data_path.name,
        "phases": [p.name for p in material.phases],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(header, f, indent=2, sort_keys=True)
    return [path, data_path]


def phases_from_config(entries: Sequence[Dict[str, Any]], n: int) -> List[Phase]:
    """Build phases from run-config entries (isotropic or rotated orthotropic)."""
    phases = []
    for i, entry in enumerate(entries):
        name = entry.get("name", f"phase{i}")
        kind = entry.get("type", "isotropic")
        if kind == "isotropic":
            stiffness = make_isotropic(float(entry["lambda"]), float(entry["mu"]), n)
        elif kind == "orthotropic":
            angle = np.deg2rad(float(entry.get("orientation_angle", 0.0)))
            stiffness = make_rotated_orthotropic(entry["constants"], rotation(angle, n))
        else:
            raise GeometryError(f"unknown phase type '{kind}'")
        phases.append(Phase(name=name, stiffness=stiffness))
    return phases


def build_cell_material(n: int, m: int, geometry: Dict[str, Any],
                        phase_entries: Sequence[Dict[str, Any]],
                        mesh: Optional[CellMesh] = None) -> CellMaterial:
    """Convenience: mesh, phases and assignment from config sections."""
    mesh = mesh or build_cell_mesh(n, m)
    return assign_phases(mesh, geometry, phases_from_config(phase_entries, n))
