"""
Micro-structure synthesis: locally periodic coefficient fields at scale epsilon.

Inside patch k the cell coordinate of x is y = H_k^-1 (x - x~_k) / epsilon,
with H_k, K_k taken at the patch anchor x_k. The coefficient fields are

    S_r^eps(x) = K_k S(K_k^T K_k, y) K_k^T
    C^eps(x)   = pushforward(C(y), K_k)

The nonperiodic comparison field uses y = L_x^-1 x / epsilon and M_x instead.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..exceptions import ConfigError, SingularTransformError
from ..models.cell import CellMaterial
from ..models.fields import TransformField
from ..models.grid import Box
from ..models.micro import PatchDecomposition, patch_index_range
from ..models.tensor import array_to_voigt_matrix, array_to_voigt_vector
from .artifacts import dump_array
from .cell_domain import sample_phase
from .tensor_core import StVenantGenerator, transform_array
from shared.logging_config import get_logger

logger = get_logger(__name__)

CONDITION_LIMIT = 1e12
APPROX_VARIANTS = ("full", "frozen")

FieldArrays = Tuple[np.ndarray, np.ndarray]


def _as_box(domain: Any) -> Box:
    if isinstance(domain, Box):
        return domain
    if isinstance(domain, dict):
        return Box.from_dict(domain)
    lower, upper = domain
    return Box(np.asarray(lower), np.asarray(upper))


def decompose(domain: Any, epsilon: float, r: float, anchor_rule: str = "center") -> PatchDecomposition:
    """Patch decomposition with anchors at patch centres or snapped to the epsilon lattice."""
    box = _as_box(domain)
    if not 0.0 < epsilon < 1.0:
        raise ConfigError(f"epsilon must lie in (0, 1), got {epsilon}")
    if not 0.0 < r < 1.0:
        raise ConfigError(f"patch exponent r must lie in (0, 1), got {r}")
    if anchor_rule not in ("center", "lattice"):
        raise ConfigError(f"anchor rule must be 'center' or 'lattice', got '{anchor_rule}'")
    edge = epsilon ** r
    if edge <= epsilon:
        raise ConfigError(f"patch edge {edge} must exceed epsilon {epsilon}")

    first, counts = patch_index_range(box, edge)
    grid = np.array(np.unravel_index(np.arange(int(np.prod(counts))), tuple(counts))).T + first
    centers = (grid + 0.5) * edge
    shifted = centers if anchor_rule == "center" else epsilon * np.round(centers / epsilon)
    decomposition = PatchDecomposition(box, epsilon, r, first, counts, shifted, anchor_rule)
    logger.debug(f"Decomposed domain into {decomposition.num_patches} patches of edge {edge:.6g}")
    return decomposition


def align_to_nonperiodic(decomposition: PatchDecomposition, L_field: TransformField,
                         H_field: TransformField) -> PatchDecomposition:
    """Shift x~_k so that cell coordinates match L_xk^-1 x_k / eps + H_k^-1 (x - x_k) / eps modulo Y."""
    eps = decomposition.epsilon
    anchors = decomposition.anchors
    H = H_field(anchors)
    phase = np.einsum("pij,pj->pi", np.linalg.inv(L_field(anchors)), anchors) / eps
    shifted = anchors - eps * np.einsum("pij,pj->pi", H, phase - np.round(phase))
    return decomposition.with_shifted_anchors(shifted, "aligned")


def cell_coordinates(decomposition: PatchDecomposition, H_field: TransformField,
                     points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Patch rows and cell coordinates H_k^-1 (x - x~_k) / eps (unreduced) for points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    rows = decomposition.locate(pts)
    H_inv = np.linalg.inv(H_field(decomposition.anchors))
    offset = pts - decomposition.shifted_anchors[rows]
    return rows, np.einsum("pij,pj->pi", H_inv[rows], offset) / decomposition.epsilon


def approx_field(psi: Callable[[np.ndarray, np.ndarray], np.ndarray], decomposition: PatchDecomposition,
                 variant: str, H_field: TransformField) -> Callable[[np.ndarray], np.ndarray]:
    """Locally periodic approximation of a two-scale field psi(x, y), Y-periodic in y.

    ``full`` keeps the slow argument at x; ``frozen`` fixes it at the patch anchor.
    """
    if variant not in APPROX_VARIANTS:
        raise ConfigError(f"variant must be one of {APPROX_VARIANTS}, got '{variant}'")

    def evaluate(points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        rows, ybar = cell_coordinates(decomposition, H_field, pts)
        slow = pts if variant == "full" else decomposition.anchors[rows]
        return psi(slow, np.mod(ybar, 1.0))

    return evaluate


def residual_values(material: CellMaterial, K: np.ndarray, phase: np.ndarray, ybar: np.ndarray) -> np.ndarray:
    """Pushed-forward residual K S_phase(K^T K, y) K^T for per-point K (N, n, n)."""
    n = material.n
    cauchy_green = np.einsum("pki,pkj->pij", K, K)
    inner = np.zeros((K.shape[0], n, n))
    for p, entry in enumerate(material.phases):
        mask = phase == p
        if not np.any(mask):
            continue
        generator = entry.residual_generator
        if isinstance(generator, StVenantGenerator):
            inner[mask] = generator(cauchy_green[mask])
        else:
            inner[mask] = [generator(c, y) for c, y in zip(cauchy_green[mask], ybar[mask])]
    return np.einsum("pia,pab,pjb->pij", K, inner, K)


class MicroField:
    """Single-scale coefficient fields (S_r^eps, C^eps) on the macroscopic domain."""

    def __init__(self, material: CellMaterial, H_field: TransformField, K_field: TransformField,
                 decomposition: PatchDecomposition):
        self.material = material
        self.H_field = H_field
        self.K_field = K_field
        self.decomposition = decomposition
        anchors = decomposition.anchors
        self.H_patch = H_field(anchors)
        self.K_patch = K_field(anchors)
        conditions = np.linalg.cond(self.H_patch)
        if np.any(~np.isfinite(conditions)) or np.any(conditions > CONDITION_LIMIT):
            bad = int(np.argmax(np.where(np.isfinite(conditions), conditions, np.inf)))
            raise SingularTransformError(f"H is singular at anchor {anchors[bad].tolist()}")
        self.H_inv_patch = np.linalg.inv(self.H_patch)
        # (patches, phases, n, n, n, n)
        self.stiffness_table = transform_array(material.stiffness_stack[None], self.K_patch[:, None])
        self.position_dependent = any(p.residual_is_position_dependent for p in material.phases)
        self.residual_table: Optional[np.ndarray] = None
        if not self.position_dependent:
            P, phases = anchors.shape[0], len(material.phases)
            K_rep = np.repeat(self.K_patch, phases, axis=0)
            phase_rep = np.tile(np.arange(phases), P)
            self.residual_table = residual_values(material, K_rep, phase_rep,
                                                  np.zeros((K_rep.shape[0], material.n)))
            self.residual_table = self.residual_table.reshape(P, phases, material.n, material.n)

    @property
    def epsilon(self) -> float:
        return self.decomposition.epsilon

    @property
    def n(self) -> int:
        return self.material.n

    def locate(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Patch rows, reduced cell coordinates and phase ids at points."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        rows = self.decomposition.locate(pts)
        offset = pts - self.decomposition.shifted_anchors[rows]
        ybar = np.mod(np.einsum("pij,pj->pi", self.H_inv_patch[rows], offset) / self.epsilon, 1.0)
        return rows, ybar, sample_phase(self.material, ybar)

    def evaluate(self, points: np.ndarray) -> FieldArrays:
        rows, ybar, phase = self.locate(points)
        stiffness = self.stiffness_table[rows, phase]
        if self.residual_table is not None:
            residual = self.residual_table[rows, phase]
        else:
            residual = residual_values(self.material, self.K_patch[rows], phase, ybar)
        return residual, stiffness

    def to_dict(self) -> Dict[str, Any]:
        return {
            "decomposition": self.decomposition.to_dict(),
            "H": self.H_field.to_dict(),
            "K": self.K_field.to_dict(),
            "material": self.material.to_dict(),
        }

    def __repr__(self) -> str:
        return f"<MicroField(epsilon={self.epsilon}, patches={self.decomposition.num_patches})>"


def synth_microstructure(material: CellMaterial, H_field: TransformField, K_field: TransformField,
                         decomposition: PatchDecomposition) -> MicroField:
    field = MicroField(material, H_field, K_field, decomposition)
    logger.info(f"Synthesised micro field: {field!r}")
    return field


def _cell_centres(box: Box, counts: Sequence[int]) -> np.ndarray:
    """Centres of a uniform voxel grid over box, in row-major order."""
    axes = [box.lower[d] + (np.arange(counts[d]) + 0.5) * box.extent[d] / counts[d] for d in range(box.n)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, box.n)


def export_micro_voxels(micro: MicroField, resolution: Union[int, Sequence[int]], path: Path) -> List[Path]:
    """Voxelised Voigt dump of (S_r^eps, C^eps) sampled at voxel centres; returns the two headers."""
    box = micro.decomposition.domain
    counts = np.broadcast_to(np.atleast_1d(resolution), (box.n,)).astype(int)
    if np.any(counts < 1):
        raise ConfigError(f"voxel resolution must be positive, got {counts.tolist()}")
    residual, stiffness = micro.evaluate(_cell_centres(box, counts))
    n = micro.n
    grid = tuple(counts.tolist())
    metadata = {"domain": box.to_dict(), "epsilon": micro.epsilon, "voigt": "plain"}
    path = Path(path)
    headers = [
        dump_array(array_to_voigt_matrix(stiffness, n).reshape(grid + (-1,)), path.with_name(f"{path.stem}_C"),
                   dict(metadata, field="C_eps")),
        dump_array(array_to_voigt_vector(residual, n).reshape(grid + (-1,)), path.with_name(f"{path.stem}_S"),
                   dict(metadata, field="S_r_eps")),
    ]
    logger.info(f"Exported micro field on a {grid} voxel grid to {path.parent}")
    return headers


def _inverse_map_jacobian(L_field: TransformField, points: np.ndarray, step: float) -> np.ndarray:
    """Central-difference Jacobian of x -> L_x^-1 x at points (N, n, n)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = pts.shape[1]

    def g(x: np.ndarray) -> np.ndarray:
        return np.einsum("pij,pj->pi", np.linalg.inv(L_field(x)), x)

    jacobian = np.empty((pts.shape[0], n, n))
    for j in range(n):
        h = step * np.maximum(1.0, np.abs(pts[:, j]))
        shift = np.zeros_like(pts)
        shift[:, j] = h
        jacobian[:, :, j] = (g(pts + shift) - g(pts - shift)) / (2.0 * h[:, None])
    return jacobian


def jacobian_condition(L_field: TransformField, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Condition numbers of grad(L_x^-1 x); large values flag points where H cannot be derived."""
    return np.linalg.cond(_inverse_map_jacobian(L_field, x, step))


def derive_H_from_L(L_field: TransformField, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """H_x = (grad(L_x^-1 x))^-1 by central differences; (n, n) for one point, (N, n, n) for many."""
    pts = np.asarray(x, dtype=float)
    jacobian = _inverse_map_jacobian(L_field, pts, step)
    conditions = np.linalg.cond(jacobian)
    if np.any(~np.isfinite(conditions)) or np.any(conditions > CONDITION_LIMIT):
        worst = np.atleast_2d(pts)[int(np.argmax(np.nan_to_num(conditions, nan=np.inf)))]
        raise SingularTransformError(f"grad(L^-1 x) is singular near {worst.tolist()}")
    H = np.linalg.inv(jacobian)
    return H[0] if pts.ndim == 1 else H


def derived_H_field(L_field: TransformField, step: float = 1e-5) -> TransformField:
    return TransformField(L_field.n, lambda pts: derive_H_from_L(L_field, pts, step),
                          {"type": "derived_from_L", "L": L_field.to_dict(), "step": step})


@dataclass
class NonperiodicField:
    """Coefficients at y = L_x^-1 x / eps with anisotropy M_x, without patches."""

    material: CellMaterial
    L_field: TransformField
    M_field: TransformField
    epsilon: float

    def evaluate(self, points: np.ndarray) -> FieldArrays:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        ybar = np.mod(np.einsum("pij,pj->pi", np.linalg.inv(self.L_field(pts)), pts) / self.epsilon, 1.0)
        phase = sample_phase(self.material, ybar)
        M = self.M_field(pts)
        stiffness = transform_array(self.material.stiffness_stack[phase], M)
        return residual_values(self.material, M, phase, ybar), stiffness


def nonperiodic_field(material: CellMaterial, L_field: TransformField, M_field: TransformField,
                      epsilon: float) -> NonperiodicField:
    if not 0.0 < epsilon < 1.0:
        raise ConfigError(f"epsilon must lie in (0, 1), got {epsilon}")
    return NonperiodicField(material, L_field, M_field, epsilon)


def nonperiodic_gap(micro: MicroField, reference: NonperiodicField, samples_per_axis: int = 256) -> float:
    """Relative L2 distance |C - C_np| + |S - S_np| over cell centres of a uniform grid, scaled by |C_np|."""
    box = micro.decomposition.domain
    points = _cell_centres(box, [samples_per_axis] * box.n)
    S_micro, C_micro = micro.evaluate(points)
    S_reference, C_reference = reference.evaluate(points)
    difference = (np.sqrt(np.mean(np.sum((C_micro - C_reference) ** 2, axis=(1, 2, 3, 4))))
                  + np.sqrt(np.mean(np.sum((S_micro - S_reference) ** 2, axis=(1, 2)))))
    scale = np.sqrt(np.mean(np.sum(C_reference ** 2, axis=(1, 2, 3, 4))))
    return float(difference / scale)
