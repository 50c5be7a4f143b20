"""
Patch decomposition of a macroscopic box at scale epsilon.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Tuple

import numpy as np

from ..exceptions import DomainError
from .grid import Box

ANCHOR_RULES = ("center", "lattice", "aligned")


@dataclass(frozen=True)
class PatchDecomposition:
    """Cubes of edge epsilon^r on the lattice epsilon^r Z^n that meet the domain.

    ``anchors`` are the patch centres x_k; ``shifted_anchors`` are the points
    x~_k from which the cell coordinate is measured inside patch k.
    """

    domain: Box
    epsilon: float
    r: float
    first_index: np.ndarray
    counts: np.ndarray
    shifted_anchors: np.ndarray
    anchor_rule: str = "center"
    indices: np.ndarray = field(init=False, repr=False)
    anchors: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts, dtype=np.int64)
        first = np.asarray(self.first_index, dtype=np.int64)
        grid = np.array(np.unravel_index(np.arange(int(np.prod(counts))), tuple(counts))).T + first
        anchors = (grid + 0.5) * self.edge
        shifted = np.array(self.shifted_anchors, dtype=float).reshape(anchors.shape)
        for name, value in (("first_index", first), ("counts", counts), ("indices", grid),
                            ("anchors", anchors), ("shifted_anchors", shifted)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def n(self) -> int:
        return self.domain.n

    @property
    def edge(self) -> float:
        return float(self.epsilon ** self.r)

    @property
    def num_patches(self) -> int:
        return int(np.prod(self.counts))

    def locate(self, points: np.ndarray) -> np.ndarray:
        """Row of the patch containing each point; shared faces belong to the higher-index patch."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        inside = self.domain.contains(pts)
        if not np.all(inside):
            bad = pts[~inside][0]
            raise DomainError(f"point {bad.tolist()} lies outside the domain {self.domain.to_dict()}")
        k = np.floor(pts / self.edge).astype(np.int64)
        k = np.clip(k, self.first_index, self.first_index + self.counts - 1)
        return np.ravel_multi_index(tuple((k - self.first_index).T), tuple(self.counts))

    def with_shifted_anchors(self, shifted: np.ndarray, rule: str) -> "PatchDecomposition":
        return PatchDecomposition(self.domain, self.epsilon, self.r, self.first_index, self.counts,
                                  shifted, rule)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "domain": self.domain.to_dict(),
            "epsilon": self.epsilon,
            "r": self.r,
            "edge": self.edge,
            "patches": self.num_patches,
            "anchor_rule": self.anchor_rule,
        }

    def __repr__(self) -> str:
        return (f"<PatchDecomposition(epsilon={self.epsilon}, r={self.r}, "
                f"patches={self.num_patches}, anchor_rule='{self.anchor_rule}')>")


def patch_index_range(domain: Box, edge: float) -> Tuple[np.ndarray, np.ndarray]:
    """First lattice index and count per axis of the cubes meeting the open box."""
    first = np.floor(domain.lower / edge).astype(np.int64)
    last = np.ceil(domain.upper / edge).astype(np.int64) - 1
    return first, last - first + 1
