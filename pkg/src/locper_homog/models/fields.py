"""
Matrix-valued transform fields x -> H_x, K_x, L_x.

Fields are built from small JSON-able descriptors so that a run config can
name them and the manifest can record them:

    {"type": "constant", "matrix": [[...]]}
    {"type": "rotation", "gradient": [...], "offset": t0, "axis": 2, "stretch": [[...]]}
    {"type": "shear", "gradient": [...], "offset": g0, "i": 0, "j": 1}
    {"type": "scaling", "gradient": [...], "offset": 1.0}
    {"type": "grid", "axes": [[...], ...], "values": [...]}
    {"type": "derived_from_L", "L": {...}, "step": 1e-5}

Angles, shears and scalings are affine in x: offset + gradient . x.
"""

from typing import Any, Callable, Dict, Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from ..exceptions import ConfigError, DimensionMismatchError
from .tensor import Tensor2

FIELD_TYPES = ("constant", "rotation", "shear", "scaling", "grid", "derived_from_L")


class TransformField:
    """Vectorised matrix field on R^n."""

    def __init__(self, n: int, function: Callable[[np.ndarray], np.ndarray], descriptor: Dict[str, Any]):
        self.n = n
        self._function = function
        self.descriptor = dict(descriptor)

    @property
    def kind(self) -> str:
        return str(self.descriptor.get("type", "custom"))

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        if pts.shape[1] != self.n:
            raise DimensionMismatchError(f"field is {self.n}D, points have {pts.shape[1]} coordinates")
        values = np.asarray(self._function(pts), dtype=float).reshape(pts.shape[0], self.n, self.n)
        return values[0] if single else values

    def value(self, x: np.ndarray) -> Tensor2:
        return Tensor2(self(np.asarray(x, dtype=float).reshape(self.n)))

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.descriptor)

    def __repr__(self) -> str:
        return f"<TransformField(type='{self.kind}', n={self.n})>"


def _affine(descriptor: Dict[str, Any], n: int, default_offset: float) -> Callable[[np.ndarray], np.ndarray]:
    gradient = np.asarray(descriptor.get("gradient", [0.0] * n), dtype=float)
    if gradient.shape != (n,):
        raise ConfigError(f"field gradient must have {n} entries")
    offset = float(descriptor.get("offset", default_offset))
    return lambda pts: offset + pts @ gradient


def rotation_matrices(angles: np.ndarray, n: int, axis: int = 2) -> np.ndarray:
    c, s = np.cos(angles), np.sin(angles)
    out = np.zeros(angles.shape + (n, n))
    if n == 2:
        out[..., 0, 0], out[..., 0, 1], out[..., 1, 0], out[..., 1, 1] = c, -s, s, c
        return out
    p, q = [k for k in range(3) if k != axis]
    out[..., axis, axis] = 1.0
    out[..., p, p], out[..., p, q], out[..., q, p], out[..., q, q] = c, -s, s, c
    return out


def constant_field(matrix: Any, n: Optional[int] = None) -> TransformField:
    arr = np.asarray(matrix, dtype=float)
    n = n or arr.shape[0]
    if arr.shape != (n, n):
        raise ConfigError(f"constant field matrix must be {n}x{n}")
    return TransformField(n, lambda pts: np.broadcast_to(arr, (pts.shape[0], n, n)).copy(),
                          {"type": "constant", "matrix": arr.tolist()})


def make_transform_field(descriptor: Optional[Dict[str, Any]], n: int) -> TransformField:
    """Build a field from its descriptor; None means the identity."""
    if descriptor is None:
        return constant_field(np.eye(n), n)
    kind = descriptor.get("type")

    if kind == "constant":
        return constant_field(descriptor.get("matrix", np.eye(n).tolist()), n)

    if kind == "rotation":
        angle = _affine(descriptor, n, 0.0)
        axis = int(descriptor.get("axis", 2))
        stretch = np.asarray(descriptor.get("stretch", np.eye(n)), dtype=float)
        if stretch.shape != (n, n):
            raise ConfigError(f"rotation stretch must be {n}x{n}")
        return TransformField(n, lambda pts: rotation_matrices(angle(pts), n, axis) @ stretch, descriptor)

    if kind == "shear":
        amount = _affine(descriptor, n, 0.0)
        i, j = int(descriptor.get("i", 0)), int(descriptor.get("j", 1))
        if i == j or not (0 <= i < n and 0 <= j < n):
            raise ConfigError("shear needs two distinct axes")

        def shear(pts: np.ndarray) -> np.ndarray:
            out = np.broadcast_to(np.eye(n), (pts.shape[0], n, n)).copy()
            out[:, i, j] = amount(pts)
            return out

        return TransformField(n, shear, descriptor)

    if kind == "scaling":
        factor = _affine(descriptor, n, 1.0)
        return TransformField(n, lambda pts: factor(pts)[:, None, None] * np.eye(n), descriptor)

    if kind == "grid":
        axes = [np.asarray(a, dtype=float) for a in descriptor["axes"]]
        values = np.asarray(descriptor["values"], dtype=float)
        if len(axes) != n or values.shape != tuple(len(a) for a in axes) + (n, n):
            raise ConfigError("grid field values must have shape axes + (n, n)")
        interpolator = RegularGridInterpolator(axes, values.reshape(values.shape[:n] + (n * n,)))
        lower = np.array([a[0] for a in axes])
        upper = np.array([a[-1] for a in axes])
        return TransformField(n, lambda pts: interpolator(np.clip(pts, lower, upper)), descriptor)

    if kind == "derived_from_L":
        # Imported here to avoid a circular import
        from ..services.micro_synth import derived_H_field

        return derived_H_field(make_transform_field(descriptor["L"], n), step=float(descriptor.get("step", 1e-5)))

    raise ConfigError(f"unknown field type '{kind}', expected one of {FIELD_TYPES}")
