"""Pinhole camera model, unprojection/reprojection and SE(3) algebra.

Conventions used everywhere in this package:

  * Image grids are numpy arrays indexed [v, u] = [row, column]. A pixel
    coordinate (u, v) pairs u (horizontal, column) with cx and v (vertical,
    row) with cy.
  * Depth frames are float32 grids in stored depth units (millimeters for
    the shipped datasets); invalid pixels are quiet NaN. ``d_scale``
    converts stored units to meters.
  * Color frames are uint8 arrays of shape (H, W, 3), RGB.
  * Point clouds and transforms are in meters, camera coordinates
    (x right, y down, z forward).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, GeometryError

ROTATION_TOL = 1e-9


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole parameters of one camera plus its depth unit scale."""

    fx: float
    fy: float
    cx: float
    cy: float
    d_scale: float
    width: int
    height: int
    camera: str = "lq"

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ConfigurationError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.d_scale <= 0:
            raise ConfigurationError(f"d_scale must be positive, got {self.d_scale}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ConfigurationError(
                f"principal point ({self.cx}, {self.cy}) outside image {self.width}x{self.height}"
            )

    @classmethod
    def from_json(cls, path: str | Path) -> "Intrinsics":
        with open(path, encoding="utf-8") as f:
            d = json.load(f)
        return cls(
            fx=float(d["fx"]),
            fy=float(d["fy"]),
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            d_scale=float(d["d_scale"]),
            width=int(d["width"]),
            height=int(d["height"]),
            camera=str(d.get("camera", "lq")),
        )

    def to_json(self, path: str | Path) -> None:
        d = {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "d_scale": self.d_scale,
            "width": self.width,
            "height": self.height,
            "camera": self.camera,
        }
        with open(path, "w", encoding="utf-8") as f:
            json.dump(d, f, indent=2, sort_keys=True)
            f.write("\n")


@dataclass(eq=False)
class PointCloud:
    """Points in camera space with per-point color and source-pixel provenance.

    ``points`` is (N, 3) float64 meters, ``colors`` (N, 3) uint8,
    ``pixels`` (N, 2) int32 holding the source (u, v) of each point.
    ``mask_flags`` optionally carries a per-point boolean (used to drag an
    object mask through transform/reprojection).
    """

    points: np.ndarray
    colors: np.ndarray
    pixels: np.ndarray
    camera: str = "lq"
    mask_flags: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.points)
        if len(self.colors) != n or len(self.pixels) != n:
            raise ConfigurationError("points, colors and pixels must have equal length")
        if self.mask_flags is not None and len(self.mask_flags) != n:
            raise ConfigurationError("mask_flags length must match points")

    def __len__(self) -> int:
        return len(self.points)

    def take(self, index: np.ndarray) -> "PointCloud":
        """Subset or reorder the cloud by an index array."""
        return PointCloud(
            points=self.points[index],
            colors=self.colors[index],
            pixels=self.pixels[index],
            camera=self.camera,
            mask_flags=None if self.mask_flags is None else self.mask_flags[index],
        )


def _check_rotation(R: np.ndarray) -> None:
    if R.shape != (3, 3):
        raise ConfigurationError(f"rotation must be 3x3, got {R.shape}")
    err = np.max(np.abs(R.T @ R - np.eye(3)))
    if err > ROTATION_TOL:
        raise ConfigurationError(f"rotation is not orthonormal (max |R'R - I| = {err:.3e})")
    det = np.linalg.det(R)
    if abs(det - 1.0) > ROTATION_TOL:
        raise ConfigurationError(f"rotation determinant {det} != +1")


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """SE(3) element: 3x3 rotation ``R`` plus translation ``t`` in meters."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, dtype=np.float64)
        t = np.asarray(self.t, dtype=np.float64).reshape(3)
        _check_rotation(R)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_axis_angle(cls, axis, angle_rad: float, t=(0.0, 0.0, 0.0)) -> "RigidTransform":
        """Rotation of ``angle_rad`` about the (normalized) ``axis`` plus translation."""
        axis = np.asarray(axis, dtype=np.float64)
        n = np.linalg.norm(axis)
        if n == 0:
            raise ConfigurationError("rotation axis must be non-zero")
        from scipy.spatial.transform import Rotation

        R = Rotation.from_rotvec(axis / n * angle_rad).as_matrix()
        return cls(R, np.asarray(t, dtype=np.float64))

    def apply_points(self, points: np.ndarray) -> np.ndarray:
        """Return R @ p + t for each row of ``points``."""
        return points @ self.R.T + self.t

    def inverse(self) -> "RigidTransform":
        return RigidTransform(self.R.T, -self.R.T @ self.t)

    def rotation_angle_deg(self) -> float:
        """Geodesic rotation angle of R, in degrees."""
        c = (np.trace(self.R) - 1.0) / 2.0
        return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))

    def to_dict(self) -> dict:
        return {"rotation": self.R.tolist(), "translation_m": self.t.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "RigidTransform":
        return cls(np.asarray(d["rotation"], dtype=np.float64), np.asarray(d["translation_m"], dtype=np.float64))


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Composition a∘b: the transform applying ``b`` first, then ``a``."""
    return RigidTransform(a.R @ b.R, a.R @ b.t + a.t)


def apply_transform(cloud: PointCloud, transform: RigidTransform) -> PointCloud:
    """Rigidly move every point; colors and provenance are untouched."""
    return PointCloud(
        points=transform.apply_points(cloud.points),
        colors=cloud.colors,
        pixels=cloud.pixels,
        camera=cloud.camera,
        mask_flags=cloud.mask_flags,
    )


def valid_mask(depth: np.ndarray) -> np.ndarray:
    """Boolean grid of pixels carrying a usable measurement (finite, > 0)."""
    return np.isfinite(depth) & (depth > 0)


def unproject(color: np.ndarray, depth: np.ndarray, intr: Intrinsics) -> PointCloud:
    """Lift every valid depth pixel into camera space.

    x = (u - cx) * z / fx, y = (v - cy) * z / fy, z = d * d_scale.
    Invalid pixels (NaN or non-positive depth) produce no point. Point order
    is row-major pixel order, so provenance (u, v) is injective.
    """
    if depth.shape != (intr.height, intr.width):
        raise ConfigurationError(
            f"depth shape {depth.shape} does not match intrinsics {intr.height}x{intr.width}"
        )
    if color.shape[:2] != depth.shape:
        raise ConfigurationError(f"color shape {color.shape} does not match depth {depth.shape}")

    valid = valid_mask(depth)
    v_idx, u_idx = np.nonzero(valid)
    d = depth[valid].astype(np.float64)
    z = d * intr.d_scale
    x = (u_idx - intr.cx) * z / intr.fx
    y = (v_idx - intr.cy) * z / intr.fy
    return PointCloud(
        points=np.stack([x, y, z], axis=1),
        colors=color[valid].astype(np.uint8, copy=False),
        pixels=np.stack([u_idx, v_idx], axis=1).astype(np.int32),
        camera=intr.camera,
    )


def _project_pixels(points: np.ndarray, intr: Intrinsics) -> tuple[np.ndarray, np.ndarray]:
    """Project points to (u, v) with nearest-integer rounding. z must be > 0."""
    z = points[:, 2]
    if np.any(z <= 0):
        raise GeometryError("cannot reproject a point with z <= 0")
    u = np.rint(points[:, 0] * intr.fx / z + intr.cx).astype(np.int64)
    v = np.rint(points[:, 1] * intr.fy / z + intr.cy).astype(np.int64)
    return u, v


def reproject_indices(cloud: PointCloud, intr: Intrinsics) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Z-buffered pixel assignment for a cloud.

    Returns (u, v, point_index) for the pixels that receive at least one
    in-bounds point; where several points land on one pixel, the smallest z
    wins (front surface), ties broken by point order.
    """
    u, v = _project_pixels(cloud.points, intr)
    inside = (u >= 0) & (u < intr.width) & (v >= 0) & (v < intr.height)
    idx = np.nonzero(inside)[0]
    if len(idx) == 0:
        return (np.empty(0, np.int64),) * 3
    flat = v[idx] * intr.width + u[idx]
    # lexsort is stable: sort by pixel, then z, then original order for ties
    order = np.lexsort((idx, cloud.points[idx, 2], flat))
    flat_sorted = flat[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = flat_sorted[1:] != flat_sorted[:-1]
    winners = idx[order[first]]
    return u[winners], v[winners], winners


def reproject(cloud: PointCloud, intr: Intrinsics) -> tuple[np.ndarray, np.ndarray]:
    """Perspective-project a cloud back onto the image grid of ``intr``.

    Inverse of :func:`unproject`: u = round(x*fx/z + cx), v = round(y*fy/z + cy),
    written depth is z / d_scale. Out-of-bounds points are dropped, empty
    pixels become NaN, and collisions keep the nearest surface.
    """
    color = np.zeros((intr.height, intr.width, 3), dtype=np.uint8)
    depth = np.full((intr.height, intr.width), np.nan, dtype=np.float32)
    u, v, winners = reproject_indices(cloud, intr)
    if len(winners):
        depth[v, u] = (cloud.points[winners, 2] / intr.d_scale).astype(np.float32)
        color[v, u] = cloud.colors[winners]
    return color, depth
