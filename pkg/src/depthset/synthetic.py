"""Analytic two-camera tabletop scenes for tests and demos.

Renders exact depth by ray casting against a finite table plane, a floor
plane and axis-aligned boxes, from any camera pose. Because geometry,
poses and the inter-camera transform are known in closed form, renders
serve as ground truth for projection, calibration, masking and
augmentation checks; a degrade step fakes a lower-quality sensor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Intrinsics, RigidTransform

TABLE_HIT = 0
FLOOR_HIT = -2
NO_HIT = -1


@dataclass(frozen=True)
class SceneBox:
    """World-space AABB sitting on the table plane (z up)."""

    min_corner: tuple[float, float, float]
    max_corner: tuple[float, float, float]
    color: tuple[int, int, int] = (200, 80, 40)


@dataclass
class TableScene:
    """Finite table at world z = 0 with boxes on top and a floor below."""

    table_half_extent: tuple[float, float] = (0.5, 0.4)
    table_color: tuple[int, int, int] = (120, 120, 120)
    floor_z: float = -0.75
    floor_color: tuple[int, int, int] = (60, 60, 60)
    boxes: list[SceneBox] = field(default_factory=list)


def look_at_pose(eye, target, up=(0.0, 0.0, 1.0)) -> tuple[np.ndarray, np.ndarray]:
    """Camera-to-world rotation and position for a camera looking at ``target``.

    Computer-vision convention: camera x right, y down, z forward.
    """
    eye = np.asarray(eye, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    up = np.asarray(up, dtype=np.float64)
    z = target - eye
    z = z / np.linalg.norm(z)
    x = np.cross(z, up)
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    return np.stack([x, y, z], axis=1), eye


def extrinsic_between(pose_src: tuple[np.ndarray, np.ndarray], pose_dst: tuple[np.ndarray, np.ndarray]) -> RigidTransform:
    """Rigid transform mapping source-camera coordinates into destination-camera coordinates."""
    R_src, eye_src = pose_src
    R_dst, eye_dst = pose_dst
    return RigidTransform(R_dst.T @ R_src, R_dst.T @ (eye_src - eye_dst))


def render(
    scene: TableScene,
    pose: tuple[np.ndarray, np.ndarray],
    intr: Intrinsics,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Ray-cast the scene from a camera pose.

    Returns (color, depth, hit) where depth is in stored units with NaN for
    rays that miss everything, and hit holds TABLE_HIT, FLOOR_HIT, NO_HIT or
    the 1-based box index per pixel.
    """
    R, eye = pose
    h, w = intr.height, intr.width
    us, vs = np.meshgrid(np.arange(w), np.arange(h))
    dirs_cam = np.stack(
        [(us - intr.cx) / intr.fx, (vs - intr.cy) / intr.fy, np.ones_like(us, dtype=np.float64)], axis=-1
    )
    dirs = dirs_cam @ R.T  # world direction per pixel; camera depth of o + s*d is exactly s

    best_s = np.full((h, w), np.inf)
    hit = np.full((h, w), NO_HIT, dtype=np.int32)
    color = np.zeros((h, w, 3), dtype=np.uint8)

    def plane_hits(z_plane, half_extent):
        dz = dirs[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            s = (z_plane - eye[2]) / dz
        pt = eye + s[..., None] * dirs
        ok = np.isfinite(s) & (s > 1e-9)
        if half_extent is not None:
            ok &= (np.abs(pt[..., 0]) <= half_extent[0]) & (np.abs(pt[..., 1]) <= half_extent[1])
        return np.where(ok, s, np.inf)

    s_table = plane_hits(0.0, scene.table_half_extent)
    closer = s_table < best_s
    best_s[closer] = s_table[closer]
    hit[closer] = TABLE_HIT
    color[closer] = scene.table_color

    s_floor = plane_hits(scene.floor_z, None)
    closer = s_floor < best_s
    best_s[closer] = s_floor[closer]
    hit[closer] = FLOOR_HIT
    color[closer] = scene.floor_color

    for idx, box in enumerate(scene.boxes, start=1):
        lo = np.asarray(box.min_corner)
        hi = np.asarray(box.max_corner)
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (lo - eye) / dirs
            t2 = (hi - eye) / dirs
        t_near = np.nanmax(np.minimum(t1, t2), axis=-1)
        t_far = np.nanmin(np.maximum(t1, t2), axis=-1)
        ok = (t_near <= t_far) & (t_near > 1e-9)
        s_box = np.where(ok, t_near, np.inf)
        closer = s_box < best_s
        best_s[closer] = s_box[closer]
        hit[closer] = idx
        color[closer] = box.color

    depth = np.where(np.isfinite(best_s), best_s / intr.d_scale, np.nan).astype(np.float32)
    return color, depth, hit


def degrade(
    depth: np.ndarray,
    rng: np.random.Generator,
    noise_sigma: float = 2.0,
    dropout: float = 0.01,
    outliers: float = 0.0,
    outlier_range: tuple[float, float] = (300.0, 3000.0),
) -> np.ndarray:
    """Fake a lower-quality sensor: Gaussian depth noise, NaN dropout and
    uniformly distributed outlier depths (all in stored units)."""
    out = depth.astype(np.float32, copy=True)
    valid = np.isfinite(out)
    if noise_sigma > 0:
        out[valid] += rng.normal(0.0, noise_sigma, size=int(valid.sum())).astype(np.float32)
    if outliers > 0:
        pick = valid & (rng.random(out.shape) < outliers)
        out[pick] = rng.uniform(*outlier_range, size=int(pick.sum())).astype(np.float32)
    if dropout > 0:
        out[valid & (rng.random(out.shape) < dropout)] = np.nan
    return out
