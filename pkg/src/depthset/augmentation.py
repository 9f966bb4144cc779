"""Rigid SE(3) data augmentation in point-cloud space.

Frame-space crops or flips would desynchronize depth values from pixel
positions, so both clouds of a tuple are moved by one shared random rigid
motion and reprojected. Sampling is counter-based: every (seed, tuple
index, sample index) triple owns an independent random stream, so results
cannot depend on worker scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .dataset_io import FrameTuple, TupleState
from .errors import ConfigurationError
from .geometry import Intrinsics, PointCloud, RigidTransform, apply_transform, reproject_indices, unproject


@dataclass(frozen=True)
class AugmentPolicy:
    count: int = 49
    max_translation_m: float = 0.10
    max_rotation_deg: float = 5.0
    rng_seed: int = 0
    pivot: str = "centroid"
    min_object_pixels: int = 50

    def __post_init__(self):
        if self.count < 0:
            raise ConfigurationError(f"augmentation count must be >= 0, got {self.count}")
        if self.max_translation_m < 0:
            raise ConfigurationError(f"max translation must be >= 0, got {self.max_translation_m}")
        if not 0 <= self.max_rotation_deg <= 180:
            raise ConfigurationError(f"max rotation must be in [0, 180], got {self.max_rotation_deg}")
        if self.pivot not in ("centroid", "origin"):
            raise ConfigurationError(f"pivot must be 'centroid' or 'origin', got {self.pivot!r}")


def _stream(seed: int, tuple_index: int, sample_index: int) -> np.random.Generator:
    key = np.array(
        [np.uint64(seed), (np.uint64(tuple_index) << np.uint64(32)) | np.uint64(sample_index)],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))


def sample_transform(policy: AugmentPolicy, tuple_index: int, sample_index: int) -> RigidTransform:
    """Draw one random rigid motion about the origin.

    Rotation axis uniform on the sphere, angle uniform in [0, max_rotation],
    translation components uniform in [-max_translation, +max_translation].
    """
    rng = _stream(policy.rng_seed, tuple_index, sample_index)
    phi = rng.uniform(0.0, 2.0 * math.pi)
    cos_theta = rng.uniform(-1.0, 1.0)
    sin_theta = math.sqrt(max(0.0, 1.0 - cos_theta**2))
    axis = np.array([sin_theta * math.cos(phi), sin_theta * math.sin(phi), cos_theta])
    angle = rng.uniform(0.0, math.radians(policy.max_rotation_deg))
    t = rng.uniform(-policy.max_translation_m, policy.max_translation_m, size=3)
    R = Rotation.from_rotvec(axis * angle).as_matrix()
    return RigidTransform(R, t)


def _about_pivot(transform: RigidTransform, pivot: np.ndarray) -> RigidTransform:
    # p' = R (p - c) + c + t
    return RigidTransform(transform.R, pivot - transform.R @ pivot + transform.t)


def _mask_flagged_cloud(color, depth, mask, intr: Intrinsics) -> PointCloud:
    cloud = unproject(color, depth, intr)
    cloud.mask_flags = mask[cloud.pixels[:, 1], cloud.pixels[:, 0]]
    return cloud


def _render(cloud: PointCloud, intr: Intrinsics):
    """Reproject a flagged cloud into (color, depth, winner-mask) frames."""
    color = np.zeros((intr.height, intr.width, 3), dtype=np.uint8)
    depth = np.full((intr.height, intr.width), np.nan, dtype=np.float32)
    mask = np.zeros((intr.height, intr.width), dtype=bool)
    ahead = np.nonzero(cloud.points[:, 2] > 0)[0]  # points pushed behind the camera vanish
    cloud = cloud.take(ahead)
    u, v, winners = reproject_indices(cloud, intr)
    if len(winners):
        depth[v, u] = (cloud.points[winners, 2] / intr.d_scale).astype(np.float32)
        color[v, u] = cloud.colors[winners]
        mask[v, u] = cloud.mask_flags[winners]
    return color, depth, mask


def augment_tuple(
    tup: FrameTuple,
    policy: AugmentPolicy,
    intr_lq: Intrinsics,
    tuple_index: int = 0,
) -> list[FrameTuple]:
    """Return the original tuple plus up to ``count`` augmented copies.

    Both clouds of the tuple share one sampled transform per copy; the mask
    is regenerated from the pixels won by masked points of both clouds.
    Copies left with fewer than ``min_object_pixels`` object pixels are
    dropped, which is why output totals can undershoot count + 1.
    """
    if tup.mask is None or tup.state not in (TupleState.MASKED, TupleState.AUGMENTED):
        raise ConfigurationError(f"tuple {tup.id} must be aligned and masked before augmentation")

    source_id = tup.meta.get("source_id", tup.id)
    original = FrameTuple(
        id=tup.id,
        color_lq=tup.color_lq,
        depth_lq=tup.depth_lq,
        color_hq=tup.color_hq,
        depth_hq=tup.depth_hq,
        mask=tup.mask,
        state=tup.state,
        meta={**tup.meta, "source_id": source_id, "aug_index": 0, "t_rand": None},
    )
    outputs = [original]
    if policy.count == 0:
        return outputs

    lq_cloud = _mask_flagged_cloud(tup.color_lq, tup.depth_lq, tup.mask, intr_lq)
    hq_cloud = _mask_flagged_cloud(tup.color_hq, tup.depth_hq, tup.mask, intr_lq)

    if policy.pivot == "centroid" and tup.mask.any() and lq_cloud.mask_flags.any():
        pivot = lq_cloud.points[lq_cloud.mask_flags].mean(axis=0)
    else:
        pivot = np.zeros(3)

    for sample_index in range(1, policy.count + 1):
        transform = _about_pivot(sample_transform(policy, tuple_index, sample_index), pivot)
        color_lq, depth_lq, mask_lq = _render(apply_transform(lq_cloud, transform), intr_lq)
        color_hq, depth_hq, mask_hq = _render(apply_transform(hq_cloud, transform), intr_lq)
        mask = mask_lq & mask_hq
        if int(mask.sum()) < policy.min_object_pixels:
            continue
        outputs.append(
            FrameTuple(
                id=f"{tup.id}-a{sample_index:03d}",
                color_lq=color_lq,
                depth_lq=depth_lq,
                color_hq=color_hq,
                depth_hq=depth_hq,
                mask=mask,
                state=TupleState.AUGMENTED,
                meta={
                    "source_id": source_id,
                    "aug_index": sample_index,
                    "t_rand": transform.to_dict(),
                },
            )
        )
    return outputs
