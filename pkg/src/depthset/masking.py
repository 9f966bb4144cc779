"""Object-mask computation: crop, normal-based region growing, density
clustering, LQ refinement, and intersection.

The HQ cloud does the heavy lifting: after cropping to the known workspace
box it is split into smooth surfaces by region growing, clusters sitting on
the table anchors are rejected, and a density stage removes stragglers. The
LQ cloud contributes a second mask through the same density stage, and the
final mask is the intersection of both, optionally closed morphologically.

All stages are order-canonical: clouds are sorted by source pixel before
clustering, so permuting input point order never changes the result.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import binary_closing
from scipy.spatial import cKDTree

from .dataset_io import FrameTuple, TupleState
from .errors import ConfigurationError
from .geometry import Intrinsics, PointCloud, unproject


@dataclass(frozen=True)
class CropBox:
    """Axis-aligned box in LQ camera space (meters) bounding the workspace."""

    min_corner: tuple[float, float, float]
    max_corner: tuple[float, float, float]

    def __post_init__(self):
        lo = np.asarray(self.min_corner, dtype=np.float64)
        hi = np.asarray(self.max_corner, dtype=np.float64)
        if not np.all(lo < hi):
            raise ConfigurationError(f"crop box min {self.min_corner} must be < max {self.max_corner} per axis")

    def contains(self, points: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.min_corner)
        hi = np.asarray(self.max_corner)
        return np.all((points >= lo) & (points <= hi), axis=1)


@dataclass
class ClusterLabeling:
    """Per-point cluster ids, -1 for rejected/outlier points; ids dense in [0, count)."""

    labels: np.ndarray
    count: int

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int32)

    def kept(self) -> np.ndarray:
        return self.labels >= 0


@dataclass
class MaskingParams:
    normal_k: int = 30
    angle_thresh_deg: float = 15.0
    seed_radius_m: float = 0.01
    eps_m: float = 0.02
    min_pts: int = 10
    min_size: int = 200
    max_gap_m: float = 0.5
    anchor_dist_m: float = 0.05
    reject_near_anchors: bool = True
    closing: bool = True
    crop_box: CropBox | None = None
    anchors_m: list[tuple[float, float, float]] = field(default_factory=list)


def canonical_order(cloud: PointCloud) -> PointCloud:
    """Sort a cloud by its source pixel (v, then u).

    Provenance is injective for unprojected clouds, so this yields one
    canonical ordering regardless of how the input was permuted.
    """
    order = np.lexsort((cloud.pixels[:, 0], cloud.pixels[:, 1]))
    return cloud.take(order)


def estimate_normals(cloud: PointCloud, k: int) -> np.ndarray:
    """Unit surface normals from PCA over each point's k nearest neighbors.

    The normal is the smallest-eigenvalue eigenvector of the neighborhood
    covariance, sign-oriented toward the camera origin (n . p <= 0).
    """
    if k < 3:
        raise ConfigurationError(f"normal estimation needs k >= 3, got {k}")
    if len(cloud) < k:
        raise ConfigurationError(f"normal estimation needs at least k={k} points, got {len(cloud)}")
    pts = cloud.points
    tree = cKDTree(pts)
    _, nbr = tree.query(pts, k=k)
    neigh = pts[nbr]
    centered = neigh - neigh.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered)
    _, vecs = np.linalg.eigh(cov)
    normals = vecs[:, :, 0]
    normals = normals / np.linalg.norm(normals, axis=1, keepdims=True)
    flip = np.einsum("ni,ni->n", normals, pts) > 0
    normals[flip] *= -1.0
    return normals


def region_grow(
    cloud: PointCloud,
    normals: np.ndarray,
    angle_thresh_deg: float,
    seed_radius_m: float,
) -> ClusterLabeling:
    """Partition the cloud into smooth surfaces.

    Breadth-first growth from the lowest unvisited index: a neighbor within
    seed_radius joins when the angle between its normal and the growing
    point's normal is below the threshold. Every point ends up in exactly
    one cluster (possibly a singleton).
    """
    n = len(cloud)
    if len(normals) != n:
        raise ConfigurationError("normals must parallel the cloud")
    cos_thresh = math.cos(math.radians(angle_thresh_deg))
    tree = cKDTree(cloud.points)
    neighborhood = tree.query_ball_point(cloud.points, r=seed_radius_m)
    labels = np.full(n, -1, dtype=np.int32)
    next_label = 0
    for seed in range(n):
        if labels[seed] >= 0:
            continue
        labels[seed] = next_label
        queue = deque([seed])
        while queue:
            cur = queue.popleft()
            n_cur = normals[cur]
            for j in neighborhood[cur]:
                if labels[j] >= 0:
                    continue
                if float(normals[j] @ n_cur) > cos_thresh:
                    labels[j] = next_label
                    queue.append(j)
        next_label += 1
    return ClusterLabeling(labels, next_label)


def _densify(labels: np.ndarray) -> ClusterLabeling:
    """Relabel surviving clusters to dense ids, preserving ascending order."""
    kept = np.unique(labels[labels >= 0])
    remap = {int(old): new for new, old in enumerate(kept)}
    out = np.full(len(labels), -1, dtype=np.int32)
    for old, new in remap.items():
        out[labels == old] = new
    return ClusterLabeling(out, len(kept))


def _centroids(labeling: ClusterLabeling, points: np.ndarray) -> np.ndarray:
    cents = np.zeros((labeling.count, 3))
    for cid in range(labeling.count):
        cents[cid] = points[labeling.labels == cid].mean(axis=0)
    return cents


def reject_surface_clusters(
    labeling: ClusterLabeling,
    cloud: PointCloud,
    anchors_m,
    dist_thresh_m: float,
    reject_near: bool = True,
) -> ClusterLabeling:
    """Drop clusters close to the a-priori table anchor points.

    A cluster whose centroid lies within dist_thresh of any anchor is the
    support surface and is relabeled -1. ``reject_near=False`` flips the
    reading and rejects far clusters instead.
    """
    anchors = np.asarray(anchors_m, dtype=np.float64).reshape(-1, 3)
    if len(anchors) == 0:
        raise ConfigurationError("surface rejection needs at least one anchor point")
    labels = labeling.labels.copy()
    cents = _centroids(labeling, cloud.points)
    for cid in range(labeling.count):
        d = np.min(np.linalg.norm(anchors - cents[cid], axis=1))
        near = d < dist_thresh_m
        if near == reject_near:
            labels[labels == cid] = -1
    return _densify(labels)


def dbscan(cloud: PointCloud, eps_m: float, min_pts: int) -> ClusterLabeling:
    """Density-based clustering: core points expand clusters, the rest is noise."""
    if eps_m <= 0:
        raise ConfigurationError(f"dbscan eps must be positive, got {eps_m}")
    if min_pts < 1:
        raise ConfigurationError(f"dbscan min_pts must be >= 1, got {min_pts}")
    n = len(cloud)
    labels = np.full(n, -1, dtype=np.int32)
    if n == 0:
        return ClusterLabeling(labels, 0)
    tree = cKDTree(cloud.points)
    neighborhood = tree.query_ball_point(cloud.points, r=eps_m)
    core = np.fromiter((len(nb) >= min_pts for nb in neighborhood), dtype=bool, count=n)
    cluster = 0
    for i in range(n):
        if labels[i] >= 0 or not core[i]:
            continue
        labels[i] = cluster
        queue = deque([i])
        while queue:
            cur = queue.popleft()
            for j in neighborhood[cur]:
                if labels[j] >= 0:
                    continue
                labels[j] = cluster
                if core[j]:
                    queue.append(j)
        cluster += 1
    return ClusterLabeling(labels, cluster)


def filter_clusters(
    labeling: ClusterLabeling,
    cloud: PointCloud,
    min_size: int,
    max_gap_m: float,
) -> ClusterLabeling:
    """Drop clusters below min_size or whose centroid strays past max_gap
    from the largest cluster's centroid. All-outlier input passes through
    (the empty-mask signal, not an error)."""
    if labeling.count == 0:
        return ClusterLabeling(labeling.labels.copy(), 0)
    labels = labeling.labels.copy()
    sizes = np.bincount(labels[labels >= 0], minlength=labeling.count)
    for cid in range(labeling.count):
        if sizes[cid] < min_size:
            labels[labels == cid] = -1
    surviving = np.unique(labels[labels >= 0])
    if len(surviving) == 0:
        return ClusterLabeling(labels, 0)
    cents = _centroids(labeling, cloud.points)
    largest = surviving[np.argmax(sizes[surviving])]
    for cid in surviving:
        if np.linalg.norm(cents[cid] - cents[largest]) > max_gap_m:
            labels[labels == cid] = -1
    return _densify(labels)


def _pixels_to_mask(cloud: PointCloud, select: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    px = cloud.pixels[select]
    mask[px[:, 1], px[:, 0]] = True
    return mask


def object_mask_from_clouds(
    hq_cloud: PointCloud,
    lq_cloud: PointCloud,
    shape: tuple[int, int],
    params: MaskingParams,
) -> np.ndarray:
    """Full mask pipeline on already-unprojected clouds (LQ image grid)."""
    if params.crop_box is None:
        raise ConfigurationError("masking requires a crop box")
    if not params.anchors_m:
        raise ConfigurationError("masking requires table anchor points")

    hq_cloud = canonical_order(hq_cloud)
    lq_cloud = canonical_order(lq_cloud)

    # HQ branch: crop -> normals -> region growing -> anchor rejection -> density
    hq_crop = hq_cloud.take(np.nonzero(params.crop_box.contains(hq_cloud.points))[0])
    floor_pts = max(params.normal_k, params.min_pts)
    if len(hq_crop) < floor_pts:
        return np.zeros(shape, dtype=bool)
    normals = estimate_normals(hq_crop, params.normal_k)
    grown = region_grow(hq_crop, normals, params.angle_thresh_deg, params.seed_radius_m)
    kept = reject_surface_clusters(
        grown, hq_crop, params.anchors_m, params.anchor_dist_m, params.reject_near_anchors
    )
    hq_obj = hq_crop.take(np.nonzero(kept.kept())[0])
    hq_db = filter_clusters(
        dbscan(hq_obj, params.eps_m, params.min_pts), hq_obj, params.min_size, params.max_gap_m
    )
    mask_hq = _pixels_to_mask(hq_obj, hq_db.kept(), shape)

    # LQ branch: the same density stage refines where the LQ data is solid
    lq_crop = lq_cloud.take(np.nonzero(params.crop_box.contains(lq_cloud.points))[0])
    lq_db = filter_clusters(
        dbscan(lq_crop, params.eps_m, params.min_pts), lq_crop, params.min_size, params.max_gap_m
    )
    mask_lq = _pixels_to_mask(lq_crop, lq_db.kept(), shape)

    mask = mask_hq & mask_lq
    if params.closing and mask.any():
        mask = binary_closing(mask, structure=np.ones((3, 3), dtype=bool))
    return mask


def build_mask(tup: FrameTuple, intr_lq: Intrinsics, params: MaskingParams) -> np.ndarray:
    """Compute the object mask of an aligned tuple on the LQ grid.

    An all-false result is the empty-mask signal; the caller records it in
    the tuple metadata rather than treating it as an error.
    """
    if tup.state == TupleState.RAW:
        raise ConfigurationError(f"tuple {tup.id} must be aligned before masking")
    hq_cloud = unproject(tup.color_hq, tup.depth_hq, intr_lq)
    lq_cloud = unproject(tup.color_lq, tup.depth_lq, intr_lq)
    return object_mask_from_clouds(hq_cloud, lq_cloud, tup.depth_lq.shape, params)
