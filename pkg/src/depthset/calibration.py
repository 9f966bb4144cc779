"""Extrinsic calibration between the HQ and LQ cameras.

One rigid transform maps HQ camera space into LQ camera space; it is
estimated once per rig mount from 3-D point correspondences and then reused
for every capture. ICP refinement is deliberately not offered.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset_io import FrameTuple, TupleState
from .errors import EstimationError
from .geometry import Intrinsics, RigidTransform, apply_transform, reproject, unproject

MIN_CORRESPONDENCES = 3
COLLINEARITY_TOL = 1e-9


@dataclass
class CorrespondenceSet:
    """K paired 3-D points (HQ camera space, LQ camera space), meters."""

    points_hq: np.ndarray
    points_lq: np.ndarray
    labels: list[str] | None = None

    def __post_init__(self):
        self.points_hq = np.asarray(self.points_hq, dtype=np.float64).reshape(-1, 3)
        self.points_lq = np.asarray(self.points_lq, dtype=np.float64).reshape(-1, 3)
        if len(self.points_hq) != len(self.points_lq):
            raise EstimationError("correspondence sets must pair up one-to-one")

    def __len__(self) -> int:
        return len(self.points_hq)

    def validate(self) -> None:
        """Raise EstimationError on degenerate input (K < 3 or collinear points)."""
        if len(self) < MIN_CORRESPONDENCES:
            raise EstimationError(f"need at least {MIN_CORRESPONDENCES} correspondences, got {len(self)}")
        centered = self.points_hq - self.points_hq.mean(axis=0)
        s = np.linalg.svd(centered, compute_uv=False)
        # rank >= 2 (non-collinear); planar boards are fine
        if s[1] <= COLLINEARITY_TOL:
            raise EstimationError("correspondence points are collinear; the rotation is not observable")

    @classmethod
    def from_csv(cls, path: str | Path) -> "CorrespondenceSet":
        """Read the `id,xh,yh,zh,xl,yl,zl` correspondence file (meters)."""
        labels, hq, lq = [], [], []
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f)
            required = {"id", "xh", "yh", "zh", "xl", "yl", "zl"}
            if reader.fieldnames is None or not required.issubset(reader.fieldnames):
                raise EstimationError(f"correspondence file {path} must have header id,xh,yh,zh,xl,yl,zl")
            for row in reader:
                labels.append(row["id"])
                hq.append([float(row["xh"]), float(row["yh"]), float(row["zh"])])
                lq.append([float(row["xl"]), float(row["yl"]), float(row["zl"])])
        return cls(np.array(hq, dtype=np.float64), np.array(lq, dtype=np.float64), labels)


@dataclass
class CalibrationResult:
    """Estimated extrinsic transform with its fit residuals (meters)."""

    transform: RigidTransform
    rms_residual: float
    residuals: np.ndarray

    def to_json(self, path: str | Path) -> None:
        d = {
            "rotation": self.transform.R.tolist(),
            "translation_m": self.transform.t.tolist(),
            "rms_residual_m": self.rms_residual,
        }
        with open(path, "w", encoding="utf-8") as f:
            json.dump(d, f, indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def from_json(cls, path: str | Path) -> "CalibrationResult":
        with open(path, encoding="utf-8") as f:
            d = json.load(f)
        transform = RigidTransform(
            np.asarray(d["rotation"], dtype=np.float64),
            np.asarray(d["translation_m"], dtype=np.float64),
        )
        return cls(transform=transform, rms_residual=float(d["rms_residual_m"]), residuals=np.empty(0))


def solve_extrinsic(corr: CorrespondenceSet) -> CalibrationResult:
    """Least-squares rigid fit mapping HQ points onto LQ points.

    Closed form: center both sets, build the cross-covariance
    H = sum (p_hq - mean_hq)(p_lq - mean_lq)', take H = U S V' and set
    R = V diag(1, 1, det(VU')) U' (the reflection guard), t = mean_lq - R mean_hq.
    """
    corr.validate()
    mean_hq = corr.points_hq.mean(axis=0)
    mean_lq = corr.points_lq.mean(axis=0)
    H = (corr.points_hq - mean_hq).T @ (corr.points_lq - mean_lq)
    U, _, Vt = np.linalg.svd(H)
    V = Vt.T
    d = np.sign(np.linalg.det(V @ U.T))
    R = V @ np.diag([1.0, 1.0, d]) @ U.T
    t = mean_lq - R @ mean_hq
    transform = RigidTransform(R, t)
    residuals = np.linalg.norm(transform.apply_points(corr.points_hq) - corr.points_lq, axis=1)
    rms = float(np.sqrt(np.mean(residuals**2))) if len(residuals) else 0.0
    return CalibrationResult(transform=transform, rms_residual=rms, residuals=residuals)


def align_tuple(
    tup: FrameTuple,
    extrinsic: RigidTransform,
    intr_lq: Intrinsics,
    intr_hq: Intrinsics,
) -> FrameTuple:
    """Resample the HQ frames of a raw tuple onto the LQ image grid.

    Unprojects (C_HQ, D_HQ) with the HQ intrinsics, applies the extrinsic
    transform, reprojects with the LQ intrinsics. The LQ frames pass through
    untouched and the result is marked aligned.
    """
    cloud = unproject(tup.color_hq, tup.depth_hq, intr_hq)
    moved = apply_transform(cloud, extrinsic)
    color_aligned, depth_aligned = reproject(moved, intr_lq)
    return FrameTuple(
        id=tup.id,
        color_lq=tup.color_lq,
        depth_lq=tup.depth_lq,
        color_hq=color_aligned,
        depth_hq=depth_aligned,
        mask=tup.mask,
        state=TupleState.ALIGNED,
        meta=dict(tup.meta),
    )
