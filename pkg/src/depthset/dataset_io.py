"""Dataset persistence: tuple storage, manifest, and deterministic splitting.

Directory layout::

    <root>/manifest.json
    <root>/intrinsics/{lq,hq}.json
    <root>/calibration.json            (once calibrated)
    <root>/tuples/<id>/color_lq.png
                       depth_lq.dfd
                       color_hq.png
                       depth_hq.dfd
                       mask.png        (once masked)
                       meta.json

Depth rasters use the ``.dfd`` format: 16-byte header (magic ``DFD1``,
u32 width, u32 height, f32 d_scale, little-endian) followed by row-major
float32 values; invalid pixels are quiet NaN. PNG cannot carry the NaN
sentinel, which is why depth does not ship as 16-bit PNG.
"""

from __future__ import annotations

import enum
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigurationError, IntegrityError, MigrationError
from .geometry import Intrinsics

FORMAT_VERSION = 1
DFD_MAGIC = b"DFD1"
DFD_HEADER = struct.Struct("<4sIIf")


class TupleState(str, enum.Enum):
    RAW = "raw"
    ALIGNED = "aligned"
    MASKED = "masked"
    AUGMENTED = "augmented"


_STATE_ORDER = [TupleState.RAW, TupleState.ALIGNED, TupleState.MASKED, TupleState.AUGMENTED]


@dataclass(eq=False)
class FrameTuple:
    """One dataset sample: LQ and HQ color/depth frames plus mask and state.

    Depth arrays are float32 in stored units with NaN invalid pixels. Once
    aligned, the HQ frames live on the LQ image grid (LQ depth units).
    """

    id: str
    color_lq: np.ndarray
    depth_lq: np.ndarray
    color_hq: np.ndarray
    depth_hq: np.ndarray
    mask: np.ndarray | None = None
    state: TupleState = TupleState.RAW
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mask is not None and self.state in (TupleState.RAW,):
            raise ConfigurationError("a masked tuple requires at least aligned state")
        if self.state in (TupleState.ALIGNED, TupleState.MASKED, TupleState.AUGMENTED):
            if self.depth_hq.shape != self.depth_lq.shape:
                raise ConfigurationError(
                    f"aligned tuple {self.id}: HQ depth {self.depth_hq.shape} "
                    f"does not share the LQ grid {self.depth_lq.shape}"
                )

    @property
    def source_id(self) -> str:
        return self.meta.get("source_id", self.id)


def write_depth(path: str | Path, depth: np.ndarray, d_scale: float) -> None:
    """Write a float32 NaN-sentinel depth raster with the 16-byte DFD header."""
    depth = np.ascontiguousarray(depth, dtype=np.float32)
    h, w = depth.shape
    with open(path, "wb") as f:
        f.write(DFD_HEADER.pack(DFD_MAGIC, w, h, float(d_scale)))
        f.write(depth.astype("<f4", copy=False).tobytes())


def read_depth(path: str | Path) -> tuple[np.ndarray, float]:
    """Read a ``.dfd`` raster; raises IntegrityError naming the file when corrupt."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except FileNotFoundError:
        raise IntegrityError(f"missing depth file: {path}") from None
    if len(blob) < DFD_HEADER.size:
        raise IntegrityError(f"corrupt depth file (truncated header): {path}")
    magic, w, h, d_scale = DFD_HEADER.unpack_from(blob)
    if magic != DFD_MAGIC:
        raise IntegrityError(f"corrupt depth file (bad magic {magic!r}): {path}")
    expected = DFD_HEADER.size + w * h * 4
    if len(blob) != expected:
        raise IntegrityError(f"corrupt depth file ({len(blob)} bytes, expected {expected}): {path}")
    depth = np.frombuffer(blob, dtype="<f4", offset=DFD_HEADER.size).reshape(h, w)
    return depth.astype(np.float32, copy=True), float(d_scale)


def write_color(path: str | Path, color: np.ndarray) -> None:
    Image.fromarray(np.ascontiguousarray(color, dtype=np.uint8), mode="RGB").save(path, format="PNG")


def read_color(path: str | Path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise IntegrityError(f"missing color file: {path}")
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"), dtype=np.uint8)
    except Exception as exc:
        raise IntegrityError(f"corrupt color file: {path} ({exc})") from exc


def write_mask(path: str | Path, mask: np.ndarray) -> None:
    """Persist a boolean mask as 8-bit single-channel PNG, 255 = object."""
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8), mode="L").save(path, format="PNG")


def read_mask(path: str | Path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise IntegrityError(f"missing mask file: {path}")
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("L")) >= 128
    except Exception as exc:
        raise IntegrityError(f"corrupt mask file: {path} ({exc})") from exc


def _dump_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


@dataclass
class ManifestEntry:
    id: str
    state: TupleState
    files: dict[str, str]
    split: str | None = None
    source_id: str | None = None
    aug_index: int = 0

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "state": self.state.value,
            "files": self.files,
            "split": self.split,
            "source_id": self.source_id if self.source_id is not None else self.id,
            "aug_index": self.aug_index,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ManifestEntry":
        return cls(
            id=d["id"],
            state=TupleState(d["state"]),
            files=dict(d["files"]),
            split=d.get("split"),
            source_id=d.get("source_id", d["id"]),
            aug_index=int(d.get("aug_index", 0)),
        )


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    intrinsics: dict[str, str] = field(default_factory=lambda: {"lq": "intrinsics/lq.json", "hq": "intrinsics/hq.json"})
    calibration: str | None = None
    config_hash: str | None = None
    format_version: int = FORMAT_VERSION

    def __len__(self) -> int:
        return len(self.entries)

    def ids(self) -> list[str]:
        return [e.id for e in self.entries]

    def entry(self, tuple_id: str) -> ManifestEntry:
        for e in self.entries:
            if e.id == tuple_id:
                return e
        raise IntegrityError(f"tuple id not in manifest: {tuple_id}")

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "count": len(self.entries),
            "intrinsics": self.intrinsics,
            "calibration": self.calibration,
            "config_hash": self.config_hash,
            "tuples": [e.to_dict() for e in sorted(self.entries, key=lambda e: e.id)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        version = d.get("format_version")
        if version != FORMAT_VERSION:
            raise MigrationError(f"manifest format_version {version} not supported (expected {FORMAT_VERSION})")
        return cls(
            entries=[ManifestEntry.from_dict(e) for e in d.get("tuples", [])],
            intrinsics=dict(d.get("intrinsics", {})),
            calibration=d.get("calibration"),
            config_hash=d.get("config_hash"),
            format_version=version,
        )


class Dataset:
    """A dataset directory: manifest plus tuple files under one root."""

    def __init__(self, root: str | Path, manifest: DatasetManifest):
        self.root = Path(root)
        self.manifest = manifest

    @classmethod
    def create(cls, root: str | Path, intr_lq: Intrinsics, intr_hq: Intrinsics) -> "Dataset":
        root = Path(root)
        (root / "intrinsics").mkdir(parents=True, exist_ok=True)
        (root / "tuples").mkdir(exist_ok=True)
        intr_lq.to_json(root / "intrinsics" / "lq.json")
        intr_hq.to_json(root / "intrinsics" / "hq.json")
        ds = cls(root, DatasetManifest())
        ds.save_manifest()
        return ds

    @classmethod
    def open(cls, root: str | Path) -> "Dataset":
        root = Path(root)
        manifest_path = root / "manifest.json"
        if not manifest_path.exists():
            raise IntegrityError(f"missing manifest: {manifest_path}")
        with open(manifest_path, encoding="utf-8") as f:
            manifest = DatasetManifest.from_dict(json.load(f))
        ds = cls(root, manifest)
        ds._check_unique_ids()
        return ds

    def save_manifest(self) -> None:
        self._check_unique_ids()
        _dump_json(self.root / "manifest.json", self.manifest.to_dict())

    def _check_unique_ids(self) -> None:
        ids = self.manifest.ids()
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise IntegrityError(f"duplicate tuple ids in manifest: {dupes}")

    def intrinsics(self, camera: str) -> Intrinsics:
        rel = self.manifest.intrinsics[camera]
        path = self.root / rel
        if not path.exists():
            raise IntegrityError(f"missing intrinsics file: {path}")
        return Intrinsics.from_json(path)

    def calibration_path(self) -> Path | None:
        if self.manifest.calibration is None:
            return None
        return self.root / self.manifest.calibration

    def validate_files(self) -> None:
        """Check that every file referenced by the manifest exists."""
        for entry in self.manifest.entries:
            for rel in entry.files.values():
                path = self.root / rel
                if not path.exists():
                    raise IntegrityError(f"missing dataset file: {path}")
        for rel in self.manifest.intrinsics.values():
            if not (self.root / rel).exists():
                raise IntegrityError(f"missing intrinsics file: {self.root / rel}")

    def _depth_scales(self, state: TupleState) -> tuple[float, float]:
        """(lq, hq) d_scale for stored depth; aligned HQ frames use LQ units."""
        lq = self.intrinsics("lq").d_scale
        if state == TupleState.RAW:
            return lq, self.intrinsics("hq").d_scale
        return lq, lq

    def write_tuple(self, tup: FrameTuple) -> ManifestEntry:
        scale_lq, scale_hq = self._depth_scales(tup.state)
        files = write_tuple_files(self.root, tup, scale_lq, scale_hq)
        entry = ManifestEntry(
            id=tup.id,
            state=tup.state,
            files=files,
            source_id=tup.meta.get("source_id", tup.id),
            aug_index=int(tup.meta.get("aug_index", 0)),
        )
        existing = [i for i, e in enumerate(self.manifest.entries) if e.id == tup.id]
        if existing:
            entry.split = self.manifest.entries[existing[0]].split
            self.manifest.entries[existing[0]] = entry
        else:
            self.manifest.entries.append(entry)
        return entry

    def read_tuple(self, tuple_id: str) -> FrameTuple:
        entry = self.manifest.entry(tuple_id)
        return read_tuple_files(self.root, entry.id, entry.files, entry.state)


def write_tuple_files(root: str | Path, tup: FrameTuple, scale_lq: float, scale_hq: float) -> dict[str, str]:
    """Write one tuple's files under ``root`` and return their relative paths.

    Safe to call from parallel workers: each tuple owns its directory and the
    manifest is assembled by the caller.
    """
    root = Path(root)
    tdir = root / "tuples" / tup.id
    tdir.mkdir(parents=True, exist_ok=True)
    files = {
        "color_lq": f"tuples/{tup.id}/color_lq.png",
        "depth_lq": f"tuples/{tup.id}/depth_lq.dfd",
        "color_hq": f"tuples/{tup.id}/color_hq.png",
        "depth_hq": f"tuples/{tup.id}/depth_hq.dfd",
        "meta": f"tuples/{tup.id}/meta.json",
    }
    write_color(tdir / "color_lq.png", tup.color_lq)
    write_depth(tdir / "depth_lq.dfd", tup.depth_lq, scale_lq)
    write_color(tdir / "color_hq.png", tup.color_hq)
    write_depth(tdir / "depth_hq.dfd", tup.depth_hq, scale_hq)
    if tup.mask is not None:
        write_mask(tdir / "mask.png", tup.mask)
        files["mask"] = f"tuples/{tup.id}/mask.png"
    meta = {"id": tup.id, "state": tup.state.value, **tup.meta}
    _dump_json(tdir / "meta.json", meta)
    return files


def read_tuple_files(root: str | Path, tuple_id: str, files: dict[str, str], state: TupleState) -> FrameTuple:
    """Read one tuple from its relative file paths (worker-friendly)."""
    root = Path(root)
    color_lq = read_color(root / files["color_lq"])
    depth_lq, _ = read_depth(root / files["depth_lq"])
    color_hq = read_color(root / files["color_hq"])
    depth_hq, _ = read_depth(root / files["depth_hq"])
    mask = read_mask(root / files["mask"]) if "mask" in files else None
    meta_path = root / files["meta"]
    if not meta_path.exists():
        raise IntegrityError(f"missing meta file: {meta_path}")
    with open(meta_path, encoding="utf-8") as f:
        meta = json.load(f)
    meta.pop("id", None)
    tuple_state = TupleState(meta.pop("state", state.value))
    return FrameTuple(
        id=tuple_id,
        color_lq=color_lq,
        depth_lq=depth_lq,
        color_hq=color_hq,
        depth_hq=depth_hq,
        mask=mask,
        state=tuple_state,
        meta=meta,
    )


def split_dataset(
    manifest: DatasetManifest,
    fractions: tuple[float, float, float],
    seed: int,
) -> DatasetManifest:
    """Assign every tuple to train/val/test, grouped by source_id.

    The shuffle depends only on (seed, sorted source ids), so re-running on a
    re-ordered manifest yields identical assignments, and no augmented copy of
    a held-out tuple can leak into train. Val/test targets are floor-rounded;
    the remainder goes to train.
    """
    f_train, f_val, f_test = fractions
    if not math.isclose(f_train + f_val + f_test, 1.0, abs_tol=1e-9):
        raise ConfigurationError(f"split fractions must sum to 1, got {fractions}")
    if min(fractions) < 0:
        raise ConfigurationError(f"split fractions must be non-negative, got {fractions}")
    n = len(manifest.entries)
    n_classes = sum(1 for f in fractions if f > 0)
    if n < n_classes:
        raise ConfigurationError(f"cannot split {n} tuples into {n_classes} non-empty classes")

    groups: dict[str, list[ManifestEntry]] = {}
    for entry in manifest.entries:
        groups.setdefault(entry.source_id or entry.id, []).append(entry)
    keys = sorted(groups)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(keys))

    n_val = int(n * f_val)
    n_test = int(n * f_test)
    counts = {"test": 0, "val": 0}
    for key_idx in order:
        members = groups[keys[key_idx]]
        if counts["test"] < n_test:
            split = "test"
        elif counts["val"] < n_val:
            split = "val"
        else:
            split = "train"
        for entry in members:
            entry.split = split
        if split in counts:
            counts[split] += len(members)
    return manifest
