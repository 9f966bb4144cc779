"""Tuple storage round trips, integrity failures, and deterministic splits."""

import json

import numpy as np
import pytest

from depthset.dataset_io import (
    Dataset,
    DatasetManifest,
    FrameTuple,
    ManifestEntry,
    TupleState,
    read_depth,
    split_dataset,
    write_depth,
)
from depthset.errors import ConfigurationError, IntegrityError, MigrationError
from depthset.geometry import Intrinsics


def toy_intrinsics(camera="lq"):
    return Intrinsics(fx=10.0, fy=10.0, cx=4.0, cy=3.0, d_scale=0.001, width=8, height=6, camera=camera)


def toy_tuple(tuple_id="t0000", state=TupleState.MASKED, rng=None):
    rng = rng or np.random.default_rng(0)
    h, w = 6, 8
    depth_lq = rng.uniform(400, 900, (h, w)).astype(np.float32)
    depth_lq[0, 0] = np.nan
    depth_hq = rng.uniform(400, 900, (h, w)).astype(np.float32)
    depth_hq[1, 1] = np.nan
    mask = rng.random((h, w)) < 0.5 if state in (TupleState.MASKED, TupleState.AUGMENTED) else None
    return FrameTuple(
        id=tuple_id,
        color_lq=rng.integers(0, 256, (h, w, 3), dtype=np.uint8),
        depth_lq=depth_lq,
        color_hq=rng.integers(0, 256, (h, w, 3), dtype=np.uint8),
        depth_hq=depth_hq,
        mask=mask,
        state=state,
        meta={"source_id": tuple_id, "aug_index": 0, "t_rand": None},
    )


class TestDepthRaster:
    def test_round_trip_preserves_bits_and_nans(self, tmp_path, rng):
        depth = rng.uniform(0, 5000, (7, 9)).astype(np.float32)
        depth[2, 3] = np.nan
        write_depth(tmp_path / "d.dfd", depth, 0.001)
        back, d_scale = read_depth(tmp_path / "d.dfd")
        assert back.tobytes() == depth.tobytes()
        assert d_scale == pytest.approx(0.001)

    def test_missing_file_names_path(self, tmp_path):
        with pytest.raises(IntegrityError, match="missing.dfd"):
            read_depth(tmp_path / "missing.dfd")

    def test_bad_magic_rejected(self, tmp_path):
        (tmp_path / "bad.dfd").write_bytes(b"NOPE" + b"\x00" * 12)
        with pytest.raises(IntegrityError, match="bad magic"):
            read_depth(tmp_path / "bad.dfd")

    def test_truncated_payload_rejected(self, tmp_path, rng):
        depth = rng.uniform(0, 100, (4, 4)).astype(np.float32)
        write_depth(tmp_path / "t.dfd", depth, 0.001)
        blob = (tmp_path / "t.dfd").read_bytes()
        (tmp_path / "t.dfd").write_bytes(blob[:-5])
        with pytest.raises(IntegrityError, match="expected"):
            read_depth(tmp_path / "t.dfd")


class TestDatasetRoundTrip:
    def test_write_read_bit_identical(self, tmp_path):
        ds = Dataset.create(tmp_path / "ds", toy_intrinsics("lq"), toy_intrinsics("hq"))
        tup = toy_tuple()
        ds.write_tuple(tup)
        ds.save_manifest()
        again = Dataset.open(tmp_path / "ds").read_tuple(tup.id)
        assert again.color_lq.tobytes() == tup.color_lq.tobytes()
        assert again.depth_lq.tobytes() == tup.depth_lq.tobytes()
        assert again.color_hq.tobytes() == tup.color_hq.tobytes()
        assert again.depth_hq.tobytes() == tup.depth_hq.tobytes()
        assert np.array_equal(again.mask, tup.mask)
        assert again.state == tup.state
        assert again.meta == tup.meta

    def test_deleted_depth_file_is_integrity_error(self, tmp_path):
        ds = Dataset.create(tmp_path / "ds", toy_intrinsics("lq"), toy_intrinsics("hq"))
        tup = toy_tuple()
        ds.write_tuple(tup)
        ds.save_manifest()
        (tmp_path / "ds" / "tuples" / tup.id / "depth_lq.dfd").unlink()
        ds2 = Dataset.open(tmp_path / "ds")
        with pytest.raises(IntegrityError, match="depth_lq"):
            ds2.read_tuple(tup.id)
        with pytest.raises(IntegrityError):
            ds2.validate_files()

    def test_duplicate_ids_rejected(self, tmp_path):
        ds = Dataset.create(tmp_path / "ds", toy_intrinsics("lq"), toy_intrinsics("hq"))
        entry = ManifestEntry(id="dup", state=TupleState.RAW, files={})
        ds.manifest.entries = [entry, entry]
        with pytest.raises(IntegrityError, match="dup"):
            ds.save_manifest()

    def test_version_mismatch_is_migration_error(self, tmp_path):
        ds = Dataset.create(tmp_path / "ds", toy_intrinsics("lq"), toy_intrinsics("hq"))
        ds.save_manifest()
        manifest = json.loads((tmp_path / "ds" / "manifest.json").read_text())
        manifest["format_version"] = 99
        (tmp_path / "ds" / "manifest.json").write_text(json.dumps(manifest))
        with pytest.raises(MigrationError):
            Dataset.open(tmp_path / "ds")

    def test_missing_manifest_is_integrity_error(self, tmp_path):
        with pytest.raises(IntegrityError):
            Dataset.open(tmp_path / "nowhere")


def manifest_of(ids_sources: list[tuple[str, str]]) -> DatasetManifest:
    return DatasetManifest(
        entries=[
            ManifestEntry(id=i, state=TupleState.MASKED, files={}, source_id=s)
            for i, s in ids_sources
        ]
    )


class TestSplitDataset:
    def test_published_split_counts(self):
        manifest = manifest_of([(f"t{i:04d}", f"t{i:04d}") for i in range(1024)])
        split_dataset(manifest, (0.90, 0.05, 0.05), seed=3)
        counts = {"train": 0, "val": 0, "test": 0}
        for entry in manifest.entries:
            counts[entry.split] += 1
        assert counts == {"train": 922, "val": 51, "test": 51}

    def test_all_train(self):
        manifest = manifest_of([(f"t{i}", f"t{i}") for i in range(10)])
        split_dataset(manifest, (1.0, 0.0, 0.0), seed=1)
        assert all(e.split == "train" for e in manifest.entries)

    def test_augmented_copies_follow_their_source(self):
        pairs = []
        for s in range(10):
            for a in range(5):
                pairs.append((f"s{s}-a{a}", f"s{s}"))
        manifest = manifest_of(pairs)
        split_dataset(manifest, (0.6, 0.2, 0.2), seed=7)
        by_source = {}
        for entry in manifest.entries:
            by_source.setdefault(entry.source_id, set()).add(entry.split)
        assert all(len(splits) == 1 for splits in by_source.values())
        assert {s for e in manifest.entries for s in [e.split]} == {"train", "val", "test"}

    def test_assignment_is_a_function_of_seed_and_sorted_sources(self):
        pairs = [(f"t{i}", f"t{i}") for i in range(40)]
        a = manifest_of(pairs)
        b = manifest_of(list(reversed(pairs)))
        split_dataset(a, (0.8, 0.1, 0.1), seed=5)
        split_dataset(b, (0.8, 0.1, 0.1), seed=5)
        assignment_a = {e.id: e.split for e in a.entries}
        assignment_b = {e.id: e.split for e in b.entries}
        assert assignment_a == assignment_b
        c = manifest_of(pairs)
        split_dataset(c, (0.8, 0.1, 0.1), seed=6)
        assert {e.id: e.split for e in c.entries} != assignment_a

    def test_invalid_fractions_rejected(self):
        manifest = manifest_of([("a", "a"), ("b", "b"), ("c", "c")])
        with pytest.raises(ConfigurationError):
            split_dataset(manifest, (0.5, 0.2, 0.2), seed=0)
        with pytest.raises(ConfigurationError):
            split_dataset(manifest, (1.2, -0.1, -0.1), seed=0)

    def test_fewer_tuples_than_classes_rejected(self):
        manifest = manifest_of([("a", "a"), ("b", "b")])
        with pytest.raises(ConfigurationError):
            split_dataset(manifest, (0.4, 0.3, 0.3), seed=0)
