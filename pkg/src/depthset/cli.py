"""Command-line pipeline orchestration.

Subcommands move a dataset through the stages raw -> aligned -> masked ->
augmented -> split -> exported, plus classical denoising and evaluation.
Every stage writes immutable tuple files into its output root and a run
record under ``runs/``; given equal inputs and seed, outputs are
byte-identical across runs (run-record timestamps aside).

Exit codes: 0 success, 1 validation error, 2 data integrity error,
64 usage error.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import os
import platform
import shutil
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .augmentation import AugmentPolicy, augment_tuple
from .baselines import bilateral, rolling_guidance
from .calibration import CalibrationResult, CorrespondenceSet, align_tuple, solve_extrinsic
from .config import (
    apply_overrides,
    augment_policy,
    bilateral_params,
    config_hash,
    load_config,
    masking_params,
    metric_bins,
    rolling_guidance_params,
    split_fractions,
)
from .dataset_io import (
    Dataset,
    ManifestEntry,
    TupleState,
    read_tuple_files,
    split_dataset,
    write_depth,
    write_tuple_files,
)
from .errors import ConfigurationError, EstimationError, GeometryError, IntegrityError, MigrationError
from .masking import MaskingParams, build_mask
from .metrics import evaluate_split

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_INTEGRITY = 2
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class Progress:
    """Human log lines on stderr, or one JSON object per line on stdout."""

    def __init__(self, json_mode: bool):
        self.json_mode = json_mode

    def emit(self, **fields):
        if self.json_mode:
            print(json.dumps(fields, sort_keys=True), flush=True)
        else:
            logger.info(" ".join(f"{k}={v}" for k, v in fields.items()))


def _utc_now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _write_run_record(workspace: Path, command: str, cfg: dict, started: float, extra: dict) -> None:
    record = {
        "command": command,
        "config_hash": config_hash(cfg),
        "package_version": __version__,
        "python_version": platform.python_version(),
        "numpy_version": np.__version__,
        "started_at": _utc_now(),
        "duration_s": round(time.monotonic() - started, 3),
        **extra,
    }
    runs = workspace / "runs"
    runs.mkdir(parents=True, exist_ok=True)
    with open(runs / f"{command}.json", "w", encoding="utf-8") as f:
        json.dump(record, f, indent=2, sort_keys=True)
        f.write("\n")


def _resolve_workers(args, cfg) -> int:
    workers = args.workers if args.workers is not None else int(cfg["runtime"]["workers"])
    if workers <= 0:
        workers = os.cpu_count() or 1
    return workers


def _map_jobs(fn, jobs: list, workers: int):
    """Apply ``fn`` over jobs, preserving order (deterministic merge)."""
    workers = min(workers, len(jobs)) if jobs else 1
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            yield from pool.map(fn, jobs)
    else:
        for job in jobs:
            yield fn(job)


def _open_output_dataset(in_ds: Dataset, out_root: Path) -> Dataset:
    """Create an output root inheriting intrinsics and calibration."""
    out = Dataset.create(out_root, in_ds.intrinsics("lq"), in_ds.intrinsics("hq"))
    calib = in_ds.calibration_path()
    if calib is not None and calib.exists():
        shutil.copyfile(calib, out_root / "calibration.json")
        out.manifest.calibration = "calibration.json"
    return out


# --- stage workers (module level so process pools can pickle them) ---


def _align_job(job):
    in_root, out_root, tuple_id, files, transform_dict, intr_lq, intr_hq = job
    from .geometry import RigidTransform

    tup = read_tuple_files(in_root, tuple_id, files, TupleState.RAW)
    aligned = align_tuple(tup, RigidTransform.from_dict(transform_dict), intr_lq, intr_hq)
    out_files = write_tuple_files(out_root, aligned, intr_lq.d_scale, intr_lq.d_scale)
    return tuple_id, aligned.state.value, out_files, aligned.meta


def _mask_job(job):
    in_root, out_root, tuple_id, files, state, intr_lq, params = job
    tup = read_tuple_files(in_root, tuple_id, files, TupleState(state))
    mask = build_mask(tup, intr_lq, params)
    tup.mask = mask
    tup.state = TupleState.MASKED
    tup.meta["mask_empty"] = not bool(mask.any())
    out_files = write_tuple_files(out_root, tup, intr_lq.d_scale, intr_lq.d_scale)
    return tuple_id, tup.state.value, out_files, tup.meta


def _augment_job(job):
    in_root, out_root, tuple_id, files, state, intr_lq, policy, tuple_index = job
    tup = read_tuple_files(in_root, tuple_id, files, TupleState(state))
    outputs = augment_tuple(tup, policy, intr_lq, tuple_index)
    results = []
    for out_tup in outputs:
        out_files = write_tuple_files(out_root, out_tup, intr_lq.d_scale, intr_lq.d_scale)
        results.append((out_tup.id, out_tup.state.value, out_files, out_tup.meta))
    dropped = policy.count + 1 - len(outputs)
    return tuple_id, results, dropped


def _denoise_job(job):
    in_root, out_dir, tuple_id, files, state, method, bparams, rparams, d_scale = job
    tup = read_tuple_files(in_root, tuple_id, files, TupleState(state))
    if method == "bilateral":
        result = bilateral(tup.depth_lq, tup.mask, bparams)
    else:
        result = rolling_guidance(tup.depth_lq, tup.mask, rparams)
    write_depth(Path(out_dir) / f"{tuple_id}.dfd", result, d_scale)
    return tuple_id


# --- subcommands ---


def _cmd_calibrate(args, cfg, progress: Progress) -> int:
    corr_path = args.correspondences
    if corr_path is None:
        raise ConfigurationError("calibrate requires --correspondences")
    out_path = Path(args.out) if args.out else None
    in_ds = Dataset.open(args.in_root) if args.in_root else None
    if out_path is None:
        if in_ds is None:
            raise ConfigurationError("calibrate requires --out or --in")
        out_path = in_ds.root / "calibration.json"

    corr = CorrespondenceSet.from_csv(corr_path)
    if args.dry_run:
        corr.validate()
        progress.emit(event="dry_run", command="calibrate", pairs=len(corr), out=str(out_path))
        return EXIT_OK
    started = time.monotonic()
    result = solve_extrinsic(corr)
    result.to_json(out_path)
    if in_ds is not None:
        in_ds.manifest.calibration = os.path.relpath(out_path, in_ds.root)
        in_ds.save_manifest()
    progress.emit(
        event="done",
        command="calibrate",
        pairs=len(corr),
        rms_residual_m=result.rms_residual,
        out=str(out_path),
    )
    _write_run_record(out_path.parent, "calibrate", cfg, started, {"pairs": len(corr), "rms_residual_m": result.rms_residual})
    return EXIT_OK


def _require_out(args) -> Path:
    if not args.out:
        raise ConfigurationError("this subcommand requires --out")
    return Path(args.out)


def _stage_over_tuples(args, cfg, progress: Progress, command: str, make_jobs, job_fn, extra_record=None) -> int:
    """Shared skeleton of the align/mask/augment stages."""
    in_ds = Dataset.open(args.in_root)
    in_ds.validate_files()
    out_root = _require_out(args)
    if args.dry_run:
        progress.emit(event="dry_run", command=command, tuples=len(in_ds.manifest), out=str(out_root))
        return EXIT_OK
    started = time.monotonic()
    out_ds = _open_output_dataset(in_ds, out_root)
    jobs = make_jobs(in_ds, out_root)
    workers = _resolve_workers(args, cfg)
    progress.emit(event="start", command=command, tuples=len(jobs), workers=workers)

    entries: list[ManifestEntry] = []
    stats = {"tuples": 0, "outputs": 0, "dropped": 0, "empty_masks": 0}
    for result in _map_jobs(job_fn, jobs, workers):
        if command == "augment":
            tuple_id, results, dropped = result
            stats["dropped"] += dropped
            for out_id, state, out_files, meta in results:
                entries.append(_entry_from(out_id, state, out_files, meta))
            stats["outputs"] += len(results)
            progress.emit(event="tuple", command=command, id=tuple_id, outputs=len(results), dropped=dropped)
        else:
            tuple_id, state, out_files, meta = result
            entries.append(_entry_from(tuple_id, state, out_files, meta))
            stats["outputs"] += 1
            if meta.get("mask_empty"):
                stats["empty_masks"] += 1
            progress.emit(event="tuple", command=command, id=tuple_id)
        stats["tuples"] += 1

    out_ds.manifest.entries = entries
    out_ds.manifest.config_hash = config_hash(cfg)
    out_ds.save_manifest()
    record = {"tuples_in": stats["tuples"], "tuples_out": stats["outputs"], **(extra_record or {})}
    if command == "augment":
        record["dropped"] = stats["dropped"]
    if command == "mask":
        record["empty_masks"] = stats["empty_masks"]
    _write_run_record(out_root, command, cfg, started, record)
    progress.emit(event="done", command=command, **record)
    return EXIT_OK


def _entry_from(tuple_id: str, state: str, files: dict, meta: dict) -> ManifestEntry:
    return ManifestEntry(
        id=tuple_id,
        state=TupleState(state),
        files=files,
        source_id=meta.get("source_id", tuple_id),
        aug_index=int(meta.get("aug_index", 0)),
    )


def _cmd_align(args, cfg, progress: Progress) -> int:
    def make_jobs(in_ds: Dataset, out_root: Path):
        calib_path = Path(args.calibration) if args.calibration else in_ds.calibration_path()
        if calib_path is None or not calib_path.exists():
            raise ConfigurationError("align requires a calibration file (--calibration or dataset calibration.json)")
        result = CalibrationResult.from_json(calib_path)
        intr_lq = in_ds.intrinsics("lq")
        intr_hq = in_ds.intrinsics("hq")
        tdict = result.transform.to_dict()
        return [
            (in_ds.root, out_root, e.id, e.files, tdict, intr_lq, intr_hq)
            for e in sorted(in_ds.manifest.entries, key=lambda e: e.id)
        ]

    return _stage_over_tuples(args, cfg, progress, "align", make_jobs, _align_job)


def _cmd_mask(args, cfg, progress: Progress) -> int:
    params: MaskingParams = masking_params(cfg)

    def make_jobs(in_ds: Dataset, out_root: Path):
        intr_lq = in_ds.intrinsics("lq")
        return [
            (in_ds.root, out_root, e.id, e.files, e.state.value, intr_lq, params)
            for e in sorted(in_ds.manifest.entries, key=lambda e: e.id)
        ]

    return _stage_over_tuples(args, cfg, progress, "mask", make_jobs, _mask_job)


def _cmd_augment(args, cfg, progress: Progress) -> int:
    seed = args.seed if args.seed is not None else int(cfg["runtime"]["seed"])
    policy: AugmentPolicy = augment_policy(cfg, seed)

    def make_jobs(in_ds: Dataset, out_root: Path):
        intr_lq = in_ds.intrinsics("lq")
        ordered = sorted(in_ds.manifest.entries, key=lambda e: e.id)
        return [
            (in_ds.root, out_root, e.id, e.files, e.state.value, intr_lq, policy, index)
            for index, e in enumerate(ordered)
        ]

    return _stage_over_tuples(
        args, cfg, progress, "augment", make_jobs, _augment_job,
        extra_record={"policy_count": policy.count, "seed": seed},
    )


def _cmd_split(args, cfg, progress: Progress) -> int:
    in_ds = Dataset.open(args.in_root)
    seed = args.seed if args.seed is not None else int(cfg["runtime"]["seed"])
    fractions = tuple(args.fractions) if args.fractions else split_fractions(cfg)
    if args.dry_run:
        progress.emit(event="dry_run", command="split", tuples=len(in_ds.manifest), fractions=list(fractions))
        return EXIT_OK
    started = time.monotonic()
    split_dataset(in_ds.manifest, fractions, seed)
    in_ds.save_manifest()
    counts = {}
    for entry in in_ds.manifest.entries:
        counts[entry.split] = counts.get(entry.split, 0) + 1
    _write_run_record(in_ds.root, "split", cfg, started, {"counts": counts, "seed": seed})
    progress.emit(event="done", command="split", **{str(k): v for k, v in counts.items()})
    return EXIT_OK


def _cmd_denoise(args, cfg, progress: Progress) -> int:
    in_ds = Dataset.open(args.in_root)
    in_ds.validate_files()
    out_dir = _require_out(args)
    method = args.method or cfg["denoise"]["method"]
    if method not in ("bilateral", "rgf"):
        raise ConfigurationError(f"denoise method must be 'bilateral' or 'rgf', got {method!r}")
    if args.dry_run:
        progress.emit(event="dry_run", command="denoise", method=method, tuples=len(in_ds.manifest))
        return EXIT_OK
    started = time.monotonic()
    out_dir.mkdir(parents=True, exist_ok=True)
    bparams = bilateral_params(cfg)
    rparams = rolling_guidance_params(cfg)
    d_scale = in_ds.intrinsics("lq").d_scale
    jobs = [
        (in_ds.root, out_dir, e.id, e.files, e.state.value, method, bparams, rparams, d_scale)
        for e in sorted(in_ds.manifest.entries, key=lambda e: e.id)
    ]
    workers = _resolve_workers(args, cfg)
    progress.emit(event="start", command="denoise", method=method, tuples=len(jobs), workers=workers)
    for tuple_id in _map_jobs(_denoise_job, jobs, workers):
        progress.emit(event="tuple", command="denoise", id=tuple_id)
    _write_run_record(out_dir, "denoise", cfg, started, {"method": method, "tuples": len(jobs)})
    progress.emit(event="done", command="denoise", tuples=len(jobs))
    return EXIT_OK


def _cmd_evaluate(args, cfg, progress: Progress) -> int:
    in_ds = Dataset.open(args.in_root)
    if not args.predictions:
        raise ConfigurationError("evaluate requires --predictions")
    out_path = Path(args.out) if args.out else in_ds.root / "metrics_report.json"
    mse_domain = args.mse_domain or cfg["metrics"]["mse_domain"]
    bins = metric_bins(cfg)
    if args.dry_run:
        progress.emit(event="dry_run", command="evaluate", tuples=len(in_ds.manifest), predictions=str(args.predictions))
        return EXIT_OK
    started = time.monotonic()
    report = evaluate_split(in_ds, args.predictions, split=args.split, bins=bins, mse_domain=mse_domain)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    report.to_json(out_path)
    if args.csv:
        report.to_csv(args.csv)
    _write_run_record(
        out_path.parent, "evaluate", cfg, started,
        {"tuples": len(report.tuples), "missing": len(report.missing), "empty_mask": len(report.empty_mask)},
    )
    progress.emit(
        event="done",
        command="evaluate",
        tuples=len(report.tuples),
        missing=len(report.missing),
        report=str(out_path),
    )
    return EXIT_OK


def _cmd_export(args, cfg, progress: Progress) -> int:
    in_ds = Dataset.open(args.in_root)
    in_ds.validate_files()
    out_path = Path(args.out) if args.out else in_ds.root / "export.json"
    if args.dry_run:
        progress.emit(event="dry_run", command="export", tuples=len(in_ds.manifest), out=str(out_path))
        return EXIT_OK
    started = time.monotonic()
    intr = {cam: json.loads((in_ds.root / rel).read_text()) for cam, rel in in_ds.manifest.intrinsics.items()}
    splits: dict[str, list] = {}
    for entry in sorted(in_ds.manifest.entries, key=lambda e: e.id):
        split = entry.split or "train"
        splits.setdefault(split, []).append(
            {
                "id": entry.id,
                "state": entry.state.value,
                "source_id": entry.source_id,
                "aug_index": entry.aug_index,
                "files": entry.files,
            }
        )
    listing = {"format_version": 1, "intrinsics": intr, "splits": splits}
    with open(out_path, "w", encoding="utf-8") as f:
        json.dump(listing, f, indent=2, sort_keys=True)
        f.write("\n")
    _write_run_record(out_path.parent, "export", cfg, started, {"tuples": len(in_ds.manifest)})
    progress.emit(event="done", command="export", out=str(out_path), tuples=len(in_ds.manifest))
    return EXIT_OK


_COMMANDS = {
    "calibrate": _cmd_calibrate,
    "align": _cmd_align,
    "mask": _cmd_mask,
    "augment": _cmd_augment,
    "split": _cmd_split,
    "denoise": _cmd_denoise,
    "evaluate": _cmd_evaluate,
    "export": _cmd_export,
}


def build_parser() -> _Parser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file")
    common.add_argument("--seed", type=int, default=None, help="RNG seed (overrides runtime.seed)")
    common.add_argument("--workers", type=int, default=None, help="worker processes (0 = CPU count)")
    common.add_argument("--dry-run", action="store_true", help="validate config and inputs, write nothing")
    common.add_argument("--json", action="store_true", help="machine-readable JSON progress on stdout")

    parser = _Parser(prog="depthset", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("calibrate", parents=[common], help="estimate the HQ->LQ extrinsic transform")
    p.add_argument("--correspondences", help="CSV of 3-D point pairs (id,xh,yh,zh,xl,yl,zl)")
    p.add_argument("--in", dest="in_root", help="dataset root to attach the calibration to")
    p.add_argument("--out", help="output calibration JSON path")

    for name, help_text in (
        ("align", "resample HQ frames onto the LQ image grid"),
        ("mask", "compute object masks"),
        ("augment", "expand the dataset with random rigid motions"),
    ):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("--in", dest="in_root", required=True, help="input dataset root")
        p.add_argument("--out", required=True, help="output dataset root")
        if name == "align":
            p.add_argument("--calibration", help="calibration JSON (default: dataset calibration.json)")

    p = sub.add_parser("split", parents=[common], help="assign train/val/test splits (grouped by source)")
    p.add_argument("--in", dest="in_root", required=True, help="dataset root (manifest updated in place)")
    p.add_argument("--fractions", type=float, nargs=3, metavar=("TRAIN", "VAL", "TEST"))

    p = sub.add_parser("denoise", parents=[common], help="run a classical denoising baseline")
    p.add_argument("--in", dest="in_root", required=True, help="input dataset root")
    p.add_argument("--out", required=True, help="predictions output directory")
    p.add_argument("--method", choices=["bilateral", "rgf"])

    p = sub.add_parser("evaluate", parents=[common], help="score predictions against HQ targets")
    p.add_argument("--in", dest="in_root", required=True, help="dataset root")
    p.add_argument("--predictions", required=True, help="directory of <id>.dfd predictions")
    p.add_argument("--out", help="report JSON path (default: <root>/metrics_report.json)")
    p.add_argument("--csv", help="also write a flat CSV table")
    p.add_argument("--split", help="restrict to one split (train/val/test)")
    p.add_argument("--mse-domain", dest="mse_domain", choices=["mask", "full"])

    p = sub.add_parser("export", parents=[common], help="write the trainer-ready dataset listing")
    p.add_argument("--in", dest="in_root", required=True, help="dataset root")
    p.add_argument("--out", help="listing JSON path (default: <root>/export.json)")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args, unknown = parser.parse_known_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        overrides = []
        i = 0
        while i < len(unknown):
            token = unknown[i]
            if token.startswith("--") and "." in token and i + 1 < len(unknown):
                overrides.append((token[2:], unknown[i + 1]))
                i += 2
            else:
                parser.error(f"unrecognized argument: {token}")
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    progress = Progress(json_mode=args.json)

    try:
        cfg = load_config(args.config)
        cfg = apply_overrides(cfg, overrides)
        return _COMMANDS[args.command](args, cfg, progress)
    except (ConfigurationError, EstimationError, GeometryError) as exc:
        print(f"depthset {args.command}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (IntegrityError, MigrationError) as exc:
        print(f"depthset {args.command}: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY


if __name__ == "__main__":
    sys.exit(main())
