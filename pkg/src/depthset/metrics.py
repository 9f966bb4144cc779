"""Masked evaluation metrics for depth-frame pairs and dataset splits.

Residuals combine the object mask with joint finiteness of both frames
(m = m_nan * m_obj). Every metric is computed on the input/target pair as
well as the prediction/target pair so reports show how much of the original
noise a method removed; IT/OT is the percentage of it that remains.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset_io import Dataset, read_depth
from .errors import ConfigurationError

DEFAULT_BINS: tuple[tuple[float, float], ...] = ((0.0, 10.0), (10.0, 20.0), (20.0, math.inf))


def combined_mask(pred: np.ndarray, target: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    if pred.shape != target.shape:
        raise ConfigurationError(f"shape mismatch: pred {pred.shape} vs target {target.shape}")
    m = np.isfinite(pred) & np.isfinite(target)
    if mask is not None:
        if mask.shape != pred.shape:
            raise ConfigurationError(f"mask shape {mask.shape} does not match frames {pred.shape}")
        m &= mask
    return m


def masked_l1(pred: np.ndarray, target: np.ndarray, mask: np.ndarray | None = None) -> float | None:
    """Mean absolute masked residual in depth units; None when nothing is masked."""
    m = combined_mask(pred, target, mask)
    n = int(m.sum())
    if n == 0:
        return None
    res = pred[m].astype(np.float64) - target[m].astype(np.float64)
    return float(np.abs(res).sum() / n)


@dataclass
class BinStat:
    lo: float
    hi: float
    mean: float | None
    count: int

    @property
    def label(self) -> str:
        hi = "inf" if math.isinf(self.hi) else f"{self.hi:g}"
        return f"[{self.lo:g},{hi})"


def binned_l1(
    pred: np.ndarray,
    target: np.ndarray,
    mask: np.ndarray | None = None,
    bins: tuple[tuple[float, float], ...] = DEFAULT_BINS,
) -> list[BinStat]:
    """Mean |residual| restricted to pixels whose |residual| falls in each
    [lo, hi) interval; membership is judged on the pair being scored."""
    for (lo, hi), (lo2, _) in zip(bins, list(bins)[1:]):
        if hi > lo2:
            raise ConfigurationError(f"bins must be disjoint and ordered, got {bins}")
    m = combined_mask(pred, target, mask)
    res = np.abs(pred[m].astype(np.float64) - target[m].astype(np.float64))
    out = []
    for lo, hi in bins:
        sel = (res >= lo) & (res < hi)
        n = int(sel.sum())
        out.append(BinStat(lo, hi, float(res[sel].mean()) if n else None, n))
    return out


def masked_mse(
    pred: np.ndarray,
    target: np.ndarray,
    mask: np.ndarray | None = None,
    domain: str = "mask",
) -> float | None:
    """Mean squared masked residual.

    ``domain='mask'`` divides by the masked pixel count; ``domain='full'``
    divides by the total pixel count (out-of-mask residuals count as zero),
    reproducing the other published reading of a masked MSE.
    """
    if domain not in ("mask", "full"):
        raise ConfigurationError(f"mse domain must be 'mask' or 'full', got {domain!r}")
    m = combined_mask(pred, target, mask)
    n = int(m.sum())
    if n == 0:
        return None
    res = pred[m].astype(np.float64) - target[m].astype(np.float64)
    denom = pred.size if domain == "full" else n
    return float((res**2).sum() / denom)


def it_ot(result_mse: float, raw_mse: float) -> float:
    """Noise remaining after denoising: 100 * result MSE / raw MSE, percent."""
    if raw_mse <= 0:
        raise ConfigurationError(f"raw MSE must be positive, got {raw_mse}")
    return 100.0 * (result_mse / raw_mse)


def evaluate_pair(
    pred: np.ndarray,
    target: np.ndarray,
    mask: np.ndarray | None,
    bins: tuple[tuple[float, float], ...],
    mse_domain: str,
) -> dict:
    """All metrics of one (pred, target) pair as a flat dict."""
    stats = binned_l1(pred, target, mask, bins)
    return {
        "l1": masked_l1(pred, target, mask),
        "mse": masked_mse(pred, target, mask, mse_domain),
        "n_pixels": int(combined_mask(pred, target, mask).sum()),
        "bins": {s.label: {"mean": s.mean, "count": s.count} for s in stats},
    }


@dataclass
class MetricsReport:
    tuples: list[dict] = field(default_factory=list)
    aggregate: dict = field(default_factory=dict)
    missing: list[str] = field(default_factory=list)
    empty_mask: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "tuples": self.tuples,
            "aggregate": self.aggregate,
            "missing_predictions": self.missing,
            "empty_mask_tuples": self.empty_mask,
        }

    def to_json(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")

    def to_csv(self, path: str | Path) -> None:
        """Flat per-tuple table; aggregate rows appended at the bottom."""
        rows = []
        for rec in self.tuples:
            row = {"id": rec["id"]}
            for side in ("input", "prediction"):
                pair = rec[side]
                row[f"{side}_l1"] = pair["l1"]
                row[f"{side}_mse"] = pair["mse"]
                row[f"{side}_n_pixels"] = pair["n_pixels"]
                for label, b in pair["bins"].items():
                    row[f"{side}_l1_{label}"] = b["mean"]
            row["it_ot_percent"] = rec.get("it_ot_percent")
            rows.append(row)
        fieldnames = list(rows[0].keys()) if rows else ["id"]
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=fieldnames)
            writer.writeheader()
            writer.writerows(rows)
            for name in ("median", "mean"):
                agg = self.aggregate.get(name, {})
                writer.writerow({"id": f"aggregate_{name}", **{k: v for k, v in agg.items() if k in fieldnames}})


def _aggregate(values: list[float | None]) -> dict[str, float | None]:
    present = [v for v in values if v is not None]
    if not present:
        return {"median": None, "mean": None}
    return {"median": float(np.median(present)), "mean": float(np.mean(present))}


def evaluate_split(
    dataset: Dataset,
    predictions_dir: str | Path,
    split: str | None = None,
    bins: tuple[tuple[float, float], ...] = DEFAULT_BINS,
    mse_domain: str = "mask",
) -> MetricsReport:
    """Evaluate every tuple of a split against a directory of ``<id>.dfd``
    predictions.

    Per-tuple metrics are reported for the input/target and the
    prediction/target pairs; aggregates carry the median and mean across
    tuples plus pixel-pooled MSEs and the IT/OT ratio. Tuples with a missing
    prediction or an empty mask are listed and excluded from aggregates.
    """
    predictions_dir = Path(predictions_dir)
    report = MetricsReport()
    pooled = {"input_sq": 0.0, "pred_sq": 0.0, "input_abs": 0.0, "pred_abs": 0.0, "n": 0, "denom": 0}

    entries = [e for e in dataset.manifest.entries if split is None or e.split == split]
    for entry in sorted(entries, key=lambda e: e.id):
        tup = dataset.read_tuple(entry.id)
        pred_path = predictions_dir / f"{entry.id}.dfd"
        if not pred_path.exists():
            report.missing.append(entry.id)
            continue
        pred, _ = read_depth(pred_path)
        mask = tup.mask
        m = combined_mask(tup.depth_lq, tup.depth_hq, mask) & np.isfinite(pred)
        if not m.any():
            report.empty_mask.append(entry.id)
            continue

        rec = {
            "id": entry.id,
            "input": evaluate_pair(tup.depth_lq, tup.depth_hq, mask, bins, mse_domain),
            "prediction": evaluate_pair(pred, tup.depth_hq, mask, bins, mse_domain),
        }
        in_mse, pr_mse = rec["input"]["mse"], rec["prediction"]["mse"]
        rec["it_ot_percent"] = it_ot(pr_mse, in_mse) if in_mse and pr_mse is not None else None
        report.tuples.append(rec)

        res_in = tup.depth_lq[m].astype(np.float64) - tup.depth_hq[m].astype(np.float64)
        res_pr = pred[m].astype(np.float64) - tup.depth_hq[m].astype(np.float64)
        pooled["input_sq"] += float((res_in**2).sum())
        pooled["pred_sq"] += float((res_pr**2).sum())
        pooled["input_abs"] += float(np.abs(res_in).sum())
        pooled["pred_abs"] += float(np.abs(res_pr).sum())
        pooled["n"] += int(m.sum())
        pooled["denom"] += tup.depth_lq.size if mse_domain == "full" else int(m.sum())

    agg: dict = {"median": {}, "mean": {}}
    for side in ("input", "prediction"):
        for key in ("l1", "mse"):
            stats = _aggregate([rec[side][key] for rec in report.tuples])
            agg["median"][f"{side}_{key}"] = stats["median"]
            agg["mean"][f"{side}_{key}"] = stats["mean"]
        for label in (report.tuples[0][side]["bins"] if report.tuples else {}):
            stats = _aggregate([rec[side]["bins"][label]["mean"] for rec in report.tuples])
            agg["median"][f"{side}_l1_{label}"] = stats["median"]
            agg["mean"][f"{side}_l1_{label}"] = stats["mean"]
    stats = _aggregate([rec["it_ot_percent"] for rec in report.tuples])
    agg["median"]["it_ot_percent"] = stats["median"]
    agg["mean"]["it_ot_percent"] = stats["mean"]

    if pooled["denom"] > 0:
        agg["pooled"] = {
            "input_mse": pooled["input_sq"] / pooled["denom"],
            "prediction_mse": pooled["pred_sq"] / pooled["denom"],
            "input_l1": pooled["input_abs"] / pooled["n"],
            "prediction_l1": pooled["pred_abs"] / pooled["n"],
            "n_pixels": pooled["n"],
        }
        if pooled["input_sq"] > 0:
            agg["pooled"]["it_ot_percent"] = it_ot(agg["pooled"]["prediction_mse"], agg["pooled"]["input_mse"])
    report.aggregate = agg
    return report
