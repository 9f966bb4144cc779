"""Pipeline configuration: TOML file, defaults, and flag overrides.

Effective settings are a deep merge of built-in defaults, the optional
``--config`` TOML document, and repeated ``--section.key value`` flags, in
ascending precedence. The merged dict is hashed into every run record so
artifacts can be traced back to the exact settings that produced them.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .augmentation import AugmentPolicy
from .baselines import BilateralParams, RollingGuidanceParams
from .errors import ConfigurationError
from .masking import CropBox, MaskingParams

DEFAULTS: dict[str, dict[str, Any]] = {
    "masking": {
        "normal_k": 30,
        "angle_thresh_deg": 15.0,
        "seed_radius_m": 0.01,
        "eps_m": 0.02,
        "min_pts": 10,
        "min_size": 200,
        "max_gap_m": 0.5,
        "anchor_dist_m": 0.05,
        "reject_near_anchors": True,
        "closing": True,
        "crop_min_m": None,
        "crop_max_m": None,
        "anchors_m": [],
    },
    "augment": {
        "count": 49,
        "max_translation_m": 0.10,
        "max_rotation_deg": 5.0,
        "pivot": "centroid",
        "min_object_pixels": 50,
    },
    "split": {"fractions": [0.90, 0.05, 0.05]},
    "metrics": {"bin_edges": [0.0, 10.0, 20.0], "mse_domain": "mask"},
    "denoise": {
        "method": "bilateral",
        "sigma_spatial_px": 3.0,
        "sigma_range": 20.0,
        "radius_px": 5,
        "iterations": 4,
        "initial_sigma_px": 2.0,
    },
    "runtime": {"seed": 0, "workers": 0},
}


def _deep_merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path: str | Path | None) -> dict:
    """Defaults merged with the TOML file at ``path`` (when given)."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is None:
        return cfg
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        with open(path, "rb") as f:
            loaded = tomllib.load(f)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"invalid config file {path}: {exc}") from exc
    return _deep_merge(cfg, loaded)


def _parse_literal(text: str) -> Any:
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg: dict, pairs: list[tuple[str, str]]) -> dict:
    """Apply ``--section.key value`` overrides (flags beat file beats defaults)."""
    cfg = copy.deepcopy(cfg)
    for dotted, raw in pairs:
        parts = dotted.split(".")
        node = cfg
        for part in parts[:-1]:
            if not isinstance(node.get(part), dict):
                node[part] = {}
            node = node[part]
        node[parts[-1]] = _parse_literal(raw)
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode("utf-8")).hexdigest()


def masking_params(cfg: dict) -> MaskingParams:
    m = cfg["masking"]
    if m["crop_min_m"] is None or m["crop_max_m"] is None:
        raise ConfigurationError("masking requires masking.crop_min_m and masking.crop_max_m")
    if not m["anchors_m"]:
        raise ConfigurationError("masking requires masking.anchors_m (table surface points)")
    return MaskingParams(
        normal_k=int(m["normal_k"]),
        angle_thresh_deg=float(m["angle_thresh_deg"]),
        seed_radius_m=float(m["seed_radius_m"]),
        eps_m=float(m["eps_m"]),
        min_pts=int(m["min_pts"]),
        min_size=int(m["min_size"]),
        max_gap_m=float(m["max_gap_m"]),
        anchor_dist_m=float(m["anchor_dist_m"]),
        reject_near_anchors=bool(m["reject_near_anchors"]),
        closing=bool(m["closing"]),
        crop_box=CropBox(tuple(m["crop_min_m"]), tuple(m["crop_max_m"])),
        anchors_m=[tuple(a) for a in m["anchors_m"]],
    )


def augment_policy(cfg: dict, seed: int) -> AugmentPolicy:
    a = cfg["augment"]
    return AugmentPolicy(
        count=int(a["count"]),
        max_translation_m=float(a["max_translation_m"]),
        max_rotation_deg=float(a["max_rotation_deg"]),
        rng_seed=int(seed),
        pivot=str(a["pivot"]),
        min_object_pixels=int(a["min_object_pixels"]),
    )


def bilateral_params(cfg: dict) -> BilateralParams:
    d = cfg["denoise"]
    return BilateralParams(
        sigma_spatial_px=float(d["sigma_spatial_px"]),
        sigma_range=float(d["sigma_range"]),
        radius_px=int(d["radius_px"]),
    )


def rolling_guidance_params(cfg: dict) -> RollingGuidanceParams:
    d = cfg["denoise"]
    return RollingGuidanceParams(
        bilateral=bilateral_params(cfg),
        iterations=int(d["iterations"]),
        initial_sigma_px=float(d["initial_sigma_px"]),
    )


def metric_bins(cfg: dict) -> tuple[tuple[float, float], ...]:
    edges = [float(e) for e in cfg["metrics"]["bin_edges"]]
    if sorted(edges) != edges or len(edges) < 1:
        raise ConfigurationError(f"metrics.bin_edges must be ascending, got {edges}")
    edges.append(math.inf)
    return tuple((edges[i], edges[i + 1]) for i in range(len(edges) - 1))


def split_fractions(cfg: dict) -> tuple[float, float, float]:
    fr = cfg["split"]["fractions"]
    if len(fr) != 3:
        raise ConfigurationError(f"split.fractions must be [train, val, test], got {fr}")
    return float(fr[0]), float(fr[1]), float(fr[2])
