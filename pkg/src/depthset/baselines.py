"""Training-free depth denoisers: bilateral and rolling guidance filters.

Both operate on the depth map itself (depth-valued range weights, no RGB
guidance) and are NaN-aware: invalid or unmasked neighbors contribute zero
weight and the remaining weights renormalize, so filtered values stay a
convex combination of valid masked neighbors. Pixels outside the mask pass
through untouched and the output validity pattern equals the input's.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class BilateralParams:
    sigma_spatial_px: float = 3.0
    sigma_range: float = 20.0
    radius_px: int = 5

    def __post_init__(self):
        if self.sigma_spatial_px <= 0 or self.sigma_range <= 0 or self.radius_px <= 0:
            raise ConfigurationError("bilateral parameters must all be positive")


@dataclass(frozen=True)
class RollingGuidanceParams:
    bilateral: BilateralParams = BilateralParams()
    iterations: int = 4
    initial_sigma_px: float = 2.0

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigurationError(f"rolling guidance needs >= 1 iteration, got {self.iterations}")
        if self.initial_sigma_px <= 0:
            raise ConfigurationError("initial sigma must be positive")


def _weighted_pass(
    depth: np.ndarray,
    guidance: np.ndarray | None,
    mask: np.ndarray | None,
    sigma_spatial: float,
    sigma_range: float | None,
    radius: int,
) -> np.ndarray:
    """One normalized window pass; range term omitted when sigma_range is None."""
    h, w = depth.shape
    valid = np.isfinite(depth)
    active = valid if mask is None else (valid & mask)

    depth64 = np.where(active, depth, 0.0).astype(np.float64)
    pad_depth = np.pad(depth64, radius)
    pad_ok = np.pad(active, radius)
    if guidance is not None:
        guide64 = np.where(active, guidance, 0.0).astype(np.float64)
        pad_guide = np.pad(guide64, radius)

    num = np.zeros((h, w))
    den = np.zeros((h, w))
    for dv in range(-radius, radius + 1):
        for du in range(-radius, radius + 1):
            w_s = np.exp(-(du * du + dv * dv) / (2.0 * sigma_spatial**2))
            sl = (slice(radius + dv, radius + dv + h), slice(radius + du, radius + du + w))
            ok = pad_ok[sl]
            weight = w_s * ok
            if sigma_range is not None:
                diff = pad_guide[sl] - guide64
                weight = weight * np.exp(-(diff * diff) / (2.0 * sigma_range**2))
            num += weight * pad_depth[sl]
            den += weight
    out = depth.astype(np.float32, copy=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        filtered = num / den
    out[active] = filtered[active].astype(np.float32)
    return out


def joint_bilateral(
    depth: np.ndarray,
    guidance: np.ndarray,
    mask: np.ndarray | None,
    params: BilateralParams,
) -> np.ndarray:
    """Bilateral pass whose range weights come from ``guidance`` instead of
    the filtered signal itself. With guidance == depth this is the plain
    bilateral filter."""
    if guidance.shape != depth.shape:
        raise ConfigurationError(f"guidance shape {guidance.shape} does not match depth {depth.shape}")
    return _weighted_pass(
        depth, guidance, mask, params.sigma_spatial_px, params.sigma_range, params.radius_px
    )


def bilateral(depth: np.ndarray, mask: np.ndarray | None, params: BilateralParams) -> np.ndarray:
    """Edge-preserving smoothing: neighbors are discounted by spatial distance
    and by depth difference, so high-contrast steps survive while low-contrast
    noise averages out."""
    return joint_bilateral(depth, depth, mask, params)


def rolling_guidance(
    depth: np.ndarray,
    mask: np.ndarray | None,
    params: RollingGuidanceParams,
) -> np.ndarray:
    """Scale-aware smoothing: small structure is removed outright by the
    initial Gaussian pass, then repeated joint bilateral passes restore the
    large-scale edges from the input while the guidance sharpens."""
    guide = _weighted_pass(
        depth, None, mask, params.initial_sigma_px, None, params.bilateral.radius_px
    )
    for _ in range(params.iterations):
        guide = joint_bilateral(depth, guide, mask, params.bilateral)
    return guide
