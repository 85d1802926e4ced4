"""Thin-lens defocus geometry.

A point at disparity d seen through a lens focused at disparity d_f projects
to a circle of confusion with radius |d_f - d| * aperture_scale, where
aperture_scale is expressed in pixels per unit disparity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imgio import DELTA

SHARPNESS_CAP = 1e6


@dataclass(frozen=True)
class LensParams:
    """Thin-lens configuration: focus disparity and aperture scale."""

    focus_disparity: float
    aperture_scale: float

    def __post_init__(self) -> None:
        if not (DELTA <= self.focus_disparity <= 1.0 - DELTA):
            raise ValueError(
                f"focus_disparity must lie in [{DELTA}, {1 - DELTA}], "
                f"got {self.focus_disparity}")
        if not (self.aperture_scale >= 0.0 and np.isfinite(self.aperture_scale)):
            raise ValueError(f"aperture_scale must be finite and >= 0, got {self.aperture_scale}")


@dataclass(frozen=True)
class SoftEdgeSchedule:
    """Sharpness of the soft disk-edge transition.

    ``sharpness`` is capped at SHARPNESS_CAP; the default sits at the cap,
    which makes the transition effectively a step with value 0.5 at zero.
    ``variant`` selects the transition family: "logistic" (default, increasing
    in x) or "reciprocal", the decreasing form 1 / (1 + k * exp(x)) kept for
    side-by-side study of the two edge conventions.
    """

    sharpness: float = SHARPNESS_CAP
    variant: str = "logistic"

    def __post_init__(self) -> None:
        if not (self.sharpness > 0.0):
            raise ValueError(f"sharpness must be positive, got {self.sharpness}")
        if self.variant not in ("logistic", "reciprocal"):
            raise ValueError(f"unknown soft-edge variant {self.variant!r}")

    @property
    def effective_sharpness(self) -> float:
        return min(self.sharpness, SHARPNESS_CAP)


def _stable_logistic(z: np.ndarray) -> np.ndarray:
    # 1 / (1 + exp(-z)) without overflow on either tail
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def soft_edge(x: np.ndarray | float, schedule: SoftEdgeSchedule | None = None) -> np.ndarray | float:
    """Smooth inside/outside transition for signed distance x.

    Returns sigmoid(k * x) with k = min(sharpness, SHARPNESS_CAP): 0.5 at the
    disk edge, approaching 1 inside (x > 0) and 0 outside.  The "reciprocal"
    variant returns 1 / (1 + k * exp(x)) instead, which decreases in x.
    """
    if schedule is None:
        schedule = SoftEdgeSchedule()
    k = schedule.effective_sharpness
    x = np.asarray(x, dtype=np.float64)
    if schedule.variant == "reciprocal":
        # 1 / (1 + k e^x) == sigmoid(-(x + log k)), reusing the stable form
        out = _stable_logistic(-(x + np.log(k)))
    else:
        out = _stable_logistic(k * x)
    if out.ndim == 0:
        return float(out)
    return out


def coc_radius(d: np.ndarray | float, lens: LensParams) -> np.ndarray | float:
    """Circle-of-confusion radius |d_f - d| * aperture_scale, in pixels."""
    r = np.abs(lens.focus_disparity - np.asarray(d, dtype=np.float64)) * lens.aperture_scale
    if r.ndim == 0:
        return float(r)
    return r


def defocus_map(disparity: np.ndarray, lens: LensParams) -> np.ndarray:
    """Per-pixel CoC radius for a disparity map."""
    disparity = np.asarray(disparity, dtype=np.float64)
    if disparity.ndim != 2:
        raise ValueError(f"disparity must be 2-D, got shape {disparity.shape}")
    return np.abs(lens.focus_disparity - disparity) * lens.aperture_scale


def focus_from_region(disparity: np.ndarray, mask: np.ndarray) -> float:
    """Focus disparity as the mean disparity over a selected region.

    The mask is boolean with the disparity map's shape; the mean is clamped
    to [DELTA, 1 - DELTA].  An empty selection raises ValueError.
    """
    disparity = np.asarray(disparity, dtype=np.float64)
    mask = np.asarray(mask)
    if mask.dtype != np.bool_:
        raise ValueError(f"mask must be boolean, got dtype {mask.dtype}")
    if mask.shape != disparity.shape:
        raise ValueError(
            f"mask shape {mask.shape} does not match disparity {disparity.shape}")
    if not mask.any():
        raise ValueError("focus region is empty")
    return float(np.clip(disparity[mask].mean(), DELTA, 1.0 - DELTA))
