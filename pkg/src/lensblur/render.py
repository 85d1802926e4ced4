"""Energy-conserving defocus renderer over layered scenes.

Each source pixel scatters its radiance over an anti-aliased disk whose
radius is the pixel's circle of confusion.  Per-source kernel weights are
normalized to sum to exactly one, and deposits that would land outside the
canvas are folded back across the border (mirror reflection), so total
radiance is conserved and constant scenes stay constant.  Layers composite
back to front with premultiplied alpha.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from . import _kernels
from .attention import OcclusionConfig
from .imgio import DELTA, ensure_disparity, ensure_image, ensure_same_shape
from .lens import LensParams, defocus_map

log = logging.getLogger(__name__)

_MAX_THREADS = numba.config.NUMBA_NUM_THREADS


def set_threads(n: int) -> int:
    """Set worker threads for the compiled kernels; 0 means all available.

    Thread count never changes results: every output pixel is owned by one
    worker regardless of the split.  Returns the thread count in effect.
    """
    if n < 0:
        raise ValueError(f"thread count must be >= 0, got {n}")
    effective = _MAX_THREADS if n == 0 else min(n, _MAX_THREADS)
    numba.set_num_threads(effective)
    return effective


@dataclass(frozen=True)
class RenderConfig:
    kernel: str = "disk"
    boundary: str = "renormalize"
    max_radius: float = 64.0

    def __post_init__(self) -> None:
        if self.kernel != "disk":
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if self.boundary != "renormalize":
            raise ValueError(f"unknown boundary mode {self.boundary!r}")
        if not (self.max_radius >= 0.0):
            raise ValueError(f"max_radius must be >= 0, got {self.max_radius}")


@dataclass(frozen=True)
class Plane:
    """Disparity plane d(x, y) = d0 + gx*(x - cx) + gy*(y - cy)."""

    d0: float
    gx: float = 0.0
    gy: float = 0.0
    cx: float = 0.0
    cy: float = 0.0

    def __post_init__(self) -> None:
        if not (DELTA <= self.d0 <= 1.0 - DELTA):
            raise ValueError(f"d0 must lie in [{DELTA}, {1.0 - DELTA}], got {self.d0}")


@dataclass
class Layer:
    """A straight-alpha RGBA raster placed on the canvas at (x0, y0)."""

    rgba: np.ndarray
    x0: int
    y0: int
    plane: Plane

    def __post_init__(self) -> None:
        self.rgba = np.asarray(self.rgba, dtype=np.float64)
        if self.rgba.ndim != 3 or self.rgba.shape[2] != 4:
            raise ValueError(f"layer raster must be (H, W, 4), got {self.rgba.shape}")
        if not np.isfinite(self.rgba).all():
            raise ValueError("layer raster contains non-finite values")
        alpha = self.rgba[:, :, 3]
        if alpha.min() < 0.0 or alpha.max() > 1.0:
            raise ValueError("layer alpha must lie in [0, 1]")
        if self.rgba[:, :, :3].min() < 0.0:
            raise ValueError("layer color must be non-negative")


@dataclass
class LayeredScene:
    """Opaque background plus foreground layers ordered back to front.

    Foreground order must be strictly increasing in plane d0 (nearer layers
    later); the constructor sorts and rejects ties.
    """

    width: int
    height: int
    background: Layer
    foregrounds: list[Layer] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError("canvas must be at least 1x1")
        bg = self.background
        if (bg.x0 > 0 or bg.y0 > 0
                or bg.x0 + bg.rgba.shape[1] < self.width
                or bg.y0 + bg.rgba.shape[0] < self.height):
            raise ValueError("background must cover the whole canvas")
        sub = bg.rgba[-bg.y0:self.height - bg.y0, -bg.x0:self.width - bg.x0, 3]
        if not (sub == 1.0).all():
            raise ValueError("background must be opaque over the canvas")
        self.foregrounds = sorted(self.foregrounds, key=lambda l: l.plane.d0)
        d0s = [l.plane.d0 for l in self.foregrounds]
        if any(a == b for a, b in zip(d0s, d0s[1:])):
            raise ValueError("foreground plane d0 values must be distinct")

    def layers(self) -> list[Layer]:
        return [self.background, *self.foregrounds]


def layer_disparity(layer: Layer, width: int, height: int) -> np.ndarray:
    """The layer's plane disparity over the canvas, clamped into range."""
    x = np.arange(width, dtype=np.float64)[None, :]
    y = np.arange(height, dtype=np.float64)[:, None]
    d = layer.plane.d0 + layer.plane.gx * (x - layer.plane.cx) \
        + layer.plane.gy * (y - layer.plane.cy)
    return np.clip(d, DELTA, 1.0 - DELTA)


def _place(layer: Layer, width: int, height: int) -> np.ndarray:
    """Paste the layer raster into a canvas-sized straight RGBA fragment."""
    frag = np.zeros((height, width, 4), np.float64)
    lh, lw = layer.rgba.shape[:2]
    x_lo, x_hi = max(0, layer.x0), min(width, layer.x0 + lw)
    y_lo, y_hi = max(0, layer.y0), min(height, layer.y0 + lh)
    if x_lo < x_hi and y_lo < y_hi:
        frag[y_lo:y_hi, x_lo:x_hi] = layer.rgba[
            y_lo - layer.y0:y_hi - layer.y0, x_lo - layer.x0:x_hi - layer.x0]
    return frag


def scene_disparity(scene: LayeredScene) -> np.ndarray:
    """Hard disparity assignment: front-most layer with alpha > 0.5 wins."""
    out = layer_disparity(scene.background, scene.width, scene.height)
    for layer in scene.foregrounds:  # nearer layers overwrite
        alpha = _place(layer, scene.width, scene.height)[:, :, 3]
        m = alpha > 0.5
        out[m] = layer_disparity(layer, scene.width, scene.height)[m]
    return out


def _premultiply(rgba: np.ndarray) -> np.ndarray:
    out = rgba.copy()
    out[:, :, :3] *= rgba[:, :, 3:4]
    return out


def _reflect_indices(idx: np.ndarray, n: int) -> np.ndarray:
    # mirror about the pixel edges: ... 1 0 | 0 1 ... n-1 | n-1 n-2 ...
    m = np.mod(idx, 2 * n)
    return np.minimum(m, 2 * n - 1 - m)


def _fold(out_ext: np.ndarray, reach: int, height: int, width: int) -> np.ndarray:
    """Fold the extended canvas back across the borders by mirror reflection."""
    iy = _reflect_indices(np.arange(out_ext.shape[0]) - reach, height)
    ix = _reflect_indices(np.arange(out_ext.shape[1]) - reach, width)
    out = np.zeros((height, width, out_ext.shape[2]), np.float64)
    np.add.at(out, (iy[:, None], ix[None, :]), out_ext)
    return out


def _clamped_radii(radii: np.ndarray, config: RenderConfig) -> np.ndarray:
    radii = np.asarray(radii, dtype=np.float64)
    if not np.isfinite(radii).all() or radii.min() < 0.0:
        raise ValueError("radii must be finite and >= 0")
    clamped = int(np.count_nonzero(radii > config.max_radius))
    if clamped:
        log.warning("clamped %d CoC radii to max_radius=%g", clamped, config.max_radius)
        radii = np.minimum(radii, config.max_radius)
    return radii


def _gather_bounds(radii: np.ndarray, reach: int) -> np.ndarray:
    """Per-tile scan half-widths for the extended-canvas gather.

    A source of radius r deposits nothing past Chebyshev distance
    r + SUBSAMPLE_REACH, so each target tile only needs to scan far enough
    to cover the source tiles whose disks can reach it.  Culled sources
    contribute exact zeros, so gathers stay bit-identical to a full scan.
    Bounds never exceed ``reach``.
    """
    tile = _kernels.GATHER_TILE
    h, w = radii.shape
    th, tw = -(-h // tile), -(-w // tile)
    padded = np.zeros((th * tile, tw * tile))
    padded[:h, :w] = radii
    tile_reach = (padded.reshape(th, tile, tw, tile).max(axis=(1, 3))
                  + _kernels.SUBSAMPLE_REACH)

    he, we = h + 2 * reach, w + 2 * reach
    gh, gw = -(-he // tile), -(-we // tile)
    # tile pixel boxes, inclusive, in canvas coordinates
    uy0 = np.arange(gh) * tile - reach
    uy1 = np.minimum(uy0 + tile - 1, h - 1 + reach)
    ux0 = np.arange(gw) * tile - reach
    ux1 = np.minimum(ux0 + tile - 1, w - 1 + reach)
    sy0 = np.arange(th) * tile
    sy1 = np.minimum(sy0 + tile - 1, h - 1)
    sx0 = np.arange(tw) * tile
    sx1 = np.minimum(sx0 + tile - 1, w - 1)

    # per-axis nearest and farthest interval distances, (target, source)
    near_y = np.maximum(0, np.maximum(sy0[None, :] - uy1[:, None],
                                      uy0[:, None] - sy1[None, :]))
    far_y = np.maximum(uy1[:, None] - sy0[None, :], sy1[None, :] - uy0[:, None])
    near_x = np.maximum(0, np.maximum(sx0[None, :] - ux1[:, None],
                                      ux0[:, None] - sx1[None, :]))
    far_x = np.maximum(ux1[:, None] - sx0[None, :], sx1[None, :] - ux0[:, None])

    bounds = np.zeros((gh, gw))
    for t_y in range(th):
        row_reach = tile_reach[t_y]
        cheb_near_y = near_y[:, t_y][:, None]
        cheb_far_y = far_y[:, t_y][:, None]
        for t_x in range(tw):
            rt = row_reach[t_x]
            cheb_near = np.maximum(cheb_near_y, near_x[:, t_x][None, :])
            cheb_far = np.maximum(cheb_far_y, far_x[:, t_x][None, :])
            cand = np.where(cheb_near <= rt, np.minimum(rt, cheb_far), 0.0)
            np.maximum(bounds, cand, out=bounds)
    return np.minimum(np.ceil(bounds), reach).astype(np.int64)


def _probe_tables(disparity: np.ndarray,
                  n_depth: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-source visibility probe disparities and collinear coefficients.

    Hoists the per-probe arithmetic out of the pair loops; the expressions
    mirror the scalar path op for op, so the tabulated values are the exact
    floats the kernels would otherwise recompute per pair.
    """
    d_s = disparity[:, :, None]
    step = (1.0 - d_s) / n_depth
    dts = d_s + (np.arange(n_depth, dtype=np.float64) + 0.5) * step
    coefs = ((1.0 - dts) * d_s) / ((1.0 - d_s) * dts)
    return np.ascontiguousarray(dts), np.ascontiguousarray(coefs)


def splat_layer(rgba: np.ndarray, radii: np.ndarray,
                config: RenderConfig | None = None) -> np.ndarray:
    """Scatter a straight-alpha RGBA raster into a premultiplied one.

    Each source pixel spreads premultiplied color and alpha over an
    anti-aliased disk of its radius; per-source weights sum to exactly one
    over the canvas.  Radii below 0.5 degenerate to an identity deposit.
    """
    if config is None:
        config = RenderConfig()
    rgba = np.asarray(rgba, dtype=np.float64)
    if rgba.ndim != 3 or rgba.shape[2] != 4:
        raise ValueError(f"expected (H, W, 4) raster, got {rgba.shape}")
    if radii.shape != rgba.shape[:2]:
        raise ValueError(
            f"radii {radii.shape} does not match raster {rgba.shape[:2]}")
    radii = _clamped_radii(radii, config)
    pre = _premultiply(rgba)
    if float(radii.max()) < 0.5:
        return pre
    height, width = radii.shape
    active = np.ascontiguousarray((rgba[:, :, 3] > 0.0).astype(np.uint8))
    rows = np.flatnonzero(active.any(axis=1))
    cols = np.flatnonzero(active.any(axis=0))
    if rows.size == 0:
        return np.zeros((height, width, 4), np.float64)
    reach = int(math.ceil(float(radii.max()) + _kernels.SUBSAMPLE_REACH))
    radii_c = np.ascontiguousarray(radii)
    mass = _kernels.splat_mass(radii_c, active, reach)
    cnorm = np.ascontiguousarray(pre / mass[:, :, None])
    out_ext = np.zeros((height + 2 * reach, width + 2 * reach, 4), np.float64)
    # Deposits land within reach of an active source; in extended-frame
    # coordinates (shifted by +reach) that is the active bbox grown by 2*reach.
    _kernels.splat_gather(
        cnorm, radii_c, active, reach,
        int(rows[0]), min(height - 1 + 2 * reach, int(rows[-1]) + 2 * reach),
        int(cols[0]), min(width - 1 + 2 * reach, int(cols[-1]) + 2 * reach),
        out_ext)
    return _fold(out_ext, reach, height, width)


def all_in_focus(scene: LayeredScene) -> np.ndarray:
    """Sharp premultiplied composite of the scene, back to front."""
    out = None
    for layer in scene.layers():
        pre = _premultiply(_place(layer, scene.width, scene.height))
        out = pre if out is None else pre + (1.0 - pre[:, :, 3:4]) * out
    return out[:, :, :3]


def render(scene: LayeredScene, lens: LensParams,
           config: RenderConfig | None = None) -> np.ndarray:
    """Defocus-blur the scene: splat each layer, composite back to front.

    With aperture_scale 0 this reproduces all_in_focus exactly.
    """
    if config is None:
        config = RenderConfig()
    out = None
    for layer in scene.layers():
        frag = _place(layer, scene.width, scene.height)
        radii = defocus_map(layer_disparity(layer, scene.width, scene.height), lens)
        pre = splat_layer(frag, radii, config)
        out = pre if out is None else pre + (1.0 - pre[:, :, 3:4]) * out
    return out[:, :, :3]


def render_from_disparity(image: np.ndarray, disparity: np.ndarray,
                          lens: LensParams, config: RenderConfig | None = None,
                          occlusion: OcclusionConfig | None = None) -> np.ndarray:
    """Occlusion-aware defocus of a single opaque image with known disparity.

    A source contributes to a target only when the straight path between
    them clears the disparity field (same midpoint probing as the attention
    visibility rule); weights renormalize per source over admitted targets.
    With disparity identically equal to the focus disparity the input comes
    back exactly.
    """
    if config is None:
        config = RenderConfig()
    if occlusion is None:
        occlusion = OcclusionConfig()
    image = ensure_image(image)
    disparity = ensure_disparity(disparity)
    ensure_same_shape(image, disparity)
    radii = _clamped_radii(defocus_map(disparity, lens), config)
    if float(radii.max()) < 0.5:
        return image.copy()
    height, width = radii.shape
    reach = int(math.ceil(float(radii.max()) + _kernels.SUBSAMPLE_REACH))
    radii_c = np.ascontiguousarray(radii)
    disp_c = np.ascontiguousarray(disparity)
    dts, coefs = _probe_tables(disp_c, occlusion.n_depth_samples)
    mass = _kernels.occlusion_mass(disp_c, radii_c, reach,
                                   occlusion.n_depth_samples, dts, coefs)
    cnorm = np.ascontiguousarray(image / mass[:, :, None])
    out_ext = np.zeros((height + 2 * reach, width + 2 * reach, 3), np.float64)
    bounds = _gather_bounds(radii_c, reach)
    _kernels.occlusion_gather(cnorm, disp_c, radii_c, reach,
                              occlusion.n_depth_samples, dts, coefs, bounds,
                              out_ext)
    return _fold(out_ext, reach, height, width)


def focal_stack(source: LayeredScene | np.ndarray, disparity: np.ndarray | None,
                lens_base: LensParams, focuses: list[float],
                config: RenderConfig | None = None) -> list[np.ndarray]:
    """Render the same scene at several focus disparities, fixed aperture.

    ``source`` is either a LayeredScene (disparity ignored) or an image array
    paired with its disparity map.
    """
    if not focuses:
        raise ValueError("focuses must be a non-empty list")
    out = []
    for focus in focuses:
        lens = LensParams(focus_disparity=float(focus),
                          aperture_scale=lens_base.aperture_scale)
        if isinstance(source, LayeredScene):
            out.append(render(source, lens, config))
        else:
            if disparity is None:
                raise ValueError("image input requires a disparity map")
            out.append(render_from_disparity(source, disparity, lens, config))
    return out
