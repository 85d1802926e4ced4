"""Synthetic layered-scene dataset generation.

Scenes are assembled from a background photo and a few RGBA foreground
cutouts, each given a planar disparity ramp, then rendered at several
aperture levels and focus settings.  Per-scene randomness derives only from
(config seed, scene index), so datasets are reproducible byte for byte and
scenes can be generated in any order.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field

import cv2
import numpy as np

from .imgio import (DELTA, _atomic_write_bytes, load_image, load_rgba,
                    save_disparity, save_image)
from .lens import LensParams, focus_from_region
from .render import (Layer, LayeredScene, Plane, RenderConfig, _place,
                     all_in_focus, render, scene_disparity)

log = logging.getLogger(__name__)

MIN_ASSET_SIDE = 32

_MODE_TAGS = {"background_mean": "bg", "foreground_mean": "fg"}


@dataclass
class SynthConfig:
    """Dataset recipe; see field checks in ``validate``.

    Disparity ranges for background and foreground planes must not overlap,
    keeping foregrounds strictly nearer than the background.
    """

    background_dir: str
    foreground_dir: str
    seed: int = 0
    n_scenes: int = 1
    canvas_width: int = 512
    canvas_height: int = 512
    n_foregrounds: tuple[int, int] = (1, 3)
    scale_range: tuple[float, float] = (0.4, 1.0)
    min_visible_fraction: float = 0.25
    aperture_levels: tuple[float, ...] = (8.0, 16.0, 24.0, 32.0)
    focus_modes: tuple[str, ...] = ("background_mean", "foreground_mean")
    background_disparity: tuple[float, float] = (0.05, 0.35)
    foreground_disparity: tuple[float, float] = (0.45, 0.95)
    gradient_range: float = 1e-3

    def validate(self) -> list[str]:
        """Return every schema violation, not just the first."""
        errs: list[str] = []

        def _pair(name: str, value, lo_ok, hi_ok) -> None:
            try:
                a, b = float(value[0]), float(value[1])
            except (TypeError, ValueError, IndexError):
                errs.append(f"{name} must be a pair of numbers, got {value!r}")
                return
            if not (lo_ok <= a <= b <= hi_ok):
                errs.append(f"{name} must satisfy {lo_ok} <= lo <= hi <= {hi_ok}, got {value!r}")

        if not isinstance(self.background_dir, str) or not self.background_dir:
            errs.append("background_dir must be a non-empty path string")
        if not isinstance(self.foreground_dir, str) or not self.foreground_dir:
            errs.append("foreground_dir must be a non-empty path string")
        if not isinstance(self.seed, int):
            errs.append(f"seed must be an integer, got {self.seed!r}")
        if not isinstance(self.n_scenes, int) or self.n_scenes < 0:
            errs.append(f"n_scenes must be a non-negative integer, got {self.n_scenes!r}")
        for name in ("canvas_width", "canvas_height"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 16:
                errs.append(f"{name} must be an integer >= 16, got {v!r}")
        nf = self.n_foregrounds
        if (not isinstance(nf, (tuple, list)) or len(nf) != 2
                or not all(isinstance(v, int) for v in nf) or not (0 <= nf[0] <= nf[1])):
            errs.append(f"n_foregrounds must be an integer pair 0 <= lo <= hi, got {nf!r}")
        _pair("scale_range", self.scale_range, 0.05, 2.0)
        if not (isinstance(self.min_visible_fraction, (int, float))
                and 0.0 < self.min_visible_fraction <= 1.0):
            errs.append(f"min_visible_fraction must lie in (0, 1], got {self.min_visible_fraction!r}")
        aps = self.aperture_levels
        if (not isinstance(aps, (tuple, list)) or not aps
                or not all(isinstance(a, (int, float)) and not isinstance(a, bool)
                           and math.isfinite(a) and a >= 0 for a in aps)):
            errs.append(f"aperture_levels must be non-negative numbers, got {aps!r}")
        modes = self.focus_modes
        if (not isinstance(modes, (tuple, list)) or not modes
                or not all(m in _MODE_TAGS for m in modes)):
            errs.append(f"focus_modes must be drawn from {sorted(_MODE_TAGS)}, got {modes!r}")
        _pair("background_disparity", self.background_disparity, DELTA, 1.0 - DELTA)
        _pair("foreground_disparity", self.foreground_disparity, DELTA, 1.0 - DELTA)
        if not errs:
            b, f = self.background_disparity, self.foreground_disparity
            if not (b[1] < f[0] or f[1] < b[0]):
                errs.append(
                    f"background_disparity {tuple(b)} overlaps foreground_disparity {tuple(f)}")
        if not (isinstance(self.gradient_range, (int, float)) and self.gradient_range >= 0.0):
            errs.append(f"gradient_range must be >= 0, got {self.gradient_range!r}")
        return errs

    @classmethod
    def from_json(cls, path: str) -> "SynthConfig":
        """Load a config file, raising with every violation enumerated."""
        with open(path) as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValueError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ValueError("config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        errs = [f"unknown config key {k!r}" for k in sorted(set(raw) - known)]
        kwargs = {k: v for k, v in raw.items() if k in known}
        for key in ("n_foregrounds", "scale_range", "aperture_levels",
                    "focus_modes", "background_disparity", "foreground_disparity"):
            if key in kwargs and isinstance(kwargs[key], list):
                kwargs[key] = tuple(kwargs[key])
        missing = [f for f in ("background_dir", "foreground_dir") if f not in kwargs]
        errs.extend(f"missing required key {k!r}" for k in missing)
        if not missing:
            cfg = cls(**kwargs)
            errs.extend(cfg.validate())
        if errs:
            raise ValueError("invalid config:\n  " + "\n  ".join(errs))
        return cfg


@dataclass
class SampleRecord:
    """Manifest entry for one generated scene."""

    id: str
    scene_index: int
    seed: int
    canvas: tuple[int, int]
    all_in_focus: str
    disparity: str
    focus_disparities: dict[str, float]
    bokeh: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "scene_index": self.scene_index,
            "seed": self.seed,
            "canvas": list(self.canvas),
            "all_in_focus": self.all_in_focus,
            "disparity": self.disparity,
            "focus_disparities": dict(self.focus_disparities),
            "bokeh": [dict(b) for b in self.bokeh],
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "SampleRecord":
        return cls(
            id=raw["id"],
            scene_index=raw["scene_index"],
            seed=raw["seed"],
            canvas=(raw["canvas"][0], raw["canvas"][1]),
            all_in_focus=raw["all_in_focus"],
            disparity=raw["disparity"],
            focus_disparities=dict(raw["focus_disparities"]),
            bokeh=[dict(b) for b in raw["bokeh"]],
        )


def _list_assets(directory: str) -> list[str]:
    if not os.path.isdir(directory):
        raise ValueError(f"asset directory does not exist: {directory}")
    names = sorted(n for n in os.listdir(directory) if n.lower().endswith(".png"))
    if not names:
        raise ValueError(f"asset directory holds no PNG files: {directory}")
    return [os.path.join(directory, n) for n in names]


def _resize(img: np.ndarray, new_w: int, new_h: int) -> np.ndarray:
    interp = cv2.INTER_AREA if new_w * new_h < img.shape[0] * img.shape[1] else cv2.INTER_LINEAR
    out = cv2.resize(img.astype(np.float32), (new_w, new_h), interpolation=interp)
    return out.astype(np.float64)


def _cover_crop(img: np.ndarray, width: int, height: int) -> np.ndarray:
    """Scale to cover the canvas (preserving aspect), then center-crop."""
    h, w = img.shape[:2]
    s = max(width / w, height / h)
    new_w = max(width, int(round(w * s)))
    new_h = max(height, int(round(h * s)))
    resized = _resize(img, new_w, new_h)
    x0 = (new_w - width) // 2
    y0 = (new_h - height) // 2
    return resized[y0:y0 + height, x0:x0 + width]


def _resize_rgba(rgba: np.ndarray, new_w: int, new_h: int) -> np.ndarray:
    """Resize straight-alpha RGBA through premultiplied color (no halo bleed)."""
    pre = rgba.copy()
    pre[:, :, :3] *= rgba[:, :, 3:4]
    out = _resize(pre, new_w, new_h)
    alpha = np.clip(out[:, :, 3], 0.0, 1.0)
    color = out[:, :, :3]
    safe = np.maximum(alpha, 1e-12)[:, :, None]
    color = np.clip(color / safe, 0.0, 1.0) * (alpha[:, :, None] > 0.0)
    return np.concatenate([color, alpha[:, :, None]], axis=2)


def scene_rng(seed: int, scene_index: int) -> np.random.Generator:
    """The per-scene random stream; depends only on (seed, scene_index)."""
    return np.random.default_rng([seed, scene_index])


def assemble_scene(config: SynthConfig, scene_index: int) -> LayeredScene:
    """Build one layered scene from the per-scene random stream.

    Draw order is fixed: background file, background d0, background
    gradients, foreground count, then per foreground (file, scale, x, y,
    d0, gx, gy).  Assets smaller than MIN_ASSET_SIDE on a side are rejected.
    """
    rng = scene_rng(config.seed, scene_index)
    cw, ch = config.canvas_width, config.canvas_height
    g = config.gradient_range

    bg_files = _list_assets(config.background_dir)
    fg_files = _list_assets(config.foreground_dir)

    bg_img = load_image(bg_files[int(rng.integers(len(bg_files)))])
    if min(bg_img.shape[:2]) < MIN_ASSET_SIDE:
        raise ValueError(
            f"background asset is {bg_img.shape[1]}x{bg_img.shape[0]}, "
            f"smaller than {MIN_ASSET_SIDE} px on a side")
    bg_rgba = np.concatenate(
        [_cover_crop(bg_img, cw, ch), np.ones((ch, cw, 1), np.float64)], axis=2)
    bg_d0 = float(rng.uniform(*config.background_disparity))
    bg_gx, bg_gy = (float(v) for v in rng.uniform(-g, g, 2))
    background = Layer(bg_rgba, 0, 0,
                       Plane(bg_d0, bg_gx, bg_gy, (cw - 1) / 2.0, (ch - 1) / 2.0))

    foregrounds: list[Layer] = []
    n_fg = int(rng.integers(config.n_foregrounds[0], config.n_foregrounds[1] + 1))
    keep = config.min_visible_fraction
    for _ in range(n_fg):
        rgba = load_rgba(fg_files[int(rng.integers(len(fg_files)))])
        ah, aw = rgba.shape[:2]
        if min(ah, aw) < MIN_ASSET_SIDE:
            raise ValueError(
                f"foreground asset is {aw}x{ah}, smaller than {MIN_ASSET_SIDE} px on a side")
        scale = float(rng.uniform(*config.scale_range))
        new_h = max(1, int(round(scale * ch)))
        new_w = max(1, int(round(new_h * aw / ah)))
        rgba = _resize_rgba(rgba, new_w, new_h)
        # placement keeps at least `keep` of each axis on the canvas
        x0 = int(round(rng.uniform(-(1.0 - keep) * new_w, cw - keep * new_w)))
        y0 = int(round(rng.uniform(-(1.0 - keep) * new_h, ch - keep * new_h)))
        d0 = float(rng.uniform(*config.foreground_disparity))
        gx, gy = (float(v) for v in rng.uniform(-g, g, 2))
        plane = Plane(d0, gx, gy, x0 + (new_w - 1) / 2.0, y0 + (new_h - 1) / 2.0)
        foregrounds.append(Layer(rgba, x0, y0, plane))

    return LayeredScene(cw, ch, background, foregrounds)


def generate_sample(scene: LayeredScene, config: SynthConfig, scene_index: int,
                    out_dir: str) -> SampleRecord:
    """Render and write one scene: sharp image, disparity, bokeh variants."""
    sample_id = f"scene_{scene_index:04d}"
    sample_dir = os.path.join(out_dir, sample_id)
    os.makedirs(sample_dir, exist_ok=True)

    sharp = all_in_focus(scene)
    disp = scene_disparity(scene)

    fg_mask = np.zeros(disp.shape, bool)
    for layer in scene.foregrounds:
        fg_mask |= _place(layer, scene.width, scene.height)[:, :, 3] > 0.5

    focus: dict[str, float] = {}
    for mode in config.focus_modes:
        region = fg_mask if mode == "foreground_mean" else ~fg_mask
        focus[mode] = focus_from_region(disp, region)

    aif_rel = f"{sample_id}/aif.png"
    disp_rel = f"{sample_id}/disparity.png"
    save_image(sharp, os.path.join(out_dir, aif_rel))
    save_disparity(disp, os.path.join(out_dir, disp_rel))

    render_cfg = RenderConfig()
    bokeh: list[dict] = []
    for aperture in config.aperture_levels:
        for mode in config.focus_modes:
            lens = LensParams(focus[mode], float(aperture))
            img = render(scene, lens, render_cfg)
            rel = f"{sample_id}/bokeh_a{aperture:g}_{_MODE_TAGS[mode]}.png"
            save_image(img, os.path.join(out_dir, rel))
            bokeh.append({
                "aperture": float(aperture),
                "focus_mode": mode,
                "focus_disparity": focus[mode],
                "path": rel,
            })

    return SampleRecord(
        id=sample_id,
        scene_index=scene_index,
        seed=config.seed,
        canvas=(scene.width, scene.height),
        all_in_focus=aif_rel,
        disparity=disp_rel,
        focus_disparities=focus,
        bokeh=bokeh,
    )


def generate_dataset(config: SynthConfig, out_dir: str
                     ) -> tuple[list[SampleRecord], list[dict]]:
    """Generate all scenes, skipping and logging per-scene failures.

    Returns (records, skipped); writes ``manifest.json`` under out_dir.
    """
    errs = config.validate()
    if errs:
        raise ValueError("invalid config:\n  " + "\n  ".join(errs))
    os.makedirs(out_dir, exist_ok=True)
    records: list[SampleRecord] = []
    skipped: list[dict] = []
    for idx in range(config.n_scenes):
        try:
            scene = assemble_scene(config, idx)
            records.append(generate_sample(scene, config, idx, out_dir))
        except (ValueError, OSError, cv2.error) as exc:
            log.warning("skipping scene %d: %s", idx, exc)
            skipped.append({"scene_index": idx, "reason": str(exc)})
    manifest = {
        "seed": config.seed,
        "canvas": [config.canvas_width, config.canvas_height],
        "records": [r.to_dict() for r in records],
        "skipped": skipped,
    }
    payload = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    _atomic_write_bytes(os.path.join(out_dir, "manifest.json"), payload.encode())
    return records, skipped


def load_manifest(path: str) -> list[SampleRecord]:
    """Read a manifest and check every referenced file exists."""
    with open(path) as fh:
        raw = json.load(fh)
    records = [SampleRecord.from_dict(r) for r in raw["records"]]
    root = os.path.dirname(os.path.abspath(path))
    missing = []
    for rec in records:
        for rel in [rec.all_in_focus, rec.disparity] + [b["path"] for b in rec.bokeh]:
            if not os.path.isfile(os.path.join(root, rel)):
                missing.append(rel)
    if missing:
        raise ValueError(f"manifest references missing files: {', '.join(missing)}")
    return records
