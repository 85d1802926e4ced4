"""Shared fixtures: procedural image assets and a small prebuilt dataset."""

from __future__ import annotations

import os

import cv2
import numpy as np
import pytest
from hypothesis import settings

from lensblur.imgio import save_image
from lensblur.synth import SynthConfig, generate_dataset

# render-heavy property tests must not trip the wall-clock deadline
settings.register_profile("suite", deadline=None)
settings.load_profile("suite")


def _texture(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """Smooth procedural photo stand-in: ramps plus low-frequency waves."""
    y, x = np.mgrid[0:h, 0:w].astype(np.float64)
    img = np.empty((h, w, 3))
    for c in range(3):
        fx, fy = rng.uniform(1.0, 4.0, 2)
        px, py = rng.uniform(0.0, 2 * np.pi, 2)
        img[:, :, c] = (0.5 + 0.25 * np.sin(2 * np.pi * fx * x / w + px)
                        + 0.2 * np.cos(2 * np.pi * fy * y / h + py)
                        + 0.05 * rng.standard_normal((h, w)))
    return np.clip(img, 0.02, 0.98)


def _cutout(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """Soft-edged elliptical RGBA cutout with straight alpha, uint8 codes."""
    y, x = np.mgrid[0:h, 0:w].astype(np.float64)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ry, rx = h * 0.38, w * 0.38
    d = np.sqrt(((y - cy) / ry) ** 2 + ((x - cx) / rx) ** 2)
    alpha = np.clip((1.15 - d) / 0.3, 0.0, 1.0)
    rgb = np.clip(_texture(rng, h, w) * rng.uniform(0.6, 1.0, 3), 0.0, 1.0)
    codes = np.empty((h, w, 4), np.uint8)
    codes[:, :, 2::-1] = np.floor(rgb * 255 + 0.5).astype(np.uint8)  # BGR
    codes[:, :, 3] = np.floor(alpha * 255 + 0.5).astype(np.uint8)
    return codes


@pytest.fixture(scope="session")
def asset_dirs(tmp_path_factory) -> tuple[str, str]:
    """(background_dir, foreground_dir) of deterministic procedural PNGs."""
    root = tmp_path_factory.mktemp("assets")
    bg_dir, fg_dir = root / "bg", root / "fg"
    bg_dir.mkdir()
    fg_dir.mkdir()
    rng = np.random.default_rng(20240817)
    for i, (h, w) in enumerate([(160, 200), (96, 128), (120, 120)]):
        save_image(_texture(rng, h, w), str(bg_dir / f"bg_{i}.png"),
                   bit_depth=8 if i == 0 else 16)
    for i, (h, w) in enumerate([(48, 48), (56, 64), (72, 40)]):
        cv2.imwrite(str(fg_dir / f"fg_{i}.png"), _cutout(rng, h, w))
    return str(bg_dir), str(fg_dir)


@pytest.fixture(scope="session")
def tiny_dataset(asset_dirs, tmp_path_factory) -> str:
    """Path to the manifest of a small 96x96, single-aperture dataset."""
    bg_dir, fg_dir = asset_dirs
    out = tmp_path_factory.mktemp("tinyds")
    config = SynthConfig(
        background_dir=bg_dir, foreground_dir=fg_dir, seed=11, n_scenes=3,
        canvas_width=96, canvas_height=96, n_foregrounds=(1, 1),
        aperture_levels=(4.0,), focus_modes=("background_mean",))
    records, skipped = generate_dataset(config, str(out))
    assert len(records) == 3 and not skipped
    return os.path.join(str(out), "manifest.json")


@pytest.fixture(scope="session")
def warm_kernels() -> None:
    """Compile the numba kernels once so timed tests measure work, not JIT."""
    from lensblur.lens import LensParams
    from lensblur.render import render_from_disparity, splat_layer

    rng = np.random.default_rng(0)
    splat_layer(rng.random((12, 12, 4)), np.full((12, 12), 2.0))
    render_from_disparity(rng.random((12, 12, 3)), np.full((12, 12), 0.3),
                          LensParams(0.7, 6.0))
