"""Image and disparity I/O.

All in-memory rasters are float64 in linear light.  Color images have shape
(H, W, 3) with values in [0, 1]; disparity maps have shape (H, W) with values
clamped to [DELTA, 1 - DELTA].  PNG files default to the sRGB transfer curve;
disparity rasters are always linear codes.
"""

from __future__ import annotations

import os
import tempfile

import cv2
import numpy as np

# Disparity clamp margin.  Keeps reciprocal depth strictly inside (0, 1) so
# occlusion sampling intervals (d_s, 1) are never empty.
DELTA = 1e-4

_ENC_THRESH = 0.0031308
_DEC_THRESH = 0.04045


def srgb_decode(v: np.ndarray | float) -> np.ndarray:
    """Map sRGB-encoded values in [0, 1] to linear light."""
    v = np.asarray(v, dtype=np.float64)
    return np.where(v <= _DEC_THRESH, v / 12.92, ((v + 0.055) / 1.055) ** 2.4)


def srgb_encode(v: np.ndarray | float) -> np.ndarray:
    """Map linear-light values to the sRGB curve, clamping into [0, 1]."""
    v = np.clip(np.asarray(v, dtype=np.float64), 0.0, 1.0)
    return np.where(v <= _ENC_THRESH, v * 12.92, 1.055 * v ** (1.0 / 2.4) - 0.055)


def _atomic_write_bytes(path: str, payload: bytes) -> None:
    """Write payload to path via a same-directory temp file and atomic rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".part")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _decode_png(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        buf = np.frombuffer(fh.read(), np.uint8)
    raw = cv2.imdecode(buf, cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise ValueError(f"cannot decode image file: {path}")
    return raw


def _codes_to_unit(raw: np.ndarray, path: str) -> np.ndarray:
    if raw.dtype == np.uint8:
        return raw.astype(np.float64) / 255.0
    if raw.dtype == np.uint16:
        return raw.astype(np.float64) / 65535.0
    raise ValueError(f"unsupported sample type {raw.dtype} in {path}")


def load_image(path: str, transfer: str = "srgb") -> np.ndarray:
    """Load an 8- or 16-bit PNG as a linear (H, W, 3) float64 array.

    Grayscale files are replicated to three channels.  ``transfer`` selects
    how stored codes are interpreted: "srgb" (default) or "linear".
    """
    raw = _decode_png(path)
    unit = _codes_to_unit(raw, path)
    if unit.ndim == 2:
        unit = np.repeat(unit[:, :, None], 3, axis=2)
    elif unit.ndim == 3 and unit.shape[2] == 3:
        unit = unit[:, :, ::-1]  # BGR storage order
    else:
        nch = unit.shape[2] if unit.ndim == 3 else unit.ndim
        raise ValueError(f"expected 1 or 3 channels, got {nch} in {path}")
    if transfer == "srgb":
        return srgb_decode(unit)
    if transfer == "linear":
        return np.ascontiguousarray(unit)
    raise ValueError(f"unknown transfer {transfer!r}")


def load_rgba(path: str, transfer: str = "srgb") -> np.ndarray:
    """Load a 4-channel PNG as straight-alpha linear (H, W, 4) float64.

    Color channels go through the transfer curve; alpha is linear codes.
    """
    raw = _decode_png(path)
    if raw.ndim != 3 or raw.shape[2] != 4:
        raise ValueError(f"expected a 4-channel image in {path}")
    unit = _codes_to_unit(raw, path)
    rgb = unit[:, :, 2::-1]
    if transfer == "srgb":
        rgb = srgb_decode(rgb)
    elif transfer != "linear":
        raise ValueError(f"unknown transfer {transfer!r}")
    out = np.empty(unit.shape, np.float64)
    out[:, :, :3] = rgb
    out[:, :, 3] = unit[:, :, 3]
    return out


def _quantize(unit: np.ndarray, bit_depth: int) -> np.ndarray:
    if bit_depth == 8:
        maxcode, dtype = 255, np.uint8
    elif bit_depth == 16:
        maxcode, dtype = 65535, np.uint16
    else:
        raise ValueError(f"bit_depth must be 8 or 16, got {bit_depth}")
    # round half up so 0.5 in linear 8-bit lands on code 128, not 127
    codes = np.floor(np.clip(unit, 0.0, 1.0) * maxcode + 0.5)
    return codes.astype(dtype)


def save_image(img: np.ndarray, path: str, bit_depth: int = 16,
               transfer: str = "srgb") -> None:
    """Encode a linear (H, W, 3) array to PNG, clamping into [0, 1]."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got shape {img.shape}")
    if not np.isfinite(img).all():
        raise ValueError("image contains non-finite values")
    unit = np.clip(img, 0.0, 1.0)
    if transfer == "srgb":
        unit = srgb_encode(unit)
    elif transfer != "linear":
        raise ValueError(f"unknown transfer {transfer!r}")
    codes = _quantize(unit, bit_depth)
    ok, buf = cv2.imencode(".png", np.ascontiguousarray(codes[:, :, ::-1]))
    if not ok:
        raise ValueError(f"PNG encoding failed for {path}")
    _atomic_write_bytes(path, buf.tobytes())


def save_disparity(disparity: np.ndarray, path: str) -> None:
    """Write a disparity map as a 16-bit single-channel PNG."""
    disparity = _check_disparity_values(np.asarray(disparity, np.float64), path)
    codes = _quantize(disparity, 16)
    ok, buf = cv2.imencode(".png", codes)
    if not ok:
        raise ValueError(f"PNG encoding failed for {path}")
    _atomic_write_bytes(path, buf.tobytes())


def _check_disparity_values(d: np.ndarray, path: str) -> np.ndarray:
    if d.ndim != 2:
        raise ValueError(f"expected single-channel disparity, got shape {d.shape} ({path})")
    if d.size == 0:
        raise ValueError(f"disparity map is empty ({path})")
    if not np.isfinite(d).all():
        raise ValueError(f"disparity contains non-finite values ({path})")
    return d


def _read_pfm(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    # header: magic, "W H", scale; each token separated by whitespace
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4 and pos < len(data):
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if pos > start:
            tokens.append(data[start:pos])
    if len(tokens) < 4:
        raise ValueError(f"truncated PFM header in {path}")
    magic = tokens[0]
    if magic == b"PF":
        raise ValueError(f"expected 1-channel PFM (Pf), got color PF in {path}")
    if magic != b"Pf":
        raise ValueError(f"not a PFM file: {path}")
    width, height = int(tokens[1]), int(tokens[2])
    scale = float(tokens[3])
    endian = "<" if scale < 0 else ">"
    pos += 1  # single whitespace byte after the scale line
    count = width * height
    need = count * 4
    raster = data[pos : pos + need]
    if len(raster) != need:
        raise ValueError(f"truncated PFM raster in {path}")
    values = np.frombuffer(raster, dtype=endian + "f4").astype(np.float64)
    grid = values.reshape(height, width)
    return grid[::-1].copy()  # PFM rows are stored bottom to top


def load_disparity(path: str) -> np.ndarray:
    """Load a disparity map from 8/16-bit PNG or 1-channel PFM.

    PNG codes map linearly to [0, 1]; all values are clamped to
    [DELTA, 1 - DELTA].  Non-finite PFM samples raise ValueError.
    """
    if path.lower().endswith(".pfm"):
        d = _read_pfm(path)
        d = _check_disparity_values(d, path)
    else:
        raw = _decode_png(path)
        if raw.ndim != 2:
            raise ValueError(
                f"disparity PNG must be single-channel, got shape {raw.shape} in {path}")
        d = _codes_to_unit(raw, path)
    return np.clip(d, DELTA, 1.0 - DELTA)


def ensure_image(img: np.ndarray, name: str = "image") -> np.ndarray:
    """Validate an (H, W, 3) finite non-negative array, returning float64."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"{name} must have shape (H, W, 3), got {img.shape}")
    if not np.isfinite(img).all():
        raise ValueError(f"{name} contains non-finite values")
    if img.min() < 0.0:
        raise ValueError(f"{name} contains negative radiance")
    return img


def ensure_disparity(d: np.ndarray, name: str = "disparity") -> np.ndarray:
    """Validate an (H, W) disparity map inside [DELTA, 1 - DELTA]."""
    d = np.asarray(d, dtype=np.float64)
    if d.ndim != 2:
        raise ValueError(f"{name} must have shape (H, W), got {d.shape}")
    if not np.isfinite(d).all():
        raise ValueError(f"{name} contains non-finite values")
    if d.min() < DELTA or d.max() > 1.0 - DELTA:
        raise ValueError(
            f"{name} must lie in [{DELTA}, {1.0 - DELTA}], "
            f"got range [{d.min()}, {d.max()}]")
    return d


def ensure_same_shape(a: np.ndarray, b: np.ndarray,
                      names: tuple[str, str] = ("image", "disparity")) -> None:
    """Spatial dimensions (first two axes) of the two arrays must agree."""
    if a.shape[:2] != b.shape[:2]:
        raise ValueError(
            f"{names[0]} {a.shape[:2]} and {names[1]} {b.shape[:2]} dimensions differ")
