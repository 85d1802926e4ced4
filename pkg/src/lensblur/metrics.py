"""Image comparison metrics and disparity-robustness evaluation.

All metrics operate on float64 arrays in [0, 1].  PSNR and SSIM follow the
usual definitions (SSIM on Rec.709 luma with an 11x11 Gaussian window,
sigma 1.5, valid-window mean).  The edge loss compares multi-scale Sobel
gradients, weighted by the stronger of the reference gradients so that
error along true edges dominates flat regions.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass
from math import comb

import numpy as np
from scipy import ndimage

from .imgio import _atomic_write_bytes, ensure_disparity, ensure_image, ensure_same_shape
from .lens import LensParams
from .render import RenderConfig, render_from_disparity
from .synth import SampleRecord, load_manifest

PSNR_CAP_DB = 99.0
PSNR_CAP_MSE = 1e-10

_LUMA_709 = np.array([0.2126, 0.7152, 0.0722])

_SSIM_WIN = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03

EDGE_SCALES = (1, 2, 3)


def mse(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, np.float64)
    b = np.asarray(b, np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shapes {a.shape} and {b.shape} differ")
    return float(np.mean((a - b) ** 2))


def psnr(pred: np.ndarray, ref: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for unit-range images.

    Near-identical inputs (MSE below PSNR_CAP_MSE) return the PSNR_CAP_DB
    sentinel instead of diverging.
    """
    err = mse(pred, ref)
    if err < PSNR_CAP_MSE:
        return PSNR_CAP_DB
    return 10.0 * math.log10(1.0 / err)


def luma(image: np.ndarray) -> np.ndarray:
    """Rec.709 luma of a linear RGB image."""
    ensure_image(image, name="image")
    return image @ _LUMA_709


def _gaussian_taps(sigma: float, radius: int) -> np.ndarray:
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-0.5 * (x / sigma) ** 2)
    return w / w.sum()


def _windowed(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    y = ndimage.correlate1d(x, taps, axis=0, mode="reflect")
    return ndimage.correlate1d(y, taps, axis=1, mode="reflect")


def ssim(pred: np.ndarray, ref: np.ndarray) -> float:
    """Mean structural similarity over valid 11x11 windows.

    RGB inputs are reduced to Rec.709 luma first; 2-D inputs are used
    directly.  Windowed moments use Gaussian weights (sigma 1.5) and
    population covariance; the mean skips windows that overhang the border.
    """
    pred = np.asarray(pred, np.float64)
    ref = np.asarray(ref, np.float64)
    ensure_same_shape(pred, ref, names=("pred", "ref"))
    if pred.ndim == 3:
        x, y = luma(pred), luma(ref)
    elif pred.ndim == 2:
        x, y = pred, ref
    else:
        raise ValueError(f"ssim expects (H, W) or (H, W, 3) arrays, got {pred.shape}")
    pad = (_SSIM_WIN - 1) // 2
    if min(x.shape) < _SSIM_WIN:
        raise ValueError(f"ssim needs images at least {_SSIM_WIN} px on a side, got {x.shape}")
    taps = _gaussian_taps(_SSIM_SIGMA, pad)

    ux = _windowed(x, taps)
    uy = _windowed(y, taps)
    vx = _windowed(x * x, taps) - ux * ux
    vy = _windowed(y * y, taps) - uy * uy
    vxy = _windowed(x * y, taps) - ux * uy

    c1 = _SSIM_K1 ** 2
    c2 = _SSIM_K2 ** 2
    s = ((2.0 * ux * uy + c1) * (2.0 * vxy + c2)
         / ((ux * ux + uy * uy + c1) * (vx + vy + c2)))
    return float(s[pad:-pad, pad:-pad].mean())


def _pascal(n: int) -> np.ndarray:
    return np.array([comb(n - 1, k) for k in range(n)], dtype=np.float64)


def _sobel_taps(scale: int) -> tuple[np.ndarray, np.ndarray]:
    """Smoothing and differencing taps of the size-(2*scale+1) Sobel pair."""
    size = 2 * scale + 1
    smooth = _pascal(size)
    deriv = np.convolve(_pascal(size - 2), [1.0, 0.0, -1.0])
    return smooth, deriv


def _gradients(image: np.ndarray, scale: int) -> tuple[np.ndarray, np.ndarray]:
    smooth, deriv = _sobel_taps(scale)
    gx = ndimage.correlate1d(image, smooth, axis=0, mode="reflect")
    gx = ndimage.correlate1d(gx, deriv, axis=1, mode="reflect")
    gy = ndimage.correlate1d(image, deriv, axis=0, mode="reflect")
    gy = ndimage.correlate1d(gy, smooth, axis=1, mode="reflect")
    return gx, gy


class EdgeReference:
    """Precomputed reference gradients for repeated edge-loss evaluation."""

    def __init__(self, gt: np.ndarray, aif: np.ndarray):
        ensure_image(gt, name="gt")
        ensure_image(aif, name="aif")
        ensure_same_shape(gt, aif, names=("gt", "aif"))
        self.shape = gt.shape
        self._per_scale = []
        for scale in EDGE_SCALES:
            gx_gt, gy_gt = _gradients(gt, scale)
            gx_af, gy_af = _gradients(aif, scale)
            wx = np.maximum(np.abs(gx_gt), np.abs(gx_af))
            wy = np.maximum(np.abs(gy_gt), np.abs(gy_af))
            self._per_scale.append((scale, gx_gt, gy_gt, wx, wy))

    def loss(self, pred: np.ndarray) -> float:
        ensure_image(pred, name="pred")
        if pred.shape != self.shape:
            raise ValueError(f"pred shape {pred.shape} does not match reference {self.shape}")
        total = 0.0
        for scale, gx_gt, gy_gt, wx, wy in self._per_scale:
            gx, gy = _gradients(pred, scale)
            term = 0.5 * (np.mean(np.abs(gx - gx_gt) * wx) + np.mean(np.abs(gy - gy_gt) * wy))
            total += term / float(scale * scale)
        return float(total)


def edge_loss(pred: np.ndarray, gt: np.ndarray, aif: np.ndarray) -> float:
    """Gradient-weighted multi-scale edge error; exactly zero when pred == gt."""
    return EdgeReference(gt, aif).loss(pred)


def exposure_align(src: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Scale src so its mean matches ref; near-black src is an error."""
    src = np.asarray(src, np.float64)
    ref = np.asarray(ref, np.float64)
    src_mean = float(src.mean())
    if src_mean <= 1e-8:
        raise ValueError(f"cannot exposure-align a near-black source (mean {src_mean:g})")
    return src * (float(ref.mean()) / src_mean)


@dataclass(frozen=True)
class DegradationSpec:
    """Morphological disparity corruption: kind in {erode, dilate}, disk radius."""

    kind: str
    radius: int

    def __post_init__(self):
        if self.kind not in ("erode", "dilate"):
            raise ValueError(f"kind must be 'erode' or 'dilate', got {self.kind!r}")
        if not isinstance(self.radius, (int, np.integer)) or self.radius < 0:
            raise ValueError(f"radius must be a non-negative integer, got {self.radius!r}")


def _disk_footprint(radius: int) -> np.ndarray:
    yy, xx = np.mgrid[-radius:radius + 1, -radius:radius + 1]
    return (yy * yy + xx * xx) <= radius * radius


def degrade_disparity(disparity: np.ndarray, spec: DegradationSpec) -> np.ndarray:
    """Grey-morphology erosion or dilation of a disparity map over a disk."""
    ensure_disparity(disparity, name="disparity")
    if spec.radius == 0:
        return disparity.copy()
    fp = _disk_footprint(spec.radius)
    if spec.kind == "erode":
        return ndimage.grey_erosion(disparity, footprint=fp, mode="reflect")
    return ndimage.grey_dilation(disparity, footprint=fp, mode="reflect")


METRIC_NAMES = ("mse", "psnr_db", "ssim", "edge_loss")


@dataclass
class MetricReport:
    """Per-item metric rows plus quartile aggregates."""

    rows: list[dict]

    def aggregate(self) -> dict:
        agg: dict[str, dict] = {}
        for name in METRIC_NAMES:
            vals = [r[name] for r in self.rows if r.get(name) is not None]
            if not vals:
                continue
            arr = np.array(vals, np.float64)
            agg[name] = {
                "count": len(vals),
                "mean": float(arr.mean()),
                "median": float(np.percentile(arr, 50)),
                "q1": float(np.percentile(arr, 25)),
                "q3": float(np.percentile(arr, 75)),
            }
        return agg

    def to_dict(self) -> dict:
        return {
            "rows": sorted(self.rows, key=lambda r: r["id"]),
            "aggregate": self.aggregate(),
        }


def evaluate_pairs(pairs: list[tuple[str, np.ndarray, np.ndarray, np.ndarray | None]],
                   align_exposure: bool = False) -> MetricReport:
    """Score (id, pred, ref, aif-or-None) tuples; edge loss needs the aif."""
    rows = []
    for name, pred, ref, aif in pairs:
        ensure_image(pred, name=f"{name} pred")
        ensure_image(ref, name=f"{name} ref")
        ensure_same_shape(pred, ref, names=(f"{name} pred", f"{name} ref"))
        if align_exposure:
            pred = exposure_align(pred, ref)
        row = {
            "id": name,
            "mse": mse(pred, ref),
            "psnr_db": psnr(pred, ref),
            "ssim": ssim(pred, ref),
            "edge_loss": None if aif is None else edge_loss(pred, ref, aif),
        }
        rows.append(row)
    return MetricReport(rows)


@dataclass(frozen=True)
class SweepRow:
    """One aggregate line of a robustness sweep."""

    kind: str
    radius: int
    metric: str
    median: float
    q1: float
    q3: float


SWEEP_KINDS = ("erode", "dilate")
SWEEP_METRICS = ("psnr_db", "ssim", "edge_loss")


def _select_bokeh(record: SampleRecord, aperture: float | None,
                  focus_mode: str | None) -> dict:
    for entry in record.bokeh:
        if aperture is not None and abs(entry["aperture"] - aperture) > 1e-9:
            continue
        if focus_mode is not None and entry["focus_mode"] != focus_mode:
            continue
        return entry
    raise ValueError(
        f"record {record.id} has no bokeh entry for aperture={aperture} "
        f"focus_mode={focus_mode}")


def robustness_sweep(manifest_path: str, radii: list[int],
                     aperture: float | None = None,
                     focus_mode: str | None = None,
                     config: RenderConfig | None = None,
                     out_csv: str | None = None) -> list[SweepRow]:
    """Re-render every manifest scene from degraded disparity and aggregate.

    For each record the clean-disparity render is the reference; erosion and
    dilation at each radius produce predictions scored against it (radius 0
    scores the reference against itself).  Rows hold the median and quartiles
    across records, ordered by kind, radius, then metric.
    """
    from .imgio import load_disparity, load_image

    records = load_manifest(manifest_path)
    if not records:
        raise ValueError(f"manifest {manifest_path} holds no records")
    radii = sorted(set(int(r) for r in radii))
    if any(r < 0 for r in radii):
        raise ValueError(f"radii must be non-negative, got {radii}")
    cfg = config if config is not None else RenderConfig()
    root = os.path.dirname(os.path.abspath(manifest_path))

    values: dict[tuple[str, int, str], list[float]] = {
        (k, r, m): [] for k in SWEEP_KINDS for r in radii for m in SWEEP_METRICS}
    for record in records:
        aif = load_image(os.path.join(root, record.all_in_focus))
        disp = load_disparity(os.path.join(root, record.disparity))
        entry = _select_bokeh(record, aperture, focus_mode)
        lens = LensParams(entry["focus_disparity"], entry["aperture"])
        ref = render_from_disparity(aif, disp, lens, cfg)
        edges = EdgeReference(ref, aif)
        for kind in SWEEP_KINDS:
            for radius in radii:
                if radius == 0:
                    pred = ref
                else:
                    degraded = degrade_disparity(disp, DegradationSpec(kind, radius))
                    pred = render_from_disparity(aif, degraded, lens, cfg)
                values[(kind, radius, "psnr_db")].append(psnr(pred, ref))
                values[(kind, radius, "ssim")].append(ssim(pred, ref))
                values[(kind, radius, "edge_loss")].append(edges.loss(pred))

    rows = []
    for kind in SWEEP_KINDS:
        for radius in radii:
            for metric in SWEEP_METRICS:
                arr = np.array(values[(kind, radius, metric)], np.float64)
                rows.append(SweepRow(kind, radius, metric,
                                     float(np.percentile(arr, 50)),
                                     float(np.percentile(arr, 25)),
                                     float(np.percentile(arr, 75))))
    if out_csv is not None:
        write_sweep_csv(rows, out_csv)
    return rows


def write_sweep_csv(rows: list[SweepRow], path: str) -> None:
    """Write sweep rows as CSV with header kind,radius,metric,median,q1,q3."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["kind", "radius", "metric", "median", "q1", "q3"])
    for row in rows:
        writer.writerow([row.kind, row.radius, row.metric,
                         format(row.median, ".9g"), format(row.q1, ".9g"),
                         format(row.q3, ".9g")])
    _atomic_write_bytes(path, buf.getvalue().encode())
