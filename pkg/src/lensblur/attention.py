"""Reference attention ops constrained by thin-lens geometry.

The pipeline scores token pairs, normalizes per key column so each key
distributes a unit budget of radiance, masks pairs by whether the query pixel
falls inside the key's circle of confusion, and weights each pair by the
expected fraction of unoccluded straight paths from source to receiver.

Shapes: similarity matrices are (n, n) indexed [query][key]; positions are
(x, y) in latent-grid units, x along columns of the disparity field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .imgio import DELTA
from .lens import LensParams, SoftEdgeSchedule, coc_radius, soft_edge

DENOM_FLOOR = 1e-30

_GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


@dataclass
class AttentionBatch:
    """One attention instance: queries, keys, and values for n tokens."""

    q: np.ndarray
    k: np.ndarray
    v: np.ndarray

    def __post_init__(self) -> None:
        self.q = np.asarray(self.q, dtype=np.float64)
        self.k = np.asarray(self.k, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        if self.q.ndim != 2 or self.k.ndim != 2 or self.v.ndim != 2:
            raise ValueError("q, k, v must be 2-D arrays")
        if self.q.shape != self.k.shape:
            raise ValueError(f"q {self.q.shape} and k {self.k.shape} shapes differ")
        if self.v.shape[0] != self.q.shape[0]:
            raise ValueError(
                f"v has {self.v.shape[0]} rows, expected {self.q.shape[0]}")
        for name, arr in (("q", self.q), ("k", self.k), ("v", self.v)):
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} contains non-finite values")

    @property
    def n(self) -> int:
        return self.q.shape[0]

    @property
    def d_key(self) -> int:
        return self.q.shape[1]

    @property
    def d_val(self) -> int:
        return self.v.shape[1]


@dataclass
class GeometryContext:
    """Token geometry: positions, per-token disparity, and the dense field.

    ``pixel_scale`` converts latent-grid distance to full-resolution pixels,
    the unit in which CoC radii are measured.
    """

    positions: np.ndarray
    disparities: np.ndarray
    disparity_field: np.ndarray
    pixel_scale: float = 8.0

    def __post_init__(self) -> None:
        self.positions = np.asarray(self.positions, dtype=np.float64)
        self.disparities = np.asarray(self.disparities, dtype=np.float64)
        self.disparity_field = np.ascontiguousarray(self.disparity_field, dtype=np.float64)
        if self.positions.ndim != 2 or self.positions.shape[1] != 2:
            raise ValueError(f"positions must be (n, 2), got {self.positions.shape}")
        if self.disparities.shape != (self.positions.shape[0],):
            raise ValueError("disparities must be one scalar per position")
        if self.disparity_field.ndim != 2:
            raise ValueError("disparity_field must be 2-D")
        h, w = self.disparity_field.shape
        x, y = self.positions[:, 0], self.positions[:, 1]
        if x.min() < 0 or y.min() < 0 or x.max() > w - 1 or y.max() > h - 1:
            raise ValueError("positions fall outside the disparity field")
        for name, arr in (("disparities", self.disparities),
                          ("disparity_field", self.disparity_field)):
            if arr.size and (arr.min() < DELTA or arr.max() > 1.0 - DELTA):
                raise ValueError(f"{name} must lie in [{DELTA}, {1.0 - DELTA}]")
        if not (self.pixel_scale > 0.0):
            raise ValueError(f"pixel_scale must be positive, got {self.pixel_scale}")

    @property
    def n(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True)
class OcclusionConfig:
    """Sampling density for the visibility estimate.

    ``n_depth_samples`` midpoint samples are taken along the disparity
    interval (d_s, 1); ``n_super_samples`` jittered source positions with
    offsets of norm <= epsilon_s average over sub-pixel source extent.
    """

    n_depth_samples: int = 8
    n_super_samples: int = 4
    epsilon_s: float = 0.5

    def __post_init__(self) -> None:
        if self.n_depth_samples < 1:
            raise ValueError("n_depth_samples must be >= 1")
        if self.n_super_samples < 1:
            raise ValueError("n_super_samples must be >= 1")
        if not (self.epsilon_s >= 0.0):
            raise ValueError("epsilon_s must be >= 0")

    def jitter_offsets(self) -> np.ndarray:
        """Deterministic low-discrepancy offsets on a golden-angle spiral."""
        j = np.arange(self.n_super_samples, dtype=np.float64)
        radius = self.epsilon_s * np.sqrt((j + 0.5) / self.n_super_samples)
        theta = j * _GOLDEN_ANGLE
        return np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=1)


def sample_disparity_field(field: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Bilinear sample of a 2-D field at fractional (x, y) points.

    Coordinates are clamped to the field borders, so out-of-range points read
    the nearest edge value.
    """
    field = np.asarray(field, dtype=np.float64)
    points = np.asarray(points, dtype=np.float64)
    h, w = field.shape
    x = np.clip(points[..., 0], 0.0, w - 1.0)
    y = np.clip(points[..., 1], 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.intp)
    y0 = np.floor(y).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    top = field[y0, x0] * (1.0 - fx) + field[y0, x1] * fx
    bot = field[y1, x0] * (1.0 - fx) + field[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def similarity(batch: AttentionBatch) -> np.ndarray:
    """Scaled dot-product scores Q K^T / sqrt(d_key), indexed [query][key]."""
    return (batch.q @ batch.k.T) / math.sqrt(batch.d_key)


def softmax_key(a: np.ndarray) -> np.ndarray:
    """Row-stochastic softmax: each query's weights over keys sum to 1."""
    a = np.asarray(a, dtype=np.float64)
    m = a.max(axis=1, keepdims=True)
    e = np.exp(a - m)
    return e / e.sum(axis=1, keepdims=True)


def softmax_query(a: np.ndarray) -> np.ndarray:
    """Column-stochastic softmax: each key's weights over queries sum to 1.

    Normalizing over queries makes every key hand out exactly one unit of
    weight, which is what conserves radiance when keys act as light sources.
    """
    a = np.asarray(a, dtype=np.float64)
    m = a.max(axis=0, keepdims=True)
    e = np.exp(a - m)
    return e / e.sum(axis=0, keepdims=True)


def coc_mask(geom: GeometryContext, lens: LensParams,
             schedule: SoftEdgeSchedule | None = None) -> np.ndarray:
    """Soft gate: does query q sit inside key k's circle of confusion?

    Entry [q][k] is soft_edge(r_c(k) - pixel_scale * ||P_q - P_k||), so a key
    can only reach queries within its blur disk.  At the default sharpness
    the gate is a hard step with 0.5 exactly on the rim.
    """
    if schedule is None:
        schedule = SoftEdgeSchedule()
    rc = coc_radius(geom.disparities, lens)
    diff = geom.positions[:, None, :] - geom.positions[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2))
    signed = np.asarray(rc)[None, :] - geom.pixel_scale * dist
    return np.asarray(soft_edge(signed, schedule))


def masked_softmax_query(a: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Column-stochastic softmax with a multiplicative per-entry gate.

    Entry [q][k] is exp(a_qk) * mask_qk / sum_s exp(a_sk) * mask_sk.  The gate
    sits in both numerator and denominator, so admitted entries of a column
    still sum to exactly 1 and no radiance leaks through the mask.  Columns
    whose gated denominator falls below DENOM_FLOOR come back all zero rather
    than NaN.  Stabilized by subtracting each column's max over the gate's
    support before exponentiation.
    """
    a = np.asarray(a, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if a.shape != mask.shape or a.ndim != 2:
        raise ValueError(f"scores {a.shape} and mask {mask.shape} must be equal 2-D shapes")
    support = mask > 0.0
    with np.errstate(invalid="ignore"):
        m = np.where(support, a, -np.inf).max(axis=0, keepdims=True)
    msafe = np.where(np.isfinite(m), m, 0.0)
    arg = np.where(support, a - msafe, -np.inf)
    e = np.exp(arg) * mask
    denom = e.sum(axis=0, keepdims=True)
    alive = denom >= DENOM_FLOOR
    return np.where(alive, e / np.where(alive, denom, 1.0), 0.0)


def sample_point(p_s: np.ndarray, p_q: np.ndarray, d_s: float,
                 d_tilde: np.ndarray | float) -> np.ndarray:
    """Point on the source-to-receiver path at probe disparity d_tilde.

    The path from source P_s (disparity d_s) to receiver P_q is parameterized
    by disparity: the projected position at disparity d_tilde in [d_s, 1] is

        ((1 - d_tilde) * d_s) / ((1 - d_s) * d_tilde) * (P_s - P_q) + P_q

    which lands on P_s at d_tilde = d_s and on P_q as d_tilde approaches 1.
    """
    p_s = np.asarray(p_s, dtype=np.float64)
    p_q = np.asarray(p_q, dtype=np.float64)
    d_tilde = np.asarray(d_tilde, dtype=np.float64)
    if not (DELTA <= d_s <= 1.0 - DELTA):
        raise ValueError(f"d_s must lie in [{DELTA}, {1.0 - DELTA}], got {d_s}")
    if np.any(d_tilde < d_s) or np.any(d_tilde > 1.0):
        raise ValueError(f"d_tilde must lie in [{d_s}, 1]")
    coef = ((1.0 - d_tilde) * d_s) / ((1.0 - d_s) * d_tilde)
    return coef[..., None] * (p_s - p_q) + p_q


def _probe_disparities(d_s: np.ndarray, n_depth: int) -> np.ndarray:
    """Midpoints of n_depth equal sub-intervals of (d_s, 1); shape (..., n_depth)."""
    i = np.arange(n_depth, dtype=np.float64)
    step = (1.0 - d_s)[..., None] / n_depth
    return d_s[..., None] + (i + 0.5) * step


def visibility(geom: GeometryContext, p_q: np.ndarray, p_s: np.ndarray,
               d_s: float, config: OcclusionConfig | None = None) -> int:
    """1 if the straight path from source to receiver clears the scene.

    The disparity field is probed at n_depth_samples midpoints between d_s
    and 1; the path is blocked when any probe sees scene disparity at or
    above the probe disparity.  Probe points outside the field count as
    unoccluded.
    """
    if config is None:
        config = OcclusionConfig()
    if not (DELTA <= d_s <= 1.0 - DELTA):
        raise ValueError(f"d_s must lie in [{DELTA}, {1.0 - DELTA}], got {d_s}")
    p_q = np.asarray(p_q, dtype=np.float64)
    p_s = np.asarray(p_s, dtype=np.float64)
    d_t = _probe_disparities(np.asarray(d_s, dtype=np.float64), config.n_depth_samples)
    pts = sample_point(p_s, p_q, d_s, d_t)
    h, w = geom.disparity_field.shape
    inside = ((pts[..., 0] >= 0.0) & (pts[..., 0] <= w - 1.0)
              & (pts[..., 1] >= 0.0) & (pts[..., 1] <= h - 1.0))
    dis = sample_disparity_field(geom.disparity_field, pts)
    blocked = inside & (dis >= d_t)
    return int(not blocked.any())


def expected_visibility(geom: GeometryContext, p_q: np.ndarray, key_index: int,
                        config: OcclusionConfig | None = None) -> float:
    """Mean visibility over jittered source positions around one key.

    Each jitter offset moves the source within epsilon_s of the key's
    position and re-reads the source disparity from the field there, so the
    estimate integrates over the source's sub-pixel footprint.
    """
    if config is None:
        config = OcclusionConfig()
    p_q = np.asarray(p_q, dtype=np.float64)
    sources = geom.positions[key_index] + config.jitter_offsets()
    d_source = sample_disparity_field(geom.disparity_field, sources)
    total = 0.0
    for j in range(config.n_super_samples):
        total += visibility(geom, p_q, sources[j], float(d_source[j]), config)
    return total / config.n_super_samples


def _visibility_matrix(geom: GeometryContext, config: OcclusionConfig) -> np.ndarray:
    """Expected visibility for all (query, key) pairs; shape (n, n)."""
    pos = geom.positions
    n = geom.n
    h, w = geom.disparity_field.shape
    sources = pos[:, None, :] + config.jitter_offsets()[None, :, :]  # (n, j, 2)
    d_s = sample_disparity_field(geom.disparity_field, sources)      # (n, j)
    d_t = _probe_disparities(d_s, config.n_depth_samples)            # (n, j, i)
    coef = ((1.0 - d_t) * d_s[..., None]) / ((1.0 - d_s[..., None]) * d_t)
    # probe point for (q, k, j, i): coef[k,j,i] * (S[k,j] - P[q]) + P[q]
    diff = sources[None, :, :, :] - pos[:, None, None, :]            # (q, k, j, 2)
    pts = (coef[None, :, :, :, None] * diff[:, :, :, None, :]
           + pos[:, None, None, None, :])                            # (q, k, j, i, 2)
    inside = ((pts[..., 0] >= 0.0) & (pts[..., 0] <= w - 1.0)
              & (pts[..., 1] >= 0.0) & (pts[..., 1] <= h - 1.0))
    dis = sample_disparity_field(geom.disparity_field, pts)
    blocked = inside & (dis >= d_t[None, :, :, :])
    vis = ~blocked.any(axis=3)                                       # (q, k, j)
    return vis.mean(axis=2)


def lens_attention(batch: AttentionBatch, geom: GeometryContext, lens: LensParams,
                   schedule: SoftEdgeSchedule | None = None,
                   occlusion: OcclusionConfig | None = None) -> np.ndarray:
    """Attention output (A_masked * M_visibility) @ V; shape (n, d_val).

    Keys act as light sources: per-key normalization conserves each key's
    unit budget, the CoC gate restricts spread to the key's blur disk, and
    the visibility factor removes paths blocked by nearer scene content.
    When every token sits at the focus disparity the result equals V.
    """
    if batch.n != geom.n:
        raise ValueError(f"batch has {batch.n} tokens but geometry has {geom.n}")
    if occlusion is None:
        occlusion = OcclusionConfig()
    a = similarity(batch)
    gate = coc_mask(geom, lens, schedule)
    weights = masked_softmax_query(a, gate)
    vis = _visibility_matrix(geom, occlusion)
    return (weights * vis) @ batch.v


def one_step_estimate(z_t: np.ndarray, eps: np.ndarray,
                      alpha_t: float, beta_t: float) -> np.ndarray:
    """Recover the clean signal from one noisy sample and its noise estimate.

    Inverts z_t = alpha_t * z0 + beta_t * eps; alpha_t must be nonzero.
    """
    if alpha_t == 0.0:
        raise ValueError("alpha_t must be nonzero")
    z_t = np.asarray(z_t, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if z_t.shape != eps.shape:
        raise ValueError(f"z_t {z_t.shape} and eps {eps.shape} shapes differ")
    return (z_t - beta_t * eps) / alpha_t
