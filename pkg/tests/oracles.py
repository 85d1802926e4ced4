"""Independent brute-force reference implementations used as test oracles.

Everything here is written with explicit Python loops and scalar math,
directly from the documented formulas, so that agreement with the library
is evidence of correctness rather than shared code.  Nothing in this file
imports from the lensblur package.
"""

from __future__ import annotations

import math

import numpy as np

SHARPNESS_CAP = 1e6
DENOM_FLOOR = 1e-30
GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


def soft_edge_scalar(x: float, sharpness: float) -> float:
    """Logistic sigmoid(min(sharpness, cap) * x), evaluated stably."""
    z = min(sharpness, SHARPNESS_CAP) * x
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def bilinear(field: np.ndarray, x: float, y: float) -> float:
    """Border-clamped bilinear lookup, scalar arithmetic only."""
    h, w = field.shape
    x = min(max(x, 0.0), w - 1.0)
    y = min(max(y, 0.0), h - 1.0)
    x0 = int(math.floor(x))
    y0 = int(math.floor(y))
    x1 = min(x0 + 1, w - 1)
    y1 = min(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    top = field[y0, x0] * (1.0 - fx) + field[y0, x1] * fx
    bot = field[y1, x0] * (1.0 - fx) + field[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def golden_offsets(n_super: int, eps_s: float) -> list[tuple[float, float]]:
    """Golden-angle spiral jitter table: r_j = eps*sqrt((j+1/2)/n), theta_j = j*GA."""
    out = []
    for j in range(n_super):
        r = eps_s * math.sqrt((j + 0.5) / n_super)
        t = j * GOLDEN_ANGLE
        out.append((r * math.cos(t), r * math.sin(t)))
    return out


def ray_visible(field: np.ndarray, sx: float, sy: float, qx: float, qy: float,
                d_s: float, n_depth: int) -> int:
    """1 iff every midpoint probe of (d_s, 1) sees scene disparity < probe."""
    h, w = field.shape
    step = (1.0 - d_s) / n_depth
    for i in range(n_depth):
        d_t = d_s + (i + 0.5) * step
        coef = ((1.0 - d_t) * d_s) / ((1.0 - d_s) * d_t)
        px = coef * (sx - qx) + qx
        py = coef * (sy - qy) + qy
        if px < 0.0 or px > w - 1.0 or py < 0.0 or py > h - 1.0:
            continue  # nothing exists outside the field to block the ray
        if bilinear(field, px, py) >= d_t:
            return 0
    return 1


def expected_visibility_brute(field: np.ndarray, key_pos: tuple[float, float],
                              q_pos: tuple[float, float], n_depth: int,
                              n_super: int, eps_s: float) -> float:
    total = 0
    for ox, oy in golden_offsets(n_super, eps_s):
        sx, sy = key_pos[0] + ox, key_pos[1] + oy
        d_s = bilinear(field, sx, sy)
        total += ray_visible(field, sx, sy, q_pos[0], q_pos[1], d_s, n_depth)
    return total / n_super


def masked_softmax_columns(a: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Per-column masked softmax with the documented 1e-30 dead-column floor."""
    n_q, n_k = a.shape
    out = np.zeros((n_q, n_k))
    for k in range(n_k):
        support = [q for q in range(n_q) if mask[q, k] > 0.0]
        if not support:
            continue
        m = max(a[q, k] for q in support)
        e = [0.0] * n_q
        for q in support:
            e[q] = math.exp(a[q, k] - m) * mask[q, k]
        denom = sum(e[q] for q in support)
        if denom < DENOM_FLOOR:
            continue
        for q in support:
            out[q, k] = e[q] / denom
    return out


def lens_attention_brute(q: np.ndarray, k: np.ndarray, v: np.ndarray,
                         positions: np.ndarray, disparities: np.ndarray,
                         field: np.ndarray, pixel_scale: float,
                         focus: float, aperture: float, sharpness: float,
                         n_depth: int, n_super: int, eps_s: float) -> np.ndarray:
    """Loop evaluation of the full gated, occlusion-weighted attention op."""
    n, d_key = q.shape
    d_val = v.shape[1]
    scores = np.empty((n, n))
    for qi in range(n):
        for ki in range(n):
            s = 0.0
            for m in range(d_key):
                s += q[qi, m] * k[ki, m]
            scores[qi, ki] = s / math.sqrt(d_key)

    gate = np.empty((n, n))
    for qi in range(n):
        for ki in range(n):
            rc = abs(focus - disparities[ki]) * aperture
            dx = positions[qi, 0] - positions[ki, 0]
            dy = positions[qi, 1] - positions[ki, 1]
            dist = math.sqrt(dx * dx + dy * dy)
            gate[qi, ki] = soft_edge_scalar(rc - pixel_scale * dist, sharpness)

    weights = masked_softmax_columns(scores, gate)

    # hoist per-(key, jitter) ray data; probe positions still vary per query
    offsets = golden_offsets(n_super, eps_s)
    per_key = []
    for ki in range(n):
        rays = []
        for ox, oy in offsets:
            sx, sy = positions[ki, 0] + ox, positions[ki, 1] + oy
            d_s = bilinear(field, sx, sy)
            step = (1.0 - d_s) / n_depth
            probes = []
            for i in range(n_depth):
                d_t = d_s + (i + 0.5) * step
                coef = ((1.0 - d_t) * d_s) / ((1.0 - d_s) * d_t)
                probes.append((d_t, coef))
            rays.append((sx, sy, probes))
        per_key.append(rays)

    h, w = field.shape
    vis = np.empty((n, n))
    for qi in range(n):
        qx, qy = positions[qi, 0], positions[qi, 1]
        for ki in range(n):
            count = 0
            for sx, sy, probes in per_key[ki]:
                ok = 1
                for d_t, coef in probes:
                    px = coef * (sx - qx) + qx
                    py = coef * (sy - qy) + qy
                    if px < 0.0 or px > w - 1.0 or py < 0.0 or py > h - 1.0:
                        continue
                    if bilinear(field, px, py) >= d_t:
                        ok = 0
                        break
                count += ok
            vis[qi, ki] = count / n_super

    out = np.zeros((n, d_val))
    for qi in range(n):
        for m in range(d_val):
            acc = 0.0
            for ki in range(n):
                acc += weights[qi, ki] * vis[qi, ki] * v[ki, m]
            out[qi, m] = acc
    return out


def reflect_index(i: int, n: int) -> int:
    """Mirror about the array edges until the index lands inside [0, n)."""
    while i < 0 or i >= n:
        if i < 0:
            i = -1 - i
        else:
            i = 2 * n - 1 - i
    return i


def coverage(dy: float, dx: float, r: float) -> int:
    """Subsamples of the 4x4 grid of pixel offset (dy, dx) inside radius r."""
    cnt = 0
    for i in range(4):
        u = 0.25 * i - 0.375
        for j in range(4):
            v = 0.25 * j - 0.375
            if (dy + u) ** 2 + (dx + v) ** 2 <= r * r:
                cnt += 1
    return cnt


def splat_brute(rgba: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """Scatter each premultiplied source over its disk, folding at borders.

    Per-source weights are coverage/16 normalized by the full unclipped
    kernel mass, so every source deposits exactly its own energy.
    """
    h, w = radii.shape
    pre = rgba.astype(np.float64).copy()
    pre[:, :, :3] *= rgba[:, :, 3:4]
    out = np.zeros((h, w, 4))
    for sy in range(h):
        for sx in range(w):
            if rgba[sy, sx, 3] <= 0.0:
                continue
            r = radii[sy, sx]
            if r < 0.5:
                out[sy, sx] += pre[sy, sx]
                continue
            reach = int(math.ceil(r + 0.531))
            weights = []
            mass = 0.0
            for dy in range(-reach, reach + 1):
                for dx in range(-reach, reach + 1):
                    c = coverage(float(dy), float(dx), r)
                    if c:
                        weights.append((dy, dx, c * 0.0625))
                        mass += c * 0.0625
            for dy, dx, wgt in weights:
                ty = reflect_index(sy + dy, h)
                tx = reflect_index(sx + dx, w)
                out[ty, tx] += (wgt / mass) * pre[sy, sx]
    return out


def occlusion_render_brute(image: np.ndarray, disp: np.ndarray,
                           radii: np.ndarray, n_depth: int) -> np.ndarray:
    """Occlusion-aware scatter: deposits only along unblocked rays.

    Targets are addressed in unfolded canvas coordinates (so off-canvas
    rays probe real positions) and folded back by mirror reflection;
    per-source weights renormalize over the admitted targets.
    """
    h, w = disp.shape
    if float(radii.max()) < 0.5:
        return image.astype(np.float64).copy()
    out = np.zeros((h, w, 3))
    for sy in range(h):
        for sx in range(w):
            r = radii[sy, sx]
            if r < 0.5:
                out[sy, sx] += image[sy, sx]
                continue
            d_s = disp[sy, sx]
            reach = int(math.ceil(r + 0.531))
            admitted = []
            mass = 0.0
            for dy in range(-reach, reach + 1):
                for dx in range(-reach, reach + 1):
                    c = coverage(float(dy), float(dx), r)
                    if c == 0:
                        continue
                    qx, qy = float(sx + dx), float(sy + dy)
                    if ray_visible(disp, float(sx), float(sy), qx, qy,
                                   d_s, n_depth):
                        admitted.append((dy, dx, c * 0.0625))
                        mass += c * 0.0625
            for dy, dx, wgt in admitted:
                ty = reflect_index(sy + dy, h)
                tx = reflect_index(sx + dx, w)
                out[ty, tx] += (wgt / mass) * image[sy, sx]
    return out


def over_composite(premultiplied: list[np.ndarray]) -> np.ndarray:
    """Back-to-front over operator on premultiplied RGBA rasters."""
    out = premultiplied[0]
    for layer in premultiplied[1:]:
        out = layer + (1.0 - layer[:, :, 3:4]) * out
    return out


def rel_error(got: np.ndarray, want: np.ndarray) -> float:
    scale = max(float(np.abs(want).max()), 1e-12)
    return float(np.abs(got - want).max()) / scale
