"""Compiled per-pixel kernels for the scatter renderer.

Everything here is written gather-style: each output pixel accumulates over
the sources whose disks can reach it, in a fixed row-major order, and every
output element is owned by exactly one parallel iteration.  That keeps
results bit-identical for any worker-thread count.  Normalization masses are
computed per source the same way.  No fastmath anywhere; float semantics are
plain IEEE double.
"""

from __future__ import annotations

import numba
from numba import njit, prange

# Pin the threading layer before any parallel kernel compiles: 'workqueue' is
# always available and needs no TBB/OMP probing.
numba.config.THREADING_LAYER = "workqueue"

# Coverage is a 4x4 subsample grid per target pixel.  Subsample centers sit at
# offsets {-3/8, -1/8, 1/8, 3/8}, so the farthest subsample is sqrt(2)*3/8
# ~= 0.5304 from the pixel center; 0.531 is a strictly conservative margin for
# the all-in / all-out early exits.
SUBSAMPLE_REACH = 0.531

# Side length of the square tiles used to bound gather windows per region.
GATHER_TILE = 16


@njit(cache=True)
def _coverage_count(dy, dx, r):
    """Number of the 16 subsamples of pixel offset (dy, dx) inside radius r."""
    d2c = dy * dy + dx * dx
    rin = r - SUBSAMPLE_REACH
    if rin > 0.0 and d2c <= rin * rin:
        return 16
    rout = r + SUBSAMPLE_REACH
    if d2c >= rout * rout:
        return 0
    rsq = r * r
    cnt = 0
    for i in range(4):
        u = 0.25 * i - 0.375
        t1 = dy + u
        a = t1 * t1
        for j in range(4):
            v = 0.25 * j - 0.375
            t2 = dx + v
            if a + t2 * t2 <= rsq:
                cnt += 1
    return cnt


@njit(cache=True)
def _bilinear(field, x, y):
    """Border-clamped bilinear sample of field at fractional (x, y)."""
    h, w = field.shape
    if x < 0.0:
        x = 0.0
    if y < 0.0:
        y = 0.0
    if x > w - 1.0:
        x = w - 1.0
    if y > h - 1.0:
        y = h - 1.0
    x0 = int(x)
    y0 = int(y)
    x1 = x0 + 1 if x0 + 1 < w else w - 1
    y1 = y0 + 1 if y0 + 1 < h else h - 1
    fx = x - x0
    fy = y - y0
    top = field[y0, x0] * (1.0 - fx) + field[y0, x1] * fx
    bot = field[y1, x0] * (1.0 - fx) + field[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


@njit(cache=True)
def _ray_visible(disp, dts, coefs, sy, sx, qx, qy, n_depth):
    """1 if the source-to-receiver path clears the disparity field.

    Probes the field at n_depth midpoint disparities between the source
    disparity and 1; the probe disparities and collinear coefficients are
    read from per-source tables (see _probe_tables in render).  Probe
    points outside the field count as unoccluded.
    """
    h, w = disp.shape
    fsx = float(sx)
    fsy = float(sy)
    for i in range(n_depth):
        coef = coefs[sy, sx, i]
        px = coef * (fsx - qx) + qx
        py = coef * (fsy - qy) + qy
        if px < 0.0 or px > w - 1.0 or py < 0.0 or py > h - 1.0:
            continue
        if _bilinear(disp, px, py) >= dts[sy, sx, i]:
            return 0
    return 1


@njit(cache=True, parallel=True)
def splat_mass(radii, active, reach):
    """Full (unclipped) kernel mass per source; 1.0 for delta sources."""
    h, w = radii.shape
    mass = radii.copy()
    for sy in prange(h):
        for sx in range(w):
            if active[sy, sx] == 0:
                mass[sy, sx] = 1.0
                continue
            r = radii[sy, sx]
            if r < 0.5:
                mass[sy, sx] = 1.0
                continue
            # own-disk window: everything outside r + SUBSAMPLE_REACH is zero
            reach_s = int(r + SUBSAMPLE_REACH) + 1
            if reach_s > reach:
                reach_s = reach
            acc = 0.0
            for dy in range(-reach_s, reach_s + 1):
                fy = float(dy)
                for dx in range(-reach_s, reach_s + 1):
                    cnt = _coverage_count(fy, float(dx), r)
                    if cnt > 0:
                        acc += cnt * 0.0625
            mass[sy, sx] = acc
    return mass


@njit(cache=True, parallel=True)
def splat_gather(cnorm, radii, active, reach, ty_lo, ty_hi, tx_lo, tx_hi,
                 out_ext):
    """Accumulate normalized deposits onto the extended canvas.

    Only targets in [ty_lo, ty_hi] x [tx_lo, tx_hi] (extended-frame, inclusive)
    are visited; callers pass the active-source bounding box grown by reach, so
    skipped targets are exactly those no disk can touch.
    """
    h, w, nch = cnorm.shape
    for ty in prange(ty_lo, ty_hi + 1):
        tyc = ty - reach
        sy0 = max(0, tyc - reach)
        sy1 = min(h - 1, tyc + reach)
        for tx in range(tx_lo, tx_hi + 1):
            txc = tx - reach
            sx0 = max(0, txc - reach)
            sx1 = min(w - 1, txc + reach)
            a0 = 0.0
            a1 = 0.0
            a2 = 0.0
            a3 = 0.0
            for sy in range(sy0, sy1 + 1):
                dy = float(tyc - sy)
                for sx in range(sx0, sx1 + 1):
                    if active[sy, sx] == 0:
                        continue
                    r = radii[sy, sx]
                    if r < 0.5:
                        if tyc == sy and txc == sx:
                            a0 += cnorm[sy, sx, 0]
                            a1 += cnorm[sy, sx, 1]
                            a2 += cnorm[sy, sx, 2]
                            if nch == 4:
                                a3 += cnorm[sy, sx, 3]
                        continue
                    cnt = _coverage_count(dy, float(txc - sx), r)
                    if cnt > 0:
                        wgt = cnt * 0.0625
                        a0 += wgt * cnorm[sy, sx, 0]
                        a1 += wgt * cnorm[sy, sx, 1]
                        a2 += wgt * cnorm[sy, sx, 2]
                        if nch == 4:
                            a3 += wgt * cnorm[sy, sx, 3]
            out_ext[ty, tx, 0] = a0
            out_ext[ty, tx, 1] = a1
            out_ext[ty, tx, 2] = a2
            if nch == 4:
                out_ext[ty, tx, 3] = a3


@njit(cache=True, parallel=True)
def occlusion_mass(disp, radii, reach, n_depth, dts, coefs):
    """Admitted kernel mass per source under the visibility rule."""
    h, w = radii.shape
    mass = radii.copy()
    for sy in prange(h):
        for sx in range(w):
            r = radii[sy, sx]
            if r < 0.5:
                mass[sy, sx] = 1.0  # delta deposit onto itself, always visible
                continue
            fsx = float(sx)
            fsy = float(sy)
            reach_s = int(r + SUBSAMPLE_REACH) + 1
            if reach_s > reach:
                reach_s = reach
            acc = 0.0
            for dy in range(-reach_s, reach_s + 1):
                fy = float(dy)
                for dx in range(-reach_s, reach_s + 1):
                    cnt = _coverage_count(fy, float(dx), r)
                    if cnt > 0:
                        if _ray_visible(disp, dts, coefs, sy, sx,
                                        fsx + dx, fsy + dy, n_depth):
                            acc += cnt * 0.0625
            mass[sy, sx] = acc
    return mass


@njit(cache=True, parallel=True)
def occlusion_gather(cnorm, disp, radii, reach, n_depth, dts, coefs, bounds,
                     out_ext):
    """Accumulate visibility-admitted deposits onto the extended canvas.

    ``bounds`` holds one scan half-width per GATHER_TILE x GATHER_TILE tile
    of the extended canvas; every source outside that window is provably out
    of reach (see _gather_bounds), so shrinking the scan skips exact zeros
    and the accumulation order of nonzero terms is unchanged.
    """
    h, w, nch = cnorm.shape
    he, we = out_ext.shape[0], out_ext.shape[1]
    for ty in prange(he):
        tyc = ty - reach
        brow = bounds[ty // GATHER_TILE]
        for tx in range(we):
            txc = tx - reach
            bnd = brow[tx // GATHER_TILE]
            sy0 = max(0, tyc - bnd)
            sy1 = min(h - 1, tyc + bnd)
            sx0 = max(0, txc - bnd)
            sx1 = min(w - 1, txc + bnd)
            qx = float(txc)
            qy = float(tyc)
            a0 = 0.0
            a1 = 0.0
            a2 = 0.0
            for sy in range(sy0, sy1 + 1):
                dy = float(tyc - sy)
                for sx in range(sx0, sx1 + 1):
                    r = radii[sy, sx]
                    if r < 0.5:
                        if tyc == sy and txc == sx:
                            a0 += cnorm[sy, sx, 0]
                            a1 += cnorm[sy, sx, 1]
                            a2 += cnorm[sy, sx, 2]
                        continue
                    cnt = _coverage_count(dy, float(txc - sx), r)
                    if cnt > 0:
                        if _ray_visible(disp, dts, coefs, sy, sx, qx, qy,
                                        n_depth):
                            wgt = cnt * 0.0625
                            a0 += wgt * cnorm[sy, sx, 0]
                            a1 += wgt * cnorm[sy, sx, 1]
                            a2 += wgt * cnorm[sy, sx, 2]
            out_ext[ty, tx, 0] = a0
            out_ext[ty, tx, 1] = a1
            out_ext[ty, tx, 2] = a2
