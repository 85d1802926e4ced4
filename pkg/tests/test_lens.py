"""Thin-lens scalar math: CoC radius, defocus maps, soft edges, focus picks."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lensblur.imgio import DELTA
from lensblur.lens import (SHARPNESS_CAP, LensParams, SoftEdgeSchedule,
                           coc_radius, defocus_map, focus_from_region,
                           soft_edge)

from oracles import soft_edge_scalar

_disp = st.floats(DELTA, 1 - DELTA)


class TestCocRadius:
    def test_in_focus_zero(self):
        assert coc_radius(0.5, LensParams(0.5, 32.0)) == 0.0

    def test_full_range_gap(self):
        r = coc_radius(DELTA, LensParams(1 - DELTA, 32.0))
        assert abs(r - 32.0) <= 32.0 * 2 * DELTA

    def test_direct_arithmetic(self):
        assert coc_radius(0.75, LensParams(0.5, 20.0)) == 5.0

    @given(d1=_disp, d2=_disp, df=_disp, a=st.floats(0.0, 100.0))
    def test_lipschitz_in_disparity(self, d1, d2, df, a):
        lens = LensParams(df, a)
        bound = a * abs(d1 - d2) + 1e-12
        assert abs(coc_radius(d1, lens) - coc_radius(d2, lens)) <= bound

    def test_rejects_nonpositive_range(self):
        with pytest.raises(ValueError):
            LensParams(0.5, -1.0)
        with pytest.raises(ValueError):
            LensParams(0.0, 8.0)
        with pytest.raises(ValueError):
            LensParams(1.0, 8.0)


class TestDefocusMap:
    def test_constant_at_focus_is_zero_field(self):
        d = np.full((4, 6), 0.4)
        assert np.array_equal(defocus_map(d, LensParams(0.4, 16.0)),
                              np.zeros((4, 6)))

    def test_symmetric_offsets_match(self):
        lens = LensParams(0.5, 12.0)
        c = 0.2
        above = defocus_map(np.full((3, 3), 0.5 + c), lens)
        below = defocus_map(np.full((3, 3), 0.5 - c), lens)
        assert np.allclose(above, c * 12.0, atol=1e-12)
        assert np.allclose(below, c * 12.0, atol=1e-12)

    def test_linear_ramp(self):
        w = 50
        x = np.arange(w) / w
        ramp = np.clip(np.tile(x, (2, 1)), DELTA, 1 - DELTA)
        field = defocus_map(ramp, LensParams(DELTA, 10.0))
        want = 10.0 * np.tile(x, (2, 1))
        # focus sits at the clamp margin rather than literal zero
        assert np.abs(field - want).max() <= 10.0 * DELTA + 1e-12
        assert np.allclose(field, 10.0 * np.abs(ramp - DELTA), atol=1e-12)

    def test_rejects_non_2d(self):
        with pytest.raises(ValueError):
            defocus_map(np.zeros((2, 2, 3)), LensParams(0.5, 8.0))


class TestSoftEdge:
    def test_zero_margin_is_half(self):
        for k in (0.5, 10.0, SHARPNESS_CAP):
            assert soft_edge(0.0, SoftEdgeSchedule(k)) == 0.5

    def test_direct_logistic_value(self):
        got = soft_edge(2.0, SoftEdgeSchedule(10.0))
        assert abs(got - 1.0 / (1.0 + math.exp(-20.0))) <= 1e-8

    def test_hard_limit_outside(self):
        assert abs(soft_edge(-1.0, SoftEdgeSchedule(SHARPNESS_CAP))) <= 1e-12

    def test_sharpness_capped(self):
        # above the cap the curve must stop changing
        a = soft_edge(1e-7, SoftEdgeSchedule(SHARPNESS_CAP))
        b = soft_edge(1e-7, SoftEdgeSchedule(SHARPNESS_CAP * 100))
        assert a == b

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(7)
        for x in rng.uniform(-3, 3, 25):
            for k in (0.1, 1.0, 50.0, SHARPNESS_CAP):
                got = soft_edge(float(x), SoftEdgeSchedule(k))
                assert abs(got - soft_edge_scalar(float(x), k)) <= 1e-15

    def test_array_margins(self):
        xs = np.array([-1.0, 0.0, 1.0])
        got = soft_edge(xs, SoftEdgeSchedule(2.0))
        want = 1.0 / (1.0 + np.exp(-2.0 * xs))
        assert np.allclose(got, want, atol=1e-12)

    @given(x=st.floats(-50, 50), k=st.floats(1e-3, SHARPNESS_CAP))
    def test_complement_sums_to_one(self, x, k):
        sched = SoftEdgeSchedule(k)
        assert abs(soft_edge(x, sched) + soft_edge(-x, sched) - 1.0) <= 1e-12

    @given(x1=st.floats(-20, 20), x2=st.floats(-20, 20),
           k=st.floats(1e-3, SHARPNESS_CAP))
    def test_monotone_in_margin(self, x1, x2, k):
        lo, hi = min(x1, x2), max(x1, x2)
        sched = SoftEdgeSchedule(k)
        assert soft_edge(hi, sched) >= soft_edge(lo, sched)

    @given(x=st.floats(-20, 20), k1=st.floats(1e-3, 1e3), k2=st.floats(1e-3, 1e3))
    def test_monotone_in_sharpness_toward_step(self, x, k1, k2):
        lo, hi = min(k1, k2), max(k1, k2)
        a = soft_edge(x, SoftEdgeSchedule(lo))
        b = soft_edge(x, SoftEdgeSchedule(hi))
        if x > 0:
            assert b >= a - 1e-15
        elif x < 0:
            assert b <= a + 1e-15
        else:
            assert a == b == 0.5

    def test_reciprocal_variant_matches_printed_form(self):
        # literal printed form (1 + min(k, cap) e^x)^-1, kept for study
        for x, k in [(-2.0, 3.0), (0.0, 1.0), (1.5, 10.0)]:
            got = soft_edge(x, SoftEdgeSchedule(k, variant="reciprocal"))
            assert abs(got - 1.0 / (1.0 + k * math.exp(x))) <= 1e-12

    def test_rejects_bad_schedule(self):
        with pytest.raises(ValueError):
            SoftEdgeSchedule(0.0)
        with pytest.raises(ValueError):
            SoftEdgeSchedule(10.0, variant="cubic")


class TestFocusFromRegion:
    def test_constant_map(self):
        d = np.full((5, 5), 0.3)
        mask = np.zeros((5, 5), bool)
        mask[2, 2] = True
        assert focus_from_region(d, mask) == 0.3

    def test_pair_mean(self):
        d = np.array([[0.2, 0.4]])
        assert abs(focus_from_region(d, np.array([[True, True]])) - 0.3) <= 1e-15

    def test_half_image_ramp_brute_force(self):
        w = 16
        d = np.tile(np.linspace(0.1, 0.9, w), (4, 1))
        mask = np.zeros((4, w), bool)
        mask[:, : w // 2] = True
        assert abs(focus_from_region(d, mask) - d[mask].mean()) <= 1e-15

    def test_empty_mask_rejected(self):
        with pytest.raises(ValueError):
            focus_from_region(np.full((3, 3), 0.5), np.zeros((3, 3), bool))

    def test_non_boolean_mask_rejected(self):
        with pytest.raises(ValueError):
            focus_from_region(np.full((3, 3), 0.5), np.ones((3, 3)))

    def test_mask_order_invariant(self):
        rng = np.random.default_rng(2)
        d = rng.uniform(DELTA, 1 - DELTA, (8, 8))
        mask = rng.random((8, 8)) > 0.5
        mask[0, 0] = True
        f1 = focus_from_region(d, mask)
        f2 = focus_from_region(d[::-1, ::-1].copy(), mask[::-1, ::-1].copy())
        assert abs(f1 - f2) <= 1e-12

    def test_result_clamped(self):
        d = np.full((2, 2), DELTA)
        got = focus_from_region(d, np.ones((2, 2), bool))
        assert DELTA <= got <= 1 - DELTA
