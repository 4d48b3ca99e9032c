import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import hd95_bruteforce
from vesselbench.errors import (
    InsufficientDataError,
    MetricUndefinedError,
    ShapeError,
)
from vesselbench.metrics import (
    CaseMetrics,
    MetricReport,
    boundary_points_mm,
    dsc,
    evaluate_pair,
    mhd95,
    percentile_linear,
    vs,
)
from vesselbench.volume import LabelMask

SPACING = (0.5, 0.5, 0.6)


def mask_of(arr, spacing=SPACING):
    return LabelMask(np.asarray(arr, np.uint8), spacing)


def random_mask(rng, shape=(8, 8, 8), p=0.3, spacing=SPACING):
    return mask_of((rng.random(shape) < p).astype(np.uint8), spacing)


class TestDsc:
    def test_identical_nonempty(self):
        rng = np.random.default_rng(0)
        m = random_mask(rng)
        assert dsc(m, m) == 1.0

    def test_disjoint(self):
        a = np.zeros((4, 4, 4)); a[0, 0, 0] = 1
        b = np.zeros((4, 4, 4)); b[3, 3, 3] = 1
        assert dsc(mask_of(a), mask_of(b)) == 0.0

    def test_closed_form(self):
        a = np.zeros((4, 4, 4)); a[0, 0, 0] = 1; a[0, 0, 1] = 1
        b = np.zeros((4, 4, 4)); b[0, 0, 1] = 1; b[0, 0, 2] = 1
        assert dsc(mask_of(a), mask_of(b)) == pytest.approx(0.5)

    def test_both_empty(self):
        z = mask_of(np.zeros((3, 3, 3)))
        assert dsc(z, z) == 1.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            dsc(mask_of(np.zeros((3, 3, 3))), mask_of(np.zeros((4, 3, 3))))


class TestVs:
    def test_equal_volumes(self):
        a = np.zeros((4, 4, 4)); a[0, 0, 0] = 1; a[1, 1, 1] = 1
        b = np.zeros((4, 4, 4)); b[3, 3, 3] = 1; b[2, 2, 2] = 1
        assert vs(mask_of(a), mask_of(b)) == 1.0

    def test_closed_form(self):
        a = np.zeros((4, 4, 4)); a.reshape(-1)[:3] = 1
        b = np.zeros((4, 4, 4)); b.reshape(-1)[0] = 1
        assert vs(mask_of(a), mask_of(b)) == pytest.approx(0.5)

    @given(st.integers(0, 2 ** 18 - 1), st.integers(0, 2 ** 18 - 1))
    @settings(max_examples=40, deadline=None)
    def test_vs_at_least_dsc(self, bits_a, bits_b):
        a = np.array([(bits_a >> i) & 1 for i in range(18)], np.uint8).reshape(2, 3, 3)
        b = np.array([(bits_b >> i) & 1 for i in range(18)], np.uint8).reshape(2, 3, 3)
        ma, mb = mask_of(a), mask_of(b)
        assert vs(ma, mb) >= dsc(ma, mb) - 1e-12


class TestMhd95:
    def test_identical(self):
        rng = np.random.default_rng(1)
        m = random_mask(rng, p=0.4)
        assert mhd95(m, m) == 0.0

    def test_single_voxels_along_z(self):
        a = np.zeros((8, 4, 4)); a[1, 1, 1] = 1
        b = np.zeros((8, 4, 4)); b[4, 1, 1] = 1
        # 3 voxels apart along z at sz = 0.5 mm -> 1.5 mm
        d = mhd95(mask_of(a, (1.0, 1.0, 0.5)), mask_of(b, (1.0, 1.0, 0.5)))
        assert d == pytest.approx(1.5, abs=1e-12)

    def test_empty_mask_undefined(self):
        rng = np.random.default_rng(2)
        with pytest.raises(MetricUndefinedError):
            mhd95(mask_of(np.zeros((4, 4, 4))), random_mask(rng, (4, 4, 4), 0.5))

    def test_matches_bruteforce_oracle(self):
        rng = np.random.default_rng(3)
        for trial in range(25):
            a = random_mask(rng, (8, 8, 8), p=0.25)
            b = random_mask(rng, (8, 8, 8), p=0.25)
            if a.voxel_count() == 0 or b.voxel_count() == 0:
                continue
            got = mhd95(a, b)
            want = hd95_bruteforce(a.data, b.data, SPACING)
            assert got == pytest.approx(want, abs=1e-9), f"trial {trial}"

    def test_max_of_directed_mode(self):
        rng = np.random.default_rng(4)
        a = random_mask(rng, (6, 6, 6), p=0.3)
        b = random_mask(rng, (6, 6, 6), p=0.3)
        got = mhd95(a, b, mode="max-of-directed")
        want = hd95_bruteforce(a.data, b.data, SPACING, mode="max-of-directed")
        assert got == pytest.approx(want, abs=1e-9)

    def test_bounded_by_exact_hausdorff(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            a = random_mask(rng, (7, 7, 7), p=0.2)
            b = random_mask(rng, (7, 7, 7), p=0.2)
            if a.voxel_count() == 0 or b.voxel_count() == 0:
                continue
            assert mhd95(a, b) <= mhd95(a, b, q=1.0) + 1e-12

    def test_symmetric(self):
        rng = np.random.default_rng(6)
        a = random_mask(rng, p=0.25)
        b = random_mask(rng, p=0.25)
        assert mhd95(a, b) == pytest.approx(mhd95(b, a), abs=1e-12)


class TestInvarianceUnderIsometry:
    def test_flip_and_rotate_invariance(self):
        rng = np.random.default_rng(7)
        a = random_mask(rng, (6, 6, 6), p=0.3, spacing=(1, 1, 1))
        b = random_mask(rng, (6, 6, 6), p=0.3, spacing=(1, 1, 1))
        base = (dsc(a, b), mhd95(a, b), vs(a, b))
        fa = mask_of(np.flip(a.data, axis=1).copy(), (1, 1, 1))
        fb = mask_of(np.flip(b.data, axis=1).copy(), (1, 1, 1))
        flipped = (dsc(fa, fb), mhd95(fa, fb), vs(fa, fb))
        ra = mask_of(np.rot90(a.data, axes=(1, 2)).copy(), (1, 1, 1))
        rb = mask_of(np.rot90(b.data, axes=(1, 2)).copy(), (1, 1, 1))
        rotated = (dsc(ra, rb), mhd95(ra, rb), vs(ra, rb))
        assert base == pytest.approx(flipped, abs=1e-9)
        assert base == pytest.approx(rotated, abs=1e-9)


class TestBoundary:
    def test_full_mask_boundary_is_shell(self):
        m = mask_of(np.ones((4, 4, 4)), (1, 1, 1))
        pts = boundary_points_mm(m)
        assert len(pts) == 4 ** 3 - 2 ** 3  # interior 2x2x2 removed

    def test_percentile_interpolation(self):
        assert percentile_linear(np.array([0.0, 1.0]), 0.95) == pytest.approx(0.95)
        assert percentile_linear(np.array([1.0, 2.0, 3.0, 4.0]), 0.5) == pytest.approx(2.5)


class TestReportAggregate:
    def test_single_row_sd_zero(self):
        rep = MetricReport(rows=[CaseMetrics("a", 0.8, 1.0, 0.9)])
        mean, sd, n = rep.aggregate("dsc")
        assert (mean, sd, n) == (0.8, 0.0, 1)

    def test_identical_rows(self):
        rep = MetricReport(rows=[CaseMetrics("a", 0.8, 1.0, 0.9),
                                 CaseMetrics("b", 0.8, 2.0, 0.9)])
        mean, sd, _ = rep.aggregate("dsc")
        assert (mean, sd) == (0.8, 0.0)

    def test_hand_computed_sd(self):
        rep = MetricReport(rows=[CaseMetrics("a", 0.7, None, 0.9),
                                 CaseMetrics("b", 0.9, 3.0, 0.9)])
        mean, sd, n = rep.aggregate("dsc")
        assert mean == pytest.approx(0.8)
        assert sd == pytest.approx(0.14142135, abs=1e-6)
        # undefined mhd rows are excluded
        assert rep.aggregate("mhd_mm") == (3.0, 0.0, 1)

    def test_empty_aggregate_error(self):
        rep = MetricReport(rows=[CaseMetrics("a", 0.7, None, 0.9)])
        with pytest.raises(InsufficientDataError):
            rep.aggregate("mhd_mm")


def test_evaluate_pair_handles_empty_prediction():
    rng = np.random.default_rng(8)
    gt = random_mask(rng, (5, 5, 5), p=0.5)
    empty = mask_of(np.zeros((5, 5, 5)))
    row = evaluate_pair("case0", empty, gt)
    assert row.mhd_mm is None
    assert "empty" in row.note
    assert row.dsc == 0.0
