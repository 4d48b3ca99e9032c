import numpy as np
import pytest

from vesselbench.errors import BoundsError, ParameterError, SamplingError
from vesselbench.phantom import PhantomSpec, generate_dataset
from vesselbench.sampling import (
    LabeledCase,
    PatchSpec,
    extract_patch,
    extract_slices,
    pad_slice,
    padded_slice_shape,
    sample_balanced,
    vessel_patch_quota,
)
from vesselbench.volume import LabelMask, Volume


def make_case(case_id="c0", n=24, seed=0, vessel_frac=0.1):
    rng = np.random.default_rng(seed)
    data = rng.normal(size=(n, n, n)).astype(np.float32)
    mask = (rng.random((n, n, n)) < vessel_frac).astype(np.uint8)
    mask[0, 0, 0] = 0  # keep at least one non-vessel voxel
    mask[n // 2, n // 2, n // 2] = 1
    return LabeledCase(case_id, Volume(data, (1, 1, 1)), LabelMask(mask, (1, 1, 1)))


class TestExtractPatch:
    def test_center_indexing_identity_2d(self):
        case = make_case(n=80)
        img, lab = extract_patch(case.volume, case.mask, (40, 40, 5), (64, 64))
        assert img.shape == (64, 64)
        assert img[32, 32] == case.volume.data[5, 40, 40]
        assert lab[32, 32] == case.mask.data[5, 40, 40]

    def test_center_indexing_identity_3d(self):
        case = make_case(n=24)
        img, lab = extract_patch(case.volume, case.mask, (10, 11, 12), (16, 16, 16))
        assert img.shape == (16, 16, 16)
        assert img[8, 8, 8] == case.volume.data[12, 11, 10]

    def test_border_rejected(self):
        case = make_case(n=24)
        with pytest.raises(BoundsError):
            extract_patch(case.volume, case.mask, (5, 12, 12), (16, 16, 16))

    def test_constant_volume_constant_patch(self):
        v = Volume(np.full((20, 20, 20), 3.0, np.float32), (1, 1, 1))
        m = LabelMask(np.zeros((20, 20, 20), np.uint8), (1, 1, 1))
        img, _ = extract_patch(v, m, (10, 10, 10), (16, 16, 16))
        assert (img == 3.0).all()


class TestQuota:
    @pytest.mark.parametrize("count,expected", [(100, 80), (5, 4), (10, 8), (1, 1)])
    def test_rounding(self, count, expected):
        assert vessel_patch_quota(count) == expected


class TestSampleBalanced:
    def test_exact_balance(self):
        cases = [make_case("a", seed=1), make_case("b", seed=2)]
        for count in (5, 10, 100):
            spec = PatchSpec("patch3d-16", count=count, rng_seed=3)
            batch = sample_balanced(cases, spec)
            n_vessel = sum(
                int(it.label[tuple(d // 2 for d in it.label.shape)]) for it in batch.items
            )
            assert n_vessel == vessel_patch_quota(count)
            assert len(batch) == count

    def test_recorded_class_matches_center_voxel(self):
        cases = [make_case("a", seed=4)]
        batch = sample_balanced(cases, PatchSpec("patch3d-16", count=50, rng_seed=5))
        for it in batch.items:
            center_val = it.label[tuple(d // 2 for d in it.label.shape)]
            assert bool(center_val) == it.is_vessel
            x, y, z = it.center
            assert cases[0].mask.data[z, y, x] == center_val

    def test_determinism(self):
        cases = [make_case("a", seed=1), make_case("b", seed=2)]
        spec = PatchSpec("patch3d-16", count=30, rng_seed=9)
        b1 = sample_balanced(cases, spec)
        b2 = sample_balanced(cases, spec)
        assert [it.center for it in b1.items] == [it.center for it in b2.items]
        assert [it.case_id for it in b1.items] == [it.case_id for it in b2.items]

    def test_2d_patches_fit_any_z(self):
        cases = [make_case("a", n=64, seed=6)]
        batch = sample_balanced(cases, PatchSpec("patch2d-64", count=20, rng_seed=7))
        for it in batch.items:
            assert it.image.shape == (64, 64)

    def test_unsatisfiable_class_names_case(self):
        n = 24
        vol = Volume(np.zeros((n, n, n), np.float32), (1, 1, 1))
        empty = LabelMask(np.zeros((n, n, n), np.uint8), (1, 1, 1))
        case = LabeledCase("empty-case", vol, empty)
        with pytest.raises(SamplingError, match="empty-case"):
            sample_balanced([case], PatchSpec("patch3d-16", count=5, rng_seed=0))

    def test_sampling_near_uniform(self):
        # all-vessel mask, uniform centers: frequency within 5x of uniform
        n = 20
        vol = Volume(np.zeros((n, n, n), np.float32), (1, 1, 1))
        mask = LabelMask(np.ones((n, n, n), np.uint8), (1, 1, 1))
        case = LabeledCase("u", vol, mask)
        spec = PatchSpec("patch3d-16", count=10_000, vessel_fraction=1.0, rng_seed=1)
        batch = sample_balanced([case], spec)
        counts = {}
        for it in batch.items:
            counts[it.center] = counts.get(it.center, 0) + 1
        n_eligible = 5 ** 3  # centers 8..12 per axis
        expected = 10_000 / n_eligible
        assert len(counts) == n_eligible
        assert max(counts.values()) < 5 * expected
        assert min(counts.values()) > expected / 5

    def test_patch_must_fit(self):
        case = make_case(n=12)
        with pytest.raises(SamplingError):
            sample_balanced([case], PatchSpec("patch3d-16", count=2, rng_seed=0))


class TestSlices:
    def test_extract_slices_roundtrip(self):
        case = make_case(n=8)
        pairs = extract_slices(case.volume, case.mask)
        assert len(pairs) == 8
        rebuilt = np.stack([img.pixels for img, _ in pairs])
        assert np.array_equal(rebuilt, case.volume.data)
        for _, lab in pairs:
            assert set(np.unique(lab)) <= {0, 1}

    def test_padded_shape_rounds_to_8(self):
        cases = [make_case("a", n=20), make_case("b", n=24)]
        assert padded_slice_shape(cases) == (24, 24)
        cases = [make_case("a", n=21)]
        assert padded_slice_shape(cases) == (24, 24)

    def test_pad_slice(self):
        arr = np.arange(6, dtype=np.float32).reshape(2, 3)
        out = pad_slice(arr, (4, 8))
        assert out.shape == (4, 8)
        assert np.array_equal(out[:2, :3], arr)
        assert out[2:].sum() == 0 and out[:, 3:].sum() == 0

    def test_slice_batch_balance(self):
        spec3 = PhantomSpec(dims=(32, 32, 32), rng_seed=1, noise_std=0.0)
        (vol, mask), = generate_dataset(spec3, 1, rng_seed=2)
        case = LabeledCase("p", vol, mask)
        batch = sample_balanced([case], PatchSpec("slice2d", count=10, rng_seed=3))
        n_vessel = sum(it.is_vessel for it in batch.items)
        assert n_vessel == 8
        for it in batch.items:
            assert it.image.shape == (32, 32)
            assert bool(it.label.any()) == it.is_vessel
