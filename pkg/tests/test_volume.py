import numpy as np
import pytest

from vesselbench.errors import BoundsError, ParameterError, ValidationError
from vesselbench.volume import (
    LabelMask,
    Volume,
    extract_slice,
    intensity_histogram,
)


def make_volume(nx=4, ny=5, nz=6, seed=0):
    rng = np.random.default_rng(seed)
    return Volume(rng.normal(size=(nz, ny, nx)).astype(np.float32), (0.5, 0.5, 0.6))


class TestTypes:
    def test_dims_order(self):
        v = make_volume(4, 5, 6)
        assert v.dims == (4, 5, 6)
        assert v.data.shape == (6, 5, 4)

    def test_linear_order_is_x_fastest(self):
        v = make_volume(3, 4, 5)
        nx, ny, _ = v.dims
        x, y, z = 2, 1, 3
        linear = x + nx * (y + ny * z)
        assert v.data.ravel()[linear] == v.value_at((x, y, z))

    def test_rejects_non_finite(self):
        data = np.zeros((2, 2, 2), np.float32)
        data[0, 0, 0] = np.nan
        with pytest.raises(ValidationError):
            Volume(data, (1, 1, 1))

    def test_rejects_bad_spacing(self):
        with pytest.raises(ValidationError):
            Volume(np.zeros((2, 2, 2)), (1, 0, 1))
        with pytest.raises(ValidationError):
            Volume(np.zeros((2, 2, 2)), (1, -2, 1))

    def test_mask_must_be_binary(self):
        with pytest.raises(ValidationError):
            LabelMask(np.full((2, 2, 2), 3, np.uint8), (1, 1, 1))
        m = LabelMask(np.ones((2, 2, 2), np.uint8), (1, 1, 1))
        assert m.voxel_count() == 8

    def test_immutability(self):
        v = make_volume()
        with pytest.raises(ValueError):
            v.data[0, 0, 0] = 1.0


class TestExtractSlice:
    def test_shape_axis_z(self):
        v = make_volume(4, 5, 6)
        s = extract_slice(v, "z", 2)
        assert (s.width, s.height) == (4, 5)

    def test_constant_volume_gives_constant_slice(self):
        v = Volume(np.full((3, 3, 3), 2.5, np.float32), (1, 1, 1))
        for axis in "xyz":
            assert (extract_slice(v, axis, 1).pixels == 2.5).all()

    def test_indexing_identity(self):
        data = np.zeros((5, 5, 5), np.float32)
        data[3, 2, 1] = 7.0  # voxel (x=1, y=2, z=3)
        v = Volume(data, (1, 1, 1))
        assert extract_slice(v, "z", 3).pixels[2, 1] == 7.0
        assert extract_slice(v, "y", 2).pixels[3, 1] == 7.0
        assert extract_slice(v, "x", 1).pixels[3, 2] == 7.0

    def test_out_of_range(self):
        v = make_volume(4, 5, 6)
        with pytest.raises(BoundsError):
            extract_slice(v, "z", 6)

    @pytest.mark.parametrize("axis,stack_axis", [("z", 0), ("y", 1), ("x", 2)])
    def test_slices_reconstruct_volume(self, axis, stack_axis):
        v = make_volume(3, 4, 5, seed=2)
        n = v.dims[{"x": 0, "y": 1, "z": 2}[axis]]
        planes = [extract_slice(v, axis, i).pixels for i in range(n)]
        rebuilt = np.stack(planes, axis=stack_axis)
        assert np.array_equal(rebuilt, v.data)


class TestHistogram:
    def test_split_half(self):
        data = np.array([0, 0, 0, 0, 10, 10, 10, 10], np.float32).reshape(2, 2, 2)
        edges, counts = intensity_histogram(Volume(data, (1, 1, 1)), 2)
        assert counts.tolist() == [4, 4]
        assert edges[0] == 0 and edges[-1] == 10

    def test_counts_conserved(self):
        v = make_volume(6, 7, 8, seed=3)
        for bins in (2, 3, 16, 101):
            _, counts = intensity_histogram(v, bins)
            assert counts.sum() == v.n_voxels

    def test_unit_spaced_values(self):
        # derived by hand: bins [0,.75,1.5,2.25,3], one value in each
        data = np.array([0, 1, 2, 3], np.float32).reshape(1, 1, 4)
        edges, counts = intensity_histogram(Volume(data, (1, 1, 1)), 4)
        assert counts.tolist() == [1, 1, 1, 1]
        assert np.allclose(edges, [0, 0.75, 1.5, 2.25, 3.0])

    def test_constant_volume_single_bin(self):
        v = Volume(np.full((2, 2, 2), 5.0, np.float32), (1, 1, 1))
        _, counts = intensity_histogram(v, 4)
        assert counts.sum() == 8
        assert (counts > 0).sum() == 1

    def test_bins_validation(self):
        with pytest.raises(ParameterError):
            intensity_histogram(make_volume(), 1)
