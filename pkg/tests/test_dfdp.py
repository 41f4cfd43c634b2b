import numpy as np
import pytest

from dpsim.dfdp import displacements, dp_cost_volume, read_feature_blob, write_feature_blob
from dpsim.errors import FeatureFormatError, ShapeMismatchError


def _loop_volume(x, y, d_max):
    batch, channels, height, width = x.shape
    volume = np.zeros((batch, 2 * channels, d_max, height, width))
    for b in range(batch):
        for i, d in enumerate(displacements(d_max)):
            for c in range(channels):
                for h in range(height):
                    for w in range(width):
                        if 0 <= w - d < width:
                            volume[b, c, i, h, w] = x[b, c, h, w]
                            volume[b, channels + c, i, h, w] = y[b, c, h, w - d]
    return volume


class TestCostVolume:
    def test_three_columns(self):
        x = np.array([1.0, 2.0, 3.0]).reshape(1, 1, 1, 3)
        y = np.array([4.0, 5.0, 6.0]).reshape(1, 1, 1, 3)
        volume = dp_cost_volume(x, y, 3)
        assert volume.shape == (1, 2, 3, 1, 3)

        assert volume[0, 0, 0, 0].tolist() == [1, 2, 0]
        assert volume[0, 1, 0, 0].tolist() == [5, 6, 0]
        assert volume[0, 0, 1, 0].tolist() == [1, 2, 3]
        assert volume[0, 1, 1, 0].tolist() == [4, 5, 6]
        assert volume[0, 0, 2, 0].tolist() == [0, 2, 3]
        assert volume[0, 1, 2, 0].tolist() == [0, 4, 5]

    def test_displacements(self):
        assert displacements(5).tolist() == [-2, -1, 0, 1, 2]
        assert displacements(4).tolist() == [-2, -1, 0, 1]
        assert displacements(1).tolist() == [0]

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_loop(self, seed):
        rng = np.random.default_rng(seed)
        shape = tuple(int(n) for n in rng.integers(1, 6, size=4))
        d_max = int(rng.integers(1, 2 * shape[3] + 3))
        x = rng.normal(size=shape)
        y = rng.normal(size=shape)
        np.testing.assert_array_equal(dp_cost_volume(x, y, d_max), _loop_volume(x, y, d_max))

    @pytest.mark.parametrize("d_max", [1, 5, 8])
    def test_matches_loop_at_full_size(self, d_max):
        rng = np.random.default_rng(d_max)
        x = rng.normal(size=(2, 4, 8, 8))
        y = rng.normal(size=(2, 4, 8, 8))
        np.testing.assert_array_equal(dp_cost_volume(x, y, d_max), _loop_volume(x, y, d_max))

    @pytest.mark.parametrize("d_max", [3, 7, 9])
    def test_swapping_sides_reverses_the_shift(self, d_max):
        rng = np.random.default_rng(d_max)
        x = rng.normal(size=(2, 3, 4, 6))
        y = rng.normal(size=(2, 3, 4, 6))
        forward = dp_cost_volume(x, y, d_max)
        swapped = dp_cost_volume(y, x, d_max)
        shifts = displacements(d_max).tolist()
        width = x.shape[3]

        for i, d in enumerate(shifts):
            j = shifts.index(-d)
            for w in range(width):
                if not 0 <= w - d < width:
                    continue
                # column w of slice d pairs x[w] with y[w - d]; slice -d of the
                # swapped volume pairs y[w - d] with x[w] at column w - d
                np.testing.assert_array_equal(swapped[:, 3:, j, :, w - d], forward[:, :3, i, :, w])
                np.testing.assert_array_equal(swapped[:, :3, j, :, w - d], forward[:, 3:, i, :, w])

    def test_shift_past_width(self):
        x = np.ones((1, 1, 2, 2))
        volume = dp_cost_volume(x, x, 7)
        assert not volume[:, :, 0].any()
        assert not volume[:, :, 6].any()

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            dp_cost_volume(np.zeros((1, 2, 3, 4)), np.zeros((1, 2, 3, 5)), 3)

    @pytest.mark.parametrize("d_max", [0, -1])
    def test_bad_d_max(self, d_max):
        with pytest.raises(ValueError):
            dp_cost_volume(np.zeros((1, 1, 1, 1)), np.zeros((1, 1, 1, 1)), d_max)

    def test_not_4d(self):
        with pytest.raises(ValueError):
            dp_cost_volume(np.zeros((2, 3)), np.zeros((2, 3)), 3)


class TestFeatureBlob:
    def test_round_trip(self):
        features = np.random.default_rng(0).normal(size=(2, 3, 4, 5)).astype(np.float32)
        np.testing.assert_array_equal(read_feature_blob(write_feature_blob(features)), features)

    def test_volume_is_folded(self):
        volume = dp_cost_volume(np.ones((1, 2, 3, 4)), np.ones((1, 2, 3, 4)), 5)
        back = read_feature_blob(write_feature_blob(volume))
        assert back.shape == (1, 20, 3, 4)
        np.testing.assert_array_equal(back.reshape(volume.shape), volume)

    def test_bad_magic(self):
        with pytest.raises(FeatureFormatError):
            read_feature_blob(b"DPPSF\x01" + bytes(40))

    def test_payload_size(self):
        data = write_feature_blob(np.zeros((1, 1, 2, 2)))
        with pytest.raises(FeatureFormatError):
            read_feature_blob(data + bytes(4))

    def test_needs_4d(self):
        with pytest.raises(ValueError):
            write_feature_blob(np.zeros((3, 3)))
