from types import SimpleNamespace

import numpy as np
import pytest

from dpsim.sensor import (
    DpPixelGeometry,
    PixelIndex,
    SensorGeometry,
    SubPixel,
    SubPixelHits,
    accumulate_psf,
    assign_direct,
    assign_refracted,
    assign_subpixel,
    direct_boundaries,
    pixel_of,
    refracted_boundaries,
)


@pytest.fixture
def unit_dp():
    """
    The calibrated structure at unit pitch
    """
    return DpPixelGeometry.from_ratios(1.0)


@pytest.fixture
def grid3():
    return SensorGeometry(width=3.0, height=3.0, cols=3, rows=3)


def _samples(n, seed=0):
    rng = np.random.default_rng(seed)
    x_i = rng.uniform(-5, 5, n)
    x_k = x_i + rng.uniform(-0.7, 0.7, n)
    tan = rng.uniform(-0.5, 0.5, n)
    return x_i, x_k, tan


def _strip_oracle(x, x_i, w):
    """
    Which sub-pixel strip a ray reaching the sub-pixel plane at x hits: left
    spans (x_i, x_i + w], right spans [x_i - w, x_i]
    """
    left = (x > x_i) & (x <= x_i + w)
    right = (x >= x_i - w) & (x <= x_i)
    return np.where(left, SubPixel.left, np.where(right, SubPixel.right, SubPixel.missed))


def _far_from(band, x, *edges):
    return np.all([np.abs(x - e) > band for e in edges], axis=0)


class TestGeometry:
    def test_from_ratios(self):
        dp = DpPixelGeometry.from_ratios(0.05)
        assert dp.h == pytest.approx(0.039)
        assert dp.f == pytest.approx(0.072)
        assert dp.ratios["w"] == pytest.approx(0.30)

    def test_dict_round_trip(self):
        dp = DpPixelGeometry.from_ratios(0.046875, h=0.8, f=1.5)
        again = DpPixelGeometry.from_dict(dp.to_dict())
        assert again.ps == dp.ps
        assert again.ratios == pytest.approx(dp.ratios)

    def test_from_dict_defaults(self):
        dp = DpPixelGeometry.from_dict({"ps_mm": 1.0})
        assert dp == DpPixelGeometry.from_ratios(1.0)

    def test_from_dict_unknown_key(self):
        with pytest.raises(ValueError, match="Unknown"):
            DpPixelGeometry.from_dict({"ps_mm": 1.0, "g_over_ps": 1})

    @pytest.mark.parametrize("ratios", [
        {"h": 1.5, "f": 1.44},
        {"w": 0.6},
        {"r": 0.55},
    ])
    def test_invalid_structure(self, ratios):
        with pytest.raises(ValueError):
            DpPixelGeometry.from_ratios(1.0, **ratios)

    def test_sensor_pitch(self):
        sensor = SensorGeometry(36.0, 24.0, 768, 512)
        assert sensor.ps == pytest.approx(0.046875)

    def test_non_square_pixels(self):
        with pytest.raises(ValueError):
            SensorGeometry(36.0, 24.0, 768, 768)

    def test_window(self):
        window = SensorGeometry.window(0.5, 21)
        assert (window.cols, window.rows) == (21, 21)
        assert window.ps == 0.5


class TestPixelOf:
    def test_center(self, grid3):
        hit = pixel_of(grid3, (0.0, 0.0))
        assert hit.index == PixelIndex(1, 1)
        assert hit.center == (0.0, 0.0)

    def test_binning(self, grid3):
        assert pixel_of(grid3, (1.3, 0.0)).index == PixelIndex(2, 1)
        assert pixel_of(grid3, (-1.3, 1.2)).index == PixelIndex(0, 2)

    def test_off_sensor(self, grid3):
        assert pixel_of(grid3, (10.0, 0.0)) is None

    def test_mirrored_centers(self):
        sensor = SensorGeometry(36.0, 24.0, 768, 512)
        a = pixel_of(sensor, (3.3, 0.7))
        b = pixel_of(sensor, (-3.3, -0.7))
        assert b.center == (-a.center[0], -a.center[1])


class TestRefracted:
    def test_normal_incidence_boundaries(self, unit_dp):
        left, mid, right = refracted_boundaries(unit_dp, 0.0, 0.0)
        assert mid == 0
        assert left == pytest.approx(0.6545, abs=1e-4)
        assert right == -left

    def test_examples(self, unit_dp):
        assert assign_refracted(unit_dp, 0.0, 0.2, 0.0) == SubPixel.left
        assert assign_refracted(unit_dp, 0.0, -0.5, 0.1) == SubPixel.right

        _, mid, right = refracted_boundaries(unit_dp, 0.0, 0.1)
        assert mid == pytest.approx(-0.1702, abs=1e-4)
        assert right == pytest.approx(-0.8247, abs=1e-4)

    def test_scalar_and_array_forms(self, unit_dp):
        assert isinstance(assign_refracted(unit_dp, 0.0, 0.2, 0.0), SubPixel)
        codes = assign_refracted(unit_dp, np.zeros(2), np.array([0.2, -0.2]), np.zeros(2))
        assert codes.tolist() == [SubPixel.left, SubPixel.right]

    def test_needs_f_above_h(self, unit_dp):
        broken = SimpleNamespace(ps=1.0, r=0.5, f=unit_dp.h, h=unit_dp.h, w=unit_dp.w)
        with pytest.raises(ValueError):
            assign_refracted(broken, 0.0, 0.0, 0.0)

    def test_mirror_antisymmetry(self, unit_dp):
        x_i, x_k, tan = _samples(10_000, seed=1)
        left, mid, right = refracted_boundaries(unit_dp, x_i, tan)
        m_left, m_mid, m_right = refracted_boundaries(unit_dp, -x_i, -tan)
        np.testing.assert_array_equal(m_left, -right)
        np.testing.assert_array_equal(m_mid, -mid)
        np.testing.assert_array_equal(m_right, -left)

        codes = assign_refracted(unit_dp, x_i, x_k, tan)
        mirrored = assign_refracted(unit_dp, -x_i, -x_k, -tan)
        off_mid = x_k != mid
        swap = np.array([SubPixel.missed, SubPixel.right, SubPixel.left])
        np.testing.assert_array_equal(mirrored[off_mid], swap[codes[off_mid]])

    def test_thin_microlens_oracle(self, unit_dp):
        dp = unit_dp
        x_i, x_k, tan = _samples(100_000, seed=2)

        # every ray through a thin lens meets the parallel ray through its
        # center on the focal plane
        focal_x = x_i + dp.f * tan
        x = x_k + dp.h * (focal_x - x_k) / dp.f
        expected = _strip_oracle(x, x_i, dp.w)

        codes = assign_refracted(dp, x_i, x_k, tan)
        band = 1e-9
        keep = _far_from(band, x_k, *refracted_boundaries(dp, x_i, tan))
        keep &= _far_from(band, x, x_i - dp.w, x_i, x_i + dp.w)
        assert keep.mean() > 0.99
        np.testing.assert_array_equal(codes[keep], expected[keep])


class TestDirect:
    def test_normal_incidence_boundaries(self, unit_dp):
        left, mid, right = direct_boundaries(unit_dp, 0.0, 0.0)
        assert (left, mid, right) == pytest.approx((0.3, 0.0, -0.3))

    def test_examples(self, unit_dp):
        assert assign_direct(unit_dp, 0.0, 0.0, 0.1) == SubPixel.left
        assert assign_direct(unit_dp, 0.0, 0.3, 0.1) == SubPixel.missed

    def test_straight_line_oracle(self, unit_dp):
        dp = unit_dp
        x_i, x_k, tan = _samples(100_000, seed=3)
        x = x_k + dp.h * tan
        expected = _strip_oracle(x, x_i, dp.w)

        codes = assign_direct(dp, x_i, x_k, tan)
        band = 1e-9
        keep = _far_from(band, x_k, *direct_boundaries(dp, x_i, tan))
        keep &= _far_from(band, x, x_i - dp.w, x_i, x_i + dp.w)
        np.testing.assert_array_equal(codes[keep], expected[keep])


class TestAssignSubpixel:
    down = (0.0, 0.0, 1.0)

    def test_inside_microlens_is_refracted(self, unit_dp, grid3):
        # x_k = 0.4 is left when refracted but past the direct left boundary
        assert assign_direct(unit_dp, 0.0, 0.4, 0.0) == SubPixel.missed
        assert assign_subpixel(unit_dp, grid3, (0.4, 0.0), self.down) == (PixelIndex(1, 1), SubPixel.left)

    def test_corner_is_direct(self, unit_dp, grid3):
        # the corner is sqrt(2)/2 from the center of pixel (2, 2), outside r = 0.5
        assert assign_refracted(unit_dp, 1.0, 0.5, 0.0) == SubPixel.right
        assert assign_subpixel(unit_dp, grid3, (0.5, 0.5), self.down) == (PixelIndex(2, 2), SubPixel.missed)

    def test_center_tie_goes_right(self, unit_dp, grid3):
        assert assign_subpixel(unit_dp, grid3, (0.0, 0.0), self.down) == (PixelIndex(1, 1), SubPixel.right)

    def test_off_sensor(self, unit_dp, grid3):
        assert assign_subpixel(unit_dp, grid3, (5.0, 0.0), self.down) == (None, SubPixel.missed)


def _hits(*rays):
    i, j, side = zip(*rays)
    return SubPixelHits(i=np.array(i), j=np.array(j), side=np.array(side, dtype=np.int8))


class TestAccumulate:
    def test_single_ray(self):
        psf = accumulate_psf(_hits((5, 5, SubPixel.left)), PixelIndex(5, 5), 21)
        assert psf.left[10, 10] == 1
        assert psf.left.sum() == 1
        assert psf.right.sum() == 0
        assert psf.missed_count == 0

    def test_outside_window(self):
        psf = accumulate_psf(_hits((16, 5, SubPixel.left)), PixelIndex(5, 5), 21)
        assert psf.left.sum() == 0
        assert psf.right.sum() == 0
        assert psf.missed_count == 1
        assert psf.window_misses == 1

    def test_conservation(self):
        rng = np.random.default_rng(4)
        rays = list(zip(
            rng.integers(-1, 30, 4000), rng.integers(0, 30, 4000), rng.integers(0, 3, 4000),
        ))
        psf = accumulate_psf(_hits(*rays), PixelIndex(15, 15), 21, n_rays=4096)
        assert psf.left.sum() + psf.right.sum() + psf.missed_count == 4096
        assert psf.n_rays == 4096

    def test_even_kernel(self):
        with pytest.raises(ValueError):
            accumulate_psf(_hits((5, 5, SubPixel.left)), PixelIndex(5, 5), 20)
