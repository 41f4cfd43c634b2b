import numpy as np
import pytest

from dpsim.errors import PsfFormatError, ShapeMismatchError
from dpsim.optics import back_focal_distance
from dpsim.psf import (
    CameraRig,
    DpPsf,
    FrustumPoint,
    GridRecord,
    GridSpec,
    ObjectPoint,
    PsfNormalization,
    SearchRanges,
    coc_diameter,
    coc_dp_psf,
    coc_kernels,
    dppsf_kernel_size,
    frustum_to_world,
    generate_grid,
    grid_points,
    grid_search_dp_params,
    ncc,
    normalize,
    nsd,
    read_dppsf,
    reference_points_along_x,
    trace_dp_psf,
    trace_landings,
    world_to_frustum,
    write_dppsf,
    write_score_table,
)
from dpsim.psf.dppsf import _record_dtype
from dpsim.sensor import DpPixelGeometry, PixelIndex, SubPixel


def _psf(left, right, **kwargs):
    return DpPsf(left=np.asarray(left), right=np.asarray(right), anchor=PixelIndex(0, 0), **kwargs)


class TestRig:
    def test_build_focuses_and_stops_down(self, rf50, standard_rig):
        assert standard_rig.efl == pytest.approx(50.0, rel=0.02)
        assert standard_rig.pupil.diameter == pytest.approx(12.5, rel=0.05)
        assert standard_rig.lens.sensor_gap > back_focal_distance(rf50)

    def test_pitch_mismatch(self, standard_rig):
        with pytest.raises(ValueError, match="pitch"):
            CameraRig(
                lens=standard_rig.lens, sensor=standard_rig.sensor, dp=DpPixelGeometry.from_ratios(0.05),
                focus_distance=1.0, f_number=4.0, depth_range=(0.5, 20.0),
            )

    @pytest.mark.parametrize("kwargs", [
        {"depth_range": (2.0, 1.0)},
        {"ks": 20},
        {"n_rays": 2},
    ])
    def test_invalid(self, standard_rig, kwargs):
        settings = dict(
            lens=standard_rig.lens, sensor=standard_rig.sensor, dp=standard_rig.dp,
            focus_distance=1.0, f_number=4.0, depth_range=(0.5, 20.0),
        )
        settings.update(kwargs)
        with pytest.raises(ValueError):
            CameraRig(**settings)


class TestFrustum:
    def test_axis(self, standard_rig):
        assert frustum_to_world(standard_rig, 0, 0, 2.0) == ObjectPoint(0.0, 0.0, 2.0)

    def test_edge(self, standard_rig):
        point = frustum_to_world(standard_rig, 1, 0, 1.0)
        assert point.x == pytest.approx(18 * 1000 / standard_rig.efl)
        assert point.x == pytest.approx(360, rel=0.02)

    def test_round_trip(self, standard_rig):
        point = ObjectPoint(-123.4, 56.7, 3.0)
        again = frustum_to_world(standard_rig, *world_to_frustum(standard_rig, point))
        assert again == pytest.approx(point, abs=1e-9)

    @pytest.mark.parametrize("point", [(1.5, 0, 1.0), (0, 0, 0.1), (0, 0, 25.0), (np.nan, 0, 1.0)])
    def test_outside(self, standard_rig, point):
        with pytest.raises(ValueError):
            frustum_to_world(standard_rig, *point)


class TestTrace:
    def test_conservation(self, standard_rig):
        psf = trace_dp_psf(standard_rig, FrustumPoint(0.4, -0.3, 0.8))
        assert psf.normalization == PsfNormalization.raw_counts
        assert psf.left.sum() + psf.right.sum() + psf.missed_count == 4096
        assert psf.n_rays == 4096
        assert psf.ks == 21

    def test_focused_spot(self, standard_rig):
        psf = trace_dp_psf(standard_rig, FrustumPoint(0, 0, 1.0))
        total = psf.left + psf.right
        assert total[9:12, 9:12].sum() >= 0.99 * total.sum()
        assert abs(psf.disparity()) < 1

    @pytest.mark.parametrize("depth", [0.5, 0.7, 1.0, 1.5, 5.0, 20.0])
    def test_on_axis_flip_symmetry(self, standard_rig, depth):
        psf = trace_dp_psf(standard_rig, FrustumPoint(0, 0, depth))
        np.testing.assert_array_equal(psf.left, psf.right[:, ::-1])

    def test_defocus_phase_flips(self, standard_rig):
        near = trace_dp_psf(standard_rig, FrustumPoint(0, 0, 0.5)).disparity()
        far = trace_dp_psf(standard_rig, FrustumPoint(0, 0, 1.5)).disparity()
        assert np.sign(near) == -np.sign(far)
        # the arrival angle only biases the sub-pixel choice, so the split is
        # well under the half-disc one
        assert 1.5 <= abs(near) <= 2.0
        assert abs(near) < abs(coc_dp_psf(standard_rig, FrustumPoint(0, 0, 0.5)).disparity())

    @pytest.mark.parametrize("depth", [1.0, 20.0])
    def test_frustum_corner_lands_past_the_sensor(self, small_rig, depth):
        bundle = trace_landings(small_rig, FrustumPoint(1, 1, depth))
        assert bundle.center[0] < 0 and bundle.center[1] < 0
        assert bundle.anchor == PixelIndex(0, 0)

        psf = trace_dp_psf(small_rig, FrustumPoint(1, 1, depth))
        assert psf.left.sum() + psf.right.sum() + psf.missed_count == 1024
        assert psf.landed_count > 0
        assert psf.window_misses <= 0.001 * psf.landed_count

    def test_world_point(self, standard_rig):
        world = frustum_to_world(standard_rig, 0.2, 0.1, 2.0)
        a = trace_dp_psf(standard_rig, world)
        b = trace_dp_psf(standard_rig, FrustumPoint(0.2, 0.1, 2.0))
        np.testing.assert_array_equal(a.left, b.left)
        assert a.anchor == b.anchor

    def test_off_axis_anchor(self, standard_rig):
        # images are inverted: a point right of the axis lands left of center
        psf = trace_dp_psf(standard_rig, FrustumPoint(0.5, 0, 2.0))
        assert psf.anchor.i < standard_rig.sensor.cols // 2
        assert abs(psf.anchor.i - standard_rig.sensor.cols * 0.25) < 0.05 * standard_rig.sensor.cols

    def test_landings_do_not_depend_on_dp(self, standard_rig):
        a = trace_landings(standard_rig, FrustumPoint(0.1, 0.1, 3.0))
        b = trace_landings(standard_rig.with_dp(standard_rig.dp.with_ps(standard_rig.sensor.ps)), FrustumPoint(0.1, 0.1, 3.0))
        np.testing.assert_array_equal(a.landing, b.landing)
        assert not a.chief_clipped


class TestNormalize:
    def test_max(self):
        psf = normalize(_psf([[0, 4, 0]] * 3, [[0, 2, 0]] * 3), "max")
        assert psf.left.max() == 1
        assert psf.right[0, 1] == 0.5
        assert psf.normalization == PsfNormalization.max_normalized

    def test_sum(self):
        psf = normalize(_psf([[0, 3, 0]] * 3, [[1, 0, 0]] * 3), "sum")
        assert psf.left.sum() + psf.right.sum() == pytest.approx(1)
        assert psf.left.sum() / psf.right.sum() == pytest.approx(3)

    def test_all_zero(self):
        with pytest.raises(ValueError):
            normalize(_psf(np.zeros((3, 3)), np.zeros((3, 3))), "sum")


class TestMetrics:
    def test_identity(self, standard_rig):
        psf = trace_dp_psf(standard_rig, FrustumPoint(0.3, 0.2, 0.7))
        assert ncc(psf, psf) == pytest.approx(1.0)
        assert nsd(psf, psf) == 0.0

    def test_scale_invariant_ncc(self):
        a = _psf(np.eye(3), np.ones((3, 3)))
        b = _psf(5 * np.eye(3), 5 * np.ones((3, 3)))
        assert ncc(a, b) == pytest.approx(1.0)

    def test_disjoint(self):
        a = _psf(np.eye(3), np.zeros((3, 3)))
        b = _psf(np.zeros((3, 3)), np.eye(3))
        assert ncc(a, b) == 0.0

    def test_nsd_from_ncc(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            a = normalize(_psf(rng.uniform(size=(5, 5)), rng.uniform(size=(5, 5))), "sum")
            b = normalize(_psf(rng.uniform(size=(5, 5)), rng.uniform(size=(5, 5))), "sum")
            va, vb = a.concatenated(), b.concatenated()
            sa, sb = va @ va, vb @ vb
            expected = (sa + sb) / np.sqrt(sa * sb) - 2 * ncc(a, b)
            assert nsd(a, b) == pytest.approx(expected, rel=1e-12)

    def test_kernel_size_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            ncc(_psf(np.eye(3), np.eye(3)), _psf(np.eye(5), np.eye(5)))

    def test_zero_norm(self):
        with pytest.raises(ValueError):
            nsd(_psf(np.eye(3), np.eye(3)), _psf(np.zeros((3, 3)), np.zeros((3, 3))))


class TestGrid:
    def test_lattice_count(self, tiny_rig):
        grid = generate_grid(tiny_rig, GridSpec(lattice=(3, 3, 3)))
        assert len(grid) == 27
        assert grid.ks == 5

    def test_lattice_depths_are_inverse_uniform(self, tiny_rig):
        points = grid_points(tiny_rig, GridSpec(lattice=(1, 1, 3)))
        inverse = [1 / p.depth for p in points]
        assert inverse[0] == pytest.approx(1 / 20.0)
        assert inverse[2] == pytest.approx(1 / 0.5)
        assert inverse[1] == pytest.approx((inverse[0] + inverse[2]) / 2)

    def test_deterministic(self, tiny_rig):
        spec = GridSpec(count=12, seed=7)
        a = generate_grid(tiny_rig, spec)
        b = generate_grid(tiny_rig, spec)
        assert [r.point for r in a.records] == [r.point for r in b.records]
        assert write_dppsf(a.records, a.ks) == write_dppsf(b.records, b.ks)

    def test_thread_count_does_not_matter(self, tiny_rig, monkeypatch):
        spec = GridSpec(lattice=(3, 2, 2))
        monkeypatch.setenv("DPSIM_THREADS", "1")
        single = generate_grid(tiny_rig, spec)
        monkeypatch.setenv("DPSIM_THREADS", "4")
        threaded = generate_grid(tiny_rig, spec)
        assert write_dppsf(single.records, 5) == write_dppsf(threaded.records, 5)

    def test_seed_changes_points(self, tiny_rig):
        a = grid_points(tiny_rig, GridSpec(count=5, seed=1))
        b = grid_points(tiny_rig, GridSpec(count=5, seed=2))
        assert a != b

    @pytest.mark.parametrize("kwargs", [{}, {"count": 0}, {"lattice": (3, 0, 3)}, {"lattice": (1, 1, 1), "count": 3}])
    def test_empty_or_ambiguous_spec(self, kwargs):
        with pytest.raises(ValueError):
            GridSpec(**kwargs)

    def test_spec_dict(self):
        spec = GridSpec(lattice=(2, 3, 4), seed=9)
        assert GridSpec.from_dict(spec.to_dict()) == spec
        assert len(spec) == 24

    @pytest.mark.slow
    def test_window_containment(self, standard_rig):
        grid = generate_grid(standard_rig, GridSpec(lattice=(5, 5, 5)))
        assert grid.skipped_count == 0
        for record in grid.records:
            psf = record.psf
            assert psf.left.sum() + psf.right.sum() + psf.missed_count == 4096
            assert psf.window_misses <= 0.001 * psf.landed_count


class TestDppsf:
    def test_round_trip(self, tiny_rig):
        point = FrustumPoint(0.25, -0.5, 2.0)
        psf = trace_dp_psf(tiny_rig, point)
        records = [GridRecord(point, psf), GridRecord(FrustumPoint(1.0, 1.0, 0.5), None)]

        data = write_dppsf(records, 5)
        assert dppsf_kernel_size(data) == 5
        back = read_dppsf(data)

        assert back[0].point == point
        np.testing.assert_array_equal(back[0].psf.left, psf.left)
        np.testing.assert_array_equal(back[0].psf.right, psf.right)
        assert back[0].psf.anchor == psf.anchor
        assert back[0].psf.missed_count == psf.missed_count
        assert back[0].psf.n_rays == 256
        assert back[0].psf.normalization == PsfNormalization.raw_counts
        assert back[1].skipped

    def test_normalized_round_trip(self, tiny_rig):
        point = FrustumPoint(0.0, 0.0, 0.6)
        psf = normalize(trace_dp_psf(tiny_rig, point), "sum")
        back = read_dppsf(write_dppsf([GridRecord(point, psf)], 5))[0].psf
        assert back.normalization == PsfNormalization.sum_normalized
        np.testing.assert_allclose(back.left, psf.left, rtol=1e-6)

    def test_single_ray_raw_counts(self):
        left = np.zeros((5, 5), dtype=np.int64)
        left[2, 2] = 1
        psf = _psf(left, np.zeros((5, 5), dtype=np.int64), missed_count=4095, n_rays=4096, window_misses=3)
        back = read_dppsf(write_dppsf([GridRecord(FrustumPoint(0, 0, 1.0), psf)], 5))[0].psf

        assert back.normalization == PsfNormalization.raw_counts
        assert back.n_rays == 4096
        assert back.missed_count == 4095
        assert back.window_misses == 3
        assert back.left.dtype == np.int64
        np.testing.assert_array_equal(back.left, left)

    def test_max_normalized_single_peak(self):
        # a max-normalized PSF with one lit cell sums to 1, like a sum-normalized one
        left = np.zeros((5, 5))
        left[2, 2] = 1.0
        psf = _psf(left, np.zeros((5, 5)), normalization=PsfNormalization.max_normalized, n_rays=64)
        back = read_dppsf(write_dppsf([GridRecord(FrustumPoint(0, 0, 1.0), psf)], 5))[0].psf
        assert back.normalization == PsfNormalization.max_normalized
        assert back.n_rays == 64

    def test_reads_version_one(self):
        table = np.zeros(1, dtype=_record_dtype(3, version=1))
        table["u"], table["v"], table["depth"] = 0.5, -0.5, 2.0
        table["anchor_i"], table["anchor_j"] = 10, 20
        table["missed"] = 7
        table["kernels"][0, 0, 1, 1] = 5
        table["kernels"][0, 1, 1, 2] = 4
        header = np.array([(3, 1)], dtype=[("ks", "<u4"), ("count", "<u4")])
        data = b"DPPSF\x01" + header.tobytes() + table.tobytes()

        assert dppsf_kernel_size(data) == 3
        (record,) = read_dppsf(data)
        assert record.point == FrustumPoint(0.5, -0.5, 2.0)
        assert record.psf.normalization == PsfNormalization.raw_counts
        assert record.psf.n_rays == 16
        assert record.psf.anchor == PixelIndex(10, 20)

    def test_unknown_normalization_code(self):
        psf = _psf(np.eye(3), np.eye(3), normalization=PsfNormalization.max_normalized)
        data = bytearray(write_dppsf([GridRecord(FrustumPoint(0, 0, 1.0), psf)], 3))
        # the normalization byte follows magic, header and eight 4-byte fields
        data[6 + 8 + 32] = 9
        with pytest.raises(PsfFormatError, match="normalization"):
            read_dppsf(bytes(data))

    def test_bad_magic(self):
        with pytest.raises(PsfFormatError):
            read_dppsf(b"NOTPSF" + bytes(16))

    def test_truncated(self, tiny_rig):
        point = FrustumPoint(0.0, 0.0, 1.0)
        data = write_dppsf([GridRecord(point, trace_dp_psf(tiny_rig, point))], 5)
        with pytest.raises(PsfFormatError):
            read_dppsf(data[:-4])


class TestCoc:
    @pytest.mark.parametrize("depth", [0.5, 2.0])
    def test_disc_diameter(self, standard_rig, depth):
        efl = standard_rig.efl
        aperture = standard_rig.pupil.diameter
        focus = 1000.0
        expected_px = aperture * abs(depth * 1000 - focus) / (depth * 1000) * efl / (focus - efl) / standard_rig.sensor.ps

        kernels = coc_kernels(standard_rig, depth)[0]
        disc = kernels.sum(axis=0) > 0
        width = disc[standard_rig.ks // 2].sum()
        assert abs(width - expected_px) <= 1
        assert coc_diameter(standard_rig, depth) / standard_rig.sensor.ps == pytest.approx(expected_px)

    def test_fourteen_pixels_at_half_metre(self, standard_rig):
        assert coc_diameter(standard_rig, 0.5) / standard_rig.sensor.ps == pytest.approx(14.0, abs=1)

    def test_in_focus(self, standard_rig):
        psf = coc_dp_psf(standard_rig, FrustumPoint(0, 0, 1.0))
        c = standard_rig.ks // 2
        assert psf.left[c, c] == 0.5
        assert psf.right[c, c] == 0.5
        assert psf.left.sum() == 0.5

    def test_near_and_far_sides(self, standard_rig):
        near = coc_dp_psf(standard_rig, FrustumPoint(0, 0, 0.5))
        far = coc_dp_psf(standard_rig, FrustumPoint(0, 0, 5.0))
        assert near.centroid_x(SubPixel.left) < 0 < near.centroid_x(SubPixel.right)
        assert far.centroid_x(SubPixel.left) > 0 > far.centroid_x(SubPixel.right)

    def test_sum_normalized(self, standard_rig):
        kernels = coc_kernels(standard_rig, [0.5, 0.9, 3.0, 20.0])
        np.testing.assert_allclose(kernels.sum(axis=(1, 2, 3)), 1.0)

    def test_world_point(self, standard_rig):
        world = frustum_to_world(standard_rig, -0.5, 0.5, 2.0)
        psf = coc_dp_psf(standard_rig, world)
        assert psf.anchor.i > standard_rig.sensor.cols // 2
        assert psf.anchor.j < standard_rig.sensor.rows // 2


class TestCalibrate:
    def test_single_candidate(self, small_rig):
        point = FrustumPoint(0.2, 0.0, 0.6)
        reference = [(point, trace_dp_psf(small_rig, point))]
        ranges = SearchRanges(h=(0.78,), f=(1.44,), w=(0.30,), r=(0.50,))

        result = grid_search_dp_params(small_rig, reference, ranges)
        assert result.best_row.ncc == pytest.approx(1.0)
        assert result.best_row.nsd == pytest.approx(0.0, abs=1e-12)
        assert result.best.ratios == pytest.approx(small_rig.dp.ratios)

    def test_tie_goes_to_first(self, small_rig):
        point = FrustumPoint(0.0, 0.0, 0.6)
        reference = [(point, trace_dp_psf(small_rig, point))]
        ranges = SearchRanges(h=(0.78,), f=(1.44,), w=(0.30,), r=(0.50, 0.50))

        result = grid_search_dp_params(small_rig, reference, ranges)
        assert result.best_row is result.table[0]

    def test_invalid_candidates_are_skipped(self, small_rig):
        point = FrustumPoint(0.0, 0.0, 0.6)
        reference = [(point, trace_dp_psf(small_rig, point))]
        ranges = SearchRanges(h=(0.78, 1.60), f=(1.44,), w=(0.30,), r=(0.50,))

        result = grid_search_dp_params(small_rig, reference, ranges)
        assert [row.valid for row in result.table] == [True, False]
        lines = write_score_table(result.table).splitlines()
        assert lines[0] == "h,f,w,r,ncc,nsd,valid"
        assert len(lines) == 3

    def test_all_invalid(self, small_rig):
        point = FrustumPoint(0.0, 0.0, 0.6)
        reference = [(point, trace_dp_psf(small_rig, point))]
        with pytest.raises(ValueError):
            grid_search_dp_params(small_rig, reference, SearchRanges(h=(1.6,), f=(1.44,), w=(0.3,), r=(0.5,)))

    def test_reference_layout(self, standard_rig):
        points = reference_points_along_x(standard_rig, 0.6)
        assert len(points) == 5
        assert [p.u for p in points] == sorted(p.u for p in points)
        assert all(p.v == 0 and p.depth == 0.6 for p in points)

    @pytest.mark.slow
    def test_recovers_calibrated_structure(self, standard_rig):
        reference = [(p, trace_dp_psf(standard_rig, p)) for p in reference_points_along_x(standard_rig, 0.6)]
        ranges = SearchRanges(
            # true values last, so a search that cannot tell candidates apart
            # would stop on an earlier one
            h=(0.74, 0.82, 0.78),
            f=(1.40, 1.48, 1.44),
            w=(0.26, 0.34, 0.30),
            r=(0.45, 0.50),
        )

        result = grid_search_dp_params(standard_rig, reference, ranges)
        ps = standard_rig.sensor.ps
        assert result.best.h == pytest.approx(0.78 * ps)
        assert result.best.f == pytest.approx(1.44 * ps)
        assert result.best.w == pytest.approx(0.30 * ps)
        assert result.best.r == pytest.approx(0.50 * ps)
        assert result.best_row.ncc == pytest.approx(1.0)
        assert sorted(row.nsd for row in result.table if row.valid)[1] > 0
