from dataclasses import replace

import numpy as np
import pytest

from dpsim.errors import DegeneratePredictionError, WeightsFormatError
from dpsim.predictor import (
    GridTargets,
    MlpWeights,
    PsfPredictor,
    TrainConfig,
    cosine_lr,
    encode_points,
    evaluate_predictor,
    forward,
    init_layers,
    init_mlp,
    load_weights,
    loss_and_gradients,
    predict,
    save_weights,
    train,
)
from dpsim.psf import FrustumPoint, GridSpec, generate_grid, ncc


class ConstantTargets:
    """
    Random inputs that all map to the same output
    """
    def __init__(self, value):
        self.value = np.asarray(value, dtype=np.float32)

    def sample(self, rng, batch):
        x = rng.uniform(-1, 1, size=(batch, 3)).astype(np.float32)
        return x, np.tile(self.value, (batch, 1))


def _positive(weights: MlpWeights) -> MlpWeights:
    """
    Shifts the output layer up so no predicted kernel clamps to zero
    """
    weights = weights.copy()
    weights.biases[-1][:] = 1.0
    return weights


@pytest.fixture(scope="module")
def tiny_grid(tiny_rig):
    return generate_grid(tiny_rig, GridSpec(count=6, seed=3))


class TestNetwork:
    def test_output_width(self):
        weights = init_mlp(21, seed=0)
        assert weights.dims == [3, 512, 512, 512, 512, 512, 882]
        assert weights.ks == 21

    def test_seeded_init(self):
        a = init_mlp(5, seed=11, hidden=(16, 16))
        b = init_mlp(5, seed=11, hidden=(16, 16))
        c = init_mlp(5, seed=12, hidden=(16, 16))
        for wa, wb in zip(a.weights, b.weights):
            np.testing.assert_array_equal(wa, wb)
        assert not np.array_equal(a.weights[0], c.weights[0])
        assert all(not b.any() for b in a.biases)

    def test_even_kernel(self):
        with pytest.raises(ValueError):
            init_mlp(4, seed=0)

    def test_output_not_a_kernel_pair(self):
        with pytest.raises(ValueError):
            init_layers([3, 8, 10], seed=0).ks

    def test_forward_is_pure(self):
        weights = init_mlp(5, seed=1, hidden=(16,))
        before = [w.copy() for w in weights.weights]
        x = np.array([0.1, -0.2, 0.5])
        np.testing.assert_array_equal(forward(weights, x), forward(weights, x))
        for w, b in zip(weights.weights, before):
            np.testing.assert_array_equal(w, b)

    def test_forward_batch_matches_single(self):
        weights = init_mlp(5, seed=1, hidden=(16,), dtype=np.float64)
        x = np.random.default_rng(0).uniform(-1, 1, size=(4, 3))
        batch = forward(weights, x)
        assert batch.shape == (4, 50)
        np.testing.assert_allclose(batch[2], forward(weights, x[2]))

    @pytest.mark.parametrize("x", [[np.nan, 0, 0], [0, np.inf, 0]])
    def test_non_finite_input(self, x):
        with pytest.raises(ValueError):
            forward(init_mlp(1, seed=0, hidden=(4,)), x)

    def test_wrong_input_width(self):
        with pytest.raises(ValueError):
            forward(init_mlp(1, seed=0, hidden=(4,)), [0.0, 0.0])

    def test_gradients_match_finite_differences(self):
        weights = init_layers([3, 8, 8], seed=5, dtype=np.float64)
        rng = np.random.default_rng(6)
        x = rng.uniform(-1, 1, size=(7, 3))
        y = rng.uniform(0, 1, size=(7, 8))

        _, grads = loss_and_gradients(weights, x, y)
        analytic, numeric = [], []
        eps = 1e-6
        for k in range(len(weights.weights)):
            for slot, params in enumerate((weights.weights[k], weights.biases[k])):
                analytic.append(grads[k][slot].ravel())
                estimate = np.empty(params.size)
                flat = params.reshape(-1)
                for n in range(params.size):
                    saved = flat[n]
                    flat[n] = saved + eps
                    up, _ = loss_and_gradients(weights, x, y)
                    flat[n] = saved - eps
                    down, _ = loss_and_gradients(weights, x, y)
                    flat[n] = saved
                    estimate[n] = (up - down) / (2 * eps)
                numeric.append(estimate)

        analytic = np.concatenate(analytic)
        numeric = np.concatenate(numeric)
        error = np.linalg.norm(analytic - numeric) / np.linalg.norm(analytic + numeric)
        assert error <= 1e-4

    def test_target_shape(self):
        weights = init_mlp(1, seed=0, hidden=(4,))
        with pytest.raises(ValueError):
            loss_and_gradients(weights, np.zeros((2, 3)), np.zeros((2, 3)))


class TestTraining:
    def test_cosine_schedule(self):
        assert cosine_lr(0, 100, 1e-4, 1e-6) == pytest.approx(1e-4)
        assert cosine_lr(99, 100, 1e-4, 1e-6) == pytest.approx(1e-6)
        assert cosine_lr(0, 1, 1e-4, 1e-6) == 1e-4

    @pytest.mark.parametrize("kwargs", [{"iterations": 0}, {"batch": 0}, {"lr_min": 1e-3, "lr_max": 1e-4}])
    def test_bad_config(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(source=ConstantTargets([0.0, 0.0]), **kwargs)

    def test_learns_a_constant(self):
        weights = init_layers([3, 16, 2], seed=0)
        cfg = TrainConfig(
            source=ConstantTargets([0.3, 0.7]), iterations=1000, batch=16,
            lr_max=1e-2, lr_min=1e-4, log_every=0,
        )
        result = train(weights, cfg)
        assert len(result.losses) == 1000
        assert result.losses[-1] < 1e-3
        assert result.losses[-1] < result.losses[0]

    def test_input_weights_untouched(self):
        weights = init_layers([3, 4, 2], seed=0)
        before = save_weights(weights)
        train(weights, TrainConfig(source=ConstantTargets([1.0, 1.0]), iterations=3, batch=2, log_every=0))
        assert save_weights(weights) == before

    def test_deterministic(self, tiny_rig, tiny_grid):
        weights = init_mlp(5, seed=2, hidden=(8,))
        cfg = TrainConfig(source=GridTargets(tiny_grid, tiny_rig), iterations=20, batch=4, seed=9, log_every=5)
        a = train(weights, cfg)
        b = train(weights, cfg)
        assert save_weights(a.weights) == save_weights(b.weights)
        assert a.losses == b.losses

    def test_grid_targets(self, tiny_rig, tiny_grid):
        source = GridTargets(tiny_grid, tiny_rig)
        x, y = source.sample(np.random.default_rng(0), 10)
        assert x.shape == (10, 3)
        assert y.shape == (10, 50)
        assert y.max(axis=1) == pytest.approx(np.ones(10))

    def test_grid_targets_kernel_mismatch(self, standard_rig, tiny_grid):
        with pytest.raises(ValueError):
            GridTargets(tiny_grid, standard_rig)


class TestWeightsFile:
    def test_idempotent(self):
        data = save_weights(init_mlp(3, seed=4, hidden=(8, 8)))
        assert save_weights(load_weights(data)) == data

    def test_values(self):
        weights = init_mlp(3, seed=4, hidden=(8,))
        loaded = load_weights(save_weights(weights))
        assert loaded.dims == weights.dims
        for a, b in zip(loaded.weights, weights.weights):
            np.testing.assert_array_equal(a, b)

    def test_truncated(self):
        data = save_weights(init_mlp(3, seed=4, hidden=(8,)))
        with pytest.raises(WeightsFormatError):
            load_weights(data[:-1])

    def test_trailing_bytes(self):
        data = save_weights(init_mlp(3, seed=4, hidden=(8,)))
        with pytest.raises(WeightsFormatError):
            load_weights(data + b"\x00")

    def test_bad_magic(self):
        with pytest.raises(WeightsFormatError):
            load_weights(b"DPPSF\x01" + bytes(32))


class TestPredict:
    def test_kernel_size_mismatch(self, tiny_rig):
        with pytest.raises(WeightsFormatError):
            PsfPredictor(init_mlp(3, seed=0, hidden=(8,)), tiny_rig)

    def test_sum_normalized(self, tiny_rig):
        weights = _positive(init_mlp(5, seed=0, hidden=(16, 16)))
        psf = predict(weights, tiny_rig, FrustumPoint(0.3, -0.2, 1.5))
        assert psf.left_total + psf.right_total == pytest.approx(1.0)
        assert psf.left.min() >= 0 and psf.right.min() >= 0
        assert psf.ks == 5

    def test_anchor_is_pinhole_image(self, tiny_rig):
        psf = predict(_positive(init_mlp(5, seed=0, hidden=(8,))), tiny_rig, FrustumPoint(0, 0, 1.0))
        assert psf.anchor == (tiny_rig.sensor.cols // 2, tiny_rig.sensor.rows // 2)

    def test_batch(self, tiny_rig):
        predictor = PsfPredictor(_positive(init_mlp(5, seed=0, hidden=(8,))), tiny_rig)
        kernels = predictor.kernels(np.zeros(7), np.linspace(-1, 1, 7), np.full(7, 2.0))
        assert kernels.shape == (7, 2, 5, 5)
        np.testing.assert_allclose(kernels.sum(axis=(1, 2, 3)), 1.0)

    def test_degenerate(self, tiny_rig):
        weights = init_mlp(5, seed=0, hidden=(8,))
        weights.weights[-1][:] = 0
        weights.biases[-1][:] = -1
        with pytest.raises(DegeneratePredictionError):
            predict(weights, tiny_rig, FrustumPoint(0, 0, 1.0))

    def test_outside_frustum(self, tiny_rig):
        with pytest.raises(ValueError):
            predict(_positive(init_mlp(5, seed=0, hidden=(8,))), tiny_rig, FrustumPoint(0, 0, 50.0))

    def test_depth_encoding(self, tiny_rig):
        z = encode_points(tiny_rig, [0, 0], [0, 0], [tiny_rig.d_max, tiny_rig.d_min])[:, 2]
        np.testing.assert_allclose(z, [0.0, 1.0])

    def test_evaluate(self, tiny_rig, tiny_grid):
        predictor = PsfPredictor(_positive(init_mlp(5, seed=0, hidden=(8,))), tiny_rig)
        report = evaluate_predictor(predictor, tiny_grid, limit=4)
        assert report.count == min(4, len(tiny_grid.traced))
        assert 0 <= report.ncc <= 1
        assert report.l2 <= report.l1
        assert set(report.to_dict()) == {"count", "l1", "l2", "ncc", "seconds_per_psf"}

    def test_nearby_points_predict_nearby_psfs(self, tiny_rig):
        predictor = PsfPredictor(_positive(init_mlp(5, seed=4, hidden=(32, 32))), tiny_rig)
        rng = np.random.default_rng(6)
        for u, v, depth in zip(rng.uniform(-0.9, 0.9, 10), rng.uniform(-0.9, 0.9, 10), rng.uniform(0.6, 15.0, 10)):
            a = predictor.predict(u, v, depth)
            b = predictor.predict(u + 1e-3, v - 1e-3, depth)
            assert ncc(a, b) >= 0.999


@pytest.mark.slow
class TestTrainedQuality:
    """
    A reduced version of the full training run: a thin depth slab around the
    focus distance, 400 traced points and a small network
    """

    @pytest.fixture(scope="class")
    def slab_rig(self, standard_rig):
        return replace(standard_rig, n_rays=2048, depth_range=(0.9, 1.1))

    @pytest.fixture(scope="class")
    def trained(self, slab_rig):
        grid = generate_grid(slab_rig, GridSpec(count=400, seed=1))
        cfg = TrainConfig(
            source=GridTargets(grid, slab_rig), iterations=4000, batch=32,
            lr_max=3e-3, lr_min=1e-5, log_every=0,
        )
        result = train(init_mlp(21, seed=0, hidden=(64, 64)), cfg)
        return PsfPredictor(result.weights, slab_rig)

    def test_matches_held_out_traces(self, trained, slab_rig):
        held_out = generate_grid(slab_rig, GridSpec(count=20, seed=99))
        report = evaluate_predictor(trained, held_out)
        assert report.count == 20
        assert report.l1 <= 5e-4
        assert report.ncc >= 0.98

    def test_smooth(self, trained):
        rng = np.random.default_rng(2)
        for u, v, depth in zip(rng.uniform(-0.9, 0.9, 10), rng.uniform(-0.9, 0.9, 10), rng.uniform(0.91, 1.09, 10)):
            a = trained.predict(u, v, depth)
            b = trained.predict(u + 1e-3, v, depth)
            assert ncc(a, b) >= 0.999
