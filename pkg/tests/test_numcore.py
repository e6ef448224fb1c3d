import numpy as np
import pytest

from pexlab import numcore
from pexlab.errors import (
    BadMagicError,
    ChecksumError,
    NumericsError,
    ShapeError,
    TruncatedFileError,
    VersionError,
)
from pexlab.numcore import AdamState, MlpParams


def oracle_forward(params, x):
    """Straight-line re-implementation of the forward pass."""
    a = np.array(x, dtype=np.float64)
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        a = a @ w.T + b
        if i < len(params.weights) - 1:
            a = np.maximum(a, 0.0)
    return a


class TestForward:
    def test_zero_network_maps_everything_to_zero(self, rng):
        params = MlpParams.zeros([3, 5, 2])
        out, _ = numcore.mlp_forward(params, rng.normal(size=(7, 3)))
        assert np.array_equal(out, np.zeros((7, 2)))

    def test_identity_single_layer(self):
        params = MlpParams.from_arrays([np.eye(2)], [np.zeros(2)])
        out, _ = numcore.mlp_forward(params, np.array([[1.0, -2.0]]))
        assert np.array_equal(out[0], [1.0, -2.0])

    def test_random_net_matches_oracle(self, rng):
        params = MlpParams.init([2, 16, 1], rng)
        x = rng.normal(size=(5, 2))
        out, _ = numcore.mlp_forward(params, x)
        assert np.max(np.abs(out - oracle_forward(params, x))) < 1e-12

    def test_dimension_mismatch_rejected(self, rng):
        params = MlpParams.init([3, 4, 1], rng)
        with pytest.raises(ShapeError, match="input shape"):
            numcore.mlp_forward(params, rng.normal(size=(5, 2)))

    def test_deterministic(self, rng):
        params = MlpParams.init([4, 8, 2], rng)
        x = rng.normal(size=(6, 4))
        a, _ = numcore.mlp_forward(params, x)
        b, _ = numcore.mlp_forward(params, x)
        assert np.array_equal(a, b)

    def test_mlp_value_matches_forward(self, rng):
        params = MlpParams.init([3, 6, 2], rng)
        x = rng.normal(size=(4, 3))
        assert np.array_equal(numcore.mlp_value(params, x), numcore.mlp_forward(params, x)[0])


class TestBackward:
    def test_zero_output_grad_gives_zero_grads(self, rng):
        params = MlpParams.init([3, 8, 2], rng)
        _, tape = numcore.mlp_forward(params, rng.normal(size=(4, 3)))
        grads = numcore.mlp_backward(params, tape, np.zeros((4, 2)))
        assert np.array_equal(grads.flat, np.zeros_like(grads.flat))

    def test_single_linear_layer_weight_grad_is_input(self):
        params = MlpParams.from_arrays([np.array([[0.3, -0.7]])], [np.zeros(1)])
        x = np.array([[2.0, 5.0]])
        _, tape = numcore.mlp_forward(params, x)
        grads = numcore.mlp_backward(params, tape, np.ones((1, 1)))
        assert np.array_equal(grads.weights[0], x)
        assert np.array_equal(grads.biases[0], [1.0])

    def test_gradients_match_finite_differences(self, rng):
        params = MlpParams.init([3, 8, 8, 1], rng)
        x = rng.normal(size=(6, 3))
        g_out = rng.normal(size=(6, 1))

        def loss_fn(p):
            out, tape = numcore.mlp_forward(p, x)
            return float((out * g_out).sum()), numcore.mlp_backward(p, tape, g_out)

        assert numcore.grad_check(loss_fn, params) < 1e-4

    def test_tape_mismatch_rejected(self, rng):
        p1 = MlpParams.init([3, 8, 1], rng)
        p2 = MlpParams.init([3, 4, 1], rng)
        _, tape = numcore.mlp_forward(p1, rng.normal(size=(2, 3)))
        with pytest.raises(ShapeError):
            numcore.mlp_backward(p2, tape, np.ones((2, 1)))

    def test_input_grad(self, rng):
        params = MlpParams.init([3, 8, 1], rng)
        x = rng.normal(size=(4, 3))
        _, tape = numcore.mlp_forward(params, x)
        _, input_grad = numcore.mlp_backward(params, tape, np.ones((4, 1)), with_input_grad=True)
        # central differences on each input coordinate of each row
        step = 1e-6
        for i in range(4):
            for j in range(3):
                xp, xm = x.copy(), x.copy()
                xp[i, j] += step
                xm[i, j] -= step
                num = (
                    numcore.mlp_value(params, xp)[i, 0]
                    - numcore.mlp_value(params, xm)[i, 0]
                ) / (2 * step)
                assert abs(input_grad[i, j] - num) < 1e-5


def scalar_adam_oracle(grad_fn, w0, lr, steps):
    """Textbook bias-corrected Adam on a scalar, plain Python floats."""
    m = v = 0.0
    w = w0
    for t in range(1, steps + 1):
        g = grad_fn(w)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        m_hat = m / (1 - 0.9**t)
        v_hat = v / (1 - 0.999**t)
        w -= lr * m_hat / (np.sqrt(v_hat) + 1e-8)
    return w


class TestAdam:
    def test_zero_gradient_is_noop(self, rng):
        for seed in range(5):
            params = MlpParams.init([3, 6, 2], np.random.default_rng(seed))
            before = params.flat.copy()
            state = AdamState.for_params(params)
            grads = MlpParams.zeros(params.layer_sizes)
            numcore.adam_step(params, grads, state, 0.1)
            assert np.array_equal(params.flat, before)
            assert state.step_count == 1

    def test_first_step_bounded_by_lr(self):
        lr = 0.07
        for g in (3.0, -0.004, 1e-8):
            x = np.array([1.0])
            state = AdamState.for_size(1)
            numcore.adam_step_flat(x, np.array([g]), state, lr)
            move = x[0] - 1.0
            assert move * g <= 0  # moves against the gradient
            assert abs(move) <= lr + 1e-9

    def test_quadratic_descent_matches_scalar_oracle(self):
        x = np.array([1.0])
        state = AdamState.for_size(1)
        for _ in range(100):
            numcore.adam_step_flat(x, 2.0 * x, state, 0.1)
        expected = scalar_adam_oracle(lambda w: 2.0 * w, 1.0, 0.1, 100)
        assert abs(x[0]) < 0.1
        assert abs(x[0] - expected) < 1e-12

    def test_nonfinite_gradient_rejected_with_layer_index(self, rng):
        params = MlpParams.init([3, 6, 2], rng)
        grads = MlpParams.zeros(params.layer_sizes)
        grads.weights[1][0, 0] = np.nan
        state = AdamState.for_params(params)
        with pytest.raises(NumericsError, match="layer 1"):
            numcore.adam_step(params, grads, state, 0.1)

    def test_zero_learning_rate_only_advances_counter(self, rng):
        params = MlpParams.init([3, 6, 2], rng)
        before = params.flat.copy()
        state = AdamState.for_params(params)
        grads = MlpParams.zeros(params.layer_sizes)
        grads.flat[...] = rng.normal(size=grads.flat.size)
        numcore.adam_step(params, grads, state, 0.0)
        assert np.array_equal(params.flat, before)
        assert state.step_count == 1


class TestSoftUpdate:
    def test_full_speed_copies(self, rng):
        target = MlpParams.init([2, 4, 1], rng)
        online = MlpParams.init([2, 4, 1], rng)
        numcore.soft_update(target, online, 1.0)
        assert np.array_equal(target.flat, online.flat)

    def test_equal_nets_unchanged(self, rng):
        online = MlpParams.init([2, 4, 1], rng)
        target = online.copy()
        numcore.soft_update(target, online, 0.3)
        assert np.allclose(target.flat, online.flat, rtol=0, atol=1e-15)

    def test_paper_speed_scalar_value(self):
        target = MlpParams.zeros([1, 1])
        online = MlpParams.zeros([1, 1])
        online.flat[...] = 1.0
        numcore.soft_update(target, online, 5e-3)
        assert abs(target.flat[0] - 0.005) < 1e-15

    def test_geometric_convergence(self, rng):
        target = MlpParams.init([2, 4, 1], rng)
        online = MlpParams.init([2, 4, 1], rng)
        speed = 0.25
        gap = np.abs(target.flat - online.flat).max()
        for _ in range(10):
            numcore.soft_update(target, online, speed)
            new_gap = np.abs(target.flat - online.flat).max()
            assert new_gap == pytest.approx(gap * (1 - speed), rel=1e-9)
            gap = new_gap

    def test_bad_speed_and_shape_rejected(self, rng):
        a, b = MlpParams.init([2, 4, 1], rng), MlpParams.init([2, 5, 1], rng)
        with pytest.raises(ShapeError):
            numcore.soft_update(a, b, 0.5)
        with pytest.raises(ValueError):
            numcore.soft_update(a, a.copy(), 0.0)


class TestGradCheck:
    def test_quadratic_loss_on_linear_net(self, rng):
        params = MlpParams.init([3, 1], rng)
        x = rng.normal(size=(8, 3))
        y = rng.normal(size=(8, 1))

        def loss_fn(p):
            out, tape = numcore.mlp_forward(p, x)
            d = out - y
            return float((d * d).sum()), numcore.mlp_backward(p, tape, 2.0 * d)

        assert numcore.grad_check(loss_fn, params) < 1e-7

    def test_reports_inf_for_nonfinite(self, rng):
        params = MlpParams.init([2, 1], rng)

        def loss_fn(p):
            grads = MlpParams.zeros(p.layer_sizes)
            grads.flat[...] = np.nan
            return float("nan"), grads

        assert numcore.grad_check(loss_fn, params) == float("inf")


class TestCheckpointFormat:
    def _nets(self, rng):
        return {
            "critic": MlpParams.init([4, 8, 1], rng),
            "actor": MlpParams.init([3, 8, 2], rng),
        }

    def test_round_trip_bit_exact(self, tmp_path, rng):
        nets = self._nets(rng)
        path = tmp_path / "ckpt.pexc"
        numcore.save_checkpoint(path, nets)
        loaded = numcore.load_checkpoint(path)
        assert list(loaded) == ["critic", "actor"]
        for name, params in nets.items():
            assert loaded[name].layer_sizes == params.layer_sizes
            assert np.array_equal(loaded[name].flat, params.flat)

    def test_single_byte_corruption_detected(self, tmp_path, rng):
        path = tmp_path / "ckpt.pexc"
        numcore.save_checkpoint(path, self._nets(rng))
        blob = bytearray(path.read_bytes())
        blob[len(blob) // 2] ^= 0x01
        path.write_bytes(bytes(blob))
        with pytest.raises(ChecksumError):
            numcore.load_checkpoint(path)

    def test_bad_magic(self, tmp_path, rng):
        path = tmp_path / "ckpt.pexc"
        numcore.save_checkpoint(path, self._nets(rng))
        blob = bytearray(path.read_bytes())
        blob[0] = ord("X")
        path.write_bytes(bytes(blob))
        with pytest.raises(BadMagicError):
            numcore.load_checkpoint(path)

    def test_bad_version(self, tmp_path, rng):
        path = tmp_path / "ckpt.pexc"
        numcore.save_checkpoint(path, self._nets(rng))
        blob = bytearray(path.read_bytes())
        blob[4] = 99
        path.write_bytes(bytes(blob))
        with pytest.raises(VersionError):
            numcore.load_checkpoint(path)

    def test_truncated(self, tmp_path, rng):
        path = tmp_path / "ckpt.pexc"
        numcore.save_checkpoint(path, self._nets(rng))
        path.write_bytes(path.read_bytes()[:3])
        with pytest.raises(TruncatedFileError):
            numcore.load_checkpoint(path)


def test_seeded_init_reproducible():
    a = MlpParams.init([3, 8, 2], np.random.default_rng(77))
    b = MlpParams.init([3, 8, 2], np.random.default_rng(77))
    assert np.array_equal(a.flat, b.flat)
    bound0 = 1.0 / np.sqrt(3)
    assert np.abs(a.weights[0]).max() <= bound0
