import numpy as np
import pytest
from _numeric import max_rel_error

from bulkalloc.channel_sim import derive_stream
from bulkalloc.model import (
    ADAM_LR,
    AdamState,
    ModelWeights,
    TrainingError,
    adam_step,
    backward,
    clip_by_global_norm,
    forward,
    global_norm,
    init_weights,
    param_shapes,
    predict,
)


def small_model(seed=0, hidden=3, dense=4):
    return init_weights(derive_stream(seed, "model-test"), hidden=hidden, dense=dense)


def param_fd_check(w, x, upstream, h=1e-6):
    """Worst relative error of backward() against central differences of sum(upstream * q)."""
    q, cache = forward(w, x)
    grads = backward(w, cache, upstream)
    worst = 0.0
    for name, arr in w.params.items():
        num = np.empty_like(arr)
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            up = np.dot(upstream, forward(w, x)[0])
            arr[idx] = old - h
            down = np.dot(upstream, forward(w, x)[0])
            arr[idx] = old
            num[idx] = (up - down) / (2 * h)
        worst = max(worst, max_rel_error(grads[name], num, floor=1e-7))
    return worst


class TestInit:
    def test_shapes(self):
        w = init_weights(derive_stream(0, "init"))
        assert {k: v.shape for k, v in w.params.items()} == param_shapes(16, 10, 1)
        assert w.size == 4 * 16 + 16 * 64 + 64 + 160 + 10 + 10 + 10 + 1

    def test_deterministic(self):
        a = init_weights(derive_stream(3, "init"))
        b = init_weights(derive_stream(3, "init"))
        np.testing.assert_array_equal(a.flat(), b.flat())

    def test_biases(self):
        w = init_weights(derive_stream(0, "init"))
        b = w["lstm_b"]
        assert np.all(b[16:32] == 1.0)
        assert np.all(np.delete(b, np.s_[16:32]) == 0.0)
        assert np.all(w["dense1_b"] == 0) and np.all(w["dense2_b"] == 0)
        assert np.all(w["prelu_alpha"] == 0.25)

    def test_glorot_bounds(self):
        w = init_weights(derive_stream(0, "init"))
        for name in ("lstm_Wx", "lstm_Wh", "dense1_W", "dense2_W"):
            fan_in, fan_out = w[name].shape
            assert np.max(np.abs(w[name])) <= np.sqrt(6 / (fan_in + fan_out))

    def test_bad_shapes_rejected(self):
        w = init_weights(derive_stream(0, "init"))
        params = dict(w.params)
        params["dense2_b"] = np.zeros(2)
        with pytest.raises(ValueError):
            ModelWeights(params)


class TestForward:
    def test_dead_network(self):
        w = init_weights(derive_stream(0, "init"))
        for name, arr in w.params.items():
            if name.endswith("W") or name.startswith("lstm_W"):
                arr[:] = 0.0
        q, _ = forward(w, np.zeros((3, 10)))
        np.testing.assert_array_equal(q, 0.5)

    def test_output_range(self):
        w = init_weights(derive_stream(1, "init"))
        gen = np.random.default_rng(0)
        x = np.concatenate([gen.exponential(1, (50, 100)), gen.exponential(100, (50, 100))])
        q, _ = forward(w, x)
        assert np.all((q > 0) & (q < 1))

    def test_weight_sharing(self):
        w = init_weights(derive_stream(1, "init"))
        x = np.random.default_rng(1).exponential(1, (16, 30))
        q, _ = forward(w, x)
        for i in (0, 7, 15):
            np.testing.assert_allclose(forward(w, x[i])[0], q[i : i + 1], rtol=1e-14)
        perm = np.random.default_rng(2).permutation(16)
        np.testing.assert_allclose(forward(w, x[perm])[0], q[perm], rtol=1e-14)

    def test_predict_chunks(self):
        w = init_weights(derive_stream(1, "init"))
        x = np.random.default_rng(1).exponential(1, (5, 16, 20))
        q = predict(w, x, chunk=7)
        assert q.shape == (5, 16)
        np.testing.assert_allclose(q, forward(w, x.reshape(80, 20))[0].reshape(5, 16), rtol=1e-14)

    def test_non_finite_input(self):
        w = init_weights(derive_stream(1, "init"))
        with pytest.raises(ValueError):
            forward(w, np.array([[0.1, np.inf]]))


class TestBackward:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_finite_differences(self, seed):
        w = small_model(seed)
        gen = np.random.default_rng(seed)
        x = gen.exponential(1.0, (4, 5))
        upstream = gen.normal(size=4)
        assert param_fd_check(w, x, upstream) <= 1e-4

    def test_zero_upstream(self):
        w = small_model()
        x = np.random.default_rng(0).exponential(1.0, (4, 5))
        _, cache = forward(w, x)
        grads = backward(w, cache, np.zeros(4))
        assert global_norm(grads) == 0.0

    def test_duplicate_resource_doubles_gradient(self):
        w = small_model()
        x = np.random.default_rng(0).exponential(1.0, (1, 5))
        _, c1 = forward(w, x)
        g1 = backward(w, c1, np.ones(1))
        _, c2 = forward(w, np.repeat(x, 2, axis=0))
        g2 = backward(w, c2, np.ones(2))
        for name in g1:
            np.testing.assert_allclose(g2[name], 2 * g1[name], rtol=1e-12, atol=1e-15)


class TestClip:
    def test_scales_to_max(self):
        grads = {"a": np.array([3.0, 4.0])}
        clipped = clip_by_global_norm(grads, 1.0)
        assert global_norm(clipped) == pytest.approx(1.0)

    def test_below_max_untouched(self):
        grads = {"a": np.array([0.3, 0.4])}
        assert clip_by_global_norm(grads, 1.0) is grads


class TestAdam:
    def test_zero_gradient(self):
        w = small_model()
        before = w.flat().copy()
        state = AdamState.for_weights(w)
        adam_step(w, w.zeros_like(), state)
        np.testing.assert_array_equal(w.flat(), before)
        assert state.step == 1

    def test_first_step_is_signed_lr(self):
        w = small_model()
        before = w.flat().copy()
        gen = np.random.default_rng(0)
        grads = {k: gen.choice([-1, 1], size=v.shape) * gen.uniform(0.1, 10, v.shape) for k, v in w.params.items()}
        adam_step(w, grads, AdamState.for_weights(w))
        flat_g = np.concatenate([g.ravel() for g in grads.values()])
        np.testing.assert_allclose(w.flat() - before, -ADAM_LR * np.sign(flat_g), rtol=1e-5)

    def test_non_finite_gradient(self):
        w = small_model()
        grads = w.zeros_like()
        grads["dense2_b"][0] = np.nan
        with pytest.raises(TrainingError, match="dense2_b"):
            adam_step(w, grads, AdamState.for_weights(w))

    def test_identical_trajectories(self):
        def run():
            w = small_model()
            state = AdamState.for_weights(w)
            x = np.random.default_rng(5).exponential(1.0, (4, 5))
            for _ in range(20):
                q, cache = forward(w, x)
                adam_step(w, backward(w, cache, q - 0.3), state)
            return w.flat()

        np.testing.assert_array_equal(run(), run())
