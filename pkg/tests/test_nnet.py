import logging

import numpy as np
import pytest

from simlab.nnet import (
    Dense,
    LSTMCell,
    ParamSet,
    RecurrentState,
    adam_step,
    dense_forward,
    entropy,
    lstm_step,
    masked_softmax,
    softmax_xent,
    xent_grad,
)


def finite_diff(fn, array, h=1e-5):
    """Central finite differences of scalar fn w.r.t. every entry of array."""
    grad = np.zeros_like(array)
    it = np.nditer(array, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = array[idx]
        array[idx] = orig + h
        up = fn()
        array[idx] = orig - h
        down = fn()
        array[idx] = orig
        grad[idx] = (up - down) / (2 * h)
        it.iternext()
    return grad


def assert_close_grad(analytic, numeric, tol=1e-4):
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-6)
    rel = np.abs(analytic - numeric) / denom
    assert rel.max() < tol, f"max rel err {rel.max():.3g}"


class TestLSTM:
    def test_zero_params_zero_state(self):
        ps = ParamSet()
        cell = LSTMCell(ps, "c", 4, 3)
        out = lstm_step(cell, np.ones(4), RecurrentState.zeros(3))
        assert np.all(out.h == 0.0)
        assert np.all(out.c == 0.0)

    def test_output_bounded(self):
        rng = np.random.default_rng(0)
        ps = ParamSet()
        cell = LSTMCell(ps, "c", 4, 3, rng)
        ps["c.W"] = rng.normal(size=(12, 7)) * 3
        state = RecurrentState(rng.normal(size=3), rng.normal(size=3))
        out = lstm_step(cell, rng.normal(size=4), state)
        assert np.all(np.abs(out.h) < 1.0)

    def test_shape_error(self):
        ps = ParamSet()
        cell = LSTMCell(ps, "c", 4, 3)
        with pytest.raises(ValueError):
            cell.forward(np.zeros(5), RecurrentState.zeros(3))

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        for _ in range(5):
            ps = ParamSet()
            cell = LSTMCell(ps, "c", 4, 3, rng)
            x = rng.normal(size=4)
            state = RecurrentState(rng.normal(size=3) * 0.5, rng.normal(size=3) * 0.5)
            vh = rng.normal(size=3)
            vc = rng.normal(size=3)

            def loss():
                out, _ = cell.forward(x, state)
                return float(vh @ out.h + vc @ out.c)

            ps.zero_grad()
            _, cache = cell.forward(x, state)
            dx, dh, dc = cell.backward(vh.copy(), vc.copy(), cache)
            assert_close_grad(ps.grad("c.W"), finite_diff(loss, ps["c.W"]))
            assert_close_grad(ps.grad("c.b"), finite_diff(loss, ps["c.b"]))
            assert_close_grad(dx, finite_diff(loss, x))
            assert_close_grad(dh, finite_diff(loss, state.h))
            assert_close_grad(dc, finite_diff(loss, state.c))


class TestDense:
    def test_identity_passthrough(self):
        ps = ParamSet()
        layer = Dense(ps, "d", 3, 3)
        ps["d.W"] = np.eye(3)
        x = np.array([1.0, -2.0, 3.0])
        assert np.allclose(dense_forward(layer, x), x)

    def test_relu_all_negative(self):
        ps = ParamSet()
        layer = Dense(ps, "d", 2, 3, activation="relu")
        ps["d.W"] = -np.ones((3, 2))
        assert np.all(dense_forward(layer, np.ones(2)) == 0.0)

    @pytest.mark.parametrize("activation", ["identity", "relu", "tanh"])
    def test_gradient_matches_finite_differences(self, activation):
        rng = np.random.default_rng(2)
        ps = ParamSet()
        layer = Dense(ps, "d", 4, 3, activation=activation, rng=rng)
        x = rng.normal(size=4) + 0.05  # keep away from relu kink
        v = rng.normal(size=3)

        def loss():
            return float(v @ layer.forward(x)[0])

        _, cache = layer.forward(x)
        dx = layer.backward(v.copy(), cache)
        assert_close_grad(ps.grad("d.W"), finite_diff(loss, ps["d.W"]))
        assert_close_grad(ps.grad("d.b"), finite_diff(loss, ps["d.b"]))
        assert_close_grad(dx, finite_diff(loss, x))


class TestSoftmaxXent:
    def test_equal_logits_uniform(self):
        p, loss = softmax_xent(np.zeros(5), 2)
        assert np.allclose(p, 0.2)
        assert abs(loss - np.log(5)) < 1e-12

    def test_extreme_logits_no_overflow(self):
        p, _ = softmax_xent(np.array([1000.0, 0.0]), 0)
        assert np.isfinite(p).all()
        assert p[0] > 0.999999

    def test_probabilities_sum_to_one(self):
        rng = np.random.default_rng(3)
        z = rng.normal(size=7) * 10
        p, _ = softmax_xent(z, 1)
        assert abs(p.sum() - 1.0) < 1e-12

    def test_target_out_of_range(self):
        with pytest.raises(IndexError):
            softmax_xent(np.zeros(3), 5)

    def test_gradient_is_p_minus_onehot(self):
        rng = np.random.default_rng(4)
        z = rng.normal(size=6)
        target = 2
        p, _ = softmax_xent(z, target)
        analytic = xent_grad(p, target)

        def loss():
            return softmax_xent(z, target)[1]

        assert_close_grad(analytic, finite_diff(loss, z))

    def test_masked_positions_get_zero_mass(self):
        z = np.array([5.0, 1.0, 3.0, 2.0])
        visible = np.array([False, True, True, True])
        p = masked_softmax(z, visible)
        assert p[0] == 0.0
        assert abs(p.sum() - 1.0) < 1e-12

    def test_entropy_uniform(self):
        p = np.full(4, 0.25)
        assert abs(entropy(p) - np.log(4)) < 1e-12
        assert entropy(np.array([1.0, 0.0])) == 0.0


class TestAdam:
    def test_first_step_hand_computed(self):
        ps = ParamSet()
        ps.add("w", np.zeros(1))
        ps.grad("w")[...] = 1.0
        adam_step(ps, lr=0.1, weight_decay=0.0)
        assert abs(ps["w"][0] + 0.1) < 1e-7

    def test_zero_lr_no_change(self):
        rng = np.random.default_rng(5)
        ps = ParamSet()
        ps.add("w", rng.normal(size=4))
        before = ps["w"].copy()
        ps.grad("w")[...] = rng.normal(size=4)
        adam_step(ps, lr=0.0, weight_decay=0.5)
        assert np.allclose(ps["w"], before)

    def test_no_decay_update_independent_of_magnitude(self):
        deltas = []
        for init in (0.0, 100.0):
            ps = ParamSet()
            ps.add("w", np.array([init]))
            ps.grad("w")[...] = 2.0
            adam_step(ps, lr=0.01, weight_decay=0.0)
            deltas.append(ps["w"][0] - init)
        assert abs(deltas[0] - deltas[1]) < 1e-12

    def test_decay_shrinks_before_update(self):
        ps = ParamSet()
        ps.add("w", np.array([10.0]))
        ps.grad("w")[...] = 0.0
        adam_step(ps, lr=0.1, weight_decay=0.5)
        # decoupled decay: 10 * (1 - 0.1*0.5); zero gradient adds nothing
        assert abs(ps["w"][0] - 9.5) < 1e-12

    def test_nonfinite_gradient_aborts_that_parameter(self, caplog):
        ps = ParamSet()
        ps.add("a", np.array([1.0]))
        ps.add("b", np.array([1.0]))
        ps.grad("a")[...] = np.nan
        ps.grad("b")[...] = 1.0
        with caplog.at_level(logging.WARNING):
            adam_step(ps, lr=0.1)
        assert ps["a"][0] == 1.0
        assert ps["b"][0] != 1.0
        assert any("non-finite" in r.message for r in caplog.records)
        ps.assert_finite()

    def test_gradients_cleared_and_step_counted(self):
        ps = ParamSet()
        ps.add("w", np.zeros(2))
        ps.grad("w")[...] = 1.0
        adam_step(ps, lr=0.1)
        assert np.all(ps.grad("w") == 0.0)
        assert ps.step_count == 1

    def test_clip_grad_norm(self):
        ps = ParamSet()
        ps.add("w", np.zeros(2))
        ps.grad("w")[...] = np.array([3.0, 4.0])
        norm = ps.clip_grad_norm(1.0)
        assert abs(norm - 5.0) < 1e-12
        assert abs(ps.grad_norm() - 1.0) < 1e-12
