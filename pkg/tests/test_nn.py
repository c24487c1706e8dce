import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import central_diff
from qrlander.nn import AdamState, Mlp, adam_step, count_params, mlp_backward, mlp_forward
from qrlander.errors import StructureError
from qrlander.vqc import PolicyParams


def reference_forward(net, x):
    """Loop-based re-implementation used as an arithmetic oracle."""
    h = np.asarray(x, float)
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = np.array([sum(h[k] * w[k, j] for k in range(w.shape[0])) + b[j] for j in range(w.shape[1])])
        last = i == len(net.weights) - 1 and not net.relu_output
        h = z if last else np.maximum(z, 0)
    return h


class TestForward:
    def test_zero_net(self):
        net = Mlp([8, 64, 64, 64, 4])
        np.testing.assert_array_equal(net.forward(np.arange(8.0)), np.zeros(4))

    def test_scalar_identity(self):
        net = Mlp([1, 1])
        net.set_params([np.ones((1, 1)), np.zeros(1)])
        assert net.forward(np.array([5.0]))[0] == 5.0

    @given(seed=st.integers(0, 2**32 - 1), relu_out=st.booleans())
    def test_matches_loop_oracle(self, seed, relu_out):
        rng = np.random.default_rng(seed)
        net = Mlp([8, 16, 16, 4], rng, relu_output=relu_out)
        x = rng.normal(size=8)
        np.testing.assert_allclose(net.forward(x), reference_forward(net, x), atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(StructureError):
            mlp_forward(Mlp([8, 4]), np.zeros(7))

    def test_glorot_bounds(self):
        net = Mlp([8, 64, 4], np.random.default_rng(0))
        assert np.abs(net.weights[0]).max() <= np.sqrt(6 / 72)
        assert not any(b.any() for b in net.biases)


class TestBackward:
    def test_zero_upstream(self):
        net = Mlp([8, 6, 3], np.random.default_rng(0))
        _, cache = mlp_forward(net, np.ones(8))
        grads, dx = mlp_backward(net, cache, np.zeros(3))
        assert not any(g.any() for g in grads) and not dx.any()

    def test_single_linear_layer(self):
        net = Mlp([3, 1], np.random.default_rng(0))
        x = np.array([1.0, -2.0, 0.5])
        _, cache = mlp_forward(net, x)
        grads, _ = mlp_backward(net, cache, np.ones(1))
        np.testing.assert_array_equal(grads[0], x[:, None])
        np.testing.assert_array_equal(grads[1], [1.0])

    @pytest.mark.parametrize("sizes, relu_out", [([8, 64, 64, 64, 4], False), ([8, 64, 64], True),
                                                 ([64, 4], False), ([64, 1], False)])
    def test_finite_differences(self, sizes, relu_out):
        rng = np.random.default_rng(len(sizes))
        net = Mlp(sizes, rng, relu_output=relu_out)
        for b in net.biases:
            b[:] = rng.normal(size=b.shape) * 0.1
        x = rng.normal(size=(3, sizes[0]))
        up = rng.normal(size=(3, sizes[-1]))
        _, cache = mlp_forward(net, x)
        grads, dx = mlp_backward(net, cache, up)
        params = net.params
        for p, g in zip(params, grads):
            idx = [tuple(rng.integers(0, s) for s in p.shape) for _ in range(10)]
            for i in idx:
                orig = p[i]
                p[i] = orig + 1e-5
                lp = float(np.sum(up * net.forward(x)))
                p[i] = orig - 1e-5
                lm = float(np.sum(up * net.forward(x)))
                p[i] = orig
                fd = (lp - lm) / 2e-5
                assert abs(fd - g[i]) <= 1e-6 * max(1.0, abs(fd))
        fdx = central_diff(lambda v: float(np.sum(up * net.forward(v))), x, 1e-5)
        np.testing.assert_allclose(dx, fdx, rtol=1e-6, atol=1e-6)

    def test_stale_cache(self):
        net = Mlp([4, 4], np.random.default_rng(0))
        _, cache = mlp_forward(net, np.ones(4))
        net.touch()
        with pytest.raises(StructureError):
            mlp_backward(net, cache, np.ones(4))

    def test_foreign_cache(self):
        a, b = Mlp([4, 4]), Mlp([4, 4])
        _, cache = mlp_forward(a, np.ones(4))
        with pytest.raises(StructureError):
            mlp_backward(b, cache, np.ones(4))

    def test_bad_upstream_shape(self):
        net = Mlp([4, 2])
        _, cache = mlp_forward(net, np.ones(4))
        with pytest.raises(StructureError):
            mlp_backward(net, cache, np.ones(3))


class TestAdam:
    def test_zero_gradients_leave_params(self):
        p = [np.array([1.0, -2.0])]
        state = AdamState.for_params(p)
        for _ in range(5):
            adam_step(p, [np.zeros(2)], state)
        np.testing.assert_array_equal(p[0], [1.0, -2.0])

    def test_first_step_is_lr_times_sign(self):
        p = [np.array([0.0, 0.0])]
        state = AdamState.for_params(p)
        adam_step(p, [np.array([3.0, -0.2])], state)
        np.testing.assert_allclose(p[0], [-0.0005, 0.0005], rtol=1e-6)

    def test_scalar_quadratic_descends(self):
        x = [np.array(1.0)]
        state = AdamState.for_params(x)
        history = []
        for _ in range(100):
            adam_step(x, [2 * x[0]], state)
            history.append(abs(float(x[0])))
        assert all(b < a for a, b in zip(history, history[1:]))

    def test_matches_recurrence(self):
        rng = np.random.default_rng(0)
        x = [np.array(0.3)]
        state = AdamState.for_params(x, lr=0.01)
        m = v = 0.0
        ref = 0.3
        for t in range(1, 30):
            g = float(rng.normal())
            adam_step(x, [np.array(g)], state)
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            ref -= 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
        assert float(x[0]) == pytest.approx(ref, abs=1e-14)

    def test_deterministic(self):
        def trajectory():
            rng = np.random.default_rng(4)
            net = Mlp([8, 16, 4], rng)
            state = AdamState.for_params(net.params)
            for _ in range(10):
                x = rng.normal(size=(5, 8))
                _, cache = mlp_forward(net, x)
                grads, _ = mlp_backward(net, cache, rng.normal(size=(5, 4)))
                adam_step(net.params, grads, state)
                net.touch()
            return b"".join(p.tobytes() for p in net.params)

        assert trajectory() == trajectory()

    def test_shape_mismatch(self):
        p = [np.zeros(3)]
        with pytest.raises(StructureError):
            adam_step(p, [np.zeros(2)], AdamState.for_params(p))
        with pytest.raises(StructureError):
            adam_step(p, [np.zeros(3), np.zeros(3)], AdamState.for_params(p))


class TestCount:
    def test_default_dqn(self):
        assert count_params(Mlp([8, 64, 64, 64, 4])) == 9156

    def test_policy(self):
        assert count_params(PolicyParams.zeros(5)) == 64

    @given(st.lists(st.integers(1, 20), min_size=2, max_size=5))
    def test_formula_and_additivity(self, sizes):
        net = Mlp(sizes)
        expected = sum(a * b + b for a, b in zip(sizes, sizes[1:]))
        assert count_params(net) == expected
        assert count_params([net, PolicyParams.zeros(2)]) == expected + 28

    def test_unknown(self):
        with pytest.raises(StructureError):
            count_params(object())
