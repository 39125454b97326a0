import numpy as np
import pytest

from wavescene.nn import (
    BatchNorm2d,
    Conv2d,
    Dense,
    Dropout,
    Flatten,
    MaxPool2d,
    ReLU,
    Sequential,
    TransposedConv2d,
    build_sparse_conv_matrix,
    gradient_check,
)

from test_nn_sparse import naive_conv2d


def naive_conv_layer(x, w, b, stride, padding):
    """Loop-over-channels oracle for the batched multi-channel layer."""
    bs, ic, _, _ = x.shape
    oc = w.shape[0]
    first = naive_conv2d(x[0, 0], w[0, 0], stride, padding)
    out = np.zeros((bs, oc) + first.shape)
    for n in range(bs):
        for o in range(oc):
            for i in range(ic):
                out[n, o] += naive_conv2d(x[n, i], w[o, i], stride, padding)
            out[n, o] += b[o]
    return out


class TestConv2d:
    def test_identity_kernel(self):
        layer = Conv2d(1, 1, kernel=1, rng=0)
        layer.weight.data[...] = 1.0
        x = np.random.default_rng(0).normal(size=(2, 1, 5, 5))
        np.testing.assert_array_equal(layer.forward(x), x)

    @pytest.mark.parametrize(
        "ic,oc,k,s,p,hw",
        [
            (1, 1, 3, 1, 0, (7, 7)),
            (3, 4, 3, 1, 1, (8, 8)),
            (2, 3, 2, 2, 0, (6, 10)),
            (4, 2, 5, 1, 2, (9, 9)),
        ],
    )
    def test_matches_naive_oracle(self, ic, oc, k, s, p, hw):
        rng = np.random.default_rng(ic * 10 + oc)
        layer = Conv2d(ic, oc, kernel=k, stride=s, padding=p, rng=rng)
        layer.bias.data[...] = rng.normal(size=oc)
        x = rng.normal(size=(2, ic) + hw)
        want = naive_conv_layer(x, layer.weight.data, layer.bias.data, s, p)
        np.testing.assert_allclose(layer.forward(x), want, atol=1e-12)

    def test_matches_sparse_matrix_application(self):
        rng = np.random.default_rng(1)
        layer = Conv2d(1, 1, kernel=3, stride=2, padding=1, rng=rng)
        layer.bias.data[...] = 0.0
        c = build_sparse_conv_matrix(layer.weight.data[0, 0], (9, 9), 2, 1)
        x = rng.normal(size=(1, 1, 9, 9))
        np.testing.assert_allclose(
            layer.forward(x)[0, 0], c.apply(x[0, 0]), atol=1e-12
        )

    def test_gradients(self):
        rng = np.random.default_rng(2)
        layer = Conv2d(2, 3, kernel=3, stride=1, padding=1, rng=rng)
        x0 = rng.normal(size=(2, 2, 5, 5))
        target = rng.normal(size=(2, 3, 5, 5))

        def op_x(v):
            out = layer.forward(v, train=True)
            diff = out - target
            for q in layer.params():
                q.zero_grad()
            dx = layer.backward(2.0 * diff)
            return float((diff * diff).sum()), dx

        assert gradient_check(op_x, x0) < 1e-6

        def op_w(v):
            layer.weight.data[...] = v
            out = layer.forward(x0, train=True)
            diff = out - target
            for q in layer.params():
                q.zero_grad()
            layer.backward(2.0 * diff)
            return float((diff * diff).sum()), layer.weight.grad.copy()

        assert gradient_check(op_w, layer.weight.data.copy()) < 1e-6

        def op_b(v):
            layer.bias.data[...] = v
            out = layer.forward(x0, train=True)
            diff = out - target
            for q in layer.params():
                q.zero_grad()
            layer.backward(2.0 * diff)
            return float((diff * diff).sum()), layer.bias.grad.copy()

        assert gradient_check(op_b, layer.bias.data.copy()) < 1e-6

    def test_shape_validation(self):
        layer = Conv2d(3, 4, kernel=3, rng=0)
        with pytest.raises(ValueError):
            layer.forward(np.zeros((1, 2, 8, 8)))
        with pytest.raises(ValueError):
            layer.forward(np.zeros((1, 3, 2, 2)))


class TestTransposedConv2d:
    def test_size_chain_from_32(self):
        sizes = [32]
        for _ in range(3):
            layer = TransposedConv2d(1, 1, kernel=2, stride=2, padding=0, rng=0)
            sizes.append(layer.output_size(sizes[-1]))
        assert sizes == [32, 64, 128, 256]

    def test_size_chain_from_75(self):
        layer = TransposedConv2d(1, 1, kernel=2, stride=2, padding=0, rng=0)
        sizes = [75]
        for _ in range(3):
            sizes.append(layer.output_size(sizes[-1]))
        assert sizes == [75, 150, 300, 600]

    def test_unit_kernel_preserves_size(self):
        layer = TransposedConv2d(2, 2, kernel=1, stride=1, padding=0, rng=0)
        x = np.random.default_rng(0).normal(size=(1, 2, 13, 17))
        assert layer.forward(x).shape == (1, 2, 13, 17)

    def test_forward_equals_sparse_adjoint(self):
        rng = np.random.default_rng(3)
        for k, s, p, hw in [(2, 2, 0, (5, 5)), (3, 1, 1, (6, 4)), (3, 2, 1, (4, 7))]:
            layer = TransposedConv2d(1, 1, kernel=k, stride=s, padding=p, rng=rng)
            layer.bias.data[...] = 0.0
            x = rng.normal(size=(1, 1) + hw)
            out = layer.forward(x)
            c = build_sparse_conv_matrix(
                layer.weight.data[0, 0], out.shape[2:], s, p
            )
            assert c.output_dims == hw
            np.testing.assert_allclose(out[0, 0], c.apply_adjoint(x[0, 0]), atol=1e-12)

    def test_adjoint_identity_with_shared_kernel(self):
        rng = np.random.default_rng(4)
        checked = 0
        while checked < 20:
            ic = int(rng.integers(1, 4))
            oc = int(rng.integers(1, 4))
            k = int(rng.integers(1, 4))
            s = int(rng.integers(1, 3))
            p = int(rng.integers(0, k))
            # choose the conv output grid first so the input size sits
            # exactly on the stride grid (the adjoint pairs those maps)
            h = s * (int(rng.integers(2, 7)) - 1) + k - 2 * p
            w = s * (int(rng.integers(2, 7)) - 1) + k - 2 * p
            if h < 1 or w < 1:
                continue
            checked += 1
            conv = Conv2d(ic, oc, kernel=k, stride=s, padding=p, rng=rng)
            conv.bias.data[...] = 0.0
            tconv = TransposedConv2d(oc, ic, kernel=k, stride=s, padding=p, rng=rng)
            tconv.bias.data[...] = 0.0
            tconv.weight.data = conv.weight.data
            x = rng.normal(size=(1, ic, h, w))
            cx = conv.forward(x)
            y = rng.normal(size=cx.shape)
            lhs = float((cx * y).sum())
            rhs = float((x * tconv.forward(y)).sum())
            assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))

    def test_gradients(self):
        rng = np.random.default_rng(5)
        layer = TransposedConv2d(2, 3, kernel=2, stride=2, padding=0, rng=rng)
        x0 = rng.normal(size=(2, 2, 4, 4))
        target = rng.normal(size=(2, 3, 8, 8))

        def op_x(v):
            out = layer.forward(v, train=True)
            diff = out - target
            for q in layer.params():
                q.zero_grad()
            dx = layer.backward(2.0 * diff)
            return float((diff * diff).sum()), dx

        assert gradient_check(op_x, x0) < 1e-6

        def op_w(v):
            layer.weight.data[...] = v
            out = layer.forward(x0, train=True)
            diff = out - target
            for q in layer.params():
                q.zero_grad()
            layer.backward(2.0 * diff)
            return float((diff * diff).sum()), layer.weight.grad.copy()

        assert gradient_check(op_w, layer.weight.data.copy()) < 1e-6

    def test_non_positive_output_rejected(self):
        layer = TransposedConv2d(1, 1, kernel=2, stride=1, padding=2, rng=0)
        with pytest.raises(ValueError):
            layer.forward(np.zeros((1, 1, 2, 2)))


class TestSimpleLayers:
    def test_relu_values(self):
        layer = ReLU()
        np.testing.assert_array_equal(
            layer.forward(np.array([-1.0, 0.0, 2.0])), [0.0, 0.0, 2.0]
        )

    def test_relu_backward(self):
        layer = ReLU()
        x = np.array([-2.0, 3.0, -0.5, 4.0])
        layer.forward(x, train=True)
        np.testing.assert_array_equal(layer.backward(np.ones(4)), [0, 1, 0, 1])

    def test_maxpool_single_window(self):
        layer = MaxPool2d(2, 2)
        x = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2)
        assert layer.forward(x)[0, 0, 0, 0] == 4.0

    def test_maxpool_shape_and_values(self):
        layer = MaxPool2d(2, 2)
        rng = np.random.default_rng(6)
        x = rng.normal(size=(2, 3, 7, 9))
        out = layer.forward(x)
        assert out.shape == (2, 3, 3, 4)
        assert out[0, 0, 0, 0] == x[0, 0, :2, :2].max()
        # odd trailing row/column is dropped
        assert out[0, 0, -1, -1] == x[0, 0, 4:6, 6:8].max()

    def test_maxpool_backward_routes_to_argmax(self):
        layer = MaxPool2d(2, 2)
        x = np.arange(16.0).reshape(1, 1, 4, 4)
        layer.forward(x, train=True)
        dx = layer.backward(np.ones((1, 1, 2, 2)))
        want = np.zeros((4, 4))
        want[1, 1] = want[1, 3] = want[3, 1] = want[3, 3] = 1.0
        np.testing.assert_array_equal(dx[0, 0], want)

    def test_maxpool_gradient(self):
        rng = np.random.default_rng(7)
        layer = MaxPool2d(2, 2)
        # well-separated values keep the argmax stable under the probe
        x0 = rng.permutation(np.arange(64.0)).reshape(1, 1, 8, 8) * 0.37

        def op(v):
            out = layer.forward(v, train=True)
            dx = layer.backward(2.0 * out)
            return float((out * out).sum()), dx

        assert gradient_check(op, x0) < 1e-6

    def test_dense_gradients(self):
        rng = np.random.default_rng(8)
        layer = Dense(5, 3, rng=rng)
        x0 = rng.normal(size=(4, 5))

        def op(v):
            out = layer.forward(v, train=True)
            for q in layer.params():
                q.zero_grad()
            dx = layer.backward(2.0 * out)
            return float((out * out).sum()), dx

        assert gradient_check(op, x0) < 1e-8

    def test_flatten_roundtrip(self):
        layer = Flatten()
        x = np.random.default_rng(9).normal(size=(2, 3, 4, 5))
        out = layer.forward(x, train=True)
        assert out.shape == (2, 60)
        np.testing.assert_array_equal(layer.backward(out), x)


class TestBatchNorm:
    def test_train_mode_normalizes(self):
        rng = np.random.default_rng(10)
        layer = BatchNorm2d(3)
        x = rng.normal(loc=5.0, scale=3.0, size=(8, 3, 6, 6))
        out = layer.forward(x, train=True)
        np.testing.assert_allclose(out.mean(axis=(0, 2, 3)), 0.0, atol=1e-6)
        np.testing.assert_allclose(out.var(axis=(0, 2, 3)), 1.0, atol=1e-4)

    def test_running_stats_feed_eval(self):
        rng = np.random.default_rng(11)
        layer = BatchNorm2d(2)
        x = rng.normal(loc=2.0, size=(16, 2, 4, 4))
        for _ in range(200):
            layer.forward(x, train=True)
        out = layer.forward(x, train=False)
        np.testing.assert_allclose(out.mean(axis=(0, 2, 3)), 0.0, atol=1e-2)

    def test_gradients(self):
        rng = np.random.default_rng(12)
        layer = BatchNorm2d(2)
        layer.gamma.data[...] = rng.normal(size=2)
        layer.beta.data[...] = rng.normal(size=2)
        x0 = rng.normal(size=(3, 2, 4, 4))
        target = rng.normal(size=(3, 2, 4, 4))

        def op_x(v):
            out = layer.forward(v, train=True)
            diff = out - target
            for q in layer.params():
                q.zero_grad()
            dx = layer.backward(2.0 * diff)
            return float((diff * diff).sum()), dx

        assert gradient_check(op_x, x0) < 1e-6

        def op_gamma(v):
            layer.gamma.data[...] = v
            out = layer.forward(x0, train=True)
            diff = out - target
            for q in layer.params():
                q.zero_grad()
            layer.backward(2.0 * diff)
            return float((diff * diff).sum()), layer.gamma.grad.copy()

        assert gradient_check(op_gamma, layer.gamma.data.copy()) < 1e-6


class TestDropout:
    def test_eval_is_exact_identity(self):
        layer = Dropout(0.5)
        x = np.random.default_rng(13).normal(size=(4, 7))
        assert layer.forward(x, train=False) is x

    def test_train_scales_kept_units(self):
        rng = np.random.default_rng(14)
        layer = Dropout(0.25)
        x = np.ones((200, 200))
        out = layer.forward(x, train=True, rng=rng)
        kept = out != 0.0
        assert abs(kept.mean() - 0.75) < 0.02
        np.testing.assert_allclose(np.unique(out[kept]), 1.0 / 0.75)
        assert abs(out.mean() - 1.0) < 0.02

    def test_backward_uses_same_mask(self):
        rng = np.random.default_rng(15)
        layer = Dropout(0.5)
        x = np.ones((10, 10))
        out = layer.forward(x, train=True, rng=rng)
        dx = layer.backward(np.ones((10, 10)))
        np.testing.assert_array_equal(dx, out)

    def test_invalid_rate(self):
        with pytest.raises(ValueError):
            Dropout(1.0)
        with pytest.raises(ValueError):
            Dropout(-0.1)

    def test_rate_zero_is_identity_in_train(self):
        layer = Dropout(0.0)
        x = np.ones((3, 3))
        np.testing.assert_array_equal(layer.forward(x, train=True), x)


class TestSequential:
    def test_chain_gradients(self):
        rng = np.random.default_rng(16)
        net = Sequential(
            [
                Conv2d(1, 2, kernel=3, stride=1, padding=1, rng=rng),
                ReLU(),
                MaxPool2d(2, 2),
                Flatten(),
                Dense(2 * 3 * 3, 4, rng=rng),
            ]
        )
        x0 = rng.normal(size=(2, 1, 6, 6)) + 0.1

        def op(v):
            out = net.forward(v, train=True)
            for q in net.params():
                q.zero_grad()
            dx = net.backward(2.0 * out)
            return float((out * out).sum()), dx

        assert gradient_check(op, x0) < 1e-5

    def test_param_collection(self):
        net = Sequential([Conv2d(1, 2, 3, rng=0), BatchNorm2d(2), Dense(4, 2, rng=0)])
        assert len(net.params()) == 6
