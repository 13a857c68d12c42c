import numpy as np
import pytest

from lesionviz import model as M
from lesionviz import tensor as T
from lesionviz.errors import ShapeError


@pytest.fixture(scope="module")
def small():
    spec = M.ModelSpec(input_shape=(1, 16, 16), conv_filters=(2, 3, 3, 2, 2))
    return spec, M.build(spec, seed=3)


def reference_logit(spec, params, image):
    """Plain NCHW forward built only from the public primitives."""
    h = image
    for k in range(1, 6):
        h = T.relu(T.conv2d_forward(h, params.conv_weights[k - 1], params.conv_biases[k - 1], 1))
        pool = spec.pool_for(k)
        if pool:
            h, _ = T.maxpool2d_forward(h, *pool)
    flat = h.transpose(1, 2, 0).ravel()  # channels-last flatten
    return float(T.dense_forward(flat, params.head_weight, params.head_bias)[0])


class TestShapes:
    def test_default_chain(self):
        shapes = dict(M.ModelSpec().layer_shapes())
        assert shapes["pool1"] == (8, 62, 62)
        assert shapes["pool2"] == (16, 30, 30)
        assert shapes["pool5"] == (64, 14, 14)
        assert M.ModelSpec().head_inputs == 64 * 14 * 14

    def test_rectangular_chain(self):
        spec = M.ModelSpec(input_shape=(1, 140, 192))
        assert spec.layer_shapes()[-1] == ("pool5", (64, 33, 46))
        assert spec.head_inputs == 64 * 33 * 46

    def test_too_small_input(self):
        with pytest.raises(ShapeError, match="exhausts spatial extent"):
            M.ModelSpec(input_shape=(1, 8, 8))

    @pytest.mark.parametrize("bad", [dict(input_shape=(3, 32, 32)), dict(conv_filters=(8, 16)),
                                     dict(pool_after=(1, 1, 5)), dict(pool_kernels=(3, 3))])
    def test_invalid_specs(self, bad):
        with pytest.raises(ShapeError):
            M.ModelSpec(**bad)

    def test_param_shapes(self, small):
        spec, params = small
        M.check_params(spec, params)
        names = [n for n, _ in params.named_tensors()]
        assert names[:2] == ["conv1.weight", "conv1.bias"] and names[-1] == "head.bias"
        assert params.head_weight.shape == (1, spec.head_inputs)

    def test_check_params_rejects(self, small):
        spec, params = small
        bad = params.copy()
        bad.conv_biases[2] = np.zeros(7)
        with pytest.raises(ShapeError):
            M.check_params(spec, bad)

    def test_spec_roundtrip(self):
        spec = M.ModelSpec(input_shape=(1, 40, 48), conv_filters=(4, 4, 4, 4, 4))
        assert M.ModelSpec.from_dict(spec.to_dict()) == spec


class TestBuild:
    def test_seeded(self):
        spec = M.ModelSpec(input_shape=(1, 16, 16))
        a, b, c = M.build(spec, 1), M.build(spec, 1), M.build(spec, 2)
        assert all(np.array_equal(x, y) for (_, x), (_, y) in zip(a.named_tensors(), b.named_tensors()))
        assert not np.array_equal(a.conv_weights[0], c.conv_weights[0])

    def test_he_scale(self):
        params = M.build(M.ModelSpec(), 0)
        w = params.conv_weights[3]  # 64 x 32 x 3 x 3
        assert np.std(w) == pytest.approx(np.sqrt(2 / (32 * 9)), rel=0.05)
        assert not any(b.any() for b in params.conv_biases)


class TestForward:
    def test_matches_reference(self, small):
        spec, params = small
        x = np.random.default_rng(0).random((1, 16, 16))
        logit, _ = M.forward_logit(spec, params, x)
        assert isinstance(logit, float)
        assert logit == pytest.approx(reference_logit(spec, params, x), rel=1e-12, abs=1e-12)

    def test_batch(self, small):
        spec, params = small
        x = np.random.default_rng(1).random((3, 1, 16, 16))
        logits, _ = M.forward_logit(spec, params, x)
        assert logits.shape == (3,)
        for n in range(3):
            assert logits[n] == pytest.approx(M.forward_logit(spec, params, x[n])[0], rel=1e-12)

    def test_wrong_shape(self, small):
        spec, params = small
        with pytest.raises(ShapeError):
            M.forward_logit(spec, params, np.zeros((1, 15, 16)))

    def test_channel_map(self, small):
        spec, params = small
        x = np.random.default_rng(2).random((1, 16, 16))
        amap, mean = M.forward_to_channel(spec, params, x, 2, 1)
        h = T.relu(T.conv2d_forward(x, params.conv_weights[0], params.conv_biases[0]))
        h, _ = T.maxpool2d_forward(h, 3, 1)
        h = T.relu(T.conv2d_forward(h, params.conv_weights[1], params.conv_biases[1]))
        np.testing.assert_allclose(amap, h[1], rtol=1e-12, atol=1e-14)
        assert mean == pytest.approx(h[1].mean())

    @pytest.mark.parametrize("layer,channel,msg", [(0, 0, "1..5"), (6, 0, "1..5"), (2, 3, "0..2")])
    def test_target_range(self, small, layer, channel, msg):
        spec, params = small
        with pytest.raises(ShapeError, match=msg):
            M.forward_to_channel(spec, params, np.zeros((1, 16, 16)), layer, channel)


def _positive_biases(params, value=0.05):
    """Keep units active so finite differences stay away from ReLU kinks."""
    p = params.copy()
    p.conv_biases = [b + value for b in p.conv_biases]
    return p


class TestGradients:
    def test_logit_grads_match_fd(self, small):
        spec, params = small
        params = _positive_biases(params)
        x = np.random.default_rng(4).random((1, 16, 16))
        _, cache = M.forward_logit(spec, params, x)
        grads, g_img = M.backward_logit(spec, params, cache, 1.0)
        fd_img = T.finite_diff_grad(lambda v: M.forward_logit(spec, params, v)[0], x, 1e-5)
        err = np.linalg.norm(g_img[0] - fd_img) / np.linalg.norm(fd_img)
        assert err < 1e-4

        for k in range(5):
            def f(w, k=k):
                p = params.copy()
                p.conv_weights[k] = w
                return M.forward_logit(spec, p, x)[0]
            fd = T.finite_diff_grad(f, params.conv_weights[k], 1e-5)
            assert np.linalg.norm(grads.conv_weights[k] - fd) / max(np.linalg.norm(fd), 1e-12) < 1e-4, k

        fd_hb = T.finite_diff_grad(
            lambda b: M.forward_logit(spec, M.ModelParams(params.conv_weights, params.conv_biases,
                                                         params.head_weight, b), x)[0], params.head_bias)
        np.testing.assert_allclose(grads.head_bias, fd_hb, rtol=1e-6)

    @pytest.mark.parametrize("layer", [1, 2, 3, 4, 5])
    def test_channel_grad_matches_fd(self, small, layer):
        spec, params = small
        params = _positive_biases(params)
        x = np.random.default_rng(10 + layer).random((1, 1, 16, 16))
        f, _, grad = M.channel_objective_and_grad(spec, params, x, layer, [0])
        fd = T.finite_diff_grad(lambda v: M.forward_to_channel(spec, params, v, layer, 0)[1][0], x, 1e-5)
        assert f[0] == pytest.approx(M.forward_to_channel(spec, params, x[0], layer, 0)[1])
        assert np.linalg.norm(grad - fd) / max(np.linalg.norm(fd), 1e-12) < 1e-4

    def test_activation_penalty_grad(self, small):
        spec, params = small
        params = _positive_biases(params)
        x = np.random.default_rng(20).random((1, 1, 16, 16))
        lam = 0.7

        def obj(v):
            f, pen, _ = M.channel_objective_and_grad(spec, params, v, 3, [1], activation_l1=lam)
            return f[0] - lam * pen[0]

        _, _, grad = M.channel_objective_and_grad(spec, params, x, 3, [1], activation_l1=lam)
        fd = T.finite_diff_grad(obj, x, 1e-5)
        assert np.linalg.norm(grad - fd) / np.linalg.norm(fd) < 1e-4

    def test_batched_channels_independent(self, small):
        spec, params = small
        x = np.random.default_rng(30).random((2, 1, 16, 16))
        f, _, g = M.channel_objective_and_grad(spec, params, x, 4, [0, 1])
        for n, c in enumerate([0, 1]):
            f1, _, g1 = M.channel_objective_and_grad(spec, params, x[n:n + 1], 4, [c])
            assert f[n] == pytest.approx(f1[0], rel=1e-12)
            np.testing.assert_allclose(g[n], g1[0], rtol=1e-10, atol=1e-15)
