import numpy as np
import pytest

from lesionviz import model as M
from lesionviz.errors import ConfigError, ShapeError
from lesionviz.featureviz import ascent as A
from lesionviz.featureviz.transforms import TransformSpec
from lesionviz.tensor import finite_diff_grad


@pytest.fixture(scope="module")
def net():
    spec = M.ModelSpec(input_shape=(1, 16, 16), conv_filters=(3, 4, 4, 4, 3))
    params = M.build(spec, 2)
    params.conv_biases = [b + 0.02 for b in params.conv_biases]
    return spec, params


def objective(spec, params, x, layer, channel, lam):
    """Reference: forward only, input L1 penalty written out directly."""
    _, f = M.forward_to_channel(spec, params, x, layer, channel)
    return f - lam * np.abs(x).mean()


class TestPenalty:
    def test_values(self):
        x = np.array([[-0.5, 0.0], [0.25, 1.0]])
        r, g = A.l1_penalty(x)
        assert r == pytest.approx(1.75 / 4)
        np.testing.assert_array_equal(g, [[-0.25, 0.0], [0.25, 0.25]])

    def test_objective_gradient_matches_fd(self, net):
        spec, params = net
        cfg = A.VizConfig(layer=3, channel=1, lam=2.0)
        x = np.random.default_rng(0).uniform(0.2, 0.8, (1, 1, 16, 16))
        f, r, total, grad = A._objective(spec, params, x, 3, [1], cfg)
        assert total[0] == pytest.approx(objective(spec, params, x[0], 3, 1, 2.0), rel=1e-12)
        fd = finite_diff_grad(lambda v: objective(spec, params, v[0], 3, 1, 2.0), x, 1e-5)
        assert np.linalg.norm(grad - fd) / np.linalg.norm(fd) < 1e-4

    def test_activation_penalty_value(self, net):
        spec, params = net
        cfg = A.VizConfig(layer=2, channel=0, lam=1.0, penalty_on="activation")
        x = np.random.default_rng(1).random((1, 1, 16, 16))
        _, r, _, _ = A._objective(spec, params, x, 2, [0], cfg)
        post = M.forward_features(spec, params, x, upto=2)[-1]["post"]
        assert r[0] == pytest.approx(np.abs(post).mean())


class TestAscent:
    def test_increases_objective(self, net):
        spec, params = net
        for layer in (1, 3, 5):
            res = A.ascend(spec, params, A.VizConfig(layer=layer, channel=0, lam=0.0, iterations=40, seed=3))
            assert res.final[2] > res.initial[2]

    def test_trace_starts_at_noise(self, net):
        spec, params = net
        cfg = A.VizConfig(layer=2, channel=1, lam=5.0, iterations=5, seed=7)
        res = A.ascend(spec, params, cfg)
        x0 = A.initial_noise(spec.input_shape, cfg.init_range, np.random.default_rng(7))
        assert res.initial[2] == pytest.approx(objective(spec, params, x0, 2, 1, 5.0), rel=1e-12)
        assert res.trace.shape == (5, 3)
        assert res.final[2] == pytest.approx(objective(spec, params, res.image, 2, 1, 5.0), rel=1e-12)

    def test_image_stays_in_unit_box(self, net):
        spec, params = net
        res = A.ascend(spec, params, A.VizConfig(layer=4, channel=2, lam=0.0, iterations=60, step_size=0.2))
        assert res.image.min() >= 0.0 and res.image.max() <= 1.0

    def test_deterministic(self, net):
        spec, params = net
        cfg = A.VizConfig(layer=3, channel=2, iterations=20, seed=5, transform_every=5,
                          transforms=(TransformSpec("rotation"), TransformSpec("jitter")))
        a, b = A.ascend(spec, params, cfg), A.ascend(spec, params, cfg)
        assert np.array_equal(a.image, b.image) and np.array_equal(a.trace, b.trace)

    def test_batched_matches_single(self, net):
        spec, params = net
        cfg = A.VizConfig(layer=3, lam=1.0, iterations=15, transform_every=4,
                          transforms=(TransformSpec("translation"),))
        many = A.ascend_many(spec, params, cfg, [0, 3, 1], [11, 12, 13])
        for res in many:
            one = A.ascend_many(spec, params, cfg, [res.channel], [res.seed])[0]
            np.testing.assert_allclose(res.image, one.image, atol=1e-10)
            np.testing.assert_allclose(res.trace, one.trace, rtol=1e-9, atol=1e-12)

    def test_unreached_schedule_is_inert(self, net):
        spec, params = net
        base = A.VizConfig(layer=2, channel=0, iterations=10, seed=1)
        sched = A.VizConfig(layer=2, channel=0, iterations=10, seed=1, transform_every=11,
                            transforms=(TransformSpec("translation", {"max_shift": 3}),))
        assert np.array_equal(A.ascend(spec, params, base).image, A.ascend(spec, params, sched).image)

    def test_bad_target(self, net):
        spec, params = net
        with pytest.raises(ShapeError, match=r"0\.\.2"):
            A.ascend(spec, params, A.VizConfig(layer=5, channel=3))

    @pytest.mark.parametrize("kw", [dict(lam=-1), dict(iterations=0), dict(transform_every=0),
                                    dict(step_size=0), dict(init_range=(0.7, 0.2)), dict(penalty_on="x")])
    def test_config_validation(self, kw):
        with pytest.raises(ConfigError):
            A.VizConfig(**kw)

    def test_trace_table(self, net):
        spec, params = net
        res = A.ascend(spec, params, A.VizConfig(iterations=3))
        lines = res.trace_table().splitlines()
        assert lines[0] == "iteration\tf\tR\ttotal" and len(lines) == 4
        assert float(lines[1].split("\t")[3]) == res.initial[2]


class TestBaseline:
    def test_shape_and_seed(self, net):
        spec, params = net
        a = A.noise_activations(spec, params, 2, samples=60, seed=4)
        assert a.shape == (60, 4) and (a >= 0).all()
        assert np.array_equal(a, A.noise_activations(spec, params, 2, samples=60, seed=4))

    def test_matches_forward(self, net):
        spec, params = net
        a = A.noise_activations(spec, params, 3, samples=3, seed=9)
        rng = np.random.default_rng([9, 0xBA5E])
        x = rng.uniform(0.4, 0.6, (3,) + spec.input_shape)
        for c in range(4):
            _, means = M.forward_to_channel(spec, params, x, 3, c)
            np.testing.assert_allclose(a[:, c], means, rtol=1e-12)


def test_mosaic_layout():
    ims = [np.full((2, 3), v) for v in (0.2, 0.4, 0.6)]
    m = A.mosaic(ims, ncols=2, separator=1)
    assert m.shape == (5, 7)
    assert (m[:2, :3] == 0.2).all() and (m[:2, 4:] == 0.4).all() and (m[3:, :3] == 0.6).all()
    assert not m[2].any() and not m[:, 3].any() and not m[3:, 4:].any()


@pytest.mark.parametrize("transforms,expected", [((), 200), ((TransformSpec("jitter"),), 256)])
def test_iteration_default_follows_schedule(transforms, expected):
    assert A.VizConfig(transforms=transforms).iterations == expected
    assert A.VizConfig(transforms=transforms, iterations=7).iterations == 7
