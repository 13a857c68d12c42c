import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp
from scipy import optimize

from lesionviz.featureviz import filters as F
from lesionviz.tensor import finite_diff_grad


def step_edge(n=24):
    img = np.full((n, n), 0.2)
    img[:, n // 2:] = 0.8
    return img


def isolated_points(shape, count, spacing, rng):
    """Random positions at Chebyshev distance >= spacing from each other."""
    pts = []
    for _ in range(10_000):
        if len(pts) == count:
            break
        p = (int(rng.integers(shape[0])), int(rng.integers(shape[1])))
        if all(max(abs(p[0] - q[0]), abs(p[1] - q[1])) >= spacing for q in pts):
            pts.append(p)
    return pts


def salt_and_pepper(img, fraction, rng):
    out = img.copy()
    hit = rng.random(img.shape) < fraction
    out[hit] = rng.integers(0, 2, hit.sum()).astype(float)
    return out, hit


class TestTotalVariation:
    def test_hand_values(self):
        ramp = np.tile(np.arange(4.0), (3, 1))
        assert F.total_variation(ramp) == 9.0  # 3 rows x 3 unit steps
        assert F.total_variation(np.full((5, 5), 0.4)) == 0.0
        assert F.total_variation(np.array([[0.0, 1.0], [1.0, 1.0]])) == pytest.approx(np.sqrt(2))

    def test_gradient_matches_fd(self):
        u = np.random.default_rng(0).random((6, 7))
        fd = finite_diff_grad(lambda v: F.total_variation(v, F.TV_EPS), u, 1e-6)
        np.testing.assert_allclose(F._tv_grad(u, F.TV_EPS), fd, rtol=1e-5, atol=1e-6)


class TestTVDenoise:
    def test_constant_fixed_point(self):
        img = np.full((1, 12, 12), 0.37)
        assert np.array_equal(F.tv_denoise(img, 0.3, 20), img)

    @settings(max_examples=30, deadline=None)
    @given(hnp.arrays(np.float64, (10, 10), elements=st.floats(0, 1)), st.floats(0.01, 1.0), st.integers(1, 15))
    def test_energy_never_increases(self, img, weight, steps):
        out, energies = F.tv_denoise(img, weight, steps, return_energies=True)
        assert len(energies) == steps + 1
        assert all(b <= a for a, b in zip(energies, energies[1:]))
        assert out.min() >= 0 and out.max() <= 1

    def test_reduces_noise(self):
        rng = np.random.default_rng(1)
        clean = step_edge()
        noisy = np.clip(clean + 0.1 * rng.standard_normal(clean.shape), 0, 1)
        out = F.tv_denoise(noisy, 0.15, 60)
        assert np.abs(out - clean).mean() < 0.7 * np.abs(noisy - clean).mean()

    def test_approaches_box_constrained_minimizer(self):
        # independent route: L-BFGS-B on the same energy with [0, 1] bounds
        rng = np.random.default_rng(2)
        x = rng.random((6, 6))
        w = 0.2

        def energy(v):
            u = v.reshape(6, 6)
            return F.tv_energy(u, x, w), ((u - x) + w * F._tv_grad(u, F.TV_EPS)).ravel()

        ref = optimize.minimize(energy, x.ravel(), jac=True, method="L-BFGS-B", bounds=[(0, 1)] * 36,
                                options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 5000})
        _, energies = F.tv_denoise(x, w, 600, return_energies=True)
        assert energies[-1] == pytest.approx(ref.fun, abs=2e-3 * ref.fun)
        assert energies[-1] >= ref.fun - 1e-9


class TestMedian:
    def test_matches_loop(self):
        rng = np.random.default_rng(3)
        plane = rng.random((7, 8))
        med, _ = F.reference_median(plane, 3)
        for i in range(7):
            for j in range(8):
                win = [plane[a, b] for a in range(i - 1, i + 2) for b in range(j - 1, j + 2)
                       if (a, b) != (i, j) and 0 <= a < 7 and 0 <= b < 8]
                assert med[i, j] == np.median(win)


class TestSBF:
    def test_constant_identity(self):
        img = np.full((10, 10), 0.5)
        assert np.array_equal(F.switching_bilateral_filter(img), img)

    def test_high_threshold_identity(self):
        img = np.random.default_rng(4).random((1, 12, 12))
        assert np.array_equal(F.switching_bilateral_filter(img, noise_threshold=1.0), img)

    def test_clean_pixels_bit_identical(self):
        rng = np.random.default_rng(5)
        noisy, _ = salt_and_pepper(step_edge(), 0.1, rng)
        out = F.switching_bilateral_filter(noisy, noise_threshold=0.3)
        med, _ = F.reference_median(noisy, 5)
        keep = np.abs(noisy - med) <= 0.3
        assert np.array_equal(out[keep], noisy[keep])

    @pytest.mark.parametrize("seed", range(5))
    def test_isolated_impulses_restored(self, seed):
        rng = np.random.default_rng(seed)
        clean = step_edge(32)
        noisy = clean.copy()
        pts = isolated_points(clean.shape, 20, 5, rng)
        for i, j in pts:
            noisy[i, j] = 1.0 if clean[i, j] < 0.5 else 0.0
        out = F.switching_bilateral_filter(noisy, noise_threshold=0.3)
        for i, j in pts:
            assert abs(out[i, j] - clean[i, j]) < 0.05
        med, _ = F.reference_median(noisy, 5)
        keep = np.abs(noisy - med) <= 0.3
        assert np.array_equal(out[keep], noisy[keep])

    def test_clean_step_untouched(self):
        img = step_edge()
        assert np.array_equal(F.switching_bilateral_filter(img, noise_threshold=0.3), img)

    def test_border_impulse(self):
        img = np.full((8, 8), 0.2)
        img[0, 0] = 1.0
        out = F.switching_bilateral_filter(img, noise_threshold=0.3)
        assert out[0, 0] == pytest.approx(0.2)

    def test_single_impulse_replaced_by_neighbourhood(self):
        img = np.full((9, 9), 0.4)
        img[4, 4] = 1.0
        out = F.switching_bilateral_filter(img)
        assert out[4, 4] == pytest.approx(0.4)
        out[4, 4] = img[4, 4]
        assert np.array_equal(out, img)

    def test_bad_window(self):
        with pytest.raises(ValueError):
            F.switching_bilateral_filter(np.zeros((5, 5)), window=4)


def test_sobel_energy():
    assert F.sobel_energy(np.full((6, 6), 0.3)) == 0.0
    ramp = np.tile(np.arange(6.0), (6, 1))
    assert F.sobel_energy(ramp) == pytest.approx(8.0)  # (1 + 2 + 1) * 2


def test_tv_impulse_peak_reduced():
    img = np.zeros((9, 9))
    img[4, 4] = 1.0
    assert F.tv_denoise(img, 0.1, 10)[4, 4] < 1.0
