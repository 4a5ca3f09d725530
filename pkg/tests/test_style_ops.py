import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eastsplat.errors import DimensionError
from eastsplat.features import FeatureMaps, channel_stats, default_network
from eastsplat.style import (LossWeights, adain, build_style_targets,
                             content_loss, gram, style_loss, total_loss)
from eastsplat.style.ops import (content_loss_backward, gram_backward,
                                 style_loss_backward)


def random_tensor(seed, c=6, h=5, w=7):
    return np.random.default_rng(seed).normal(size=(c, h, w))


class TestAdain:
    def test_identity_case(self):
        t = random_tensor(0)
        mu, sigma = channel_stats(t)
        out = adain(t, mu, sigma)
        assert np.abs(out - t).max() <= 1e-6

    def test_affine_definition(self):
        rng = np.random.default_rng(1)
        t = rng.normal(size=(4, 16, 16))
        mu, sigma = channel_stats(t)
        t = (t - mu[:, None, None]) / sigma[:, None, None]  # now mu=0, sigma=1
        out = adain(t, np.full(4, 3.0), np.full(4, 2.0))
        m2, s2 = channel_stats(out)
        assert np.allclose(m2, 3.0, atol=1e-6)
        assert np.allclose(s2, 2.0, atol=1e-6)

    def test_output_stats_equal_targets(self):
        rng = np.random.default_rng(2)
        for trial in range(20):
            c = int(rng.integers(1, 8))
            t = rng.normal(rng.normal(), abs(rng.normal()) + 0.5, (c, 6, 6))
            mean = rng.normal(size=c)
            std = rng.uniform(0.5, 2.0, c)
            out = adain(t, mean, std)
            m, s = channel_stats(out)
            assert np.abs(m - mean).max() <= 1e-5
            assert np.abs(s - std).max() <= 1e-5

    def test_channel_mismatch_rejected(self):
        with pytest.raises(DimensionError):
            adain(random_tensor(3, c=4), np.zeros(5), np.ones(5))


class TestGram:
    def test_zero_features(self):
        assert np.all(gram(np.zeros((3, 4, 4))) == 0.0)

    def test_hand_computed_two_channel(self):
        t = np.zeros((2, 3, 5))
        t[0] = 1.0
        g = gram(t)
        assert np.allclose(g, [[0.5, 0.0], [0.0, 0.0]])

    def test_symmetric_psd_and_matches_double_loop(self):
        rng = np.random.default_rng(4)
        for trial in range(10):
            t = rng.normal(size=(5, 4, 6))
            g = gram(t)
            assert np.allclose(g, g.T)
            assert np.linalg.eigvalsh(g).min() >= -1e-6
            c, h, w = t.shape
            ref = np.zeros((c, c))
            for i in range(c):
                for j in range(c):
                    ref[i, j] = np.sum(t[i] * t[j]) / (c * h * w)
            assert np.abs(g - ref).max() <= 1e-6

    def test_spatial_permutation_invariance(self):
        rng = np.random.default_rng(5)
        t = rng.normal(size=(4, 6, 6))
        flat = t.reshape(4, -1)
        perm = rng.permutation(36)
        t2 = flat[:, perm].reshape(4, 6, 6)
        assert np.allclose(gram(t), gram(t2), atol=1e-12)

    def test_backward_matches_fd(self):
        rng = np.random.default_rng(6)
        t = rng.normal(size=(3, 4, 4))
        up = rng.normal(size=(3, 3))
        g = gram_backward(t, up)
        h = 1e-6
        for _ in range(20):
            i, j, k = rng.integers(3), rng.integers(4), rng.integers(4)
            p = t.copy(); p[i, j, k] += h
            m = t.copy(); m[i, j, k] -= h
            fd = (np.sum(up * gram(p)) - np.sum(up * gram(m))) / (2 * h)
            assert g[i, j, k] == pytest.approx(fd, rel=1e-5, abs=1e-9)


class TestLosses:
    def test_content_identical_is_zero(self):
        maps = FeatureMaps({"relu4_1": random_tensor(7)})
        assert content_loss(maps, maps) == 0.0

    def test_content_hand_value(self):
        gen = FeatureMaps({"relu4_1": np.full((1, 2, 2), 2.0)})
        tgt = FeatureMaps({"relu4_1": np.zeros((1, 2, 2))})
        assert content_loss(gen, tgt) == pytest.approx(4.0)

    def test_content_matches_elementwise_oracle(self):
        rng = np.random.default_rng(8)
        a = rng.normal(size=(3, 5, 5))
        b = rng.normal(size=(3, 5, 5))
        val = content_loss(FeatureMaps({"relu4_1": a}), FeatureMaps({"relu4_1": b}))
        ref = sum((a[i, j, k] - b[i, j, k]) ** 2
                  for i in range(3) for j in range(5) for k in range(5)) / 75
        assert val == pytest.approx(ref, rel=1e-6)

    def test_content_shape_mismatch(self):
        with pytest.raises(DimensionError):
            content_loss(FeatureMaps({"relu4_1": np.zeros((1, 2, 2))}),
                         FeatureMaps({"relu4_1": np.zeros((1, 3, 3))}))

    def test_style_self_targets_zero(self):
        net = default_network(seed=0)
        rng = np.random.default_rng(9)
        image = rng.uniform(0, 1, (32, 32, 3)).astype(np.float32)
        targets = build_style_targets(net, image)
        from eastsplat.features import forward

        feats = forward(net, image)
        assert style_loss(feats, targets) == 0.0

    def test_style_scalar_frobenius(self):
        from eastsplat.style import StyleTargets

        gen = FeatureMaps({"t": np.full((1, 1, 1), 2.0)})  # gram [[4]]
        targets = StyleTargets(grams={"t": np.array([[1.0]])},
                               means={"t": np.zeros(1)}, stds={"t": np.ones(1)})
        assert style_loss(gen, targets) == pytest.approx(9.0)

    def test_style_backward_matches_fd(self):
        from eastsplat.style import StyleTargets

        rng = np.random.default_rng(10)
        t = rng.normal(size=(4, 5, 5))
        targets = StyleTargets(grams={"t": gram(rng.normal(size=(4, 5, 5)))},
                               means={"t": np.zeros(4)}, stds={"t": np.ones(4)})
        g = style_loss_backward(FeatureMaps({"t": t}), targets)["t"]
        h = 1e-6
        for _ in range(20):
            i, j, k = rng.integers(4), rng.integers(5), rng.integers(5)
            p = t.copy(); p[i, j, k] += h
            m = t.copy(); m[i, j, k] -= h
            fd = (style_loss(FeatureMaps({"t": p}), targets)
                  - style_loss(FeatureMaps({"t": m}), targets)) / (2 * h)
            assert g[i, j, k] == pytest.approx(fd, rel=1e-4, abs=1e-9)

    def test_content_backward_matches_fd(self):
        rng = np.random.default_rng(11)
        a = rng.normal(size=(2, 4, 4))
        b = rng.normal(size=(2, 4, 4))
        g = content_loss_backward(FeatureMaps({"relu4_1": a}),
                                  FeatureMaps({"relu4_1": b}))["relu4_1"]
        h = 1e-6
        for _ in range(10):
            i, j, k = rng.integers(2), rng.integers(4), rng.integers(4)
            p = a.copy(); p[i, j, k] += h
            m = a.copy(); m[i, j, k] -= h
            fd = (content_loss(FeatureMaps({"relu4_1": p}), FeatureMaps({"relu4_1": b}))
                  - content_loss(FeatureMaps({"relu4_1": m}), FeatureMaps({"relu4_1": b}))) / (2 * h)
            assert g[i, j, k] == pytest.approx(fd, rel=1e-5, abs=1e-9)


class TestTotalLoss:
    def test_style_weight_zero(self):
        assert total_loss(3.0, 123.0, LossWeights(0.5, 0.0)) == 1.5

    def test_hand_arithmetic(self):
        assert total_loss(2.0, 3.0, LossWeights(0.5, 2.0)) == pytest.approx(7.0)

    @given(st.floats(0, 100), st.floats(0, 100), st.floats(0.01, 10), st.floats(0.01, 10))
    @settings(max_examples=100, deadline=None)
    def test_matches_direct_arithmetic(self, lc, ls, wc, ws):
        assert total_loss(lc, ls, LossWeights(wc, ws)) == pytest.approx(wc * lc + ws * ls)

    def test_linearity_and_monotonicity(self):
        w = LossWeights(2.0, 3.0)
        base = total_loss(1.0, 1.0, w)
        assert total_loss(2.0, 1.0, w) - base == pytest.approx(2.0)
        assert total_loss(1.0, 2.0, w) - base == pytest.approx(3.0)
        assert total_loss(1.0, 1.0, LossWeights(2.5, 3.0)) > base

    def test_invalid_weights(self):
        with pytest.raises(ValueError):
            LossWeights(0.0, 0.0).validate()
        with pytest.raises(ValueError):
            LossWeights(-1.0, 1.0).validate()
