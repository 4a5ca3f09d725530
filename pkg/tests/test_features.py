from pathlib import Path

import numpy as np
import pytest

from eastsplat.errors import DimensionError, WeightsFormatError
from eastsplat.features import (ConvLayer, NetworkSpec, PoolLayer, ReluLayer,
                                backward, channel_stats, default_network,
                                forward, load_weights, save_weights)

FIXTURES = Path(__file__).parent / "fixtures"


def identity_net():
    """3->3 delta-kernel conv, no normalization, no pooling."""
    weight = np.zeros((3, 3, 3, 3), dtype=np.float32)
    for c in range(3):
        weight[c, c, 1, 1] = 1.0
    layers = [ConvLayer("conv1_1", weight, np.zeros(3, dtype=np.float32))]
    return NetworkSpec(layers=layers, tap_points=("conv1_1",),
                       normalization_mean=np.zeros(3), normalization_std=np.ones(3))


class TestForward:
    def test_zero_weights_give_zero_maps(self):
        net = default_network(seed=0)
        for layer in net.layers:
            if layer.kind == "conv":
                layer.weight = np.zeros_like(layer.weight)
                layer.bias = np.zeros_like(layer.bias)
        rng = np.random.default_rng(0)
        maps = forward(net, rng.uniform(0, 1, (32, 32, 3)).astype(np.float32))
        for name in net.tap_points:
            assert np.all(maps[name] == 0.0)

    def test_identity_kernel_unnormalized(self):
        net = identity_net()
        rng = np.random.default_rng(1)
        image = rng.uniform(0, 1, (16, 16, 3)).astype(np.float32)
        maps = forward(net, image)
        assert np.allclose(maps["conv1_1"].transpose(1, 2, 0), image, atol=1e-7)

    def test_fixture_activations_match_independent_reference(self):
        net = load_weights(FIXTURES / "smallnet.eastnet")
        ref = np.load(FIXTURES / "smallnet_reference.npz")
        maps = forward(net, ref["image"])
        for name in net.tap_points:
            mine = maps[name]
            theirs = ref[f"tap_{name}"]
            assert mine.shape == theirs.shape
            assert np.abs(mine - theirs).max() <= 1e-4

    def test_too_small_input_rejected(self):
        with pytest.raises(DimensionError):
            forward(default_network(), np.zeros((8, 8, 3), dtype=np.float32))

    def test_tap_spatial_dims_follow_pool_factors(self):
        net = default_network(seed=1)
        maps = forward(net, np.zeros((40, 56, 3), dtype=np.float32))
        assert maps["relu1_1"].shape[1:] == (40, 56)
        assert maps["relu2_1"].shape[1:] == (20, 28)
        assert maps["relu3_1"].shape[1:] == (10, 14)
        assert maps["relu4_1"].shape[1:] == (5, 7)

    def test_deterministic(self):
        net = default_network(seed=2)
        rng = np.random.default_rng(3)
        image = rng.uniform(0, 1, (24, 24, 3)).astype(np.float32)
        a = forward(net, image)
        b = forward(net, image)
        for name in net.tap_points:
            assert np.array_equal(a[name], b[name])


class TestBackward:
    def test_zero_upstream_gives_zero_image_grad(self):
        net = default_network(seed=0)
        image = np.full((16, 16, 3), 0.5, dtype=np.float32)
        feats = forward(net, image, want_trace=True)
        grads = {name: np.zeros_like(feats[name]) for name in net.tap_points}
        g = backward(net, image, grads, feats)
        assert np.all(g == 0.0)

    def test_one_hot_conv_adjoint_stamps_flipped_kernel(self):
        rng = np.random.default_rng(4)
        weight = rng.normal(size=(1, 3, 3, 3)).astype(np.float32)
        net = NetworkSpec(layers=[ConvLayer("conv1_1", weight, np.zeros(1, dtype=np.float32))],
                          tap_points=("conv1_1",),
                          normalization_mean=np.zeros(3), normalization_std=np.ones(3))
        image = np.zeros((16, 16, 3), dtype=np.float32)
        feats = forward(net, image, want_trace=True)
        upstream = np.zeros_like(feats["conv1_1"])
        upstream[0, 8, 8] = 1.0
        g = backward(net, image, {"conv1_1": upstream}, feats)
        # adjoint of correlation: kernel stamped around (8, 8)
        for di in range(3):
            for dj in range(3):
                expected = weight[0, :, di, dj]
                assert np.allclose(g[8 + di - 1, 8 + dj - 1], expected, atol=1e-7)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        layers = [
            ConvLayer("conv1_1", rng.normal(0, 0.3, (4, 3, 3, 3)), rng.normal(0, 0.1, 4)),
            ReluLayer("relu1_1"),
            PoolLayer("pool1"),
            ConvLayer("conv2_1", rng.normal(0, 0.3, (6, 4, 3, 3)), rng.normal(0, 0.1, 6)),
            ReluLayer("relu2_1"),
        ]
        net = NetworkSpec(layers=layers, tap_points=("relu1_1", "relu2_1"))
        image = rng.uniform(0.1, 0.9, (16, 16, 3))
        feats = forward(net, image, want_trace=True)
        grads = {name: rng.normal(size=feats[name].shape) for name in net.tap_points}
        g = backward(net, image, grads, feats)

        def loss(img):
            m = forward(net, img)
            return sum(float(np.sum(grads[n] * m[n])) for n in net.tap_points)

        h = 1e-6
        rng2 = np.random.default_rng(6)
        for _ in range(60):
            i, j, c = rng2.integers(16), rng2.integers(16), rng2.integers(3)
            p = image.copy(); p[i, j, c] += h
            m = image.copy(); m[i, j, c] -= h
            fd = (loss(p) - loss(m)) / (2 * h)
            assert g[i, j, c] == pytest.approx(fd, rel=1e-3, abs=1e-7)

    def test_dot_product_identity(self):
        """<u, J v> == <J^T u, v> for random u, v at 64-bit."""
        net = default_network(seed=7)
        rng = np.random.default_rng(8)
        image = rng.uniform(0.2, 0.8, (20, 20, 3))
        feats = forward(net, image, want_trace=True)
        u = {name: rng.normal(size=feats[name].shape) for name in net.tap_points}
        jt_u = backward(net, image, u, feats)
        v = rng.normal(size=image.shape)

        eps = 1e-6
        plus = forward(net, image + eps * v)
        minus = forward(net, image - eps * v)
        lhs = sum(np.sum(u[n] * (plus[n] - minus[n]) / (2 * eps)) for n in net.tap_points)
        rhs = np.sum(jt_u * v)
        assert lhs == pytest.approx(rhs, rel=1e-4)

    def test_shape_mismatch_rejected(self):
        net = default_network(seed=0)
        image = np.zeros((16, 16, 3), dtype=np.float32)
        feats = forward(net, image, want_trace=True)
        bad = {"relu1_1": np.zeros((1, 2, 3), dtype=np.float32)}
        with pytest.raises(DimensionError):
            backward(net, image, bad, feats)


class TestChannelStats:
    def test_constant_channel_floors_std(self):
        t = np.full((2, 4, 4), 5.0)
        mean, std = channel_stats(t)
        assert np.allclose(mean, 5.0)
        assert np.allclose(std, 1e-8)

    def test_two_point_population_std(self):
        t = np.array([[[0.0, 2.0]]])  # one channel, two positions
        mean, std = channel_stats(t)
        assert mean[0] == pytest.approx(1.0)
        assert std[0] == pytest.approx(1.0)

    def test_matches_two_pass_reference(self):
        rng = np.random.default_rng(9)
        t = rng.normal(size=(5, 7, 11))
        mean, std = channel_stats(t)
        for c in range(5):
            vals = t[c].ravel()
            m = vals.sum() / vals.size
            s = np.sqrt(((vals - m) ** 2).sum() / vals.size)
            assert mean[c] == pytest.approx(m, abs=1e-6)
            assert std[c] == pytest.approx(s, abs=1e-6)


class TestContainer:
    def test_round_trip(self, tmp_path):
        net = default_network(seed=3)
        path = tmp_path / "net.eastnet"
        save_weights(net, path)
        loaded = load_weights(path)
        assert loaded.tap_points == net.tap_points
        assert np.allclose(loaded.normalization_mean, net.normalization_mean)
        for a, b in zip(net.layers, loaded.layers):
            assert a.kind == b.kind and a.name == b.name
            if a.kind == "conv":
                assert np.array_equal(a.weight.astype(np.float32), b.weight)

    def test_first_conv_maps_3_to_out(self):
        net = load_weights(FIXTURES / "smallnet.eastnet")
        first = next(l for l in net.layers if l.kind == "conv")
        assert first.in_channels == 3
        assert first.out_channels == 8

    def test_default_tap_names_present(self):
        net = load_weights(FIXTURES / "smallnet.eastnet")
        assert net.tap_points == ("relu1_1", "relu2_1", "relu3_1", "relu4_1")

    def test_missing_tensor_named_in_error(self, tmp_path):
        net = default_network(seed=4)
        path = tmp_path / "net.eastnet"
        save_weights(net, path)
        text = path.read_bytes()
        mangled = text.replace(b"tensor conv2_1.bias", b"tensor conv2_1.bias_gone", 1)
        path.write_bytes(mangled)
        with pytest.raises(WeightsFormatError, match="conv2_1.bias"):
            load_weights(path)

    def test_checksum_failure_reports_corruption(self, tmp_path):
        net = default_network(seed=5)
        path = tmp_path / "net.eastnet"
        save_weights(net, path)
        data = bytearray(path.read_bytes())
        data[-5] ^= 0xFF  # flip a payload byte
        path.write_bytes(bytes(data))
        with pytest.raises(WeightsFormatError, match="corrupt"):
            load_weights(path)

    def test_shape_mismatch_names_tensor(self, tmp_path):
        net = default_network(seed=6)
        path = tmp_path / "net.eastnet"
        save_weights(net, path)
        text = path.read_text(errors="surrogateescape")
        text = text.replace("tensor conv1_1.weight 8 3 3 3", "tensor conv1_1.weight 8 3 9", 1)
        path.write_text(text, errors="surrogateescape")
        with pytest.raises(WeightsFormatError, match="conv1_1.weight"):
            load_weights(path)
