import numpy as np
import pytest

from eastsplat.errors import TrainingAborted
from eastsplat.features import FeatureMaps, channel_stats, default_network, forward
from eastsplat.features.network import backward as net_backward
from eastsplat.render import rasterize, rasterize_backward
from eastsplat.scene import Bounds, SceneModel, TrainingDataset, load_scene
from eastsplat.style import (LossWeights, TrainConfig, Trainer,
                             build_style_targets, content_loss, style_loss,
                             total_loss, train)
from eastsplat.style.config import ConfigError, load_train_config
from eastsplat.style.ops import (content_loss_backward, style_loss_backward)

from builders import front_camera, random_cloud, toy_scene

BG = (1.0, 1.0, 1.0)


def covered_toy(dtype=np.float32):
    return toy_scene(spacing=0.6, scale=-0.7, opacity=0.97, dtype=dtype)


def toy_dataset(scene, sizes=((2.2,), (2.6,))):
    cams = [front_camera(width=64, height=64, focal=60.0, distance=d[0]) for d in sizes]
    views = [(c, rasterize(scene, c, background=BG).image) for c in cams]
    return TrainingDataset(views=views,
                           sfm_points=scene.gaussians.positions.astype(np.float64),
                           sfm_colors=np.full((len(scene.gaussians), 3), 0.5))


def flat_style(color=(0.85, 0.3, 0.1), size=64):
    return np.full((size, size, 3), color, dtype=np.float32)


def test_phase2_stationary_point_leaves_sh_unchanged():
    """w_s = 0 with unmodulated targets: gradient is exactly zero."""
    scene = covered_toy()
    ds = toy_dataset(scene)
    cfg = TrainConfig(phase1_iters=0, phase2_iters=10, background=BG,
                      w_content=1.0, w_style=0.0, content_target_mode="original")
    tr = Trainer(ds, scene, default_network(0), flat_style(), cfg)
    sh_before = scene.gaussians.sh_coeffs.copy()
    for report in tr.run():
        assert report.l_total == pytest.approx(0.0, abs=1e-10)
    assert np.abs(scene.gaussians.sh_coeffs - sh_before).max() <= 1e-6


def test_toy_stylization_moves_feature_stats_toward_style():
    scene = covered_toy()
    ds = toy_dataset(scene)
    net = default_network(0)
    cfg = TrainConfig(phase1_iters=0, phase2_iters=200, background=BG, seed=0)
    tr = Trainer(ds, scene, net, flat_style(), cfg)
    tr.prepare_phase2()

    def stat_distance():
        d = 0.0
        for cam, _ in tr.views:
            img = rasterize(tr.scene, cam, background=BG).image
            feats = forward(net, img)
            for tap in tr.style_targets.means:
                m, s = channel_stats(feats[tap])
                d += float(np.sum((m - tr.style_targets.means[tap]) ** 2)
                           + np.sum((s - tr.style_targets.stds[tap]) ** 2))
        return d

    before = stat_distance()
    for _ in tr.run():
        pass
    after = stat_distance()
    assert after <= 0.5 * before


def test_phase2_freezes_geometry_bit_exact():
    scene = covered_toy()
    ds = toy_dataset(scene)
    cfg = TrainConfig(phase1_iters=0, phase2_iters=25, background=BG)
    tr = Trainer(ds, scene, default_network(0), flat_style(), cfg)
    frozen = {f: getattr(scene.gaussians, f).copy()
              for f in ("positions", "log_scales", "rotations", "opacity_logits")}
    sh_before = scene.gaussians.sh_coeffs.copy()
    for _ in tr.run():
        pass
    for name, before in frozen.items():
        assert np.array_equal(getattr(scene.gaussians, name), before), name
    assert not np.array_equal(scene.gaussians.sh_coeffs, sh_before)


def test_fixed_seed_reproduces_loss_stream():
    def run():
        scene = covered_toy()
        ds = toy_dataset(scene)
        cfg = TrainConfig(phase1_iters=15, phase2_iters=15, background=BG, seed=3)
        tr = Trainer(ds, scene, default_network(0), flat_style(), cfg)
        return [(r.iteration, r.phase, r.l_content, r.l_style, r.l_total,
                 r.l_photometric) for r in tr.run()]

    assert run() == run()


def test_nan_loss_aborts_with_snapshot(tmp_path):
    scene = covered_toy()
    ds = toy_dataset(scene)
    cfg = TrainConfig(phase1_iters=5, phase2_iters=0, background=BG)
    tr = Trainer(ds, scene, default_network(0), None, cfg, snapshot_dir=tmp_path)
    scene.gaussians.sh_coeffs[0, 0] = np.nan
    with pytest.raises(TrainingAborted):
        for _ in tr.run():
            pass


def test_pruning_drops_transparent_gaussians():
    scene = covered_toy()
    scene.gaussians.opacity_logits[:3] = -12.0  # sigmoid ~ 6e-6 << 0.005
    ds = toy_dataset(scene)
    cfg = TrainConfig(phase1_iters=4, phase2_iters=0, background=BG,
                      prune_every=2, lr_opacity=1e-8)
    tr = Trainer(ds, scene, default_network(0), None, cfg)
    for _ in tr.run():
        pass
    assert len(tr.scene.gaussians) == 6


def test_prune_to_empty_aborts():
    scene = covered_toy()
    scene.gaussians.opacity_logits[:] = -12.0
    ds = toy_dataset(scene)
    cfg = TrainConfig(phase1_iters=3, phase2_iters=0, background=BG,
                      prune_every=1, lr_opacity=1e-8)
    tr = Trainer(ds, scene, default_network(0), None, cfg)
    with pytest.raises(TrainingAborted):
        for _ in tr.run():
            pass


def test_snapshots_written_at_cadence(tmp_path):
    scene = covered_toy()
    ds = toy_dataset(scene)
    cfg = TrainConfig(phase1_iters=6, phase2_iters=0, background=BG,
                      snapshot_every=3)
    tr = Trainer(ds, scene, default_network(0), None, cfg, snapshot_dir=tmp_path)
    for _ in tr.run():
        pass
    files = sorted(p.name for p in tmp_path.glob("*.esplat"))
    assert files == ["iter_000003.esplat", "iter_000006.esplat"]
    load_scene(tmp_path / "iter_000006.esplat").validate()


def test_train_wrapper_returns_reports():
    scene = covered_toy()
    ds = toy_dataset(scene)
    cfg = TrainConfig(phase1_iters=4, phase2_iters=4, background=BG)
    out_scene, reports = train(ds, scene, default_network(0), flat_style(), cfg)
    assert out_scene is scene
    assert [r.iteration for r in reports] == list(range(1, 9))
    assert [r.phase for r in reports] == [1] * 4 + [2] * 4


def test_phase2_gradient_chain_matches_fd():
    """Loss -> features backward -> rasterizer backward, FD-checked end to end."""
    scene = covered_toy(dtype=np.float64)
    cam = front_camera(width=32, height=32, focal=30.0, distance=2.2)
    net = default_network(0)
    weights = LossWeights(1.0, 10.0)
    style_targets = build_style_targets(net, flat_style(size=32))
    base_render = rasterize(scene, cam, background=BG)
    content_targets = FeatureMaps(
        {"relu4_1": forward(net, base_render.image.astype(np.float32))["relu4_1"]})

    def loss_of(cloud):
        s = SceneModel(cloud, scene.bounds)
        img = rasterize(s, cam, background=BG).image
        feats = forward(net, img)
        return total_loss(content_loss(feats, content_targets),
                          style_loss(feats, style_targets), weights)

    render = rasterize(scene, cam, background=BG)
    feats = forward(net, render.image, want_trace=True)
    tap_grads = {}
    for tap, g in content_loss_backward(feats, content_targets).items():
        tap_grads[tap] = weights.w_content * g
    for tap, g in style_loss_backward(feats, style_targets).items():
        tap_grads[tap] = tap_grads.get(tap, 0.0) + weights.w_style * g
    grad_image = net_backward(net, render.image, tap_grads, feats)
    analytic = rasterize_backward(scene, cam, render, grad_image).sh_coeffs

    rng = np.random.default_rng(0)
    h = 1e-4
    checked = 0
    for _ in range(25):
        i = int(rng.integers(len(scene.gaussians)))
        j = int(rng.integers(48))
        plus = scene.gaussians.copy()
        plus.sh_coeffs[i, j] += h
        minus = scene.gaussians.copy()
        minus.sh_coeffs[i, j] -= h
        fd = (loss_of(plus) - loss_of(minus)) / (2 * h)
        if abs(fd) < 1e-7 and abs(analytic[i, j]) < 1e-7:
            continue
        assert analytic[i, j] == pytest.approx(fd, rel=2e-2, abs=1e-6)
        checked += 1
    assert checked >= 10


class TestConfig:
    def test_toml_file_and_overrides(self, tmp_path):
        cfg_file = tmp_path / "train.toml"
        cfg_file.write_text(
            "# training config\n"
            "[train]\n"
            "phase1_iters = 123\n"
            "w_style = 5.5\n"
            "background = [0.0, 0.0, 0.0]\n"
            'content_target_mode = "original"\n'
        )
        cfg = load_train_config(cfg_file, overrides={"w_style": 7.0, "seed": 9})
        assert cfg.phase1_iters == 123
        assert cfg.w_style == 7.0  # CLI override wins
        assert cfg.background == (0.0, 0.0, 0.0)
        assert cfg.content_target_mode == "original"
        assert cfg.seed == 9

    def test_unknown_key_rejected(self, tmp_path):
        cfg_file = tmp_path / "bad.toml"
        cfg_file.write_text("not_a_field = 1\n")
        with pytest.raises(ConfigError, match="not_a_field"):
            load_train_config(cfg_file)

    def test_invalid_values_rejected(self):
        with pytest.raises(ConfigError):
            TrainConfig(phase1_iters=-1).validate()
        with pytest.raises(ConfigError):
            TrainConfig(lr_sh=0.0).validate()
        with pytest.raises(ConfigError):
            TrainConfig(w_content=0.0, w_style=0.0).validate()
        with pytest.raises(ConfigError):
            TrainConfig(content_target_mode="other").validate()
