"""Two-phase scene optimization.

Phase 1 (reconstruction): every Gaussian parameter is optimized against a
per-view photometric loss 0.8*L1 + 0.2*(1 - SSIM), with periodic pruning of
near-transparent Gaussians and optional splitting of oversized ones.

Phase 2 (stylization): geometry and opacity freeze; per-view content
targets are the feature maps of the phase-1 renders re-statted onto the
style image (adain), and the view-dependent color coefficients are
optimized to minimize the weighted content + style objective, with
gradients flowing through the feature extractor and the rasterizer.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import DimensionError, TrainingAborted
from ..features.network import FeatureMaps, backward as net_backward, forward as net_forward
from ..metrics.ssim import ssim_grad
from ..render import rasterize, rasterize_backward
from ..scene import save_scene
from .config import TrainConfig
from .ops import (DEFAULT_CONTENT_TAPS, LossWeights, adain, build_style_targets,
                  content_loss, content_loss_backward, style_loss,
                  style_loss_backward, total_loss)
from .optim import Adam

L1_WEIGHT = 0.8
DSSIM_WEIGHT = 0.2
MIN_STYLE_SIZE = 64


@dataclass
class LossReport:
    iteration: int  # global, 1-based
    phase: int
    phase_iteration: int  # 1-based within the phase
    l_content: float
    l_style: float
    l_total: float
    l_photometric: float | None
    wall_ms: float

    def validate(self) -> None:
        for name in ("l_content", "l_style", "l_total"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise TrainingAborted(f"{name} is {v}")

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration, "phase": self.phase,
            "phase_iteration": self.phase_iteration,
            "l_content": self.l_content, "l_style": self.l_style,
            "l_total": self.l_total, "l_photometric": self.l_photometric,
            "wall_ms": self.wall_ms,
        }


def _resize_image(image: np.ndarray, width: int, height: int) -> np.ndarray:
    channels = []
    for c in range(3):
        im = Image.fromarray(image[:, :, c].astype(np.float32), mode="F")
        channels.append(np.asarray(im.resize((width, height), Image.BILINEAR)))
    return np.clip(np.stack(channels, axis=2), 0.0, 1.0).astype(np.float32)


class Trainer:
    """Step-wise training driver; the control server drives it one step at
    a time between servicing client commands."""

    def __init__(self, dataset, scene, net, style_image, config: TrainConfig,
                 snapshot_dir=None):
        config.validate()
        if style_image is not None:
            if (style_image.ndim != 3 or style_image.shape[2] != 3
                    or style_image.shape[0] < MIN_STYLE_SIZE
                    or style_image.shape[1] < MIN_STYLE_SIZE):
                raise DimensionError(
                    f"style image must be at least {MIN_STYLE_SIZE}x{MIN_STYLE_SIZE} RGB")
        elif config.phase2_iters > 0:
            raise DimensionError("phase 2 requires a style image")
        self.config = config
        self.scene = scene
        self.net = net
        self.style_image = style_image
        self.background = np.asarray(config.background, dtype=np.float64)
        self.snapshot_dir = Path(snapshot_dir) if snapshot_dir else None
        self.rng = np.random.default_rng(config.seed)

        self.views = []
        for cam, image in dataset.views:
            if config.image_scale < 1.0:
                w = max(16, int(round(cam.width * config.image_scale)))
                h = max(16, int(round(cam.height * config.image_scale)))
                self.views.append((cam.resized(w, h), _resize_image(image, w, h)))
            else:
                self.views.append((cam, image.astype(np.float32)))

        self.iteration = 0
        self.phase1_done = 0
        self.phase2_done = 0
        self._view_order = []
        self._opt1 = Adam({
            "positions": config.lr_position,
            "log_scales": config.lr_log_scale,
            "rotations": config.lr_rotation,
            "opacity_logits": config.lr_opacity,
            "sh_coeffs": config.lr_sh,
        })
        self._opt2 = Adam({"sh_coeffs": config.lr_sh})
        self._phase2_ready = False
        self.style_targets = None
        self.content_targets = None  # per view: {tap: array}
        self.weights = LossWeights(config.w_content, config.w_style)
        self.weights.validate()

    # ------------------------------------------------------------------ #

    @property
    def total_iters(self) -> int:
        return self.config.phase1_iters + self.config.phase2_iters

    @property
    def finished(self) -> bool:
        return (self.phase1_done >= self.config.phase1_iters
                and self.phase2_done >= self.config.phase2_iters)

    @property
    def current_phase(self) -> int:
        return 1 if self.phase1_done < self.config.phase1_iters else 2

    def _next_view(self) -> int:
        """Seeded per-epoch shuffle; deterministic for a fixed seed."""
        if not self._view_order:
            self._view_order = list(self.rng.permutation(len(self.views)))
        return int(self._view_order.pop())

    def set_weights(self, w_content: float, w_style: float) -> None:
        self.weights = LossWeights(w_content, w_style)
        self.weights.validate()

    def set_style_image(self, style_image: np.ndarray) -> None:
        if (style_image.ndim != 3 or style_image.shape[2] != 3
                or style_image.shape[0] < MIN_STYLE_SIZE
                or style_image.shape[1] < MIN_STYLE_SIZE):
            raise DimensionError(
                f"style image must be at least {MIN_STYLE_SIZE}x{MIN_STYLE_SIZE} RGB")
        self.style_image = style_image
        self._phase2_ready = False  # retarget on next phase-2 step

    # ------------------------------------------------------------------ #

    def _abort(self, message: str) -> TrainingAborted:
        if self.snapshot_dir is not None:
            self.snapshot_dir.mkdir(parents=True, exist_ok=True)
            try:
                save_scene(self.scene, self.snapshot_dir / "diagnostic.esplat")
                message += f" (diagnostic snapshot in {self.snapshot_dir})"
            except Exception:
                pass
        return TrainingAborted(message)

    def _params(self) -> dict:
        cloud = self.scene.gaussians
        return {
            "positions": cloud.positions, "log_scales": cloud.log_scales,
            "rotations": cloud.rotations, "opacity_logits": cloud.opacity_logits,
            "sh_coeffs": cloud.sh_coeffs,
        }

    def _photometric(self, rendered, reference):
        diff = rendered.astype(np.float64) - reference.astype(np.float64)
        l1 = float(np.mean(np.abs(diff)))
        g_l1 = np.sign(diff) / diff.size
        s, g_s = ssim_grad(rendered.astype(np.float64), reference.astype(np.float64))
        loss = L1_WEIGHT * l1 + DSSIM_WEIGHT * (1.0 - s)
        grad = L1_WEIGHT * g_l1 - DSSIM_WEIGHT * g_s
        return loss, grad

    def _step_phase1(self) -> LossReport:
        start = time.perf_counter()
        cam, reference = self.views[self._next_view()]
        render = rasterize(self.scene, cam, background=self.background)
        loss, grad_image = self._photometric(render.image, reference)
        if not np.isfinite(loss):
            raise self._abort(f"non-finite photometric loss at iteration {self.iteration + 1}")
        grads = rasterize_backward(self.scene, cam, render, grad_image)
        self._opt1.step(self._params(), {
            "positions": grads.positions, "log_scales": grads.log_scales,
            "rotations": grads.rotations, "opacity_logits": grads.opacity_logits,
            "sh_coeffs": grads.sh_coeffs,
        })

        self.phase1_done += 1
        self.scene.refresh_bounds()
        cfg = self.config
        if cfg.prune_every > 0 and self.phase1_done % cfg.prune_every == 0:
            self._prune()
        if cfg.split_every > 0 and self.phase1_done % cfg.split_every == 0:
            self._split()

        wall = (time.perf_counter() - start) * 1e3
        return LossReport(self.iteration, 1, self.phase1_done, 0.0, 0.0,
                          loss, loss, wall)

    def _prune(self) -> None:
        cloud = self.scene.gaussians
        keep = cloud.opacities() >= self.config.prune_opacity_below
        if not keep.any():
            raise self._abort("pruning removed every Gaussian")
        if keep.all():
            return
        self.scene.gaussians = cloud.select(keep)
        self.scene.refresh_bounds()
        self._opt1.select(keep)

    def _split(self) -> None:
        from ..render.projection import quaternions_to_rotations

        cloud = self.scene.gaussians
        scales = cloud.scales()
        limit = self.config.split_scale_threshold * self.scene.bounds.diagonal
        split = scales.max(axis=1) > limit
        if not split.any():
            return
        keep = ~split
        parents = cloud.select(split)
        rot = quaternions_to_rotations(parents.rotations.astype(np.float64))
        axis_idx = parents.log_scales.argmax(axis=1)
        sigma = np.exp(parents.log_scales.max(axis=1))
        axes = rot[np.arange(len(parents)), :, axis_idx]
        offset = axes * (0.5 * sigma)[:, None]

        def child(sign):
            from ..scene.types import GaussianCloud

            return GaussianCloud(
                parents.positions + sign * offset,
                parents.log_scales - np.log(1.6),
                parents.rotations, parents.opacity_logits, parents.sh_coeffs,
                dtype=cloud.dtype)

        from ..scene.types import GaussianCloud

        kept = cloud.select(keep)
        a, b = child(+1.0), child(-1.0)
        merged = GaussianCloud(
            np.concatenate([kept.positions, a.positions, b.positions]),
            np.concatenate([kept.log_scales, a.log_scales, b.log_scales]),
            np.concatenate([kept.rotations, a.rotations, b.rotations]),
            np.concatenate([kept.opacity_logits, a.opacity_logits, b.opacity_logits]),
            np.concatenate([kept.sh_coeffs, a.sh_coeffs, b.sh_coeffs]),
            dtype=cloud.dtype)
        self.scene.gaussians = merged
        self.scene.refresh_bounds()
        self._opt1.select(keep)
        self._opt1.extend(2 * len(parents))

    # ------------------------------------------------------------------ #

    def prepare_phase2(self) -> None:
        """Freeze geometry, build style targets and per-view content targets."""
        self.style_targets = build_style_targets(self.net, self.style_image)
        self.content_targets = []
        for cam, _ in self.views:
            render = rasterize(self.scene, cam, background=self.background)
            feats = net_forward(self.net, render.image)
            targets = {}
            for tap in DEFAULT_CONTENT_TAPS:
                tensor = feats[tap]
                if self.config.content_target_mode == "adain":
                    targets[tap] = adain(tensor, self.style_targets.means[tap],
                                         self.style_targets.stds[tap])
                else:
                    targets[tap] = tensor
            self.content_targets.append(targets)
        self._phase2_ready = True

    def _step_phase2(self) -> LossReport:
        if not self._phase2_ready:
            self.prepare_phase2()
        start = time.perf_counter()
        view_idx = self._next_view()
        cam, _ = self.views[view_idx]
        render = rasterize(self.scene, cam, background=self.background)
        feats = net_forward(self.net, render.image, want_trace=True)

        targets = FeatureMaps(self.content_targets[view_idx])
        l_c = content_loss(feats, targets)
        l_s = style_loss(feats, self.style_targets)
        l_t = total_loss(l_c, l_s, self.weights)
        if not np.isfinite(l_t):
            raise self._abort(f"non-finite stylization loss at iteration {self.iteration + 1}")

        tap_grads = {}
        if self.weights.w_content > 0:
            for tap, g in content_loss_backward(feats, targets).items():
                tap_grads[tap] = self.weights.w_content * g
        if self.weights.w_style > 0:
            for tap, g in style_loss_backward(feats, self.style_targets).items():
                if tap in tap_grads:
                    tap_grads[tap] = tap_grads[tap] + self.weights.w_style * g
                else:
                    tap_grads[tap] = self.weights.w_style * g
        grad_image = net_backward(self.net, render.image, tap_grads, feats)
        grads = rasterize_backward(self.scene, cam, render, grad_image)
        self._opt2.step({"sh_coeffs": self.scene.gaussians.sh_coeffs},
                        {"sh_coeffs": grads.sh_coeffs})

        self.phase2_done += 1
        wall = (time.perf_counter() - start) * 1e3
        return LossReport(self.iteration, 2, self.phase2_done, l_c, l_s, l_t,
                          None, wall)

    # ------------------------------------------------------------------ #

    def step(self) -> LossReport:
        if self.finished:
            raise TrainingAborted("training already finished")
        phase = self.current_phase
        report = self._step_phase1() if phase == 1 else self._step_phase2()
        self.iteration += 1
        report.iteration = self.iteration
        report.validate()
        cfg = self.config
        if (cfg.snapshot_every > 0 and self.snapshot_dir is not None
                and self.iteration % cfg.snapshot_every == 0):
            self.snapshot_dir.mkdir(parents=True, exist_ok=True)
            save_scene(self.scene, self.snapshot_dir / f"iter_{self.iteration:06d}.esplat")
        return report

    def run(self):
        while not self.finished:
            yield self.step()


def train(dataset, scene, net, style_image, config: TrainConfig,
          snapshot_dir=None, report_callback=None):
    """Run both phases to completion; returns (scene, [LossReport])."""
    trainer = Trainer(dataset, scene, net, style_image, config,
                      snapshot_dir=snapshot_dir)
    reports = []
    for report in trainer.run():
        reports.append(report)
        if report_callback is not None:
            report_callback(report)
    return trainer.scene, reports
