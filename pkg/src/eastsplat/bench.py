"""Rasterizer throughput harness.

Renders synthetic scenes of fixed sizes and reports frames/second per
kernel backend as JSON. A committed baseline from the reference machine
tracks regressions at +/-20%; the comparison is informational, not a hard
gate.
"""

from __future__ import annotations

import json
import platform
import time
from pathlib import Path

import numpy as np

from .render import available_backends, rasterize
from .scene import Bounds, GaussianCloud, SceneModel
from .datagen import look_at_camera

DEFAULT_SIZES = (10_000, 50_000, 100_000)
DEFAULT_RESOLUTION = 512
TOLERANCE = 0.20


def synth_scene(n: int, seed: int = 0) -> SceneModel:
    rng = np.random.default_rng(seed)
    positions = np.column_stack([
        rng.uniform(-1.0, 1.0, n), rng.uniform(-1.0, 1.0, n),
        rng.uniform(-0.4, 0.4, n)])
    cloud = GaussianCloud(
        positions=positions,
        log_scales=rng.uniform(-4.6, -3.4, (n, 3)),
        rotations=rng.normal(size=(n, 4)),
        opacity_logits=rng.uniform(-2.0, 1.0, n),
        sh_coeffs=rng.normal(0.0, 0.3, (n, 48)),
    )
    return SceneModel(cloud, Bounds.of_points(positions))


def bench_camera(resolution: int):
    return look_at_camera([0.0, 0.0, 3.0], [0.0, 0.0, 0.0], resolution,
                          resolution, focal=0.9 * resolution)


def run_benchmark(sizes=DEFAULT_SIZES, resolution=DEFAULT_RESOLUTION,
                  frames: int = 3, backends=None, seed: int = 0) -> dict:
    backends = list(backends or available_backends())
    camera = bench_camera(resolution)
    results = {
        "machine": {
            "platform": platform.platform(),
            "python": platform.python_version(),
            "processor": platform.processor() or "unknown",
        },
        "resolution": resolution,
        "frames_per_size": frames,
        "backends": {},
    }
    for backend in backends:
        per_size = {}
        for n in sizes:
            scene = synth_scene(n, seed=seed)
            rasterize(scene, camera, backend=backend)  # warm-up / binning caches
            start = time.perf_counter()
            for _ in range(frames):
                rasterize(scene, camera, backend=backend)
            elapsed = (time.perf_counter() - start) / frames
            per_size[str(n)] = {
                "seconds_per_frame": elapsed,
                "fps": 1.0 / elapsed if elapsed > 0 else float("inf"),
            }
        results["backends"][backend] = per_size
    return results


def compare_to_baseline(result: dict, baseline: dict,
                        tolerance: float = TOLERANCE) -> list:
    """[(backend, size, current_fps, baseline_fps, ratio, within)] rows."""
    rows = []
    for backend, sizes in result.get("backends", {}).items():
        base_sizes = baseline.get("backends", {}).get(backend, {})
        for size, stats in sizes.items():
            if size not in base_sizes:
                continue
            cur = stats["fps"]
            ref = base_sizes[size]["fps"]
            ratio = cur / ref if ref > 0 else float("inf")
            rows.append((backend, size, cur, ref, ratio,
                         (1.0 - tolerance) <= ratio <= (1.0 + tolerance)))
    return rows


def write_report(result: dict, path) -> None:
    Path(path).write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
