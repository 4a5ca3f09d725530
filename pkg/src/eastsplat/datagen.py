"""Synthetic forward-facing capture generator.

Builds a ground-truth Gaussian scene, renders it from a small rig of
near-parallel cameras, and writes the result as a COLMAP text-convention
dataset (cameras.txt / images.txt / points3D.txt / images/). Useful for
demos, smoke runs, and reconstruction benchmarks where no real capture is
at hand.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .render import rasterize
from .scene import (Bounds, Camera, GaussianCloud, SceneModel, logit,
                    rgb_to_sh_dc)


def rotation_to_quaternion(r: np.ndarray) -> np.ndarray:
    """3x3 rotation matrix to (w, x, y, z) unit quaternion."""
    r = np.asarray(r, dtype=np.float64)
    t = np.trace(r)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2
        return np.array([0.25 * s, (r[2, 1] - r[1, 2]) / s,
                         (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s])
    i = int(np.argmax(np.diag(r)))
    j, k = (i + 1) % 3, (i + 2) % 3
    s = np.sqrt(max(r[i, i] - r[j, j] - r[k, k] + 1.0, 0.0)) * 2
    q = np.empty(4)
    q[0] = (r[k, j] - r[j, k]) / s
    q[1 + i] = 0.25 * s
    q[1 + j] = (r[j, i] + r[i, j]) / s
    q[1 + k] = (r[k, i] + r[i, k]) / s
    return q


def look_at_camera(eye, target, width, height, focal) -> Camera:
    eye = np.asarray(eye, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    forward = target - eye
    forward = forward / np.linalg.norm(forward)
    world_up = np.array([0.0, 1.0, 0.0])
    right = np.cross(forward, world_up)
    if np.linalg.norm(right) < 1e-8:
        right = np.array([1.0, 0.0, 0.0])
    right = right / np.linalg.norm(right)
    down = np.cross(forward, right)
    rotation = np.stack([right, down, forward])
    return Camera(fx=focal, fy=focal, cx=width / 2, cy=height / 2,
                  width=width, height=height, rotation=rotation,
                  translation=-rotation @ eye)


def flat_color_coeffs(rgb) -> np.ndarray:
    sh = np.zeros(48)
    sh[0::16] = rgb_to_sh_dc(np.asarray(rgb, dtype=np.float64))
    return sh


def toy_scene(colors=None, grid=3, spacing=0.5, scale=-1.8, opacity=0.8,
              dtype=np.float32) -> SceneModel:
    """Deterministic grid of flat-colored Gaussians; demo and test subject."""
    rng = np.random.default_rng(7)
    if colors is None:
        colors = rng.uniform(0.1, 0.9, (grid * grid, 3))
    offsets = np.arange(grid) - (grid - 1) / 2
    xs, ys = np.meshgrid(offsets * spacing, offsets * spacing)
    positions = np.column_stack([xs.ravel(), ys.ravel(), np.zeros(grid * grid)])
    cloud = GaussianCloud(
        positions=positions,
        log_scales=np.full((grid * grid, 3), float(scale)),
        rotations=np.tile([1.0, 0.0, 0.0, 0.0], (grid * grid, 1)),
        opacity_logits=np.full(grid * grid, logit(opacity)),
        sh_coeffs=np.stack([flat_color_coeffs(c) for c in colors]),
        dtype=dtype,
    )
    return SceneModel(cloud, Bounds.of_points(positions),
                      metadata={"source": "toy", "sh_degree": 3})


def make_ground_truth_scene(seed=0, n=600, extent=2.6, depth=0.4) -> SceneModel:
    """Colorful Gaussian slab used as the demo capture subject.

    The slab extends past the demo rig's frustums and is dense enough to
    occlude the background, like a forward-facing photo: a back layer of
    large overlapping Gaussians guarantees coverage, a front layer adds
    structure.
    """
    rng = np.random.default_rng(seed)
    n_back = max(n // 3, 1)
    n_front = n - n_back

    jitter = extent / np.sqrt(n_back) * 0.9
    side = int(np.ceil(np.sqrt(n_back)))
    gx, gy = np.meshgrid(np.linspace(-extent, extent, side),
                         np.linspace(-extent * 0.75, extent * 0.75, side))
    back_xy = np.column_stack([gx.ravel(), gy.ravel()])[:n_back]
    back = np.column_stack([
        back_xy + rng.normal(0.0, jitter * 0.2, back_xy.shape),
        rng.uniform(-depth, -depth * 0.5, n_back),
    ])
    front = np.column_stack([
        rng.uniform(-extent, extent, n_front),
        rng.uniform(-extent * 0.75, extent * 0.75, n_front),
        rng.uniform(-depth * 0.4, depth, n_front),
    ])
    positions = np.vstack([back, front])

    colors = rng.uniform(0.05, 0.95, (n, 3))
    sh = np.stack([flat_color_coeffs(c) for c in colors])
    # mild view dependence so degree>0 terms matter
    sh[:, 1::16] += rng.normal(0.0, 0.08, (n, 3))
    sh[:, 2::16] += rng.normal(0.0, 0.08, (n, 3))

    back_scale = np.log(2.2 * extent / side)
    log_scales = np.vstack([
        rng.uniform(back_scale - 0.2, back_scale + 0.2, (n_back, 3)),
        rng.uniform(-2.9, -2.0, (n_front, 3)),
    ])
    opacity = np.concatenate([
        np.full(n_back, logit(0.95)),
        rng.uniform(logit(0.35), logit(0.92), n_front),
    ])
    cloud = GaussianCloud(
        positions=positions,
        log_scales=log_scales,
        rotations=rng.normal(size=(n, 4)),
        opacity_logits=opacity,
        sh_coeffs=sh,
    )
    scene = SceneModel(cloud, Bounds.of_points(positions),
                       metadata={"source": "synthetic", "sh_degree": 3})
    return scene


def forward_facing_rig(count=5, width=128, height=96, focal=110.0, distance=3.2,
                       lateral=0.45) -> list:
    """Cameras on a shallow arc in front of the origin, all looking at it."""
    cameras = []
    offsets = np.linspace(-lateral, lateral, count)
    for i, dx in enumerate(offsets):
        dy = 0.12 * np.sin(2.0 * np.pi * i / max(count - 1, 1))
        eye = np.array([dx, dy, distance])
        cameras.append(look_at_camera(eye, [0.0, 0.0, 0.0], width, height, focal))
    return cameras


def make_demo_dataset(out_dir, seed=0, views=5, width=128, height=96,
                      gaussians=600, point_jitter=0.01):
    """Render a synthetic capture and write it as a COLMAP text dataset.

    Returns (dataset_root, ground_truth_scene). The sparse points are the
    ground-truth Gaussian centers with a little jitter, restricted to
    points observed by the rig: real SfM only triangulates what the images
    see, so exported points reproject into the views by construction.
    """
    gt = make_ground_truth_scene(seed=seed, n=gaussians)
    cameras = forward_facing_rig(count=views, width=width, height=height)
    images = [rasterize(gt, cam, background=(1.0, 1.0, 1.0)).image for cam in cameras]

    rng = np.random.default_rng(seed + 1)
    points = gt.gaussians.positions.astype(np.float64)
    points = points + rng.normal(0.0, point_jitter, points.shape)
    dc = gt.gaussians.sh_coeffs[:, 0::16].astype(np.float64)
    colors = np.clip(dc * 0.28209479177387814 + 0.5, 0.0, 1.0)

    seen_by = np.zeros(points.shape[0], dtype=int)
    margin = 2.0  # pixels inside the border, like feature detectors behave
    for cam in cameras:
        uv, depth = cam.project_points(points)
        inside = ((depth > 0) & (uv[:, 0] >= margin) & (uv[:, 0] < cam.width - margin)
                  & (uv[:, 1] >= margin) & (uv[:, 1] < cam.height - margin))
        seen_by += inside
    keep = seen_by >= len(cameras)
    if keep.sum() < 4:  # degenerate rig; fall back to everything
        keep = np.ones(points.shape[0], dtype=bool)

    root = write_colmap_text(Path(out_dir), cameras, images, points[keep], colors[keep])
    return root, gt


def write_colmap_text(root, cameras, images, points, colors) -> Path:
    """Write views + sparse points in COLMAP text convention."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    sparse = root / "sparse" / "0"
    sparse.mkdir(parents=True, exist_ok=True)

    cam_lines = ["# Camera list: CAMERA_ID MODEL WIDTH HEIGHT PARAMS[]"]
    img_lines = ["# Image list: IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME"]
    for idx, (cam, image) in enumerate(zip(cameras, images), start=1):
        cam_lines.append(
            f"{idx} PINHOLE {cam.width} {cam.height} {cam.fx} {cam.fy} {cam.cx} {cam.cy}")
        q = rotation_to_quaternion(cam.rotation)
        t = cam.translation
        name = f"view_{idx:03d}.png"
        img_lines.append(
            f"{idx} {q[0]} {q[1]} {q[2]} {q[3]} {t[0]} {t[1]} {t[2]} {idx} {name}")
        img_lines.append("")
        arr = (np.clip(image, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
        Image.fromarray(arr, mode="RGB").save(root / "images" / name)
    (sparse / "cameras.txt").write_text("\n".join(cam_lines) + "\n")
    (sparse / "images.txt").write_text("\n".join(img_lines) + "\n")

    pt_lines = ["# 3D point list: POINT3D_ID X Y Z R G B ERROR TRACK[]"]
    for i, (p, c) in enumerate(zip(points, colors), start=1):
        r, g, b = (np.clip(c, 0.0, 1.0) * 255.0 + 0.5).astype(int)
        pt_lines.append(f"{i} {p[0]} {p[1]} {p[2]} {r} {g} {b} 0.5 1 0")
    (sparse / "points3D.txt").write_text("\n".join(pt_lines) + "\n")
    return root
