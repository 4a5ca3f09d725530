"""Dataset ingestion from COLMAP text exports (cameras/images/points3D + images dir)."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import DatasetError, UnsupportedCameraModelError
from .types import Camera, TrainingDataset

SUPPORTED_MODELS = ("PINHOLE", "SIMPLE_PINHOLE")
IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


def quaternion_to_rotation(q) -> np.ndarray:
    """(w, x, y, z) quaternion to 3x3 rotation matrix. Normalizes first."""
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def _data_lines(path: Path):
    with open(path, "r") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            yield lineno, line


def _find(root: Path, name: str) -> Path:
    # layout convention: files either at the root or under sparse/0/
    for candidate in (root / name, root / "sparse" / "0" / name, root / "sparse" / name):
        if candidate.is_file():
            return candidate
    raise DatasetError(f"missing {name} under {root} (looked in ., sparse/, sparse/0/)")


def read_cameras_text(path: Path) -> dict:
    cameras = {}
    for lineno, line in _data_lines(path):
        parts = line.split()
        if len(parts) < 4:
            raise DatasetError(f"{path}:{lineno}: malformed camera line")
        cam_id = int(parts[0])
        model = parts[1]
        if model not in SUPPORTED_MODELS:
            raise UnsupportedCameraModelError(model)
        width, height = int(parts[2]), int(parts[3])
        params = [float(p) for p in parts[4:]]
        if model == "SIMPLE_PINHOLE":
            if len(params) != 3:
                raise DatasetError(f"{path}:{lineno}: SIMPLE_PINHOLE expects 3 params")
            fx = fy = params[0]
            cx, cy = params[1], params[2]
        else:
            if len(params) != 4:
                raise DatasetError(f"{path}:{lineno}: PINHOLE expects 4 params")
            fx, fy, cx, cy = params
        cameras[cam_id] = dict(fx=fx, fy=fy, cx=cx, cy=cy, width=width, height=height)
    if not cameras:
        raise DatasetError(f"{path}: no cameras defined")
    return cameras


def read_images_text(path: Path) -> list:
    """Returns [(name, qvec, tvec, camera_id)] in file order.

    Each image record spans two lines; the second (2D point observations)
    may be empty and is skipped either way.
    """
    records = []
    expecting_points = False
    with open(path, "r") as fh:
        lines = fh.readlines()
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if line.startswith("#"):
            continue
        if expecting_points:
            expecting_points = False
            continue
        if not line:
            continue
        parts = line.split()
        if len(parts) < 10:
            raise DatasetError(f"{path}:{lineno}: malformed image line")
        qvec = np.array([float(v) for v in parts[1:5]])
        tvec = np.array([float(v) for v in parts[5:8]])
        camera_id = int(parts[8])
        name = parts[9]
        records.append((name, qvec, tvec, camera_id))
        expecting_points = True
    if not records:
        raise DatasetError(f"{path}: no images defined")
    return records


def read_points3d_text(path: Path) -> tuple[np.ndarray, np.ndarray]:
    positions, colors = [], []
    for lineno, line in _data_lines(path):
        parts = line.split()
        if len(parts) < 7:
            raise DatasetError(f"{path}:{lineno}: malformed points3D line")
        positions.append([float(parts[1]), float(parts[2]), float(parts[3])])
        colors.append([int(parts[4]), int(parts[5]), int(parts[6])])
    if not positions:
        raise DatasetError(f"{path}: no 3D points defined")
    return (np.asarray(positions, dtype=np.float64),
            np.asarray(colors, dtype=np.float64) / 255.0)


def _load_image(path: Path) -> np.ndarray:
    img = Image.open(path).convert("RGB")
    return np.asarray(img, dtype=np.float32) / 255.0


def load_dataset(path) -> TrainingDataset:
    """Load a forward-facing capture in COLMAP text convention.

    The directory must contain cameras.txt / images.txt / points3D.txt
    (at the root or under sparse[/0]/) and an images/ subdirectory with the
    referenced 8-bit RGB files. Views are ordered by image name.
    """
    root = Path(path)
    if not root.is_dir():
        raise DatasetError(f"dataset directory does not exist: {root}")
    images_dir = root / "images"
    if not images_dir.is_dir():
        raise DatasetError(f"missing images/ subdirectory under {root}")

    cameras = read_cameras_text(_find(root, "cameras.txt"))
    records = read_images_text(_find(root, "images.txt"))
    sfm_points, sfm_colors = read_points3d_text(_find(root, "points3D.txt"))

    views = []
    for name, qvec, tvec, camera_id in sorted(records, key=lambda r: r[0]):
        if camera_id not in cameras:
            raise DatasetError(f"image {name!r} references unknown camera id {camera_id}")
        intr = cameras[camera_id]
        cam = Camera(rotation=quaternion_to_rotation(qvec), translation=tvec, **intr)
        image_path = images_dir / name
        if not image_path.is_file():
            stem = os.path.splitext(name)[0]
            for ext in IMAGE_EXTENSIONS:
                if (images_dir / (stem + ext)).is_file():
                    image_path = images_dir / (stem + ext)
                    break
            else:
                raise DatasetError(f"image file not found: {images_dir / name}")
        image = _load_image(image_path)
        if image.shape[:2] != (intr["height"], intr["width"]):
            raise DatasetError(
                f"image {name!r} is {image.shape[1]}x{image.shape[0]} but its camera "
                f"declares {intr['width']}x{intr['height']}"
            )
        views.append((cam, image))

    dataset = TrainingDataset(views=views, sfm_points=sfm_points, sfm_colors=sfm_colors)
    dataset.validate()
    return dataset
