"""Persistent scene format.

Layout: one ASCII header line ``EASTSPLAT <version> <count>\\n`` followed by
``count`` records of 59 little-endian float32 values in field order
(position 3, log_scale 3, rotation 4, opacity_logit 1, sh_coeffs 48; the 48
SH values are channel-major, 16 per channel). Storage is float32, so a
float32 scene round-trips bit-exactly.
"""

from __future__ import annotations

from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from ..errors import SceneFormatError, SceneVersionError
from .types import SH_COEFF_COUNT, SH_DEGREE, Bounds, GaussianCloud, SceneModel

MAGIC = b"EASTSPLAT"
VERSION = 1
FLOATS_PER_GAUSSIAN = 3 + 3 + 4 + 1 + SH_COEFF_COUNT  # 59


def save_scene(scene: SceneModel, path) -> None:
    scene.validate()
    cloud = scene.gaussians
    n = len(cloud)
    records = np.empty((n, FLOATS_PER_GAUSSIAN), dtype="<f4")
    records[:, 0:3] = cloud.positions
    records[:, 3:6] = cloud.log_scales
    records[:, 6:10] = cloud.rotations
    records[:, 10] = cloud.opacity_logits
    records[:, 11:] = cloud.sh_coeffs
    header = b"%s %d %d\n" % (MAGIC, VERSION, n)
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(records.tobytes())
    tmp.replace(path)


def load_scene(path, dtype=np.float32) -> SceneModel:
    path = Path(path)
    if not path.is_file():
        raise SceneFormatError(f"scene file does not exist: {path}")
    with open(path, "rb") as fh:
        header = fh.readline(256)
        if not header.endswith(b"\n"):
            raise SceneFormatError("header line missing or unterminated", offset=0)
        parts = header.strip().split()
        if len(parts) != 3 or parts[0] != MAGIC:
            raise SceneFormatError(f"bad magic: expected {MAGIC.decode()}", offset=0)
        try:
            version, count = int(parts[1]), int(parts[2])
        except ValueError:
            raise SceneFormatError("header version/count fields are not integers", offset=len(MAGIC))
        if version != VERSION:
            raise SceneVersionError(f"unsupported scene version {version} (reader supports {VERSION})")
        if count < 1:
            raise SceneFormatError("scene file declares zero Gaussians")
        expected = count * FLOATS_PER_GAUSSIAN * 4
        payload = fh.read(expected)
        if len(payload) != expected:
            raise SceneFormatError(
                f"truncated payload: expected {expected} bytes, got {len(payload)}",
                offset=len(header) + len(payload),
            )
        trailing = fh.read(1)
        if trailing:
            raise SceneFormatError("trailing bytes after payload", offset=len(header) + expected)

    records = np.frombuffer(payload, dtype="<f4").reshape(count, FLOATS_PER_GAUSSIAN)
    cloud = GaussianCloud(
        positions=records[:, 0:3],
        log_scales=records[:, 3:6],
        rotations=records[:, 6:10],
        opacity_logits=records[:, 10],
        sh_coeffs=records[:, 11:],
        dtype=dtype,
    )
    scene = SceneModel(
        gaussians=cloud,
        bounds=Bounds.of_points(cloud.positions),
        metadata={
            "created": datetime.now(timezone.utc).isoformat(),
            "sh_degree": SH_DEGREE,
            "source": str(path),
        },
    )
    scene.validate()
    return scene
