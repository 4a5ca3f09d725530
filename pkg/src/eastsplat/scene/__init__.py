from .colmap import load_dataset, quaternion_to_rotation
from .initialize import init_scene, mean_neighbor_distances, rgb_to_sh_dc, SH_C0
from .io import load_scene, save_scene
from .types import (
    Bounds,
    Camera,
    Gaussian3D,
    GaussianCloud,
    SceneModel,
    TrainingDataset,
    SH_COEFF_COUNT,
    SH_DEGREE,
    logit,
    normalize_quaternion,
    sigmoid,
)

__all__ = [
    "Bounds", "Camera", "Gaussian3D", "GaussianCloud", "SceneModel",
    "TrainingDataset", "SH_COEFF_COUNT", "SH_DEGREE", "SH_C0",
    "load_dataset", "quaternion_to_rotation", "init_scene",
    "mean_neighbor_distances", "rgb_to_sh_dc", "load_scene", "save_scene",
    "logit", "normalize_quaternion", "sigmoid",
]
