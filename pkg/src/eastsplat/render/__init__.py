from .export import encode_png_bytes, save_npy, save_png, to_uint8
from .projection import (
    ALPHA_CLAMP,
    ALPHA_SKIP,
    COV2D_REGULARIZER,
    NEAR_PLANE,
    Splat2D,
    compute_cov3d,
    preprocess,
    project,
)
from .rasterize import (
    RenderOutput,
    SceneGradients,
    TILE_SIZE,
    TileBinning,
    active_backend,
    available_backends,
    bin_splats,
    rasterize,
    rasterize_backward,
    use_backend,
)
from .sh import evaluate_sh, evaluate_sh_backward, evaluate_sh_colors, sh_basis

__all__ = [
    "ALPHA_CLAMP", "ALPHA_SKIP", "COV2D_REGULARIZER", "NEAR_PLANE", "TILE_SIZE",
    "Splat2D", "RenderOutput", "SceneGradients", "TileBinning",
    "compute_cov3d", "project", "preprocess", "bin_splats",
    "rasterize", "rasterize_backward",
    "active_backend", "available_backends", "use_backend",
    "evaluate_sh", "evaluate_sh_backward", "evaluate_sh_colors", "sh_basis",
    "save_png", "save_npy", "encode_png_bytes", "to_uint8",
]
