"""Stylized 3D Gaussian splatting with a differentiable CPU rasterizer.

Pipeline: load a posed multiview capture, seed a Gaussian scene from its
sparse points, reconstruct photometrically, then re-optimize the scene's
view-dependent color against a 2D style image via feature-statistics
matching. A socket control server streams training status and preview
renders to clients.
"""

__version__ = "0.1.0"

from . import scene, render  # noqa: F401

__all__ = ["scene", "render", "__version__"]
