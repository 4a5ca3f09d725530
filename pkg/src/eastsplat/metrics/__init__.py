"""Quality metrics over rendered views."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ..render import rasterize
from .perceptual import feature_distance, unit_normalize_channels
from .ssim import gaussian_window, luminance, ssim, ssim_grad, ssim_map


@dataclass
class MetricReport:
    per_view_ssim: list
    per_view_feature_distance: list

    @property
    def ssim_mean(self) -> float:
        return float(np.mean(self.per_view_ssim))

    @property
    def ssim_std(self) -> float:
        return float(np.std(self.per_view_ssim))

    @property
    def feature_distance_mean(self) -> float:
        return float(np.mean(self.per_view_feature_distance))

    @property
    def feature_distance_std(self) -> float:
        return float(np.std(self.per_view_feature_distance))

    def to_dict(self) -> dict:
        return {
            "per_view": [
                {"view": i, "ssim": s, "feature_distance": f}
                for i, (s, f) in enumerate(zip(self.per_view_ssim,
                                               self.per_view_feature_distance))
            ],
            "aggregates": {
                "ssim": {"mean": self.ssim_mean, "std": self.ssim_std},
                "feature_distance": {"mean": self.feature_distance_mean,
                                     "std": self.feature_distance_std},
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_table(self) -> str:
        lines = [f"{'View':>6}  {'SSIM↑':>8}  {'LPIPS↓':>8}",
                 "-" * 28]
        for i, (s, f) in enumerate(zip(self.per_view_ssim,
                                       self.per_view_feature_distance)):
            lines.append(f"{i:>6}  {s:8.4f}  {f:8.4f}")
        lines.append("-" * 28)
        lines.append(f"{'mean':>6}  {self.ssim_mean:8.4f}  "
                     f"{self.feature_distance_mean:8.4f}")
        lines.append(f"{'std':>6}  {self.ssim_std:8.4f}  "
                     f"{self.feature_distance_std:8.4f}")
        return "\n".join(lines)


def evaluate(scene, dataset, net, background=(1.0, 1.0, 1.0),
             views=None) -> MetricReport:
    """Render each (held-out) view and score it against its reference image.

    ``views``: optional index list selecting a subset of dataset views.
    """
    indices = range(len(dataset.views)) if views is None else views
    ssims, dists = [], []
    for i in indices:
        cam, reference = dataset.views[i]
        rendered = rasterize(scene, cam, background=background).image
        ssims.append(ssim(rendered, reference))
        dists.append(feature_distance(rendered, reference, net))
    return MetricReport(per_view_ssim=ssims, per_view_feature_distance=dists)


__all__ = [
    "MetricReport", "evaluate", "feature_distance", "ssim", "ssim_grad",
    "ssim_map", "gaussian_window", "luminance", "unit_normalize_channels",
]
