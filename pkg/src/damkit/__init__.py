"""Deep appearance maps toolkit.

Represents material-under-illumination appearance as a small neural map
from (surface normal, view direction) to RGB, with three workflows on a
self-generated synthetic multi-view dataset: per-scene fitting, direct
weight prediction from a single image, and joint multi-material
estimation-and-segmentation, compared against reflectance-map and
k-means baselines.
"""

__version__ = "0.1.0"

from .dam import (AppearanceSample, DamArchitecture, DamParams,
                  eval_dam, eval_dam_batch, init_dam_params,
                  load_params, render_gbuffer, save_params)
from .gbuffer import GBuffer, load_gbuffer

__all__ = [
    "AppearanceSample", "DamArchitecture", "DamParams", "GBuffer",
    "eval_dam", "eval_dam_batch", "init_dam_params", "load_gbuffer",
    "load_params", "render_gbuffer", "save_params", "__version__",
]
