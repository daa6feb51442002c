"""Per-pixel geometry/appearance channels with file round-tripping.

A G-buffer stores, per pixel: world-space normal and view direction
(unit where covered, zero elsewhere), world position, linear RGB, a 0/1
coverage mask and, for multi-material scenes, n soft weight channels.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import FormatError, InputError
from .images import read_pfm, read_png16, write_pfm, write_png16

_CHANNELS = ("rgb", "position", "normal", "view_dir")


@dataclass
class GBuffer:
    rgb: np.ndarray        # (H, W, 3) linear, tone-mapped units
    position: np.ndarray   # (H, W, 3) world units
    normal: np.ndarray     # (H, W, 3) unit on coverage, zero outside
    view_dir: np.ndarray   # (H, W, 3) unit on coverage, zero outside
    mask: np.ndarray       # (H, W) in {0, 1}
    weights: Optional[np.ndarray] = None  # (H, W, n) in [0, 1]

    def __post_init__(self):
        self.rgb = np.asarray(self.rgb, dtype=np.float32)
        self.position = np.asarray(self.position, dtype=np.float32)
        self.normal = np.asarray(self.normal, dtype=np.float32)
        self.view_dir = np.asarray(self.view_dir, dtype=np.float32)
        self.mask = np.asarray(self.mask, dtype=np.float32)
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=np.float32)

    @property
    def height(self):
        return self.rgb.shape[0]

    @property
    def width(self):
        return self.rgb.shape[1]

    @property
    def n_materials(self):
        return 0 if self.weights is None else self.weights.shape[2]

    def validate(self, tol=1e-4):
        covered = self.mask > 0.5
        for field, label in ((self.normal, "normal"), (self.view_dir, "view_dir")):
            norms = np.linalg.norm(field, axis=2)
            if covered.any() and np.abs(norms[covered] - 1.0).max() > tol:
                raise InputError(f"covered {label}s deviate from unit length")
            if (~covered).any() and label == "normal" and norms[~covered].max(initial=0.0) > tol:
                raise InputError("background pixels carry nonzero normals")
        if self.weights is not None:
            if self.weights.min() < -1e-6 or self.weights.max() > 1 + 1e-6:
                raise InputError("weight channels outside [0, 1]")

    def covered_indices(self):
        return np.nonzero(self.mask > 0.5)

    def samples(self):
        """Covered pixels as (view_dirs, normals, rgbs) float64 arrays."""
        idx = self.covered_indices()
        return (self.view_dir[idx].astype(np.float64),
                self.normal[idx].astype(np.float64),
                self.rgb[idx].astype(np.float64))

    def network_image(self, channels=("rgb", "normal", "view_dir")):
        """Stack channels as one (1, C, H, W) float32 array for conv nets."""
        planes = []
        for name in channels:
            planes.append(np.moveaxis(getattr(self, name), 2, 0))
        return np.concatenate(planes, axis=0)[None].astype(np.float32)

    def save(self, directory, prefix):
        os.makedirs(directory, exist_ok=True)
        paths = {}
        for name in _CHANNELS:
            p = os.path.join(directory, f"{prefix}_{name}.pfm")
            write_pfm(p, getattr(self, name))
            paths[name] = p
        p = os.path.join(directory, f"{prefix}_mask.pfm")
        write_pfm(p, self.mask)
        paths["mask"] = p
        if self.weights is not None:
            wpaths = []
            for c in range(self.weights.shape[2]):
                p = os.path.join(directory, f"{prefix}_weight{c}.png")
                write_png16(p, self.weights[:, :, c])
                wpaths.append(p)
            paths["weights"] = wpaths
        return paths


def load_gbuffer(directory, prefix, n_weights=0):
    def chan(name):
        path = os.path.join(directory, f"{prefix}_{name}.pfm")
        if not os.path.exists(path):
            raise FormatError(f"missing G-buffer channel file {path}")
        return read_pfm(path)

    weights = None
    if n_weights:
        planes = [read_png16(os.path.join(directory, f"{prefix}_weight{c}.png"))
                  for c in range(n_weights)]
        weights = np.stack(planes, axis=2)
    return GBuffer(rgb=chan("rgb"), position=chan("position"),
                   normal=chan("normal"), view_dir=chan("view_dir"),
                   mask=chan("mask"), weights=weights)
