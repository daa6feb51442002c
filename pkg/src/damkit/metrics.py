"""DSSIM metric, evaluation protocol and result tables.

SSIM uses the standard 11x11 Gaussian window (sigma 1.5), constants
C1=0.01^2 and C2=0.03^2, computed per channel over valid window positions
and averaged; inputs are clamped to [0,1] first.  DSSIM = (1 - SSIM) / 2,
lower is better.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def _gaussian2d(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    k = np.exp(-(r * r) / (2.0 * sigma * sigma))
    k /= k.sum()
    return np.outer(k, k)


_KERNEL = _gaussian2d()


def _filter_valid(x, kernel):
    size = kernel.shape[0]
    win = np.lib.stride_tricks.sliding_window_view(x, (size, size))
    return np.einsum("ijkl,kl->ij", win, kernel)


def ssim(a, b):
    """Structural similarity of two images in [-1, 1].

    Accepts (H, W) or (H, W, C); channels are scored independently and
    averaged.  Images must be at least as large as the window.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InputError(f"ssim: dimension mismatch {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a = a[:, :, None]
        b = b[:, :, None]
    if a.ndim != 3:
        raise InputError(f"ssim: expected 2-D or 3-D image, got {a.shape}")
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise InputError(f"ssim: image {a.shape} smaller than the "
                         f"{SSIM_WINDOW}x{SSIM_WINDOW} window")
    a = np.clip(a, 0.0, 1.0)
    b = np.clip(b, 0.0, 1.0)
    vals = []
    for c in range(a.shape[2]):
        x = a[:, :, c]
        y = b[:, :, c]
        mu_x = _filter_valid(x, _KERNEL)
        mu_y = _filter_valid(y, _KERNEL)
        xx = _filter_valid(x * x, _KERNEL) - mu_x * mu_x
        yy = _filter_valid(y * y, _KERNEL) - mu_y * mu_y
        xy = _filter_valid(x * y, _KERNEL) - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + SSIM_C1) * (2.0 * xy + SSIM_C2)
        den = (mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (xx + yy + SSIM_C2)
        vals.append((num / den).mean())
    return float(np.mean(vals))


def dssim(a, b):
    return (1.0 - ssim(a, b)) / 2.0


# ---------------------------------------------------------------------------
# reports

@dataclass
class EvalReport:
    """Per-record DSSIM rows plus aggregate helpers."""

    task: str
    method: str
    rows: list = field(default_factory=list)

    def add(self, scene_id, view_id, illumination, value):
        self.rows.append({"scene": scene_id, "view": view_id,
                          "method": self.method, "task": self.task,
                          "illumination": illumination,
                          "dssim": float(value)})

    def mean(self):
        if not self.rows:
            raise InputError("empty report")
        return float(np.mean([r["dssim"] for r in self.rows]))

    def mean_by_illumination(self):
        groups = {}
        for r in self.rows:
            groups.setdefault(r["illumination"], []).append(r["dssim"])
        return {k: float(np.mean(v)) for k, v in sorted(groups.items())}

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=["scene", "view", "method",
                                              "task", "illumination", "dssim"])
            w.writeheader()
            for r in self.rows:
                row = dict(r)
                row["dssim"] = f"{r['dssim']:.6f}"
                w.writerow(row)


def sorted_error_curve(report, path=None):
    """Ascending per-record DSSIM; optionally exported as (rank, dssim) CSV."""
    if not report.rows:
        raise InputError("empty report")
    curve = np.sort(np.array([r["dssim"] for r in report.rows]))
    if path is not None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["rank", "dssim"])
            for i, v in enumerate(curve):
                w.writerow([i, f"{v:.6f}"])
    return curve


def summary_csv(path, reports):
    """One row per (task, method, illumination) plus overall means."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["task", "method", "illumination", "mean_dssim"])
        for rep in reports:
            for illum, mean in rep.mean_by_illumination().items():
                w.writerow([rep.task, rep.method, illum, f"{mean:.6f}"])
            w.writerow([rep.task, rep.method, "all", f"{rep.mean():.6f}"])


# ---------------------------------------------------------------------------
# protocol

def run_protocol(manifest, method, task, scene_ids=None):
    """Fit/predict on each scene's train views, score DSSIM on the task set.

    ``task`` is 'same_view' (training camera positions) or 'novel_view'
    (held-out positions).  ``method`` implements the render-for-view
    interface: name, prepare(manifest, scene_id) -> state, and
    render(state, record, gbuffer) -> (H, W, 3) image.
    """
    if task not in ("same_view", "novel_view"):
        raise InputError(f"unknown task {task!r}")
    split = "train" if task == "same_view" else "test"
    report = EvalReport(task=task, method=method.name)
    ids = scene_ids if scene_ids is not None else manifest.scene_ids
    for scene_id in ids:
        records = manifest.records(scene_id=scene_id, split=split)
        if not records:
            raise InputError(f"no {split} records for scene {scene_id!r}")
        state = method.prepare(manifest, scene_id)
        illum = manifest.scene(scene_id)["illumination_kind"]
        for rec in records:
            g = manifest.load_gbuffer(rec)
            img = method.render(state, rec, g)
            report.add(scene_id, rec["view_id"], illum,
                       dssim(np.clip(img, 0.0, 1.0),
                             np.clip(g.rgb, 0.0, 1.0)))
    return report
