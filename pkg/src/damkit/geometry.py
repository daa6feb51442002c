"""Scene geometry: analytic unit sphere and bundled low-poly OBJ meshes.

Ray casting is vectorized numpy; meshes are intersected brute force
(Moller-Trumbore over all faces, rays chunked), which is plenty for the
bundled assets of a few hundred triangles.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass

import numpy as np

from .errors import InputError

_RAY_CHUNK = 2048


class Sphere:
    """Unit sphere at the origin."""

    name = "sphere"

    def intersect(self, origins, dirs):
        """Returns (t, hit_mask, points, normals); t is inf on miss."""
        o = origins.astype(np.float64)
        d = dirs.astype(np.float64)
        b = 2.0 * np.sum(o * d, axis=1)
        c = np.sum(o * o, axis=1) - 1.0
        disc = b * b - 4.0 * c
        hit = disc >= 0.0
        sq = np.sqrt(np.maximum(disc, 0.0))
        t0 = (-b - sq) / 2.0
        t1 = (-b + sq) / 2.0
        t = np.where(t0 > 1e-6, t0, t1)
        hit &= t > 1e-6
        t = np.where(hit, t, np.inf)
        pts = o + t[:, None] * d
        pts[~hit] = 0.0
        normals = pts.copy()
        n = np.linalg.norm(normals, axis=1, keepdims=True)
        normals = np.divide(normals, np.maximum(n, 1e-12))
        normals[~hit] = 0.0
        return t, hit, pts, normals


@dataclass
class TriangleMesh:
    name: str
    vertices: np.ndarray  # (V, 3)
    faces: np.ndarray     # (F, 3) int
    smooth: bool = True

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64)
        self.faces = np.asarray(self.faces, dtype=np.int64)
        v0 = self.vertices[self.faces[:, 0]]
        e1 = self.vertices[self.faces[:, 1]] - v0
        e2 = self.vertices[self.faces[:, 2]] - v0
        fn = np.cross(e1, e2)
        area2 = np.linalg.norm(fn, axis=1, keepdims=True)
        self._v0, self._e1, self._e2 = v0, e1, e2
        self.face_normals = fn / np.maximum(area2, 1e-12)
        # area-weighted vertex normals for smooth shading
        vn = np.zeros_like(self.vertices)
        for k in range(3):
            np.add.at(vn, self.faces[:, k], fn)
        self.vertex_normals = vn / np.maximum(
            np.linalg.norm(vn, axis=1, keepdims=True), 1e-12)

    def normalized(self):
        """Scaled so the farthest vertex sits on the unit sphere."""
        scale = np.abs(self.vertices).max()
        return TriangleMesh(self.name, self.vertices / scale, self.faces,
                            smooth=self.smooth)

    def intersect(self, origins, dirs):
        n_rays = origins.shape[0]
        t_best = np.full(n_rays, np.inf)
        face_best = np.full(n_rays, -1, dtype=np.int64)
        uv_best = np.zeros((n_rays, 2))
        for lo in range(0, n_rays, _RAY_CHUNK):
            hi = min(lo + _RAY_CHUNK, n_rays)
            self._intersect_chunk(origins[lo:hi], dirs[lo:hi],
                                  t_best[lo:hi], face_best[lo:hi],
                                  uv_best[lo:hi])
        hit = np.isfinite(t_best)
        pts = origins + t_best[:, None] * dirs
        pts[~hit] = 0.0
        normals = np.zeros((n_rays, 3))
        idx = np.nonzero(hit)[0]
        if idx.size:
            f = face_best[idx]
            if self.smooth:
                u = uv_best[idx, 0:1]
                v = uv_best[idx, 1:2]
                n0 = self.vertex_normals[self.faces[f, 0]]
                n1 = self.vertex_normals[self.faces[f, 1]]
                n2 = self.vertex_normals[self.faces[f, 2]]
                n = (1.0 - u - v) * n0 + u * n1 + v * n2
                n /= np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-12)
            else:
                n = self.face_normals[f]
            # flip toward the ray origin so grazing hits stay front-facing
            flip = np.sum(n * dirs[idx], axis=1) > 0.0
            n[flip] = -n[flip]
            normals[idx] = n
        return t_best, hit, pts, normals

    def _intersect_chunk(self, o, d, t_out, face_out, uv_out):
        # Moller-Trumbore, rays x triangles
        pvec = np.cross(d[:, None, :], self._e2[None, :, :])
        det = np.einsum("tk,rtk->rt", self._e1, pvec)
        ok = np.abs(det) > 1e-12
        inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        tvec = o[:, None, :] - self._v0[None, :, :]
        u = np.einsum("rtk,rtk->rt", tvec, pvec) * inv
        qvec = np.cross(tvec, self._e1[None, :, :])
        v = np.einsum("rk,rtk->rt", d, qvec) * inv
        t = np.einsum("tk,rtk->rt", self._e2, qvec) * inv
        valid = ok & (u >= -1e-9) & (v >= -1e-9) & (u + v <= 1 + 1e-9) & (t > 1e-6)
        t = np.where(valid, t, np.inf)
        best = np.argmin(t, axis=1)
        rows = np.arange(o.shape[0])
        tb = t[rows, best]
        better = tb < t_out
        t_out[better] = tb[better]
        face_out[better] = best[better]
        uv_out[better, 0] = u[rows, best][better]
        uv_out[better, 1] = v[rows, best][better]


def load_obj(path_or_text, name="mesh", smooth=True):
    """Minimal OBJ reader: v and f records, 1-based indices, fans split."""
    if hasattr(path_or_text, "read"):
        text = path_or_text.read()
    elif "\nv " in str(path_or_text) or str(path_or_text).startswith("v "):
        text = str(path_or_text)
    else:
        with open(path_or_text) as f:
            text = f.read()
    verts, faces = [], []
    for line in text.splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
            for k in range(1, len(idx) - 1):
                faces.append([idx[0], idx[k], idx[k + 1]])
    if not verts or not faces:
        raise InputError(f"OBJ {name!r} has no geometry")
    return TriangleMesh(name, np.array(verts), np.array(faces), smooth=smooth)


# geometry ids available to scene specs; (asset file, smooth shading)
MESH_ASSETS = {
    "icosphere": ("icosphere.obj", True),
    "gem": ("gem.obj", False),
    "torus": ("torus.obj", True),
}

_cache = {}


def get_geometry(geom_id):
    if geom_id == "sphere":
        return Sphere()
    if geom_id not in MESH_ASSETS:
        raise InputError(f"unknown geometry {geom_id!r}; have sphere, "
                         + ", ".join(MESH_ASSETS))
    if geom_id not in _cache:
        fname, smooth = MESH_ASSETS[geom_id]
        ref = importlib.resources.files("damkit.assets").joinpath(fname)
        with ref.open() as f:
            _cache[geom_id] = load_obj(f, name=geom_id, smooth=smooth).normalized()
    return _cache[geom_id]
