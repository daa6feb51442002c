"""Deterministic analytic renderer for the multi-view multi-material dataset.

Direct lighting only: GGX-shaded geometry under a delta point light or a
procedural lat-long sky, full G-buffer channels per view, equidistant
camera circle with one random elevation per scene, 95th-percentile linear
tone mapping and a JSON manifest with train/test view splits.

Shading convention (used consistently, including by the Lambert test
oracle): the BRDF is hemisphere-normalized.  A point light of intensity 1
along the normal yields exactly the diffuse albedo; a constant unit
environment yields the albedo as well.  Concretely

    L_o = sum_lights  E * (albedo + pi * D*F*G / (4 <n,l> <n,v>)) * <n,l>+

with environment texels weighted by their solid angle divided by pi.
"""

from __future__ import annotations

import colorsys
import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigurationError, FormatError, InputError
from .gbuffer import GBuffer, load_gbuffer
from .geometry import get_geometry
from .images import write_png8

MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"


# ---------------------------------------------------------------------------
# scene ingredients

@dataclass(frozen=True)
class MaterialSpec:
    """Layered GGX material: diffuse albedo plus one specular lobe."""

    albedo: tuple            # RGB diffuse, each in [0, 1]
    specular: float = 0.0    # specular strength (Fresnel F0)
    roughness: float = 0.3   # GGX roughness in (0, 1]
    hue_seed: Optional[int] = None

    def __post_init__(self):
        a = tuple(float(c) for c in self.albedo)
        object.__setattr__(self, "albedo", a)
        if not (0.0 < self.roughness <= 1.0):
            raise ConfigurationError(f"roughness {self.roughness} outside (0, 1]")
        if self.specular < 0.0:
            raise ConfigurationError("specular strength must be >= 0")
        if any(c + self.specular > 1.0 + 1e-6 for c in a):
            raise ConfigurationError(
                "energy plausibility violated: albedo + specular > 1")


def random_material(seed, roughness_range=(0.15, 0.45),
                    specular_range=(0.30, 0.45), saturation=0.65, value=0.55):
    """Hue-randomized glossy material; saturation/value held fixed."""
    rng = np.random.default_rng(seed)
    hue = float(rng.uniform(0.0, 1.0))
    rough = float(rng.uniform(*roughness_range))
    spec = float(rng.uniform(*specular_range))
    albedo = colorsys.hsv_to_rgb(hue, saturation, value)
    top = max(albedo)
    if top + spec > 1.0:
        albedo = tuple(c * (1.0 - spec) / top for c in albedo)
    return MaterialSpec(albedo=albedo, specular=spec, roughness=rough,
                        hue_seed=seed)


@dataclass(frozen=True)
class IlluminationSpec:
    """Either a delta point light or a lat-long environment image.

    The point light's angular size is recorded but shading treats it as a
    delta direction (single small area light approximated analytically).
    """

    kind: str                       # "point_light" | "envmap"
    direction: Optional[tuple] = None
    intensity: float = 1.0
    angular_size: float = 0.0
    sky_id: Optional[int] = None
    envmap: Optional[np.ndarray] = None   # (He, We, 3) radiance

    def __post_init__(self):
        if self.kind not in ("point_light", "envmap"):
            raise ConfigurationError(f"unknown illumination kind {self.kind!r}")
        if self.intensity < 0:
            raise ConfigurationError("intensity must be >= 0")
        if self.kind == "point_light":
            d = np.asarray(self.direction, dtype=np.float64)
            d = d / np.linalg.norm(d)
            object.__setattr__(self, "direction", tuple(d))
        else:
            env = self.envmap
            if env is None:
                if self.sky_id is None:
                    raise ConfigurationError("envmap needs sky_id or image")
                env = procedural_sky(self.sky_id)
            env = np.asarray(env, dtype=np.float64)
            if env.ndim != 3 or env.shape[0] < 4 or env.shape[1] < 8:
                raise ConfigurationError("envmap resolution must be >= 8x4")
            if env.min() < 0:
                raise ConfigurationError("envmap radiance must be >= 0")
            object.__setattr__(self, "envmap", env)


def procedural_sky(sky_id, width=32, height=16):
    """Small HDR lat-long sky: gradient dome, ground bounce and a sun disk."""
    rng = np.random.default_rng(1000 + sky_id)
    theta = (np.arange(height) + 0.5) / height * np.pi        # 0 = zenith
    phi = (np.arange(width) + 0.5) / width * 2.0 * np.pi - np.pi
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    up = np.cos(th)
    horizon = np.clip(1.0 - np.abs(up), 0.0, 1.0)
    zen = np.array(rng.uniform(0.2, 0.7, 3))
    hor = np.array(rng.uniform(0.4, 1.0, 3))
    gnd = np.array(rng.uniform(0.05, 0.2, 3))
    sky = np.where(up[..., None] >= 0,
                   zen + (hor - zen) * horizon[..., None],
                   gnd + 0 * horizon[..., None])
    # sun: bright disk at a random upper direction
    sun_phi = rng.uniform(-np.pi, np.pi)
    sun_theta = rng.uniform(0.2, 0.45) * np.pi
    sdir = np.array([np.sin(sun_theta) * np.cos(sun_phi), np.cos(sun_theta),
                     np.sin(sun_theta) * np.sin(sun_phi)])
    dirs = np.stack([np.sin(th) * np.cos(ph), np.cos(th),
                     np.sin(th) * np.sin(ph)], axis=2)
    cosang = dirs @ sdir
    sun_col = np.array(rng.uniform(18.0, 30.0, 3)) * np.array([1.0, 0.95, 0.85])
    sky = sky + np.clip((cosang[..., None] - 0.965) / 0.035, 0.0, 1.0) * sun_col
    return sky.astype(np.float64)


@dataclass(frozen=True)
class SceneSpec:
    """One renderable scene: geometry, materials on regions, illumination."""

    scene_id: str
    geometry: str
    materials: tuple                 # n MaterialSpecs
    illumination: IlluminationSpec
    camera_radius: float = 3.0
    fov_deg: float = 50.0
    elevation_seed: int = 0
    region_axis_seed: int = 0        # rotates the material sector boundaries

    def __post_init__(self):
        if len(self.materials) < 1:
            raise ConfigurationError("scene needs at least one material")

    @property
    def n_materials(self):
        return len(self.materials)


def region_indices(points, n, axis_seed=0):
    """Azimuthal sectors around the y axis: every point maps to exactly one
    material index in [0, n)."""
    if n == 1:
        return np.zeros(points.shape[0], dtype=np.int64)
    rng = np.random.default_rng(9000 + axis_seed)
    offset = rng.uniform(0.0, 2.0 * np.pi)
    az = np.arctan2(points[:, 2], points[:, 0]) + offset
    frac = (az / (2.0 * np.pi)) % 1.0
    return np.minimum((frac * n).astype(np.int64), n - 1)


# ---------------------------------------------------------------------------
# cameras

@dataclass(frozen=True)
class Camera:
    position: tuple
    forward: tuple        # unit, camera -> scene
    right: tuple
    up: tuple
    fov_deg: float
    resolution: int
    azimuth_deg: float = 0.0
    elevation_deg: float = 0.0

    def rays(self):
        res = self.resolution
        half = np.tan(np.radians(self.fov_deg) / 2.0)
        xs = (np.arange(res) + 0.5) / res * 2.0 - 1.0
        gx, gy = np.meshgrid(xs * half, -xs[::-1] * half, indexing="xy")
        gy = -gy  # image row 0 at the top
        f = np.array(self.forward)
        r = np.array(self.right)
        u = np.array(self.up)
        d = f[None, None] + gx[..., None] * r[None, None] + gy[..., None] * u[None, None]
        d = d.reshape(-1, 3)
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        o = np.tile(np.array(self.position), (res * res, 1))
        return o, d

    def basis(self):
        return (np.array(self.right), np.array(self.up), np.array(self.forward))


def _look_at(position, fov_deg, resolution, azimuth_deg, elevation_deg):
    pos = np.asarray(position, dtype=np.float64)
    f = -pos / np.linalg.norm(pos)
    world_up = np.array([0.0, 1.0, 0.0])
    r = np.cross(f, world_up)
    r /= np.linalg.norm(r)
    u = np.cross(r, f)
    return Camera(position=tuple(pos), forward=tuple(f), right=tuple(r),
                  up=tuple(u), fov_deg=fov_deg, resolution=resolution,
                  azimuth_deg=azimuth_deg, elevation_deg=elevation_deg)


def sample_views(count, seed, radius=3.0, fov_deg=50.0, resolution=64):
    """Equidistant azimuths on a circle, one seeded random elevation,
    all looking at the origin."""
    if count < 1:
        raise ConfigurationError("need at least one view")
    rng = np.random.default_rng(seed)
    elev = float(rng.uniform(10.0, 35.0))
    cams = []
    for k in range(count):
        az = 360.0 * k / count
        e = np.radians(elev)
        a = np.radians(az)
        pos = radius * np.array([np.cos(e) * np.cos(a), np.sin(e),
                                 np.cos(e) * np.sin(a)])
        cams.append(_look_at(pos, fov_deg, resolution, az, elev))
    return cams


# ---------------------------------------------------------------------------
# shading

def _ggx_specular(n_dot_l, n_dot_v, n_dot_h, h_dot_v, roughness, f0):
    alpha = roughness * roughness
    a2 = alpha * alpha
    denom = n_dot_h * n_dot_h * (a2 - 1.0) + 1.0
    d = a2 / (np.pi * denom * denom)
    fr = f0 + (1.0 - f0) * (1.0 - h_dot_v) ** 5
    def g1(c):
        return 2.0 * c / (c + np.sqrt(a2 + (1.0 - a2) * c * c))
    g = g1(n_dot_l) * g1(n_dot_v)
    return np.pi * d * fr * g / (4.0 * n_dot_l * n_dot_v)


def _shade_dirs(normals, views, light_dirs, albedo, spec, rough):
    """Radiance contribution per (surface, light-direction) pair.

    normals/views: (N, 3); light_dirs: (N, 3) or (N, T, 3) broadcastable.
    Returns (N, 3) or (N, T, 3) BRDF-times-cosine (no light energy yet).
    """
    single = light_dirs.ndim == 2
    l = light_dirs if not single else light_dirs[:, None, :]
    n = normals[:, None, :]
    v = views[:, None, :]
    n_dot_l = np.clip(np.sum(n * l, axis=2), 0.0, 1.0)
    n_dot_v = np.clip(np.sum(n * v, axis=2), 1e-4, 1.0)
    h = l + v
    h /= np.maximum(np.linalg.norm(h, axis=2, keepdims=True), 1e-9)
    n_dot_h = np.clip(np.sum(n * h, axis=2), 0.0, 1.0)
    h_dot_v = np.clip(np.sum(h * v, axis=2), 0.0, 1.0)
    lit = n_dot_l > 0.0
    safe_l = np.where(lit, n_dot_l, 1.0)
    spec_term = _ggx_specular(safe_l, n_dot_v, n_dot_h, h_dot_v,
                              rough[:, None], spec[:, None])
    # zero-strength lobes are absent (no residual Schlick grazing term)
    spec_term = np.where(lit & (spec[:, None] > 0.0), spec_term, 0.0)
    out = (albedo[:, None, :] + spec_term[..., None]) * n_dot_l[..., None]
    return out[:, 0, :] if single else out


def shade(points, normals, views, material, illumination):
    """Direct radiance at surface points (no indirect bounces).

    ``material`` may be a single MaterialSpec or per-point arrays
    (albedo (N,3), specular (N,), roughness (N,)).
    """
    n_pts = normals.shape[0]
    if isinstance(material, MaterialSpec):
        albedo = np.tile(np.array(material.albedo), (n_pts, 1))
        spec = np.full(n_pts, material.specular)
        rough = np.full(n_pts, material.roughness)
    else:
        albedo, spec, rough = material
    if illumination.kind == "point_light":
        ldir = np.tile(np.array(illumination.direction), (n_pts, 1))
        return illumination.intensity * _shade_dirs(
            normals, views, ldir, albedo, spec, rough)
    env = illumination.envmap
    he, we = env.shape[:2]
    theta = (np.arange(he) + 0.5) / he * np.pi
    phi = (np.arange(we) + 0.5) / we * 2.0 * np.pi - np.pi
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    dirs = np.stack([np.sin(th) * np.cos(ph), np.cos(th),
                     np.sin(th) * np.sin(ph)], axis=2).reshape(-1, 3)
    solid = (np.sin(th) * (np.pi / he) * (2.0 * np.pi / we)).reshape(-1)
    radiance = env.reshape(-1, 3) * illumination.intensity
    # fixed texel order; weight = solid angle / pi per the convention above
    out = np.zeros((n_pts, 3))
    chunk = 128
    for lo in range(0, dirs.shape[0], chunk):
        hi = min(lo + chunk, dirs.shape[0])
        ld = np.broadcast_to(dirs[lo:hi][None], (n_pts, hi - lo, 3))
        contrib = _shade_dirs(normals, views, ld, albedo, spec, rough)
        w = radiance[lo:hi] * solid[lo:hi, None] / np.pi
        out += (contrib * w[None]).sum(axis=1)
    return out


def render_record(scene, camera):
    """Cast rays for one view and return the raw-radiance G-buffer."""
    geom = get_geometry(scene.geometry)
    origins, dirs = camera.rays()
    _t, hit, pts, normals = geom.intersect(origins, dirs)
    res = camera.resolution
    n_pix = res * res
    rgb = np.zeros((n_pix, 3))
    position = np.zeros((n_pix, 3))
    normal = np.zeros((n_pix, 3))
    view = np.zeros((n_pix, 3))
    weights = np.zeros((n_pix, scene.n_materials))
    idx = np.nonzero(hit)[0]
    if idx.size:
        p = pts[idx]
        n = normals[idx]
        v = np.array(camera.position)[None] - p
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        region = region_indices(p, scene.n_materials, scene.region_axis_seed)
        albedo = np.stack([scene.materials[r].albedo for r in region])
        spec = np.array([scene.materials[r].specular for r in region])
        rough = np.array([scene.materials[r].roughness for r in region])
        rgb[idx] = shade(p, n, v, (albedo, spec, rough), scene.illumination)
        position[idx] = p
        normal[idx] = n
        view[idx] = v
        weights[idx, region] = 1.0
    shape3 = (res, res, 3)
    return GBuffer(rgb=rgb.reshape(shape3),
                   position=position.reshape(shape3),
                   normal=normal.reshape(shape3),
                   view_dir=view.reshape(shape3),
                   mask=hit.astype(np.float32).reshape(res, res),
                   weights=weights.reshape(res, res, scene.n_materials))


# ---------------------------------------------------------------------------
# tone mapping

def tonemap(images, masks=None):
    """Scale an image set so its 95th covered-pixel percentile maps to 1.

    One scale for the whole set (values above 1 are kept; clamping happens
    only at 8-bit export).  All-black input keeps scale 1.
    Returns (scaled images, scale).
    """
    vals = []
    for k, img in enumerate(images):
        a = np.asarray(img, dtype=np.float64)
        if masks is not None:
            a = a[np.asarray(masks[k]) > 0.5]
        vals.append(a.reshape(-1))
    allv = np.concatenate(vals) if vals else np.zeros(1)
    if allv.size == 0 or allv.max(initial=0.0) <= 0.0:
        scale = 1.0
    else:
        p95 = float(np.percentile(allv, 95.0, method="lower"))
        scale = 1.0 / p95 if p95 > 0 else 1.0
    return [np.asarray(img, dtype=np.float64) * scale for img in images], scale


# ---------------------------------------------------------------------------
# dataset assembly

# named illumination variants available to configs
def make_illumination(illum_id):
    table = {
        "point0": ((0.45, 0.75, 0.40), 1.0),
        "point1": ((-0.55, 0.55, 0.45), 1.0),
        "point2": ((0.15, 0.60, -0.70), 1.0),
    }
    if illum_id in table:
        d, inten = table[illum_id]
        return IlluminationSpec(kind="point_light", direction=d,
                                intensity=inten, angular_size=0.02)
    if illum_id.startswith("sky"):
        return IlluminationSpec(kind="envmap", sky_id=int(illum_id[3:]))
    raise ConfigurationError(f"unknown illumination id {illum_id!r}")


def train_view_ids(n_views, n_train, start):
    """n_train views inside a ~240 degree arc of the circle, from ``start``."""
    if n_train == 1:
        return [start % n_views]
    span = max(int(round(n_views * 2.0 / 3.0)) - 1, n_train - 1)
    ids = sorted({(start + int(round(k * span / (n_train - 1)))) % n_views
                  for k in range(n_train)})
    k = 0
    while len(ids) < n_train:  # collision fallback for tiny view counts
        cand = (start + k) % n_views
        if cand not in ids:
            ids.append(cand)
        k += 1
    return sorted(ids)


@dataclass
class DatasetConfig:
    out_dir: str
    seed: int = 7
    resolution: int = 64
    n_views: int = 32
    n_train: int = 10
    geometries: tuple = ("sphere", "icosphere", "gem", "torus")
    illuminations: tuple = ("point0", "point1", "sky0", "sky1")
    flavor: str = "single"            # "single" | "multi"
    n_materials: int = 2              # used by the multi flavor
    material_variants: int = 1        # scenes per (geometry, illumination)
    roughness_range: tuple = (0.15, 0.45)
    specular_range: tuple = (0.30, 0.45)
    camera_radius: float = 3.0
    fov_deg: float = 50.0
    write_previews: bool = True

    def __post_init__(self):
        if self.flavor not in ("single", "multi"):
            raise ConfigurationError(f"unknown flavor {self.flavor!r}")
        if self.n_train >= self.n_views:
            raise ConfigurationError("n_train must leave test views")


def dataset_preset(name, out_dir, seed=7):
    """Built-in configurations; 'desk' is the default working scale."""
    if name == "desk":
        return DatasetConfig(out_dir=out_dir, seed=seed)
    if name == "desk-multi":
        return DatasetConfig(out_dir=out_dir, seed=seed, flavor="multi",
                             n_materials=2)
    if name == "hyper-corpus":
        return DatasetConfig(out_dir=out_dir, seed=seed,
                             geometries=("sphere",),
                             illuminations=("point0",),
                             material_variants=36,
                             roughness_range=(0.20, 0.40),
                             specular_range=(0.35, 0.40))
    if name == "paper":
        return DatasetConfig(out_dir=out_dir, seed=seed, resolution=256,
                             illuminations=("point0", "point1") + tuple(
                                 f"sky{i}" for i in range(4)))
    raise ConfigurationError(f"unknown preset {name!r}")


def random_material_set(seed, n, roughness_range, specular_range):
    """n materials with well-separated hues (distinct per region)."""
    rng = np.random.default_rng(seed)
    base = float(rng.uniform(0.0, 1.0))
    mats = []
    for k in range(n):
        hue = (base + k / n + float(rng.uniform(-0.2, 0.2)) / max(n, 2)) % 1.0
        rough = float(rng.uniform(*roughness_range))
        spec = float(rng.uniform(*specular_range))
        albedo = colorsys.hsv_to_rgb(hue, 0.65, 0.55)
        top = max(albedo)
        if top + spec > 1.0:
            albedo = tuple(c * (1.0 - spec) / top for c in albedo)
        mats.append(MaterialSpec(albedo=albedo, specular=spec,
                                 roughness=rough, hue_seed=seed))
    return tuple(mats)


class DatasetManifest:
    """Scene/view bookkeeping tying image records to train/test splits."""

    def __init__(self, root, data):
        self.root = root
        self.data = data
        if data.get("version") != MANIFEST_VERSION:
            raise FormatError(f"manifest version {data.get('version')} "
                              f"!= {MANIFEST_VERSION}")

    # -- accessors ---------------------------------------------------------
    @property
    def scene_ids(self):
        return sorted(self.data["scenes"].keys())

    def scene(self, scene_id):
        try:
            return self.data["scenes"][scene_id]
        except KeyError:
            raise InputError(f"unknown scene {scene_id!r}") from None

    def records(self, scene_id=None, split=None):
        out = []
        for rec in self.data["records"]:
            if scene_id is not None and rec["scene_id"] != scene_id:
                continue
            if split is not None and rec["split"] != split:
                continue
            out.append(rec)
        return out

    def load_gbuffer(self, record):
        scene = self.scene(record["scene_id"])
        directory = os.path.join(self.root, record["scene_id"])
        return load_gbuffer(directory, f"view{record['view_id']:02d}",
                            n_weights=scene["n_materials"])

    def scene_spec(self, scene_id):
        """Rebuild the renderable SceneSpec (for analytic test oracles)."""
        meta = self.scene(scene_id)
        mats = tuple(MaterialSpec(albedo=tuple(m["albedo"]),
                                  specular=m["specular"],
                                  roughness=m["roughness"])
                     for m in meta["materials"])
        return SceneSpec(scene_id=scene_id, geometry=meta["geometry"],
                         materials=mats,
                         illumination=make_illumination(meta["illumination"]),
                         camera_radius=meta["camera"]["radius"],
                         fov_deg=meta["camera"]["fov_deg"],
                         elevation_seed=meta["camera"]["elevation_seed"],
                         region_axis_seed=meta["region_axis_seed"])

    def cameras(self, scene_id):
        meta = self.scene(scene_id)
        return sample_views(self.data["n_views"],
                            seed=meta["camera"]["elevation_seed"],
                            radius=meta["camera"]["radius"],
                            fov_deg=meta["camera"]["fov_deg"],
                            resolution=self.data["resolution"])

    # -- persistence -------------------------------------------------------
    def save(self):
        path = os.path.join(self.root, MANIFEST_NAME)
        with open(path, "w") as f:
            json.dump(self.data, f, indent=1, sort_keys=True)
            f.write("\n")
        return path

    @classmethod
    def load(cls, root_or_path):
        path = root_or_path
        if os.path.isdir(path):
            path = os.path.join(path, MANIFEST_NAME)
        if not os.path.exists(path):
            raise FormatError(f"no manifest at {path}")
        with open(path) as f:
            data = json.load(f)
        return cls(os.path.dirname(path), data)

    def validate(self):
        for scene_id, meta in self.data["scenes"].items():
            train = set(meta["train_views"])
            test = set(meta["test_views"])
            if train & test:
                raise FormatError(f"{scene_id}: split tags overlap")
            if len(train) + len(test) != self.data["n_views"]:
                raise FormatError(f"{scene_id}: split does not partition views")
        for rec in self.data["records"]:
            prefix = os.path.join(self.root, rec["scene_id"],
                                  f"view{rec['view_id']:02d}")
            if not os.path.exists(prefix + "_rgb.pfm"):
                raise FormatError(f"missing channel files for {prefix}")
        return True


def build_dataset(config):
    """Render every scene/view, tone-map per scene, write files + manifest."""
    os.makedirs(config.out_dir, exist_ok=True)
    records = []
    scenes = {}
    scene_index = 0
    for geom in config.geometries:
        for illum_id in config.illuminations:
            for variant in range(config.material_variants):
                scene_index += 1
                mat_seed = config.seed * 100003 + scene_index * 613
                n_mat = config.n_materials if config.flavor == "multi" else 1
                materials = random_material_set(
                    mat_seed, n_mat, config.roughness_range,
                    config.specular_range)
                sid = f"{geom}-{illum_id}"
                if config.material_variants > 1:
                    sid += f"-m{variant:02d}"
                if config.flavor == "multi":
                    sid += f"-x{n_mat}"
                elev_seed = config.seed * 7919 + scene_index
                spec = SceneSpec(
                    scene_id=sid, geometry=geom, materials=materials,
                    illumination=make_illumination(illum_id),
                    camera_radius=config.camera_radius,
                    fov_deg=config.fov_deg,
                    elevation_seed=elev_seed,
                    region_axis_seed=mat_seed + 1)
                cams = sample_views(config.n_views, seed=elev_seed,
                                    radius=config.camera_radius,
                                    fov_deg=config.fov_deg,
                                    resolution=config.resolution)
                gbufs = [render_record(spec, cam) for cam in cams]
                scaled, scale = tonemap([g.rgb for g in gbufs],
                                        [g.mask for g in gbufs])
                split_rng = np.random.default_rng(config.seed * 31 + scene_index)
                start = int(split_rng.integers(0, config.n_views))
                train_ids = train_view_ids(config.n_views, config.n_train, start)
                scene_dir = os.path.join(config.out_dir, sid)
                for v, (g, cam) in enumerate(zip(gbufs, cams)):
                    g.rgb = scaled[v].astype(np.float32)
                    prefix = f"view{v:02d}"
                    g.save(scene_dir, prefix)
                    if config.write_previews:
                        write_png8(os.path.join(scene_dir, prefix + "_preview.png"),
                                   g.rgb)
                    split = "train" if v in train_ids else "test"
                    records.append({
                        "scene_id": sid, "view_id": v, "split": split,
                        "prefix": f"{sid}/{prefix}",
                        "azimuth_deg": cam.azimuth_deg,
                        "elevation_deg": cam.elevation_deg,
                    })
                scenes[sid] = {
                    "geometry": geom,
                    "illumination": illum_id,
                    "illumination_kind": spec.illumination.kind,
                    "flavor": config.flavor,
                    "n_materials": n_mat,
                    "material_seed": mat_seed,
                    "region_axis_seed": mat_seed + 1,
                    "tonemap_scale": scale,
                    "train_views": train_ids,
                    "test_views": [v for v in range(config.n_views)
                                   if v not in train_ids],
                    "materials": [
                        {"albedo": list(m.albedo), "specular": m.specular,
                         "roughness": m.roughness} for m in materials],
                    "camera": {"radius": config.camera_radius,
                               "fov_deg": config.fov_deg,
                               "elevation_seed": elev_seed,
                               "elevation_deg": cams[0].elevation_deg},
                }
    data = {
        "version": MANIFEST_VERSION,
        "seed": config.seed,
        "resolution": config.resolution,
        "n_views": config.n_views,
        "n_train": config.n_train,
        "records": records,
        "scenes": scenes,
    }
    manifest = DatasetManifest(config.out_dir, data)
    manifest.save()
    return manifest
