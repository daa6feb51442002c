"""The deep appearance map: a small MLP from (view direction, normal) to RGB.

Holds the parameter container with its fixed flat layout, per-sample
evaluation, the G-buffer re-synthesis operator, and the DAM1 weight file
format.  The network consumes six numbers (two world-space unit vectors)
and emits an unclamped linear RGB triple; clamping happens only at image
export.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ConfigurationError, FormatError, InputError

DAM_INPUTS = 6
DAM_OUTPUTS = 3
DEFAULT_HIDDEN = (48, 58)
# flat parameter vectors are padded to a multiple of this so weight
# predictors emit one fixed, aligned output dimension (3360 by default)
PARAM_PAD_MULTIPLE = 8

UNIT_TOL = 1e-3


@dataclass(frozen=True)
class DamArchitecture:
    """Widths and activations of the appearance MLP.

    Input is fixed at 6 (view direction and normal), output at 3 (RGB).
    ``activations`` has one entry per weight layer; the default is ReLU
    hidden layers with a linear output so tone-mapped HDR may exceed 1.
    """

    hidden: tuple = DEFAULT_HIDDEN
    activations: tuple = None

    def __post_init__(self):
        hidden = tuple(int(h) for h in self.hidden)
        if any(h < 1 for h in hidden):
            raise ConfigurationError(f"bad hidden widths {hidden}")
        object.__setattr__(self, "hidden", hidden)
        acts = self.activations
        if acts is None:
            acts = ("relu",) * len(hidden) + ("linear",)
        acts = tuple(acts)
        if len(acts) != len(hidden) + 1:
            raise ConfigurationError(
                f"need {len(hidden) + 1} activation kinds, got {len(acts)}")
        object.__setattr__(self, "activations", acts)

    def layer_sizes(self):
        return [DAM_INPUTS, *self.hidden, DAM_OUTPUTS]

    def exact_param_count(self):
        sizes = self.layer_sizes()
        return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))

    def param_count(self):
        """Exact count rounded up to the pad multiple (3360 for the default)."""
        n = self.exact_param_count()
        pad = (-n) % PARAM_PAD_MULTIPLE
        return n + pad

    def layer_layout(self):
        """Per layer: (w_start, w_stop, (cout, cin), b_start, b_stop, act)."""
        sizes = self.layer_sizes()
        layout = []
        ofs = 0
        for (cin, cout), act in zip(zip(sizes[:-1], sizes[1:]), self.activations):
            w0 = ofs
            ofs += cin * cout
            b0 = ofs
            ofs += cout
            layout.append((w0, w0 + cin * cout, (cout, cin), b0, ofs, act))
        return layout


DEFAULT_ARCH = DamArchitecture()


@dataclass(frozen=True)
class DamParams:
    """Flat float32 weight vector plus its architecture descriptor."""

    theta: np.ndarray
    arch: DamArchitecture = field(default_factory=lambda: DEFAULT_ARCH)

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=np.float32)
        want = self.arch.param_count()
        if theta.shape != (want,):
            raise ConfigurationError(
                f"theta length {theta.shape} != arch parameter count ({want},)")
        object.__setattr__(self, "theta", theta)

    def layer_arrays(self):
        """Views (W, b, activation) per layer, ignoring pad slots."""
        out = []
        for w0, w1, wshape, b0, b1, act in self.arch.layer_layout():
            out.append((self.theta[w0:w1].reshape(wshape),
                        self.theta[b0:b1], act))
        return out


@dataclass
class AppearanceSample:
    """One observation: world-space view direction and normal with its RGB."""

    view_dir: np.ndarray
    normal: np.ndarray
    rgb: np.ndarray

    def __post_init__(self):
        self.view_dir = np.asarray(self.view_dir, dtype=np.float64)
        self.normal = np.asarray(self.normal, dtype=np.float64)
        self.rgb = np.asarray(self.rgb, dtype=np.float64)

    def validate(self, tol=1e-5):
        for v, label in ((self.view_dir, "view_dir"), (self.normal, "normal")):
            if abs(np.linalg.norm(v) - 1.0) > tol:
                raise InputError(f"{label} is not unit length: {v}")
        if np.any(self.rgb < 0):
            raise InputError(f"negative rgb: {self.rgb}")


def samples_to_arrays(samples):
    """Stack a sample list into (view_dirs, normals, rgbs) float64 arrays."""
    v = np.stack([s.view_dir for s in samples]).astype(np.float64)
    n = np.stack([s.normal for s in samples]).astype(np.float64)
    c = np.stack([s.rgb for s in samples]).astype(np.float64)
    return v, n, c


def init_dam_params(arch=DEFAULT_ARCH, seed=0):
    """He-initialized hidden layers, Xavier linear output, zero biases."""
    rng = np.random.default_rng(seed)
    theta = np.zeros(arch.param_count(), dtype=np.float32)
    sizes = arch.layer_sizes()
    last = len(sizes) - 2
    for k, (w0, w1, (cout, cin), _b0, _b1, _act) in enumerate(arch.layer_layout()):
        if k == last:
            lim = np.sqrt(6.0 / (cin + cout))
            w = rng.uniform(-lim, lim, (cout, cin))
        else:
            w = rng.standard_normal((cout, cin)) * np.sqrt(2.0 / cin)
        theta[w0:w1] = w.astype(np.float32).ravel()
    return DamParams(theta=theta, arch=arch)


def _rowstable_affine(x, w, b):
    # fixed-order accumulation so each row's result is independent of the
    # batch it sits in (BLAS GEMM reorders per batch size); this makes
    # render_gbuffer pixel (i, j) bit-equal to a standalone eval_dam call
    out = np.tile(b.astype(x.dtype), (x.shape[0], 1))
    wt = w.astype(x.dtype)
    for k in range(x.shape[1]):
        out += x[:, k:k + 1] * wt[:, k]
    return out


def _forward_arrays(params, x):
    h = x
    for w, b, act in params.layer_arrays():
        h = _rowstable_affine(h, w, b)
        if act == "relu":
            h = np.maximum(h, 0)
        elif act == "leaky_relu":
            h = np.where(h > 0, h, 0.2 * h)
        elif act == "sigmoid":
            h = 1.0 / (1.0 + np.exp(-h))
        elif act != "linear":
            raise ConfigurationError(f"unknown activation {act!r}")
    return h


def eval_dam_batch(params, view_dirs, normals, check_unit=True):
    """Evaluate the map on row-stacked direction pairs -> (N, 3) RGB.

    Deterministic and independent per row; double precision.
    """
    v = np.asarray(view_dirs, dtype=np.float64)
    n = np.asarray(normals, dtype=np.float64)
    if v.shape != n.shape or v.ndim != 2 or v.shape[1] != 3:
        raise InputError(f"expected (N,3) direction arrays, got {v.shape}/{n.shape}")
    if check_unit:
        for arr, label in ((v, "view_dir"), (n, "normal")):
            err = np.abs(np.linalg.norm(arr, axis=1) - 1.0)
            if err.max(initial=0.0) > UNIT_TOL:
                raise InputError(
                    f"{label} rows deviate from unit length by up to {err.max():.3g}")
    return _forward_arrays(params, np.concatenate([v, n], axis=1))


def eval_dam(params, view_dir, normal):
    """RGB triple for a single direction pair (world space, unit length)."""
    out = eval_dam_batch(params, np.asarray(view_dir, dtype=np.float64)[None, :],
                         np.asarray(normal, dtype=np.float64)[None, :])
    return out[0]


def dam_forward_tensor(theta, x, arch=DEFAULT_ARCH):
    """Differentiable DAM forward: theta (P,) tensor applied to x (B,6).

    Shared by the fitter (theta trainable) and the weight predictor
    (theta produced by another network); pad slots never enter the graph.
    """
    h = x
    for w0, w1, wshape, b0, b1, act in arch.layer_layout():
        w = ad.reshape(ad.slice1d(theta, w0, w1), wshape)
        b = ad.slice1d(theta, b0, b1)
        h = ad.linear(h, w, b)
        h = ad.activation(h, act)
    return h


def render_gbuffer(params, g, background=0.0, clamp_export=False):
    """Apply the appearance map to a G-buffer's normals and view directions.

    Covered pixels get the per-pixel network output (no spatial coupling);
    background pixels get the constant.  Values stay unclamped unless
    ``clamp_export`` is set.
    """
    mask = g.mask > 0.5
    img = np.full((g.height, g.width, 3), float(background), dtype=np.float64)
    idx = np.nonzero(mask)
    if idx[0].size:
        v = g.view_dir[idx].astype(np.float64)
        n = g.normal[idx].astype(np.float64)
        img[idx] = eval_dam_batch(params, v, n, check_unit=False)
    if clamp_export:
        img = np.clip(img, 0.0, 1.0)
    return img


# ---------------------------------------------------------------------------
# DAM1 weight file: magic "DAM1", LE u32 hidden-width count, the widths,
# u32 padded parameter count, then the raw float32 vector.

_MAGIC = b"DAM1"


def serialize_params(params):
    widths = params.arch.hidden
    head = _MAGIC + struct.pack("<I", len(widths))
    head += struct.pack(f"<{len(widths)}I", *widths)
    head += struct.pack("<I", params.theta.size)
    return head + params.theta.astype("<f4").tobytes()


def deserialize_params(blob):
    if len(blob) < 8 or blob[:4] != _MAGIC:
        raise FormatError("not a DAM1 weight file")
    nw = struct.unpack_from("<I", blob, 4)[0]
    ofs = 8
    if len(blob) < ofs + 4 * nw + 4:
        raise FormatError("truncated DAM1 header")
    widths = struct.unpack_from(f"<{nw}I", blob, ofs)
    ofs += 4 * nw
    count = struct.unpack_from("<I", blob, ofs)[0]
    ofs += 4
    arch = DamArchitecture(hidden=widths)
    if count != arch.param_count():
        raise FormatError(
            f"header count {count} != {arch.param_count()} for widths {widths}")
    body = blob[ofs:]
    if len(body) != 4 * count:
        raise FormatError(
            f"payload holds {len(body) // 4} floats, header says {count}")
    theta = np.frombuffer(body, dtype="<f4").astype(np.float32)
    return DamParams(theta=theta, arch=arch)


def save_params(path, params):
    with open(path, "wb") as f:
        f.write(serialize_params(params))


def load_params(path):
    with open(path, "rb") as f:
        return deserialize_params(f.read())
