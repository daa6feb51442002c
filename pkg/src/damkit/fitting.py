"""Fit an appearance MLP to observed samples.

Minimizes the alpha-weighted sum of a per-sample data cost (mean weighted
L2 norm between modeled and observed RGB) and an adversarial cost from a
small patch discriminator, with alternating updates (one discriminator
step per generator step).  The discriminator labels fakes as 1; the
generator drives its renders toward the real label 0.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .dam import (DEFAULT_ARCH, DamArchitecture, DamParams, dam_forward_tensor,
                  init_dam_params, samples_to_arrays)
from .errors import ConfigurationError, DivergenceError, InputError
from .gbuffer import GBuffer
from .networks import Conv2d, Linear, make_optimizer

DISC_PATCH = 64  # discriminator input size; larger images get random crops


@dataclass
class FitConfig:
    alpha: float = 0.001
    lr_generator: float = 1e-3
    lr_discriminator: float = 1e-4
    steps: int = 1500
    batch_size: int = 512
    seed: int = 0
    optimizer: str = "adam"
    lr_decay: str = "cosine"          # "cosine" | "none"
    arch: DamArchitecture = field(default_factory=lambda: DEFAULT_ARCH)
    log_every: int = 1

    def __post_init__(self):
        if self.alpha < 0:
            raise ConfigurationError("alpha must be >= 0")
        if self.steps < 1 or self.batch_size < 1:
            raise ConfigurationError("steps and batch_size must be positive")
        if self.lr_decay not in ("cosine", "none"):
            raise ConfigurationError(f"unknown lr_decay {self.lr_decay!r}")


def lr_at(cfg, base_lr, step):
    """Cosine decay to zero over the configured step budget."""
    if cfg.lr_decay == "none":
        return base_lr
    return base_lr * 0.5 * (1.0 + np.cos(np.pi * step / max(cfg.steps - 1, 1)))


class Discriminator:
    """Encoder-style patch classifier: strided convs to a sigmoid scalar."""

    CHANNELS = (16, 32, 64, 128)

    def __init__(self, input_size=DISC_PATCH, in_channels=3, seed=0,
                 dtype=np.float32):
        if input_size % (2 ** len(self.CHANNELS)) != 0:
            raise ConfigurationError(
                f"discriminator input size {input_size} must be a multiple "
                f"of {2 ** len(self.CHANNELS)}")
        self.input_size = input_size
        self.graph = ad.Graph()
        rng = np.random.default_rng(seed)
        self.convs = []
        c_prev = in_channels
        for i, c in enumerate(self.CHANNELS):
            self.convs.append(Conv2d(self.graph, f"conv{i}", c_prev, c,
                                     k=3, stride=2, padding=1, rng=rng,
                                     dtype=dtype))
            c_prev = c
        side = input_size // (2 ** len(self.CHANNELS))
        self.flat_dim = c_prev * side * side
        self.head = Linear(self.graph, "head", self.flat_dim, 1, rng,
                           dtype=dtype, init="xavier")

    def forward(self, x):
        """x: (B, 3, S, S) tensor -> (B, 1) probabilities in (0, 1)."""
        h = x
        for conv in self.convs:
            h = ad.leaky_relu(conv(h), 0.2)
        h = ad.reshape(h, (h.shape[0], self.flat_dim))
        return ad.sigmoid(self.head(h))

    def predict(self, images):
        """Probability per (B, 3, S, S) numpy batch (no gradients kept)."""
        return self.forward(ad.Tensor(images)).data


@dataclass
class DiscriminatorParams:
    """Snapshot of the classifier weights (name -> array) plus input size."""

    delta: dict
    input_size: int = DISC_PATCH

    @classmethod
    def from_net(cls, net):
        return cls(delta={k: v.copy() for k, v in
                          net.graph.state_arrays().items()},
                   input_size=net.input_size)

    def to_net(self, dtype=np.float32):
        net = Discriminator(self.input_size, dtype=dtype)
        for k, t in net.graph.params.items():
            t.data = self.delta[k].astype(dtype).copy()
        return net


# ---------------------------------------------------------------------------
# costs

def _as_sample_arrays(samples):
    if isinstance(samples, tuple) and len(samples) == 3:
        return tuple(np.asarray(a, dtype=np.float64) for a in samples)
    if isinstance(samples, GBuffer):
        return samples.samples()
    seq = list(samples)
    if not seq:
        raise InputError("empty sample set")
    if isinstance(seq[0], GBuffer):
        parts = [g.samples() for g in seq]
        return tuple(np.concatenate([p[i] for p in parts]) for i in range(3))
    return samples_to_arrays(seq)


def data_cost(params, samples, weights=None):
    """Mean weighted L2-norm error over the sample set (pure evaluation)."""
    v, n, rgb = _as_sample_arrays(samples)
    from .dam import eval_dam_batch
    pred = eval_dam_batch(params, v, n, check_unit=False)
    norms = np.linalg.norm(pred - rgb, axis=1)
    if weights is not None:
        norms = norms * np.asarray(weights, dtype=np.float64)
    return float(norms.mean())


def _data_cost_tensor(theta, v, n, rgb, arch, weights=None):
    x = ad.Tensor(np.concatenate([v, n], axis=1))
    pred = dam_forward_tensor(theta, x, arch)
    diff = ad.sub(pred, ad.Tensor(rgb.astype(x.dtype)))
    norms = ad.rownorm(diff)
    if weights is not None:
        norms = ad.mul(norms, ad.Tensor(np.asarray(weights, dtype=x.dtype)))
    return ad.mean_all(norms)


def render_view_tensor(theta, g, arch, crop=None):
    """Differentiable re-synthesis of one view as a (1, 3, S, S) tensor.

    Background pixels are zeroed by the coverage mask, matching the
    dataset's black background.
    """
    if crop is None:
        crop = (0, 0, g.height)
    y0, x0, size = crop
    sl = np.s_[y0:y0 + size, x0:x0 + size]
    nrm = g.normal[sl].reshape(-1, 3).astype(np.float64)
    vdir = g.view_dir[sl].reshape(-1, 3).astype(np.float64)
    msk = g.mask[sl].reshape(-1, 1).astype(np.float64)
    x = ad.Tensor(np.concatenate([vdir, nrm], axis=1))
    pred = dam_forward_tensor(theta, x, arch)          # (S*S, 3)
    masked = ad.mul(pred, ad.Tensor(np.repeat(msk, 3, axis=1)))
    img = ad.reshape(masked, (1, size, size, 3))
    return ad.transpose(img, (0, 3, 1, 2))


def _nchw(img_hwc):
    return np.moveaxis(img_hwc, 2, 0)[None]


def adversarial_cost(params, disc_params, batch):
    """Evaluate Eq.-style generator and discriminator terms on G-buffers.

    Returns (generator_term, discriminator_term): the generator term is
    the BCE of rendered views against the real label, the discriminator
    term is BCE(render, fake=1) + BCE(real rgb, real=0).
    """
    from .dam import render_gbuffer
    net = disc_params.to_net() if isinstance(disc_params, DiscriminatorParams) \
        else disc_params
    gen_terms, disc_terms = [], []
    for g in batch:
        if g.height != net.input_size or g.width != net.input_size:
            raise InputError(f"expected {net.input_size}-sized views")
        fake = _nchw(render_gbuffer(params, g).astype(np.float32))
        real = _nchw(np.clip(g.rgb, 0.0, None).astype(np.float32))
        p_fake = net.predict(fake)
        p_real = net.predict(real)
        gen_terms.append(float(ad.bce_mean(ad.Tensor(p_fake), 0.0).data))
        disc_terms.append(float(ad.bce_mean(ad.Tensor(p_fake), 1.0).data)
                          + float(ad.bce_mean(ad.Tensor(p_real), 0.0).data))
    return float(np.mean(gen_terms)), float(np.mean(disc_terms))


# ---------------------------------------------------------------------------
# the fit loop

@dataclass
class FitResult:
    params: DamParams
    disc: DiscriminatorParams
    curve: list
    wall_time: float

    def curve_to_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["step", "data_cost", "adv_gen", "adv_disc"])
            for row in self.curve:
                w.writerow([row["step"], repr(row["data_cost"]),
                            repr(row["adv_gen"]), repr(row["adv_disc"])])


def fit_dam(dataset, cfg=None):
    """Fit a DAM to training views or samples; returns params + loss curve.

    ``dataset`` may be a list of GBuffers (enables the adversarial term),
    a list of AppearanceSamples, or (view_dirs, normals, rgbs) arrays.
    Deterministic for a fixed config seed.
    """
    cfg = cfg or FitConfig()
    t_start = time.time()
    views = None
    if isinstance(dataset, GBuffer):
        views = [dataset]
    elif isinstance(dataset, (list, tuple)) and dataset \
            and isinstance(dataset[0], GBuffer):
        views = list(dataset)
    v, n, rgb = _as_sample_arrays(views if views is not None else dataset)
    if v.shape[0] < 1:
        raise InputError("no training samples")
    use_gan = cfg.alpha > 0 and views is not None
    rng = np.random.default_rng(cfg.seed)

    graph = ad.Graph()
    theta0 = init_dam_params(cfg.arch, seed=cfg.seed).theta.astype(np.float64)
    theta = graph.parameter("theta", theta0)
    opt_g = make_optimizer(cfg.optimizer, graph, cfg.lr_generator)

    disc = None
    opt_d = None
    if use_gan:
        size = min(DISC_PATCH, views[0].height)
        disc = Discriminator(input_size=size, seed=cfg.seed + 1,
                             dtype=np.float64)
        opt_d = make_optimizer(cfg.optimizer, disc.graph,
                               cfg.lr_discriminator)

    curve = []
    n_samples = v.shape[0]
    for step in range(cfg.steps):
        opt_g.lr = lr_at(cfg, cfg.lr_generator, step)
        if opt_d is not None:
            opt_d.lr = lr_at(cfg, cfg.lr_discriminator, step)
        idx = rng.integers(0, n_samples, size=min(cfg.batch_size, n_samples))
        adv_gen_val = 0.0
        adv_disc_val = 0.0

        gen_loss_extra = None
        if use_gan:
            g = views[int(rng.integers(0, len(views)))]
            if g.height > disc.input_size:
                y0 = int(rng.integers(0, g.height - disc.input_size + 1))
                x0 = int(rng.integers(0, g.width - disc.input_size + 1))
                crop = (y0, x0, disc.input_size)
            else:
                crop = (0, 0, g.height)
            y0, x0, size = crop
            sl = np.s_[y0:y0 + size, x0:x0 + size]
            real = _nchw(np.clip(g.rgb[sl], 0.0, None).astype(np.float64))

            fake_img = render_view_tensor(theta, g, cfg.arch, crop=crop)

            # discriminator step on the detached render
            disc.graph.zero_grad()
            d_fake = disc.forward(fake_img.detach())
            d_real = disc.forward(ad.Tensor(real))
            d_loss = ad.add(ad.bce_mean(d_fake, 1.0), ad.bce_mean(d_real, 0.0))
            ad.backward(d_loss)
            opt_d.step()
            adv_disc_val = float(d_loss.data)

            # generator sees the updated discriminator
            g_fake = disc.forward(fake_img)
            gen_loss_extra = ad.bce_mean(g_fake, 0.0)

        graph.zero_grad()
        data_loss = _data_cost_tensor(theta, v[idx], n[idx], rgb[idx], cfg.arch)
        if gen_loss_extra is not None:
            total = ad.add(data_loss, ad.scale(gen_loss_extra, cfg.alpha))
            adv_gen_val = float(gen_loss_extra.data)
        else:
            total = data_loss
        if not np.isfinite(total.data):
            raise DivergenceError(
                f"fit_dam diverged at step {step}: loss={total.data}")
        ad.backward(total)
        opt_g.step()

        if step % cfg.log_every == 0 or step == cfg.steps - 1:
            curve.append({"step": step, "data_cost": float(data_loss.data),
                          "adv_gen": adv_gen_val, "adv_disc": adv_disc_val})

    params = DamParams(theta=theta.data.astype(np.float32), arch=cfg.arch)
    disc_params = (DiscriminatorParams.from_net(disc) if disc is not None
                   else DiscriminatorParams(delta={}, input_size=0))
    return FitResult(params=params, disc=disc_params, curve=curve,
                     wall_time=time.time() - t_start)
