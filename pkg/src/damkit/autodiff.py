"""Minimal dense-tensor reverse-mode automatic differentiation.

Dynamic tape over numpy arrays, sized for the small networks used here:
per-sample MLPs built from 1x1 affine layers, strided conv encoders and an
encoder-decoder with skip connections.  Tensors are at most 4-D
(batch, channel, height, width).  There is no general broadcasting; every
op states its exact shape contract and raises ``ConfigurationError``
otherwise.  Double precision is the default; training code may pass
float32 arrays and all ops preserve the input dtype.

Backward walks the tape in reverse creation order, which is a valid
topological order and makes gradient accumulation deterministic.
"""

from __future__ import annotations

import itertools

import numpy as np

from .errors import ConfigurationError, DivergenceError

# When True every backward step verifies gradient finiteness per node and
# reports the offending op.  Cheap enough for tests, off in training loops
# (training checks loss/param grads instead).
DEBUG_CHECKS = False

_seq_counter = itertools.count()


class Tensor:
    """A node of the tape: dense array plus gradient slot.

    ``requires_grad`` marks trainable leaves.  Interior nodes created by ops
    carry a ``_backward`` closure and references to their parents.
    """

    __slots__ = ("data", "grad", "requires_grad", "op", "name",
                 "_parents", "_backward", "_seq")

    def __init__(self, data, requires_grad=False, op="leaf", name=None):
        self.data = np.asarray(data)
        if self.data.dtype not in (np.float32, np.float64):
            self.data = self.data.astype(np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.op = op
        self.name = name
        self._parents = ()
        self._backward = None
        self._seq = next(_seq_counter)

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data)

    def detach(self):
        """A new leaf sharing this tensor's values; gradients stop here."""
        return Tensor(self.data, requires_grad=False, op="detach")

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def __repr__(self):
        return f"Tensor(op={self.op!r}, shape={self.data.shape}, dtype={self.data.dtype})"


def _result(data, parents, op, backward):
    needs = any(p.requires_grad or p._backward is not None for p in parents)
    out = Tensor(data, op=op)
    if needs:
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _check_same_shape(a, b, op):
    if a.data.shape != b.data.shape:
        raise ConfigurationError(
            f"{op}: shape mismatch {a.data.shape} vs {b.data.shape}")


# ---------------------------------------------------------------------------
# elementwise arithmetic

def add(a, b):
    _check_same_shape(a, b, "add")

    def backward(out):
        g = out.grad
        a.accumulate(g)
        b.accumulate(g)

    return _result(a.data + b.data, (a, b), "add", backward)


def sub(a, b):
    _check_same_shape(a, b, "sub")

    def backward(out):
        g = out.grad
        a.accumulate(g)
        b.accumulate(-g)

    return _result(a.data - b.data, (a, b), "sub", backward)


def mul(a, b):
    _check_same_shape(a, b, "mul")

    def backward(out):
        g = out.grad
        a.accumulate(g * b.data)
        b.accumulate(g * a.data)

    return _result(a.data * b.data, (a, b), "mul", backward)


def scale(a, s):
    """Multiply by a python scalar."""
    s = float(s)

    def backward(out):
        a.accumulate(out.grad * s)

    return _result(a.data * s, (a,), "scale", backward)


def add_scalar(a, s):
    s = float(s)

    def backward(out):
        a.accumulate(out.grad)

    return _result(a.data + s, (a,), "add_scalar", backward)


def square(a):
    def backward(out):
        a.accumulate(out.grad * (2.0 * a.data))

    return _result(a.data * a.data, (a,), "square", backward)


def absolute(a):
    def backward(out):
        a.accumulate(out.grad * np.sign(a.data))

    return _result(np.abs(a.data), (a,), "abs", backward)


def log(a):
    def backward(out):
        a.accumulate(out.grad / a.data)

    return _result(np.log(a.data), (a,), "log", backward)


def clamp(a, lo, hi):
    """Clamp to [lo, hi]; gradient is zero where the input was clamped."""
    inside = (a.data >= lo) & (a.data <= hi)

    def backward(out):
        a.accumulate(out.grad * inside)

    return _result(np.clip(a.data, lo, hi), (a,), "clamp", backward)


# ---------------------------------------------------------------------------
# activations

def relu(a):
    def backward(out):
        a.accumulate(out.grad * (a.data > 0))

    return _result(np.maximum(a.data, 0), (a,), "relu", backward)


def leaky_relu(a, slope=0.2):
    def backward(out):
        a.accumulate(out.grad * np.where(a.data > 0, 1.0, slope))

    return _result(np.where(a.data > 0, a.data, slope * a.data),
                   (a,), "leaky_relu", backward)


def sigmoid(a):
    y = 1.0 / (1.0 + np.exp(-a.data))

    def backward(out):
        a.accumulate(out.grad * (out.data * (1.0 - out.data)))

    return _result(y, (a,), "sigmoid", backward)


def activation(a, kind):
    """Dispatch by name: 'relu', 'leaky_relu' (slope 0.2), 'sigmoid', 'linear'."""
    if kind == "relu":
        return relu(a)
    if kind == "leaky_relu":
        return leaky_relu(a, 0.2)
    if kind == "sigmoid":
        return sigmoid(a)
    if kind == "linear":
        return a
    raise ConfigurationError(f"unknown activation kind {kind!r}")


# ---------------------------------------------------------------------------
# linear algebra

def linear(x, w, b=None):
    """Affine layer: out[i, j] = sum_k w[j, k] x[i, k] + b[j].

    x: (B, Cin); w: (Cout, Cin); b: (Cout,) or None.
    """
    if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[1]:
        raise ConfigurationError(
            f"linear: incompatible shapes x{x.data.shape} w{w.data.shape}")
    if b is not None and b.data.shape != (w.data.shape[0],):
        raise ConfigurationError(
            f"linear: bias shape {b.data.shape} != ({w.data.shape[0]},)")
    y = x.data @ w.data.T
    if b is not None:
        y = y + b.data

    def backward(out):
        g = out.grad
        w.accumulate(g.T @ x.data)
        x.accumulate(g @ w.data)
        if b is not None:
            b.accumulate(g.sum(axis=0))

    parents = (x, w) if b is None else (x, w, b)
    return _result(y, parents, "linear", backward)


def _im2col(xp, kh, kw, stride, oh, ow):
    # xp: padded input (B, C, Hp, Wp) -> view (B, C, KH, KW, OH, OW)
    b, c, hp, wp = xp.shape
    sb, sc, sh, sw = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp, shape=(b, c, kh, kw, oh, ow),
        strides=(sb, sc, sh, sw, sh * stride, sw * stride), writeable=False)
    return view


def conv2d(x, w, b=None, stride=1, padding=0):
    """2-D cross-correlation. x: (B, Cin, H, W); w: (Cout, Cin, KH, KW).

    Output spatial size is floor((H + 2*pad - K)/stride) + 1 and must be >= 1.
    """
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ConfigurationError("conv2d: inputs must be 4-D")
    bsz, cin, h, wd = x.data.shape
    cout, cin_w, kh, kw = w.data.shape
    if cin != cin_w:
        raise ConfigurationError(
            f"conv2d: channel mismatch input {cin} vs kernel {cin_w}")
    if stride not in (1, 2):
        raise ConfigurationError(f"conv2d: stride must be 1 or 2, got {stride}")
    if kh < 1 or kw < 1:
        raise ConfigurationError("conv2d: kernel spatial size must be >= 1")
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (wd + 2 * padding - kw) // stride + 1
    if oh < 1 or ow < 1:
        raise ConfigurationError(
            f"conv2d: output size {oh}x{ow} < 1 for input {h}x{wd}, "
            f"kernel {kh}x{kw}, stride {stride}, pad {padding}")
    if b is not None and b.data.shape != (cout,):
        raise ConfigurationError("conv2d: bias shape mismatch")

    if padding:
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = x.data
    cols = _im2col(xp, kh, kw, stride, oh, ow)
    # (B, OH, OW, Cin*KH*KW) @ (Cin*KH*KW, Cout)
    cols2 = np.ascontiguousarray(cols.transpose(0, 4, 5, 1, 2, 3)).reshape(
        bsz * oh * ow, cin * kh * kw)
    wmat = w.data.reshape(cout, cin * kh * kw)
    y = (cols2 @ wmat.T).reshape(bsz, oh, ow, cout).transpose(0, 3, 1, 2)
    if b is not None:
        y = y + b.data[None, :, None, None]
    y = np.ascontiguousarray(y)

    def backward(out):
        g = out.grad  # (B, Cout, OH, OW)
        g2 = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(
            bsz * oh * ow, cout)
        w.accumulate((g2.T @ cols2).reshape(cout, cin, kh, kw))
        if b is not None:
            b.accumulate(g.sum(axis=(0, 2, 3)))
        dcols = (g2 @ wmat).reshape(bsz, oh, ow, cin, kh, kw)
        dcols = dcols.transpose(0, 3, 4, 5, 1, 2)  # (B, Cin, KH, KW, OH, OW)
        dxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i:i + stride * oh:stride,
                    j:j + stride * ow:stride] += dcols[:, :, i, j]
        if padding:
            dxp = dxp[:, :, padding:padding + h, padding:padding + wd]
        x.accumulate(dxp)

    parents = (x, w) if b is None else (x, w, b)
    return _result(y, parents, "conv2d", backward)


def upsample2x_nearest(x):
    """Replicate every pixel 2x2. x: (B, C, H, W) -> (B, C, 2H, 2W)."""
    if x.data.ndim != 4:
        raise ConfigurationError("upsample2x_nearest: input must be 4-D")
    y = x.data.repeat(2, axis=2).repeat(2, axis=3)

    def backward(out):
        g = out.grad
        b, c, h2, w2 = g.shape
        x.accumulate(g.reshape(b, c, h2 // 2, 2, w2 // 2, 2).sum(axis=(3, 5)))

    return _result(y, (x,), "upsample2x", backward)


# ---------------------------------------------------------------------------
# shape manipulation

def reshape(x, shape):
    shape = tuple(shape)
    if int(np.prod(shape)) != x.data.size:
        raise ConfigurationError(
            f"reshape: cannot view {x.data.shape} as {shape}")
    old = x.data.shape

    def backward(out):
        x.accumulate(out.grad.reshape(old))

    return _result(x.data.reshape(shape), (x,), "reshape", backward)


def transpose(x, axes):
    axes = tuple(axes)
    if sorted(axes) != list(range(x.data.ndim)):
        raise ConfigurationError(f"transpose: bad axes {axes} for {x.data.shape}")
    inv = tuple(np.argsort(axes))

    def backward(out):
        x.accumulate(np.ascontiguousarray(out.grad.transpose(inv)))

    return _result(np.ascontiguousarray(x.data.transpose(axes)),
                   (x,), "transpose", backward)


def slice1d(x, start, stop):
    """Contiguous range of a 1-D tensor."""
    if x.data.ndim != 1:
        raise ConfigurationError("slice1d: input must be 1-D")
    if not (0 <= start <= stop <= x.data.shape[0]):
        raise ConfigurationError(
            f"slice1d: range [{start}, {stop}) out of bounds for {x.data.shape}")

    def backward(out):
        g = np.zeros_like(x.data)
        g[start:stop] = out.grad
        x.accumulate(g)

    return _result(x.data[start:stop].copy(), (x,), "slice1d", backward)


def slice_channels(x, start, stop):
    """Channel range of a 4-D tensor: x[:, start:stop]."""
    if x.data.ndim != 4:
        raise ConfigurationError("slice_channels: input must be 4-D")

    def backward(out):
        g = np.zeros_like(x.data)
        g[:, start:stop] = out.grad
        x.accumulate(g)

    return _result(np.ascontiguousarray(x.data[:, start:stop]),
                   (x,), "slice_channels", backward)


def concat_channels(parts):
    """Concatenate 4-D tensors along the channel axis."""
    parts = list(parts)
    if not parts or any(p.data.ndim != 4 for p in parts):
        raise ConfigurationError("concat_channels: need 4-D tensors")
    sizes = [p.data.shape[1] for p in parts]
    y = np.concatenate([p.data for p in parts], axis=1)

    def backward(out):
        g = out.grad
        ofs = 0
        for p, c in zip(parts, sizes):
            p.accumulate(g[:, ofs:ofs + c])
            ofs += c

    return _result(y, tuple(parts), "concat_channels", backward)


def mul_mask(mask, x):
    """Broadcast-multiply a single-channel mask over all channels of x.

    mask: (B, 1, H, W); x: (B, C, H, W).
    """
    if mask.data.shape[1] != 1 or mask.data.ndim != 4 or x.data.ndim != 4:
        raise ConfigurationError("mul_mask: mask must be (B,1,H,W)")
    if mask.data.shape[0] != x.data.shape[0] or mask.data.shape[2:] != x.data.shape[2:]:
        raise ConfigurationError(
            f"mul_mask: shape mismatch {mask.data.shape} vs {x.data.shape}")

    def backward(out):
        g = out.grad
        mask.accumulate((g * x.data).sum(axis=1, keepdims=True))
        x.accumulate(g * mask.data)

    return _result(mask.data * x.data, (mask, x), "mul_mask", backward)


def softmax_channels(x):
    """Softmax across the channel axis of a 4-D tensor."""
    if x.data.ndim != 4:
        raise ConfigurationError("softmax_channels: input must be 4-D")
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=1, keepdims=True)

    def backward(out):
        g = out.grad
        dot = (g * y).sum(axis=1, keepdims=True)
        x.accumulate(y * (g - dot))

    return _result(y, (x,), "softmax_channels", backward)


# ---------------------------------------------------------------------------
# reductions and losses

def sum_all(x):
    def backward(out):
        x.accumulate(np.full_like(x.data, out.grad))

    return _result(x.data.sum(), (x,), "sum", backward)


def mean_all(x):
    n = x.data.size

    def backward(out):
        x.accumulate(np.full_like(x.data, out.grad / n))

    return _result(x.data.mean(), (x,), "mean", backward)


def rownorm(x, eps=1e-12):
    """Euclidean norm per row of a (B, C) tensor -> (B,).

    The gradient uses max(norm, eps) in the denominator so exact zeros do
    not produce NaN.
    """
    if x.data.ndim != 2:
        raise ConfigurationError("rownorm: input must be 2-D")
    n = np.sqrt((x.data * x.data).sum(axis=1))

    def backward(out):
        denom = np.maximum(n, eps)[:, None]
        x.accumulate(out.grad[:, None] * x.data / denom)

    return _result(n, (x,), "rownorm", backward)


_BCE_EPS = 1e-7


def bce_mean(pred, target):
    """Mean binary cross-entropy against a constant target.

    Inputs outside (0,1) are clamped to [1e-7, 1-1e-7]; gradient is zero in
    the clamped region.
    """
    t = np.asarray(target, dtype=pred.data.dtype)
    if t.shape not in ((), pred.data.shape):
        t = np.broadcast_to(t, pred.data.shape)
    inside = (pred.data >= _BCE_EPS) & (pred.data <= 1.0 - _BCE_EPS)
    p = np.clip(pred.data, _BCE_EPS, 1.0 - _BCE_EPS)
    val = -(t * np.log(p) + (1.0 - t) * np.log(1.0 - p)).mean()
    n = pred.data.size

    def backward(out):
        g = (p - t) / (p * (1.0 - p)) / n
        pred.accumulate(out.grad * g * inside)

    return _result(val, (pred,), "bce", backward)


def losses(pred, target, kind="l2", weights=None):
    """Mean-reduced elementwise loss between two same-shape tensors.

    kind 'l2' squares the difference, 'l1' takes its absolute value, 'bce'
    treats pred as probabilities of the 0/1 target.  Optional ``weights``
    (same shape, constant or tensor) multiply per element before the mean.
    """
    _check_same_shape(pred, target, "losses")
    if kind == "l2":
        d = sub(pred, target)
        e = square(d)
    elif kind == "l1":
        e = absolute(sub(pred, target))
    elif kind == "bce":
        return bce_mean(pred, target.data)
    else:
        raise ConfigurationError(f"unknown loss kind {kind!r}")
    if weights is not None:
        if not isinstance(weights, Tensor):
            weights = Tensor(np.asarray(weights, dtype=pred.data.dtype))
        e = mul(e, weights)
    return mean_all(e)


# ---------------------------------------------------------------------------
# backward pass

def backward(loss):
    """Reverse-mode sweep from a scalar loss through its tape.

    Gradients accumulate into ``.grad`` of every tensor reachable from
    ``loss``; trainable leaves keep theirs for the optimizer.  Raises
    ``DivergenceError`` naming the op when DEBUG_CHECKS is on and a
    non-finite gradient appears.
    """
    if loss.data.shape != ():
        raise ConfigurationError("backward: loss must be scalar")
    if not np.isfinite(loss.data):
        raise DivergenceError(f"backward: non-finite loss from op {loss.op!r}")

    # collect the reachable subtape, then replay in reverse creation order
    visited = {id(loss): loss}
    stack = [loss]
    while stack:
        t = stack.pop()
        for p in t._parents:
            if id(p) not in visited:
                visited[id(p)] = p
                stack.append(p)
    order = sorted(visited.values(), key=lambda t: t._seq, reverse=True)

    loss.grad = np.array(1.0, dtype=loss.data.dtype)
    for t in order:
        if t._backward is None or t.grad is None:
            continue
        if DEBUG_CHECKS and not np.all(np.isfinite(t.grad)):
            raise DivergenceError(
                f"non-finite gradient at op {t.op!r} (shape {t.data.shape})")
        t._backward(t)
    if DEBUG_CHECKS:
        for t in order:
            if t.requires_grad and t.grad is not None and \
                    not np.all(np.isfinite(t.grad)):
                name = t.name or t.op
                raise DivergenceError(f"non-finite gradient on parameter {name!r}")


class Graph:
    """Named trainable parameter slots plus the backward entry point.

    Forward passes rebuild the tape each call (dynamic graphs); the
    parameter registry is the persistent part.  Every trainable slot gets a
    gradient slot of identical shape on first backward.
    """

    def __init__(self):
        self.params = {}

    def parameter(self, name, array):
        if name in self.params:
            raise ConfigurationError(f"duplicate parameter {name!r}")
        t = Tensor(np.array(array, copy=True), requires_grad=True,
                   op="param", name=name)
        self.params[name] = t
        return t

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    def backward(self, loss):
        backward(loss)

    def state_arrays(self):
        """name -> data array (live references, for optimizers/serializers)."""
        return {k: v.data for k, v in self.params.items()}
