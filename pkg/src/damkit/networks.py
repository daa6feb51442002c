"""Layer and optimizer building blocks shared by the trainable models."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .errors import ConfigurationError, DivergenceError


def he_init(rng, fan_in, shape, dtype):
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


def xavier_init(rng, fan_in, fan_out, shape, dtype):
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, shape).astype(dtype)


class Linear:
    def __init__(self, graph, name, cin, cout, rng, dtype=np.float32, init="he"):
        if init == "he":
            w = he_init(rng, cin, (cout, cin), dtype)
        else:
            w = xavier_init(rng, cin, cout, (cout, cin), dtype)
        self.w = graph.parameter(f"{name}.w", w)
        self.b = graph.parameter(f"{name}.b", np.zeros(cout, dtype=dtype))

    def __call__(self, x):
        return ad.linear(x, self.w, self.b)


class Conv2d:
    def __init__(self, graph, name, cin, cout, k, stride, padding, rng,
                 dtype=np.float32, init="he"):
        fan_in = cin * k * k
        if init == "he":
            w = he_init(rng, fan_in, (cout, cin, k, k), dtype)
        else:
            w = xavier_init(rng, fan_in, cout, (cout, cin, k, k), dtype)
        self.w = graph.parameter(f"{name}.w", w)
        self.b = graph.parameter(f"{name}.b", np.zeros(cout, dtype=dtype))
        self.stride = stride
        self.padding = padding

    def __call__(self, x):
        return ad.conv2d(x, self.w, self.b, stride=self.stride,
                         padding=self.padding)


class SGD:
    """Plain stochastic gradient descent over a graph's parameters."""

    def __init__(self, graph, lr):
        self.graph = graph
        self.lr = lr

    def step(self):
        for name, p in self.graph.params.items():
            if p.grad is None:
                continue
            if not np.all(np.isfinite(p.grad)):
                raise DivergenceError(f"non-finite gradient on {name!r}")
            p.data -= self.lr * p.grad


class Adam:
    """Adam with bias correction; state keyed by parameter name."""

    def __init__(self, graph, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.graph = graph
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, p in self.graph.params.items():
            if p.grad is None:
                continue
            if not np.all(np.isfinite(p.grad)):
                raise DivergenceError(f"non-finite gradient on {name!r}")
            g = p.grad
            m = self.m.get(name)
            if m is None:
                m = np.zeros_like(p.data)
                self.m[name] = m
                self.v[name] = np.zeros_like(p.data)
            v = self.v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            mhat = m / (1 - b1 ** self.t)
            vhat = v / (1 - b2 ** self.t)
            p.data -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def make_optimizer(kind, graph, lr):
    if kind == "adam":
        return Adam(graph, lr)
    if kind == "sgd":
        return SGD(graph, lr)
    raise ConfigurationError(f"unknown optimizer kind {kind!r}")
