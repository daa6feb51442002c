"""Shared test utilities, chiefly the central finite-difference oracle.

The oracle only ever calls forward evaluations, never the reverse-mode
path it is checking.
"""

import numpy as np


def finite_difference(f, arrays, eps=1e-4):
    """Central-difference gradients of scalar f(*arrays) w.r.t. each array.

    f must be a pure function of the given float64 arrays (rebuilding any
    graph internally) and return a python float.
    """
    grads = []
    for k, a in enumerate(arrays):
        g = np.zeros_like(a, dtype=np.float64)
        flat = a.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = f(*arrays)
            flat[i] = orig - eps
            lo = f(*arrays)
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * eps)
        grads.append(g)
    return grads


def rel_err(a, b):
    """Relative error with an absolute floor for near-zero entries."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-6)
    return float((np.abs(a - b) / denom).max(initial=0.0))


def random_unit_vectors(rng, n):
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)
