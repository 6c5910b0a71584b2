"""Fully connected student network with hand-written backprop."""
from __future__ import annotations

import numpy as np

from .kan import ShapeError, _as_batch, silu, silu_grad

ACTIVATIONS = {
    "relu": (lambda z: np.maximum(z, 0.0), lambda z: (z > 0).astype(np.float64)),
    "tanh": (np.tanh, lambda z: 1.0 - np.tanh(z) ** 2),
    "silu": (silu, silu_grad),
}


class MlpNetwork:
    kind = "mlp"

    def __init__(self, weights, biases, activation: str = "relu"):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}; pick one of {sorted(ACTIVATIONS)}")
        if len(weights) != len(biases) or not weights:
            raise ShapeError("need one bias vector per weight matrix")
        for i, (w, b) in enumerate(zip(weights, biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ShapeError(f"layer {i}: weight {w.shape} incompatible with bias {b.shape}")
            if i and weights[i - 1].shape[1] != w.shape[0]:
                raise ShapeError(f"layer dims do not chain at layer {i}")
        # weights are stored (d_in, d_out) so a batch multiplies on the right
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        self.activation = activation

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def input_dim(self) -> int:
        return self.dims[0]

    @property
    def output_dim(self) -> int:
        return self.dims[-1]

    def params(self) -> dict:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"layers.{i}.weight"] = w
            out[f"layers.{i}.bias"] = b
        return out

    def parameter_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def forward(self, x, tag: str = "logits"):
        act = ACTIVATIONS[self.activation][0]
        h = np.asarray(x, dtype=np.float64)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if i == last and tag == "penultimate":
                return h
            h = h @ w + b
            if i < last:
                h = act(h)
        return h

    def forward_cached(self, x):
        act = ACTIVATIONS[self.activation][0]
        h = np.asarray(x, dtype=np.float64)
        caches = []
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            caches.append((h, z))
            h = act(z) if i < last else z
        return h, caches

    def backward(self, caches, grad_out):
        dact = ACTIVATIONS[self.activation][1]
        grads = {}
        g = grad_out
        for i in reversed(range(len(self.weights))):
            h, z = caches[i]
            if i < len(self.weights) - 1:
                g = g * dact(z)
            grads[f"layers.{i}.weight"] = h.T @ g
            grads[f"layers.{i}.bias"] = g.sum(axis=0)
            g = g @ self.weights[i].T
        return grads, g


def mlp_init(dims, seed: int = 0, activation: str = "relu") -> MlpNetwork:
    """He-uniform weights, zero biases."""
    dims = [int(d) for d in dims]
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise ShapeError(f"dims must list at least two positive sizes, got {dims}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for d_in, d_out in zip(dims, dims[1:]):
        bound = np.sqrt(6.0 / d_in)
        weights.append(rng.uniform(-bound, bound, size=(d_in, d_out)))
        biases.append(np.zeros(d_out))
    return MlpNetwork(weights, biases, activation)


def mlp_forward(net: MlpNetwork, x) -> np.ndarray:
    x, single = _as_batch(net, x)
    out = net.forward(x)
    return out[0] if single else out


def mlp_backward(net: MlpNetwork, x, upstream_grad):
    x, single = _as_batch(net, x)
    g = np.atleast_2d(np.asarray(upstream_grad, dtype=np.float64))
    if g.shape != (x.shape[0], net.output_dim):
        raise ShapeError(f"upstream gradient shape {g.shape} does not match output")
    _, caches = net.forward_cached(x)
    grads, gx = net.backward(caches, g)
    return grads, (gx[0] if single else gx)


def mlp_parameter_count(net: MlpNetwork) -> int:
    return net.parameter_count()
