"""Kolmogorov-Arnold network: learnable per-edge activations with analytic gradients.

Each edge ``(p, j)`` of a layer computes

    phi(x) = omega_b * silu(x) + omega_s * sum_i c_i B_i(x - shift)

and node ``j`` sums its incoming edges plus a bias.  Per edge that is
``G + K`` spline coefficients, ``omega_b``, ``omega_s`` and ``shift``; with the
per-node bias a layer owns ``d_in * d_out * (G + K + 3) + d_out`` scalars.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spline import SplineGrid, local_basis


class ShapeError(ValueError):
    """Input or parameter dimensions do not match the network."""


def silu(x):
    """``x * sigmoid(x)``, evaluated without overflow for large ``|x|``."""
    x = np.asarray(x, dtype=np.float64)
    return x * _sigmoid(x)


def _sigmoid(x):
    # exp of a non-positive argument only
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def silu_grad(x):
    s = _sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


@dataclass
class KanEdge:
    omega_b: float
    omega_s: float
    coeffs: np.ndarray
    shift: float


class KanLayer:
    PARAM_NAMES = ("omega_b", "omega_s", "shift", "coeffs", "bias")

    def __init__(self, d_in: int, d_out: int, grid: SplineGrid):
        if d_in < 1 or d_out < 1:
            raise ShapeError(f"layer dims must be positive, got {d_in}x{d_out}")
        self.d_in = int(d_in)
        self.d_out = int(d_out)
        self.grid = grid
        self.omega_b = np.zeros((d_in, d_out))
        self.omega_s = np.zeros((d_in, d_out))
        self.shift = np.zeros((d_in, d_out))
        self.coeffs = np.zeros((d_in, d_out, grid.n_basis))
        self.bias = np.zeros(d_out)

    def edge(self, p: int, j: int) -> KanEdge:
        return KanEdge(
            float(self.omega_b[p, j]),
            float(self.omega_s[p, j]),
            self.coeffs[p, j].copy(),
            float(self.shift[p, j]),
        )

    def parameter_count(self) -> int:
        g, k = self.grid.grid_size, self.grid.order
        return self.d_in * self.d_out * (g + k + 3) + self.d_out

    def params(self) -> dict:
        return {name: getattr(self, name) for name in self.PARAM_NAMES}

    def _flat_index(self, first):
        nb = self.grid.n_basis
        base = (np.arange(self.d_in)[:, None] * self.d_out + np.arange(self.d_out)[None, :]) * nb
        return base[None, :, :, None] + first[..., None] + np.arange(self.grid.order + 1)

    def forward(self, x, keep=False):
        if x.ndim != 2 or x.shape[1] != self.d_in:
            raise ShapeError(f"expected input of shape (N, {self.d_in}), got {x.shape}")
        u = x[:, :, None] - self.shift[None]
        if keep:
            first, vals, derivs, _ = local_basis(self.grid, u, derivatives=True)
        else:
            first, vals = local_basis(self.grid, u)
        idx = self._flat_index(first)
        active = self.coeffs.ravel()[idx]
        spline = np.einsum("npjr,npjr->npj", active, vals)
        base = silu(x)
        out = (
            base @ self.omega_b
            + np.einsum("npj,pj->nj", spline, self.omega_s)
            + self.bias
        )
        if not keep:
            return out, None
        dspline = np.einsum("npjr,npjr->npj", active, derivs)
        return out, (x, base, spline, dspline, vals, idx)

    def backward(self, cache, grad_out):
        x, base, spline, dspline, vals, idx = cache
        grads = {
            "omega_b": base.T @ grad_out,
            "omega_s": np.einsum("nj,npj->pj", grad_out, spline),
            "bias": grad_out.sum(axis=0),
        }
        # d/d(spline input) per edge, already weighted by omega_s
        g_edge = grad_out[:, None, :] * self.omega_s[None]
        weights = g_edge[..., None] * vals
        grads["coeffs"] = np.bincount(
            idx.ravel(), weights=weights.ravel(), minlength=self.coeffs.size
        ).reshape(self.coeffs.shape)
        g_u = g_edge * dspline
        grads["shift"] = -g_u.sum(axis=0)
        grad_in = silu_grad(x) * (grad_out @ self.omega_b.T) + g_u.sum(axis=2)
        return grads, grad_in


class KanNetwork:
    kind = "kan"

    def __init__(self, layers: list[KanLayer]):
        if not layers:
            raise ShapeError("a network needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.d_out != b.d_in:
                raise ShapeError(f"layer dims do not chain: {a.d_out} -> {b.d_in}")
        self.layers = layers

    @property
    def dims(self) -> list[int]:
        return [self.layers[0].d_in] + [layer.d_out for layer in self.layers]

    @property
    def input_dim(self) -> int:
        return self.layers[0].d_in

    @property
    def output_dim(self) -> int:
        return self.layers[-1].d_out

    @property
    def grid(self) -> SplineGrid:
        return self.layers[0].grid

    def params(self) -> dict:
        return {
            f"layers.{i}.{name}": arr
            for i, layer in enumerate(self.layers)
            for name, arr in layer.params().items()
        }

    def parameter_count(self) -> int:
        return sum(layer.parameter_count() for layer in self.layers)

    def forward(self, x, tag: str = "logits"):
        """Logits for a batch ``(N, T)``; ``tag="penultimate"`` stops one layer early."""
        h = np.asarray(x, dtype=np.float64)
        stop = len(self.layers) - (tag == "penultimate")
        for layer in self.layers[:stop]:
            h, _ = layer.forward(h)
        return h

    def forward_cached(self, x):
        h = np.asarray(x, dtype=np.float64)
        caches = []
        for layer in self.layers:
            h, cache = layer.forward(h, keep=True)
            caches.append(cache)
        return h, caches

    def backward(self, caches, grad_out):
        grads = {}
        g = grad_out
        for i in reversed(range(len(self.layers))):
            layer_grads, g = self.layers[i].backward(caches[i], g)
            for name, arr in layer_grads.items():
                grads[f"layers.{i}.{name}"] = arr
        return grads, g


def _as_batch(net, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ShapeError(f"expected {net.input_dim} input features, got shape {np.shape(x)}")
    return x, single


def kan_forward(net: KanNetwork, x) -> np.ndarray:
    x, single = _as_batch(net, x)
    out = net.forward(x)
    return out[0] if single else out


def kan_backward(net: KanNetwork, x, upstream_grad):
    """Gradients of ``sum(logits * upstream_grad)``.

    Returns ``(param_grads, input_grad)``; ``param_grads`` is keyed like
    :meth:`KanNetwork.params`.
    """
    x, single = _as_batch(net, x)
    g = np.atleast_2d(np.asarray(upstream_grad, dtype=np.float64))
    if g.shape != (x.shape[0], net.output_dim):
        raise ShapeError(f"upstream gradient shape {g.shape} does not match output")
    _, caches = net.forward_cached(x)
    grads, gx = net.backward(caches, g)
    return grads, (gx[0] if single else gx)


def kan_parameter_count(net: KanNetwork) -> int:
    return net.parameter_count()


def kan_init(dims, grid_cfg: SplineGrid | dict | None = None, seed: int = 0) -> KanNetwork:
    dims = [int(d) for d in dims]
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise ShapeError(f"dims must list at least two positive sizes, got {dims}")
    if grid_cfg is None:
        grid = SplineGrid()
    elif isinstance(grid_cfg, SplineGrid):
        grid = grid_cfg
    else:
        grid = SplineGrid(**grid_cfg)
    rng = np.random.default_rng(seed)
    layers = []
    for d_in, d_out in zip(dims, dims[1:]):
        layer = KanLayer(d_in, d_out, grid)
        bound = 1.0 / np.sqrt(d_in)
        layer.omega_b[:] = rng.uniform(-bound, bound, size=(d_in, d_out))
        layer.omega_s[:] = 1.0
        layer.coeffs[:] = rng.normal(0.0, 0.1, size=layer.coeffs.shape)
        layers.append(layer)
    return KanNetwork(layers)
