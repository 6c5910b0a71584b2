"""Versioned binary model files.

Layout (all little-endian)::

    b"KDKD" | u32 version | u8 kind | u8 activation | u32 n_dims | u32 dims[n_dims]
    | u32 grid_size | u32 order | f64 domain_lo | f64 domain_hi
    | u64 n_params | f64 params[n_params] | u32 crc32(everything before)

KAN parameters run layer by layer; inside a layer edges are row-major over
``(input, output)`` and each edge stores ``omega_b, omega_s, shift, coeffs``,
followed by the layer's biases.  MLP layers store the ``(d_in, d_out)``
weight matrix row-major, then the bias.
"""
from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .kan import KanLayer, KanNetwork
from .mlp import ACTIVATIONS, MlpNetwork
from .spline import SplineGrid

MAGIC = b"KDKD"
FORMAT_VERSION = 1
KINDS = {"kan": 1, "mlp": 2}
ACTIVATION_TAGS = {name: i + 1 for i, name in enumerate(sorted(ACTIVATIONS))}


class ModelFormatError(ValueError):
    pass


def _kan_vector(net: KanNetwork) -> np.ndarray:
    parts = []
    for layer in net.layers:
        edges = np.concatenate(
            [layer.omega_b[..., None], layer.omega_s[..., None], layer.shift[..., None], layer.coeffs],
            axis=2,
        )
        parts += [edges.ravel(), layer.bias]
    return np.concatenate(parts)


def _mlp_vector(net: MlpNetwork) -> np.ndarray:
    return np.concatenate([a.ravel() for w, b in zip(net.weights, net.biases) for a in (w, b)])


def model_to_bytes(net) -> bytes:
    if isinstance(net, KanNetwork):
        kind, act, vec, grid = KINDS["kan"], 0, _kan_vector(net), net.grid
        g, k, lo, hi = grid.grid_size, grid.order, grid.domain_lo, grid.domain_hi
    elif isinstance(net, MlpNetwork):
        kind, act, vec = KINDS["mlp"], ACTIVATION_TAGS[net.activation], _mlp_vector(net)
        g, k, lo, hi = 0, 0, 0.0, 0.0
    else:
        raise TypeError(f"cannot serialize {type(net).__name__}")
    dims = net.dims
    head = struct.pack(f"<4sIBBI{len(dims)}I", MAGIC, FORMAT_VERSION, kind, act, len(dims), *dims)
    head += struct.pack("<IIddQ", g, k, lo, hi, vec.size)
    body = head + vec.astype("<f8").tobytes()
    return body + struct.pack("<I", zlib.crc32(body))


def model_from_bytes(raw: bytes, expected_kind: str | None = None):
    if len(raw) < 18 or raw[:4] != MAGIC:
        raise ModelFormatError("not a model file (bad magic bytes)")
    version, kind, act, n_dims = struct.unpack_from("<IBBI", raw, 4)
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"model format version {version}, expected {FORMAT_VERSION}")
    off = 14
    try:
        dims = list(struct.unpack_from(f"<{n_dims}I", raw, off))
        off += 4 * n_dims
        g, k, lo, hi, n_params = struct.unpack_from("<IIddQ", raw, off)
    except struct.error as exc:
        raise ModelFormatError("truncated model header") from exc
    off += struct.calcsize("<IIddQ")
    end = off + 8 * n_params
    if len(raw) != end + 4:
        raise ModelFormatError(f"truncated or oversized model file ({len(raw)} bytes, expected {end + 4})")
    (crc,) = struct.unpack_from("<I", raw, end)
    if zlib.crc32(raw[:end]) != crc:
        raise ModelFormatError("checksum mismatch; the model file is corrupted")
    names = {v: n for n, v in KINDS.items()}
    if kind not in names:
        raise ModelFormatError(f"unknown model kind tag {kind}")
    if expected_kind is not None and names[kind] != expected_kind:
        raise ModelFormatError(f"file holds a {names[kind]} model, expected {expected_kind}")
    vec = np.frombuffer(raw, dtype="<f8", count=n_params, offset=off).astype(np.float64)
    if kind == KINDS["kan"]:
        net = _kan_from_vector(dims, SplineGrid(lo, hi, g, k), vec)
    else:
        tags = {v: n for n, v in ACTIVATION_TAGS.items()}
        net = _mlp_from_vector(dims, tags.get(act, "relu"), vec)
    return net


def _kan_from_vector(dims, grid, vec):
    layers, pos = [], 0
    for d_in, d_out in zip(dims, dims[1:]):
        layer = KanLayer(d_in, d_out, grid)
        per_edge = grid.n_basis + 3
        n = d_in * d_out * per_edge
        edges = vec[pos : pos + n].reshape(d_in, d_out, per_edge)
        pos += n
        layer.omega_b[:] = edges[..., 0]
        layer.omega_s[:] = edges[..., 1]
        layer.shift[:] = edges[..., 2]
        layer.coeffs[:] = edges[..., 3:]
        layer.bias[:] = vec[pos : pos + d_out]
        pos += d_out
        layers.append(layer)
    if pos != vec.size:
        raise ModelFormatError("parameter count does not match the stored dims")
    return KanNetwork(layers)


def _mlp_from_vector(dims, activation, vec):
    weights, biases, pos = [], [], 0
    for d_in, d_out in zip(dims, dims[1:]):
        weights.append(vec[pos : pos + d_in * d_out].reshape(d_in, d_out).copy())
        pos += d_in * d_out
        biases.append(vec[pos : pos + d_out].copy())
        pos += d_out
    if pos != vec.size:
        raise ModelFormatError("parameter count does not match the stored dims")
    return MlpNetwork(weights, biases, activation)


def save_model(net, path) -> Path:
    path = Path(path)
    path.write_bytes(model_to_bytes(net))
    return path


def load_model(path, expected_kind: str | None = None):
    return model_from_bytes(Path(path).read_bytes(), expected_kind)
