"""Minimal dense/conv network core on numpy.

Everything is float64, forward/backward are pure functions over a flat
parameter vector, and caches are explicit, so optimizers, checkpoint
serialization and finite-difference gradient checks stay trivial.  No
autodiff, no hidden state.

Layer kinds:
    norm_time   per-channel layer norm over the time axis of a T x C window
    conv1d_time valid 1-D convolution along the time axis
    dense       fully connected (flattens whatever comes in)
    relu        elementwise
    softmax     row-wise, numerically stable
"""

from __future__ import annotations

import hashlib
import struct
import zlib
from dataclasses import dataclass, replace

import numpy as np

MAGIC = b"PHNN"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    t: int = 0          # window length (norm_time / conv1d_time input)
    c_in: int = 0
    c_out: int = 0
    k: int = 0          # kernel width along time
    n_in: int = 0
    n_out: int = 0
    eps: float = 0.0    # norm_time only
    init_scale: float = 1.0  # multiplier on the Xavier limit


def norm_time(t: int, c: int, eps: float = 0.1) -> LayerSpec:
    if t < 2:
        raise ValueError("norm_time needs a window of at least 2 ticks")
    if eps <= 0:
        raise ValueError("norm_time eps must be positive")
    return LayerSpec("norm_time", t=t, c_in=c, c_out=c, eps=eps)


def conv1d_time(t: int, c_in: int, c_out: int, k: int) -> LayerSpec:
    if not (1 <= k <= t):
        raise ValueError("kernel width must fit inside the window")
    return LayerSpec("conv1d_time", t=t, c_in=c_in, c_out=c_out, k=k)


def dense(n_in: int, n_out: int, init_scale: float = 1.0) -> LayerSpec:
    return LayerSpec("dense", n_in=n_in, n_out=n_out, init_scale=init_scale)


def relu(n: int) -> LayerSpec:
    return LayerSpec("relu", n_in=n, n_out=n)


def softmax(n: int) -> LayerSpec:
    return LayerSpec("softmax", n_in=n, n_out=n)


def layer_output_size(layer: LayerSpec) -> int:
    if layer.kind == "norm_time":
        return layer.t * layer.c_out
    if layer.kind == "conv1d_time":
        return (layer.t - layer.k + 1) * layer.c_out
    return layer.n_out


def validate_net(net: list[LayerSpec]) -> None:
    """Check that layer shapes chain; raises ValueError otherwise."""
    if not net:
        raise ValueError("empty net")
    prev = None
    for layer in net:
        if layer.kind == "norm_time":
            size = layer.t * layer.c_in
        elif layer.kind == "conv1d_time":
            size = layer.t * layer.c_in
        else:
            size = layer.n_in
        if prev is not None and prev != size:
            raise ValueError(f"layer {layer.kind}: expects {size} inputs, got {prev}")
        prev = layer_output_size(layer)


def layer_param_count(layer: LayerSpec) -> int:
    if layer.kind == "conv1d_time":
        return layer.c_out * layer.k * layer.c_in + layer.c_out
    if layer.kind == "dense":
        return layer.n_out * layer.n_in + layer.n_out
    return 0


def param_count(net: list[LayerSpec]) -> int:
    return sum(layer_param_count(l) for l in net)


def net_spec_hash(net: list[LayerSpec]) -> str:
    canon = ";".join(
        f"{l.kind},{l.t},{l.c_in},{l.c_out},{l.k},{l.n_in},{l.n_out},{l.eps!r}"
        for l in net
    )
    return hashlib.sha256(canon.encode()).hexdigest()


@dataclass
class ParamSet:
    """Flat parameter vector plus per-layer (offset, count) bookkeeping."""

    values: np.ndarray
    offsets: tuple[tuple[int, int], ...]
    spec_hash: str
    init_seed: int

    def copy(self) -> "ParamSet":
        return replace(self, values=self.values.copy())


def _layer_offsets(net: list[LayerSpec]) -> tuple[tuple[int, int], ...]:
    offs, pos = [], 0
    for layer in net:
        n = layer_param_count(layer)
        offs.append((pos, n))
        pos += n
    return tuple(offs)


def init_params(net: list[LayerSpec], seed: int) -> ParamSet:
    """Uniform +/- sqrt(6/(fan_in+fan_out)) weights (scaled per layer), zero biases."""
    validate_net(net)
    rng = np.random.Generator(np.random.PCG64(seed))
    values = np.zeros(param_count(net), dtype=np.float64)
    pos = 0
    for layer in net:
        if layer.kind == "conv1d_time":
            fan_in, fan_out = layer.k * layer.c_in, layer.k * layer.c_out
            nw = layer.c_out * layer.k * layer.c_in
            nb = layer.c_out
        elif layer.kind == "dense":
            fan_in, fan_out = layer.n_in, layer.n_out
            nw = layer.n_out * layer.n_in
            nb = layer.n_out
        else:
            continue
        limit = layer.init_scale * np.sqrt(6.0 / (fan_in + fan_out))
        values[pos:pos + nw] = rng.uniform(-limit, limit, nw)
        # biases stay zero
        pos += nw + nb
    return ParamSet(values, _layer_offsets(net), net_spec_hash(net), seed)


def _layer_params(layer: LayerSpec, params: ParamSet, idx: int):
    off, n = params.offsets[idx]
    chunk = params.values[off:off + n]
    if layer.kind == "conv1d_time":
        nw = layer.c_out * layer.k * layer.c_in
        return chunk[:nw].reshape(layer.c_out, layer.k, layer.c_in), chunk[nw:]
    if layer.kind == "dense":
        nw = layer.n_out * layer.n_in
        return chunk[:nw].reshape(layer.n_out, layer.n_in), chunk[nw:]
    return None, None


def layer_norm_time(window: np.ndarray, eps: float) -> np.ndarray:
    """(x - mean) / (eps + std) per channel, statistics over the time axis.

    Population std.  A constant channel comes out as exact zeros; a large
    eps keeps mostly-static noisy channels suppressed instead of blown up
    to unit scale.
    """
    x = np.asarray(window, dtype=np.float64)
    if x.shape[-2] < 2:
        raise ValueError("time window must have at least 2 ticks")
    if eps <= 0:
        raise ValueError("eps must be positive")
    mu = x.mean(axis=-2, keepdims=True)
    sd = x.std(axis=-2, keepdims=True)
    return (x - mu) / (eps + sd)


def _norm_time_backward(x: np.ndarray, eps: float, gout: np.ndarray) -> np.ndarray:
    # y_i = (x_i - mu) / d with d = eps + s, s the population std.
    # dL/dx_j = (g_j - mean(g))/d - (x_j - mu) * sum_i g_i (x_i - mu) / (T s d^2)
    t = x.shape[-2]
    mu = x.mean(axis=-2, keepdims=True)
    sd = x.std(axis=-2, keepdims=True)
    d = eps + sd
    xc = x - mu
    gc = gout - gout.mean(axis=-2, keepdims=True)
    dot = (gout * xc).sum(axis=-2, keepdims=True)
    # constant channel: xc == 0 makes the second term vanish regardless of sd
    return gc / d - xc * dot / (t * (sd + 1e-300) * d * d)


def forward(net: list[LayerSpec], params: ParamSet, x: np.ndarray):
    """Run the net; returns (output, cache) with cache usable by backward.

    Accepts a single sample (window or vector) or a batch with a leading
    N axis; the output keeps the same batchness.
    """
    x = np.asarray(x, dtype=np.float64)
    first = net[0]
    windowed = first.kind in ("norm_time", "conv1d_time")
    single = x.ndim == (2 if windowed else 1)
    if single:
        x = x[None]
    expect = (first.t, first.c_in) if windowed else (first.n_in,)
    if x.shape[1:] != expect:
        raise ValueError(f"input shape {x.shape[1:]} does not match net input {expect}")

    cache = {"single": single, "layers": []}
    for i, layer in enumerate(net):
        if layer.kind == "norm_time":
            cache["layers"].append(("norm_time", x))
            x = layer_norm_time(x, layer.eps)
        elif layer.kind == "conv1d_time":
            w, b = _layer_params(layer, params, i)
            cache["layers"].append(("conv1d_time", x))
            t_out = layer.t - layer.k + 1
            out = np.broadcast_to(b, (x.shape[0], t_out, layer.c_out)).copy()
            for d in range(layer.k):
                out += x[:, d:d + t_out, :] @ w[:, d, :].T
            x = out
        elif layer.kind == "dense":
            w, b = _layer_params(layer, params, i)
            flat = x.reshape(x.shape[0], -1)
            cache["layers"].append(("dense", (flat, x.shape)))
            x = flat @ w.T + b
        elif layer.kind == "relu":
            cache["layers"].append(("relu", x))
            x = np.maximum(x, 0.0)
        elif layer.kind == "softmax":
            z = x - x.max(axis=-1, keepdims=True)
            e = np.exp(z)
            p = e / e.sum(axis=-1, keepdims=True)
            cache["layers"].append(("softmax", p))
            x = p
        else:
            raise ValueError(f"unknown layer kind {layer.kind}")
    return (x[0] if single else x), cache


def backward(net: list[LayerSpec], params: ParamSet, cache, gout: np.ndarray,
             from_logits: bool = False):
    """Exact gradients for the loss whose output gradient is gout.

    Returns (flat parameter gradient, input gradient).  With from_logits
    the trailing softmax layer is skipped and gout is taken with respect
    to the pre-softmax logits (the numerically stable route for
    categorical losses).
    """
    g = np.asarray(gout, dtype=np.float64)
    if cache["single"]:
        g = g[None]
    grads = np.zeros_like(params.values)
    start = len(net) - 1
    if from_logits:
        if net[-1].kind != "softmax":
            raise ValueError("from_logits requires a softmax head")
        start -= 1
    for i in range(start, -1, -1):
        layer = net[i]
        kind, stored = cache["layers"][i]
        if kind != layer.kind:
            raise ValueError("cache does not match net spec")
        if layer.kind == "softmax":
            p = stored
            g = p * (g - (g * p).sum(axis=-1, keepdims=True))
        elif layer.kind == "relu":
            g = g * (stored > 0)
        elif layer.kind == "dense":
            flat, in_shape = stored
            off, _ = params.offsets[i]
            nw = layer.n_out * layer.n_in
            grads[off:off + nw] += (g.T @ flat).ravel()
            grads[off + nw:off + nw + layer.n_out] += g.sum(axis=0)
            w, _ = _layer_params(layer, params, i)
            g = (g @ w).reshape(in_shape)
        elif layer.kind == "conv1d_time":
            x = stored
            w, _ = _layer_params(layer, params, i)
            off, _ = params.offsets[i]
            t_out = layer.t - layer.k + 1
            gw = np.empty((layer.c_out, layer.k, layer.c_in))
            gx = np.zeros_like(x)
            for d in range(layer.k):
                gw[:, d, :] = np.einsum("ntf,ntc->fc", g, x[:, d:d + t_out, :])
                gx[:, d:d + t_out, :] += g @ w[:, d, :]
            nw = layer.c_out * layer.k * layer.c_in
            grads[off:off + nw] += gw.ravel()
            grads[off + nw:off + nw + layer.c_out] += g.sum(axis=(0, 1))
            g = gx
        elif layer.kind == "norm_time":
            g = _norm_time_backward(stored, layer.eps, g)
    return grads, (g[0] if cache["single"] else g)


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class OptimizerState:
    kind: str                    # "sgd" or "adam"
    t: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def make_optimizer(kind: str = "adam") -> OptimizerState:
    if kind not in ("sgd", "adam"):
        raise ValueError(f"unknown optimizer {kind}")
    return OptimizerState(kind=kind)


def update(params: ParamSet, grads: np.ndarray, state: OptimizerState,
           lr: float) -> tuple[ParamSet, OptimizerState]:
    """One gradient step; functional (returns fresh params and state)."""
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != params.values.shape:
        raise ValueError("gradient length does not match parameters")
    if not np.all(np.isfinite(grads)):
        raise ValueError("non-finite gradients")
    if state.kind == "sgd":
        return replace(params, values=params.values - lr * grads), state
    m = np.zeros_like(params.values) if state.m is None else state.m
    v = np.zeros_like(params.values) if state.v is None else state.v
    t = state.t + 1
    m = state.beta1 * m + (1 - state.beta1) * grads
    v = state.beta2 * v + (1 - state.beta2) * grads * grads
    mhat = m / (1 - state.beta1 ** t)
    vhat = v / (1 - state.beta2 ** t)
    new_values = params.values - lr * mhat / (np.sqrt(vhat) + state.eps)
    return replace(params, values=new_values), replace(state, t=t, m=m, v=v)


# ---------------------------------------------------------------------------
# checkpoint blob: MAGIC | version u32 | spec hash 32B | init_seed i64 |
#                  count u64 | values f64le... | crc32 u32


def serialize_params(params: ParamSet) -> bytes:
    body = (
        MAGIC
        + struct.pack("<I", FORMAT_VERSION)
        + bytes.fromhex(params.spec_hash)
        + struct.pack("<q", int(params.init_seed))
        + struct.pack("<Q", params.values.size)
        + np.asarray(params.values, dtype="<f8").tobytes()
    )
    return body + struct.pack("<I", zlib.crc32(body))


def deserialize_params(data: bytes, net: list[LayerSpec] | None = None) -> ParamSet:
    """Inverse of serialize_params; raises ValueError on any corruption."""
    if len(data) < 56 or data[:4] != MAGIC:
        raise ValueError("not a parameter blob (bad magic)")
    (crc,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(data[:-4]) != crc:
        raise ValueError("parameter blob checksum mismatch")
    (version,) = struct.unpack("<I", data[4:8])
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported parameter blob version {version}")
    spec_hash = data[8:40].hex()
    (init_seed,) = struct.unpack("<q", data[40:48])
    (count,) = struct.unpack("<Q", data[48:56])
    values = np.frombuffer(data[56:56 + 8 * count], dtype="<f8").astype(np.float64)
    if values.size != count:
        raise ValueError("parameter blob truncated")
    if net is not None:
        if net_spec_hash(net) != spec_hash:
            raise ValueError("parameter blob does not match the network spec")
        offsets = _layer_offsets(net)
        if param_count(net) != count:
            raise ValueError("parameter count does not match the network spec")
    else:
        offsets = ((0, int(count)),)
    return ParamSet(values, offsets, spec_hash, init_seed)
