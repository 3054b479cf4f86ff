"""Small fully connected networks with analytic backpropagation.

Rectifier hidden layers; the output is either linear (critics) or squashed
into an action box through tanh (actors).  Everything is float64 numpy and
deterministic given the init seed, so training runs are bit-reproducible.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

_MAGIC = b"TLNN"
_VERSION = 1


@dataclass
class Mlp:
    sizes: Tuple[int, ...]
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    out_mode: str = "linear"  # 'linear' | 'box'
    out_low: Optional[np.ndarray] = None
    out_high: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.out_mode not in ("linear", "box"):
            raise ValueError("out_mode must be 'linear' or 'box'")
        if self.out_mode == "box" and (self.out_low is None or self.out_high is None):
            raise ValueError("box output needs bounds")


def init_mlp(
    sizes: Sequence[int],
    rng: np.random.Generator,
    out_mode: str = "linear",
    out_low: Optional[np.ndarray] = None,
    out_high: Optional[np.ndarray] = None,
    final_scale: float = 1.0,
) -> Mlp:
    """Uniform +-1/sqrt(fan_in) init; the final layer is scaled by final_scale."""
    weights, biases = [], []
    for k in range(len(sizes) - 1):
        bound = 1.0 / np.sqrt(sizes[k])
        w = rng.uniform(-bound, bound, size=(sizes[k], sizes[k + 1]))
        b = rng.uniform(-bound, bound, size=sizes[k + 1])
        if k == len(sizes) - 2:
            w *= final_scale
            b *= final_scale
        weights.append(w)
        biases.append(b)
    return Mlp(tuple(sizes), weights, biases, out_mode, out_low, out_high)


def clone(net: Mlp) -> Mlp:
    return Mlp(
        net.sizes,
        [w.copy() for w in net.weights],
        [b.copy() for b in net.biases],
        net.out_mode,
        None if net.out_low is None else net.out_low.copy(),
        None if net.out_high is None else net.out_high.copy(),
    )


def _as_batch(x: np.ndarray) -> Tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return x[None, :], True
    return x, False


def forward(net: Mlp, x: np.ndarray) -> np.ndarray:
    out, _ = forward_cache(net, x)
    return out


def forward_cache(net: Mlp, x: np.ndarray):
    """Evaluate the network and keep the per-layer values backward() needs."""
    h, squeeze = _as_batch(x)
    if h.shape[1] != net.sizes[0]:
        raise ValueError(f"input dim {h.shape[1]} != {net.sizes[0]}")
    acts = [h]
    pre: List[np.ndarray] = []
    n_layers = len(net.weights)
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = acts[-1] @ w + b
        pre.append(z)
        if k < n_layers - 1:
            acts.append(np.maximum(z, 0.0))
        else:
            if net.out_mode == "box":
                center = (net.out_high + net.out_low) / 2.0
                half = (net.out_high - net.out_low) / 2.0
                acts.append(center + half * np.tanh(z))
            else:
                acts.append(z)
    out = acts[-1]
    cache = (acts, pre, squeeze)
    return (out[0] if squeeze else out), cache


def backward(net: Mlp, cache, output_grad: np.ndarray):
    """Exact gradients of sum(output * output_grad) in weights, biases, input."""
    acts, pre, squeeze = cache
    g, _ = _as_batch(output_grad)
    n_layers = len(net.weights)
    if net.out_mode == "box":
        half = (net.out_high - net.out_low) / 2.0
        g = g * half * (1.0 - np.tanh(pre[-1]) ** 2)
    grads_w: List[np.ndarray] = [None] * n_layers
    grads_b: List[np.ndarray] = [None] * n_layers
    for k in range(n_layers - 1, -1, -1):
        grads_w[k] = acts[k].T @ g
        grads_b[k] = g.sum(axis=0)
        g = g @ net.weights[k].T
        if k > 0:
            g = g * (pre[k - 1] > 0.0)
    grad_input = g[0] if squeeze else g
    return grads_w, grads_b, grad_input


@dataclass
class OptState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m_w: List[np.ndarray] = field(default_factory=list)
    v_w: List[np.ndarray] = field(default_factory=list)
    m_b: List[np.ndarray] = field(default_factory=list)
    v_b: List[np.ndarray] = field(default_factory=list)


def make_opt(net: Mlp, lr: float) -> OptState:
    opt = OptState(lr=lr)
    opt.m_w = [np.zeros_like(w) for w in net.weights]
    opt.v_w = [np.zeros_like(w) for w in net.weights]
    opt.m_b = [np.zeros_like(b) for b in net.biases]
    opt.v_b = [np.zeros_like(b) for b in net.biases]
    return opt


def opt_step(net: Mlp, grads_w, grads_b, opt: OptState) -> Mlp:
    """Adam update, in place; descends the supplied gradients."""
    opt.step_count += 1
    t = opt.step_count
    corr1 = 1.0 - opt.beta1**t
    corr2 = 1.0 - opt.beta2**t
    for k in range(len(net.weights)):
        for param, grad, m, v in (
            (net.weights[k], grads_w[k], opt.m_w[k], opt.v_w[k]),
            (net.biases[k], grads_b[k], opt.m_b[k], opt.v_b[k]),
        ):
            m *= opt.beta1
            m += (1.0 - opt.beta1) * grad
            v *= opt.beta2
            v += (1.0 - opt.beta2) * grad**2
            param -= opt.lr * (m / corr1) / (np.sqrt(v / corr2) + opt.eps)
    return net


def soft_update(target: Mlp, online: Mlp, tau: float) -> Mlp:
    """target <- tau * online + (1 - tau) * target, elementwise, in place."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    for tw, ow in zip(target.weights, online.weights):
        tw *= 1.0 - tau
        tw += tau * ow
    for tb, ob in zip(target.biases, online.biases):
        tb *= 1.0 - tau
        tb += tau * ob
    return target


# ---------------------------------------------------------------------------
# Serialization: magic, version, out mode, layer count, sizes, optional box
# bounds, then little-endian float64 weight/bias arrays in layer order.


def serialize_mlp(net: Mlp) -> bytes:
    parts = [_MAGIC, struct.pack("<HB", _VERSION, 1 if net.out_mode == "box" else 0)]
    parts.append(struct.pack("<I", len(net.sizes)))
    parts.append(struct.pack(f"<{len(net.sizes)}I", *net.sizes))
    if net.out_mode == "box":
        parts.append(np.asarray(net.out_low, dtype="<f8").tobytes())
        parts.append(np.asarray(net.out_high, dtype="<f8").tobytes())
    for w, b in zip(net.weights, net.biases):
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    return b"".join(parts)


def deserialize_mlp(blob: bytes) -> Mlp:
    if blob[:4] != _MAGIC:
        raise ValueError("not a network blob")
    version, box = struct.unpack_from("<HB", blob, 4)
    if version != _VERSION:
        raise ValueError(f"unsupported network blob version {version}")
    (n_sizes,) = struct.unpack_from("<I", blob, 7)
    sizes = struct.unpack_from(f"<{n_sizes}I", blob, 11)
    off = 11 + 4 * n_sizes
    out_low = out_high = None
    if box:
        out_dim = sizes[-1]
        out_low = np.frombuffer(blob, dtype="<f8", count=out_dim, offset=off).copy()
        off += 8 * out_dim
        out_high = np.frombuffer(blob, dtype="<f8", count=out_dim, offset=off).copy()
        off += 8 * out_dim
    weights, biases = [], []
    for k in range(n_sizes - 1):
        n_in, n_out = sizes[k], sizes[k + 1]
        w = np.frombuffer(blob, dtype="<f8", count=n_in * n_out, offset=off).copy()
        off += 8 * n_in * n_out
        b = np.frombuffer(blob, dtype="<f8", count=n_out, offset=off).copy()
        off += 8 * n_out
        weights.append(w.reshape(n_in, n_out))
        biases.append(b)
    return Mlp(tuple(sizes), weights, biases, "box" if box else "linear", out_low, out_high)
