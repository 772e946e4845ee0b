"""Layers, parameter store, Adam, and checkpoint IO on top of the tape engine.

Parameters live in a flat name -> Tensor dict; layers are pure functions
over that dict plus a name prefix, so the whole model state serializes to a
JSON manifest + one little-endian binary blob.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

INIT_STD = 0.02


class Params:
    """Flat named parameter store with truncated-normal/zeros initialization."""

    def __init__(self, rng: np.random.Generator | None = None):
        self.rng = rng or np.random.default_rng(0)
        self.tensors: dict[str, Tensor] = {}

    def weight(self, name: str, shape: tuple) -> Tensor:
        if name not in self.tensors:
            # truncated normal: redraw outside 2 std
            w = self.rng.normal(0.0, INIT_STD, size=shape)
            bad = np.abs(w) > 2 * INIT_STD
            while bad.any():
                w[bad] = self.rng.normal(0.0, INIT_STD, size=int(bad.sum()))
                bad = np.abs(w) > 2 * INIT_STD
            self.tensors[name] = Tensor(w, requires_grad=True)
        return self.tensors[name]

    def zeros(self, name: str, shape: tuple) -> Tensor:
        if name not in self.tensors:
            self.tensors[name] = Tensor(np.zeros(shape), requires_grad=True)
        return self.tensors[name]

    def ones(self, name: str, shape: tuple) -> Tensor:
        if name not in self.tensors:
            self.tensors[name] = Tensor(np.ones(shape), requires_grad=True)
        return self.tensors[name]

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.grad = None

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(t.data)) for t in self.tensors.values())

    def copy_values(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.tensors.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for k, v in values.items():
            if k in self.tensors:
                self.tensors[k].data = np.array(v, dtype=np.float64)
            else:
                self.tensors[k] = Tensor(np.array(v, dtype=np.float64),
                                         requires_grad=True)


# -- layers ----------------------------------------------------------------

def linear(params: Params, prefix: str, x: Tensor, d_in: int, d_out: int) -> Tensor:
    w = params.weight(f"{prefix}.w", (d_in, d_out))
    b = params.zeros(f"{prefix}.b", (d_out,))
    return ad.add(ad.matmul(x, w), b)


def layer_norm(params: Params, prefix: str, x: Tensor, d: int) -> Tensor:
    gamma = params.ones(f"{prefix}.gamma", (d,))
    beta = params.zeros(f"{prefix}.beta", (d,))
    return ad.layernorm(x, gamma, beta, axis=-1)


def multi_head_self_attention(params: Params, prefix: str, x: Tensor,
                              d_model: int, n_heads: int) -> Tensor:
    """Pre-norm transformer block: MHSA + residual, then FFN + residual.

    x has shape [..., T, d_model]; attention runs over the T axis
    independently for every leading batch index.
    """
    if d_model % n_heads != 0:
        raise ValueError("d_model must be divisible by n_heads")
    d_head = d_model // n_heads
    h = layer_norm(params, f"{prefix}.ln1", x, d_model)
    q = linear(params, f"{prefix}.q", h, d_model, d_model)
    k = linear(params, f"{prefix}.k", h, d_model, d_model)
    v = linear(params, f"{prefix}.v", h, d_model, d_model)

    lead = x.shape[:-2]
    t_len = x.shape[-2]

    def split_heads(z: Tensor) -> Tensor:
        z = ad.reshape(z, lead + (t_len, n_heads, d_head))
        axes = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
        return ad.transpose(z, axes)  # [..., heads, T, d_head]

    qh, kh, vh = split_heads(q), split_heads(k), split_heads(v)
    kt = ad.transpose(kh, tuple(range(kh.ndim - 2)) + (kh.ndim - 1, kh.ndim - 2))
    scores = ad.mul(ad.matmul(qh, kt), ad._const(1.0 / np.sqrt(d_head)))
    attn = ad.softmax(scores, axis=-1)
    ctx = ad.matmul(attn, vh)  # [..., heads, T, d_head]
    axes = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
    ctx = ad.transpose(ctx, axes)
    ctx = ad.reshape(ctx, lead + (t_len, d_model))
    out = ad.add(x, linear(params, f"{prefix}.o", ctx, d_model, d_model))

    h2 = layer_norm(params, f"{prefix}.ln2", out, d_model)
    ff = linear(params, f"{prefix}.ff1", h2, d_model, 2 * d_model)
    ff = ad.gelu(ff)
    ff = linear(params, f"{prefix}.ff2", ff, 2 * d_model, d_model)
    return ad.add(out, ff)


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)
    out = a.data[idx]

    def da(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        return full
    return ad._unary(a, out, da)


def conv1d_same(params: Params, prefix: str, x: Tensor, d_in: int, d_out: int,
                ksize: int = 3) -> Tensor:
    """Temporal convolution over the second-to-last axis with zero padding.

    x: [..., T, d_in] -> [..., T, d_out], realized as a sum of per-tap
    shifted linear maps so the tape stays small.
    """
    t_len = x.shape[-2]
    half = ksize // 2
    b = params.zeros(f"{prefix}.b", (d_out,))
    out = None
    for tap in range(ksize):
        w = params.weight(f"{prefix}.w{tap}", (d_in, d_out))
        shift = tap - half
        if shift == 0:
            xs = x
        elif shift > 0:
            body = slice_axis(x, x.ndim - 2, shift, t_len)
            pad = Tensor(np.zeros(x.shape[:-2] + (shift, d_in)))
            xs = ad.concat([body, pad], axis=x.ndim - 2)
        else:
            body = slice_axis(x, x.ndim - 2, 0, t_len + shift)
            pad = Tensor(np.zeros(x.shape[:-2] + (-shift, d_in)))
            xs = ad.concat([pad, body], axis=x.ndim - 2)
        term = ad.matmul(xs, w)
        out = term if out is None else ad.add(out, term)
    return ad.add(out, b)


def sinusoidal_embedding(positions: np.ndarray, dim: int,
                         max_period: float = 10000.0) -> np.ndarray:
    """Fixed sin/cos embedding of arbitrary real positions, shape [..., dim]."""
    positions = np.asarray(positions, dtype=np.float64)
    half = dim // 2
    freqs = np.exp(-np.log(max_period) * np.arange(half) / max(half - 1, 1))
    angles = positions[..., None] * freqs
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=-1)


# -- optimizer -------------------------------------------------------------

class Adam:
    def __init__(self, params: Params, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, p in self.params.tensors.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            m = self.m.setdefault(name, np.zeros_like(p.data))
            v = self.v.setdefault(name, np.zeros_like(p.data))
            m[...] = b1 * m + (1 - b1) * g
            v[...] = b2 * v + (1 - b2) * g * g
            m_hat = m / (1 - b1 ** self.t)
            v_hat = v / (1 - b2 ** self.t)
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        if not self.params.all_finite():
            raise FloatingPointError("non-finite parameter after Adam step")


def adam_step_reference(w: float, g: float, state: dict, lr: float = 1e-3,
                        beta1: float = 0.9, beta2: float = 0.999,
                        eps: float = 1e-8) -> float:
    """Scalar Adam update used as a test oracle; state carries m, v, t."""
    state["t"] = state.get("t", 0) + 1
    state["m"] = beta1 * state.get("m", 0.0) + (1 - beta1) * g
    state["v"] = beta2 * state.get("v", 0.0) + (1 - beta2) * g * g
    m_hat = state["m"] / (1 - beta1 ** state["t"])
    v_hat = state["v"] / (1 - beta2 ** state["t"])
    return w - lr * m_hat / (np.sqrt(v_hat) + eps)


# -- checkpoints -----------------------------------------------------------

def save_checkpoint(path: str | Path, params: Params,
                    meta: dict | None = None) -> None:
    """JSON manifest (shape table + meta) next to a flat little-endian blob."""
    path = Path(path)
    names = sorted(params.tensors)
    manifest = {"meta": meta or {}, "tensors": {}}
    offset = 0
    blob = bytearray()
    for name in names:
        arr = params.tensors[name].data
        raw = arr.astype("<f8").tobytes()
        manifest["tensors"][name] = {"shape": list(arr.shape), "offset": offset,
                                     "nbytes": len(raw)}
        blob.extend(raw)
        offset += len(raw)
    path.with_suffix(".json").write_text(json.dumps(manifest, sort_keys=True))
    path.with_suffix(".bin").write_bytes(bytes(blob))


def load_checkpoint(path: str | Path, params: Params | None = None
                    ) -> tuple[Params, dict]:
    path = Path(path)
    manifest = json.loads(path.with_suffix(".json").read_text())
    blob = path.with_suffix(".bin").read_bytes()
    params = params or Params()
    for name, info in manifest["tensors"].items():
        raw = blob[info["offset"]:info["offset"] + info["nbytes"]]
        arr = np.frombuffer(raw, dtype="<f8").reshape(info["shape"]).copy()
        if name in params.tensors:
            params.tensors[name].data = arr
        else:
            params.tensors[name] = Tensor(arr, requires_grad=True)
    return params, manifest.get("meta", {})
