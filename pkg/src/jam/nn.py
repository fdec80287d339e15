"""Parameterized layers on top of the autodiff tape.

Covers the model's needs: linear maps, MLPs, layer norm, embeddings,
multi-head attention, an LSTM cell, and post-norm transformer blocks.
Initialization is Xavier-uniform for weight matrices and zeros for biases,
drawn from a caller-supplied numpy Generator so builds are reproducible.
"""

from __future__ import annotations

import logging

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

logger = logging.getLogger(__name__)


def xavier(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


class Module:
    """Minimal container: children and parameters are discovered by attribute walk."""

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for key, value in self.__dict__.items():
            name = f"{prefix}{key}" if not prefix else f"{prefix}.{key}"
            if isinstance(value, Tensor) and value.requires_grad:
                out[name] = value
            elif isinstance(value, Module):
                out.update(value.named_parameters(name))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.update(item.named_parameters(f"{name}.{i}"))
        return out

    def n_params(self) -> int:
        return int(sum(p.size for p in self.named_parameters().values()))


class Linear(Module):
    def __init__(self, rng, d_in: int, d_out: int, bias: bool = True):
        self.w = ad.parameter(xavier(rng, d_in, d_out))
        self.b = ad.parameter(np.zeros(d_out)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = ad.matmul(x, self.w)
        return y + self.b if self.b is not None else y


class MLP(Module):
    """Feed-forward stack with GELU between layers (smooth for grad checks)."""

    def __init__(self, rng, dims: list[int]):
        self.layers = [Linear(rng, a, b) for a, b in zip(dims[:-1], dims[1:])]

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i + 1 < len(self.layers):
                x = ad.gelu(x)
        return x


class LayerNorm(Module):
    def __init__(self, dim: int):
        self.gain = ad.parameter(np.ones(dim))
        self.bias = ad.parameter(np.zeros(dim))

    def __call__(self, x: Tensor) -> Tensor:
        return ad.layer_norm(x, self.gain, self.bias)


class Embedding(Module):
    def __init__(self, rng, count: int, dim: int):
        self.table = ad.parameter(xavier(rng, count, dim))

    def __call__(self, idx) -> Tensor:
        return self.table[np.asarray(idx, dtype=np.intp)]


def multi_head_attention(q: Tensor, k: Tensor, v: Tensor, mask, heads: int,
                         w_out: Tensor | None = None) -> Tensor:
    """Scaled dot-product attention over already-projected q/k/v.

    q: [..., Tq, D], k/v: [..., Tk, D]; D must divide by `heads`.
    `mask` is boolean over keys, broadcastable to [..., Tq, Tk]; masked keys
    get exactly zero weight. A query whose keys are all masked yields a zero
    context vector (logged once per call). If `w_out` [D, D] is given the
    concatenated heads are output-projected.
    """
    d = q.shape[-1]
    if d % heads != 0:
        raise ValueError(f"feature dim {d} not divisible by heads={heads}")
    dk = d // heads
    tq, tk = q.shape[-2], k.shape[-2]

    def split(t, tt):
        parts = t.reshape(*t.shape[:-1], heads, dk)
        return parts.swapaxes(-3, -2)  # [..., heads, T, dk]

    qh, kh, vh = split(q, tq), split(k, tk), split(v, tk)
    scores = ad.matmul(qh, kh.swapaxes(-1, -2)) * (1.0 / np.sqrt(dk))  # [..., heads, Tq, Tk]

    key_mask = None
    if mask is not None:
        key_mask = np.asarray(mask, dtype=bool)
        if key_mask.shape[-1] != tk:
            raise ValueError(f"mask last axis {key_mask.shape[-1]} != key count {tk}")
        if key_mask.ndim != q.ndim:  # key validity [..., Tk]: add the Tq axis
            key_mask = key_mask[..., None, :]
        # add the heads axis so batch dims align with scores [..., H, Tq, Tk]
        key_mask = np.expand_dims(key_mask, -3)
        if not key_mask.any(axis=-1).all():
            logger.warning("attention: some queries have every key masked; emitting zero context")
    attn = ad.masked_softmax(scores, key_mask, axis=-1)
    ctx = ad.matmul(attn, vh)  # [..., heads, Tq, dk]
    ctx = ctx.swapaxes(-3, -2).reshape(*q.shape[:-1], d)
    if w_out is not None:
        ctx = ad.matmul(ctx, w_out)
    return ctx


class MultiHeadAttention(Module):
    def __init__(self, rng, dim: int, heads: int):
        self.heads = heads
        self.wq = Linear(rng, dim, dim)
        self.wk = Linear(rng, dim, dim)
        self.wv = Linear(rng, dim, dim)
        self.wo = Linear(rng, dim, dim)

    def __call__(self, q: Tensor, k: Tensor, v: Tensor, mask=None) -> Tensor:
        ctx = multi_head_attention(self.wq(q), self.wk(k), self.wv(v), mask, self.heads)
        return self.wo(ctx)


def lstm_step(x: Tensor, h: Tensor, c: Tensor, w_ih: Tensor, w_hh: Tensor, b: Tensor):
    """One gated update. Gate layout along the last axis: input, forget, cell, output."""
    hid = h.shape[-1]
    z = ad.matmul(x, w_ih) + ad.matmul(h, w_hh) + b
    i = ad.sigmoid(z[..., 0 * hid:1 * hid])
    f = ad.sigmoid(z[..., 1 * hid:2 * hid])
    g = ad.tanh(z[..., 2 * hid:3 * hid])
    o = ad.sigmoid(z[..., 3 * hid:4 * hid])
    c_next = f * c + i * g
    h_next = o * ad.tanh(c_next)
    return h_next, c_next


class LSTM(Module):
    """Single-layer LSTM scanned over time with per-step validity gating."""

    def __init__(self, rng, d_in: int, d_hidden: int):
        self.d_hidden = d_hidden
        self.w_ih = ad.parameter(xavier(rng, d_in, 4 * d_hidden, (d_in, 4 * d_hidden)))
        self.w_hh = ad.parameter(xavier(rng, d_hidden, 4 * d_hidden, (d_hidden, 4 * d_hidden)))
        self.b = ad.parameter(np.zeros(4 * d_hidden))

    def __call__(self, xs: Tensor, valid: np.ndarray | None = None) -> Tensor:
        """xs: [B, T, d_in]; valid: [B, T] in {0,1}. Invalid steps keep the previous state.

        Returns the final hidden state [B, d_hidden].
        """
        bsz, steps, _ = xs.shape
        h = ad.tensor(np.zeros((bsz, self.d_hidden)))
        c = ad.tensor(np.zeros((bsz, self.d_hidden)))
        for t in range(steps):
            h_new, c_new = lstm_step(xs[:, t], h, c, self.w_ih, self.w_hh, self.b)
            if valid is None:
                h, c = h_new, c_new
            else:
                gate = valid[:, t][:, None]
                h = h_new * gate + h * (1.0 - gate)
                c = c_new * gate + c * (1.0 - gate)
        return h


class SelfAttentionBlock(Module):
    """Post-norm transformer block: attn -> add&norm -> ffn -> add&norm."""

    def __init__(self, rng, dim: int, heads: int, ffn_mult: int = 4):
        self.attn = MultiHeadAttention(rng, dim, heads)
        self.norm1 = LayerNorm(dim)
        self.norm2 = LayerNorm(dim)
        self.ffn = MLP(rng, [dim, ffn_mult * dim, dim])

    def __call__(self, x: Tensor, mask=None) -> Tensor:
        attended = self.attn(x, x, x, mask)
        x = self.norm1(x + attended)
        return self.norm2(x + self.ffn(x))


class CrossAttentionBlock(Module):
    def __init__(self, rng, dim: int, heads: int, ffn_mult: int = 4):
        self.attn = MultiHeadAttention(rng, dim, heads)
        self.norm1 = LayerNorm(dim)
        self.norm2 = LayerNorm(dim)
        self.ffn = MLP(rng, [dim, ffn_mult * dim, dim])

    def __call__(self, q: Tensor, kv: Tensor, mask=None) -> Tensor:
        attended = self.attn(q, kv, kv, mask)
        x = self.norm1(q + attended)
        return self.norm2(x + self.ffn(x))
