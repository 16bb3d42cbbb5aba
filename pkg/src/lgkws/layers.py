"""Network layers composed from autograd primitives."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autograd import Tensor, linear, softmax_lastdim


@dataclass
class BatchNormState:
    """Running statistics for one batchnorm layer.

    `count` tracks how many batches have been absorbed; eval mode refuses to
    run before the first update unless the stats were seeded explicitly.
    """

    mean: np.ndarray
    var: np.ndarray
    count: int = 0

    @classmethod
    def fresh(cls, channels: int, dtype=np.float32) -> "BatchNormState":
        return cls(
            mean=np.zeros(channels, dtype=dtype),
            var=np.ones(channels, dtype=dtype),
            count=0,
        )


def batchnorm1d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    state: BatchNormState,
    train: bool,
    eps: float = 1e-5,
    momentum: float = 0.1,
) -> Tensor:
    """Per-channel normalization of a (B, C, T) tensor.

    Train mode normalizes with batch statistics pooled over batch and time
    (biased variance) and folds them into the running stats; eval mode
    normalizes with the running stats and touches nothing.
    """
    if x.ndim != 3:
        raise ValueError("batchnorm1d expects a (B, C, T) tensor")
    B, C, T = x.shape
    if gamma.shape != (C,) or beta.shape != (C,):
        raise ValueError(f"batchnorm1d affine params must have shape ({C},)")

    gam = gamma.reshape(1, C, 1)
    bet = beta.reshape(1, C, 1)

    if train:
        n = B * T
        if n < 2:
            raise ValueError("batchnorm1d train mode needs at least 2 values per channel")
        m = x.mean(axis=(0, 2), keepdims=True)
        centered = x - m
        var = (centered * centered).mean(axis=(0, 2), keepdims=True)
        out = centered * (var + eps) ** -0.5 * gam + bet

        batch_mean = m.data.reshape(C)
        batch_var = var.data.reshape(C) * (n / (n - 1))  # unbiased for the running estimate
        state.mean = ((1.0 - momentum) * state.mean + momentum * batch_mean).astype(state.mean.dtype)
        state.var = ((1.0 - momentum) * state.var + momentum * batch_var).astype(state.var.dtype)
        state.count += 1
        return out

    if state.count == 0:
        raise RuntimeError("batchnorm1d eval mode called before running stats were initialized")
    rm = Tensor(state.mean.reshape(1, C, 1).astype(x.dtype))
    rv = Tensor(state.var.reshape(1, C, 1).astype(x.dtype))
    return (x - rm) * (rv + eps) ** -0.5 * gam + bet


def positional_encoding(t_len: int, channels: int, dtype=np.float64) -> np.ndarray:
    """Sinusoidal position table of shape (t_len, channels).

    Even columns carry sin(t / 10000^(2i/C)), odd columns the matching cos;
    an odd channel count is computed on C + 1 columns and cropped.
    """
    c_eff = channels + (channels % 2)
    pe = np.zeros((t_len, c_eff), dtype=np.float64)
    positions = np.arange(t_len, dtype=np.float64)[:, None]
    i = np.arange(c_eff // 2, dtype=np.float64)[None, :]
    angle = positions / np.power(10000.0, 2.0 * i / channels)
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)
    return pe[:, :channels].astype(dtype)


def self_attention(
    x: Tensor,
    wq: Tensor,
    bq: Tensor,
    wk: Tensor,
    bk: Tensor,
    wv: Tensor,
    bv: Tensor,
    wo: Tensor,
    bo: Tensor,
    num_heads: int = 1,
) -> Tensor:
    """Scaled dot-product self-attention over a (B, T, C) tensor.

    All four projections are C x C with bias. With one head the attention
    matrix per sample is softmax(Q K^T / sqrt(C)); more heads split the
    channel axis evenly and scale by the per-head width instead.
    """
    if x.ndim != 3:
        raise ValueError("self_attention expects a (B, T, C) tensor")
    B, T, C = x.shape
    if C % num_heads != 0:
        raise ValueError(f"channel count {C} is not divisible by num_heads={num_heads}")

    q = linear(x, wq, bq)
    k = linear(x, wk, bk)
    v = linear(x, wv, bv)

    if num_heads == 1:
        logits = (q @ k.transpose(0, 2, 1)) * (1.0 / math.sqrt(C))
        attn = softmax_lastdim(logits)
        mixed = attn @ v
    else:
        hd = C // num_heads
        def split(t: Tensor) -> Tensor:
            return t.reshape(B, T, num_heads, hd).transpose(0, 2, 1, 3)
        qh, kh, vh = split(q), split(k), split(v)
        logits = (qh @ kh.transpose(0, 1, 3, 2)) * (1.0 / math.sqrt(hd))
        attn = softmax_lastdim(logits)
        mixed = (attn @ vh).transpose(0, 2, 1, 3).reshape(B, T, C)

    return linear(mixed, wo, bo)
