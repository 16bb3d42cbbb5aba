"""Reverse-mode automatic differentiation over dense numpy arrays.

A `Tensor` wraps an ndarray and, when an operation involves at least one
tensor with `requires_grad`, records a backward closure linking it to its
parents. `backward(loss)` topologically sorts the recorded graph and
accumulates gradients into `.grad`, so a tensor used several times receives
the sum of all its downstream contributions.

Training runs in float32; tests and gradient checks use float64.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (forward values only)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _as_array(x, dtype=None):
    a = np.asarray(x)
    if a.dtype.kind in "iub":
        a = a.astype(np.float64)
    if dtype is not None:
        a = a.astype(dtype, copy=False)
    return a


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `g` down to `shape`, undoing numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


class Tensor:
    """Array node in a dynamically recorded autodiff graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = _as_array(data, dtype)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    # ---- bookkeeping ----

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _scalar_err()

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # ---- graph construction ----

    @staticmethod
    def _op(data, parents, backward_fn) -> "Tensor":
        out = Tensor(data)
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward_fn
        return out

    # ---- arithmetic ----

    def __add__(self, other):
        if isinstance(other, Tensor):
            a, b = self, other
            return Tensor._op(
                a.data + b.data,
                (a, b),
                lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
            )
        return Tensor._op(self.data + other, (self,), lambda g: (g,))

    __radd__ = __add__

    def __neg__(self):
        return Tensor._op(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other):
        if isinstance(other, Tensor):
            a, b = self, other
            return Tensor._op(
                a.data - b.data,
                (a, b),
                lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
            )
        return Tensor._op(self.data - other, (self,), lambda g: (g,))

    def __rsub__(self, other):
        return Tensor._op(other - self.data, (self,), lambda g: (-g,))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            a, b = self, other
            return Tensor._op(
                a.data * b.data,
                (a, b),
                lambda g: (
                    _unbroadcast(g * b.data, a.shape),
                    _unbroadcast(g * a.data, b.shape),
                ),
            )
        return Tensor._op(self.data * other, (self,), lambda g: (g * other,))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return self * other ** -1.0
        return self * (1.0 / other)

    def __pow__(self, exponent: float):
        # constant exponent only
        c = float(exponent)
        x = self.data

        def back(g):
            return (g * c * x ** (c - 1.0),)

        return Tensor._op(x ** c, (self,), back)

    def __matmul__(self, other):
        a, b = self, other
        if a.ndim < 2 or b.ndim < 2:
            raise ValueError("matmul operands must have at least 2 dimensions")

        def back(g):
            ga = _unbroadcast(np.matmul(g, b.data.swapaxes(-1, -2)), a.shape)
            gb = _unbroadcast(np.matmul(a.data.swapaxes(-1, -2), g), b.shape)
            return ga, gb

        return Tensor._op(np.matmul(a.data, b.data), (a, b), back)

    # ---- shape ----

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        return Tensor._op(
            self.data.reshape(shape), (self,), lambda g: (g.reshape(old),)
        )

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inv = tuple(np.argsort(axes))
        return Tensor._op(
            self.data.transpose(axes), (self,), lambda g: (g.transpose(inv),)
        )

    # ---- reductions ----

    def sum(self, axis=None, keepdims: bool = False):
        shape = self.shape

        def back(g):
            if axis is None:
                return (np.broadcast_to(g, shape).copy(),)
            gg = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(gg, shape).copy(),)

        return Tensor._op(self.data.sum(axis=axis, keepdims=keepdims), (self,), back)

    def mean(self, axis=None, keepdims: bool = False):
        if axis is None:
            n = self.data.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            n = 1
            for ax in axes:
                n *= self.shape[ax]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    # ---- elementwise nonlinearities ----

    def relu(self):
        mask = self.data > 0
        return Tensor._op(
            np.where(mask, self.data, 0.0), (self,), lambda g: (g * mask,)
        )

    def sigmoid(self):
        s = _sigmoid(self.data)
        return Tensor._op(s, (self,), lambda g: (g * s * (1.0 - s),))

    def exp(self):
        e = np.exp(self.data)
        return Tensor._op(e, (self,), lambda g: (g * e,))

    def log(self):
        x = self.data
        return Tensor._op(np.log(x), (self,), lambda g: (g / x,))

    def sqrt(self):
        r = np.sqrt(self.data)
        return Tensor._op(r, (self,), lambda g: (g * 0.5 / r,))


def _scalar_err():
    raise ValueError("item() requires a tensor with exactly one element")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax_lastdim(x: Tensor) -> Tensor:
    """Row-wise softmax over the last axis, shifted by the row max."""
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        dot = (g * s).sum(axis=-1, keepdims=True)
        return ((g - dot) * s,)

    return Tensor._op(s, (x,), back)


def take_rows(x: Tensor, idx) -> Tensor:
    """Gather rows along the first axis; gradients scatter-add back."""
    idx = np.asarray(idx, dtype=np.int64)
    shape = x.shape

    def back(g):
        gx = np.zeros(shape, dtype=g.dtype)
        np.add.at(gx, idx, g)
        return (gx,)

    return Tensor._op(x.data[idx], (x,), back)


def conv1d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1) -> Tensor:
    """Temporal cross-correlation with zero 'same' padding.

    x: (B, C_in, T), w: (C_out, C_in, K) with K odd, b: (C_out,).
    Output has shape (B, C_out, ceil(T / stride)); both sides of the time
    axis are padded by (K - 1) / 2 zeros before striding.
    """
    if x.ndim != 3 or w.ndim != 3:
        raise ValueError("conv1d expects x of shape (B, C_in, T) and w of shape (C_out, C_in, K)")
    B, c_in, T = x.shape
    c_out, wc_in, K = w.shape
    if wc_in != c_in:
        raise ValueError(f"conv1d channel mismatch: input has C_in={c_in}, weight expects {wc_in}")
    if K % 2 != 1:
        raise ValueError(f"conv1d kernel size must be odd, got {K}")
    if b.shape != (c_out,):
        raise ValueError(f"conv1d bias must have shape ({c_out},), got {b.shape}")
    if stride < 1:
        raise ValueError(f"conv1d stride must be >= 1, got {stride}")

    pad = (K - 1) // 2
    padded = np.zeros((B, c_in, T + 2 * pad), dtype=x.dtype)
    padded[:, :, pad : pad + T] = x.data
    windows = np.lib.stride_tricks.sliding_window_view(padded, K, axis=2)
    windows = windows[:, :, ::stride, :]  # (B, C_in, T_out, K)
    t_out = windows.shape[2]
    out = np.einsum("bitk,oik->bot", windows, w.data, optimize=True)
    out = out + b.data[None, :, None]

    def back(g):
        gw = np.einsum("bot,bitk->oik", g, windows, optimize=True)
        gb = g.sum(axis=(0, 2))
        contrib = np.einsum("bot,oik->bitk", g, w.data, optimize=True)
        gpad = np.zeros_like(padded)
        for k in range(K):
            gpad[:, :, k : k + t_out * stride : stride] += contrib[:, :, :, k]
        gx = gpad[:, :, pad : pad + T]
        return gx, gw, gb

    return Tensor._op(out, (x, w, b), back)


def lp_distance(x: Tensor, y: Tensor, p: float = 2.0) -> Tensor:
    """Minkowski distance over the last axis; gradient defined as 0 at x == y."""
    if p < 1:
        raise ValueError(f"lp_distance requires p >= 1, got {p}")
    diff = x.data - y.data
    absd = np.abs(diff)
    d = (absd ** p).sum(axis=-1) ** (1.0 / p)

    def back(g):
        denom = np.where(d > 0, d, 1.0) ** (p - 1.0)
        base = np.sign(diff) * absd ** (p - 1.0) / denom[..., None]
        base = np.where(d[..., None] > 0, base, 0.0)
        gx = g[..., None] * base
        return _unbroadcast(gx, x.shape), _unbroadcast(-gx, y.shape)

    return Tensor._op(d, (x, y), back)


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Affine map over the last axis: x @ w.T + b with w of shape (N_out, N_in)."""
    if x.shape[-1] != w.shape[1]:
        raise ValueError(f"linear dimension mismatch: input last axis {x.shape[-1]}, weight expects {w.shape[1]}")
    return x @ w.transpose(1, 0) + b


def mean_pool_time(x: Tensor) -> Tensor:
    """Average a (B, T, C) tensor over its time axis, yielding (B, C)."""
    if x.ndim != 3:
        raise ValueError("mean_pool_time expects a (B, T, C) tensor")
    if x.shape[1] < 1:
        raise ValueError("mean_pool_time requires at least one frame")
    return x.mean(axis=1)


def bce_with_logits(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Per-class sigmoid cross entropy in stable logit form, mean over the batch.

    `targets` must be one-hot rows; the loss sums over classes and averages
    over the batch dimension.
    """
    y = np.asarray(targets, dtype=logits.dtype)
    if y.shape != logits.shape:
        raise ValueError(f"targets shape {y.shape} does not match logits shape {logits.shape}")
    if not np.all((y == 0.0) | (y == 1.0)) or not np.allclose(y.sum(axis=-1), 1.0):
        raise ValueError("targets must be one-hot rows")
    z = logits.data
    B = z.shape[0] if z.ndim > 1 else 1
    per = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    loss = per.sum() / B

    def back(g):
        return ((_sigmoid(z) - y) * (g / B),)

    return Tensor._op(loss, (logits,), back)


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(node) into `.grad` for every reachable node."""
    if loss.data.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.shape}")

    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is None:
            continue
        grads = node._backward(node.grad)
        for p, g in zip(node._parents, grads):
            if g is None or not p.requires_grad:
                continue
            if p.grad is None:
                p.grad = np.zeros_like(p.data)
            p.grad += g


def gradient_check(fn, params, eps: float = 1e-5) -> float:
    """Compare analytic gradients of `fn()` against central differences.

    `fn` must rebuild a scalar loss from `params` on every call. Returns the
    worst relative error max|analytic - numeric| / max(1, |numeric|) over all
    parameter entries.
    """
    for p in params:
        p.grad = None
    backward(fn())

    worst = 0.0
    for p in params:
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        numeric = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        nflat = numeric.reshape(-1)
        with no_grad():
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                hi = float(fn().data)
                flat[i] = orig - eps
                lo = float(fn().data)
                flat[i] = orig
                nflat[i] = (hi - lo) / (2.0 * eps)
        rel = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))
        if rel.size:
            worst = max(worst, float(rel.max()))
    return worst
