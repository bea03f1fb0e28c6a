"""Differentiable primitives: dense, convolutional, recurrent, softmax.

Every op validates shapes and dtypes up front, computes the forward value
eagerly, and attaches a closure with the exact analytic backward rule.
Gradients only flow into parents with requires_grad set, so constant inputs
(e.g. frozen embeddings) cost nothing on the way back.
"""

from __future__ import annotations

from typing import NamedTuple, Optional, Sequence

import numpy as np

from ..errors import ShapeError
from . import backend
from .tensor import Tensor, as_tensor


def _needs(*tensors: Tensor) -> bool:
    return any(t.requires_grad for t in tensors)


def _same_dtype(*tensors: Tensor):
    dt = tensors[0].dtype
    for t in tensors[1:]:
        if t.dtype != dt:
            raise ShapeError(f"mixed dtypes in op: {dt} vs {t.dtype}")
    return dt


def matmul_affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b for x of shape (L, H) or (H,), w (H, K), b (K,)."""
    _same_dtype(x, w, b)
    if w.ndim != 2 or b.ndim != 1:
        raise ShapeError(f"affine needs 2-d weights and 1-d bias, got {w.shape} and {b.shape}")
    if x.ndim not in (1, 2) or x.shape[-1] != w.shape[0]:
        raise ShapeError(f"affine shape mismatch: x {x.shape} vs w {w.shape}")
    if w.shape[1] != b.shape[0]:
        raise ShapeError(f"affine shape mismatch: w {w.shape} vs b {b.shape}")

    out_data = x.data @ w.data + b.data
    out = Tensor(out_data, requires_grad=_needs(x, w, b), _parents=(x, w, b))

    def _bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(g @ w.data.T)
        if w.requires_grad:
            if x.ndim == 1:
                w.accumulate_grad(np.outer(x.data, g))
            else:
                w.accumulate_grad(x.data.T @ g)
        if b.requires_grad:
            b.accumulate_grad(g if g.ndim == 1 else g.sum(axis=0))

    out._backward = _bwd
    return out


def conv1d(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """Same-padding 1-D cross-correlation over a (L, H) sequence.

    kernel has shape (w, H, F); zero padding is floor((w-1)/2) rows on the
    left and ceil((w-1)/2) on the right, so the output keeps length L.
    """
    _same_dtype(x, kernel, bias)
    if x.ndim != 2 or kernel.ndim != 3 or bias.ndim != 1:
        raise ShapeError(
            f"conv1d needs x (L,H), kernel (w,H,F), bias (F,); got {x.shape}, {kernel.shape}, {bias.shape}"
        )
    w = kernel.shape[0]
    if w < 1:
        raise ShapeError(f"kernel width must be >= 1, got {w}")
    if kernel.shape[1] != x.shape[1]:
        raise ShapeError(f"conv1d channel mismatch: x {x.shape} vs kernel {kernel.shape}")
    if bias.shape[0] != kernel.shape[2]:
        raise ShapeError(f"conv1d bias mismatch: kernel {kernel.shape} vs bias {bias.shape}")

    L = x.shape[0]
    lpad = (w - 1) // 2
    rpad = (w - 1) - lpad
    xp = np.pad(x.data, ((lpad, rpad), (0, 0)))
    out_data = backend.conv1d_forward(xp, kernel.data, bias.data)
    out = Tensor(out_data, requires_grad=_needs(x, kernel, bias), _parents=(x, kernel, bias))

    def _bwd(g: np.ndarray) -> None:
        g = np.ascontiguousarray(g)
        dxp, dk, db = backend.conv1d_backward(
            xp, kernel.data, g, x.requires_grad, kernel.requires_grad
        )
        if x.requires_grad:
            x.accumulate_grad(np.ascontiguousarray(dxp[lpad : lpad + L]))
        if kernel.requires_grad:
            kernel.accumulate_grad(dk)
        if bias.requires_grad:
            bias.accumulate_grad(db)

    out._backward = _bwd
    return out


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0), requires_grad=x.requires_grad, _parents=(x,))

    def _bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(g * (x.data > 0))

    out._backward = _bwd
    return out


def sigmoid(x: Tensor) -> Tensor:
    # Stable in both tails: exp() is only ever taken of a non-positive value.
    d = x.data
    s = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))), np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
    s = s.astype(d.dtype)
    out = Tensor(s, requires_grad=x.requires_grad, _parents=(x,))

    def _bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(g * s * (1.0 - s))

    out._backward = _bwd
    return out


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)
    out = Tensor(t, requires_grad=x.requires_grad, _parents=(x,))

    def _bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(g * (1.0 - t * t))

    out._backward = _bwd
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_dtype(a, b)
    if a.shape != b.shape:
        raise ShapeError(f"add shape mismatch: {a.shape} vs {b.shape}")
    out = Tensor(a.data + b.data, requires_grad=_needs(a, b), _parents=(a, b))

    def _bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(g)
        if b.requires_grad:
            b.accumulate_grad(g)

    out._backward = _bwd
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_dtype(a, b)
    if a.shape != b.shape:
        raise ShapeError(f"mul shape mismatch: {a.shape} vs {b.shape}")
    out = Tensor(a.data * b.data, requires_grad=_needs(a, b), _parents=(a, b))

    def _bwd(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(g * b.data)
        if b.requires_grad:
            b.accumulate_grad(g * a.data)

    out._backward = _bwd
    return out


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    out = Tensor(x.data * np.asarray(c, dtype=x.dtype), requires_grad=x.requires_grad, _parents=(x,))

    def _bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(g * np.asarray(c, dtype=x.dtype))

    out._backward = _bwd
    return out


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not parts:
        raise ShapeError("concat needs at least one tensor")
    _same_dtype(*parts)
    out_data = np.concatenate([p.data for p in parts], axis=axis)
    out = Tensor(out_data, requires_grad=_needs(*parts), _parents=tuple(parts))
    ax = axis if axis >= 0 else out_data.ndim + axis
    sizes = [p.shape[ax] for p in parts]

    def _bwd(g: np.ndarray) -> None:
        offset = 0
        for p, n in zip(parts, sizes):
            if p.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[ax] = slice(offset, offset + n)
                p.accumulate_grad(np.ascontiguousarray(g[tuple(sl)]))
            offset += n

    out._backward = _bwd
    return out


def row(x: Tensor, i: int) -> Tensor:
    """Select row i of a (L, H) tensor as a 1-d tensor."""
    if x.ndim != 2 or not (0 <= i < x.shape[0]):
        raise ShapeError(f"row {i} out of range for shape {x.shape}")
    out = Tensor(x.data[i].copy(), requires_grad=x.requires_grad, _parents=(x,))

    def _bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            # In-place row add; a full zeros_like per selected row would make
            # LSTM unrolls quadratic in memory traffic.
            if x.grad is None:
                x.grad = np.zeros_like(x.data)
            x.grad[i] += g

    out._backward = _bwd
    return out


def stack_rows(rows: Sequence[Tensor]) -> Tensor:
    """Stack 1-d tensors of equal length into a (n, H) tensor."""
    if not rows:
        raise ShapeError("stack_rows needs at least one row")
    _same_dtype(*rows)
    out = Tensor(np.stack([r.data for r in rows]), requires_grad=_needs(*rows), _parents=tuple(rows))

    def _bwd(g: np.ndarray) -> None:
        for i, r in enumerate(rows):
            if r.requires_grad:
                r.accumulate_grad(g[i].copy())

    out._backward = _bwd
    return out


def pad_rows(x: Tensor, total_rows: int, fill: float) -> Tensor:
    """Extend a (n, K) tensor to (total_rows, K), new rows set to `fill`."""
    n = x.shape[0]
    if x.ndim != 2 or total_rows < n:
        raise ShapeError(f"cannot pad shape {x.shape} to {total_rows} rows")
    out_data = np.full((total_rows, x.shape[1]), fill, dtype=x.dtype)
    out_data[:n] = x.data
    out = Tensor(out_data, requires_grad=x.requires_grad, _parents=(x,))

    def _bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(np.ascontiguousarray(g[:n]))

    out._backward = _bwd
    return out


def mask_rows(x: Tensor, valid_len: int, fill: float = -1e4) -> Tensor:
    """Replace rows at index >= valid_len with `fill`; gradient stops there."""
    if x.ndim != 2 or not (0 <= valid_len <= x.shape[0]):
        raise ShapeError(f"valid_len {valid_len} out of range for shape {x.shape}")
    out_data = x.data.copy()
    out_data[valid_len:] = fill
    out = Tensor(out_data, requires_grad=x.requires_grad, _parents=(x,))

    def _bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            gg = g.copy()
            gg[valid_len:] = 0
            x.accumulate_grad(gg)

    out._backward = _bwd
    return out


def column(x: Tensor, j: int) -> Tensor:
    """Select column j of a (L, K) tensor as a 1-d tensor."""
    if x.ndim != 2 or not (0 <= j < x.shape[1]):
        raise ShapeError(f"column {j} out of range for shape {x.shape}")
    out = Tensor(x.data[:, j].copy(), requires_grad=x.requires_grad, _parents=(x,))

    def _bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            if x.grad is None:
                x.grad = np.zeros_like(x.data)
            x.grad[:, j] += g

    out._backward = _bwd
    return out


def max_over_rows(x: Tensor) -> Tensor:
    """Column-wise max over rows of (L, M) -> (M,); ties go to the first row."""
    if x.ndim != 2:
        raise ShapeError(f"max_over_rows needs a 2-d tensor, got {x.shape}")
    idx = np.argmax(x.data, axis=0)
    cols = np.arange(x.shape[1])
    out = Tensor(x.data[idx, cols].copy(), requires_grad=x.requires_grad, _parents=(x,))

    def _bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            full = np.zeros_like(x.data)
            full[idx, cols] = g
            x.accumulate_grad(full)

    out._backward = _bwd
    return out


def reshape(x: Tensor, shape) -> Tensor:
    out = Tensor(x.data.reshape(shape).copy(), requires_grad=x.requires_grad, _parents=(x,))

    def _bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(g.reshape(x.shape))

    out._backward = _bwd
    return out


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    out = Tensor(np.ascontiguousarray(x.data.transpose(axes)), requires_grad=x.requires_grad, _parents=(x,))

    def _bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(np.ascontiguousarray(g.transpose(inverse)))

    out._backward = _bwd
    return out


def dropout(x: Tensor, keep_prob: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: E[dropout(x)] == x for any keep_prob in (0, 1]."""
    if not 0.0 < keep_prob <= 1.0:
        raise ShapeError(f"keep_prob must be in (0, 1], got {keep_prob}")
    if keep_prob == 1.0:
        return x
    mask = (rng.random(x.shape) < keep_prob).astype(x.dtype) / np.asarray(keep_prob, dtype=x.dtype)
    out = Tensor(x.data * mask, requires_grad=x.requires_grad, _parents=(x,))

    def _bwd(g: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(g * mask)

    out._backward = _bwd
    return out


def mean_scalars(parts: Sequence[Tensor]) -> Tensor:
    """Mean of scalar tensors (deterministic left-to-right summation)."""
    if not parts:
        raise ShapeError("mean_scalars needs at least one scalar")
    for p in parts:
        if p.size != 1:
            raise ShapeError(f"mean_scalars needs scalars, got shape {p.shape}")
    _same_dtype(*parts)
    total = np.zeros((), dtype=parts[0].dtype)
    for p in parts:
        total = total + p.data.reshape(())
    n = len(parts)
    out = Tensor(total / n, requires_grad=_needs(*parts), _parents=tuple(parts))

    def _bwd(g: np.ndarray) -> None:
        share = g / n
        for p in parts:
            if p.requires_grad:
                p.accumulate_grad(share.reshape(p.shape))

    out._backward = _bwd
    return out


def softmax_cross_entropy(logits: Tensor, target_index: int) -> Tensor:
    """-log softmax(logits)[target]; gradient is softmax(logits) - onehot.

    Log-sum-exp uses max subtraction, so arbitrarily large finite logits
    neither overflow nor produce NaN.
    """
    if logits.ndim != 1:
        raise ShapeError(f"softmax_cross_entropy needs a 1-d logit vector, got {logits.shape}")
    n = logits.shape[0]
    target_index = int(target_index)
    if not 0 <= target_index < n:
        raise ShapeError(f"target index {target_index} out of range for {n} logits")

    z = logits.data - logits.data.max()
    e = np.exp(z)
    s = e.sum()
    p = e / s
    loss = np.asarray(np.log(s) - z[target_index], dtype=logits.dtype)
    out = Tensor(loss, requires_grad=logits.requires_grad, _parents=(logits,))

    def _bwd(g: np.ndarray) -> None:
        if logits.requires_grad:
            d = p.copy()
            d[target_index] -= 1.0
            logits.accumulate_grad(d * g.reshape(()))

    out._backward = _bwd
    return out


class LstmGates(NamedTuple):
    """The four gate parameter pairs over concatenated [x_t; h_prev]."""

    w_input: Tensor
    b_input: Tensor
    w_forget: Tensor
    b_forget: Tensor
    w_cell: Tensor
    b_cell: Tensor
    w_output: Tensor
    b_output: Tensor


def lstm_cell(x_t: Tensor, h_prev: Tensor, c_prev: Tensor, gates: LstmGates):
    """One LSTM step: returns (h_t, c_t).

    f, i, o are sigmoid gates and g the tanh candidate, all computed from
    [x_t; h_prev]; c_t = f*c_prev + i*g and h_t = o*tanh(c_t).
    """
    z = concat([x_t, h_prev], axis=0)
    i = sigmoid(matmul_affine(z, gates.w_input, gates.b_input))
    f = sigmoid(matmul_affine(z, gates.w_forget, gates.b_forget))
    g = tanh(matmul_affine(z, gates.w_cell, gates.b_cell))
    o = sigmoid(matmul_affine(z, gates.w_output, gates.b_output))
    c_t = add(mul(f, c_prev), mul(i, g))
    h_t = mul(o, tanh(c_t))
    return h_t, c_t


__all__ = [
    "matmul_affine", "conv1d", "relu", "sigmoid", "tanh", "add", "mul",
    "scale", "concat", "row", "stack_rows", "pad_rows", "mask_rows",
    "column", "max_over_rows", "reshape", "transpose", "dropout",
    "mean_scalars", "softmax_cross_entropy", "LstmGates", "lstm_cell",
    "as_tensor",
]
