"""Span loss and the Adam optimizer with linear warmup/decay."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from .diffmath import ParamStore, Tensor
from .diffmath import ops
from .errors import ShapeError, TrainingError
from .heads import SpanLogits

BETA1 = 0.9
BETA2 = 0.999
EPSILON = 1e-6


def span_loss(logits: SpanLogits, start_gold: int, end_gold: int) -> Tensor:
    """Mean of the start and end cross-entropies.

    Unanswerable examples use (0, 0), pointing both positions at the leading
    special token.
    """
    L = logits.start_logits.shape[0]
    for name, idx in (("start", start_gold), ("end", end_gold)):
        if not 0 <= idx < L:
            raise ShapeError(f"{name} index {idx} out of range for length {L}")
    ce_start = ops.softmax_cross_entropy(logits.start_logits, start_gold)
    ce_end = ops.softmax_cross_entropy(logits.end_logits, end_gold)
    return ops.scale(ops.add(ce_start, ce_end), 0.5)


def lr_schedule(step: int, total_steps: int, warmup_fraction: float, base_lr: float) -> float:
    """Linear 0 -> base_lr over the warmup, then linear base_lr -> 0.

    total_steps=0 disables the schedule and returns base_lr for every step
    (used by tests and open-ended runs).
    """
    if total_steps <= 0:
        return base_lr
    step = min(max(step, 0), total_steps)
    warmup_steps = int(warmup_fraction * total_steps)
    if step < warmup_steps:
        return base_lr * step / warmup_steps
    if total_steps == warmup_steps:
        return base_lr if step < total_steps else 0.0
    return base_lr * (total_steps - step) / (total_steps - warmup_steps)


@dataclass
class AdamState:
    """Per-parameter moments plus the schedule the optimizer reads from."""

    base_lr: float = 3e-4
    warmup_fraction: float = 0.1
    total_steps: int = 0
    weight_decay: float = 0.0
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def current_lr(self) -> float:
        return lr_schedule(self.step, self.total_steps, self.warmup_fraction, self.base_lr)


def _decayable(name: str) -> bool:
    return not (name.endswith(".b") or name.endswith(".bias"))


def adam_update(params: ParamStore, state: AdamState) -> float:
    """One Adam step over the accumulated gradients; returns the lr used.

    The step counter advances before the schedule lookup, so the first update
    already sits one tick into the warmup ramp instead of multiplying by the
    schedule's zero at step 0. Non-finite gradients abort before any
    parameter is touched. Optional decoupled weight decay skips biases.
    """
    for name, t in params.items():
        g = t.grad
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient in parameter {name!r}")

    state.step += 1
    lr = state.current_lr()
    t = state.step
    bc1 = 1.0 - BETA1 ** t
    bc2 = 1.0 - BETA2 ** t

    for name, p in params.items():
        g = p.grad
        if g is None:
            continue
        g64 = g.astype(np.float64, copy=False)
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros(p.shape, dtype=np.float64)
            v = np.zeros(p.shape, dtype=np.float64)
            state.m[name] = m
            state.v[name] = v
        m *= BETA1
        m += (1.0 - BETA1) * g64
        v *= BETA2
        v += (1.0 - BETA2) * np.square(g64)
        update = (m / bc1) / (np.sqrt(v / bc2) + EPSILON)
        if state.weight_decay > 0.0 and _decayable(name):
            update = update + state.weight_decay * p.data.astype(np.float64, copy=False)
        p.data = (p.data.astype(np.float64, copy=False) - lr * update).astype(p.data.dtype)
    return lr
