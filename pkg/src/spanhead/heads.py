"""Span-prediction heads over frozen per-token embeddings.

Four architectures map an (L, H) embedded sequence to start/end logits:

* fc       — per-token affine H -> 2.
* cnn      — parallel same-padding 1-D convolutions of several widths,
             ReLU, channel concat, per-token affine -> 2.
* ctx-cnn  — a shared generator network first reads the whole sequence and
             emits a convolution filter specific to that sequence; the
             generated filter is then convolved over the same sequence.
* lstm     — unidirectional LSTM over the valid tokens, per-state affine -> 2.

All heads emit logits for every padded position and mask positions at or
beyond valid_len to exactly -1e4 so a downstream softmax ignores them.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple

import numpy as np

from .diffmath import ParamStore, Tensor, glorot_uniform
from .diffmath import ops
from .errors import ConfigError, ShapeError

VARIANTS = ("fc", "cnn", "ctx-cnn", "lstm")
MASK_VALUE = -1e4


@dataclass(frozen=True)
class HeadConfig:
    variant: str = "fc"
    hidden_size: int = 768
    kernel_widths: Tuple[int, ...] = (3, 5, 7)
    filters_per_kernel: int = 64
    lstm_hidden: int = 256
    context_out_channels: int = 16
    generator_width: int = 5
    applied_width: int = 5
    dropout_keep_prob: float = 0.9

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        for name in ("hidden_size", "filters_per_kernel", "lstm_hidden",
                     "context_out_channels", "generator_width", "applied_width"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {v!r}")
        if self.variant in ("cnn", "ctx-cnn"):
            if not self.kernel_widths:
                raise ConfigError("kernel_widths must be non-empty for convolutional variants")
        for w in self.kernel_widths:
            if not isinstance(w, int) or w < 1:
                raise ConfigError(f"kernel_widths entries must be integers >= 1, got {w!r}")
        if not 0.0 < self.dropout_keep_prob <= 1.0:
            raise ConfigError(f"dropout_keep_prob must be in (0, 1], got {self.dropout_keep_prob}")

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "hidden_size": self.hidden_size,
            "kernel_widths": list(self.kernel_widths),
            "filters_per_kernel": self.filters_per_kernel,
            "lstm_hidden": self.lstm_hidden,
            "context_out_channels": self.context_out_channels,
            "generator_width": self.generator_width,
            "applied_width": self.applied_width,
            "dropout_keep_prob": self.dropout_keep_prob,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HeadConfig":
        try:
            cfg = cls(
                variant=d["variant"],
                hidden_size=int(d["hidden_size"]),
                kernel_widths=tuple(int(w) for w in d["kernel_widths"]),
                filters_per_kernel=int(d["filters_per_kernel"]),
                lstm_hidden=int(d["lstm_hidden"]),
                context_out_channels=int(d["context_out_channels"]),
                generator_width=int(d["generator_width"]),
                applied_width=int(d["applied_width"]),
                dropout_keep_prob=float(d["dropout_keep_prob"]),
            )
        except KeyError as e:
            raise ConfigError(f"head config missing field {e.args[0]!r}") from None
        cfg.validate()
        return cfg

    def digest(self) -> str:
        """sha256 of the canonical JSON form; pins checkpoints to a config."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class SpanLogits(NamedTuple):
    start_logits: Tensor
    end_logits: Tensor


class HeadModel:
    """Base: owns a config + ParamStore, produces SpanLogits per sequence."""

    def __init__(self, config: HeadConfig, store: ParamStore) -> None:
        self.config = config
        self.store = store

    def span_logits(self, x: Tensor, valid_len: int,
                    rng: Optional[np.random.Generator] = None) -> SpanLogits:
        raise NotImplementedError

    def _check_input(self, x: Tensor, valid_len: int) -> None:
        if x.ndim != 2 or x.shape[1] != self.config.hidden_size:
            raise ShapeError(
                f"expected (L, {self.config.hidden_size}) embeddings, got {x.shape}"
            )
        if not 0 < valid_len <= x.shape[0]:
            raise ShapeError(f"valid_len {valid_len} out of range for {x.shape[0]} positions")

    def _maybe_dropout(self, x: Tensor, rng: Optional[np.random.Generator]) -> Tensor:
        if rng is None:
            return x
        return ops.dropout(x, self.config.dropout_keep_prob, rng)

    @staticmethod
    def _finish(per_pos: Tensor, valid_len: int) -> SpanLogits:
        masked = ops.mask_rows(per_pos, valid_len, MASK_VALUE)
        return SpanLogits(ops.column(masked, 0), ops.column(masked, 1))


class FullyConnectedHead(HeadModel):
    """Per-token affine H -> 2. Parameter count: 2H + 2."""

    def span_logits(self, x, valid_len, rng=None):
        self._check_input(x, valid_len)
        x = self._maybe_dropout(x, rng)
        per_pos = ops.matmul_affine(x, self.store["out.w"], self.store["out.b"])
        return self._finish(per_pos, valid_len)


class BasicCnnHead(HeadModel):
    """Parallel conv branches, one per kernel width.

    Parameter count: sum over widths w of (w·H·F + F), plus the final affine
    (F·n_widths)·2 + 2.
    """

    def span_logits(self, x, valid_len, rng=None):
        self._check_input(x, valid_len)
        x = self._maybe_dropout(x, rng)
        branches = [
            ops.relu(ops.conv1d(x, self.store[f"conv{w}.kernel"], self.store[f"conv{w}.bias"]))
            for w in self.config.kernel_widths
        ]
        feats = branches[0] if len(branches) == 1 else ops.concat(branches, axis=1)
        per_pos = ops.matmul_affine(feats, self.store["out.w"], self.store["out.b"])
        return self._finish(per_pos, valid_len)


class ContextCnnHead(HeadModel):
    """Convolution with filters generated from the input sequence itself.

    Stage 1: a shared generator convolution (width w_g) maps x to an
    (L, C·w_a·H) feature map; max over positions pools it to one vector,
    reshaped into C filters of shape (w_a, H). The generator weights are
    shared across all sequences, yet the pooled filter depends on the whole
    sequence, so every input gets its own convolution filter.

    Stage 2: the generated filters convolve over the same x (same padding)
    into (L, C), then ReLU and a per-token affine C -> 2. Both stages sit in
    one graph, so generator weights train through the generated filters.

    Parameter count with M = C·w_a·H: w_g·H·M + M (generator) + C (applied
    bias) + 2C + 2 (final affine).
    """

    def _generate(self, x: Tensor) -> Tensor:
        cfg = self.config
        stage1 = ops.conv1d(x, self.store["gen.kernel"], self.store["gen.bias"])
        pooled = ops.max_over_rows(stage1)
        by_channel = ops.reshape(pooled, (cfg.context_out_channels, cfg.applied_width, cfg.hidden_size))
        return ops.transpose(by_channel, (1, 2, 0))

    def generated_filters(self, x: Tensor) -> np.ndarray:
        """The (w_a, H, C) filter this sequence induces, as a plain array."""
        self._check_input(x, x.shape[0])
        return self._generate(x).data.copy()

    def span_logits(self, x, valid_len, rng=None):
        self._check_input(x, valid_len)
        x = self._maybe_dropout(x, rng)
        filt = self._generate(x)
        applied = ops.relu(ops.conv1d(x, filt, self.store["apply.bias"]))
        per_pos = ops.matmul_affine(applied, self.store["out.w"], self.store["out.b"])
        return self._finish(per_pos, valid_len)


class LstmHead(HeadModel):
    """Left-to-right LSTM over valid tokens, per-state affine D -> 2.

    Parameter count: 4·((H+D)·D + D) for the cell plus 2D + 2 for the affine.
    Padded positions never enter the recurrence; their logits are the mask
    value directly.
    """

    def _gates(self) -> ops.LstmGates:
        s = self.store
        return ops.LstmGates(
            s["gate_input.w"], s["gate_input.b"],
            s["gate_forget.w"], s["gate_forget.b"],
            s["gate_cell.w"], s["gate_cell.b"],
            s["gate_output.w"], s["gate_output.b"],
        )

    def span_logits(self, x, valid_len, rng=None):
        self._check_input(x, valid_len)
        x = self._maybe_dropout(x, rng)
        d = self.config.lstm_hidden
        gates = self._gates()
        h = Tensor(np.zeros(d, dtype=x.dtype))
        c = Tensor(np.zeros(d, dtype=x.dtype))
        out_rows = []
        for t in range(valid_len):
            h, c = ops.lstm_cell(ops.row(x, t), h, c, gates)
            out_rows.append(ops.matmul_affine(h, self.store["out.w"], self.store["out.b"]))
        per_pos = ops.pad_rows(ops.stack_rows(out_rows), x.shape[0], MASK_VALUE)
        return SpanLogits(ops.column(per_pos, 0), ops.column(per_pos, 1))


def expected_param_count(config: HeadConfig) -> int:
    """Closed-form parameter count per variant (mirrors the docstrings)."""
    h = config.hidden_size
    if config.variant == "fc":
        return 2 * h + 2
    if config.variant == "cnn":
        f = config.filters_per_kernel
        conv = sum(w * h * f + f for w in config.kernel_widths)
        return conv + (f * len(config.kernel_widths)) * 2 + 2
    if config.variant == "ctx-cnn":
        c = config.context_out_channels
        m = c * config.applied_width * h
        return config.generator_width * h * m + m + c + 2 * c + 2
    if config.variant == "lstm":
        d = config.lstm_hidden
        return 4 * ((h + d) * d + d) + 2 * d + 2
    raise ConfigError(f"unknown variant {config.variant!r}")


def build_head(config: HeadConfig, seed: int) -> Tuple[HeadModel, ParamStore]:
    """Construct a head with Glorot-uniform weights drawn from `seed`.

    Parameter creation order is fixed per variant, so a given (config, seed)
    always yields bit-identical values.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    store = ParamStore()
    h = config.hidden_size

    def affine(prefix: str, n_in: int, n_out: int) -> None:
        store.add(f"{prefix}.w", glorot_uniform(rng, (n_in, n_out), n_in, n_out))
        store.add(f"{prefix}.b", np.zeros(n_out, dtype=np.float32))

    if config.variant == "fc":
        affine("out", h, 2)
        return FullyConnectedHead(config, store), store

    if config.variant == "cnn":
        f = config.filters_per_kernel
        for w in config.kernel_widths:
            store.add(f"conv{w}.kernel", glorot_uniform(rng, (w, h, f), w * h, f))
            store.add(f"conv{w}.bias", np.zeros(f, dtype=np.float32))
        affine("out", f * len(config.kernel_widths), 2)
        return BasicCnnHead(config, store), store

    if config.variant == "ctx-cnn":
        c = config.context_out_channels
        m = c * config.applied_width * h
        store.add("gen.kernel", glorot_uniform(rng, (config.generator_width, h, m),
                                               config.generator_width * h, m))
        store.add("gen.bias", np.zeros(m, dtype=np.float32))
        store.add("apply.bias", np.zeros(c, dtype=np.float32))
        affine("out", c, 2)
        return ContextCnnHead(config, store), store

    if config.variant == "lstm":
        d = config.lstm_hidden
        for gate in ("gate_input", "gate_forget", "gate_cell", "gate_output"):
            store.add(f"{gate}.w", glorot_uniform(rng, (h + d, d), h + d, d))
            # Forget bias starts at 1 so early training does not erase state.
            init = np.ones(d, dtype=np.float32) if gate == "gate_forget" else np.zeros(d, dtype=np.float32)
            store.add(f"{gate}.b", init)
        affine("out", d, 2)
        return LstmHead(config, store), store

    raise ConfigError(f"unknown variant {config.variant!r}")
