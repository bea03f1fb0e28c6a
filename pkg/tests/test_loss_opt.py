"""Span loss closed forms, Adam hand values, schedule endpoints."""

import math

import numpy as np
import pytest

from spanhead.diffmath import ParamStore, Tensor, ops
from spanhead.errors import ShapeError, TrainingError
from spanhead.heads import SpanLogits
from spanhead.loss_opt import AdamState, adam_update, lr_schedule, span_loss


def _uniform_logits(L):
    return SpanLogits(
        start_logits=Tensor(np.zeros(L, dtype=np.float64), requires_grad=True),
        end_logits=Tensor(np.zeros(L, dtype=np.float64), requires_grad=True),
    )


class TestSpanLoss:
    def test_uniform_logits_give_log_length(self):
        for L in (2, 4, 9, 100):
            loss = span_loss(_uniform_logits(L), 0, L - 1)
            assert abs(loss.data - math.log(L)) < 1e-6

    def test_composition_matches_components(self):
        rng = np.random.default_rng(0)
        s = Tensor(rng.standard_normal(7))
        e = Tensor(rng.standard_normal(7))
        loss = span_loss(SpanLogits(s, e), 2, 5)
        parts = 0.5 * (ops.softmax_cross_entropy(s, 2).data
                       + ops.softmax_cross_entropy(e, 5).data)
        assert abs(loss.data - parts) < 1e-12

    def test_confident_correct_prediction_drives_loss_down(self):
        s = np.zeros(6)
        e = np.zeros(6)
        s[1] = 30.0
        e[3] = 30.0
        loss = span_loss(SpanLogits(Tensor(s), Tensor(e)), 1, 3)
        assert loss.data < 1e-8

    def test_positions_validated(self):
        with pytest.raises(ShapeError):
            span_loss(_uniform_logits(4), 0, 4)
        with pytest.raises(ShapeError):
            span_loss(_uniform_logits(4), -1, 2)


def _single_param_store(value=1.0):
    store = ParamStore()
    t = store.add("p.w", np.array([value], dtype=np.float32))
    return store, t


class TestAdam:
    def test_hand_computed_first_step(self):
        # m=0.1g, v=0.001g^2, mhat=g, vhat=g^2, update=lr*g/(|g|+eps).
        store, t = _single_param_store(1.0)
        t.grad = np.array([1.0], dtype=np.float32)
        state = AdamState(base_lr=0.1, total_steps=0)
        adam_update(store, state)
        assert abs(t.data[0] - 0.9000) < 1e-3

    def test_zero_gradient_moves_nothing(self):
        store, t = _single_param_store(1.0)
        t.grad = np.zeros(1, dtype=np.float32)
        state = AdamState(base_lr=0.1, total_steps=0)
        adam_update(store, state)
        assert abs(t.data[0] - 1.0) < 0.1 * 1e-3

    def test_step_size_invariant_to_gradient_scale(self):
        # With a constant gradient, mhat/sqrt(vhat) -> sign(g): the trajectory
        # is (nearly) independent of |g|.
        outs = []
        for g in (1e-3, 1.0, 1e3):
            store, t = _single_param_store(0.0)
            state = AdamState(base_lr=0.01, total_steps=0)
            for _ in range(200):
                t.grad = np.array([g], dtype=np.float32)
                adam_update(store, state)
            outs.append(float(t.data[0]))
        ref = outs[1]
        for o in outs:
            assert abs(o - ref) / abs(ref) < 0.01

    def test_same_inputs_same_trajectory(self):
        def run():
            store, t = _single_param_store(2.0)
            state = AdamState(base_lr=0.05, total_steps=0)
            vals = []
            for k in range(10):
                t.grad = np.array([0.5 * (k + 1)], dtype=np.float32)
                adam_update(store, state)
                vals.append(float(t.data[0]))
            return vals

        assert run() == run()

    def test_weight_decay_skips_biases(self):
        store = ParamStore()
        w = store.add("layer.w", np.array([1.0], dtype=np.float32))
        b = store.add("layer.b", np.array([1.0], dtype=np.float32))
        w.grad = np.zeros(1, dtype=np.float32)
        b.grad = np.zeros(1, dtype=np.float32)
        state = AdamState(base_lr=0.1, total_steps=0, weight_decay=0.1)
        adam_update(store, state)
        assert w.data[0] < 1.0
        assert b.data[0] == pytest.approx(1.0, abs=1e-7)

    def test_nan_gradient_aborts_with_parameter_name(self):
        store, t = _single_param_store(1.0)
        t.grad = np.array([np.nan], dtype=np.float32)
        state = AdamState(base_lr=0.1, total_steps=0)
        with pytest.raises(TrainingError, match="p.w"):
            adam_update(store, state)

    def test_returns_current_lr(self):
        store, t = _single_param_store(1.0)
        t.grad = np.ones(1, dtype=np.float32)
        state = AdamState(base_lr=0.2, warmup_fraction=0.1, total_steps=100)
        lr = adam_update(store, state)
        assert lr == pytest.approx(lr_schedule(1, 100, 0.1, 0.2))
        assert state.step == 1


class TestSchedule:
    def test_endpoints_exact(self):
        base, total, frac = 3e-4, 1000, 0.1
        assert lr_schedule(0, total, frac, base) == 0.0
        assert lr_schedule(100, total, frac, base) == base
        assert lr_schedule(total, total, frac, base) == 0.0

    def test_linear_on_both_sides(self):
        base, total, frac = 1.0, 1000, 0.1
        assert lr_schedule(50, total, frac, base) == pytest.approx(0.5)
        assert lr_schedule(550, total, frac, base) == pytest.approx(0.5)

    def test_monotone_up_then_down(self):
        base, total, frac = 2e-3, 400, 0.25
        vals = [lr_schedule(s, total, frac, base) for s in range(total + 1)]
        peak = int(frac * total)
        assert vals[:peak + 1] == sorted(vals[:peak + 1])
        assert vals[peak:] == sorted(vals[peak:], reverse=True)
        assert max(vals) == base

    def test_no_total_means_constant(self):
        assert lr_schedule(123, 0, 0.1, 5e-4) == 5e-4

    def test_zero_warmup_starts_at_base(self):
        assert lr_schedule(1, 100, 0.0, 1e-3) < 1e-3
        assert lr_schedule(0, 100, 0.0, 1e-3) == 1e-3
