import math

import numpy as np
import pytest
import torch
import torch.nn as nn

from vidtext.masking import mlm_corrupt, random_mask
from vidtext.model import ModelConfig, build_model
from vidtext.objectives import (
    LossReport,
    ObjectiveConfig,
    PretrainBatch,
    mlm_accuracy,
    mlm_loss,
    mvm_loss,
    total_loss,
    vtm_accuracy,
    vtm_loss,
)
from vidtext.targets import TargetKind, TargetTensor, target_pixel


class FixedHead(nn.Module):
    def __init__(self, fn):
        super().__init__()
        self.fn = fn

    def forward(self, x):
        return self.fn(x)


def first_coord_head():
    return FixedHead(lambda x: x[..., :1])


def zero_module(module):
    with torch.no_grad():
        for p in module.parameters():
            p.zero_()


def tiny_model(**kw):
    cfg = dict(
        vocab_size=10,
        hidden_size=8,
        vt_layers=1,
        vt_heads=2,
        ct_layers=1,
        ct_heads=2,
        patch_size=4,
        frame_size=8,
        max_frames=4,
        max_text_len=8,
        mvm_targets=("pixel",),
    )
    cfg.update(kw)
    return build_model(ModelConfig(**cfg), dtype=torch.float64)


def pixel_batch(batch_size=2, t=2, seed=0, p_m=0.4):
    """Hand-assembled batch with pixel targets and in-batch negatives."""
    rng = np.random.default_rng(seed)
    frames_np = rng.random((batch_size, t, 8, 8, 3))
    masks, targets = [], []
    for b in range(batch_size):
        pm = random_mask((t, 2, 2), p_m, seed=seed * 100 + b)
        masks.append(pm.mask)
        targets.append(target_pixel(frames_np[b], pm.mask))
    tokens = rng.integers(5, 10, size=(batch_size, 4))
    labels = np.full((batch_size, 4), -1, dtype=np.int64)
    labels[:, 1] = tokens[:, 1]
    return PretrainBatch(
        frames=torch.as_tensor(frames_np, dtype=torch.float64),
        patch_masks=torch.as_tensor(np.stack(masks)),
        tokens=torch.as_tensor(tokens, dtype=torch.long),
        mlm_labels=torch.as_tensor(labels),
        text_pad=torch.zeros(batch_size, 4, dtype=torch.bool),
        targets={"pixel": targets},
        negatives=[[j for j in range(batch_size) if j != i] for i in range(batch_size)],
    )


class TestMvmLoss:
    def setup_method(self):
        self.model = tiny_model()
        torch.manual_seed(0)
        self.h_v = torch.randn(1, 2, 2, 2, 8, dtype=torch.float64)

    def make_target(self, values, positions, kind=TargetKind.PIXEL, **kw):
        return TargetTensor(kind, np.asarray(positions, dtype=np.int64), values=values, **kw)

    def test_zero_residual_is_exactly_zero(self):
        head = self.model.mvm_head(TargetKind.PIXEL)
        positions = [[0, 0, 0], [1, 1, 1]]
        with torch.no_grad():
            pred = head(self.h_v[0, [0, 1], [0, 1], [0, 1]])
        tt = self.make_target(pred.numpy(), positions)
        loss, rows = mvm_loss(self.h_v, [tt], head, TargetKind.PIXEL)
        assert loss.item() == 0.0
        assert rows == 2

    def test_constant_offset(self):
        head = self.model.mvm_head(TargetKind.PIXEL)
        positions = [[0, 0, 0], [0, 1, 0], [1, 0, 1]]
        with torch.no_grad():
            pred = head(self.h_v[0, [0, 0, 1], [0, 1, 0], [0, 0, 1]])
        delta = 0.37
        tt = self.make_target(pred.numpy() + delta, positions)
        loss, _ = mvm_loss(self.h_v, [tt], head, TargetKind.PIXEL)
        assert loss.item() == pytest.approx(delta, abs=1e-12)

    def test_random_instance_matches_summation_oracle(self):
        head = self.model.mvm_head(TargetKind.PIXEL)
        rng = np.random.default_rng(3)
        positions = [[0, 0, 0], [0, 0, 1], [0, 1, 1], [1, 0, 0], [1, 1, 0]]
        values = rng.random((5, 48))
        tt = self.make_target(values, positions)
        loss, _ = mvm_loss(self.h_v, [tt], head, TargetKind.PIXEL)
        with torch.no_grad():
            idx = np.array(positions)
            pred = head(self.h_v[0, idx[:, 0], idx[:, 1], idx[:, 2]]).numpy()
        oracle = np.abs(pred - values).sum() / values.size
        assert loss.item() == pytest.approx(oracle, rel=1e-12)

    def test_l2(self):
        head = self.model.mvm_head(TargetKind.PIXEL)
        values = np.zeros((1, 48))
        tt = self.make_target(values, [[0, 0, 0]], loss_kind="l2")
        loss, _ = mvm_loss(self.h_v, [tt], head, TargetKind.PIXEL, loss_kind="l2")
        with torch.no_grad():
            pred = head(self.h_v[0, [0], [0], [0]]).numpy()
        assert loss.item() == pytest.approx((pred**2).mean(), rel=1e-12)

    def test_vq_perfect_logits_vanish(self):
        ids = np.array([1, 3], dtype=np.int64)
        tt = TargetTensor(TargetKind.VQ, np.array([[0, 0, 0], [1, 1, 1]]), ids=ids)
        margin = 60.0

        def logits_fn(x):
            out = torch.zeros(x.shape[0], 4, dtype=x.dtype)
            out[0, 1] = margin
            out[1, 3] = margin
            return out

        loss, _ = mvm_loss(self.h_v, [tt], FixedHead(logits_fn), TargetKind.VQ)
        assert loss.item() < 1e-9

    def test_misaligned_positions_rejected(self):
        head = self.model.mvm_head(TargetKind.PIXEL)
        tt = self.make_target(np.zeros((1, 48)), [[3, 0, 0]])  # t=3 out of range
        with pytest.raises(ValueError):
            mvm_loss(self.h_v, [tt], head, TargetKind.PIXEL)

    def test_wrong_target_width_rejected(self):
        head = self.model.mvm_head(TargetKind.PIXEL)
        tt = self.make_target(np.zeros((1, 47)), [[0, 0, 0]])
        with pytest.raises(ValueError):
            mvm_loss(self.h_v, [tt], head, TargetKind.PIXEL)

    def test_empty_mask_zero_loss(self):
        head = self.model.mvm_head(TargetKind.PIXEL)
        tt = self.make_target(np.zeros((0, 48)), np.zeros((0, 3)))
        loss, rows = mvm_loss(self.h_v, [tt], head, TargetKind.PIXEL)
        assert loss.item() == 0.0 and rows == 0


class TestVtmLoss:
    def test_uniform_logits_log8(self):
        model = tiny_model()
        zero_module(model.vtm_head)
        h_pos = torch.randn(4, 8, dtype=torch.float64)
        h_neg = torch.randn(4, 7, 8, dtype=torch.float64)
        loss = vtm_loss(h_pos, h_neg, model.vtm_head)
        assert abs(loss.item() - math.log(8)) < 1e-9

    def test_positive_dominates(self):
        head = first_coord_head()
        h_pos = torch.full((2, 4), 80.0, dtype=torch.float64)
        h_neg = torch.zeros(2, 3, 4, dtype=torch.float64)
        assert vtm_loss(h_pos, h_neg, head).item() < 1e-9

    def test_matches_bruteforce_softmax(self):
        rng = np.random.default_rng(0)
        pos = rng.normal(size=4)
        neg = rng.normal(size=(4, 5))
        head = first_coord_head()
        h_pos = torch.as_tensor(np.concatenate([pos[:, None], np.zeros((4, 3))], axis=1))
        h_neg = torch.as_tensor(
            np.concatenate([neg[..., None], np.zeros((4, 5, 3))], axis=-1)
        )
        loss = vtm_loss(h_pos, h_neg, head)
        oracle = np.mean(
            [
                -math.log(math.exp(pos[i]) / (math.exp(pos[i]) + sum(math.exp(x) for x in neg[i])))
                for i in range(4)
            ]
        )
        assert loss.item() == pytest.approx(oracle, rel=1e-12)

    def test_zero_negatives_rejected(self):
        model = tiny_model()
        with pytest.raises(ValueError):
            vtm_loss(torch.zeros(2, 8), torch.zeros(2, 0, 8), model.vtm_head)


class TestMlmLoss:
    def test_uniform_logits_log_vocab(self):
        model = tiny_model()  # vocab 10
        zero_module(model.mlm_head)
        h_x = torch.randn(1, 5, 8, dtype=torch.float64)
        labels = torch.tensor([[2, -1, 7, -1, -1]])
        loss, count = mlm_loss(h_x, labels, model.mlm_head)
        assert abs(loss.item() - math.log(10)) < 1e-9
        assert count == 2

    def test_no_labels(self):
        model = tiny_model()
        loss, count = mlm_loss(torch.randn(1, 3, 8), torch.full((1, 3), -1), model.mlm_head)
        assert loss.item() == 0.0 and count == 0

    def test_hand_worked_softmax(self):
        logits = torch.tensor(
            [[2.0, 1.0, 0.5], [0.0, 3.0, 1.0], [1.0, 1.0, 1.0]], dtype=torch.float64
        )
        head = FixedHead(lambda x: logits)
        h_x = torch.zeros(1, 3, 8, dtype=torch.float64)
        labels = torch.tensor([[0, 1, 2]])
        loss, _ = mlm_loss(h_x, labels, head)
        oracle = -np.mean(
            [
                math.log(math.exp(2.0) / sum(map(math.exp, [2.0, 1.0, 0.5]))),
                math.log(math.exp(3.0) / sum(map(math.exp, [0.0, 3.0, 1.0]))),
                math.log(1 / 3),
            ]
        )
        assert loss.item() == pytest.approx(oracle, rel=1e-12)

    def test_label_out_of_range(self):
        model = tiny_model()
        h_x = torch.randn(1, 2, 8, dtype=torch.float64)
        with pytest.raises(ValueError):
            mlm_loss(h_x, torch.tensor([[99, -1]]), model.mlm_head)


class TestTotalLoss:
    def test_disable_mvm(self):
        model = tiny_model()
        batch = pixel_batch()
        _, with_mvm = total_loss(model, batch, ObjectiveConfig())
        _, without = total_loss(model, batch, ObjectiveConfig(tasks=("vtm", "mlm")))
        assert without.mvm == 0.0
        assert without.total == pytest.approx(without.vtm + without.mlm)
        assert with_mvm.vtm == pytest.approx(without.vtm)
        assert with_mvm.mlm == pytest.approx(without.mlm)

    def test_zeroed_heads_anchor_values(self):
        model = tiny_model()
        for head in (model.vtm_head, model.mlm_head, model.mvm_heads["pixel"]):
            zero_module(head)
        batch = pixel_batch(batch_size=2)
        _, report = total_loss(model, batch, ObjectiveConfig())
        assert report.vtm == pytest.approx(math.log(2), abs=1e-9)  # 1 negative
        assert report.mlm == pytest.approx(math.log(10), abs=1e-9)
        expected_mvm = np.abs(np.concatenate([t.values for t in batch.targets["pixel"]])).mean()
        assert report.mvm == pytest.approx(expected_mvm, rel=1e-9)

    def test_total_is_bit_exact_sum(self):
        model = tiny_model()
        _, report = total_loss(model, pixel_batch(), ObjectiveConfig())
        assert report.total == report.mvm + report.vtm + report.mlm

    def test_single_sample_batch_has_no_negatives(self):
        model = tiny_model()
        batch = pixel_batch(batch_size=1)
        assert batch.negatives == [[]]
        _, report = total_loss(model, batch, ObjectiveConfig())
        assert report.vtm == 0.0
        assert report.num_negatives == 0

    def test_image_batch_skips_mvm(self):
        model = tiny_model()
        batch = pixel_batch(batch_size=2, t=2)
        batch.is_image = True
        _, report = total_loss(model, batch, ObjectiveConfig())
        assert report.mvm == 0.0 and report.masked_patches == 0
        _, on = total_loss(model, batch, ObjectiveConfig(mvm_on_image_data=True))
        assert on.mvm > 0.0

    def test_loss_kind_switch_only_touches_mvm(self):
        model = tiny_model()
        batch = pixel_batch()
        _, l1 = total_loss(model, batch, ObjectiveConfig(loss_kind="l1"))
        _, l2 = total_loss(model, batch, ObjectiveConfig(loss_kind="l2"))
        assert l1.vtm == l2.vtm and l1.mlm == l2.mlm
        assert l1.mvm != l2.mvm

    def test_gradient_additivity(self):
        model = tiny_model()
        batch = pixel_batch()
        probe = dict(model.named_parameters())["cls_embedding"]

        def grad_of(tasks):
            model.zero_grad()
            loss, _ = total_loss(model, batch, ObjectiveConfig(tasks=tasks))
            loss.backward()
            return probe.grad.clone() if probe.grad is not None else torch.zeros_like(probe)

        full = grad_of(("vtm", "mlm", "mvm"))
        parts = grad_of(("vtm",)) + grad_of(("mlm",)) + grad_of(("mvm",))
        assert torch.allclose(full, parts, atol=1e-10)

    def test_target_extraction_local_to_masked_patches(self):
        # pixels of unmasked patches never reach the target rows
        rng = np.random.default_rng(0)
        frames_a = rng.random((2, 8, 8, 3))
        frames_b = frames_a.copy()
        mask = np.zeros((2, 2, 2), dtype=bool)
        mask[0, 0, 0] = True
        frames_b[0, 4:, 4:] += 0.1  # perturb an unmasked patch
        ta = target_pixel(frames_a, mask)
        tb = target_pixel(frames_b, mask)
        assert np.array_equal(ta.values, tb.values)


class TestAccuracy:
    def test_vtm_accuracy_bounds(self):
        model = tiny_model()
        acc = vtm_accuracy(model, pixel_batch(batch_size=3))
        assert 0.0 <= acc <= 1.0

    def test_mlm_accuracy_perfect_head(self):
        model = tiny_model()
        batch = pixel_batch(batch_size=2)

        class Oracle(nn.Module):
            def forward(self, x):  # logits peaked at the true label regardless of input
                out = torch.zeros(x.shape[0], 10, dtype=x.dtype)
                labels = batch.mlm_labels[batch.mlm_labels >= 0]
                out[torch.arange(x.shape[0]), labels] = 5.0
                return out

        model.mlm_head = Oracle()
        assert mlm_accuracy(model, batch) == 1.0
