import numpy as np
import pytest
import torch

from vidtext.model import (
    ModelConfig,
    VideoTextModel,
    build_model,
    load_meta,
    load_model,
    read_blob,
    save_model,
    write_blob,
)
from vidtext.errors import CheckpointError, InvalidConfigError


def tiny_config(**kw):
    base = dict(
        vocab_size=12,
        hidden_size=8,
        vt_layers=1,
        vt_heads=2,
        ct_layers=1,
        ct_heads=2,
        patch_size=4,
        frame_size=8,
        max_frames=4,
        max_text_len=8,
        init_seed=0,
    )
    base.update(kw)
    return ModelConfig(**base)


def rand_frames(cfg, batch=1, t=2, seed=0):
    gen = torch.Generator().manual_seed(seed)
    return torch.rand(batch, t, cfg.frame_size, cfg.frame_size, 3, generator=gen)


class TestInit:
    def test_deterministic(self):
        cfg = tiny_config()
        a, b = build_model(cfg), build_model(cfg)
        for (na, pa), (nb, pb) in zip(a.named_parameters(), b.named_parameters()):
            assert na == nb
            assert torch.equal(pa, pb)

    def test_per_head_dim(self):
        cfg = ModelConfig(vocab_size=10, hidden_size=64, vt_heads=4, ct_heads=4)
        assert cfg.hidden_size // cfg.vt_heads == 16

    def test_init_bounded(self):
        cfg = tiny_config()
        model = build_model(cfg)
        for name, p in model.named_parameters():
            assert torch.isfinite(p).all()
            if not ("norm" in name or name.endswith("bias")):
                assert p.abs().max() <= 6 * cfg.effective_init_scale

    def test_explicit_init_scale_respected(self):
        cfg = tiny_config(init_scale=0.01)
        model = build_model(cfg)
        assert cfg.effective_init_scale == 0.01
        for name, p in model.named_parameters():
            if not ("norm" in name or name.endswith("bias")):
                assert p.abs().max() <= 6 * 0.01

    def test_invalid_config(self):
        with pytest.raises(InvalidConfigError):
            ModelConfig(vocab_size=10, hidden_size=10, vt_heads=4)
        with pytest.raises(InvalidConfigError):
            ModelConfig(vocab_size=10, patch_size=5, frame_size=64)

    def test_paths_unique(self):
        model = build_model(tiny_config())
        names = [n for n, _ in model.named_parameters()]
        assert len(names) == len(set(names))


class TestVideoEncode:
    def test_output_shape(self):
        cfg = ModelConfig(vocab_size=10, hidden_size=64, patch_size=16, frame_size=64)
        model = build_model(cfg)
        frames = torch.rand(2, 4, 64, 64, 3)
        v = model.video_encode(frames)
        assert v.shape == (2, 4, 4, 4, 64)

    def test_allfalse_mask_is_noop(self):
        cfg = tiny_config()
        model = build_model(cfg)
        frames = rand_frames(cfg)
        mask = torch.zeros(1, 2, 2, 2, dtype=torch.bool)
        assert torch.equal(model.video_encode(frames, mask), model.video_encode(frames))

    def test_masked_slots_equal_with_zero_positions(self):
        cfg = tiny_config()
        model = build_model(cfg)
        with torch.no_grad():
            model.vt_time_pos.zero_()
            model.vt_space_pos.zero_()
        frames = rand_frames(cfg)
        mask = torch.zeros(1, 2, 2, 2, dtype=torch.bool)
        mask[0, 0, 0, 1] = True
        mask[0, 1, 1, 0] = True
        v = model.video_encode(frames, mask)
        assert torch.allclose(v[0, 0, 0, 1], v[0, 1, 1, 0], atol=1e-6)

    def test_shape_mismatch_rejected(self):
        model = build_model(tiny_config())
        with pytest.raises(ValueError):
            model.video_encode(torch.rand(1, 2, 12, 12, 3))
        with pytest.raises(ValueError):
            model.video_encode(rand_frames(tiny_config()), torch.zeros(1, 2, 3, 3, dtype=torch.bool))

    def test_masked_pixels_receive_no_gradient(self):
        cfg = tiny_config()
        model = build_model(cfg)
        frames = rand_frames(cfg).requires_grad_(True)
        mask = torch.zeros(1, 2, 2, 2, dtype=torch.bool)
        mask[0, 0, 1, 1] = True
        v = model.video_encode(frames, mask)
        v.sum().backward()
        grad_patch = frames.grad[0, 0, 4:8, 4:8, :]  # pixels of masked patch (0,1,1)
        assert torch.all(grad_patch == 0)
        assert frames.grad.abs().sum() > 0


class TestEmbedText:
    def test_shapes_and_empty(self):
        cfg = tiny_config()
        model = build_model(cfg)
        w = model.embed_text(torch.tensor([[1, 2, 3]]))
        assert w.shape == (1, 3, cfg.hidden_size)
        assert model.embed_text(torch.zeros(1, 0, dtype=torch.long)).shape == (1, 0, cfg.hidden_size)

    def test_same_token_different_positions(self):
        model = build_model(tiny_config())
        w = model.embed_text(torch.tensor([[5, 1, 2, 5]]))
        tok = model.token_embedding[5]
        assert torch.allclose(w[0, 0] - model.text_pos[0], tok, atol=1e-6)
        assert torch.allclose(w[0, 3] - model.text_pos[3], tok, atol=1e-6)
        assert not torch.allclose(w[0, 0], w[0, 3], atol=1e-6)

    def test_out_of_range(self):
        model = build_model(tiny_config())
        with pytest.raises(ValueError):
            model.embed_text(torch.tensor([[99]]))


class TestCrossFuse:
    def test_sequence_length(self):
        cfg = ModelConfig(vocab_size=10, hidden_size=64, patch_size=16, frame_size=64)
        model = build_model(cfg)
        v = model.video_encode(torch.rand(1, 4, 64, 64, 3))
        w = model.embed_text(torch.randint(0, 10, (1, 6)))
        fused = model.cross_fuse(v, w)
        assert fused.sequence_length == 64 + 1 + 6
        assert fused.h_v.shape == (1, 4, 4, 4, 64)
        assert fused.h_c.shape == (1, 64)
        assert fused.h_x.shape == (1, 6, 64)

    @pytest.mark.parametrize(
        "patch,frame,t,length",
        [(4, 8, 1, 3), (4, 8, 3, 0), (8, 16, 2, 5), (4, 16, 2, 7)],
    )
    def test_partition_shape_contract(self, patch, frame, t, length):
        cfg = tiny_config(patch_size=patch, frame_size=frame, max_frames=4, max_text_len=8)
        model = build_model(cfg)
        grid = frame // patch
        v = model.video_encode(torch.rand(1, t, frame, frame, 3))
        w = model.embed_text(torch.randint(0, cfg.vocab_size, (1, length)))
        fused = model.cross_fuse(v, w)
        assert fused.sequence_length == t * grid * grid + 1 + length

    def test_zero_layers_identity(self):
        cfg = tiny_config(ct_layers=0)
        model = build_model(cfg)
        frames, tokens = rand_frames(cfg), torch.tensor([[1, 2]])
        v, w = model.video_encode(frames), model.embed_text(tokens)
        fused = model.cross_fuse(v, w)
        mod = model.modality_embedding
        assert torch.allclose(fused.h_v, v + mod[0], atol=1e-6)
        assert torch.allclose(fused.h_c[0], model.cls_embedding + mod[1], atol=1e-6)
        assert torch.allclose(fused.h_x, w + mod[2], atol=1e-6)

    def test_attention_rows_sum_to_one(self):
        cfg = tiny_config(ct_layers=2)
        model = build_model(cfg)
        v = model.video_encode(rand_frames(cfg))
        w = model.embed_text(torch.tensor([[1, 2, 3]]))
        fused = model.cross_fuse(v, w, collect_attention=True)
        assert len(fused.attention) == 2
        for probs in fused.attention:
            assert torch.allclose(probs.sum(-1), torch.ones_like(probs.sum(-1)), atol=1e-6)

    def test_dim_mismatch(self):
        model = build_model(tiny_config())
        v = model.video_encode(rand_frames(tiny_config()))
        with pytest.raises(ValueError):
            model.cross_fuse(v, torch.rand(1, 3, 16))


class TestAttentionTrace:
    def test_scores_nonnegative_and_bounded(self):
        cfg = tiny_config()
        model = build_model(cfg)
        v = model.video_encode(rand_frames(cfg))
        w = model.embed_text(torch.tensor([[1, 2, 3]]))
        trace = model.attention_trace(v, w)
        assert (trace.video >= 0).all() and (trace.text >= 0).all()
        total = trace.video.sum() + trace.text.sum() + trace.cls_self.sum()
        assert total <= 1.0 + 1e-6

    def test_duplicate_patches_equal_scores(self):
        cfg = tiny_config()
        model = build_model(cfg)
        with torch.no_grad():
            model.vt_time_pos.zero_()
            model.vt_space_pos.zero_()
        # one 4x4 patch tiled everywhere -> every patch token identical
        patch = torch.rand(4, 4, 3)
        frame = patch.repeat(2, 2, 1).expand(1, 2, -1, -1, -1)
        v = model.video_encode(frame)
        w = model.embed_text(torch.tensor([[1]]))
        trace = model.attention_trace(v, w)
        flat = trace.video.reshape(-1)
        assert torch.allclose(flat, flat[0].expand_as(flat), atol=1e-6)

    def test_matches_hand_softmax(self):
        # 1 video patch + CLS + 1 token = 3-slot sequence; replicate the
        # pre-norm attention arithmetic in numpy and compare.
        cfg = tiny_config(vt_layers=0, ct_layers=1, ct_heads=1, patch_size=8, frame_size=8)
        model = build_model(cfg).double()
        frames = rand_frames(cfg, t=1).double()
        tokens = torch.tensor([[3]])
        v, w = model.video_encode(frames), model.embed_text(tokens)
        trace = model.attention_trace(v, w)

        mod = model.modality_embedding.detach().numpy()
        seq = np.stack(
            [
                v.detach().numpy().reshape(-1) + mod[0],
                (model.cls_embedding.detach().numpy() + mod[1]),
                w.detach().numpy().reshape(-1) + mod[2],
            ]
        )
        block = model.ct_blocks[0]
        g = block.norm1.weight.detach().numpy()
        b = block.norm1.bias.detach().numpy()
        normed = np.stack(
            [(r - r.mean()) / np.sqrt(r.var() + 1e-5) * g + b for r in seq]
        )
        W = block.attn.qkv.weight.detach().numpy()
        bias = block.attn.qkv.bias.detach().numpy()
        d = cfg.hidden_size
        q = normed @ W[:d].T + bias[:d]
        k = normed @ W[d : 2 * d].T + bias[d : 2 * d]
        logits = q[1] @ k.T / np.sqrt(d)
        expected = np.exp(logits) / np.exp(logits).sum()
        got = np.array([trace.video.item(), trace.cls_self.item(), trace.text.item()])
        assert np.allclose(got, expected, atol=1e-10)


class TestCheckpoint:
    def test_roundtrip_exact(self, tmp_path):
        model = build_model(tiny_config(mvm_targets=("pixel", "flow")))
        save_model(model, tmp_path / "ckpt", step=3)
        loaded = load_model(tmp_path / "ckpt")
        assert load_meta(tmp_path / "ckpt")["step"] == 3
        for (na, pa), (nb, pb) in zip(model.named_parameters(), loaded.named_parameters()):
            assert na == nb
            assert torch.equal(pa, pb)

    def test_blob_roundtrip(self, tmp_path):
        arrays = {"a.w": np.arange(6, dtype=np.float64).reshape(2, 3), "b": np.array(2.5)}
        write_blob(tmp_path, "state", arrays)
        back = read_blob(tmp_path, "state")
        assert set(back) == {"a.w", "b"}
        assert np.array_equal(back["a.w"], arrays["a.w"])

    def test_missing_checkpoint(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_model(tmp_path / "nope")


class TestGradients:
    def test_finite_difference_small_model(self):
        torch.manual_seed(0)
        cfg = tiny_config()
        model = build_model(cfg, dtype=torch.float64)
        frames = rand_frames(cfg).double()
        tokens = torch.tensor([[1, 4]])
        mask = torch.zeros(1, 2, 2, 2, dtype=torch.bool)
        mask[0, 0, 0, 0] = True
        probe = torch.randn(8, dtype=torch.float64)

        def loss_fn():
            fused = model.cross_fuse(model.video_encode(frames, mask), model.embed_text(tokens))
            return fused.h_c @ probe + fused.h_v.sum() * 0.1 + fused.h_x.mean()

        loss = loss_fn()
        loss.backward()
        rng = np.random.default_rng(1)
        h = 1e-6
        worst = 0.0
        for name, p in model.named_parameters():
            if p.grad is None:
                continue
            flat = p.data.view(-1)
            for idx in rng.choice(flat.numel(), size=min(2, flat.numel()), replace=False):
                orig = flat[idx].item()
                with torch.no_grad():
                    flat[idx] = orig + h
                    up = loss_fn().item()
                    flat[idx] = orig - h
                    down = loss_fn().item()
                    flat[idx] = orig
                fd = (up - down) / (2 * h)
                an = p.grad.view(-1)[idx].item()
                # the floor absorbs FD round-off on near-zero gradients
                denom = max(abs(fd), abs(an), 1e-4)
                worst = max(worst, abs(fd - an) / denom)
        assert worst < 1e-4
