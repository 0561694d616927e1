import numpy as np
import pytest
import torch
import torch.nn as nn

from vidtext.downstream import (
    QaInstance,
    RetrievalIndex,
    caption_finetune_loss,
    caption_generate,
    caption_metrics,
    format_qa_tokens,
    make_qa_instances,
    mc_as_video_to_text,
    qa_answer,
    qa_logits,
    recall_at_k,
    restricted_argmax,
    retrieval_score,
    score_matrix,
)
from vidtext.errors import InvalidInstanceError
from vidtext.model import ModelConfig, build_model
from vidtext.synth import CorpusConfig, build_corpus, sample_frames, tokenize


@pytest.fixture(scope="module")
def corpus():
    return build_corpus(CorpusConfig(size=8, seed=3, canvas_size=16, frame_count=8))


@pytest.fixture(scope="module")
def model(corpus):
    cfg = ModelConfig(
        vocab_size=len(corpus.vocab),
        hidden_size=16,
        vt_layers=1,
        vt_heads=2,
        ct_layers=1,
        ct_heads=2,
        patch_size=4,
        frame_size=16,
        max_frames=4,
        max_text_len=64,
    )
    return build_model(cfg)


def eval_frames(corpus, idx, count=4):
    return sample_frames(corpus.clip(idx), count, mode="eval").frames


class TestRetrieval:
    def test_zero_shot_equals_t2v_after_copy(self, corpus, model):
        model.init_t2v_from_vtm()
        frames = eval_frames(corpus, 0)
        tokens = corpus.caption_ids(0)
        a = retrieval_score(model, frames, tokens, head="vtm")
        b = retrieval_score(model, frames, tokens, head="t2v")
        assert a == b  # bit-exact: same weights, same forward

    def test_scores_independent_of_batch_composition(self, corpus, model):
        videos = [eval_frames(corpus, i) for i in range(3)]
        texts = [corpus.caption_ids(i) for i in range(3)]
        matrix = score_matrix(model, videos, texts)
        for qi in range(3):
            for ci in range(3):
                assert matrix[qi, ci] == pytest.approx(
                    retrieval_score(model, videos[ci], texts[qi]), abs=1e-6
                )

    def test_mc_as_video_to_text(self, corpus, model):
        options = [corpus.caption_ids(i) for i in range(4)]
        pick = mc_as_video_to_text(model, eval_frames(corpus, 0), options)
        assert pick in range(4)
        scores = [retrieval_score(model, eval_frames(corpus, 0), opt) for opt in options]
        assert pick == int(np.argmax(scores))


class TestRecallAtK:
    def test_perfect(self):
        scores = np.eye(4) * 10.0
        idx = RetrievalIndex([f"q{i}" for i in range(4)], [f"c{i}" for i in range(4)], scores, [0, 1, 2, 3])
        assert recall_at_k(idx, 1) == 1.0

    def test_reversed(self):
        scores = -np.eye(10)
        idx = RetrievalIndex(
            [f"q{i}" for i in range(10)], [f"c{i}" for i in range(10)], scores, list(range(10))
        )
        assert recall_at_k(idx, 1) == 0.0
        assert recall_at_k(idx, 10) == 1.0

    def test_matches_bruteforce_oracle(self):
        rng = np.random.default_rng(0)
        scores = rng.random((6, 6)).round(1)  # ties likely
        positives = list(rng.integers(0, 6, size=6))
        idx = RetrievalIndex([str(i) for i in range(6)], [str(i) for i in range(6)], scores, positives)
        for k in (1, 5):
            hits = 0
            for qi in range(6):
                ranked = sorted(range(6), key=lambda c: (-scores[qi, c], c))
                hits += positives[qi] in ranked[:k]
            assert recall_at_k(idx, k) == hits / 6

    def test_k_out_of_range(self):
        idx = RetrievalIndex(["q"], ["c"], np.zeros((1, 1)), [0])
        with pytest.raises(ValueError):
            recall_at_k(idx, 2)


class FixedLogitsHead(nn.Module):
    def __init__(self, logits):
        super().__init__()
        self.logits = logits

    def forward(self, x):
        return self.logits.to(x.dtype).expand(x.shape[0], -1)


class TestQa:
    def test_two_option_prediction_in_range(self, corpus, model):
        instances = make_qa_instances(corpus, "mc", [0, 1], seed=0, num_options=2)
        for inst in instances:
            assert qa_answer(model, inst, corpus.vocab) in (0, 1)

    def test_open_ended_peaked_logits(self, corpus, model):
        vocab = corpus.vocab
        logits = torch.zeros(len(vocab))
        logits[vocab.id("red")] = 9.0
        original = model.mlm_head
        model.mlm_head = FixedLogitsHead(logits)
        try:
            inst = QaInstance(eval_frames(corpus, 0), tokenize("what color is the rectangle", vocab), None, "red")
            assert qa_answer(model, inst, vocab) == "red"
        finally:
            model.mlm_head = original

    def test_restricted_equals_masked_full_argmax(self, corpus, model):
        rng = np.random.default_rng(1)
        vocab = corpus.vocab
        option_ids = vocab.answer_ids(5)
        for _ in range(100):
            logits = rng.normal(size=len(vocab))
            restricted = restricted_argmax(logits, option_ids)
            masked = np.full(len(vocab), -np.inf)
            masked[option_ids] = logits[option_ids]
            assert option_ids[restricted] == int(np.argmax(masked))

    def test_prediction_invariant_to_non_option_logits(self, corpus, model):
        rng = np.random.default_rng(2)
        vocab = corpus.vocab
        option_ids = vocab.answer_ids(5)
        non_option = [i for i in range(len(vocab)) if i not in option_ids]
        for _ in range(100):
            logits = rng.normal(size=len(vocab))
            before = restricted_argmax(logits, option_ids)
            noisy = logits.copy()
            noisy[non_option] = rng.normal(size=len(non_option)) * 100
            assert restricted_argmax(noisy, option_ids) == before

    def test_fib_replaces_blank(self, corpus):
        vocab = corpus.vocab
        question = tokenize("the [BLANK] rectangle moves", vocab)
        inst = QaInstance(np.zeros((2, 16, 16, 3)), question, None, "red")
        tokens = format_qa_tokens(inst, vocab)
        assert tokens.count(vocab.mask_id) == 1
        assert vocab.blank_id not in tokens
        assert len(tokens) == len(question)

    def test_ambiguous_mask_rejected(self, corpus, model):
        vocab = corpus.vocab
        question = tokenize("[MASK] red rectangle", vocab)
        inst = QaInstance(eval_frames(corpus, 0), question, None, "red")
        with pytest.raises(InvalidInstanceError):
            qa_logits(model, inst, vocab)  # formatting appends a second [MASK]

    def test_make_instances_modes(self, corpus):
        for mode in ("mc", "open", "fib"):
            instances = make_qa_instances(corpus, mode, list(range(4)), seed=1)
            assert len(instances) == 4
        mc = make_qa_instances(corpus, "mc", [0], seed=5)[0]
        assert mc.options[mc.answer] == corpus.caption_ids(0)


class TestCaptioning:
    def test_sep_head_halts_immediately(self, corpus, model):
        vocab = corpus.vocab
        logits = torch.zeros(len(vocab))
        logits[vocab.sep_id] = 9.0
        original = model.mlm_head
        model.mlm_head = FixedLogitsHead(logits)
        try:
            assert caption_generate(model, eval_frames(corpus, 0), vocab) == []
        finally:
            model.mlm_head = original

    def test_constant_head_hits_step_cap(self, corpus, model):
        vocab = corpus.vocab
        word = vocab.id("the")
        logits = torch.zeros(len(vocab))
        logits[word] = 9.0
        original = model.mlm_head
        model.mlm_head = FixedLogitsHead(logits)
        try:
            out = caption_generate(model, eval_frames(corpus, 0), vocab)
            assert out == [word] * 50
        finally:
            model.mlm_head = original

    def test_causality_future_perturbation(self, corpus, model):
        vocab = corpus.vocab
        frames = eval_frames(corpus, 1)
        base = corpus.caption_ids(1)[:5]
        dtype = next(model.parameters()).dtype
        v = model.video_encode(torch.as_tensor(frames, dtype=dtype)[None])

        def logits_at(tokens):
            w = model.embed_text(torch.as_tensor(tokens, dtype=torch.long)[None])
            fused = model.cross_fuse(v, w, causal_text=True)
            return model.mlm_logits(fused.h_x)[0]

        with torch.no_grad():
            full = logits_at(base)
            altered = list(base)
            altered[3] = vocab.id("and")
            altered[4] = vocab.id("circle")
            changed = logits_at(altered)
        assert torch.equal(full[:3], changed[:3])
        assert not torch.allclose(full[4], changed[4])

    def test_generation_deterministic(self, corpus, model):
        frames = eval_frames(corpus, 2)
        a = caption_generate(model, frames, corpus.vocab, max_steps=6)
        b = caption_generate(model, frames, corpus.vocab, max_steps=6)
        assert a == b

    def test_finetune_ratio_zero(self, corpus, model):
        loss, count = caption_finetune_loss(
            model, eval_frames(corpus, 0), corpus.caption_ids(0), corpus.vocab, seed=0, ratio=0.0
        )
        assert loss.item() == 0.0 and count == 0

    def test_fully_masked_single_token_uniform_logits(self, corpus, model):
        vocab = corpus.vocab
        original = model.mlm_head
        model.mlm_head = FixedLogitsHead(torch.zeros(len(vocab)))
        try:
            for seed in range(20):
                loss, count = caption_finetune_loss(
                    model, eval_frames(corpus, 0), [vocab.id("red")], vocab, seed=seed, ratio=0.6
                )
                if count:
                    assert loss.item() == pytest.approx(np.log(len(vocab)), abs=1e-6)
                    break
            else:
                pytest.fail("no seed selected any position")
        finally:
            model.mlm_head = original

    def test_metrics(self):
        m = caption_metrics([[1, 2, 3], [4]], [[1, 2, 3], [4, 5]])
        assert m["exact_accuracy"] == 0.5
        assert m["token_accuracy"] == pytest.approx(4 / 5)
