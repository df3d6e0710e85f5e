import numpy as np
import pytest

from gpt_acn import codec, model as M, tensor as T, training as TR
from conftest import assert_grads_close


TEXTS = ["the cat sat on the mat", "a dog ran in the park",
         "the bird flew over the house"]


def small_backbone_config(**overrides):
    base = dict(n_layer=1, n_head=1, d_model=16, d_ff=32, vocab_size=256,
                max_positions=64, adapter_size=4,
                adapter_enabled=False, copy_enabled=False)
    base.update(overrides)
    return M.ModelConfig(**base)


@pytest.fixture(scope="module")
def vocab():
    return codec.train_vocab(TEXTS, 256)


class TestAdam:
    def test_hand_case(self):
        p = T.Tensor([1.0], requires_grad=True)
        p.grad = np.array([0.5])
        adam = TR.AdamState()
        adam.update({"p": p}, lr=0.1)
        assert abs(p.data[0] - 0.9) < 1e-3

    def test_state_only_for_updated(self):
        p = T.Tensor([1.0], requires_grad=True)
        q = T.Tensor([2.0], requires_grad=True)
        p.grad = np.array([0.5])
        adam = TR.AdamState()
        adam.update({"p": p, "q": q}, lr=0.1)
        assert "p" in adam.moments and "q" not in adam.moments


class TestTrainStep:
    def test_uniform_model_loss_near_log_v(self, vocab):
        cfg = small_backbone_config()
        m = M.init_model(cfg, seed=0)
        # zero weights give uniform logits
        for name, p in m.params.items():
            p.data[:] = 0.0
            if name.endswith(".g"):
                p.data[:] = 1.0
        m.set_trainable(M.ParamPartition.all_trainable(m))
        ids = codec.encode(vocab, TEXTS[0])
        loss = TR.train_step(m, [(ids, [1] * len(ids))], TR.AdamState(),
                             TR.TrainConfig(mode="pretrain_full"))
        assert abs(loss - np.log(cfg.vocab_size)) < 1e-9

    def test_duplicated_batch_same_loss(self, vocab):
        m = M.init_model(small_backbone_config(), seed=1)
        m.set_trainable(M.ParamPartition.all_trainable(m))
        ids = codec.encode(vocab, TEXTS[1])
        seq = (ids, [1] * len(ids))
        cfg = TR.TrainConfig(mode="pretrain_full")
        l1 = TR.train_step(M.init_model(small_backbone_config(), seed=1), [seq],
                           TR.AdamState(), cfg)
        m2 = M.init_model(small_backbone_config(), seed=1)
        m2.set_trainable(M.ParamPartition.all_trainable(m2))
        l2 = TR.train_step(m2, [seq, seq], TR.AdamState(), cfg)
        assert l1 == l2

    def test_empty_batch(self):
        m = M.init_model(small_backbone_config(), seed=0)
        with pytest.raises(TR.TrainError):
            TR.train_step(m, [], TR.AdamState(), TR.TrainConfig())

    def test_gradient_matches_oracle_through_train_loss(self, vocab):
        cfg = M.ModelConfig(n_layer=1, n_head=1, d_model=8, d_ff=16, vocab_size=32,
                            max_positions=16, adapter_size=2)
        m = M.init_model(cfg, seed=2)
        rng = np.random.default_rng(2)
        for p in m.params.values():
            p.data = rng.normal(0.0, 0.3, size=p.data.shape)
        m.set_trainable(M.ParamPartition.all_trainable(m))
        ids = [1, 5, 9, 3, 7]
        mask = [1, 1, 0, 1, 1]

        def loss_fn():
            return TR.sequence_loss(m, ids, mask)

        assert_grads_close(loss_fn, list(m.params.values()),
                           max_coords=4, rng=np.random.default_rng(0))


class TestPretrain:
    def test_loss_decreases(self, vocab):
        m = M.init_model(small_backbone_config(), seed=3)
        cfg = TR.TrainConfig(mode="pretrain_full", epochs=3, batch_size=2,
                             learning_rate=3e-3, seed=3)
        log = TR.pretrain_backbone(m, TEXTS * 5, vocab, cfg)
        assert log[-1]["mean_loss"] < log[0]["mean_loss"]

    def test_deterministic_checkpoint(self, vocab):
        def run():
            m = M.init_model(small_backbone_config(), seed=4)
            TR.pretrain_backbone(m, TEXTS, vocab,
                                 TR.TrainConfig(mode="pretrain_full", epochs=2, seed=4))
            return m

        m1, m2 = run(), run()
        for n in m1.params:
            assert np.array_equal(m1.params[n].data, m2.params[n].data)

    def test_memorizes_single_sentence(self, vocab):
        m = M.init_model(small_backbone_config(n_layer=2, d_model=32, d_ff=64,
                                               n_head=2), seed=5)
        cfg = TR.TrainConfig(mode="pretrain_full", epochs=200, batch_size=1,
                             learning_rate=1e-3, seed=5)
        log = TR.pretrain_backbone(m, [TEXTS[0]], vocab, cfg)
        assert log[-1]["mean_loss"] < 0.1

    def test_rejects_adapter_model(self, vocab):
        m = M.init_model(small_backbone_config(adapter_enabled=True), seed=0)
        with pytest.raises(TR.TrainError):
            TR.pretrain_backbone(m, TEXTS, vocab, TR.TrainConfig(mode="pretrain_full"))

    def test_rejects_wrong_mode(self, vocab):
        m = M.init_model(small_backbone_config(), seed=0)
        with pytest.raises(TR.TrainError):
            TR.pretrain_backbone(m, TEXTS, vocab, TR.TrainConfig(mode="finetune_full"))


class TestFinetune:
    def _model_and_seqs(self, vocab, seed=6):
        cfg = M.ModelConfig(n_layer=1, n_head=1, d_model=16, d_ff=32, vocab_size=256,
                            max_positions=64, adapter_size=4)
        m = M.init_model(cfg, seed=seed)
        seqs = [(codec.encode(vocab, t), [1] * len(codec.encode(vocab, t)))
                for t in TEXTS]
        return m, seqs

    def test_frozen_params_bit_identical(self, vocab):
        m, seqs = self._model_and_seqs(vocab)
        part = M.ParamPartition.adapter_finetune(m)
        before = {n: m.params[n].data.copy() for n in part.frozen}
        TR.finetune(m, seqs, part, TR.TrainConfig(mode="finetune_adapters", epochs=3))
        for n, b in before.items():
            assert np.array_equal(m.params[n].data, b)

    def test_trainable_params_move(self, vocab):
        m, seqs = self._model_and_seqs(vocab)
        part = M.ParamPartition.adapter_finetune(m)
        before = m.params["copy.w_c"].data.copy()
        TR.finetune(m, seqs, part, TR.TrainConfig(mode="finetune_adapters", epochs=2))
        assert not np.array_equal(m.params["copy.w_c"].data, before)

    def test_loss_decreases(self, vocab):
        m, seqs = self._model_and_seqs(vocab)
        log = TR.finetune(m, seqs, M.ParamPartition.adapter_finetune(m),
                          TR.TrainConfig(mode="finetune_adapters", epochs=15,
                                         learning_rate=3e-4, batch_size=2))
        assert log[-1]["mean_loss"] < log[0]["mean_loss"]

    def test_deterministic_trajectory(self, vocab):
        def run():
            m, seqs = self._model_and_seqs(vocab)
            return TR.finetune(m, seqs, M.ParamPartition.adapter_finetune(m),
                               TR.TrainConfig(mode="finetune_adapters", epochs=3, seed=7))

        l1 = [r["mean_loss"] for r in run()]
        l2 = [r["mean_loss"] for r in run()]
        assert np.allclose(l1, l2, atol=1e-12, rtol=0)


class TestForgettingProbe:
    def test_adapter_finetune_preserves_backbone_perplexity(self, vocab):
        backbone = M.init_model(small_backbone_config(), seed=8)
        TR.pretrain_backbone(backbone, TEXTS, vocab,
                             TR.TrainConfig(mode="pretrain_full", epochs=60,
                                            learning_rate=3e-3, seed=8))
        pre_seqs = TR.sentence_sequences(vocab, TEXTS)
        ppl_before = TR.perplexity(backbone, pre_seqs)

        full_cfg = M.ModelConfig(**{**backbone.config.to_dict(),
                                    "adapter_enabled": True, "copy_enabled": True})
        acn = M.init_model(full_cfg, seed=8)
        for n, p in backbone.params.items():
            acn.params[n].data = p.data.copy()
        fseqs = [(codec.encode(vocab, "User: hi\nSystem: hello there\n"), None)]
        fseqs = [(ids, [1] * len(ids)) for ids, _ in fseqs]
        TR.finetune(acn, fseqs, M.ParamPartition.adapter_finetune(acn),
                    TR.TrainConfig(mode="finetune_adapters", epochs=5, seed=8))
        ppl_after = TR.perplexity(TR.backbone_view(acn), pre_seqs)
        assert ppl_after == ppl_before

        full = M.init_model(small_backbone_config(), seed=8)
        for n, p in backbone.params.items():
            full.params[n].data = p.data.copy()
        TR.finetune(full, fseqs, M.ParamPartition.all_trainable(full),
                    TR.TrainConfig(mode="finetune_full", epochs=40,
                                   learning_rate=3e-3, seed=8))
        assert TR.perplexity(full, pre_seqs) > ppl_before


def test_zero_lr_is_identity(vocab):
    m = M.init_model(M.ModelConfig(n_layer=1, n_head=1, d_model=16, d_ff=32,
                                   vocab_size=256, max_positions=64,
                                   adapter_size=4), seed=9)
    ids = codec.encode(vocab, TEXTS[0])
    part = M.ParamPartition.adapter_finetune(m)
    before = {n: m.params[n].data.copy() for n in m.params}
    TR.finetune(m, [(ids, [1] * len(ids))], part,
                TR.TrainConfig(mode="finetune_adapters", epochs=2,
                               learning_rate=0.0))
    for n, b in before.items():
        assert np.array_equal(m.params[n].data, b)
