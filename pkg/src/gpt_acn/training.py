"""Masked left-to-right LM training: desk-scale backbone pretraining and
adapter/copy fine-tuning with a frozen backbone."""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import codec, dialogue, model as M, tensor as T

MODES = ("pretrain_full", "finetune_adapters", "finetune_full")


class TrainError(ValueError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 3e-4
    batch_size: int = 2
    epochs: int = 15
    grad_clip_norm: float = 1.0
    seed: int = 0
    mode: str = "finetune_adapters"

    def validate(self):
        # lr == 0 is legal so a zero-rate run can serve as an identity check
        if self.learning_rate < 0 or self.batch_size < 1 or self.epochs < 1:
            raise TrainError("learning_rate, batch_size and epochs must be positive")
        if self.mode not in MODES:
            raise TrainError(f"unknown mode {self.mode!r}")


@dataclass
class AdamState:
    """First/second moments per trainable parameter, shared step counter."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    moments: dict = field(default_factory=dict)  # name -> (m, v)

    def update(self, params: dict[str, T.Tensor], lr: float):
        self.step += 1
        t = self.step
        for name, p in params.items():
            if p.grad is None:
                continue
            if name not in self.moments:
                self.moments[name] = (np.zeros_like(p.data), np.zeros_like(p.data))
            m, v = self.moments[name]
            m = self.beta1 * m + (1 - self.beta1) * p.grad
            v = self.beta2 * v + (1 - self.beta2) * p.grad ** 2
            self.moments[name] = (m, v)
            mhat = m / (1 - self.beta1 ** t)
            vhat = v / (1 - self.beta2 ** t)
            p.data -= lr * mhat / (np.sqrt(vhat) + self.eps)


def clip_global_norm(params: dict[str, T.Tensor], max_norm: float) -> float:
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float((p.grad ** 2).sum())
    norm = np.sqrt(total)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad *= scale
    return norm


# ---------------------------------------------------------------------------
# sequence preparation

def sentence_sequences(vocab: codec.Vocab, texts: list[str]):
    """Plain-text sequences with an all-ones loss mask."""
    seqs = []
    for text in texts:
        if not text.endswith("\n"):
            text = text + "\n"
        ids = codec.encode(vocab, text)
        if len(ids) >= 2:
            seqs.append((ids, [1] * len(ids)))
    return seqs


def linearize_corpus(vocab: codec.Vocab, corpus,
                     max_history_turns: int = dialogue.DEFAULT_MAX_HISTORY_TURNS):
    """One (token_ids, loss_mask) training sequence per dialogue turn."""
    seqs = []
    for d in corpus.dialogues:
        for i, turn in enumerate(d.turns):
            lin = dialogue.linearize_turn(vocab, d.turns[:i], turn, max_history_turns)
            seqs.append((lin.token_ids, lin.loss_mask))
    return seqs


def corpus_language_sequences(vocab: codec.Vocab, corpus,
                              max_history_turns: int = dialogue.DEFAULT_MAX_HISTORY_TURNS):
    """Linearized turn sequences with every position supervised.

    Uses the same per-segment tokenization as fine-tuning and staged
    decoding, so backbone pretraining on dialogue-formatted text sees the
    exact token streams the later stages operate on.  Encoding the full
    serialized text in one pass would merge tokens across segment
    boundaries and train a different sequence.
    """
    return [(ids, [1] * len(ids))
            for ids, _ in linearize_corpus(vocab, corpus, max_history_turns)]


# ---------------------------------------------------------------------------
# steps and loops

def sequence_loss(model: M.Model, ids, mask) -> T.Tensor:
    """Masked next-token NLL of one sequence; position j predicts token j+1."""
    inputs = ids[:-1]
    targets = ids[1:]
    tmask = mask[1:]
    out = M.forward_full(model, inputs)
    if model.config.copy_enabled:
        return T.masked_nll_from_probs(out.mixed_probs, targets, tmask)
    return T.masked_cross_entropy(out.logits, targets, tmask)


def train_step(model: M.Model, batch, adam: AdamState, config: TrainConfig) -> float:
    """One optimizer step over a batch of (token_ids, loss_mask) sequences."""
    if not batch:
        raise TrainError("empty batch")
    trainable = model.trainable_params()
    for p in trainable.values():
        p.zero_grad()
    with T.ComputationRecord():
        losses = [sequence_loss(model, ids, mask) for ids, mask in batch]
        total = losses[0]
        for l in losses[1:]:
            total = T.add(total, l)
        loss = T.mul(total, 1.0 / len(losses))
        T.backward(loss)
    for name, p in model.params.items():
        if not p.requires_grad and p.grad is not None:
            raise AssertionError(f"gradient detected on frozen parameter {name}")
    clip_global_norm(trainable, config.grad_clip_norm)
    adam.update(trainable, config.learning_rate)
    return loss.item()


def _run_epochs(model, seqs, config, log_path=None):
    rng = np.random.default_rng(config.seed)
    adam = AdamState()
    log = []
    order = np.arange(len(seqs))
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        rng.shuffle(order)
        losses = []
        for start in range(0, len(order), config.batch_size):
            batch = [seqs[i] for i in order[start:start + config.batch_size]]
            losses.append(train_step(model, batch, adam, config))
        record = {"epoch": epoch, "mean_loss": float(np.mean(losses)),
                  "wall_time_s": time.perf_counter() - t0}
        log.append(record)
        if log_path is not None:
            with open(log_path, "a") as f:
                f.write(json.dumps(record) + "\n")
    return log


def pretrain_backbone(model: M.Model, plain_texts: list[str], vocab: codec.Vocab,
                      config: TrainConfig, log_path=None, dialogue_corpora=()):
    """Full-parameter next-token training with an all-ones mask.

    plain_texts are encoded whole; each corpus in dialogue_corpora is
    added as fully supervised linearized turn sequences.
    """
    config.validate()
    if config.mode != "pretrain_full":
        raise TrainError(f"pretrain_backbone requires mode pretrain_full, got {config.mode}")
    if model.config.adapter_enabled or model.config.copy_enabled:
        raise TrainError("pretraining requires adapters and copy head disabled")
    model.set_trainable(M.ParamPartition.all_trainable(model))
    seqs = sentence_sequences(vocab, plain_texts)
    for c in dialogue_corpora:
        seqs += corpus_language_sequences(vocab, c)
    return _run_epochs(model, seqs, config, log_path)


def finetune(model: M.Model, seqs, partition: M.ParamPartition,
             config: TrainConfig, log_path=None):
    """Dialogue fine-tuning over linearized (ids, mask) sequences.

    Frozen parameters are bit-identical afterwards; this is asserted, not
    assumed.
    """
    config.validate()
    if config.mode not in ("finetune_adapters", "finetune_full"):
        raise TrainError(f"finetune requires a finetune mode, got {config.mode}")
    model.set_trainable(partition)
    frozen_before = {n: model.params[n].data.copy() for n in partition.frozen}
    log = _run_epochs(model, seqs, config, log_path)
    for n, before in frozen_before.items():
        if not np.array_equal(model.params[n].data, before):
            raise AssertionError(f"frozen parameter {n} changed during finetune")
    return log


# ---------------------------------------------------------------------------
# evaluation helpers

def backbone_view(model: M.Model) -> M.Model:
    """The same parameters seen as a plain backbone (adapters/copy disabled)."""
    cfg = M.ModelConfig(**{**model.config.to_dict(),
                           "adapter_enabled": False, "copy_enabled": False})
    return M.Model(cfg, model.params)


def perplexity(model: M.Model, seqs) -> float:
    """exp(mean per-token NLL) over sequences, all positions supervised."""
    total_nll = 0.0
    total_tokens = 0
    with T.no_grad():
        for ids, _ in seqs:
            inputs, targets = ids[:-1], ids[1:]
            out = M.forward_full(model, inputs)
            if model.config.copy_enabled:
                loss = T.masked_nll_from_probs(out.mixed_probs, targets, [1] * len(targets))
            else:
                loss = T.masked_cross_entropy(out.logits, targets, [1] * len(targets))
            total_nll += loss.item() * len(targets)
            total_tokens += len(targets)
    return float(np.exp(total_nll / total_tokens))
