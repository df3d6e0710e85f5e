"""Decoder-only transformer with per-layer residual adapters and a copy head.

The backbone is a GPT-style pre-norm stack with tied input/output
embeddings.  Each block may be followed by a residual bottleneck adapter
(its own layer norm, bias-free down/up projections, ReLU, residual add)
that computes the identity at initialization because the up projection
starts at zero.  The copy head gates a convex mixture of the generation
softmax and the last layer's head-averaged attention scattered onto the
vocabulary ids of the context tokens.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor

# reference values at full pretrained scale, for documentation only
PAPER_N_LAYER = 12
PAPER_N_HEAD = 12
PAPER_D_MODEL = 768
DEFAULT_ADAPTER_SIZE = 512

ATTN_MASK_NEG = -1e30


class ConfigError(ValueError):
    pass


class LengthError(ValueError):
    pass


@dataclass
class ModelConfig:
    n_layer: int = 2
    n_head: int = 2
    d_model: int = 64
    d_ff: int = 256
    vocab_size: int = 512
    max_positions: int = 512
    adapter_size: int = 32
    adapter_enabled: bool = True
    copy_enabled: bool = True

    def validate(self):
        if self.d_model % self.n_head != 0:
            raise ConfigError(f"d_model {self.d_model} not divisible by n_head {self.n_head}")
        if self.adapter_size < 1:
            raise ConfigError(f"adapter_size must be >= 1, got {self.adapter_size}")
        for name in ("n_layer", "n_head", "d_model", "d_ff", "vocab_size", "max_positions"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")

    def to_dict(self):
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d) -> "ModelConfig":
        return cls(**d)


@dataclass
class AdapterLayer:
    ln_gamma: Tensor
    ln_beta: Tensor
    w_down: Tensor  # [H, A]
    w_up: Tensor    # [A, H]


@dataclass
class CopyHead:
    w_c: Tensor  # [2H, 1]
    b_c: Tensor  # [1]


@dataclass
class ParamPartition:
    frozen: set
    trainable: set

    def validate(self, model: "Model"):
        names = set(model.params)
        if self.frozen & self.trainable:
            raise ConfigError("frozen and trainable parameter sets overlap")
        if self.frozen | self.trainable != names:
            missing = names - (self.frozen | self.trainable)
            extra = (self.frozen | self.trainable) - names
            raise ConfigError(f"partition not exhaustive (missing={missing}, extra={extra})")

    @classmethod
    def all_trainable(cls, model: "Model") -> "ParamPartition":
        return cls(frozen=set(), trainable=set(model.params))

    @classmethod
    def adapter_finetune(cls, model: "Model") -> "ParamPartition":
        """Backbone frozen; adapter and copy-head parameters trainable."""
        trainable = {n for n in model.params
                     if n.startswith("copy.") or ".adapter." in n}
        return cls(frozen=set(model.params) - trainable, trainable=trainable)


@dataclass
class ForwardOutput:
    hidden: Tensor          # [T, H]
    gen_probs: Tensor       # [T, V]
    last_attention: Tensor  # [T, T], head-averaged, causal
    mixed_probs: Tensor     # [T, V]
    gate: Tensor | None     # [T, 1], None when the copy head is disabled
    logits: Tensor          # [T, V], pre-softmax generation scores
    copy_probs: Tensor | None = None  # [T, V] pointing distribution


class Model:
    def __init__(self, config: ModelConfig, params: dict[str, Tensor]):
        self.config = config
        self.params = params
        self.adapters = [
            AdapterLayer(params[f"h{i}.adapter.ln_g"], params[f"h{i}.adapter.ln_b"],
                         params[f"h{i}.adapter.w_down"], params[f"h{i}.adapter.w_up"])
            for i in range(config.n_layer)
        ] if config.adapter_enabled else []
        self.copy_head = CopyHead(params["copy.w_c"], params["copy.b_c"]) \
            if config.copy_enabled else None

    def set_trainable(self, partition: ParamPartition):
        partition.validate(self)
        for name, p in self.params.items():
            p.requires_grad = name in partition.trainable

    def trainable_params(self):
        return {n: p for n, p in self.params.items() if p.requires_grad}

    def n_params(self):
        return sum(p.data.size for p in self.params.values())


def init_model(config: ModelConfig, seed: int) -> Model:
    """Deterministic initialization: scaled-normal backbone, zero up
    projections (identity adapters), zero copy head (neutral 0.5 gate)."""
    config.validate()
    rng = np.random.default_rng(seed)
    c = config
    h, a = c.d_model, c.adapter_size

    def normal(*shape):
        return Tensor(rng.normal(0.0, 0.02, size=shape))

    params: dict[str, Tensor] = {
        "wte": normal(c.vocab_size, h),
        "wpe": normal(c.max_positions, h),
        "ln_f.g": Tensor(np.ones(h)),
        "ln_f.b": Tensor(np.zeros(h)),
    }
    for i in range(c.n_layer):
        p = f"h{i}."
        params[p + "ln1.g"] = Tensor(np.ones(h))
        params[p + "ln1.b"] = Tensor(np.zeros(h))
        for w in ("wq", "wk", "wv", "wo"):
            params[p + f"attn.{w}"] = normal(h, h)
        for b in ("bq", "bk", "bv", "bo"):
            params[p + f"attn.{b}"] = Tensor(np.zeros(h))
        params[p + "ln2.g"] = Tensor(np.ones(h))
        params[p + "ln2.b"] = Tensor(np.zeros(h))
        params[p + "mlp.w1"] = normal(h, c.d_ff)
        params[p + "mlp.b1"] = Tensor(np.zeros(c.d_ff))
        params[p + "mlp.w2"] = normal(c.d_ff, h)
        params[p + "mlp.b2"] = Tensor(np.zeros(h))
        if c.adapter_enabled:
            params[p + "adapter.ln_g"] = Tensor(np.ones(h))
            params[p + "adapter.ln_b"] = Tensor(np.zeros(h))
            params[p + "adapter.w_down"] = normal(h, a)
            params[p + "adapter.w_up"] = Tensor(np.zeros((a, h)))
    if c.copy_enabled:
        params["copy.w_c"] = Tensor(np.zeros((2 * h, 1)))
        params["copy.b_c"] = Tensor(np.zeros(1))
    return Model(config, params)


# ---------------------------------------------------------------------------
# forward passes

def adapter_forward(adapter: AdapterLayer, h: Tensor) -> Tensor:
    """Residual bottleneck: h + up(ReLU(down(LN(h))))."""
    if h.shape[-1] != adapter.w_down.shape[0]:
        raise T.ShapeError(f"adapter expects last dim {adapter.w_down.shape[0]}, "
                           f"got {h.shape}")
    z = T.layer_norm(h, adapter.ln_gamma, adapter.ln_beta)
    z = T.relu(T.matmul(z, adapter.w_down))
    return T.add(h, T.matmul(z, adapter.w_up))


def _causal_bias(t: int) -> Tensor:
    bias = np.triu(np.full((t, t), ATTN_MASK_NEG), k=1)
    return Tensor(bias)


def _block_forward(model: Model, i: int, x: Tensor, t: int):
    c = model.config
    p = model.params
    nh, dh = c.n_head, c.d_model // c.n_head
    pre = f"h{i}."

    a = T.layer_norm(x, p[pre + "ln1.g"], p[pre + "ln1.b"])
    q = T.add(T.matmul(a, p[pre + "attn.wq"]), p[pre + "attn.bq"])
    k = T.add(T.matmul(a, p[pre + "attn.wk"]), p[pre + "attn.bk"])
    v = T.add(T.matmul(a, p[pre + "attn.wv"]), p[pre + "attn.bv"])

    def heads(z):  # [T, H] -> [nh, T, dh]
        return T.transpose(T.reshape(z, (t, nh, dh)), (1, 0, 2))

    q, k, v = heads(q), heads(k), heads(v)
    scores = T.mul(T.matmul(q, T.transpose(k, (0, 2, 1))), 1.0 / np.sqrt(dh))
    att = T.softmax(T.add(scores, _causal_bias(t)), axis=-1)  # [nh, T, T]
    y = T.matmul(att, v)
    y = T.reshape(T.transpose(y, (1, 0, 2)), (t, c.d_model))
    x = T.add(x, T.add(T.matmul(y, p[pre + "attn.wo"]), p[pre + "attn.bo"]))

    m = T.layer_norm(x, p[pre + "ln2.g"], p[pre + "ln2.b"])
    ffn = T.relu(T.add(T.matmul(m, p[pre + "mlp.w1"]), p[pre + "mlp.b1"]))
    ffn = T.add(T.matmul(ffn, p[pre + "mlp.w2"]), p[pre + "mlp.b2"])
    x = T.add(x, ffn)

    if c.adapter_enabled:
        x = adapter_forward(model.adapters[i], x)
    return x, att


def _backbone(model: Model, tokens):
    c = model.config
    tokens = np.asarray(tokens, dtype=np.int64)
    t = len(tokens)
    if t > c.max_positions:
        raise LengthError(f"sequence length {t} exceeds max_positions {c.max_positions}")
    if t == 0:
        raise LengthError("empty token sequence")
    if int(tokens.max()) >= c.vocab_size:
        raise ConfigError(f"token id {int(tokens.max())} >= vocab_size {c.vocab_size}")

    p = model.params
    emb = T.add(T.gather_rows(p["wte"], tokens), T.gather_rows(p["wpe"], np.arange(t)))
    x = emb
    att = None
    for i in range(c.n_layer):
        x, att = _block_forward(model, i, x, t)
    hidden = T.layer_norm(x, p["ln_f.g"], p["ln_f.b"])
    logits = T.matmul(hidden, T.transpose(p["wte"]))
    gen_probs = T.softmax(logits, axis=-1)
    last_attention = T.tmean(att, axis=0)  # average over heads
    return emb, hidden, logits, gen_probs, last_attention


def backbone_forward(model: Model, tokens):
    """Causal transformer pass: (hidden, gen_probs, last_attention)."""
    _, hidden, _, gen_probs, last_attention = _backbone(model, tokens)
    return hidden, gen_probs, last_attention


def copy_gate(head: CopyHead, e_j: Tensor, h_j: Tensor) -> float:
    """Scalar gate sigma(w_c . [embedding; hidden] + b_c) for one position."""
    h = head.w_c.shape[0] // 2
    if e_j.shape != (h,) or h_j.shape != (h,):
        raise T.ShapeError(f"expected two vectors of length {h}, "
                           f"got {e_j.shape} and {h_j.shape}")
    cat = T.concat([T.reshape(e_j, (1, h)), T.reshape(h_j, (1, h))], axis=-1)
    z = T.add(T.matmul(cat, head.w_c), head.b_c)
    return float(T.sigmoid(z).data[0, 0])


def copy_distribution(attention_row, context_tokens, vocab_size: int) -> np.ndarray:
    """Scatter-add attention mass onto the vocab ids of the context tokens."""
    attention_row = np.asarray(attention_row, dtype=np.float64)
    context_tokens = np.asarray(context_tokens, dtype=np.int64)
    if attention_row.min() < 0 or abs(attention_row.sum() - 1.0) > 1e-9:
        raise ValueError("attention row must be a probability vector")
    if context_tokens.size and int(context_tokens.max()) >= vocab_size:
        raise ValueError(f"token id {int(context_tokens.max())} >= vocab_size {vocab_size}")
    out = np.zeros(vocab_size)
    np.add.at(out, context_tokens, attention_row)
    return out


def mix_distributions(gen, copy, g_c: float) -> np.ndarray:
    """Convex combination (1 - g_c) * gen + g_c * copy."""
    gen = np.asarray(gen, dtype=np.float64)
    copy = np.asarray(copy, dtype=np.float64)
    if not 0.0 <= g_c <= 1.0:
        raise ValueError(f"gate {g_c} outside [0, 1]")
    for name, p in (("gen", gen), ("copy", copy)):
        if p.min() < -1e-12 or abs(p.sum() - 1.0) > 1e-6:
            raise ValueError(f"{name} is not a probability vector")
    return (1.0 - g_c) * gen + g_c * copy


def forward_full(model: Model, tokens) -> ForwardOutput:
    """Backbone, copy gate, copy distribution and mixture, composed."""
    c = model.config
    emb, hidden, logits, gen_probs, last_attention = _backbone(model, tokens)
    if not c.copy_enabled:
        return ForwardOutput(hidden, gen_probs, last_attention,
                             mixed_probs=gen_probs, gate=None, logits=logits)
    cat = T.concat([emb, hidden], axis=-1)                      # [T, 2H]
    gate = T.sigmoid(T.add(T.matmul(cat, model.copy_head.w_c),
                           model.copy_head.b_c))                # [T, 1]
    copy_probs = T.scatter_add_rows(last_attention, np.asarray(tokens, dtype=np.int64),
                                    c.vocab_size)               # [T, V]
    mixed = T.add(T.mul(T.add(1.0, T.mul(gate, -1.0)), gen_probs),
                  T.mul(gate, copy_probs))
    return ForwardOutput(hidden, gen_probs, last_attention, mixed, gate, logits,
                         copy_probs=copy_probs)
