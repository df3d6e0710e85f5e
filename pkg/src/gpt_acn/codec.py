"""Lossless tokenizer: byte fallback plus greedy frequency-trained merges.

The 256 single-byte tokens are always present, so every byte string is
encodable and no unknown token exists.  Unseen entity strings therefore
stay representable (and copyable) as token sequences.
"""
from __future__ import annotations

from collections import Counter


class CodecError(ValueError):
    pass


class Vocab:
    """Immutable token <-> id bijection. Ids are dense from 0; ids 0..255 are
    the single bytes, learned multi-byte tokens follow in training rank order."""

    def __init__(self, tokens: list[bytes]):
        self.tokens = list(tokens)
        self.token_to_id = {t: i for i, t in enumerate(self.tokens)}
        if len(self.token_to_id) != len(self.tokens):
            raise CodecError("duplicate token in vocabulary")
        self._max_len = max(len(t) for t in self.tokens)

    def __len__(self):
        return len(self.tokens)

    def save(self, path):
        with open(path, "w") as f:
            for t in self.tokens:
                f.write(t.hex() + "\n")

    @classmethod
    def load(cls, path) -> "Vocab":
        with open(path) as f:
            tokens = [bytes.fromhex(line.strip()) for line in f if line.strip()]
        return cls(tokens)


def train_vocab(corpus_texts: list[str], target_size: int) -> Vocab:
    """Greedy byte-pair merging until target_size tokens or no pair repeats.

    Deterministic: the most frequent adjacent pair wins, ties broken by
    lexicographic order of the (left, right) byte strings.
    """
    if target_size < 256:
        raise CodecError(f"target_size must be >= 256, got {target_size}")
    tokens = [bytes([i]) for i in range(256)]
    seqs = [[bytes([b]) for b in text.encode("utf-8")] for text in corpus_texts]
    while len(tokens) < target_size:
        counts = Counter()
        for seq in seqs:
            for a, b in zip(seq, seq[1:]):
                counts[(a, b)] += 1
        if not counts:
            break
        best = min(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        (left, right), n = best
        if n < 2:
            break
        merged = left + right
        tokens.append(merged)
        for si, seq in enumerate(seqs):
            out = []
            i = 0
            while i < len(seq):
                if i + 1 < len(seq) and seq[i] == left and seq[i + 1] == right:
                    out.append(merged)
                    i += 2
                else:
                    out.append(seq[i])
                    i += 1
            seqs[si] = out
    return Vocab(tokens)


def encode_bytes(vocab: Vocab, data: bytes) -> list[int]:
    """Greedy longest-match segmentation; byte fallback guarantees progress."""
    ids = []
    i = 0
    n = len(data)
    while i < n:
        for length in range(min(vocab._max_len, n - i), 0, -1):
            tid = vocab.token_to_id.get(data[i:i + length])
            if tid is not None:
                ids.append(tid)
                i += length
                break
    return ids


def decode_bytes(vocab: Vocab, ids) -> bytes:
    parts = []
    for i in ids:
        i = int(i)
        if i < 0 or i >= len(vocab.tokens):
            raise CodecError(f"unknown token id {i}")
        parts.append(vocab.tokens[i])
    return b"".join(parts)


def encode(vocab: Vocab, text: str) -> list[int]:
    return encode_bytes(vocab, text.encode("utf-8"))


def decode(vocab: Vocab, ids) -> str:
    # generated id sequences may end mid way through a multi-byte character
    return decode_bytes(vocab, ids).decode("utf-8", errors="replace")
