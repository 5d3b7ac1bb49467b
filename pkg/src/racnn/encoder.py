"""Convolutional sentence encoder: embed, convolve, ReLU, 1-max pool, concatenate.

Sentences of one mini-batch are stacked into a single ``[S, L, d]`` block padded
with PAD. Pooling only looks at windows inside each sentence's own (padded to
the tallest filter) length, so the batched result equals encoding each sentence
on its own.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .text import PAD


@dataclass(frozen=True)
class FilterBank:
    heights: tuple[int, ...] = (3, 4, 5)
    maps_per_height: int = 20

    @property
    def size(self) -> int:
        return len(self.heights) * self.maps_per_height

    def names(self) -> list[str]:
        return [n for h in self.heights for n in (f"conv_w_{h}", f"conv_b_{h}")]

    def init(self, dim: int, rng: np.random.Generator, scale: float = 0.01) -> dict[str, np.ndarray]:
        out = {}
        for h in self.heights:
            out[f"conv_w_{h}"] = rng.uniform(-scale, scale, size=(self.maps_per_height, h, dim))
            out[f"conv_b_{h}"] = np.zeros(self.maps_per_height)
        return out


@dataclass
class Batch:
    """Padded token ids for a list of sequences."""
    ids: np.ndarray       # [S, L]
    lengths: np.ndarray   # [S], each >= tallest filter

    @classmethod
    def from_sequences(cls, seqs: list[list[int]], min_len: int) -> "Batch":
        lengths = np.array([max(len(s), min_len) for s in seqs], dtype=np.int64)
        ids = np.full((len(seqs), int(lengths.max())), PAD, dtype=np.int64)
        for i, s in enumerate(seqs):
            ids[i, : len(s)] = s
        return cls(ids, lengths)


def encode_batch(P: dict[str, T.Tensor], batch: Batch, bank: FilterBank,
                 dropout_rate: float = 0.0, train: bool = False,
                 rng: np.random.Generator | None = None) -> T.Tensor:
    """Sentence vectors ``[S, |F|]`` ordered by ascending height, then filter index."""
    x = T.embed(P["E"], batch.ids)
    pooled = []
    for h in sorted(bank.heights):
        fmap = T.relu(T.conv_bank(x, P[f"conv_w_{h}"], P[f"conv_b_{h}"]))
        pooled.append(T.masked_max_pool(fmap, batch.lengths - h + 1))
    out = T.concat(pooled, axis=-1) if len(pooled) > 1 else pooled[0]
    return T.dropout(out, dropout_rate, train, rng)


def encode_sentence(token_ids: list[int], P: dict[str, T.Tensor], bank: FilterBank,
                    dropout_rate: float = 0.0, train: bool = False,
                    rng: np.random.Generator | None = None) -> T.Tensor:
    batch = Batch.from_sequences([list(token_ids)], max(bank.heights))
    return T.reshape(encode_batch(P, batch, bank, dropout_rate, train, rng), (bank.size,))


def encode_document_flat(sentences: list[list[int]], P: dict[str, T.Tensor], bank: FilterBank,
                         dropout_rate: float = 0.0, train: bool = False,
                         rng: np.random.Generator | None = None) -> T.Tensor:
    """Encode a whole document as one long sentence."""
    return encode_sentence([t for s in sentences for t in s], P, bank, dropout_rate, train, rng)
