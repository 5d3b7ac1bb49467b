"""Document classifiers built on the shared sentence encoder.

``cnn``      the whole document encoded as one long sentence
``doc-cnn``  unweighted sum of sentence vectors
``at-cnn``   attention-weighted sum (tanh hidden layer, context vector)
``ra-cnn``   sum weighted by each sentence's probability of being a rationale
             in its most likely direction, max(p_pos, p_neg)

Every head is a bias-free softmax layer. Sentence classes are ordered
(neutral, positive rationale, negative rationale); document classes are
(neg, pos).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .config import TrainConfig
from .encoder import Batch, FilterBank, encode_batch
from .text import Document, random_embeddings

K_SEN = 3
K_DOC = 2


class CapabilityError(RuntimeError):
    """The model kind does not provide the requested output."""


def filter_bank(cfg: TrainConfig) -> FilterBank:
    return FilterBank(tuple(cfg.heights), cfg.maps)


def attention_size(cfg: TrainConfig) -> int:
    return cfg.attention_size or filter_bank(cfg).size


def _glorot(rng, shape):
    limit = np.sqrt(6.0 / (shape[0] + shape[-1]))
    return rng.uniform(-limit, limit, size=shape)


def init_params(cfg: TrainConfig, vocab_size: int, rng: np.random.Generator,
                embeddings: np.ndarray | None = None) -> dict[str, np.ndarray]:
    bank = filter_bank(cfg)
    if embeddings is None:
        E = random_embeddings(vocab_size, cfg.embedding_dim, rng, cfg.embedding_init)
    else:
        E = np.array(embeddings, dtype=np.float64)
    params = {"E": E}
    params.update(bank.init(E.shape[1], rng, cfg.filter_init))
    F = bank.size
    params["W_doc"] = _glorot(rng, (K_DOC, F))
    if cfg.model == "ra-cnn":
        params["W_sen"] = _glorot(rng, (K_SEN, F))
    if cfg.model == "at-cnn":
        a = attention_size(cfg)
        params["W_s"] = _glorot(rng, (a, F))
        params["b_s"] = np.zeros(a)
        params["u_s"] = _glorot(rng, (a, 1))[:, 0]
    return params


def bind(params: dict[str, np.ndarray], tape: T.Tape | None,
         trainable=None) -> dict[str, T.Tensor]:
    """Wrap arrays as tensors; only ``trainable`` names become tape parameters."""
    out = {}
    for name, arr in params.items():
        if tape is not None and (trainable is None or name in trainable):
            out[name] = tape.param(name, arr)
        else:
            out[name] = T.Tensor(arr)
    return out


@dataclass
class Output:
    doc_probs: T.Tensor                # [B, 2]
    doc_vectors: T.Tensor              # [B, |F|] before document dropout
    segments: np.ndarray               # [S] document index of each sentence
    sent_probs: T.Tensor | None = None  # [S, 3], ra-cnn only
    attention: T.Tensor | None = None   # [S], at-cnn only


@dataclass
class Prediction:
    class_probs: np.ndarray
    sentence_probs: np.ndarray | None = None  # [N, 3]: neutral, pos, neg
    attention: np.ndarray | None = None

    @property
    def predicted_class(self) -> int:
        return int(np.argmax(self.class_probs))

    @property
    def sentence_scores(self) -> list[tuple[float, float, float]] | None:
        """Per-sentence (p_pos, p_neg, p_neutral)."""
        if self.sentence_probs is None:
            return None
        return [(float(p[1]), float(p[2]), float(p[0])) for p in self.sentence_probs]


# --- building blocks ---------------------------------------------------------

def sentence_probs(sent_vecs: T.Tensor, W_sen: T.Tensor) -> T.Tensor:
    """Softmax over (neutral, pos, neg) for each row of ``sent_vecs``."""
    W_sen = T._wrap(W_sen)
    if sent_vecs.shape[-1] != W_sen.shape[1]:
        raise T.ShapeError(f"sentence vectors of size {sent_vecs.shape[-1]} "
                           f"do not fit W_sen {W_sen.shape}")
    return T.softmax(T.matmul(sent_vecs, _transpose(W_sen)))


def _transpose(w: T.Tensor) -> T.Tensor:
    w = T._wrap(w)
    return T._node(w.data.T, (w,), lambda g: (g.T,), "transpose")


def rationale_gate(probs: T.Tensor) -> T.Tensor:
    """max(p_pos, p_neg); ties route the gradient to p_pos."""
    return T.gate_max(T.column(probs, 1), T.column(probs, 2))


def racnn_doc_vector(sent_vecs: T.Tensor, gates: T.Tensor, segments=None,
                     n_docs: int = 1) -> T.Tensor:
    """Gate-weighted sum of sentence vectors per document."""
    if sent_vecs.shape[0] == 0:
        raise T.PreconditionError("document has no sentences")
    if segments is None:
        segments = np.zeros(sent_vecs.shape[0], dtype=np.int64)
    weighted = T.mul(sent_vecs, T.expand_last(gates))
    return T.segment_sum(weighted, segments, n_docs)


def _doc_softmax(x_doc: T.Tensor, P, cfg, train, rng) -> T.Tensor:
    dropped = T.dropout(x_doc, cfg.doc_dropout, train, rng)
    return T.softmax(T.matmul(dropped, _transpose(P["W_doc"])))


def _sentence_batch(docs: list[Document], bank: FilterBank):
    seqs, segs = [], []
    for i, d in enumerate(docs):
        seqs.extend(d.sentences)
        segs.extend([i] * len(d.sentences))
    return Batch.from_sequences(seqs, max(bank.heights)), np.asarray(segs, dtype=np.int64)


# --- forward passes ------------------------------------------------------------

def forward(docs: list[Document], P: dict[str, T.Tensor], cfg: TrainConfig,
            train: bool = False, rng: np.random.Generator | None = None,
            sentence_dropout: float | None = None, force_gate: float | None = None) -> Output:
    """Batched forward pass of ``cfg.model`` over ``docs``."""
    bank = filter_bank(cfg)
    B = len(docs)
    sd = cfg.sentence_dropout if sentence_dropout is None else sentence_dropout

    if cfg.model == "cnn":
        flat = [[t for s in d.sentences for t in s] for d in docs]
        batch = Batch.from_sequences(flat, max(bank.heights))
        x_doc = encode_batch(P, batch, bank)
        return Output(_doc_softmax(x_doc, P, cfg, train, rng), x_doc, np.arange(B))

    batch, segments = _sentence_batch(docs, bank)
    x_sen = encode_batch(P, batch, bank, sd, train, rng)
    if cfg.model == "doc-cnn":
        x_doc = T.segment_sum(x_sen, segments, B)
        return Output(_doc_softmax(x_doc, P, cfg, train, rng), x_doc, segments)

    if cfg.model == "at-cnn":
        hidden = T.tanh(T.add(T.matmul(x_sen, _transpose(P["W_s"])), P["b_s"]))
        scores = T.reshape(T.matmul(hidden, T.reshape(P["u_s"], (-1, 1))), (-1,))
        alpha = T.segment_softmax(scores, segments, B)
        x_doc = T.segment_sum(T.mul(x_sen, T.expand_last(alpha)), segments, B)
        return Output(_doc_softmax(x_doc, P, cfg, train, rng), x_doc, segments, attention=alpha)

    probs = sentence_probs(x_sen, P["W_sen"])
    gates = rationale_gate(probs)
    if force_gate is not None:
        gates = T.Tensor(np.full(gates.shape, float(force_gate)))
    x_doc = racnn_doc_vector(x_sen, gates, segments, B)
    return Output(_doc_softmax(x_doc, P, cfg, train, rng), x_doc, segments, sent_probs=probs)


def sentence_forward(sentences: list[list[int]], P: dict[str, T.Tensor], cfg: TrainConfig,
                     train: bool = False, rng: np.random.Generator | None = None,
                     sentence_dropout: float | None = None) -> T.Tensor:
    """Sentence-class probabilities ``[S, 3]`` for a flat list of sentences."""
    bank = filter_bank(cfg)
    sd = cfg.sentence_dropout if sentence_dropout is None else sentence_dropout
    x_sen = encode_batch(P, Batch.from_sequences(sentences, max(bank.heights)), bank, sd, train, rng)
    return sentence_probs(x_sen, P["W_sen"])


def predict(docs: list[Document], params: dict[str, np.ndarray], cfg: TrainConfig) -> list[Prediction]:
    """Eval-mode predictions (no dropout, no tape)."""
    out = forward(docs, bind(params, None), cfg)
    preds = []
    for i in range(len(docs)):
        rows = out.segments == i
        preds.append(Prediction(
            out.doc_probs.data[i].copy(),
            None if out.sent_probs is None else out.sent_probs.data[rows].copy(),
            None if out.attention is None else out.attention.data[rows].copy(),
        ))
    return preds


def _single(kind: str, doc: Document, params, cfg: TrainConfig) -> Prediction:
    return predict([doc], params, cfg.replace(model=kind))[0]


def racnn_forward(doc: Document, params, cfg: TrainConfig) -> Prediction:
    return _single("ra-cnn", doc, params, cfg)


def doccnn_forward(doc: Document, params, cfg: TrainConfig) -> Prediction:
    return _single("doc-cnn", doc, params, cfg)


def atcnn_forward(doc: Document, params, cfg: TrainConfig) -> Prediction:
    return _single("at-cnn", doc, params, cfg)


def cnn_forward(doc: Document, params, cfg: TrainConfig) -> Prediction:
    return _single("cnn", doc, params, cfg)


def rank_rationales(pred: Prediction) -> list[tuple[int, float]]:
    """Sentences by descending max(p_pos, p_neg); ties keep sentence order."""
    if pred.sentence_probs is None:
        raise CapabilityError("model provides no rationale scores")
    scores = np.maximum(pred.sentence_probs[:, 1], pred.sentence_probs[:, 2])
    order = sorted(range(len(scores)), key=lambda j: -scores[j])
    return [(j, float(scores[j])) for j in order]


def doc_loss(docs, P, cfg, train, rng, sentence_dropout=None) -> tuple[T.Tensor, Output]:
    out = forward(docs, P, cfg, train, rng, sentence_dropout)
    return T.cross_entropy(out.doc_probs, [d.label for d in docs]), out
