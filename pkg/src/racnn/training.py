"""Optimization and experiment protocol.

RA-CNN is fit in two phases. The sentence phase trains (E, C, W_sen) on
class-balanced sentence samples drawn fresh every epoch. The document phase
starts from those E and C, keeps W_sen frozen, and fits (E, C, W_doc) on
document labels with early stopping on a held-out validation split. The
baselines run the document phase only.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .config import TrainConfig
from .models import bind, doc_loss, init_params, predict, sentence_forward
from .text import PAD, ConfigError, DataError, Document, SentenceLabel, derive_sentence_labels

log = logging.getLogger(__name__)


# --- ADADELTA ----------------------------------------------------------------

@dataclass
class AdadeltaState:
    rho: float = 0.95
    epsilon: float = 1e-6
    sq_grad: dict[str, np.ndarray] = field(default_factory=dict)
    sq_delta: dict[str, np.ndarray] = field(default_factory=dict)


def adadelta_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
                  state: AdadeltaState) -> tuple[dict[str, np.ndarray], AdadeltaState]:
    """One ADADELTA update (no learning rate), applied in place.

    Only names present in ``grads`` move. Row PAD of ``E`` never changes.
    """
    rho, eps = state.rho, state.epsilon
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise T.ShapeError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        if name == "E":
            g = g.copy()
            g[PAD] = 0.0
        acc_g = state.sq_grad.setdefault(name, np.zeros_like(p))
        acc_d = state.sq_delta.setdefault(name, np.zeros_like(p))
        acc_g *= rho
        acc_g += (1.0 - rho) * g * g
        delta = -np.sqrt(acc_d + eps) / np.sqrt(acc_g + eps) * g
        acc_d *= rho
        acc_d += (1.0 - rho) * delta * delta
        p += delta
    return params, state


# --- sampling and early stopping ---------------------------------------------

def balanced_downsample(labels, rng: np.random.Generator) -> np.ndarray:
    """Indices with equally many sentences of each class, shuffled.

    Every class is cut down to the size of the smallest one, sampling without
    replacement.
    """
    labels = np.asarray(labels)
    groups = []
    for c in SentenceLabel:
        idx = np.flatnonzero(labels == c)
        if idx.size == 0:
            raise DataError(f"no sentences of class {c.name} in the training pool")
        groups.append(idx)
    m = min(g.size for g in groups)
    picked = np.concatenate([rng.choice(g, size=m, replace=False) for g in groups])
    return rng.permutation(picked)


def early_stop(history: list[float], patience: int) -> tuple[bool, int]:
    """``(stop, best_epoch)`` for a validation-accuracy history (0-based epochs).

    Training stops once the latest epoch failed to improve on the best so far
    and ``patience`` epochs (at least one) have passed since the best.
    """
    if not history:
        raise ValueError("early_stop needs at least one epoch of history")
    best = int(np.argmax(history))  # first occurrence: strict improvement only
    since = len(history) - 1 - best
    return since >= max(patience, 1), best


# --- phases ------------------------------------------------------------------

SENTENCE_PARAMS = ("W_sen",)


def _encoder_names(params) -> list[str]:
    return ["E"] + sorted(n for n in params if n.startswith("conv_"))


def _batches(n: int, size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, size):
        yield order[start:start + size]


def sentence_pool(docs: list[Document]) -> tuple[list[list[int]], np.ndarray]:
    sents, labels = [], []
    for d in docs:
        sents.extend(d.sentences)
        labels.extend(int(x) for x in derive_sentence_labels(d))
    return sents, np.asarray(labels)


def train_sentence_phase(docs: list[Document], cfg: TrainConfig, params: dict[str, np.ndarray],
                         rng: np.random.Generator, epochs: int | None = None):
    """Fit (E, C, W_sen) on balanced sentence samples. Returns (params, epoch losses)."""
    sents, labels = sentence_pool(docs)
    if not np.any(labels != SentenceLabel.NEUTRAL):
        raise DataError("no rationale sentences in the training documents")
    params = {k: v.copy() for k, v in params.items()}
    trainable = _encoder_names(params) + ["W_sen"]
    state = AdadeltaState(cfg.rho, cfg.epsilon)
    losses = []
    for epoch in range(cfg.sentence_epochs if epochs is None else epochs):
        sample = balanced_downsample(labels, rng)
        total, count = 0.0, 0
        for start in range(0, len(sample), cfg.batch_size):
            idx = sample[start:start + cfg.batch_size]
            tape = T.Tape()
            P = bind(params, tape, trainable)
            probs = sentence_forward([sents[i] for i in idx], P, cfg, True, rng)
            loss = T.cross_entropy(probs, labels[idx])
            adadelta_step(params, tape.backward(loss), state)
            total += float(loss.data) * len(idx)
            count += len(idx)
        losses.append(total / count)
        log.debug("sentence epoch %d loss %.4f", epoch, losses[-1])
    return params, losses


def accuracy_of(params, docs: list[Document], cfg: TrainConfig) -> float:
    if not docs:
        return float("nan")
    hits = 0
    for start in range(0, len(docs), 200):
        chunk = docs[start:start + 200]
        hits += sum(p.predicted_class == d.label for p, d in zip(predict(chunk, params, cfg), chunk))
    return hits / len(docs)


@dataclass
class DocPhaseResult:
    params: dict[str, np.ndarray]
    best_epoch: int
    history: list[float]
    losses: list[float]


def train_document_phase(train_docs: list[Document], val_docs: list[Document],
                         params: dict[str, np.ndarray], cfg: TrainConfig,
                         rng: np.random.Generator, sentence_dropout: float | None = None,
                         max_epochs: int | None = None) -> DocPhaseResult:
    """Fit the document classifier with early stopping; W_sen stays fixed."""
    params = {k: v.copy() for k, v in params.items()}
    trainable = [n for n in params if n not in SENTENCE_PARAMS]
    if sentence_dropout is None:
        sentence_dropout = cfg.sentence_dropout
    if cfg.model == "ra-cnn" and not cfg.sentence_dropout_in_phase2:
        sentence_dropout = 0.0
    state = AdadeltaState(cfg.rho, cfg.epsilon)
    history, losses = [], []
    best = {k: v.copy() for k, v in params.items()}
    best_epoch = -1
    n_epochs = cfg.max_epochs if max_epochs is None else max_epochs
    for epoch in range(n_epochs):
        total = 0.0
        for idx in _batches(len(train_docs), cfg.batch_size, rng):
            batch = [train_docs[i] for i in idx]
            tape = T.Tape()
            P = bind(params, tape, trainable)
            loss, _ = doc_loss(batch, P, cfg, True, rng, sentence_dropout)
            adadelta_step(params, tape.backward(loss), state)
            total += float(loss.data) * len(batch)
        losses.append(total / len(train_docs))
        history.append(accuracy_of(params, val_docs, cfg))
        stop, best_epoch_now = early_stop(history, cfg.patience)
        if best_epoch_now == epoch:
            best = {k: v.copy() for k, v in params.items()}
            best_epoch = epoch
        log.debug("doc epoch %d loss %.4f val %.4f", epoch, losses[-1], history[-1])
        if stop:
            break
    return DocPhaseResult(best, best_epoch, history, losses)


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    best_epoch: int
    sentence_dropout: float
    val_accuracy: float
    phase1_params: dict[str, np.ndarray] | None = None
    sentence_losses: list[float] = field(default_factory=list)


def _stream(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


def split_validation(docs: list[Document], fraction: float,
                     rng: np.random.Generator) -> tuple[list[Document], list[Document]]:
    if len(docs) < 2:
        raise ConfigError("need at least two training documents to hold out validation data")
    n_val = min(len(docs) - 1, max(1, int(round(fraction * len(docs)))))
    order = rng.permutation(len(docs))
    val = set(order[:n_val].tolist())
    return ([d for i, d in enumerate(docs) if i not in val],
            [d for i, d in enumerate(docs) if i in val])


def train_model(docs: list[Document], vocab_size: int, cfg: TrainConfig, key=(0,),
                embeddings: np.ndarray | None = None, tune: bool | None = None,
                use_phase1: bool = True) -> TrainResult:
    """Full training run for ``cfg.model`` from a fresh initialization.

    ``key`` seeds independent random streams for initialization, the
    validation split, each phase, and each candidate sentence-dropout rate.
    """
    key = tuple(int(k) for k in key)
    train, val = split_validation(docs, cfg.validation_fraction, _stream(*key, 0))
    params = init_params(cfg, vocab_size, _stream(*key, 1), embeddings)
    phase1, losses = None, []
    if cfg.model == "ra-cnn" and use_phase1:
        params, losses = train_sentence_phase(train, cfg, params, _stream(*key, 2))
        phase1 = {k: v.copy() for k, v in params.items()}

    if tune is None:
        tune = cfg.model == "ra-cnn" and cfg.tune_sentence_dropout
    rates = sorted(set(cfg.sentence_dropout_grid)) if tune else [cfg.sentence_dropout]
    best_result, best_rate = None, None
    for rate in rates:
        res = train_document_phase(train, val, params, cfg, _stream(*key, 3), rate)
        score = res.history[res.best_epoch] if res.best_epoch >= 0 else -1.0
        # ties keep the smaller rate
        if best_result is None or score > best_result.history[best_result.best_epoch]:
            best_result, best_rate = res, rate
        log.debug("rate %.1f val %.4f", rate, score)
    val_acc = best_result.history[best_result.best_epoch] if best_result.best_epoch >= 0 else float("nan")
    return TrainResult(best_result.params, best_result.best_epoch, best_rate, val_acc,
                       phase1, losses)


# --- cross-validation --------------------------------------------------------

@dataclass
class FoldResult:
    model: str
    replication: int
    fold: int
    accuracy: float
    best_epoch: int
    sentence_dropout: float

    def row(self) -> dict:
        return {"model": self.model, "fold": self.fold, "replication": self.replication,
                "accuracy": self.accuracy, "best_epoch": self.best_epoch,
                "sentence_dropout": self.sentence_dropout}


def fold_splits(n_docs: int, folds: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Test-index sets of a shuffled k-fold partition."""
    if folds > n_docs:
        raise ConfigError(f"folds: {folds} folds for only {n_docs} documents")
    return [np.sort(part) for part in np.array_split(rng.permutation(n_docs), folds)]


def _run_fold(job):
    docs, vocab_size, cfg, rep, fold, test_idx, embeddings = job
    test_set = set(test_idx.tolist())
    train = [d for i, d in enumerate(docs) if i not in test_set]
    test = [docs[i] for i in test_idx]
    res = train_model(train, vocab_size, cfg, (cfg.seed + rep, fold), embeddings)
    acc = accuracy_of(res.params, test, cfg)
    log.info("%s rep %d fold %d acc %.4f", cfg.model, rep, fold, acc)
    return FoldResult(cfg.model, rep, fold, acc, res.best_epoch, res.sentence_dropout)


@dataclass
class CVReport:
    rows: list[FoldResult]
    mean: float
    low: float
    high: float
    per_replication: list[float]

    def summary(self) -> dict:
        return {"model": self.rows[0].model, "fold": "all", "replication": "all",
                "accuracy": self.mean, "min": self.low, "max": self.high,
                "folds": len({r.fold for r in self.rows}),
                "replications": len(self.per_replication)}


def summarize(rows: list[FoldResult]) -> CVReport:
    """Mean over replications of per-replication fold-mean accuracy, with the observed range."""
    reps = sorted({r.replication for r in rows})
    per_rep = [float(np.mean([r.accuracy for r in rows if r.replication == k])) for k in reps]
    return CVReport(rows, float(np.mean(per_rep)), min(per_rep), max(per_rep), per_rep)


def run_cross_validation(docs: list[Document], vocab_size: int, cfg: TrainConfig,
                         embeddings: np.ndarray | None = None) -> CVReport:
    jobs = []
    for rep in range(cfg.replications):
        splits = fold_splits(len(docs), cfg.folds, _stream(cfg.seed + rep))
        for fold, test_idx in enumerate(splits):
            jobs.append((docs, vocab_size, cfg, rep, fold, test_idx, embeddings))
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(_run_fold, jobs))
    else:
        rows = [_run_fold(j) for j in jobs]
    return summarize(rows)
