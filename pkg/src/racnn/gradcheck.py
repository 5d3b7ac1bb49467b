"""Central finite-difference checks of the full training loss."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .config import TrainConfig
from .models import bind, forward, init_params
from .text import PAD, Document, derive_sentence_labels

FD_STEP = 1e-6


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)


def tiny_instance(kind: str, seed: int) -> tuple[TrainConfig, list[Document], dict[str, np.ndarray]]:
    """Vocabulary 20, d=4, heights (2, 3), two maps each, two documents of 2-3 sentences."""
    rng = np.random.default_rng(seed)
    cfg = TrainConfig(model=kind, heights=(2, 3), maps_per_height=2, cnn_maps_per_height=2,
                      embedding_dim=4, sentence_dropout=0.3, doc_dropout=0.3)
    docs = []
    for i, n_sent in enumerate((2, 3)):
        sents = [rng.integers(2, 20, size=rng.integers(2, 6)).tolist() for _ in range(n_sent)]
        mask = [j == i for j in range(n_sent)]
        docs.append(Document(f"d{i}", sents, i % 2, mask))
    params = init_params(cfg, 20, rng)
    # move off the tiny-init regime so ReLU/max kinks are far from the probe step
    for name in params:
        if name != "E":
            params[name] = rng.normal(scale=0.5, size=params[name].shape)
    params["E"] = rng.normal(scale=0.5, size=params["E"].shape)
    params["E"][PAD] = 0.0
    return cfg, docs, params


def full_loss(params, cfg: TrainConfig, docs: list[Document], seed: int,
              tape: T.Tape | None = None) -> T.Tensor:
    """Document loss plus, for ra-cnn, the sentence loss, with a fixed dropout draw."""
    rng = np.random.default_rng([seed, 1])
    P = bind(params, tape)
    out = forward(docs, P, cfg, train=True, rng=rng)
    loss = T.cross_entropy(out.doc_probs, [d.label for d in docs])
    if out.sent_probs is not None:
        labels = [int(x) for d in docs for x in derive_sentence_labels(d)]
        loss = T.add(loss, T.cross_entropy(out.sent_probs, labels))
    return loss


@dataclass
class GradCheckResult:
    kind: str
    max_error: float
    worst_param: str
    per_param: dict[str, float]

    @property
    def ok(self) -> bool:
        return self.max_error < 1e-4


def check_gradients(kind: str, seed: int = 0, corrupt: str | None = None) -> GradCheckResult:
    """Compare backprop against central differences for every parameter element.

    ``corrupt`` names a parameter whose analytic gradient is deliberately
    perturbed; it exists so the failure path can be exercised.
    """
    cfg, docs, params = tiny_instance(kind, seed)
    tape = T.Tape()
    grads = tape.backward(full_loss(params, cfg, docs, seed, tape))
    if corrupt is not None:
        grads[corrupt] = grads[corrupt] + 1e-2
    per_param = {}
    for name in sorted(params):
        p = params[name]
        numeric = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + FD_STEP
            up = float(full_loss(params, cfg, docs, seed).data)
            p[idx] = orig - FD_STEP
            down = float(full_loss(params, cfg, docs, seed).data)
            p[idx] = orig
            numeric[idx] = (up - down) / (2 * FD_STEP)
        per_param[name] = float(relative_error(grads[name], numeric).max())
    worst = max(per_param, key=per_param.get)
    return GradCheckResult(kind, per_param[worst], worst, per_param)


__all__ = ["FD_STEP", "GradCheckResult", "check_gradients", "full_loss", "relative_error",
           "tiny_instance"]
