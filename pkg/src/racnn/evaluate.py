"""Metrics, explanation reports, and the planted-rationale synthetic corpus.

Synthetic documents
-------------------
Every document has ``sentences_per_doc`` sentences of ``tokens_per_sentence``
tokens. ``rationales_per_doc`` of them are planted rationales: neutral filler
plus ``cues_per_rationale`` words from the cue lexicon of the document's
label. With probability ``noise`` each remaining sentence becomes a decoy:
it carries the same number of cue words from the *opposite* lexicon plus one
word from the marker lexicon, at random positions. Decoys are not rationales,
so a sentence-level learner can tell them apart, while a bag-of-words count
of cue words is misled by them.

Report schema
-------------
``emit_report`` writes two files:

``report.tsv``  tab-separated, header ``model dataset n mean min max``, one row
                per (model, dataset), sorted by model then dataset
``report.md``   a markdown table, models as rows and datasets as columns,
                cells ``mean (min, max)`` as percentages with two decimals
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .models import Prediction, rank_rationales
from .text import LABEL_NAMES, Document, write_corpus


class SpecError(ValueError):
    """Invalid synthetic corpus specification."""


def _lexicon(prefix: str, n: int) -> tuple[str, ...]:
    return tuple(f"{prefix}{i:02d}" for i in range(n))


@dataclass
class SyntheticSpec:
    num_docs: int = 600
    sentences_per_doc: int = 12
    tokens_per_sentence: int = 10
    rationales_per_doc: int = 2
    cues_per_rationale: int = 1
    noise: float = 0.0
    seed: int = 0
    positive_cues: tuple[str, ...] = _lexicon("good", 40)
    negative_cues: tuple[str, ...] = _lexicon("bad", 40)
    neutral: tuple[str, ...] = _lexicon("word", 40)
    markers: tuple[str, ...] = _lexicon("maybe", 5)

    def validate(self) -> None:
        lex = [set(self.positive_cues), set(self.negative_cues), set(self.neutral), set(self.markers)]
        if any(not s for s in lex):
            raise SpecError("lexicons must be non-empty")
        for i in range(len(lex)):
            for j in range(i + 1, len(lex)):
                if lex[i] & lex[j]:
                    raise SpecError(f"lexicons overlap: {sorted(lex[i] & lex[j])[:5]}")
        if not 1 <= self.rationales_per_doc <= self.sentences_per_doc:
            raise SpecError("rationales_per_doc must lie in [1, sentences_per_doc]")
        if not 1 <= self.cues_per_rationale < self.tokens_per_sentence:
            raise SpecError("cues_per_rationale must lie in [1, tokens_per_sentence)")
        if not 0.0 <= self.noise <= 1.0:
            raise SpecError("noise must lie in [0, 1]")
        if self.num_docs < 1:
            raise SpecError("num_docs must be positive")


@dataclass
class SyntheticDoc:
    doc_id: str
    label: str
    sentences: list[list[str]]
    rationale_indices: list[int]
    decoy_indices: list[int] = field(default_factory=list)

    def text(self) -> str:
        return " ".join(" ".join([s[0].capitalize()] + s[1:]) + "." for s in self.sentences)

    def record(self) -> dict:
        return {"doc_id": self.doc_id, "label": self.label, "text": self.text(),
                "rationale_sentence_indices": self.rationale_indices}


def _sentence(rng, spec: SyntheticSpec, cues, marker: bool) -> list[str]:
    n = spec.tokens_per_sentence
    words = [spec.neutral[i] for i in rng.integers(len(spec.neutral), size=n)]
    slots = rng.choice(n, size=spec.cues_per_rationale + int(marker), replace=False)
    for pos in slots[: spec.cues_per_rationale]:
        words[pos] = cues[rng.integers(len(cues))]
    if marker:
        words[slots[-1]] = spec.markers[rng.integers(len(spec.markers))]
    return words


def generate_synthetic_docs(spec: SyntheticSpec) -> list[SyntheticDoc]:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    docs = []
    for i in range(spec.num_docs):
        label = "pos" if rng.random() < 0.5 else "neg"
        own, other = ((spec.positive_cues, spec.negative_cues) if label == "pos"
                      else (spec.negative_cues, spec.positive_cues))
        rationale = sorted(rng.choice(spec.sentences_per_doc, size=spec.rationales_per_doc,
                                      replace=False).tolist())
        sentences, decoys = [], []
        for j in range(spec.sentences_per_doc):
            if j in rationale:
                sentences.append(_sentence(rng, spec, own, marker=False))
            elif rng.random() < spec.noise:
                sentences.append(_sentence(rng, spec, other, marker=True))
                decoys.append(j)
            else:
                sentences.append([spec.neutral[k] for k in
                                  rng.integers(len(spec.neutral), size=spec.tokens_per_sentence)])
        docs.append(SyntheticDoc(f"syn-{spec.seed}-{i:05d}", label, sentences, rationale, decoys))
    return docs


def generate_synthetic(spec: SyntheticSpec, path) -> list[SyntheticDoc]:
    """Write a corpus file in the JSON-lines corpus format; returns the ground truth."""
    docs = generate_synthetic_docs(spec)
    write_corpus(path, (d.record() for d in docs))
    return docs


def synthetic_embeddings(spec: SyntheticSpec, dim: int, path=None,
                         spread: float = 0.1) -> dict[str, np.ndarray]:
    """Word vectors that cluster by lexicon, standing in for pre-trained ones.

    Each lexicon gets a random centroid of norm 0.5; each word adds isotropic
    noise of total scale ``spread``. Written in the word-vector text format when
    ``path`` is given.
    """
    rng = np.random.default_rng([spec.seed, 7919])
    vectors = {}
    for lex in (spec.positive_cues, spec.negative_cues, spec.neutral, spec.markers):
        centre = rng.normal(size=dim)
        centre *= 0.5 / np.linalg.norm(centre)
        for w in lex:
            vectors[w] = centre + rng.normal(scale=spread / np.sqrt(dim), size=dim)
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"{len(vectors)} {dim}\n")
            for w, v in vectors.items():
                fh.write(w + " " + " ".join(repr(float(x)) for x in v) + "\n")
    return vectors


def cue_oracle(tokens: list[str], spec: SyntheticSpec) -> str:
    """Majority vote of cue words; ties go to 'pos'."""
    pos = sum(t in spec.positive_cues for t in tokens)
    neg = sum(t in spec.negative_cues for t in tokens)
    return "neg" if neg > pos else "pos"


# --- metrics ---------------------------------------------------------------

def accuracy(predictions: dict[str, int], gold: dict[str, int]) -> float:
    """Exact-match fraction over aligned document ids."""
    if set(predictions) != set(gold):
        raise ValueError("prediction and gold id sets differ")
    if not gold:
        raise ValueError("no documents to score")
    return sum(predictions[k] == gold[k] for k in gold) / len(gold)


def rationale_precision_at_k(ranking: list[int], gold_mask: list[bool], k: int) -> float:
    """Fraction of the top-``k`` ranked sentences that are gold rationales."""
    if k < 1:
        raise ValueError("k must be >= 1")
    k = min(k, len(ranking))
    return sum(bool(gold_mask[j]) for j in ranking[:k]) / k


# --- explanations ------------------------------------------------------------

@dataclass
class ExplanationReport:
    doc_id: str
    predicted_class: str
    probability: float
    top: list[tuple[int, str, float]]
    gold_label: str | None = None
    gold_rationales: list[bool] | None = None

    def to_dict(self) -> dict:
        return {"doc_id": self.doc_id, "predicted": self.predicted_class,
                "probability": self.probability,
                "rationales": [{"index": i, "text": t, "score": s} for i, t, s in self.top],
                "gold_label": self.gold_label, "gold_rationales": self.gold_rationales}


def explain(doc: Document, pred: Prediction, k: int) -> ExplanationReport:
    ranked = rank_rationales(pred)[: max(1, k)]
    texts = doc.text or [""] * len(doc.sentences)
    c = pred.predicted_class
    return ExplanationReport(doc.doc_id, LABEL_NAMES[c], float(pred.class_probs[c]),
                             [(j, texts[j], s) for j, s in ranked],
                             LABEL_NAMES[doc.label], list(doc.rationale_mask))


def write_explanations(reports: list[ExplanationReport], fh) -> None:
    for r in reports:
        fh.write(json.dumps(r.to_dict()) + "\n")


# --- reports -------------------------------------------------------------------

@dataclass
class ResultRow:
    model: str
    dataset: str
    values: list[float]


def emit_report(results: list[ResultRow], out_dir) -> tuple[Path, Path]:
    """Write ``report.tsv`` and ``report.md`` (mean and range per model/dataset)."""
    if not results:
        raise ValueError("emit_report needs at least one result row")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = sorted(results, key=lambda r: (r.model, r.dataset))
    stats = {(r.model, r.dataset): (len(r.values), float(np.mean(r.values)),
                                    float(min(r.values)), float(max(r.values))) for r in rows}

    tsv = ["model\tdataset\tn\tmean\tmin\tmax"]
    for (m, ds), (n, mu, lo, hi) in stats.items():
        tsv.append(f"{m}\t{ds}\t{n}\t{mu:.6f}\t{lo:.6f}\t{hi:.6f}")
    tsv_path = out_dir / "report.tsv"
    tsv_path.write_text("\n".join(tsv) + "\n", encoding="utf-8")

    models = sorted({r.model for r in rows})
    datasets = sorted({r.dataset for r in rows})
    md = ["| Method | " + " | ".join(datasets) + " |",
          "|---" * (len(datasets) + 1) + "|"]
    for m in models:
        cells = []
        for ds in datasets:
            if (m, ds) in stats:
                _, mu, lo, hi = stats[(m, ds)]
                cells.append(f"{100 * mu:.2f} ({100 * lo:.2f}, {100 * hi:.2f})")
            else:
                cells.append("")
        md.append(f"| {m} | " + " | ".join(cells) + " |")
    md_path = out_dir / "report.md"
    md_path.write_text("\n".join(md) + "\n", encoding="utf-8")
    return tsv_path, md_path
