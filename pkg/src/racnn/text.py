"""Corpus ingestion: sentence splitting, tokenization, vocabulary, embeddings.

Corpus files are UTF-8 JSON lines. Each record has ``doc_id``, ``label``
(``"pos"`` or ``"neg"``), either ``text`` or ``sentences``, and exactly one of
``rationale_sentence_indices`` or ``rationale_char_spans`` (``[start, end)``
byte offsets into ``text``).
"""
from __future__ import annotations

import enum
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

PAD, OOV = 0, 1
PAD_TOKEN, OOV_TOKEN = "<pad>", "<oov>"
LABELS = {"neg": 0, "pos": 1}
LABEL_NAMES = {v: k for k, v in LABELS.items()}

# Tokens ending in "." that never end a sentence (compared lowercased).
ABBREVIATIONS = frozenset("""
    mr. mrs. ms. dr. prof. sr. jr. st. vs. etc. e.g. i.e. fig. figs. al. no.
    inc. ltd. co. corp. jan. feb. mar. apr. jun. jul. aug. sep. sept. oct.
    nov. dec. approx. dept. est. vol. eq. ref. refs. cf.
""".split())

_BOUNDARY = re.compile(r"[.?!]+[\"')\]]*(?=\s+[A-Z0-9\"'(\[])")
_PUNCT = re.compile(r"([^\w\s'])")


class DataError(ValueError):
    """Malformed or inconsistent input data."""


class ConfigError(ValueError):
    """Invalid configuration value."""


class SentenceLabel(enum.IntEnum):
    NEUTRAL = 0
    POS_RATIONALE = 1
    NEG_RATIONALE = 2


@dataclass
class Document:
    doc_id: str
    sentences: list[list[int]]
    label: int
    rationale_mask: list[bool]
    text: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.sentences:
            raise DataError(f"document {self.doc_id!r} has no sentences")
        if len(self.rationale_mask) != len(self.sentences):
            raise DataError(f"document {self.doc_id!r}: rationale mask length "
                            f"{len(self.rationale_mask)} != {len(self.sentences)} sentences")


@dataclass
class RawDocument:
    """A parsed corpus record before token ids are assigned."""
    doc_id: str
    sentences: list[str]
    label: int
    rationale_mask: list[bool]

    def tokens(self) -> list[list[str]]:
        return [tokenize(s) for s in self.sentences]


# --- splitting and tokenizing ---------------------------------------------

def sentence_spans(text: str) -> list[tuple[int, int]]:
    """Character ``[start, end)`` spans of the sentences in ``text``."""
    spans = []
    start = 0
    for m in _BOUNDARY.finditer(text):
        end = m.end()
        last_word = text[start:end].split()[-1].lower() if text[start:end].split() else ""
        if m.group().startswith(".") and len(m.group()) == 1 and last_word.rstrip("\"')]") in ABBREVIATIONS:
            continue
        spans.append((start, end))
        start = end
    spans.append((start, len(text)))
    out = []
    for s, e in spans:
        chunk = text[s:e]
        lead = len(chunk) - len(chunk.lstrip())
        trail = len(chunk) - len(chunk.rstrip())
        if chunk.strip():
            out.append((s + lead, e - trail))
    return out


def split_sentences(text: str) -> list[str]:
    return [text[s:e] for s, e in sentence_spans(text)]


def tokenize(sentence: str) -> list[str]:
    return _PUNCT.sub(r" \1 ", sentence.lower()).split()


# --- vocabulary -------------------------------------------------------------

@dataclass
class Vocabulary:
    tokens: list[str]
    counts: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.tokens[:2] != [PAD_TOKEN, OOV_TOKEN]:
            raise ValueError("vocabulary must start with the PAD and OOV tokens")
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate token in vocabulary")

    def __len__(self) -> int:
        return len(self.tokens)

    def __getitem__(self, token: str) -> int:
        return self.index.get(token, OOV)

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.index.get(t, OOV) for t in tokens]


def build_vocabulary(corpus: Iterable[Iterable[str]], max_size: int = 50_000) -> Vocabulary:
    """Keep the most frequent tokens; equal counts are ordered lexicographically.

    ``corpus`` yields token sequences.
    """
    if max_size < 3:
        raise ConfigError(f"max_size must be at least 3, got {max_size}")
    counts = Counter()
    for toks in corpus:
        counts.update(toks)
    counts.pop(PAD_TOKEN, None)
    counts.pop(OOV_TOKEN, None)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[: max_size - 2]
    return Vocabulary([PAD_TOKEN, OOV_TOKEN] + [t for t, _ in ranked], dict(ranked))


# --- embeddings -------------------------------------------------------------

def random_embeddings(vocab_size: int, dim: int, rng: np.random.Generator,
                      scale: float = 0.05) -> np.ndarray:
    E = rng.uniform(-scale, scale, size=(vocab_size, dim))
    E[PAD] = 0.0
    return E


def load_embeddings(path, vocab: Vocabulary, rng: np.random.Generator,
                    dim: int | None = None) -> np.ndarray:
    """Read word vectors in text format (``V d`` header, then ``word v1 .. vd``).

    Words missing from the file get uniform draws in [-0.05, 0.05]; the PAD row
    is zero.
    """
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        try:
            n_rows, d = int(header[0]), int(header[1])
            if len(header) != 2 or d < 1:
                raise ValueError
        except (ValueError, IndexError):
            raise DataError(f"{path}:1: expected header 'V d'") from None
        if dim is not None and dim != d:
            raise ConfigError(f"{path}: file dimension {d} conflicts with configured {dim}")
        E = random_embeddings(len(vocab), d, rng)
        seen = 0
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split(" ")
            parts = [p for p in parts if p]
            if len(parts) != d + 1:
                raise DataError(f"{path}:{lineno}: expected {d + 1} fields, got {len(parts)}")
            try:
                vec = np.array([float(v) for v in parts[1:]])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric vector entry") from None
            seen += 1
            idx = vocab.index.get(parts[0])
            if idx is not None and idx != OOV:
                E[idx] = vec
    if seen != n_rows:
        raise DataError(f"{path}: header promises {n_rows} vectors, found {seen}")
    E[PAD] = 0.0
    return E


# --- labels and corpus I/O ---------------------------------------------------

def derive_sentence_labels(doc: Document | RawDocument) -> list[SentenceLabel]:
    if doc.label not in (0, 1):
        raise ConfigError(f"document label must be binary, got {doc.label!r}")
    hit = SentenceLabel.POS_RATIONALE if doc.label == LABELS["pos"] else SentenceLabel.NEG_RATIONALE
    return [hit if m else SentenceLabel.NEUTRAL for m in doc.rationale_mask]


def _byte_spans(text: str, spans: list[tuple[int, int]]) -> list[tuple[int, int]]:
    offsets = np.cumsum([0] + [len(c.encode("utf-8")) for c in text])
    return [(int(offsets[s]), int(offsets[e])) for s, e in spans]


def _parse_record(rec, where: str) -> RawDocument:
    if not isinstance(rec, dict):
        raise DataError(f"{where}: record is not an object")
    for key in ("doc_id", "label"):
        if key not in rec:
            raise DataError(f"{where}: missing field {key!r}")
    if not isinstance(rec["doc_id"], str):
        raise DataError(f"{where}: doc_id must be a string")
    if rec["label"] not in LABELS:
        raise DataError(f"{where}: label must be 'pos' or 'neg', got {rec['label']!r}")
    has_text, has_sents = "text" in rec, "sentences" in rec
    if has_text == has_sents:
        raise DataError(f"{where}: exactly one of 'text' or 'sentences' is required")
    has_idx = "rationale_sentence_indices" in rec
    has_span = "rationale_char_spans" in rec
    if has_idx == has_span:
        raise DataError(f"{where}: exactly one rationale field form is required")

    if has_text:
        if not isinstance(rec["text"], str):
            raise DataError(f"{where}: text must be a string")
        char_spans = sentence_spans(rec["text"])
        sentences = [rec["text"][s:e] for s, e in char_spans]
    else:
        sentences = rec["sentences"]
        if not isinstance(sentences, list) or not all(isinstance(s, str) for s in sentences):
            raise DataError(f"{where}: sentences must be a list of strings")
        char_spans = None
    if not sentences:
        raise DataError(f"{where}: document has no sentences")

    mask = [False] * len(sentences)
    if has_idx:
        idx = rec["rationale_sentence_indices"]
        if not isinstance(idx, list) or not all(isinstance(i, int) for i in idx):
            raise DataError(f"{where}: rationale_sentence_indices must be a list of ints")
        for i in idx:
            if not 0 <= i < len(sentences):
                raise DataError(f"{where}: rationale index {i} out of range "
                                f"for {len(sentences)} sentences")
            mask[i] = True
    else:
        if char_spans is None:
            raise DataError(f"{where}: rationale_char_spans requires the 'text' form")
        sent_bytes = _byte_spans(rec["text"], char_spans)
        n_bytes = len(rec["text"].encode("utf-8"))
        for span in rec["rationale_char_spans"]:
            if (not isinstance(span, list) or len(span) != 2
                    or not all(isinstance(v, int) for v in span)):
                raise DataError(f"{where}: each rationale span must be [start, end)")
            lo, hi = span
            if not 0 <= lo < hi <= n_bytes:
                raise DataError(f"{where}: rationale span {span} out of range")
            # a snippet marks every sentence it touches
            for j, (s, e) in enumerate(sent_bytes):
                if lo < e and s < hi:
                    mask[j] = True
    return RawDocument(rec["doc_id"], sentences, LABELS[rec["label"]], mask)


def read_corpus(path) -> list[RawDocument]:
    """Parse and validate a JSON-lines corpus file."""
    docs, seen = [], set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{where}: invalid JSON ({exc.msg})") from None
            doc = _parse_record(rec, where)
            if doc.doc_id in seen:
                raise DataError(f"{where}: duplicate doc_id {doc.doc_id!r}")
            seen.add(doc.doc_id)
            docs.append(doc)
    if not docs:
        raise DataError(f"{path}: corpus is empty")
    return docs


def encode_documents(raw: list[RawDocument], vocab: Vocabulary,
                     max_sentence_tokens: int = 100) -> list[Document]:
    """Token ids per sentence; sentences that tokenize to nothing become one PAD."""
    out = []
    for r in raw:
        sents = []
        for toks in r.tokens():
            ids = vocab.encode(toks[:max_sentence_tokens])
            sents.append(ids or [PAD])
        out.append(Document(r.doc_id, sents, r.label, list(r.rationale_mask), list(r.sentences)))
    return out


def load_corpus(path, vocab: Vocabulary | None = None, max_vocab: int = 50_000,
                max_sentence_tokens: int = 100) -> tuple[list[Document], Vocabulary]:
    """Read a corpus file and map it to token ids, building a vocabulary if none is given."""
    raw = read_corpus(path)
    if vocab is None:
        vocab = build_vocabulary((t for r in raw for t in r.tokens()), max_vocab)
    return encode_documents(raw, vocab, max_sentence_tokens), vocab


def write_corpus(path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def pad_ids(ids: list[int], min_len: int) -> list[int]:
    return ids + [PAD] * (min_len - len(ids)) if len(ids) < min_len else ids


__all__ = [
    "ABBREVIATIONS", "ConfigError", "DataError", "Document", "LABELS", "OOV", "PAD",
    "RawDocument", "SentenceLabel", "Vocabulary", "build_vocabulary", "derive_sentence_labels",
    "encode_documents", "load_corpus", "load_embeddings", "pad_ids", "random_embeddings",
    "read_corpus", "sentence_spans", "split_sentences", "tokenize", "write_corpus",
]
