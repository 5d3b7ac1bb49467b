# %% [markdown]
# # Cross-validated comparison of the four models
#
# `run_cross_validation` repeats k-fold training with independent seeded
# streams per replication and fold; `emit_report` turns the per-replication
# means into a TSV/Markdown table of mean (min, max).  Three folds and two
# replications on a 300-document corpus take a few minutes.

# %%
import tempfile
from pathlib import Path

import numpy as np

from racnn.config import TrainConfig
from racnn.evaluate import ResultRow, SyntheticSpec, emit_report, generate_synthetic, synthetic_embeddings
from racnn.text import load_corpus, load_embeddings
from racnn.training import run_cross_validation

work = Path(tempfile.mkdtemp())
spec = SyntheticSpec(num_docs=300, noise=0.2, seed=5)
generate_synthetic(spec, work / "corpus.jsonl")
synthetic_embeddings(spec, 50, work / "vectors.txt")
docs, vocab = load_corpus(work / "corpus.jsonl")
E = load_embeddings(work / "vectors.txt", vocab, np.random.default_rng(0))

# %%
rows = []
for kind in ("cnn", "doc-cnn", "at-cnn", "ra-cnn"):
    cfg = TrainConfig(model=kind, folds=3, replications=2, tune_sentence_dropout=False)
    report = run_cross_validation(docs, len(vocab), cfg, E)
    print(f"{kind:8s} mean {report.mean:.3f}  range ({report.low:.3f}, {report.high:.3f})")
    rows.append(ResultRow(kind, "synthetic", report.per_replication))

# %%
tsv, md = emit_report(rows, work)
print(md.read_text())
