import numpy as np
import pytest

from racnn.evaluate import SyntheticSpec, generate_synthetic, synthetic_embeddings
from racnn.text import load_corpus, load_embeddings


def numeric_grad(f, x, eps=1e-6):
    """Central differences of scalar ``f()`` w.r.t. every element of array ``x`` (mutated in place)."""
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + eps
        up = f()
        x[idx] = orig - eps
        down = f()
        x[idx] = orig
        g[idx] = (up - down) / (2 * eps)
    return g


def rel_err(a, b, floor=1e-6):
    return float((np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)).max())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def synthetic(tmp_path_factory):
    """Default-size synthetic corpus at noise 0 with clustered embeddings."""
    return make_synthetic(tmp_path_factory.mktemp("syn0"), noise=0.0, seed=3)


def make_synthetic(root, noise, seed, **kw):
    spec = SyntheticSpec(noise=noise, seed=seed, **kw)
    gt = generate_synthetic(spec, root / "corpus.jsonl")
    synthetic_embeddings(spec, 50, root / "vectors.txt")
    docs, vocab = load_corpus(root / "corpus.jsonl")
    E = load_embeddings(root / "vectors.txt", vocab, np.random.default_rng(0))
    return {"spec": spec, "truth": gt, "docs": docs, "vocab": vocab, "E": E, "root": root}


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
