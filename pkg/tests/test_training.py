import math

import numpy as np
import pytest
from scipy import stats

from racnn.config import TrainConfig
from racnn.models import init_params
from racnn.text import PAD, ConfigError, DataError, Document, SentenceLabel
from racnn.training import (AdadeltaState, accuracy_of, adadelta_step, balanced_downsample,
                            early_stop, fold_splits, run_cross_validation, sentence_pool,
                            split_validation, train_document_phase, train_model,
                            train_sentence_phase)

from .conftest import make_synthetic


def scalar_adadelta(gs, rho=0.95, eps=1e-6):
    """Reference rule on one scalar; returns the successive updates."""
    eg = ed = 0.0
    out = []
    for g in gs:
        eg = rho * eg + (1 - rho) * g * g
        dx = -math.sqrt(ed + eps) / math.sqrt(eg + eps) * g
        ed = rho * ed + (1 - rho) * dx * dx
        out.append(dx)
    return out


# --- ADADELTA -------------------------------------------------------------------

def test_adadelta_first_step():
    params = {"w": np.array([0.0])}
    adadelta_step(params, {"w": np.array([1.0])}, AdadeltaState(0.95, 1e-6))
    assert abs(params["w"][0] - scalar_adadelta([1.0])[0]) < 1e-15
    assert params["w"][0] == pytest.approx(-0.0044721, abs=1e-7)


def test_adadelta_zero_gradient_decays_accumulators(rng):
    params = {"w": rng.normal(size=4)}
    state = AdadeltaState()
    adadelta_step(params, {"w": rng.normal(size=4)}, state)
    before = params["w"].copy()
    g2, d2 = state.sq_grad["w"].copy(), state.sq_delta["w"].copy()
    adadelta_step(params, {"w": np.zeros(4)}, state)
    assert np.array_equal(params["w"], before)
    assert np.allclose(state.sq_grad["w"], 0.95 * g2, rtol=1e-15, atol=0)
    assert np.allclose(state.sq_delta["w"], 0.95 * d2, rtol=1e-15, atol=0)


def test_adadelta_matches_scalar_reference(rng):
    G = rng.normal(size=(50, 3))
    params = {"w": np.zeros(3)}
    state = AdadeltaState()
    for g in G:
        adadelta_step(params, {"w": g.copy()}, state)
    for i in range(3):
        assert params["w"][i] == pytest.approx(sum(scalar_adadelta(G[:, i])), abs=1e-12)


def test_adadelta_constant_gradient_steps_vary_smoothly():
    dx = scalar_adadelta([1.0] * 20)
    params = {"w": np.array([0.0])}
    state = AdadeltaState()
    steps = []
    for _ in range(20):
        old = params["w"][0]
        adadelta_step(params, {"w": np.array([1.0])}, state)
        steps.append(params["w"][0] - old)
    assert steps == pytest.approx(dx, abs=1e-15)
    ratios = np.abs(np.array(steps[1:]) / np.array(steps[:-1]))
    assert np.all(ratios > 0.5) and np.all(ratios < 2.0)


def test_adadelta_sweep_stays_finite(rng):
    params = {"w": rng.normal(size=5)}
    state = AdadeltaState()
    for _ in range(10_000):
        g = rng.normal(size=5) * 10.0 ** rng.integers(-6, 4)
        adadelta_step(params, {"w": g}, state)
    assert np.all(np.isfinite(params["w"]))
    assert np.all(state.sq_grad["w"] >= 0) and np.all(state.sq_delta["w"] >= 0)


def test_adadelta_pad_row_frozen(rng):
    params = {"E": rng.normal(size=(4, 3))}
    params["E"][PAD] = 0.0
    adadelta_step(params, {"E": np.ones((4, 3))}, AdadeltaState())
    assert not params["E"][PAD].any() and params["E"][1:].min() < 0


def test_adadelta_shape_mismatch():
    with pytest.raises(ValueError):
        adadelta_step({"w": np.zeros(3)}, {"w": np.zeros(2)}, AdadeltaState())


# --- balanced sampling -------------------------------------------------------------

def _labels(counts):
    return np.repeat([0, 1, 2], counts)


def test_downsample_min_class(rng):
    labels = _labels((1000, 50, 40))
    idx = balanced_downsample(labels, rng)
    assert np.bincount(labels[idx]).tolist() == [40, 40, 40]
    assert len(set(idx.tolist())) == 120


def test_downsample_balanced_pool_is_permutation(rng):
    labels = _labels((10, 10, 10))
    idx = balanced_downsample(labels, rng)
    assert sorted(idx.tolist()) == list(range(30))
    assert idx.tolist() != list(range(30))


def test_downsample_empty_class_named(rng):
    with pytest.raises(DataError, match="NEG_RATIONALE"):
        balanced_downsample(_labels((5, 3, 0)), rng)


def test_downsample_coverage_and_uniformity():
    labels = _labels((200, 50, 40))
    rng = np.random.default_rng(2024)
    draws = np.zeros(200, dtype=int)
    for _ in range(100):
        idx = balanced_downsample(labels, rng)
        assert np.bincount(labels[idx], minlength=3).tolist() == [40, 40, 40]
        np.add.at(draws, idx[labels[idx] == 0], 1)
    assert draws.min() >= 1
    # each majority sentence is drawn Binomial(100, 0.2) times
    assert stats.chisquare(draws).pvalue > 1e-3


# --- early stopping ---------------------------------------------------------------

@pytest.mark.parametrize("history,patience,stop,best", [
    ([0.6, 0.7, 0.7, 0.7], 2, True, 1),
    ([0.6, 0.7, 0.7], 2, False, 1),
    ([0.1, 0.2, 0.3, 0.4, 0.5], 1, False, 4),
    ([0.6, 0.5], 0, True, 0),
    ([0.6, 0.7], 0, False, 1),
    ([0.5], 3, False, 0),
])
def test_early_stop(history, patience, stop, best):
    assert early_stop(history, patience) == (stop, best)


def test_early_stop_empty():
    with pytest.raises(ValueError):
        early_stop([], 2)


# --- phases -------------------------------------------------------------------------

SMALL = dict(heights=(2, 3), maps_per_height=6, embedding_dim=50, batch_size=50)


@pytest.fixture(scope="module")
def noisy(tmp_path_factory):
    return make_synthetic(tmp_path_factory.mktemp("syn2"), noise=0.3, seed=11)


def test_sentence_phase_zero_epochs_is_identity(synthetic):
    cfg = TrainConfig(**SMALL)
    init = init_params(cfg, len(synthetic["vocab"]), np.random.default_rng(0), synthetic["E"])
    out, losses = train_sentence_phase(synthetic["docs"][:50], cfg, init, np.random.default_rng(1), epochs=0)
    assert losses == [] and all(np.array_equal(out[k], init[k]) for k in init)


def test_sentence_phase_needs_rationales():
    docs = [Document("a", [[2, 3]], 1, [False]), Document("b", [[3, 4]], 0, [False])]
    cfg = TrainConfig(**SMALL)
    with pytest.raises(DataError):
        train_sentence_phase(docs, cfg, init_params(cfg, 5, np.random.default_rng(0)),
                             np.random.default_rng(0))


@pytest.fixture(scope="module")
def phase_runs(synthetic):
    """Phase 1 then phase 2 of RA-CNN on a 480/120 split of the noise-free corpus."""
    docs = synthetic["docs"]
    train, test = docs[:480], docs[480:]
    cfg = TrainConfig(model="ra-cnn", tune_sentence_dropout=False)
    fit, val = split_validation(train, cfg.validation_fraction, np.random.default_rng(0))
    init = init_params(cfg, len(synthetic["vocab"]), np.random.default_rng(1), synthetic["E"])
    p1, losses = train_sentence_phase(fit, cfg, init, np.random.default_rng(2))
    res = train_document_phase(fit, val, p1, cfg, np.random.default_rng(3))
    return {"cfg": cfg, "init": init, "p1": p1, "losses": losses, "res": res, "test": test,
            "val": val}


def test_sentence_phase_loss_decreases(phase_runs):
    losses = phase_runs["losses"]
    assert all(np.isfinite(losses))
    assert np.mean(np.diff(losses[:5])) <= 0


def test_sentence_phase_heldout_accuracy(phase_runs):
    from racnn.models import bind, sentence_forward
    sents, labels = sentence_pool(phase_runs["test"])
    probs = sentence_forward(sents, bind(phase_runs["p1"], None), phase_runs["cfg"]).data
    acc = float(np.mean(probs.argmax(axis=1) == labels))
    print(f"phase-1 held-out sentence accuracy {acc:.4f}")
    assert acc >= 0.95


def test_document_phase_freezes_sentence_head(phase_runs):
    p1, p2 = phase_runs["p1"], phase_runs["res"].params
    assert p1["W_sen"].tobytes() == p2["W_sen"].tobytes()
    assert not np.array_equal(p1["E"], p2["E"])
    assert any(not np.array_equal(p1[k], p2[k]) for k in p1 if k.startswith("conv_"))


def test_document_phase_heldout_accuracy(phase_runs):
    acc = accuracy_of(phase_runs["res"].params, phase_runs["test"], phase_runs["cfg"])
    print(f"phase-2 held-out document accuracy {acc:.4f}")
    assert acc >= 0.95


def test_early_stopping_restores_best_snapshot(phase_runs):
    res = phase_runs["res"]
    assert res.history[res.best_epoch] == max(res.history)
    assert accuracy_of(res.params, phase_runs["val"], phase_runs["cfg"]) == res.history[res.best_epoch]


def test_phase1_ablation_is_worse(noisy):
    """Skipping the sentence phase (random, frozen W_sen) hurts validation accuracy."""
    docs, V, E = noisy["docs"], len(noisy["vocab"]), noisy["E"]
    cfg = TrainConfig(model="ra-cnn", tune_sentence_dropout=False)
    worse = 0
    for rep in range(5):
        with_p1 = train_model(docs, V, cfg, (rep,), E)
        without = train_model(docs, V, cfg, (rep,), E, use_phase1=False)
        print(f"rep {rep}: with phase 1 {with_p1.val_accuracy:.4f}, without {without.val_accuracy:.4f}")
        worse += without.val_accuracy < with_p1.val_accuracy
    assert worse >= 4


# --- cross-validation ----------------------------------------------------------------

TINY = dict(heights=(2, 3), maps_per_height=4, cnn_maps_per_height=4, embedding_dim=8,
            sentence_epochs=2, max_epochs=3, patience=1, batch_size=10, folds=3, replications=2,
            sentence_dropout_grid=(0.0, 0.5))


@pytest.fixture(scope="module")
def tiny_corpus(tmp_path_factory):
    return make_synthetic(tmp_path_factory.mktemp("tiny"), noise=0.1, seed=5, num_docs=30,
                          sentences_per_doc=4)


def test_fold_splits_partition():
    parts = fold_splits(9, 3, np.random.default_rng(0))
    assert [len(p) for p in parts] == [3, 3, 3]
    assert sorted(np.concatenate(parts).tolist()) == list(range(9))
    with pytest.raises(ConfigError):
        fold_splits(2, 3, np.random.default_rng(0))


def test_cv_deterministic_and_summarized(tiny_corpus):
    cfg = TrainConfig(model="ra-cnn", **TINY)
    docs, V = tiny_corpus["docs"], len(tiny_corpus["vocab"])
    a = run_cross_validation(docs, V, cfg)
    b = run_cross_validation(docs, V, cfg)
    assert [r.row() for r in a.rows] == [r.row() for r in b.rows]
    assert len(a.rows) == cfg.folds * cfg.replications
    assert a.low <= a.mean <= a.high
    per_rep = [np.mean([r.accuracy for r in a.rows if r.replication == k]) for k in range(2)]
    assert a.mean == pytest.approx(np.mean(per_rep), abs=1e-15)
    assert {r.sentence_dropout for r in a.rows} <= {0.0, 0.5}


@pytest.mark.parametrize("kind", ["cnn", "doc-cnn", "at-cnn"])
def test_cv_baselines_run(tiny_corpus, kind):
    cfg = TrainConfig(model=kind, **{**TINY, "replications": 1})
    rep = run_cross_validation(tiny_corpus["docs"], len(tiny_corpus["vocab"]), cfg)
    assert len(rep.rows) == 3 and all(0 <= r.accuracy <= 1 for r in rep.rows)
    assert all(r.sentence_dropout == cfg.sentence_dropout for r in rep.rows)


def test_cv_workers_give_identical_rows(tiny_corpus):
    cfg = TrainConfig(model="doc-cnn", **{**TINY, "replications": 1})
    docs, V = tiny_corpus["docs"], len(tiny_corpus["vocab"])
    serial = run_cross_validation(docs, V, cfg)
    parallel = run_cross_validation(docs, V, cfg.replace(workers=2))
    assert [r.row() for r in serial.rows] == [r.row() for r in parallel.rows]


def test_cv_too_many_folds(tiny_corpus):
    cfg = TrainConfig(model="doc-cnn", **{**TINY, "folds": 31})
    with pytest.raises(ConfigError):
        run_cross_validation(tiny_corpus["docs"], len(tiny_corpus["vocab"]), cfg)


def test_sentence_labels_in_pool(tiny_corpus):
    _, labels = sentence_pool(tiny_corpus["docs"])
    docs = tiny_corpus["docs"]
    for d in docs:
        assert d.label in (0, 1)
    assert set(labels.tolist()) == {int(c) for c in SentenceLabel}
