"""Command-line entry point: ``racnn <command> [flags]``.

Exit codes: 0 ok, 1 internal error, 2 configuration or usage error, 3 data error.
Logs go to stderr; data goes only to the declared output paths.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import MODEL_KINDS, TrainConfig, load_config
from .evaluate import (ResultRow, SyntheticSpec, emit_report, explain, generate_synthetic,
                       synthetic_embeddings, write_explanations)
from .gradcheck import check_gradients
from .models import CapabilityError, predict
from .text import ConfigError, DataError, load_corpus, load_embeddings, read_corpus, encode_documents
from .training import accuracy_of, run_cross_validation, train_model

log = logging.getLogger("racnn")


def _config(args) -> TrainConfig:
    overrides = {k: getattr(args, k, None) for k in ("model", "seed", "folds", "replications", "workers")}
    if args.config:
        return load_config(args.config, **overrides)
    return TrainConfig(**{k: v for k, v in overrides.items() if v is not None})


def _embeddings(cfg: TrainConfig, vocab):
    if not cfg.embeddings_path:
        return None
    return load_embeddings(cfg.embeddings_path, vocab, np.random.default_rng([cfg.seed, 11]),
                           cfg.embedding_dim)


def cmd_gen_synthetic(args) -> int:
    spec = SyntheticSpec(num_docs=args.num_docs, noise=args.noise, seed=args.seed or 0)
    generate_synthetic(spec, args.out)
    if args.embeddings_out:
        synthetic_embeddings(spec, args.embedding_dim, args.embeddings_out)
    log.info("wrote %d documents to %s", spec.num_docs, args.out)
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    docs, vocab = load_corpus(args.corpus, max_vocab=cfg.max_vocab,
                              max_sentence_tokens=cfg.max_sentence_tokens)
    res = train_model(docs, len(vocab), cfg, (cfg.seed,), _embeddings(cfg, vocab))
    extra = {"best_epoch": res.best_epoch, "sentence_dropout": res.sentence_dropout,
             "val_accuracy": res.val_accuracy, "sentence_losses": res.sentence_losses}
    save_checkpoint(args.out, Checkpoint(cfg, vocab, res.params, extra))
    Path(str(args.out) + ".log").write_text(json.dumps(extra) + "\n", encoding="utf-8")
    log.info("trained %s: best epoch %d, validation accuracy %.4f", cfg.model,
             res.best_epoch, res.val_accuracy)
    return 0


def cmd_cv(args) -> int:
    cfg = _config(args)
    docs, vocab = load_corpus(args.corpus, max_vocab=cfg.max_vocab,
                              max_sentence_tokens=cfg.max_sentence_tokens)
    report = run_cross_validation(docs, len(vocab), cfg, _embeddings(cfg, vocab))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps(r.row()) for r in sorted(report.rows, key=lambda r: (r.replication, r.fold))]
    lines.append(json.dumps(report.summary()))
    (out / "metrics.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
    emit_report([ResultRow(cfg.model, Path(args.corpus).stem, report.per_replication)], out)
    log.info("%s: mean %.4f (%.4f, %.4f)", cfg.model, report.mean, report.low, report.high)
    return 0


def _load_for_inference(args):
    ckpt = load_checkpoint(args.checkpoint)
    raw = read_corpus(args.corpus)
    docs = encode_documents(raw, ckpt.vocab, ckpt.config.max_sentence_tokens)
    return ckpt, docs


def cmd_eval(args) -> int:
    ckpt, docs = _load_for_inference(args)
    acc = accuracy_of(ckpt.params, docs, ckpt.config)
    result = json.dumps({"model": ckpt.model, "documents": len(docs), "accuracy": acc}) + "\n"
    if args.out:
        Path(args.out).write_text(result, encoding="utf-8")
    else:
        sys.stdout.write(result)
    return 0


def cmd_explain(args) -> int:
    ckpt, docs = _load_for_inference(args)
    if ckpt.model != "ra-cnn":
        raise CapabilityError("model provides no rationale scores")
    if args.k < 1:
        raise ConfigError("--k: must be >= 1")
    preds = predict(docs, ckpt.params, ckpt.config)
    reports = []
    for doc, pred in zip(docs, preds):
        if args.k > len(doc.sentences):
            log.warning("%s: k=%d exceeds %d sentences; clamped", doc.doc_id, args.k,
                        len(doc.sentences))
        reports.append(explain(doc, pred, args.k))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            write_explanations(reports, fh)
    else:
        write_explanations(reports, sys.stdout)
    return 0


def cmd_gradcheck(args) -> int:
    res = check_gradients(args.model, args.seed or 0, corrupt=args.sabotage)
    print(f"{res.kind} max relative error {res.max_error:.3e} ({res.worst_param})")
    if not res.ok:
        log.error("gradient check failed for parameter %s", res.worst_param)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="racnn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, model_required=False):
        p.add_argument("--corpus", required=True)
        p.add_argument("--model", choices=MODEL_KINDS, required=model_required)
        p.add_argument("--config")
        p.add_argument("--out", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int)

    p = sub.add_parser("gen-synthetic", help="write a planted-rationale corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--num-docs", type=int, default=600)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--embeddings-out")
    p.add_argument("--embedding-dim", type=int, default=50)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("train", help="train one model and write a checkpoint")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cv", help="cross-validation with replications")
    common(p)
    p.add_argument("--folds", type=int)
    p.add_argument("--replications", type=int)
    p.set_defaults(func=cmd_cv)

    for name, func, helptext in (("eval", cmd_eval, "accuracy of a checkpoint on a corpus"),
                                 ("explain", cmd_explain, "top-k rationale sentences per document")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--corpus", required=True)
        p.add_argument("--out")
        if name == "explain":
            p.add_argument("--k", type=int, default=3)
        p.set_defaults(func=func)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check on a tiny model")
    p.add_argument("--model", choices=MODEL_KINDS, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--sabotage", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ConfigError, CapabilityError) as exc:
        log.error("%s", exc)
        return 2
    except (DataError, FileNotFoundError) as exc:
        log.error("%s", exc)
        return 3
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error: %s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
