"""Rationale-augmented convolutional networks for document classification."""
from .config import MODEL_KINDS, TrainConfig, load_config
from .models import Prediction, init_params, predict, rank_rationales
from .text import Document, Vocabulary, build_vocabulary, load_corpus

__version__ = "0.1.0"

__all__ = [
    "MODEL_KINDS", "Document", "Prediction", "TrainConfig", "Vocabulary", "build_vocabulary",
    "init_params", "load_config", "load_corpus", "predict", "rank_rationales",
]
