"""Training configuration and its flat ``key = value`` file format."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import get_type_hints

from .text import ConfigError

MODEL_KINDS = ("cnn", "doc-cnn", "at-cnn", "ra-cnn")


@dataclass
class TrainConfig:
    model: str = "ra-cnn"
    heights: tuple[int, ...] = (3, 4, 5)
    maps_per_height: int = 20
    cnn_maps_per_height: int = 100
    embedding_dim: int = 50
    embeddings_path: str = ""
    embedding_init: float = 0.05
    filter_init: float = 0.01
    attention_size: int = 0  # 0 means |F|
    max_vocab: int = 50_000
    max_sentence_tokens: int = 100
    sentence_dropout: float = 0.5
    sentence_dropout_grid: tuple[float, ...] = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    tune_sentence_dropout: bool = True
    sentence_dropout_in_phase2: bool = True
    doc_dropout: float = 0.5
    batch_size: int = 50
    rho: float = 0.95
    epsilon: float = 1e-6
    sentence_epochs: int = 20
    max_epochs: int = 50
    patience: int = 5
    validation_fraction: float = 0.1
    seed: int = 0
    folds: int = 5
    replications: int = 5
    workers: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"model: unknown kind {self.model!r}; expected one of {MODEL_KINDS}")
        if not self.heights or any(h < 1 for h in self.heights):
            raise ConfigError("heights: need at least one positive filter height")
        if self.batch_size < 1:
            raise ConfigError("batch_size: must be >= 1")
        for name in ("sentence_dropout", "doc_dropout"):
            if not 0.0 <= getattr(self, name) <= 0.9:
                raise ConfigError(f"{name}: must lie in [0, 0.9]")
        if any(not 0.0 <= r <= 0.9 for r in self.sentence_dropout_grid):
            raise ConfigError("sentence_dropout_grid: rates must lie in [0, 0.9]")
        if self.folds < 2:
            raise ConfigError("folds: must be >= 2")
        if self.replications < 1:
            raise ConfigError("replications: must be >= 1")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ConfigError("validation_fraction: must lie in (0, 1)")
        if not 0.0 < self.rho < 1.0 or self.epsilon <= 0:
            raise ConfigError("rho must lie in (0, 1) and epsilon must be positive")
        for name in ("maps_per_height", "cnn_maps_per_height", "embedding_dim", "max_sentence_tokens"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name}: must be >= 1")
        if self.max_vocab < 3:
            raise ConfigError("max_vocab: must be >= 3")
        if min(self.patience, self.max_epochs, self.sentence_epochs, self.attention_size) < 0:
            raise ConfigError("epoch counts, patience and attention_size must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers: must be >= 1")

    @property
    def maps(self) -> int:
        return self.cnn_maps_per_height if self.model == "cnn" else self.maps_per_height

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def dumps(self) -> str:
        lines = []
        for k, v in self.to_dict().items():
            if isinstance(v, tuple):
                v = ", ".join(repr(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        hints = get_type_hints(cls)
        kwargs = {}
        for k, v in d.items():
            if k not in hints:
                raise ConfigError(f"unknown config key {k!r}")
            kwargs[k] = tuple(v) if isinstance(v, list) else v
        return cls(**kwargs)


def _coerce(key: str, raw: str, hint, where: str):
    raw = raw.strip()
    try:
        if hint is bool:
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError
            return raw.lower() in ("true", "1", "yes")
        if hint is int:
            return int(raw)
        if hint is float:
            return float(raw)
        if hint is str:
            return raw
        if hint == tuple[int, ...]:
            return tuple(int(x) for x in raw.split(",") if x.strip())
        if hint == tuple[float, ...]:
            return tuple(float(x) for x in raw.split(",") if x.strip())
    except ValueError:
        pass
    raise ConfigError(f"{where}: bad value {raw!r} for {key}")


def parse_overrides(pairs: dict[str, str], where: str = "overrides") -> dict:
    hints = get_type_hints(TrainConfig)
    out = {}
    for key, raw in pairs.items():
        if key not in hints:
            raise ConfigError(f"{where}: unknown config key {key!r}")
        out[key] = _coerce(key, raw, hints[key], where)
    return out


def load_config(path, **overrides) -> TrainConfig:
    """Read ``key = value`` lines (``#`` comments allowed); ``overrides`` win."""
    pairs, origin = {}, {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in pairs:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        pairs[key] = value
        origin[key] = lineno
    values = {}
    for key, raw in pairs.items():
        values.update(parse_overrides({key: raw}, f"{path}:{origin[key]}"))
    values.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig(**values)
