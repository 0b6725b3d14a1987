from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from ..errors import ConfigError, NonFinite, SchemaMismatch, SingleClassData

MODEL_KINDS = ("LR", "RF", "GBT", "FNN", "GCNN", "GCNN_weighted")


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for every model kind; each one can be overridden."""

    seed: int = 0
    # logistic regression
    lr_max_iter: int = 1000
    lr_tol: float = 1e-8
    # random forest
    rf_n_trees: int = 200
    rf_max_depth: int | None = None
    rf_max_features: str | int | None = "sqrt"
    rf_bootstrap: bool = True
    rf_min_samples_leaf: int = 1
    # gradient boosting
    gbt_n_rounds: int = 200
    gbt_max_depth: int = 3
    gbt_learning_rate: float = 0.1
    # neural networks
    nn_hidden: tuple[int, ...] = (64, 32)
    nn_learning_rate: float = 1e-3
    nn_weight_decay: float = 0.01
    nn_batch_size: int = 128
    nn_max_epochs: int = 500
    nn_patience: int = 50
    nn_val_fraction: float = 0.15
    gcnn_width: int = 64
    gcnn_k: int = 5

    def __post_init__(self):
        object.__setattr__(self, "nn_hidden", tuple(int(h) for h in self.nn_hidden))
        if self.nn_patience < 1:
            raise ConfigError("nn_patience must be >= 1")
        if not self.nn_learning_rate > 0 or not self.gbt_learning_rate > 0:
            raise ConfigError("learning rates must be > 0")
        if not 0 <= self.nn_val_fraction < 1:
            raise ConfigError("nn_val_fraction must be in [0, 1)")
        if self.rf_n_trees < 1 or self.gbt_n_rounds < 0:
            raise ConfigError("rf_n_trees must be >= 1 and gbt_n_rounds >= 0")

    def to_json(self) -> dict:
        d = asdict(self)
        d["nn_hidden"] = list(self.nn_hidden)
        return d

    @classmethod
    def from_json(cls, doc: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown training options: {sorted(unknown)}")
        return cls(**doc)


def seed_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *[int(k) for k in key]]))


def check_binary(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y)
    if len(y) < 2:
        raise SingleClassData("need at least two rows")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0/1")
    if len(np.unique(y)) < 2:
        raise SingleClassData("training labels contain a single class")
    return y.astype(float)


def check_finite(X: np.ndarray) -> None:
    if not np.all(np.isfinite(X)):
        raise NonFinite("feature matrix contains non-finite values")


@dataclass
class Encoder:
    """z-scores continuous columns and one-hot expands categorical ones."""

    categorical: list[int]
    sizes: list[int]
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray, categorical_mask, vocab_sizes=None, mean=None, std=None) -> "Encoder":
        cat = [int(j) for j in np.flatnonzero(np.asarray(categorical_mask, dtype=bool))]
        if vocab_sizes is None:
            sizes = [int(X[:, j].max()) + 1 if len(X) else 1 for j in cat]
        else:
            sizes = [int(s) for s in vocab_sizes]
        m = X.mean(axis=0) if mean is None else np.asarray(mean, dtype=float)
        s = X.std(axis=0) if std is None else np.asarray(std, dtype=float)
        return cls(cat, sizes, m, np.where(s > 0, s, 1.0))

    @property
    def output_width(self) -> int:
        return len(self.mean) - len(self.categorical) + sum(self.sizes)

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        cont = [j for j in range(X.shape[1]) if j not in self.categorical]
        parts = [(X[:, cont] - self.mean[cont]) / self.std[cont]]
        for j, size in zip(self.categorical, self.sizes):
            codes = np.clip(X[:, j].astype(np.int64), 0, size - 1)
            parts.append(np.eye(size)[codes])
        return np.hstack(parts)

    def to_json(self) -> dict:
        return {"categorical": self.categorical, "sizes": self.sizes,
                "mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> "Encoder":
        return cls(list(doc["categorical"]), list(doc["sizes"]), np.asarray(doc["mean"], dtype=float),
                   np.asarray(doc["std"], dtype=float))


def encoder_for_matrix(matrix) -> Encoder:
    """Encoder using a LabeledMatrix's training statistics and vocabulary sizes."""
    schema = matrix.schema
    sizes = [len(f.vocabulary) or 1 for f in schema.features if f.kind == "categorical"]
    return Encoder.fit(matrix.X, schema.categorical_mask, sizes, matrix.mean, matrix.std)


@dataclass
class TrainedModel:
    kind: str
    params: dict[str, Any]
    schema_fingerprint: str
    config: TrainConfig
    n_features: int
    encoder: Encoder | None = None
    extras: dict[str, Any] = field(default_factory=dict)

    def check_schema(self, fingerprint: str | None) -> None:
        if fingerprint is not None and self.schema_fingerprint and fingerprint != self.schema_fingerprint:
            raise SchemaMismatch(f"model expects schema {self.schema_fingerprint}, got {fingerprint}")

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "schema_fingerprint": self.schema_fingerprint,
            "n_features": self.n_features,
            "config": self.config.to_json(),
            "encoder": None if self.encoder is None else self.encoder.to_json(),
            "params": _jsonable(self.params),
            "extras": _jsonable(self.extras),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "TrainedModel":
        enc = doc.get("encoder")
        return cls(doc["kind"], _arrays(doc["params"]), doc["schema_fingerprint"],
                   TrainConfig.from_json(doc["config"]), int(doc["n_features"]),
                   None if enc is None else Encoder.from_json(enc), _arrays(doc.get("extras", {})))


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return {"__array__": obj.tolist(), "dtype": "int" if obj.dtype.kind in "iub" else "float"}
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _arrays(obj):
    if isinstance(obj, dict):
        if "__array__" in obj:
            return np.asarray(obj["__array__"], dtype=np.int64 if obj.get("dtype") == "int" else float)
        return {k: _arrays(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_arrays(v) for v in obj]
    return obj


def save_model(model: TrainedModel, path) -> None:
    """One JSON document per model; floats keep full round-trip precision."""
    text = json.dumps(model.to_json(), sort_keys=True, separators=(",", ":"))
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_model(path) -> TrainedModel:
    return TrainedModel.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def log_loss(y, p, eps: float = 1e-15) -> float:
    p = np.clip(np.asarray(p, dtype=float), eps, 1 - eps)
    y = np.asarray(y, dtype=float)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))
