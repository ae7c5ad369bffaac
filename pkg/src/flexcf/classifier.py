"""Reference MLP classifier: defines the counterfactual task and produces the
historical-prediction records used for black-box training."""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import torch
from torch import nn

from .data import Encoder, SplitDataset
from .schema import DatasetSchema

logger = logging.getLogger(__name__)


def seed_everything(seed: int) -> None:
    torch.manual_seed(seed)
    np.random.seed(seed % (2**32))


@dataclass
class ClassifierConfig:
    hidden_dims: tuple[int, ...] = (512, 512)
    batch_size: int = 300
    learning_rate: float = 1e-3
    adam_betas: tuple[float, float] = (0.9, 0.999)
    max_epochs: int = 10
    class_weighting: bool = True

    def __post_init__(self):
        if self.hidden_dims and min(self.hidden_dims) <= 0:
            raise ValueError("hidden dimensions must be positive")
        if self.batch_size <= 0 or self.learning_rate <= 0:
            raise ValueError("classifier hyperparameters must be positive")


class MlpNet(nn.Module):
    def __init__(self, in_dim: int, hidden_dims, n_classes: int):
        super().__init__()
        layers = []
        d = in_dim
        for h in hidden_dims:
            layers += [nn.Linear(d, h), nn.ReLU()]
            d = h
        layers.append(nn.Linear(d, n_classes))
        self.net = nn.Sequential(*layers)

    def forward(self, x):
        return self.net(x)


def class_weights(labels: pd.Series, classes) -> np.ndarray:
    """Inverse-frequency weights, normalized to mean 1 over classes."""
    counts = np.array([max(int((labels == c).sum()), 1) for c in classes], dtype=np.float64)
    raw = 1.0 / counts
    return raw * len(classes) / raw.sum()


@dataclass
class TrainedClassifier:
    network: MlpNet
    encoder: Encoder
    schema: DatasetSchema
    config: ClassifierConfig
    curve: list = field(default_factory=list)

    def logits(self, x: torch.Tensor) -> torch.Tensor:
        """Differentiable logits on encoded inputs; used by generator/optimizer losses."""
        return self.network(x)

    def predict_encoded(self, arr: np.ndarray) -> tuple[list[str], np.ndarray]:
        arr = np.atleast_2d(arr)
        if arr.shape[1] != self.encoder.dim:
            raise ValueError(f"dimension mismatch: expected {self.encoder.dim}, got {arr.shape[1]}")
        self.network.eval()
        with torch.no_grad():
            logits = self.network(torch.as_tensor(arr, dtype=torch.float32))
            probs = torch.softmax(logits.double(), dim=1).numpy()
        # renormalize so rows sum to one exactly within float64 noise
        probs = probs / probs.sum(axis=1, keepdims=True)
        idx = np.argmax(probs, axis=1)  # ties broken at the lowest class index
        classes = [self.schema.target_classes[i] for i in idx]
        return classes, probs

    def predict(self, rows: pd.DataFrame) -> tuple[list[str], np.ndarray]:
        return self.predict_encoded(self.encoder.encode(rows[self.schema.feature_names]))

    def predict_row(self, row) -> tuple[str, np.ndarray]:
        classes, probs = self.predict(pd.DataFrame([dict(row)]))
        return classes[0], probs[0]


@dataclass
class PredictionRecord:
    instance: dict
    predicted_class: str
    class_probabilities: list[float]


@dataclass
class PredictionHistory:
    """Historical predictions standing in for the classifier in black-box mode."""

    train: list[PredictionRecord]
    validation: list[PredictionRecord]

    def to_json(self) -> str:
        return json.dumps(
            {
                part: [
                    {
                        "instance": r.instance,
                        "predicted_class": r.predicted_class,
                        "class_probabilities": r.class_probabilities,
                    }
                    for r in getattr(self, part)
                ]
                for part in ("train", "validation")
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "PredictionHistory":
        d = json.loads(text)
        parse = lambda recs: [
            PredictionRecord(r["instance"], r["predicted_class"], r["class_probabilities"])
            for r in recs
        ]
        return cls(parse(d["train"]), parse(d["validation"]))


def export_history(model: TrainedClassifier, rows: pd.DataFrame) -> list[PredictionRecord]:
    classes, probs = model.predict(rows)
    features = model.schema.feature_names
    records = []
    for i in range(len(rows)):
        instance = {c: rows.iloc[i][c] for c in features}
        instance = {
            k: (float(v) if model.schema.kind_of(k) == "continuous" else str(v))
            for k, v in instance.items()
        }
        records.append(PredictionRecord(instance, classes[i], probs[i].tolist()))
    return records


def confusion_matrix(model: TrainedClassifier, rows: pd.DataFrame) -> np.ndarray:
    classes = model.schema.target_classes
    pred, _ = model.predict(rows)
    true = rows[model.schema.target].astype(str)
    k = len(classes)
    mat = np.zeros((k, k), dtype=np.int64)
    index = {c: i for i, c in enumerate(classes)}
    for t, p in zip(true, pred):
        mat[index[t], index[p]] += 1
    return mat


def train_classifier(
    split: SplitDataset,
    schema: DatasetSchema,
    config: ClassifierConfig | None = None,
    seed: int = 0,
    encoder: Encoder | None = None,
) -> TrainedClassifier:
    """Train the reference MLP with inverse-frequency-weighted cross-entropy and
    return the checkpoint of the epoch with the best validation accuracy."""
    config = config or ClassifierConfig()
    seed_everything(seed)
    if encoder is None:
        encoder = Encoder.fit(split.train, schema)

    x_train = torch.as_tensor(encoder.encode(split.train), dtype=torch.float32)
    x_val = torch.as_tensor(encoder.encode(split.validation), dtype=torch.float32)
    to_idx = {c: i for i, c in enumerate(schema.target_classes)}
    y_train = torch.as_tensor(
        split.train[schema.target].astype(str).map(to_idx).to_numpy(dtype=np.int64)
    )
    y_val = split.validation[schema.target].astype(str).map(to_idx).to_numpy(dtype=np.int64)

    net = MlpNet(encoder.dim, config.hidden_dims, len(schema.target_classes))
    weights = None
    if config.class_weighting:
        weights = torch.as_tensor(
            class_weights(split.train[schema.target], schema.target_classes), dtype=torch.float32
        )
    loss_fn = nn.CrossEntropyLoss(weight=weights)
    opt = torch.optim.Adam(net.parameters(), lr=config.learning_rate, betas=config.adam_betas)
    rng = np.random.default_rng(seed)

    best_acc = -1.0
    best_state = copy.deepcopy(net.state_dict())
    curve = []
    for epoch in range(config.max_epochs):
        net.train()
        order = rng.permutation(len(x_train))
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            opt.zero_grad()
            loss = loss_fn(net(x_train[idx]), y_train[idx])
            if not torch.isfinite(loss):
                raise RuntimeError(
                    f"non-finite classifier loss at epoch {epoch}: {loss.item()!r}"
                )
            loss.backward()
            opt.step()
            epoch_loss += float(loss.item()) * len(idx)
        net.eval()
        with torch.no_grad():
            pred = net(x_val).argmax(dim=1).numpy()
        acc = float((pred == y_val).mean())
        curve.append({"epoch": epoch, "train_loss": epoch_loss / len(x_train), "val_accuracy": acc})
        if acc > best_acc:
            best_acc = acc
            best_state = copy.deepcopy(net.state_dict())
    net.load_state_dict(best_state)
    net.eval()
    logger.info("classifier trained: best validation accuracy %.4f", best_acc)
    return TrainedClassifier(net, encoder, schema, config, curve)
