"""Dataset schema: column kinds, category vocabularies and the target definition."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"


class SchemaError(ValueError):
    """Data or configuration violates a DatasetSchema contract."""


@dataclass(frozen=True)
class DatasetSchema:
    """Column contract shared by every encoder, model and metric.

    ``columns`` lists the feature columns in a fixed order; the target column is
    kept separate and is always categorical.
    """

    columns: tuple[tuple[str, str], ...]
    categories: dict[str, tuple[str, ...]] = field(default_factory=dict)
    target: str = "target"
    target_classes: tuple[str, ...] = ()

    def __post_init__(self):
        names = [name for name, _ in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate feature column names")
        if self.target in names:
            raise SchemaError(f"target {self.target!r} must not be a feature column")
        if len(self.target_classes) < 2:
            raise SchemaError("target needs at least 2 classes")
        if len(set(self.target_classes)) != len(self.target_classes):
            raise SchemaError("duplicate target classes")
        for name, kind in self.columns:
            if kind not in (CONTINUOUS, CATEGORICAL):
                raise SchemaError(f"unknown kind {kind!r} for column {name!r}")
            if kind == CATEGORICAL:
                vocab = self.categories.get(name)
                if not vocab or len(vocab) < 2:
                    raise SchemaError(f"categorical column {name!r} needs >=2 categories")
                if len(set(vocab)) != len(vocab):
                    raise SchemaError(f"duplicate categories in column {name!r}")

    @property
    def feature_names(self) -> list[str]:
        return [name for name, _ in self.columns]

    @property
    def continuous_columns(self) -> list[str]:
        return [name for name, kind in self.columns if kind == CONTINUOUS]

    @property
    def categorical_columns(self) -> list[str]:
        return [name for name, kind in self.columns if kind == CATEGORICAL]

    def kind_of(self, name: str) -> str:
        for col, kind in self.columns:
            if col == name:
                return kind
        raise SchemaError(f"unknown column {name!r}")

    def class_index(self, label: str) -> int:
        try:
            return self.target_classes.index(label)
        except ValueError:
            raise SchemaError(f"unknown target class {label!r}") from None

    def to_dict(self) -> dict:
        return {
            "columns": [[name, kind] for name, kind in self.columns],
            "categories": {k: list(v) for k, v in self.categories.items()},
            "target": self.target,
            "target_classes": list(self.target_classes),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSchema":
        return cls(
            columns=tuple((str(n), str(k)) for n, k in d["columns"]),
            categories={str(k): tuple(str(c) for c in v) for k, v in d.get("categories", {}).items()},
            target=str(d["target"]),
            target_classes=tuple(str(c) for c in d["target_classes"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DatasetSchema":
        return cls.from_dict(json.loads(text))

    def hash(self) -> str:
        """Stable content hash used to link models trained on the same schema."""
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()[:16]
