"""Counterfactual templates: per-feature mutability masks, their model-space
encoding, and the projection that resets immutable features."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .data import Encoder
from .schema import DatasetSchema, SchemaError


@dataclass(frozen=True)
class CounterfactualTemplate:
    """Which features may change, frozen values for the rest, and the target class."""

    mutable: tuple[str, ...]
    frozen_values: dict
    desired_class: str

    def is_mutable(self, column: str) -> bool:
        return column in self.mutable


def make_template(
    schema: DatasetSchema, instance, mutable_columns, desired_class: str
) -> CounterfactualTemplate:
    instance = dict(instance)
    features = schema.feature_names
    mutable = [c for c in features if c in set(mutable_columns)]
    unknown = set(mutable_columns) - set(features)
    if unknown:
        raise SchemaError(f"unknown mutable columns: {sorted(unknown)}")
    if desired_class not in schema.target_classes:
        raise SchemaError(f"unknown target class {desired_class!r}")
    frozen = {c: instance[c] for c in features if c not in set(mutable)}
    return CounterfactualTemplate(tuple(mutable), frozen, desired_class)


def sample_training_template(
    schema: DatasetSchema,
    instance,
    predicted_class: str,
    rng: np.random.Generator,
    allowed_classes=None,
) -> CounterfactualTemplate:
    """Random template for training: mutable fraction ~ U[0,1] then per-column
    Bernoulli with at least one mutable column; desired class uniform over the
    alternatives to the prediction."""
    features = schema.feature_names
    p = rng.random()
    mask = rng.random(len(features)) < p
    if not mask.any():
        mask[rng.integers(len(features))] = True
    classes = list(allowed_classes if allowed_classes is not None else schema.target_classes)
    choices = [c for c in classes if c != predicted_class]
    if not choices:
        raise ValueError("no alternative target class available")
    desired = choices[rng.integers(len(choices))]
    mutable = [c for c, m in zip(features, mask) if m]
    return make_template(schema, instance, mutable, desired)


def sample_masks(n_rows: int, n_cols: int, rng: np.random.Generator) -> np.ndarray:
    """Batch form of the training mask draw: (n_rows, n_cols) boolean."""
    p = rng.random(n_rows)
    mask = rng.random((n_rows, n_cols)) < p[:, None]
    empty = ~mask.any(axis=1)
    if empty.any():
        mask[np.flatnonzero(empty), rng.integers(n_cols, size=int(empty.sum()))] = True
    return mask


def fixed_fraction_mask(n_cols: int, fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Mask with exactly max(1, round(fraction * n_cols)) mutable columns."""
    k = max(1, int(round(fraction * n_cols)))
    mask = np.zeros(n_cols, dtype=bool)
    mask[rng.choice(n_cols, size=min(k, n_cols), replace=False)] = True
    return mask


@dataclass
class TemplateEncoding:
    """Model-space view of a template: the original vector with mutable blocks
    zeroed, a per-column mutability indicator, and the desired-class one-hot."""

    vector: np.ndarray
    indicator: np.ndarray
    desired_onehot: np.ndarray


def column_mask(schema: DatasetSchema, template: CounterfactualTemplate) -> np.ndarray:
    return np.array([template.is_mutable(c) for c in schema.feature_names], dtype=bool)


def expand_mask(encoder: Encoder, col_mask: np.ndarray) -> np.ndarray:
    """Broadcast per-column masks (..., n_cols) to encoded dims (..., dim)."""
    col_mask = np.asarray(col_mask)
    widths = [b.width for b in encoder.blocks]
    return np.repeat(col_mask, widths, axis=-1)


def encode_template(
    encoder: Encoder, template: CounterfactualTemplate, original_encoded: np.ndarray
) -> TemplateEncoding:
    schema = encoder.schema
    col_mask = column_mask(schema, template)
    dim_mask = encoder.dim_mask([c for c in template.mutable])
    vector = np.where(dim_mask, 0.0, np.asarray(original_encoded, dtype=np.float64))
    k = schema.class_index(template.desired_class)
    onehot = np.zeros(len(schema.target_classes))
    onehot[k] = 1.0
    return TemplateEncoding(vector, col_mask.astype(np.float64), onehot)


def reset_immutable(
    candidate: np.ndarray,
    template: CounterfactualTemplate,
    original: np.ndarray,
    encoder: Encoder,
) -> np.ndarray:
    """Keep mutable blocks from the candidate, restore immutable blocks from the
    original, bit for bit. Idempotent."""
    candidate = np.asarray(candidate)
    original = np.asarray(original)
    if candidate.shape[-1] != encoder.dim or original.shape[-1] != encoder.dim:
        raise ValueError(
            f"block map mismatch: expected dim {encoder.dim}, "
            f"got {candidate.shape[-1]} and {original.shape[-1]}"
        )
    dim_mask = encoder.dim_mask(template.mutable)
    return np.where(dim_mask, candidate, original)


def overwrite_frozen(
    rows: pd.DataFrame, template: CounterfactualTemplate, schema: DatasetSchema
) -> pd.DataFrame:
    """Stamp frozen raw values onto decoded rows so immutable columns are exact."""
    out = rows.copy()
    for col, value in template.frozen_values.items():
        out[col] = value if schema.kind_of(col) != "continuous" else float(value)
    return out


def template_to_json(template: CounterfactualTemplate) -> str:
    return json.dumps({"mutable": list(template.mutable), "desired_class": template.desired_class})


def template_from_json(text_or_dict, schema: DatasetSchema, instance) -> CounterfactualTemplate:
    d = json.loads(text_or_dict) if isinstance(text_or_dict, str) else dict(text_or_dict)
    return make_template(schema, instance, d["mutable"], d["desired_class"])
