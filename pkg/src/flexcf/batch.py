"""Shared container for generated counterfactual candidates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd


@dataclass
class CounterfactualBatch:
    """Hard candidates with (optional) classifier verdicts.

    ``group_ids[i]`` indexes the original instance candidate ``i`` was generated
    for; ``valid`` is None when no classifier was available to verify.
    """

    rows: pd.DataFrame
    encoded: np.ndarray
    desired: list[str]
    group_ids: np.ndarray
    predicted: list[str] | None = None
    probabilities: np.ndarray | None = None
    valid: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.rows)
        if len(self.encoded) != n or len(self.desired) != n or len(self.group_ids) != n:
            raise ValueError("batch fields must have equal length")

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def valid_fraction(self) -> float | None:
        if self.valid is None:
            return None
        return float(np.mean(self.valid))

    def attach_predictions(self, classes: list[str], probabilities: np.ndarray) -> None:
        self.predicted = list(classes)
        self.probabilities = np.asarray(probabilities)
        self.valid = np.array([p == d for p, d in zip(classes, self.desired)], dtype=bool)
