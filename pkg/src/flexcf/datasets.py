"""Bundled synthetic datasets for tests, demos and desk-scale benchmarks.

The census generator mirrors the Adult income column layout so pipelines built
against it run unchanged on the real CSV; labels come from a noisy logistic
score over the observable features, which keeps the counterfactual task
learnable without any external download.
"""

from __future__ import annotations

import numpy as np
import pandas as pd

from .schema import CATEGORICAL, CONTINUOUS, DatasetSchema

EDUCATION = ("HS-grad", "Some-college", "Bachelors", "Masters", "Doctorate")
OCCUPATION = ("Service", "Admin", "Blue-collar", "Professional", "Executive")
WORKCLASS = ("Private", "Self-emp", "Government")
MARITAL = ("Never-married", "Married", "Divorced")
SEX = ("Female", "Male")


def blobs_schema() -> DatasetSchema:
    return DatasetSchema(
        columns=(("x1", CONTINUOUS), ("x2", CONTINUOUS)),
        categories={},
        target="label",
        target_classes=("neg", "pos"),
    )


def make_blobs(n: int = 1000, seed: int = 0) -> tuple[DatasetSchema, pd.DataFrame]:
    """Two well-separated Gaussian blobs; a linearly separable 2-feature task."""
    rng = np.random.default_rng(seed)
    half = n // 2
    neg = rng.normal(loc=(-2.0, -2.0), scale=0.5, size=(half, 2))
    pos = rng.normal(loc=(2.0, 2.0), scale=0.5, size=(n - half, 2))
    rows = pd.DataFrame(np.vstack([neg, pos]), columns=["x1", "x2"])
    rows["label"] = ["neg"] * half + ["pos"] * (n - half)
    rows = rows.sample(frac=1.0, random_state=seed).reset_index(drop=True)
    return blobs_schema(), rows


def census_schema() -> DatasetSchema:
    return DatasetSchema(
        columns=(
            ("age", CONTINUOUS),
            ("workclass", CATEGORICAL),
            ("education", CATEGORICAL),
            ("marital_status", CATEGORICAL),
            ("occupation", CATEGORICAL),
            ("sex", CATEGORICAL),
            ("capital_gain", CONTINUOUS),
            ("hours_per_week", CONTINUOUS),
        ),
        categories={
            "workclass": WORKCLASS,
            "education": EDUCATION,
            "marital_status": MARITAL,
            "occupation": OCCUPATION,
            "sex": SEX,
        },
        target="income",
        target_classes=("<=50K", ">50K"),
    )


def make_census(n: int = 8000, seed: int = 0) -> tuple[DatasetSchema, pd.DataFrame]:
    """Income-census-style table with mixed feature kinds and an imbalanced target."""
    rng = np.random.default_rng(seed)
    t = rng.normal(size=n)  # latent prosperity, induces realistic correlations

    age = np.clip(np.round(rng.normal(38 + 6 * t, 12)), 17, 90)
    edu_score = t + rng.normal(scale=0.8, size=n)
    edu_idx = np.digitize(edu_score, np.quantile(edu_score, [0.35, 0.65, 0.85, 0.96]))
    occ_score = 0.7 * edu_idx + rng.normal(scale=1.0, size=n)
    occ_idx = np.digitize(occ_score, np.quantile(occ_score, [0.25, 0.5, 0.75, 0.92]))
    workclass = rng.choice(len(WORKCLASS), size=n, p=[0.7, 0.15, 0.15])
    married = (rng.random(n) < 1 / (1 + np.exp(-(age - 32) / 8.0))).astype(int)
    marital = np.where(married, 1, np.where(rng.random(n) < 0.8, 0, 2))
    sex = (rng.random(n) < 0.5).astype(int)
    hours = np.clip(np.round(rng.normal(40 + 4 * t, 10)), 5, 99)
    has_gain = rng.random(n) < 1 / (1 + np.exp(-(t - 1.5)))
    capital_gain = np.where(has_gain, np.round(np.exp(rng.normal(8.5, 0.8, size=n))), 0.0)

    score = (
        0.035 * (age - 38)
        + 0.55 * edu_idx
        + 0.45 * occ_idx
        + 0.02 * (hours - 40)
        + 0.9 * (marital == 1)
        + 0.35 * sex
        + 1.2 * (capital_gain > 0)
    )
    prob = 1 / (1 + np.exp(-2.2 * (score - 3.6)))
    label = rng.random(n) < prob

    rows = pd.DataFrame(
        {
            "age": age.astype(np.float64),
            "workclass": [WORKCLASS[i] for i in workclass],
            "education": [EDUCATION[i] for i in edu_idx],
            "marital_status": [MARITAL[i] for i in marital],
            "occupation": [OCCUPATION[i] for i in occ_idx],
            "sex": [SEX[i] for i in sex],
            "capital_gain": capital_gain.astype(np.float64),
            "hours_per_week": hours.astype(np.float64),
            "income": np.where(label, ">50K", "<=50K"),
        }
    )
    return census_schema(), rows
