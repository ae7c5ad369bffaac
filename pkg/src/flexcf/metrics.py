"""Quality measures for counterfactual batches and the independent data critic.

Fraction-type measures live in [0,1]; diversity measures are reported as absent
(None) rather than zero when fewer than two distinct candidates exist. Fakeness
is dataset-relative and is always reported next to the real-sample reference
distribution.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import torch

from .batch import CounterfactualBatch
from .classifier import TrainedClassifier, seed_everything
from .data import EmpiricalCdf, Encoder
from .gan import FceganConfig, Generator, PacCritic, activate_output, gradient_penalty
from .schema import CATEGORICAL, CONTINUOUS, DatasetSchema

logger = logging.getLogger(__name__)


# -- pairwise measures --------------------------------------------------------

def categories_changed(x_og, x_cf, schema: DatasetSchema) -> float | None:
    """Fraction of categorical columns whose category differs; None if there are none."""
    cols = schema.categorical_columns
    if not cols:
        return None
    og, cf = dict(x_og), dict(x_cf)
    return float(np.mean([str(og[c]) != str(cf[c]) for c in cols]))


def percentile_shifts(x_og, x_cf, cdf: EmpiricalCdf, schema: DatasetSchema):
    """(mean, max) of absolute per-column CDF shifts; None if no continuous columns."""
    cols = schema.continuous_columns
    if not cols:
        return None
    og, cf = dict(x_og), dict(x_cf)
    shifts = [abs(cdf.evaluate(c, float(cf[c])) - cdf.evaluate(c, float(og[c]))) for c in cols]
    return float(np.mean(shifts)), float(np.max(shifts))


def diversity(rows: pd.DataFrame, cdf: EmpiricalCdf, schema: DatasetSchema):
    """Expected pairwise divergence between distinct candidates.

    Pairs of identical candidates are excluded; with fewer than two distinct
    candidates both values are absent.
    """
    n = len(rows)
    cat_vals, cont_vals = [], []
    recs = rows.to_dict("records")
    for i in range(n):
        for j in range(i + 1, n):
            if _rows_equal(recs[i], recs[j], schema):
                continue
            cc = categories_changed(recs[i], recs[j], schema)
            if cc is not None:
                cat_vals.append(cc)
            ps = percentile_shifts(recs[i], recs[j], cdf, schema)
            if ps is not None:
                cont_vals.append(ps[0])
    cat = float(np.mean(cat_vals)) if cat_vals else None
    cont = float(np.mean(cont_vals)) if cont_vals else None
    return cat, cont


def _rows_equal(a: dict, b: dict, schema: DatasetSchema) -> bool:
    for name, kind in schema.columns:
        if kind == CONTINUOUS:
            if float(a[name]) != float(b[name]):
                return False
        elif str(a[name]) != str(b[name]):
            return False
    return True


# -- independent data critic ---------------------------------------------------

@dataclass
class DataCritic:
    """Wasserstein critic from a data-only GAN; scores fakeness of instances."""

    net: PacCritic
    encoder: Encoder
    schema: DatasetSchema
    reference_mean: float
    reference_std: float
    config: FceganConfig | None = None

    def score(self, x: torch.Tensor) -> torch.Tensor:
        """Differentiable realism score (higher = more real)."""
        return self.net.score(x)

    def fakeness_encoded(self, arr: np.ndarray) -> np.ndarray:
        self.net.eval()
        with torch.no_grad():
            s = self.net.score(torch.as_tensor(np.atleast_2d(arr), dtype=torch.float32))
        return -s.numpy().astype(np.float64)

    def fakeness(self, rows: pd.DataFrame) -> np.ndarray:
        return self.fakeness_encoded(self.encoder.encode(rows[self.schema.feature_names]))


def train_data_critic(
    train_rows: pd.DataFrame,
    schema: DatasetSchema,
    encoder: Encoder | None = None,
    config: FceganConfig | None = None,
    seed: int = 0,
) -> DataCritic:
    """Train an unconditional tabular GAN on the training split and keep its critic.

    The critic never sees counterfactual models; its scores contextualize how
    far generated rows sit from the data distribution.
    """
    config = config or FceganConfig(max_epochs=30)
    seed_everything(seed)
    rng = np.random.default_rng(seed)
    encoder = encoder or Encoder.fit(train_rows, schema)
    x = encoder.encode(train_rows[schema.feature_names])
    x_t = torch.as_tensor(x, dtype=torch.float32)

    batch = min(config.batch_size, (len(x) // config.pac) * config.pac)
    if batch == 0:
        raise ValueError("training set smaller than one pac group")
    gen = Generator(config.noise_dim, config.gen_hidden, encoder.dim)
    critic = PacCritic(encoder.dim, config.disc_hidden, pac=config.pac)
    opt_g = torch.optim.Adam(
        gen.parameters(), lr=config.lr_gen, betas=config.adam_betas,
        weight_decay=config.weight_decay,
    )
    opt_d = torch.optim.Adam(
        critic.parameters(), lr=config.lr_disc, betas=config.adam_betas,
        weight_decay=config.weight_decay,
    )

    def fake_batch():
        noise = torch.as_tensor(rng.standard_normal((batch, config.noise_dim)), dtype=torch.float32)
        return activate_output(gen(noise), encoder, config.gumbel_tau, hard_inference=False)

    steps = max(len(x) // batch, 1)
    for epoch in range(config.max_epochs):
        for _ in range(steps):
            for _ in range(config.disc_steps_per_gen):
                real = x_t[rng.integers(0, len(x), size=batch)]
                with torch.no_grad():
                    fake = fake_batch()
                loss_d = (
                    critic(fake).mean()
                    - critic(real).mean()
                    + gradient_penalty(critic, real, fake, config.gp_coefficient)
                )
                if not torch.isfinite(loss_d):
                    raise RuntimeError(f"non-finite critic loss at epoch {epoch}")
                opt_d.zero_grad()
                loss_d.backward()
                opt_d.step()
            loss_g = -critic(fake_batch()).mean()
            opt_g.zero_grad()
            loss_g.backward()
            opt_g.step()

    critic.eval()
    out = DataCritic(critic, encoder, schema, 0.0, 1.0, config)
    ref = out.fakeness_encoded(x)
    out.reference_mean = float(ref.mean())
    out.reference_std = float(ref.std())
    return out


# -- aggregated report ----------------------------------------------------------

@dataclass
class MetricsReport:
    valid_fraction: float | None = None
    mean_counterfactual_prediction: float | None = None
    categories_changed: float | None = None
    mean_percentile_shift: float | None = None
    max_percentile_shift: float | None = None
    fakeness: float | None = None
    fakeness_real_mean: float | None = None
    fakeness_real_std: float | None = None
    categorical_diversity: float | None = None
    continuous_diversity: float | None = None
    per_feature_divergence: dict = field(default_factory=dict)
    n_candidates: int = 0
    n_valid: int | None = None

    def to_dict(self) -> dict:
        return {
            "valid_fraction": self.valid_fraction,
            "mean_counterfactual_prediction": self.mean_counterfactual_prediction,
            "categories_changed": self.categories_changed,
            "mean_percentile_shift": self.mean_percentile_shift,
            "max_percentile_shift": self.max_percentile_shift,
            "fakeness": self.fakeness,
            "fakeness_real_mean": self.fakeness_real_mean,
            "fakeness_real_std": self.fakeness_real_std,
            "categorical_diversity": self.categorical_diversity,
            "continuous_diversity": self.continuous_diversity,
            "per_feature_divergence": self.per_feature_divergence,
            "n_candidates": self.n_candidates,
            "n_valid": self.n_valid,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(**d)


def evaluate(
    batch: CounterfactualBatch,
    originals: pd.DataFrame,
    templates: list,
    classifier: TrainedClassifier | None = None,
    cdf: EmpiricalCdf | None = None,
    critic: DataCritic | None = None,
    schema: DatasetSchema | None = None,
) -> MetricsReport:
    """Aggregate every quality measure over a batch.

    ``valid_fraction`` covers all candidates; divergence, diversity and the
    per-feature breakdown are computed over valid candidates only (over all
    candidates when validity is unknown).
    """
    if len(originals) != len(templates):
        raise ValueError("originals/templates length mismatch")
    if schema is None:
        schema = classifier.schema if classifier is not None else critic.schema if critic else None
    if schema is None:
        raise ValueError("a schema is required (directly or via classifier/critic)")

    n = len(batch)
    report = MetricsReport(n_candidates=n)
    if n == 0:
        return report

    desired_idx = None
    if classifier is not None:
        classes, probs = classifier.predict_encoded(batch.encoded)
        desired_idx = np.array([schema.class_index(d) for d in batch.desired])
        got = np.array([schema.class_index(c) for c in classes])
        valid = got == desired_idx
        report.valid_fraction = float(valid.mean())
        report.mean_counterfactual_prediction = float(
            probs[np.arange(n), desired_idx].mean()
        )
    elif batch.valid is not None:
        valid = np.asarray(batch.valid, dtype=bool)
        report.valid_fraction = float(valid.mean())
        if batch.probabilities is not None:
            desired_idx = np.array([schema.class_index(d) for d in batch.desired])
            report.mean_counterfactual_prediction = float(
                np.asarray(batch.probabilities)[np.arange(n), desired_idx].mean()
            )
    else:
        valid = np.ones(n, dtype=bool)  # validity unknown: measure over everything
    report.n_valid = int(valid.sum()) if report.valid_fraction is not None else None

    sel = np.flatnonzero(valid)
    cand_recs = batch.rows.to_dict("records")
    orig_recs = originals[schema.feature_names].to_dict("records")

    cat_vals, mean_shift_vals, max_shift_vals = [], [], []
    per_feature: dict[str, list] = {c: [] for c in schema.feature_names}
    for i in sel:
        og = orig_recs[batch.group_ids[i]]
        cf = cand_recs[i]
        cc = categories_changed(og, cf, schema)
        if cc is not None:
            cat_vals.append(cc)
        if cdf is not None:
            ps = percentile_shifts(og, cf, cdf, schema)
            if ps is not None:
                mean_shift_vals.append(ps[0])
                max_shift_vals.append(ps[1])
        for name, kind in schema.columns:
            if kind == CATEGORICAL:
                per_feature[name].append(float(str(og[name]) != str(cf[name])))
            elif cdf is not None:
                per_feature[name].append(
                    abs(cdf.evaluate(name, float(cf[name])) - cdf.evaluate(name, float(og[name])))
                )

    report.categories_changed = float(np.mean(cat_vals)) if cat_vals else None
    report.mean_percentile_shift = float(np.mean(mean_shift_vals)) if mean_shift_vals else None
    report.max_percentile_shift = float(np.mean(max_shift_vals)) if max_shift_vals else None
    report.per_feature_divergence = {
        c: (float(np.mean(v)) if v else None) for c, v in per_feature.items()
    }

    if critic is not None:
        report.fakeness = float(critic.fakeness_encoded(batch.encoded).mean())
        report.fakeness_real_mean = critic.reference_mean
        report.fakeness_real_std = critic.reference_std

    if cdf is not None:
        cat_div, cont_div = [], []
        for g in np.unique(batch.group_ids):
            members = np.flatnonzero((batch.group_ids == g) & valid)
            if len(members) < 2:
                continue
            cd, ud = diversity(batch.rows.iloc[members], cdf, schema)
            if cd is not None:
                cat_div.append(cd)
            if ud is not None:
                cont_div.append(ud)
        report.categorical_diversity = float(np.mean(cat_div)) if cat_div else None
        report.continuous_diversity = float(np.mean(cont_div)) if cont_div else None
    return report
