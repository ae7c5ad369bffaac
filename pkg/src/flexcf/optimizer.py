"""Template-guided regularized gradient descent over encoded feature space.

Candidates start at the originals and follow Adam on a weighted sum of target
cross-entropy, per-feature divergence and a realism score from an independent
data critic. Immutable features are pinned to their original values at every
step; categorical blocks stay on the simplex through softmax over free logits
and are hardened at the end.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
import torch
from torch.nn import functional as F

from .batch import CounterfactualBatch
from .classifier import TrainedClassifier
from .gan import PacCritic, divergence_terms
from .schema import CATEGORICAL, CONTINUOUS
from .templates import (
    CounterfactualTemplate,
    column_mask,
    expand_mask,
    make_template,
    overwrite_frozen,
)

logger = logging.getLogger(__name__)


@dataclass
class OptimizerConfig:
    lambda_clas: float = 1.0
    lambda_div: float = 1.0
    lambda_real: float = 0.1
    adam_betas: tuple[float, float] = (0.9, 0.999)
    lr: float = 0.1
    steps: int = 30
    n_per_original: int = 1
    init_jitter: float = 0.1  # init spread for candidates beyond the first per original
    # softmax temperature anneals tau_start -> tau_end over the first
    # anneal_steps so one-hot blocks settle into hard corners instead of
    # hovering at the argmax boundary, which would make late hardening lossy;
    # the horizon is absolute so longer runs converge rather than re-stretch
    tau_start: float = 1.0
    tau_end: float = 0.2
    anneal_steps: int = 30
    realism_critic: object | None = None

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if min(self.lambda_clas, self.lambda_div, self.lambda_real) < 0:
            raise ValueError("loss weights must be >= 0")


def _init_logits(x: torch.Tensor, encoder, alpha: float = 0.02) -> torch.Tensor:
    """Free parameters whose assembly reproduces x: identity on scalar dims,
    log of the smoothed block distribution on one-hot dims."""
    z = x.clone()
    for b in encoder.blocks:
        lo = b.offset + (1 if (b.kind == CONTINUOUS and encoder.mode == "gmm") else 0)
        if b.kind == CATEGORICAL or (b.kind == CONTINUOUS and encoder.mode == "gmm"):
            width = b.offset + b.width - lo
            if width > 0:
                blk = x[:, lo : b.offset + b.width]
                z[:, lo : b.offset + b.width] = torch.log(blk * (1 - alpha) + alpha / width)
    return z


def _assemble(z: torch.Tensor, encoder, tau: float = 1.0) -> torch.Tensor:
    parts = []
    for b in encoder.blocks:
        blk = z[:, b.offset : b.offset + b.width]
        if b.kind == CONTINUOUS and encoder.mode == "standardize":
            parts.append(blk)
        elif b.kind == CONTINUOUS:
            parts.append(torch.cat([blk[:, :1], F.softmax(blk[:, 1:] / tau, dim=1)], dim=1))
        else:
            parts.append(F.softmax(blk / tau, dim=1))
    return torch.cat(parts, dim=1)


def optimize_batch(
    classifier: TrainedClassifier,
    originals: pd.DataFrame,
    templates: list[CounterfactualTemplate],
    config: OptimizerConfig,
    critic: PacCritic | None = None,
    rng: np.random.Generator | None = None,
    step_callback=None,
    project: bool = True,
) -> CounterfactualBatch:
    """Batched counterfactual search; one mean loss drives the whole batch.

    Candidates whose gradients go non-finite are frozen at their last finite
    value; the rest keep optimizing. ``project=False`` drops the immutable
    pinning (the unguided baseline).
    """
    if len(originals) == 0:
        raise ValueError("empty batch")
    if len(originals) != len(templates):
        raise ValueError("originals/templates length mismatch")
    critic = critic if critic is not None else config.realism_critic
    rng = rng or np.random.default_rng(0)
    enc = classifier.encoder
    schema = classifier.schema
    reps = config.n_per_original
    n = len(originals)

    x = enc.encode(originals[schema.feature_names])
    group_ids = np.repeat(np.arange(n), reps)
    x_og = torch.as_tensor(x[group_ids], dtype=torch.float32)
    desired_idx = torch.as_tensor(
        np.array([schema.class_index(t.desired_class) for t in templates])[group_ids]
    )
    col_masks = np.stack([column_mask(schema, t) for t in templates]).astype(np.float64)
    if project:
        dim_mask = torch.as_tensor(
            expand_mask(enc, col_masks)[group_ids].astype(np.float32)
        )
        col_mask_t = torch.as_tensor(col_masks[group_ids], dtype=torch.float32)
    else:
        dim_mask = torch.ones_like(x_og)
        col_mask_t = torch.ones((len(x_og), len(schema.feature_names)), dtype=torch.float32)

    z = _init_logits(x_og, enc)
    if reps > 1 and config.init_jitter > 0:
        jitter = torch.as_tensor(
            rng.standard_normal(z.shape) * config.init_jitter, dtype=torch.float32
        )
        # first replica of each original keeps the exact starting point
        first = torch.as_tensor((np.arange(len(group_ids)) % reps == 0).astype(np.float32))
        z = z + jitter * dim_mask * (1.0 - first)[:, None]
    z = z.detach().requires_grad_(True)

    opt = torch.optim.Adam([z], lr=config.lr, betas=config.adam_betas)
    alive = torch.ones(len(x_og), dtype=torch.bool)

    def temperature(step: int) -> float:
        horizon = max(min(config.anneal_steps, config.steps) - 1, 1)
        frac = min(step / horizon, 1.0)
        return config.tau_start + (config.tau_end - config.tau_start) * frac

    def assembled_candidates(tau: float):
        soft = _assemble(z, enc, tau)
        return torch.where(dim_mask.bool(), soft, x_og)

    for step in range(config.steps):
        cand = assembled_candidates(temperature(step))
        terms = torch.zeros(len(x_og))
        if config.lambda_clas:
            ce = F.cross_entropy(classifier.logits(cand), desired_idx, reduction="none")
            terms = terms + config.lambda_clas * ce
        if config.lambda_div:
            terms = terms + config.lambda_div * divergence_terms(
                x_og, cand, col_mask_t, enc, lambda_m=1.0
            )
        if config.lambda_real and critic is not None:
            terms = terms - config.lambda_real * critic.score(cand)
        loss = terms[alive].mean() if alive.any() else terms.sum() * 0.0
        opt.zero_grad()
        loss.backward()
        if z.grad is not None:
            bad = ~torch.isfinite(z.grad).all(dim=1)
            newly_dead = bad & alive
            if newly_dead.any():
                logger.warning(
                    "aborting %d candidate(s) with non-finite gradients at step %d",
                    int(newly_dead.sum()),
                    step,
                )
                alive = alive & ~newly_dead
            z.grad[~alive] = 0.0
            z.grad[~torch.isfinite(z.grad)] = 0.0
        opt.step()
        if step_callback is not None:
            step_callback(step, assembled_candidates(temperature(step)).detach().numpy())

    cand = assembled_candidates(config.tau_end).detach().numpy().astype(np.float64)
    hard = enc.harden(cand)
    hard = np.where(expand_mask(enc, col_masks)[group_ids], hard, x[group_ids])
    rows = enc.decode(hard)
    for i, t in enumerate(templates):
        sel = group_ids == i
        rows.loc[sel, :] = overwrite_frozen(rows.loc[sel], t, schema)
    encoded = enc.encode(rows)
    batch = CounterfactualBatch(
        rows=rows.reset_index(drop=True),
        encoded=encoded,
        desired=[templates[g].desired_class for g in group_ids],
        group_ids=group_ids,
    )
    classes, probs = classifier.predict_encoded(encoded)
    batch.attach_predictions(classes, probs)
    return batch


def default_optimize_batch(
    classifier: TrainedClassifier,
    originals: pd.DataFrame,
    desired,
    config: OptimizerConfig,
    critic: PacCritic | None = None,
    rng: np.random.Generator | None = None,
    step_callback=None,
) -> CounterfactualBatch:
    """Unguided baseline: identical loss with every feature free to move."""
    schema = classifier.schema
    desired_list = [desired] * len(originals) if isinstance(desired, str) else list(desired)
    templates = [
        make_template(schema, originals.iloc[i], schema.feature_names, desired_list[i])
        for i in range(len(originals))
    ]
    return optimize_batch(
        classifier, originals, templates, config,
        critic=critic, rng=rng, step_callback=step_callback, project=False,
    )
