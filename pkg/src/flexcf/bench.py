"""Benchmark harness: flexibility sweeps, ablated baselines, seeded AUC/SEM
aggregation, divergence-constraint studies and SVG plot emitters.

A sweep retrains the method under each seed, draws fresh random mutable sets at
every flexibility level, and aggregates the metric reports into per-metric area
under the flexibility curve with the standard error over seeds.
"""

from __future__ import annotations

import csv
import json
import logging
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .batch import CounterfactualBatch
from .classifier import (
    ClassifierConfig,
    PredictionHistory,
    TrainedClassifier,
    export_history,
    train_classifier,
)
from .data import EmpiricalCdf, SplitDataset
from .gan import FceganConfig, FceganModel, train_fcegan
from .metrics import DataCritic, MetricsReport, evaluate, train_data_critic
from .optimizer import OptimizerConfig, default_optimize_batch, optimize_batch
from .schema import DatasetSchema
from .templates import (
    CounterfactualTemplate,
    column_mask,
    expand_mask,
    fixed_fraction_mask,
    make_template,
    overwrite_frozen,
)

logger = logging.getLogger(__name__)

METHODS = (
    "fcegan_classifier",
    "fcegan_blackbox",
    "fcegan_no_template",
    "fcegan_blackbox_no_template",
    "rgd_template",
    "rgd_default",
    "random_input",
)

DEFAULT_GRID = (0.1, 0.25, 0.5, 0.75, 1.0)

AUC_METRICS = (
    "valid_fraction",
    "mean_counterfactual_prediction",
    "categories_changed",
    "mean_percentile_shift",
    "max_percentile_shift",
    "fakeness",
    "categorical_diversity",
    "continuous_diversity",
)

# Divergence-constraint levels for the mutable-feature weight, per training mode.
CONSTRAINT_LEVELS = {
    "classifier": {"none": 0.0, "small": 10.0, "large": 100.0},
    "black_box": {"none": 0.0, "small": 5.0, "large": 50.0},
}


@dataclass
class BenchContext:
    """Shared task fixtures: the split, reference classifier, CDF and data critic."""

    schema: DatasetSchema
    split: SplitDataset
    classifier: TrainedClassifier
    cdf: EmpiricalCdf
    desired_class: str
    critic: DataCritic | None = None
    fcegan_config: FceganConfig = field(default_factory=FceganConfig)
    optimizer_config: OptimizerConfig = field(default_factory=OptimizerConfig)

    @classmethod
    def build(
        cls,
        schema: DatasetSchema,
        split: SplitDataset,
        desired_class: str | None = None,
        seed: int = 0,
        classifier_config: ClassifierConfig | None = None,
        fcegan_config: FceganConfig | None = None,
        optimizer_config: OptimizerConfig | None = None,
        critic_config: FceganConfig | None = None,
        with_critic: bool = True,
    ) -> "BenchContext":
        clf = train_classifier(split, schema, classifier_config, seed=seed)
        cdf = EmpiricalCdf.fit(split.train, schema)
        critic = None
        if with_critic:
            critic = train_data_critic(
                split.train, schema, encoder=clf.encoder, config=critic_config, seed=seed
            )
        return cls(
            schema=schema,
            split=split,
            classifier=clf,
            cdf=cdf,
            desired_class=desired_class or schema.target_classes[-1],
            critic=critic,
            fcegan_config=fcegan_config or FceganConfig(),
            optimizer_config=optimizer_config or OptimizerConfig(),
        )

    def eval_rows(self, cap: int | None) -> pd.DataFrame:
        """Test rows whose predicted label differs from the desired class."""
        pred, _ = self.classifier.predict(self.split.test)
        mask = np.array([c != self.desired_class for c in pred])
        rows = self.split.test.loc[mask].reset_index(drop=True)
        return rows.head(cap) if cap else rows


def posthoc_reset(
    batch: CounterfactualBatch,
    originals: pd.DataFrame,
    templates: list[CounterfactualTemplate],
    classifier: TrainedClassifier,
) -> CounterfactualBatch:
    """Re-impose template immutability on candidates generated without guidance."""
    enc = classifier.encoder
    schema = classifier.schema
    x = enc.encode(originals[schema.feature_names])
    col_masks = np.stack([column_mask(schema, t) for t in templates])
    dim_mask = expand_mask(enc, col_masks)[batch.group_ids]
    kept = np.where(dim_mask, batch.encoded, x[batch.group_ids])
    rows = enc.decode(kept)
    for i, t in enumerate(templates):
        sel = batch.group_ids == i
        rows.loc[sel, :] = overwrite_frozen(rows.loc[sel], t, schema)
    encoded = enc.encode(rows)
    out = CounterfactualBatch(
        rows=rows.reset_index(drop=True),
        encoded=encoded,
        desired=list(batch.desired),
        group_ids=batch.group_ids.copy(),
    )
    classes, probs = classifier.predict_encoded(encoded)
    out.attach_predictions(classes, probs)
    return out


def random_input_batch(
    ctx: BenchContext,
    originals: pd.DataFrame,
    templates: list[CounterfactualTemplate],
    n_per_instance: int,
    rng: np.random.Generator,
) -> CounterfactualBatch:
    """Baseline: mutable features replaced by draws from the training marginals."""
    schema = ctx.schema
    train = ctx.split.train
    n = len(originals)
    group_ids = np.repeat(np.arange(n), n_per_instance)
    rows = originals[schema.feature_names].iloc[group_ids].reset_index(drop=True)
    for col in schema.feature_names:
        donors = train[col].to_numpy()
        draw = donors[rng.integers(0, len(donors), size=len(rows))]
        mutable_here = np.array([templates[g].is_mutable(col) for g in group_ids])
        values = rows[col].to_numpy(copy=True)
        values[mutable_here] = draw[mutable_here]
        rows[col] = values
    encoded = ctx.classifier.encoder.encode(rows)
    batch = CounterfactualBatch(
        rows=rows,
        encoded=encoded,
        desired=[templates[g].desired_class for g in group_ids],
        group_ids=group_ids,
    )
    classes, probs = ctx.classifier.predict_encoded(encoded)
    batch.attach_predictions(classes, probs)
    return batch


class MethodRunner:
    """A trained method turned into a uniform candidate-generating callable."""

    def __init__(self, name: str, ctx: BenchContext, seed: int, lambda_m: float | None = None):
        if name not in METHODS:
            raise ValueError(f"unknown method {name!r}; expected one of {METHODS}")
        self.name = name
        self.ctx = ctx
        self.seed = seed
        self.model: FceganModel | None = None
        cfg = ctx.fcegan_config
        if lambda_m is not None:
            cfg = self._with_lambda_m(cfg, lambda_m)
        if name == "fcegan_classifier":
            self.model = train_fcegan(ctx.split, cfg, seed=seed, classifier=ctx.classifier)
        elif name == "fcegan_no_template":
            ablated = FceganConfig(**{**cfg.__dict__, "use_templates": False})
            self.model = train_fcegan(ctx.split, ablated, seed=seed, classifier=ctx.classifier)
        elif name in ("fcegan_blackbox", "fcegan_blackbox_no_template"):
            bb = FceganConfig(
                **{
                    **cfg.__dict__,
                    "mode": "black_box",
                    "lambda_clas": 0.0,
                    "use_templates": name == "fcegan_blackbox",
                }
            )
            history = PredictionHistory(
                export_history(ctx.classifier, ctx.split.train),
                export_history(ctx.classifier, ctx.split.validation),
            )
            self.model = train_fcegan(
                None, bb, seed=seed, history=history, schema=ctx.schema,
                encoder=ctx.classifier.encoder,
            )

    @staticmethod
    def _with_lambda_m(cfg: FceganConfig, lambda_m: float) -> FceganConfig:
        return FceganConfig(**{**cfg.__dict__, "lambda_m": lambda_m})

    def __call__(
        self,
        originals: pd.DataFrame,
        templates: list[CounterfactualTemplate],
        n_per_instance: int,
        rng: np.random.Generator,
    ) -> CounterfactualBatch:
        ctx = self.ctx
        if self.model is not None:
            return self.model.generate_batch(
                originals, templates, n_per_instance, rng, classifier=ctx.classifier
            )
        if self.name == "rgd_template":
            cfg = OptimizerConfig(
                **{**ctx.optimizer_config.__dict__, "n_per_original": n_per_instance}
            )
            return optimize_batch(
                ctx.classifier, originals, templates, cfg, critic=ctx.critic, rng=rng
            )
        if self.name == "rgd_default":
            cfg = OptimizerConfig(
                **{**ctx.optimizer_config.__dict__, "n_per_original": n_per_instance}
            )
            free = default_optimize_batch(
                ctx.classifier, originals, [t.desired_class for t in templates], cfg,
                critic=ctx.critic, rng=rng,
            )
            return posthoc_reset(free, originals, templates, ctx.classifier)
        return random_input_batch(ctx, originals, templates, n_per_instance, rng)


@dataclass
class SweepResult:
    method: str
    grid: list[float]
    seeds: list[int]
    reports: dict  # seed -> level -> MetricsReport dict
    auc_per_seed: dict  # metric -> list aligned with seeds (None allowed)
    auc: dict  # metric -> mean or None
    sem: dict  # metric -> sem or None
    normalization: str | None = None
    undefined: list[str] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "grid": list(self.grid),
            "seeds": list(self.seeds),
            "reports": {
                str(s): {str(lv): r for lv, r in by_level.items()}
                for s, by_level in self.reports.items()
            },
            "auc_per_seed": self.auc_per_seed,
            "auc": self.auc,
            "sem": self.sem,
            "normalization": self.normalization,
            "undefined": self.undefined,
            "provenance": self.provenance,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def curve(self, metric: str, seed: int) -> list:
        return [self.reports[seed][lv].get(metric) for lv in self.grid]


def commit_tag() -> str:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True, timeout=10
        )
        return out.stdout.strip() or "unknown"
    except OSError:
        return "unknown"


def trapezoid_auc(grid, values) -> float | None:
    if any(v is None for v in values):
        return None
    return float(np.trapezoid(np.asarray(values, dtype=np.float64), np.asarray(grid)))


def _aggregate(method, grid, seeds, reports, provenance) -> SweepResult:
    auc_per_seed = {}
    auc = {}
    sem = {}
    for metric in AUC_METRICS:
        per_seed = []
        for s in seeds:
            values = [reports[s][lv].get(metric) for lv in grid]
            per_seed.append(trapezoid_auc(grid, values))
        auc_per_seed[metric] = per_seed
        defined = [v for v in per_seed if v is not None]
        if len(defined) == len(per_seed) and defined:
            auc[metric] = float(np.mean(defined))
            sem[metric] = (
                float(np.std(defined, ddof=1) / np.sqrt(len(defined))) if len(defined) > 1 else 0.0
            )
        else:
            auc[metric] = None
            sem[metric] = None
    return SweepResult(
        method=method,
        grid=list(grid),
        seeds=list(seeds),
        reports=reports,
        auc_per_seed=auc_per_seed,
        auc=auc,
        sem=sem,
        provenance=provenance,
    )


def run_flexibility_sweep(
    ctx: BenchContext,
    method: str,
    grid=DEFAULT_GRID,
    seeds=(0, 1, 2, 3, 4),
    n_per_instance: int = 5,
    cap: int = 500,
    lambda_m: float | None = None,
    out_dir: str | Path | None = None,
) -> SweepResult:
    """Train the method per seed and evaluate it across the flexibility grid."""
    grid = sorted(float(g) for g in grid)
    if grid and (grid[0] < 0 or grid[-1] > 1):
        raise ValueError("flexibility grid must lie within [0, 1]")
    rows = ctx.eval_rows(cap)
    if rows.empty:
        raise ValueError("no evaluation rows with an undesired prediction")
    n_cols = len(ctx.schema.feature_names)

    reports: dict = {}
    provenance = {
        "method": method,
        "grid": grid,
        "seeds": list(seeds),
        "n_per_instance": n_per_instance,
        "cap": cap,
        "desired_class": ctx.desired_class,
        "lambda_m": lambda_m,
        "commit": commit_tag(),
        "fcegan_config": {k: _plain(v) for k, v in ctx.fcegan_config.__dict__.items()},
        "optimizer_config": {
            k: _plain(v) for k, v in ctx.optimizer_config.__dict__.items()
            if k != "realism_critic"
        },
    }
    for seed in seeds:
        runner = MethodRunner(method, ctx, seed, lambda_m=lambda_m)
        by_level = {}
        for li, level in enumerate(grid):
            rng = np.random.default_rng(np.random.SeedSequence([seed, li, 0xBE7C]))
            templates = []
            for i in range(len(rows)):
                mask = fixed_fraction_mask(n_cols, level, rng)
                mutable = [c for c, m in zip(ctx.schema.feature_names, mask) if m]
                templates.append(
                    make_template(ctx.schema, rows.iloc[i], mutable, ctx.desired_class)
                )
            batch = runner(rows, templates, n_per_instance, rng)
            report = evaluate(
                batch, rows, templates,
                classifier=ctx.classifier, cdf=ctx.cdf, critic=ctx.critic,
            )
            by_level[level] = report.to_dict()
        reports[seed] = by_level
        logger.info(
            "%s seed %d: valid fractions %s",
            method, seed,
            [round(by_level[lv]["valid_fraction"], 3) for lv in grid],
        )
    result = _aggregate(method, grid, list(seeds), reports, provenance)
    if out_dir is not None:
        write_sweep_result(result, out_dir)
    return result


def _plain(v):
    if isinstance(v, tuple):
        return list(v)
    return v


def normalize_against(result: SweepResult, reference: SweepResult) -> SweepResult:
    """Per-metric AUC ratios against a reference method, SEM by the first-order
    ratio rule; metrics whose reference AUC is zero are flagged undefined."""
    if list(result.grid) != list(reference.grid):
        raise ValueError("results must share the flexibility grid")
    auc = {}
    sem = {}
    undefined = []
    for metric in AUC_METRICS:
        a, b = result.auc.get(metric), reference.auc.get(metric)
        if a is None or b is None:
            auc[metric] = None
            sem[metric] = None
            continue
        if b == 0.0:
            auc[metric] = None
            sem[metric] = None
            undefined.append(metric)
            continue
        ratio = a / b
        auc[metric] = float(ratio)
        sa = result.sem.get(metric) or 0.0
        sb = reference.sem.get(metric) or 0.0
        rel = np.sqrt((sa / a) ** 2 + (sb / b) ** 2) if a != 0 else 0.0
        sem[metric] = float(abs(ratio) * rel)
    return SweepResult(
        method=result.method,
        grid=list(result.grid),
        seeds=list(result.seeds),
        reports=result.reports,
        auc_per_seed=result.auc_per_seed,
        auc=auc,
        sem=sem,
        normalization=reference.method,
        undefined=undefined,
        provenance=result.provenance,
    )


def divergence_constraint_study(
    ctx: BenchContext,
    mode: str = "classifier",
    levels: dict[str, float] | None = None,
    method: str | None = None,
    **sweep_kwargs,
) -> dict[str, SweepResult]:
    """One sweep per divergence-constraint level with the published weights."""
    levels = levels or CONSTRAINT_LEVELS[mode]
    method = method or ("fcegan_classifier" if mode == "classifier" else "fcegan_blackbox")
    out = {}
    for name, lam in levels.items():
        out[name] = run_flexibility_sweep(ctx, method, lambda_m=lam, **sweep_kwargs)
    return out


# -- persistence and plots -------------------------------------------------------

def write_sweep_result(result: SweepResult, out_dir: str | Path) -> None:
    out = Path(out_dir)
    cells = out / "cells"
    cells.mkdir(parents=True, exist_ok=True)
    for seed in result.seeds:
        cell = {
            "method": result.method,
            "seed": seed,
            "grid": result.grid,
            "reports": {str(lv): result.reports[seed][lv] for lv in result.grid},
            "auc": {m: result.auc_per_seed[m][result.seeds.index(seed)] for m in AUC_METRICS},
            "provenance": result.provenance,
        }
        name = f"{result.method}__seed{seed}.json"
        (cells / name).write_text(json.dumps(cell, sort_keys=True, indent=1))
    _append_aggregate_csv(result, out / "aggregate.csv")


def _append_aggregate_csv(result: SweepResult, path: Path) -> None:
    exists = path.exists()
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh)
        if not exists:
            writer.writerow(["method", "normalization", "metric", "auc", "sem"])
        for metric in AUC_METRICS:
            writer.writerow(
                [
                    result.method,
                    result.normalization or "",
                    metric,
                    "" if result.auc[metric] is None else f"{result.auc[metric]:.10g}",
                    "" if result.sem[metric] is None else f"{result.sem[metric]:.10g}",
                ]
            )


def write_flexibility_curves_svg(
    results: list[SweepResult], metric: str, path: str | Path
) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for res in results:
        grid = res.grid
        stack = []
        for seed in res.seeds:
            vals = res.curve(metric, seed)
            if any(v is None for v in vals):
                continue
            stack.append(vals)
        if not stack:
            continue
        arr = np.asarray(stack, dtype=np.float64)
        mean = arr.mean(axis=0)
        semv = arr.std(axis=0, ddof=1) / np.sqrt(len(arr)) if len(arr) > 1 else np.zeros_like(mean)
        ax.errorbar(grid, mean, yerr=semv, marker="o", capsize=3, label=res.method)
    ax.set_xlabel("fraction of mutable features")
    ax.set_ylabel(metric.replace("_", " "))
    ax.set_ylim(bottom=0)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def write_auc_bars_svg(results: list[SweepResult], metric: str, path: str | Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    names = [r.method + (f" / {r.normalization}" if r.normalization else "") for r in results]
    vals = [r.auc.get(metric) for r in results]
    errs = [r.sem.get(metric) or 0.0 for r in results]
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = np.arange(len(names))
    ax.bar(xs, [0.0 if v is None else v for v in vals],
           yerr=errs, capsize=4, color="#4878d0")
    ax.set_xticks(xs)
    ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel(f"AUC: {metric.replace('_', ' ')}")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
