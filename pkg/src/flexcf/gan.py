"""Conditional counterfactual generator trained adversarially.

Two Wasserstein critics with gradient penalty and pac-grouped inputs shape the
generator: one compares candidates against the training distribution, the other
against real rows of the requested target class. A per-feature divergence loss
limits how far mutable features drift, and an optional classifier loss pushes
candidates across the decision boundary. In black-box mode the classifier term
is dropped and the desired-class pools come from historical prediction records
instead of live model calls.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import torch
from torch import nn
from torch.nn import functional as F

from .batch import CounterfactualBatch
from .classifier import (
    ClassifierConfig,
    PredictionHistory,
    TrainedClassifier,
    seed_everything,
    train_classifier,
)
from .data import Encoder, SplitDataset
from .schema import CONTINUOUS, DatasetSchema
from .templates import (
    CounterfactualTemplate,
    column_mask,
    expand_mask,
    fixed_fraction_mask,
    overwrite_frozen,
    sample_masks,
)

logger = logging.getLogger(__name__)

CLS_ROLE_FULL = "full"
CLS_ROLE_SURROGATE = "surrogate"


@dataclass
class FceganConfig:
    gen_hidden: tuple[int, ...] = (256, 256)
    disc_hidden: tuple[int, ...] = (256, 256)
    pac: int = 10
    disc_steps_per_gen: int = 1
    lr_gen: float = 2e-4
    lr_disc: float = 2e-4
    weight_decay: float = 1e-6
    adam_betas: tuple[float, float] = (0.5, 0.9)
    batch_size: int = 500
    max_epochs: int = 100
    gp_coefficient: float = 10.0
    noise_dim: int = 128
    lambda_clas: float = 1.0
    lambda_d_og: float = 0.5
    lambda_d_cf: float = 0.5
    lambda_m: float = 0.0
    lambda_i: float = 0.0
    gumbel_tau: float = 0.2
    mode: str = "classifier"  # or "black_box"
    use_templates: bool = True  # ablation switch: no template inputs, no reset in training
    val_cap: int = 500

    def __post_init__(self):
        if self.mode not in ("classifier", "black_box"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "black_box" and self.lambda_clas != 0.0:
            raise ValueError("black_box mode requires lambda_clas = 0")
        if self.batch_size % self.pac != 0:
            raise ValueError("pac must divide batch_size")
        for name in ("lr_gen", "lr_disc", "batch_size", "pac", "noise_dim", "gumbel_tau"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


class Residual(nn.Module):
    """Fully-connected residual block with concatenation."""

    def __init__(self, i, o):
        super().__init__()
        self.fc = nn.Linear(i, o)
        self.bn = nn.BatchNorm1d(o)
        self.relu = nn.ReLU()

    def forward(self, x):
        out = self.relu(self.bn(self.fc(x)))
        return torch.cat([out, x], dim=1)


class Generator(nn.Module):
    def __init__(self, in_dim: int, hidden, out_dim: int):
        super().__init__()
        seq = []
        d = in_dim
        for h in hidden:
            seq.append(Residual(d, h))
            d += h
        seq.append(nn.Linear(d, out_dim))
        self.seq = nn.Sequential(*seq)

    def forward(self, x):
        return self.seq(x)


class PacCritic(nn.Module):
    """Wasserstein critic scoring pac-grouped samples."""

    def __init__(self, in_dim: int, hidden, pac: int = 10):
        super().__init__()
        self.pac = pac
        self.pacdim = in_dim * pac
        seq = []
        d = self.pacdim
        for h in hidden:
            seq += [nn.Linear(d, h), nn.LeakyReLU(0.2), nn.Dropout(0.5)]
            d = h
        seq.append(nn.Linear(d, 1))
        self.seq = nn.Sequential(*seq)

    def forward(self, x):
        if x.shape[0] % self.pac:
            raise ValueError(f"batch of {x.shape[0]} is not a multiple of pac={self.pac}")
        return self.seq(x.reshape(-1, self.pacdim))

    def score(self, x: torch.Tensor) -> torch.Tensor:
        """Per-instance score: each row packed into its own pac group."""
        rep = x.repeat_interleave(self.pac, dim=0)
        return self.forward(rep).reshape(-1)


def activate_output(raw: torch.Tensor, encoder: Encoder, tau: float, hard_inference: bool) -> torch.Tensor:
    """Map raw generator output to encoded feature space, block by block.

    Training uses a gumbel-softmax relaxation on one-hot blocks; inference uses
    plain softmax followed by hardening elsewhere.
    """
    parts = []
    for b in encoder.blocks:
        blk = raw[:, b.offset : b.offset + b.width]
        if b.kind == CONTINUOUS and encoder.mode == "standardize":
            parts.append(blk)
            continue
        if b.kind == CONTINUOUS:  # gmm: scalar + mode one-hot
            scalar = torch.tanh(blk[:, :1])
            modes = blk[:, 1:]
            modes = F.softmax(modes, dim=1) if hard_inference else _gumbel(modes, tau)
            parts.append(torch.cat([scalar, modes], dim=1))
            continue
        parts.append(F.softmax(blk, dim=1) if hard_inference else _gumbel(blk, tau))
    return torch.cat(parts, dim=1)


def _gumbel(logits: torch.Tensor, tau: float) -> torch.Tensor:
    for _ in range(10):
        out = F.gumbel_softmax(logits, tau=tau, hard=False)
        if torch.isfinite(out).all():
            return out
    raise RuntimeError("gumbel-softmax produced non-finite values")


def divergence_terms(
    x_og: torch.Tensor,
    x_cf: torch.Tensor,
    col_mask: torch.Tensor,
    encoder: Encoder,
    lambda_m: float,
    lambda_i: float = 0.0,
    eps: float = 1e-12,
) -> torch.Tensor:
    """Per-instance divergence: squared error on standardized continuous features
    plus cross-entropy of soft one-hot blocks against the original, summed over
    mutable (and optionally immutable) features and normalized by the feature
    count."""
    n_cols = len(encoder.blocks)
    per_col = []
    for j, b in enumerate(encoder.blocks):
        og = x_og[:, b.offset : b.offset + b.width]
        cf = x_cf[:, b.offset : b.offset + b.width]
        if b.kind == CONTINUOUS and encoder.mode == "standardize":
            term = (cf[:, 0] - og[:, 0]) ** 2
        elif b.kind == CONTINUOUS:
            term = (cf[:, 0] - og[:, 0]) ** 2 - (og[:, 1:] * torch.log(cf[:, 1:].clamp_min(eps))).sum(dim=1)
        else:
            term = -(og * torch.log(cf.clamp_min(eps))).sum(dim=1)
        per_col.append(term)
    per_col = torch.stack(per_col, dim=1)
    mutable = (per_col * col_mask).sum(dim=1)
    immutable = (per_col * (1.0 - col_mask)).sum(dim=1)
    return (lambda_m * mutable + lambda_i * immutable) / n_cols


def divergence_loss(x_og, x_cf, col_mask, encoder, lambda_m, lambda_i=0.0) -> torch.Tensor:
    return divergence_terms(x_og, x_cf, col_mask, encoder, lambda_m, lambda_i).mean()


def gradient_penalty(
    critic: PacCritic,
    real: torch.Tensor,
    fake: torch.Tensor,
    gp_coefficient: float,
    alpha: torch.Tensor | None = None,
) -> torch.Tensor:
    """WGAN-GP penalty on pac-group interpolates; ``alpha`` is one draw per group."""
    pac = critic.pac
    n_groups = real.shape[0] // pac
    if alpha is None:
        alpha = torch.rand(n_groups, 1, 1)
    alpha = alpha.reshape(n_groups, 1, 1).repeat(1, pac, real.shape[1]).reshape(-1, real.shape[1])
    interp = (alpha * real + (1 - alpha) * fake).requires_grad_(True)
    scores = critic(interp)
    grad = torch.autograd.grad(
        outputs=scores,
        inputs=interp,
        grad_outputs=torch.ones_like(scores),
        create_graph=True,
        retain_graph=True,
        only_inputs=True,
    )[0]
    norms = grad.reshape(-1, pac * real.shape[1]).norm(2, dim=1)
    return gp_coefficient * ((norms - 1.0) ** 2).mean()


def discriminator_losses(
    d_og: PacCritic,
    d_cf: PacCritic,
    real_og: torch.Tensor,
    real_cf: torch.Tensor,
    fakes: torch.Tensor,
    desired_onehot: torch.Tensor,
    gp_coefficient: float,
) -> dict:
    """Wasserstein critic losses (to minimize) plus their gradient penalties."""
    fake_cf = torch.cat([fakes, desired_onehot], dim=1)
    realcf = torch.cat([real_cf, desired_onehot], dim=1)
    out = {
        "loss_d_og": fakes.new_tensor(0.0),
        "loss_d_cf": fakes.new_tensor(0.0),
        "gp_og": gradient_penalty(d_og, real_og, fakes, gp_coefficient),
        "gp_cf": gradient_penalty(d_cf, realcf, fake_cf, gp_coefficient),
    }
    out["loss_d_og"] = d_og(fakes).mean() - d_og(real_og).mean()
    out["loss_d_cf"] = d_cf(fake_cf).mean() - d_cf(realcf).mean()
    return out


def generator_loss(
    critic_og_fake: torch.Tensor | None,
    critic_cf_fake: torch.Tensor | None,
    div_term: torch.Tensor,
    clas_term: torch.Tensor | None,
    config: FceganConfig,
) -> torch.Tensor:
    """Weighted sum of adversarial, divergence and (classifier-mode) target terms."""
    loss = div_term
    if critic_og_fake is not None:
        loss = loss + config.lambda_d_og * (-critic_og_fake.mean())
    if critic_cf_fake is not None:
        loss = loss + config.lambda_d_cf * (-critic_cf_fake.mean())
    if config.mode == "classifier" and clas_term is not None and config.lambda_clas:
        loss = loss + config.lambda_clas * clas_term
    return loss


@dataclass
class FceganModel:
    generator: Generator
    d_og: PacCritic
    d_cf: PacCritic
    encoder: Encoder
    schema: DatasetSchema
    config: FceganConfig
    curve: list = field(default_factory=list)
    classifier: TrainedClassifier | None = None
    classifier_role: str = CLS_ROLE_FULL

    @property
    def n_classes(self) -> int:
        return len(self.schema.target_classes)

    def _gen_input(
        self,
        x_og: torch.Tensor,
        pred_onehot: torch.Tensor,
        desired_onehot: torch.Tensor,
        col_mask: torch.Tensor | None,
        noise: torch.Tensor,
    ) -> torch.Tensor:
        parts = [x_og, pred_onehot]
        if self.config.use_templates:
            dim_mask = _expand_mask_t(self.encoder, col_mask)
            parts += [x_og * (1.0 - dim_mask), col_mask]
        parts += [desired_onehot, noise]
        return torch.cat(parts, dim=1)

    def generate_batch(
        self,
        originals: pd.DataFrame,
        templates: list[CounterfactualTemplate],
        n_per_instance: int,
        rng: np.random.Generator,
        classifier: TrainedClassifier | None = None,
        apply_reset: bool = True,
    ) -> CounterfactualBatch:
        """Generate hard candidates for each (original, template) pair.

        ``classifier`` verifies validity; it defaults to the embedded full
        classifier. Candidates are decoded with frozen columns stamped from the
        template, so immutable features match the originals exactly.
        """
        if len(originals) != len(templates):
            raise ValueError("originals/templates length mismatch")
        cfg = self.config
        enc = self.encoder
        n = len(originals)
        reps = n_per_instance
        x = enc.encode(originals[self.schema.feature_names])
        group_ids = np.repeat(np.arange(n), reps)
        x_rep = torch.as_tensor(x[group_ids], dtype=torch.float32)

        input_pred = self._input_predictor()
        if input_pred is not None:
            pred_classes, _ = input_pred.predict_encoded(x)
        else:
            pred_classes = [self.schema.target_classes[0]] * n
        pred_idx = np.array([self.schema.class_index(c) for c in pred_classes])
        desired_idx = np.array([self.schema.class_index(t.desired_class) for t in templates])
        col_masks = np.stack([column_mask(self.schema, t) for t in templates]).astype(np.float64)

        k = self.n_classes
        pred_onehot = torch.as_tensor(np.eye(k)[pred_idx][group_ids], dtype=torch.float32)
        desired_onehot = torch.as_tensor(np.eye(k)[desired_idx][group_ids], dtype=torch.float32)
        mask_rep = torch.as_tensor(col_masks[group_ids], dtype=torch.float32)
        noise = torch.as_tensor(
            rng.standard_normal((n * reps, cfg.noise_dim)), dtype=torch.float32
        )

        self.generator.eval()
        with torch.no_grad():
            raw = self.generator(
                self._gen_input(x_rep, pred_onehot, desired_onehot, mask_rep, noise)
            )
            soft = activate_output(raw, enc, cfg.gumbel_tau, hard_inference=True)
        hard = enc.harden(soft.numpy().astype(np.float64))
        if apply_reset:
            dim_mask = expand_mask(enc, col_masks.astype(bool))[group_ids]
            hard = np.where(dim_mask, hard, x[group_ids])

        rows = enc.decode(hard)
        for i, t in enumerate(templates):
            sel = group_ids == i
            stamped = overwrite_frozen(rows.loc[sel], t, self.schema)
            rows.loc[sel, :] = stamped
        encoded = enc.encode(rows)
        desired = [templates[g].desired_class for g in group_ids]
        batch = CounterfactualBatch(
            rows=rows.reset_index(drop=True),
            encoded=encoded,
            desired=desired,
            group_ids=group_ids,
        )
        verifier = classifier or (self.classifier if self.classifier_role == CLS_ROLE_FULL else None)
        if verifier is not None:
            classes, probs = verifier.predict_encoded(encoded)
            batch.attach_predictions(classes, probs)
        return batch

    def generate(
        self,
        instance,
        template: CounterfactualTemplate,
        n: int,
        rng: np.random.Generator,
        classifier: TrainedClassifier | None = None,
    ) -> CounterfactualBatch:
        return self.generate_batch(
            pd.DataFrame([dict(instance)]), [template], n, rng, classifier=classifier
        )

    def _input_predictor(self) -> TrainedClassifier | None:
        """Model used for the generator's predicted-class input channel."""
        return self.classifier


def _expand_mask_t(encoder: Encoder, col_mask: torch.Tensor) -> torch.Tensor:
    widths = [b.width for b in encoder.blocks]
    return torch.repeat_interleave(col_mask, torch.as_tensor(widths), dim=-1)


def train_fcegan(
    split: SplitDataset | None,
    config: FceganConfig,
    seed: int,
    classifier: TrainedClassifier | None = None,
    history: PredictionHistory | None = None,
    encoder: Encoder | None = None,
    schema: DatasetSchema | None = None,
) -> FceganModel:
    """Alternating critic/generator training with template sampling.

    Classifier mode consumes the split plus a trained classifier. Black-box mode
    consumes prediction records only: rows and predicted classes come from the
    records, and a surrogate classifier fitted on those records drives early
    stopping, so the true model is never touched.
    """
    if config.mode == "classifier":
        if classifier is None:
            raise ValueError("classifier mode requires a trained classifier")
        if split is None:
            raise ValueError("classifier mode requires a data split")
        schema = classifier.schema
        encoder = encoder or classifier.encoder
        train_rows = split.train.reset_index(drop=True)
        val_rows = split.validation.reset_index(drop=True)
        pred_train, _ = classifier.predict(train_rows)
        pred_val, _ = classifier.predict(val_rows)
        pool_labels = train_rows[schema.target].astype(str).tolist()
        stopper = classifier
    else:
        if history is None:
            raise ValueError("black_box mode requires prediction history records")
        if classifier is not None:
            raise ValueError("black_box mode must not receive a classifier")
        if schema is None:
            raise ValueError("black_box mode requires the dataset schema")
        train_rows = pd.DataFrame([r.instance for r in history.train])[schema.feature_names]
        val_rows = pd.DataFrame([r.instance for r in history.validation])[schema.feature_names]
        pred_train = [r.predicted_class for r in history.train]
        pred_val = [r.predicted_class for r in history.validation]
        pool_labels = pred_train
        encoder = encoder or Encoder.fit(train_rows, schema)
        stopper = _train_surrogate(train_rows, val_rows, pred_train, pred_val, schema, encoder, seed)

    seed_everything(seed)
    rng = np.random.default_rng(seed)
    enc = encoder
    k = len(schema.target_classes)
    n_cols = len(schema.feature_names)
    d = enc.dim

    x_train = enc.encode(train_rows[schema.feature_names])
    x_train_t = torch.as_tensor(x_train, dtype=torch.float32)
    pred_idx = np.array([schema.class_index(c) for c in pred_train])
    eye = np.eye(k)

    pools = {}
    for j, c in enumerate(schema.target_classes):
        idx = np.flatnonzero(np.asarray([lbl == c for lbl in pool_labels]))
        if len(idx):
            pools[j] = idx
        else:
            logger.warning("no real rows available for class %r; it will not be sampled", c)
    if not pools:
        raise ValueError("every desired-class pool is empty")

    gen_in = d + k + (d + n_cols if config.use_templates else 0) + k + config.noise_dim
    generator = Generator(gen_in, config.gen_hidden, d)
    d_og = PacCritic(d, config.disc_hidden, pac=config.pac)
    d_cf = PacCritic(d + k, config.disc_hidden, pac=config.pac)
    opt_g = torch.optim.Adam(
        generator.parameters(), lr=config.lr_gen, betas=config.adam_betas,
        weight_decay=config.weight_decay,
    )
    opt_d = torch.optim.Adam(
        list(d_og.parameters()) + list(d_cf.parameters()), lr=config.lr_disc,
        betas=config.adam_betas, weight_decay=config.weight_decay,
    )

    model = FceganModel(
        generator, d_og, d_cf, enc, schema, config,
        classifier=stopper,
        classifier_role=CLS_ROLE_FULL if config.mode == "classifier" else CLS_ROLE_SURROGATE,
    )

    batch_size = min(config.batch_size, (len(x_train) // config.pac) * config.pac)
    if batch_size == 0:
        raise ValueError("training set smaller than one pac group")

    def sample_batch():
        idx = rng.integers(0, len(x_train), size=batch_size)
        x_og = x_train_t[idx]
        p_idx = pred_idx[idx]
        desired = np.empty(batch_size, dtype=np.int64)
        keep = np.ones(batch_size, dtype=bool)
        for i, p in enumerate(p_idx):
            choices = [j for j in pools if j != p]
            if not choices:
                keep[i] = False
                desired[i] = p
            else:
                desired[i] = choices[rng.integers(len(choices))]
        if not keep.all():
            n_keep = (int(keep.sum()) // config.pac) * config.pac
            sel = np.flatnonzero(keep)[:n_keep]
            idx, x_og, p_idx, desired = idx[sel], x_og[sel], p_idx[sel], desired[sel]
        real_cf_idx = np.array([pools[j][rng.integers(len(pools[j]))] for j in desired])
        masks = sample_masks(len(desired), n_cols, rng)
        return {
            "x_og": x_og,
            "pred_onehot": torch.as_tensor(eye[p_idx], dtype=torch.float32),
            "desired_idx": torch.as_tensor(desired),
            "desired_onehot": torch.as_tensor(eye[desired], dtype=torch.float32),
            "real_cf": x_train_t[real_cf_idx],
            "col_mask": torch.as_tensor(masks.astype(np.float64), dtype=torch.float32),
        }

    def gen_forward(b):
        noise = torch.as_tensor(
            rng.standard_normal((len(b["x_og"]), config.noise_dim)), dtype=torch.float32
        )
        raw = generator(
            model._gen_input(b["x_og"], b["pred_onehot"], b["desired_onehot"], b["col_mask"], noise)
        )
        soft = activate_output(raw, enc, config.gumbel_tau, hard_inference=False)
        if config.use_templates:
            dim_mask = _expand_mask_t(enc, b["col_mask"])
            reset = soft * dim_mask + b["x_og"] * (1.0 - dim_mask)
        else:
            reset = soft
        return soft, reset

    steps_per_epoch = max(len(x_train) // batch_size, 1)
    best_score = -1.0
    best_state = copy.deepcopy(generator.state_dict())
    curve = []
    for epoch in range(config.max_epochs):
        generator.train()
        d_og.train()
        d_cf.train()
        agg = {"gen_loss": 0.0, "d_og_loss": 0.0, "d_cf_loss": 0.0, "gp_og": 0.0, "gp_cf": 0.0}
        for _ in range(steps_per_epoch):
            for _ in range(config.disc_steps_per_gen):
                b = sample_batch()
                with torch.no_grad():
                    _, fake = gen_forward(b)
                losses = discriminator_losses(
                    d_og, d_cf, b["x_og"], b["real_cf"], fake, b["desired_onehot"],
                    config.gp_coefficient,
                )
                loss_d = (
                    losses["loss_d_og"] + losses["loss_d_cf"] + losses["gp_og"] + losses["gp_cf"]
                )
                if not torch.isfinite(loss_d):
                    raise RuntimeError(f"non-finite critic loss at epoch {epoch}")
                gp_og_val = float(losses["gp_og"].detach())
                gp_cf_val = float(losses["gp_cf"].detach())
                if gp_og_val + gp_cf_val > 1e6:
                    raise RuntimeError(
                        f"critic collapse: exploding gradient penalty at epoch {epoch} "
                        f"(gp_og={gp_og_val:.3g}, gp_cf={gp_cf_val:.3g})"
                    )
                opt_d.zero_grad()
                loss_d.backward()
                opt_d.step()

            b = sample_batch()
            soft, fake = gen_forward(b)
            div = divergence_terms(
                b["x_og"], soft, b["col_mask"], enc, config.lambda_m, config.lambda_i
            ).mean()
            clas = None
            if config.mode == "classifier" and config.lambda_clas:
                clas = F.cross_entropy(classifier.logits(fake), b["desired_idx"])
            adv_og = d_og(fake).reshape(-1)
            adv_cf = d_cf(torch.cat([fake, b["desired_onehot"]], dim=1)).reshape(-1)
            loss_g = generator_loss(adv_og, adv_cf, div, clas, config)
            if not torch.isfinite(loss_g):
                raise RuntimeError(f"non-finite generator loss at epoch {epoch}")
            opt_g.zero_grad()
            loss_g.backward()
            opt_g.step()

            agg["gen_loss"] += float(loss_g.detach())
            agg["d_og_loss"] += float(losses["loss_d_og"].detach())
            agg["d_cf_loss"] += float(losses["loss_d_cf"].detach())
            agg["gp_og"] += gp_og_val
            agg["gp_cf"] += gp_cf_val

        score = _validation_valid_fraction(model, val_rows, pred_val, stopper, seed)
        entry = {k2: v / steps_per_epoch for k2, v in agg.items()}
        entry.update({"epoch": epoch, "valid_fraction": score})
        curve.append(entry)
        if score > best_score:
            best_score = score
            best_state = copy.deepcopy(generator.state_dict())

    generator.load_state_dict(best_state)
    generator.eval()
    model.curve = curve
    logger.info("generator trained: best validation valid fraction %.4f", best_score)
    return model


def _train_surrogate(train_rows, val_rows, pred_train, pred_val, schema, encoder, seed):
    """Fit a stand-in classifier on prediction records (black-box early stopping)."""
    frame_train = train_rows.copy()
    frame_train[schema.target] = pred_train
    frame_val = val_rows.copy()
    frame_val[schema.target] = pred_val
    surrogate_split = SplitDataset(frame_train, frame_val, frame_val.iloc[:0], split_seed=seed)
    cfg = ClassifierConfig(hidden_dims=(256, 256), max_epochs=10)
    return train_classifier(surrogate_split, schema, cfg, seed=seed, encoder=encoder)


def _validation_valid_fraction(
    model: FceganModel,
    val_rows: pd.DataFrame,
    pred_val: list[str],
    stopper: TrainedClassifier,
    seed: int,
) -> float:
    """Mean validity over full and quarter mutability on (capped) validation rows,
    regenerated with a fixed evaluation stream so epochs are comparable."""
    cfg = model.config
    enc = model.encoder
    schema = model.schema
    cap = min(len(val_rows), cfg.val_cap)
    rows = val_rows.iloc[:cap]
    preds = pred_val[:cap]
    x = enc.encode(rows[schema.feature_names])
    x_t = torch.as_tensor(x, dtype=torch.float32)
    k = len(schema.target_classes)
    eye = np.eye(k)
    pred_idx = np.array([schema.class_index(c) for c in preds])
    n_cols = len(schema.feature_names)

    eval_rng = np.random.default_rng(np.random.SeedSequence([seed, 0xE7A1]))
    desired = np.empty(cap, dtype=np.int64)
    for i, p in enumerate(pred_idx):
        choices = [j for j in range(k) if j != p]
        desired[i] = choices[eval_rng.integers(len(choices))]

    scores = []
    model.generator.eval()
    for frac in (1.0, 0.25):
        masks = np.stack([fixed_fraction_mask(n_cols, frac, eval_rng) for _ in range(cap)])
        noise = torch.as_tensor(
            eval_rng.standard_normal((cap, cfg.noise_dim)), dtype=torch.float32
        )
        with torch.no_grad():
            raw = model.generator(
                model._gen_input(
                    x_t,
                    torch.as_tensor(eye[pred_idx], dtype=torch.float32),
                    torch.as_tensor(eye[desired], dtype=torch.float32),
                    torch.as_tensor(masks.astype(np.float64), dtype=torch.float32),
                    noise,
                )
            )
            soft = activate_output(raw, enc, cfg.gumbel_tau, hard_inference=True)
        hard = enc.harden(soft.numpy().astype(np.float64))
        dim_mask = expand_mask(enc, masks)
        hard = np.where(dim_mask, hard, x)
        classes, _ = stopper.predict_encoded(hard)
        got = np.array([schema.class_index(c) for c in classes])
        scores.append(float((got == desired).mean()))
    return float(np.mean(scores))
