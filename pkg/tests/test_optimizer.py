import numpy as np
import pandas as pd
import pytest
import torch

from flexcf.classifier import ClassifierConfig, MlpNet, TrainedClassifier
from flexcf.data import Encoder
from flexcf.datasets import make_census
from flexcf.gan import divergence_terms
from flexcf.optimizer import OptimizerConfig, default_optimize_batch, optimize_batch
from flexcf.schema import CONTINUOUS, DatasetSchema
from flexcf.templates import column_mask, expand_mask, make_template


@pytest.fixture(scope="module")
def linear_setup():
    schema = DatasetSchema(
        columns=(("u1", CONTINUOUS), ("u2", CONTINUOUS)),
        target="y",
        target_classes=("n", "p"),
    )
    rows = pd.DataFrame(
        {"u1": [-2.0, 2.0, -1.0, 1.0], "u2": [-2.0, 2.0, -1.0, 1.0], "y": ["n", "p", "n", "p"]}
    )
    enc = Encoder.fit(rows, schema)
    net = MlpNet(2, (), 2)
    with torch.no_grad():
        # logit(p) - logit(n) = 2*u1: only the first feature carries weight
        net.net[0].weight[:] = torch.tensor([[-1.0, 0.0], [1.0, 0.0]])
        net.net[0].bias[:] = 0.0
    model = TrainedClassifier(net, enc, schema, ClassifierConfig(hidden_dims=(4,)))
    return schema, rows, enc, model


def objective(model, encoded, originals_encoded, col_masks, desired_idx):
    """The optimizer's own mean loss (lambda_clas=1, lambda_div=1, lambda_real=0)."""
    x = torch.as_tensor(encoded, dtype=torch.float32)
    og = torch.as_tensor(originals_encoded, dtype=torch.float32)
    with torch.no_grad():
        ce = torch.nn.functional.cross_entropy(
            model.logits(x), torch.as_tensor(desired_idx), reduction="none"
        )
        div = divergence_terms(
            og, x, torch.as_tensor(col_masks, dtype=torch.float32), model.encoder, lambda_m=1.0
        )
    return float((ce + div).mean())


class TestOptimizeBatch:
    def test_empty_mutable_template_returns_originals(self, linear_setup):
        schema, rows, enc, model = linear_setup
        temps = [make_template(schema, rows.iloc[i], [], "p") for i in range(2)]
        cfg = OptimizerConfig(steps=10, lambda_real=0.0)
        batch = optimize_batch(model, rows.head(2), temps, cfg)
        for c in schema.feature_names:
            assert np.array_equal(batch.rows[c].to_numpy(), rows.head(2)[c].to_numpy())

    def test_linear_classifier_crosses_iff_weight_nonzero(self, linear_setup):
        schema, rows, enc, model = linear_setup
        start = pd.DataFrame({"u1": [-1.5], "u2": [-1.5], "y": ["n"]})
        cfg = OptimizerConfig(steps=40, lambda_div=0.0, lambda_real=0.0)
        t = make_template(schema, start.iloc[0], ["u1"], "p")
        assert optimize_batch(model, start, [t], cfg).valid[0]
        t2 = make_template(schema, start.iloc[0], ["u2"], "p")
        assert not optimize_batch(model, start, [t2], cfg).valid[0]

    def test_empty_batch_errors(self, linear_setup):
        schema, rows, enc, model = linear_setup
        with pytest.raises(ValueError, match="empty"):
            optimize_batch(model, rows.head(0), [], OptimizerConfig())

    def test_projection_invariant_mid_loop(self, census, census_classifier):
        schema, _ = census
        _, data = make_census(60, seed=3)
        originals = data.head(8)
        temps = [
            make_template(schema, originals.iloc[i], ["capital_gain", "hours_per_week"], ">50K")
            for i in range(len(originals))
        ]
        x0 = census_classifier.encoder.encode(originals[schema.feature_names])
        dim_mask = expand_mask(
            census_classifier.encoder, np.stack([column_mask(schema, t) for t in temps])
        )
        seen = []

        def check(step, assembled):
            imm = ~dim_mask
            assert np.allclose(assembled[imm], x0[imm].astype(np.float32), atol=1e-6)
            seen.append(step)

        optimize_batch(
            census_classifier, originals, temps, OptimizerConfig(steps=6, lambda_real=0.0),
            step_callback=check,
        )
        assert seen == list(range(6))

    def test_final_loss_not_worse_than_initial_on_most_batches(self, census, census_classifier):
        schema, _ = census
        _, data = make_census(200, seed=5)
        enc = census_classifier.encoder
        wins = 0
        for b in range(10):
            originals = data.iloc[b * 12 : b * 12 + 8]
            temps = [
                make_template(schema, originals.iloc[i], schema.feature_names, ">50K")
                for i in range(len(originals))
            ]
            x0 = enc.encode(originals[schema.feature_names])
            masks = np.stack([column_mask(schema, t) for t in temps])
            desired = [schema.class_index(t.desired_class) for t in temps]
            trace = []
            optimize_batch(
                census_classifier, originals, temps, OptimizerConfig(steps=25, lambda_real=0.0),
                step_callback=lambda s, a: trace.append(
                    objective(census_classifier, a, x0, masks, desired)
                ),
            )
            initial = objective(census_classifier, x0, x0, masks, desired)
            if trace[-1] <= initial + 1e-9:
                wins += 1
        assert wins >= 9

    def test_total_loss_gradient_matches_finite_differences(self, linear_setup):
        schema, rows, enc, model = linear_setup
        x_og = torch.tensor([[0.3, -0.4]], dtype=torch.float64)
        z = torch.tensor([[0.9, 0.1]], dtype=torch.float64, requires_grad=True)
        desired = torch.tensor([1])
        mask = torch.tensor([[1.0, 1.0]], dtype=torch.float64)
        net = model.network.double()

        def total(zz):
            ce = torch.nn.functional.cross_entropy(net(zz), desired)
            return ce + divergence_terms(x_og, zz, mask, enc, lambda_m=1.0).mean()

        loss = total(z)
        loss.backward()
        eps = 1e-7
        for i in range(2):
            d = torch.zeros_like(z)
            d[0, i] = eps
            fd = (total((z + d).detach()).item() - total((z - d).detach()).item()) / (2 * eps)
            g = z.grad[0, i].item()
            assert abs(fd - g) / max(abs(fd), abs(g), 1e-8) < 1e-4
        model.network.float()


class TestDefaultOptimizeBatch:
    def test_all_mutable_coincides_step_for_step(self, linear_setup):
        schema, rows, enc, model = linear_setup
        originals = rows.head(3)
        temps = [
            make_template(schema, originals.iloc[i], schema.feature_names, "p") for i in range(3)
        ]
        cfg = OptimizerConfig(steps=8, lambda_real=0.0)
        guided, default = [], []
        optimize_batch(
            model, originals, temps, cfg, rng=np.random.default_rng(0),
            step_callback=lambda s, a: guided.append(a.copy()),
        )
        default_optimize_batch(
            model, originals, "p", cfg, rng=np.random.default_rng(0),
            step_callback=lambda s, a: default.append(a.copy()),
        )
        for a, b in zip(guided, default):
            assert np.array_equal(a, b)

    def test_immutable_drift_without_projection(self, linear_setup):
        schema, rows, enc, model = linear_setup
        start = pd.DataFrame({"u1": [-1.5], "u2": [-1.5], "y": ["n"]})
        cfg = OptimizerConfig(steps=30, lambda_div=0.0, lambda_real=0.0)
        batch = default_optimize_batch(model, start, "p", cfg)
        # u1 carries the weight; a guided template could have frozen it
        assert batch.rows["u1"].iloc[0] != start["u1"].iloc[0]

    def test_n_per_original_with_jitter(self, linear_setup):
        schema, rows, enc, model = linear_setup
        start = rows.head(2)
        temps = [make_template(schema, start.iloc[i], ["u1"], "p") for i in range(2)]
        cfg = OptimizerConfig(steps=5, lambda_real=0.0, n_per_original=3)
        batch = optimize_batch(model, start, temps, cfg, rng=np.random.default_rng(1))
        assert len(batch) == 6
        assert list(batch.group_ids) == [0, 0, 0, 1, 1, 1]
        assert len(np.unique(batch.encoded[:3], axis=0)) > 1
