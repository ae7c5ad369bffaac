import numpy as np
import pytest

from flexcf.data import Encoder
from flexcf.schema import SchemaError
from flexcf.templates import (
    column_mask,
    encode_template,
    expand_mask,
    make_template,
    reset_immutable,
    sample_training_template,
    template_from_json,
    template_to_json,
)


@pytest.fixture(scope="module")
def setup(census, census_encoder):
    schema, rows = census
    return schema, rows, census_encoder


class TestMakeTemplate:
    def test_definition(self, setup):
        schema, rows, _ = setup
        inst = rows.iloc[0]
        t = make_template(schema, inst, ["capital_gain"], ">50K")
        assert t.mutable == ("capital_gain",)
        assert set(t.frozen_values) == set(schema.feature_names) - {"capital_gain"}
        assert t.frozen_values["age"] == inst["age"]

    def test_full_flexibility(self, setup):
        schema, rows, _ = setup
        t = make_template(schema, rows.iloc[0], schema.feature_names, ">50K")
        assert t.frozen_values == {}

    def test_degenerate_empty(self, setup):
        schema, rows, _ = setup
        t = make_template(schema, rows.iloc[0], [], ">50K")
        assert t.mutable == ()
        assert set(t.frozen_values) == set(schema.feature_names)

    def test_unknown_column_or_class(self, setup):
        schema, rows, _ = setup
        with pytest.raises(SchemaError):
            make_template(schema, rows.iloc[0], ["nope"], ">50K")
        with pytest.raises(SchemaError):
            make_template(schema, rows.iloc[0], ["age"], "1M")

    def test_json_round_trip(self, setup):
        schema, rows, _ = setup
        t = make_template(schema, rows.iloc[0], ["age", "education"], ">50K")
        t2 = template_from_json(template_to_json(t), schema, rows.iloc[0])
        assert t2 == t


class TestSampleTrainingTemplate:
    def test_binary_desired_is_the_alternative(self, setup):
        schema, rows, _ = setup
        rng = np.random.default_rng(0)
        for _ in range(20):
            t = sample_training_template(schema, rows.iloc[0], "<=50K", rng)
            assert t.desired_class == ">50K"

    def test_mean_mutable_fraction_is_half(self, setup):
        schema, rows, _ = setup
        rng = np.random.default_rng(1)
        n_cols = len(schema.feature_names)
        fracs = []
        for _ in range(10000):
            t = sample_training_template(schema, rows.iloc[0], "<=50K", rng)
            fracs.append(len(t.mutable) / n_cols)
        assert np.mean(fracs) == pytest.approx(0.5, abs=0.02)

    def test_at_least_one_mutable(self, setup):
        schema, rows, _ = setup
        rng = np.random.default_rng(2)
        assert all(
            len(sample_training_template(schema, rows.iloc[0], "<=50K", rng).mutable) >= 1
            for _ in range(500)
        )

    def test_sampling_coverage(self, setup):
        schema, rows, _ = setup
        rng = np.random.default_rng(3)
        seen_mut = {c: 0 for c in schema.feature_names}
        seen_imm = {c: 0 for c in schema.feature_names}
        for _ in range(500):
            t = sample_training_template(schema, rows.iloc[0], "<=50K", rng)
            for c in schema.feature_names:
                (seen_mut if t.is_mutable(c) else seen_imm)[c] += 1
        assert min(seen_mut.values()) > 0 and min(seen_imm.values()) > 0


class TestResetImmutable:
    def test_all_immutable_returns_original(self, setup):
        schema, rows, enc = setup
        t = make_template(schema, rows.iloc[0], [], ">50K")
        orig = enc.encode_row(rows.iloc[0])
        cand = orig + np.random.default_rng(0).normal(size=orig.shape)
        out = reset_immutable(cand, t, orig, enc)
        assert np.array_equal(out, orig)

    def test_all_mutable_returns_candidate(self, setup):
        schema, rows, enc = setup
        t = make_template(schema, rows.iloc[0], schema.feature_names, ">50K")
        orig = enc.encode_row(rows.iloc[0])
        cand = orig + 1.0
        assert np.array_equal(reset_immutable(cand, t, orig, enc), cand)

    def test_idempotent(self, setup):
        schema, rows, enc = setup
        t = make_template(schema, rows.iloc[0], ["age", "sex"], ">50K")
        orig = enc.encode_row(rows.iloc[0])
        cand = orig + 0.5
        once = reset_immutable(cand, t, orig, enc)
        twice = reset_immutable(once, t, orig, enc)
        assert np.array_equal(once, twice)

    def test_differs_only_on_mutable_blocks(self, setup):
        schema, rows, enc = setup
        rng = np.random.default_rng(9)
        orig = enc.encode_row(rows.iloc[0])
        for _ in range(25):
            t = sample_training_template(schema, rows.iloc[0], "<=50K", rng)
            cand = orig + rng.normal(size=orig.shape)
            out = reset_immutable(cand, t, orig, enc)
            dim_mask = enc.dim_mask(t.mutable)
            assert np.array_equal(out[~dim_mask], orig[~dim_mask])
            assert np.array_equal(out[dim_mask], cand[dim_mask])

    def test_block_map_mismatch(self, setup):
        schema, rows, enc = setup
        t = make_template(schema, rows.iloc[0], ["age"], ">50K")
        with pytest.raises(ValueError, match="block map"):
            reset_immutable(np.zeros(3), t, np.zeros(3), enc)


class TestTemplateEncoding:
    def test_immutable_blocks_match_and_mutable_zeroed(self, setup):
        schema, rows, enc = setup
        t = make_template(schema, rows.iloc[0], ["age", "education"], ">50K")
        orig = enc.encode_row(rows.iloc[0])
        te = encode_template(enc, t, orig)
        dim_mask = enc.dim_mask(t.mutable)
        assert np.array_equal(te.vector[~dim_mask], orig[~dim_mask])
        assert np.all(te.vector[dim_mask] == 0.0)
        assert te.indicator.tolist() == [float(c in t.mutable) for c in schema.feature_names]
        assert te.desired_onehot.tolist() == [0.0, 1.0]

    def test_expand_mask_widths(self, setup):
        schema, rows, enc = setup
        col = column_mask(schema, make_template(schema, rows.iloc[0], ["education"], ">50K"))
        dims = expand_mask(enc, col)
        b = enc.block("education")
        assert dims.sum() == b.width
        assert dims[b.offset : b.offset + b.width].all()
