import json
import numpy as np
import pandas as pd
import pytest
from fastapi.testclient import TestClient

from flexcf.checkpoint import (
    CheckpointError,
    Registry,
    load_checkpoint,
    save_classifier,
    save_critic,
    save_fcegan,
)
from flexcf.cli import main, parse_value, read_overrides
from flexcf.data import EmpiricalCdf
from flexcf.gan import FceganConfig, train_fcegan
from flexcf.metrics import train_data_critic
from flexcf.service import create_app


@pytest.fixture(scope="module")
def artifacts(tmp_path_factory, blobs, blobs_split, blobs_classifier):
    schema, _ = blobs
    root = tmp_path_factory.mktemp("artifacts")
    cfg = FceganConfig(
        gen_hidden=(32, 32), disc_hidden=(32, 32), pac=5, batch_size=50,
        noise_dim=8, max_epochs=4, val_cap=50,
    )
    model = train_fcegan(blobs_split, cfg, seed=0, classifier=blobs_classifier)
    critic = train_data_critic(
        blobs_split.train, schema,
        config=FceganConfig(gen_hidden=(16,), disc_hidden=(16,), pac=5, batch_size=50,
                            noise_dim=8, max_epochs=3),
        seed=0,
    )
    cdf = EmpiricalCdf.fit(blobs_split.train, schema)
    save_classifier(blobs_classifier, root / "clf.zip", cdf=cdf)
    save_fcegan(model, root / "gen.zip", cdf=cdf)
    save_critic(critic, root / "critic.zip", cdf=cdf)
    registry = Registry(root / "registry")
    registry.add("clf", root / "clf.zip")
    registry.add("critic-1", root / "critic.zip")
    registry.add("gen-1", root / "gen.zip", linked={"classifier": "clf", "critic": "critic-1"})
    return {"root": root, "registry": registry, "model": model, "schema": schema}


class TestCheckpoint:
    def test_round_trip_classifier(self, artifacts, blobs_split, blobs_classifier):
        loaded = load_checkpoint(artifacts["root"] / "clf.zip")
        assert loaded.kind == "classifier"
        a, pa = blobs_classifier.predict(blobs_split.test.head(20))
        b, pb = loaded.model.predict(blobs_split.test.head(20))
        assert a == b
        assert np.array_equal(pa, pb)

    def test_round_trip_fcegan_generation(self, artifacts, blobs, blobs_split):
        from flexcf.templates import make_template

        schema, _ = blobs
        loaded = load_checkpoint(artifacts["root"] / "gen.zip")
        inst = blobs_split.test.iloc[0]
        t = make_template(schema, inst, schema.feature_names, "pos")
        b1 = artifacts["model"].generate(inst, t, 3, np.random.default_rng(5))
        b2 = loaded.model.generate(inst, t, 3, np.random.default_rng(5))
        assert np.array_equal(b1.encoded, b2.encoded)
        assert b1.valid.tolist() == b2.valid.tolist()

    def test_save_is_deterministic(self, artifacts, blobs_classifier, tmp_path):
        save_classifier(blobs_classifier, tmp_path / "a.zip")
        save_classifier(blobs_classifier, tmp_path / "b.zip")
        assert (tmp_path / "a.zip").read_bytes() == (tmp_path / "b.zip").read_bytes()

    def test_retrain_same_seed_identical_archive(self, blobs, blobs_split, blobs_classifier, tmp_path):
        cfg = FceganConfig(
            gen_hidden=(16,), disc_hidden=(16,), pac=5, batch_size=50,
            noise_dim=8, max_epochs=2, val_cap=30,
        )
        m1 = train_fcegan(blobs_split, cfg, seed=9, classifier=blobs_classifier)
        m2 = train_fcegan(blobs_split, cfg, seed=9, classifier=blobs_classifier)
        save_fcegan(m1, tmp_path / "m1.zip")
        save_fcegan(m2, tmp_path / "m2.zip")
        assert (tmp_path / "m1.zip").read_bytes() == (tmp_path / "m2.zip").read_bytes()

    def test_version_gate(self, artifacts, tmp_path):
        import zipfile

        src = artifacts["root"] / "clf.zip"
        dst = tmp_path / "future.zip"
        with zipfile.ZipFile(src) as zin, zipfile.ZipFile(dst, "w") as zout:
            for name in zin.namelist():
                data = zin.read(name)
                if name == "manifest.json":
                    m = json.loads(data)
                    m["version"] = "2.0.0"
                    data = json.dumps(m).encode()
                zout.writestr(name, data)
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(dst)

    def test_registry_links_require_matching_schema(self, artifacts, census, census_split, tmp_path):
        from flexcf.classifier import ClassifierConfig, train_classifier

        schema, _ = census
        other = train_classifier(
            census_split, schema, ClassifierConfig(hidden_dims=(8,), max_epochs=1), seed=0
        )
        save_classifier(other, tmp_path / "other.zip")
        registry = artifacts["registry"]
        with pytest.raises(CheckpointError, match="different schema"):
            registry.add("mismatched", tmp_path / "other.zip", linked={"classifier": "clf"})


@pytest.fixture(scope="module")
def client(artifacts):
    return TestClient(create_app(artifacts["registry"]))


def sample_payload(schema, n=5, seed=11):
    return {
        "instance": {"x1": -2.0, "x2": -2.1},
        "template": {"mutable": ["x1", "x2"], "desired_class": "pos"},
        "n": n,
        "seed": seed,
    }


class TestService:
    def test_list_models(self, client):
        body = client.get("/models").json()
        ids = {m["id"]: m["kind"] for m in body["models"]}
        assert ids == {"clf": "classifier", "critic-1": "critic", "gen-1": "fcegan"}
        assert all(m["schema_hash"] for m in body["models"])

    def test_schema_endpoint(self, client, artifacts):
        body = client.get("/models/gen-1/schema").json()
        assert body["schema"]["target"] == "label"
        assert body["schema_hash"] == artifacts["schema"].hash()

    def test_generate_contract(self, client, artifacts):
        r = client.post("/models/gen-1/generate", json=sample_payload(artifacts["schema"]))
        assert r.status_code == 200
        body = r.json()
        assert len(body["candidates"]) == 5
        assert all(c["valid"] in (True, False) for c in body["candidates"])
        assert body["metrics"]["valid_fraction"] is not None
        assert body["metrics"]["fakeness"] is not None
        assert body["schema_hash"] == artifacts["schema"].hash()

    def test_seeded_requests_are_identical(self, client, artifacts):
        p = sample_payload(artifacts["schema"], seed=42)
        a = client.post("/models/gen-1/generate", json=p)
        b = client.post("/models/gen-1/generate", json=p)
        assert a.content == b.content

    def test_unknown_model_404(self, client):
        assert client.get("/models/nope/schema").status_code == 404
        assert client.post("/models/nope/generate", json={}).status_code == 404

    def test_unknown_template_column_422_names_column(self, client, artifacts):
        p = sample_payload(artifacts["schema"])
        p["template"]["mutable"] = ["x1", "salary"]
        r = client.post("/models/gen-1/generate", json=p)
        assert r.status_code == 422
        assert "salary" in json.dumps(r.json())

    def test_invalid_instance_422(self, client, artifacts):
        p = sample_payload(artifacts["schema"])
        p["instance"] = {"x1": "abc", "x2": 0.0}
        r = client.post("/models/gen-1/generate", json=p)
        assert r.status_code == 422
        detail = r.json()["detail"]
        assert any(d["field"] == "instance.x1" for d in detail)

    def test_schema_hash_mismatch_409(self, client, artifacts):
        p = sample_payload(artifacts["schema"])
        p["schema_hash"] = "deadbeef"
        r = client.post("/models/gen-1/generate", json=p)
        assert r.status_code == 409

    def test_optimize_endpoint(self, client, artifacts):
        p = sample_payload(artifacts["schema"], n=2)
        p["steps"] = 10
        r = client.post("/models/gen-1/optimize", json=p)
        assert r.status_code == 200
        body = r.json()
        assert len(body["candidates"]) == 2
        assert body["metrics"]["n_candidates"] == 2

    def test_curve_endpoint(self, client):
        body = client.get("/models/gen-1/curve").json()
        assert len(body["curve"]) == 4
        assert {"epoch", "valid_fraction"} <= set(body["curve"][0])

    def test_serving_is_read_only_over_checkpoints(self, client, artifacts):
        registry_root = artifacts["registry"].root
        before = {
            p: p.read_bytes() for p in registry_root.rglob("checkpoint.zip")
        }
        client.post("/models/gen-1/generate", json=sample_payload(artifacts["schema"]))
        client.post("/models/gen-1/optimize", json=sample_payload(artifacts["schema"], n=1))
        for p, data in before.items():
            assert p.read_bytes() == data

    def test_template_round_trip_through_json(self, client, artifacts):
        # the served template JSON reproduces the internal template exactly
        from flexcf.templates import make_template, template_from_json, template_to_json

        schema = artifacts["schema"]
        inst = {"x1": -2.0, "x2": -2.1}
        t = make_template(schema, inst, ["x1"], "pos")
        assert template_from_json(template_to_json(t), schema, inst) == t


class TestCliHelpers:
    def test_parse_value(self):
        assert parse_value("3") == 3
        assert parse_value("0.5") == 0.5
        assert parse_value("true") is True
        assert parse_value("256,256") == (256, 256)
        assert parse_value("adam") == "adam"

    def test_read_overrides(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("# comment\nfcegan.max_epochs=7\nclassifier.hidden_dims=64,64\n")
        got = read_overrides(str(cfg), ["fcegan.pac=5"])
        assert got == {
            "fcegan.max_epochs": 7,
            "classifier.hidden_dims": (64, 64),
            "fcegan.pac": 5,
        }


@pytest.fixture(scope="module")
def workdir(tmp_path_factory, blobs):
    _, rows = blobs
    d = tmp_path_factory.mktemp("cli")
    rows.to_csv(d / "data.csv", index=False)
    (d / "template.json").write_text(
        json.dumps({"mutable": ["x1", "x2"], "desired_class": "pos"})
    )
    (d / "instance.json").write_text(json.dumps({"x1": -2.0, "x2": -2.0}))
    return d


class TestCli:
    def run(self, *argv):
        return main([str(a) for a in argv])

    def test_unknown_flag_exits_1(self, capsys):
        assert main(["train-classifier", "--bogus"]) == 1
        assert "usage" in capsys.readouterr().err

    def test_black_box_without_history_exits_1(self, workdir, capsys):
        code = self.run(
            "train-fcegan", "--mode", "black-box",
            "--data", workdir / "data.csv", "--out", workdir / "x.zip",
        )
        assert code == 1
        assert "--history" in capsys.readouterr().err

    def test_full_pipeline(self, workdir, capsys):
        assert self.run(
            "--seed", 0,
            "train-classifier", "--data", workdir / "data.csv",
            "--epochs", 4, "--out", workdir / "clf.zip",
            "--export-history", workdir / "history.json",
            "--set", "classifier.hidden_dims=32,32",
        ) == 0
        assert self.run(
            "--seed", 0,
            "train-fcegan", "--data", workdir / "data.csv",
            "--classifier", workdir / "clf.zip", "--epochs", 2,
            "--out", workdir / "gen.zip",
            "--set", "fcegan.gen_hidden=16,16", "--set", "fcegan.disc_hidden=16,16",
            "--set", "fcegan.pac=5", "--set", "fcegan.batch_size=50",
            "--set", "fcegan.noise_dim=8", "--set", "fcegan.val_cap=30",
        ) == 0
        assert self.run(
            "--seed", 0,
            "train-fcegan", "--mode", "black-box", "--history", workdir / "history.json",
            "--classifier", workdir / "clf.zip", "--epochs", 2,
            "--out", workdir / "gen_bb.zip",
            "--set", "fcegan.gen_hidden=16,16", "--set", "fcegan.disc_hidden=16,16",
            "--set", "fcegan.pac=5", "--set", "fcegan.batch_size=50",
            "--set", "fcegan.noise_dim=8", "--set", "fcegan.val_cap=30",
        ) == 0
        assert self.run(
            "--seed", 1,
            "generate", "--model", workdir / "gen.zip",
            "--input", workdir / "instance.json", "--template", workdir / "template.json",
            "--n", 5, "--out-dir", workdir / "gen_out",
        ) == 0
        got = pd.read_csv(workdir / "gen_out" / "counterfactuals.csv")
        assert len(got) == 5
        metrics = json.loads((workdir / "gen_out" / "metrics.json").read_text())
        assert "valid_fraction" in metrics
        assert self.run(
            "optimize", "--model", workdir / "clf.zip",
            "--input", workdir / "instance.json", "--template", workdir / "template.json",
            "--n", 2, "--steps", 10, "--out-dir", workdir / "opt_out",
        ) == 0
        assert self.run(
            "evaluate", "--originals", workdir / "gen_out" / "counterfactuals.csv",
            "--candidates", workdir / "gen_out" / "counterfactuals.csv",
            "--template", workdir / "template.json",
            "--classifier", workdir / "clf.zip",
            "--out", workdir / "eval.json",
        ) == 0

    def test_bench_smoke(self, workdir):
        assert self.run(
            "--seed", 0,
            "bench", "--data", workdir / "data.csv", "--methods", "random_input",
            "--grid", "0.5,1.0", "--seeds", 1, "--cap", 20, "--n-per-instance", 2,
            "--no-critic", "--out", workdir / "bench_out",
            "--set", "classifier.hidden_dims=32,32", "--set", "classifier.max_epochs=3",
        ) == 0
        agg = (workdir / "bench_out" / "aggregate.csv").read_text()
        assert "random_input" in agg

    def test_register_and_serve_validation(self, workdir, tmp_path):
        reg = tmp_path / "registry"
        assert self.run(
            "register", "--registry", reg, "--id", "clf", "--checkpoint", workdir / "clf.zip"
        ) == 0
        assert self.run(
            "register", "--registry", reg, "--id", "gen", "--checkpoint", workdir / "gen.zip",
            "--link", "classifier=clf",
        ) == 0
        from flexcf.checkpoint import Registry as R

        entries = {e.id: e for e in R(reg).entries()}
        assert entries["gen"].linked == {"classifier": "clf"}
