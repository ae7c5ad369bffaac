"""HTTP generation service over a model registry.

JSON endpoints serve counterfactual generation and optimization from read-only
checkpoints; every response carries the model's schema hash so clients can
detect drift. Validation errors come back as machine-readable field errors.
"""

from __future__ import annotations

import logging

import numpy as np
import pandas as pd
from fastapi import FastAPI, HTTPException

from .checkpoint import KIND_CLASSIFIER, KIND_FCEGAN, LoadedModel, Registry
from .gan import CLS_ROLE_FULL, FceganModel
from .metrics import evaluate
from .optimizer import OptimizerConfig, optimize_batch
from .schema import CONTINUOUS, DatasetSchema
from .templates import make_template

logger = logging.getLogger(__name__)


def _field_errors(errors: list[dict]) -> HTTPException:
    return HTTPException(status_code=422, detail=errors)


def validate_instance(schema: DatasetSchema, instance: dict) -> dict:
    errors = []
    clean = {}
    if not isinstance(instance, dict):
        raise _field_errors([{"field": "instance", "error": "must be an object"}])
    for key in instance:
        if key not in schema.feature_names:
            errors.append({"field": f"instance.{key}", "error": "unknown column"})
    for name, kind in schema.columns:
        if name not in instance:
            errors.append({"field": f"instance.{name}", "error": "missing value"})
            continue
        value = instance[name]
        if kind == CONTINUOUS:
            try:
                clean[name] = float(value)
            except (TypeError, ValueError):
                errors.append({"field": f"instance.{name}", "error": "not numeric"})
        else:
            if str(value) not in schema.categories[name]:
                errors.append(
                    {"field": f"instance.{name}", "error": f"unknown category {value!r}"}
                )
            else:
                clean[name] = str(value)
    if errors:
        raise _field_errors(errors)
    return clean


def validate_template(schema: DatasetSchema, template: dict) -> tuple[list[str], str]:
    errors = []
    if not isinstance(template, dict):
        raise _field_errors([{"field": "template", "error": "must be an object"}])
    mutable = template.get("mutable", [])
    if not isinstance(mutable, list):
        errors.append({"field": "template.mutable", "error": "must be a list of columns"})
        mutable = []
    for col in mutable:
        if col not in schema.feature_names:
            errors.append({"field": "template.mutable", "error": f"unknown column {col!r}"})
    desired = template.get("desired_class")
    if desired is None:
        errors.append({"field": "template.desired_class", "error": "missing"})
    elif str(desired) not in schema.target_classes:
        errors.append(
            {"field": "template.desired_class", "error": f"unknown class {desired!r}"}
        )
    if errors:
        raise _field_errors(errors)
    return [str(c) for c in mutable], str(desired)


def _check_schema_hash(payload: dict, schema_hash: str) -> None:
    wanted = payload.get("schema_hash")
    if wanted is not None and wanted != schema_hash:
        raise HTTPException(
            status_code=409,
            detail=[{"field": "schema_hash", "error": f"model schema hash is {schema_hash}"}],
        )


def _candidate_payload(batch, schema: DatasetSchema) -> list[dict]:
    out = []
    for i in range(len(batch)):
        row = batch.rows.iloc[i]
        values = {
            c: (float(row[c]) if schema.kind_of(c) == CONTINUOUS else str(row[c]))
            for c in schema.feature_names
        }
        out.append(
            {
                "values": values,
                "predicted_class": None if batch.predicted is None else batch.predicted[i],
                "probabilities": (
                    None if batch.probabilities is None else list(map(float, batch.probabilities[i]))
                ),
                "valid": None if batch.valid is None else bool(batch.valid[i]),
            }
        )
    return out


def create_app(registry: Registry) -> FastAPI:
    app = FastAPI(title="flexcf", version="0.1.0")

    def loaded_or_404(model_id: str) -> LoadedModel:
        try:
            return registry.load(model_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown model {model_id!r}")

    def linked_model(model_id: str, role: str):
        entry = registry.get(model_id)
        other = entry.linked.get(role)
        return loaded_or_404(other).model if other else None

    @app.get("/models")
    def list_models():
        return {
            "models": [
                {
                    "id": e.id,
                    "kind": e.kind,
                    "schema_hash": e.schema_hash,
                    "created_at": e.created_at,
                }
                for e in registry.entries()
            ]
        }

    @app.get("/models/{model_id}/schema")
    def model_schema(model_id: str):
        loaded = loaded_or_404(model_id)
        return {"schema": loaded.schema.to_dict(), "schema_hash": loaded.schema.hash()}

    @app.get("/models/{model_id}/curve")
    def model_curve(model_id: str):
        loaded = loaded_or_404(model_id)
        return {"curve": loaded.curve, "schema_hash": loaded.schema.hash()}

    @app.post("/models/{model_id}/generate")
    def generate(model_id: str, payload: dict):
        loaded = loaded_or_404(model_id)
        if loaded.kind != KIND_FCEGAN:
            raise HTTPException(status_code=422, detail=[
                {"field": "model", "error": f"{model_id!r} is a {loaded.kind}, not a generator"}
            ])
        schema = loaded.schema
        _check_schema_hash(payload, schema.hash())
        instance = validate_instance(schema, payload.get("instance", {}))
        mutable, desired = validate_template(schema, payload.get("template", {}))
        n = int(payload.get("n", 5))
        if not 1 <= n <= 1000:
            raise _field_errors([{"field": "n", "error": "must be between 1 and 1000"}])
        rng = np.random.default_rng(payload.get("seed"))

        model: FceganModel = loaded.model
        template = make_template(schema, instance, mutable, desired)
        verifier = None
        if model.classifier is None or model.classifier_role != CLS_ROLE_FULL:
            verifier = linked_model(model_id, "classifier")
        batch = model.generate(instance, template, n, rng, classifier=verifier)
        critic = linked_model(model_id, "critic")
        report = evaluate(
            batch,
            pd.DataFrame([instance]),
            [template],
            classifier=None,
            cdf=loaded.cdf,
            critic=critic,
            schema=schema,
        )
        return {
            "schema_hash": schema.hash(),
            "candidates": _candidate_payload(batch, schema),
            "metrics": report.to_dict(),
        }

    @app.post("/models/{model_id}/optimize")
    def optimize(model_id: str, payload: dict):
        loaded = loaded_or_404(model_id)
        schema = loaded.schema
        _check_schema_hash(payload, schema.hash())
        if loaded.kind == KIND_FCEGAN:
            model: FceganModel = loaded.model
            classifier = (
                model.classifier if model.classifier_role == CLS_ROLE_FULL else None
            ) or linked_model(model_id, "classifier")
        elif loaded.kind == KIND_CLASSIFIER:
            classifier = loaded.model
        else:
            classifier = None
        if classifier is None:
            raise HTTPException(status_code=422, detail=[
                {"field": "model", "error": "no classifier available for optimization"}
            ])
        instance = validate_instance(schema, payload.get("instance", {}))
        mutable, desired = validate_template(schema, payload.get("template", {}))
        n = int(payload.get("n", 1))
        steps = int(payload.get("steps", 30))
        if not 1 <= n <= 100:
            raise _field_errors([{"field": "n", "error": "must be between 1 and 100"}])
        if not 1 <= steps <= 500:
            raise _field_errors([{"field": "steps", "error": "must be between 1 and 500"}])
        rng = np.random.default_rng(payload.get("seed"))
        critic = linked_model(model_id, "critic")
        cfg = OptimizerConfig(steps=steps, n_per_original=n)
        template = make_template(schema, instance, mutable, desired)
        batch = optimize_batch(
            classifier, pd.DataFrame([instance]), [template], cfg, critic=critic, rng=rng
        )
        report = evaluate(
            batch, pd.DataFrame([instance]), [template],
            classifier=None, cdf=loaded.cdf, critic=critic, schema=schema,
        )
        return {
            "schema_hash": schema.hash(),
            "candidates": _candidate_payload(batch, schema),
            "metrics": report.to_dict(),
        }

    return app


def serve(registry: Registry, host: str = "127.0.0.1", port: int = 8321) -> None:
    """Run the generation service until interrupted."""
    if not any(e.kind == KIND_FCEGAN for e in registry.entries()):
        raise ValueError("registry holds no generator checkpoints; nothing to serve")
    import uvicorn

    uvicorn.run(create_app(registry), host=host, port=port, log_level="info")
