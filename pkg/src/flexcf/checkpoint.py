"""Versioned checkpoint archives and the on-disk model registry.

A checkpoint is a single zip holding the schema, fitted encoder, training CDF,
config, training curve and raw network weights. Entries are written in sorted
order with frozen timestamps, so identical models produce byte-identical
archives. The registry is a directory of ``<id>/checkpoint.zip`` plus a small
``meta.json`` carrying mutable bookkeeping (creation time, links).
"""

from __future__ import annotations

import json
import os
import time
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .classifier import ClassifierConfig, MlpNet, TrainedClassifier
from .data import EmpiricalCdf, Encoder
from .gan import FceganConfig, FceganModel, Generator, PacCritic
from .metrics import DataCritic
from .schema import DatasetSchema

FORMAT_MAGIC = "FLEXCF-CKPT"
FORMAT_VERSION = "1.0.0"
REGISTRY_ENV = "FLEXCF_REGISTRY"

KIND_CLASSIFIER = "classifier"
KIND_FCEGAN = "fcegan"
KIND_CRITIC = "critic"

_FIXED_STAMP = (1980, 1, 1, 0, 0, 0)  # frozen zip timestamps keep archives reproducible


class CheckpointError(ValueError):
    pass


def _write_archive(path: Path, entries: dict[str, bytes]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(path, "w") as zf:
        for name in sorted(entries):
            info = zipfile.ZipInfo(name, date_time=_FIXED_STAMP)
            info.compress_type = zipfile.ZIP_DEFLATED
            info.external_attr = 0o644 << 16
            zf.writestr(info, entries[name])


def _state_dict_entries(prefix: str, net: torch.nn.Module, entries: dict, index: dict) -> None:
    for key, tensor in net.state_dict().items():
        arr = tensor.detach().cpu().numpy()
        name = f"weights/{prefix}.{key}.bin"
        entries[name] = np.ascontiguousarray(arr).tobytes()
        index[f"{prefix}.{key}"] = {
            "dtype": str(arr.dtype),
            "shape": list(arr.shape),
            "file": name,
        }


def _load_state_dict(zf: zipfile.ZipFile, prefix: str, net: torch.nn.Module, index: dict) -> None:
    state = {}
    for full, meta in index.items():
        if not full.startswith(prefix + "."):
            continue
        raw = zf.read(meta["file"])
        arr = np.frombuffer(raw, dtype=meta["dtype"]).reshape(meta["shape"]).copy()
        state[full[len(prefix) + 1 :]] = torch.as_tensor(arr)
    net.load_state_dict(state)
    net.eval()


def _base_entries(kind: str, schema: DatasetSchema, encoder: Encoder, config: dict,
                  curve, cdf: EmpiricalCdf | None) -> dict[str, bytes]:
    entries = {
        "manifest.json": json.dumps(
            {"format": FORMAT_MAGIC, "version": FORMAT_VERSION, "kind": kind}, sort_keys=True
        ).encode(),
        "schema.json": schema.to_json().encode(),
        "encoder.json": json.dumps(encoder.to_dict(), sort_keys=True).encode(),
        "config.json": json.dumps(config, sort_keys=True).encode(),
        "curve.json": json.dumps(curve or []).encode(),
    }
    if cdf is not None:
        entries["cdf.json"] = json.dumps(cdf.to_dict(), sort_keys=True).encode()
    return entries


def _config_dict(cfg) -> dict:
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in cfg.__dict__.items()
            if not k.startswith("_") and k != "realism_critic"}


def save_classifier(model: TrainedClassifier, path, cdf: EmpiricalCdf | None = None) -> None:
    entries = _base_entries(
        KIND_CLASSIFIER, model.schema, model.encoder, _config_dict(model.config),
        model.curve, cdf,
    )
    index: dict = {}
    _state_dict_entries("network", model.network, entries, index)
    entries["tensors.json"] = json.dumps(index, sort_keys=True).encode()
    _write_archive(Path(path), entries)


def save_fcegan(model: FceganModel, path, cdf: EmpiricalCdf | None = None) -> None:
    entries = _base_entries(
        KIND_FCEGAN, model.schema, model.encoder, _config_dict(model.config), model.curve, cdf
    )
    index: dict = {}
    _state_dict_entries("generator", model.generator, entries, index)
    _state_dict_entries("d_og", model.d_og, entries, index)
    _state_dict_entries("d_cf", model.d_cf, entries, index)
    extra = {"classifier_role": model.classifier_role, "has_classifier": model.classifier is not None}
    if model.classifier is not None:
        extra["classifier_config"] = _config_dict(model.classifier.config)
        _state_dict_entries("classifier", model.classifier.network, entries, index)
    entries["extra.json"] = json.dumps(extra, sort_keys=True).encode()
    entries["tensors.json"] = json.dumps(index, sort_keys=True).encode()
    _write_archive(Path(path), entries)


def save_critic(critic: DataCritic, path, cdf: EmpiricalCdf | None = None) -> None:
    entries = _base_entries(
        KIND_CRITIC, critic.schema, critic.encoder,
        _config_dict(critic.config) if critic.config else {}, [], cdf,
    )
    entries["extra.json"] = json.dumps(
        {"reference_mean": critic.reference_mean, "reference_std": critic.reference_std},
        sort_keys=True,
    ).encode()
    index: dict = {}
    _state_dict_entries("critic", critic.net, entries, index)
    entries["tensors.json"] = json.dumps(index, sort_keys=True).encode()
    _write_archive(Path(path), entries)


@dataclass
class LoadedModel:
    kind: str
    schema: DatasetSchema
    encoder: Encoder
    cdf: EmpiricalCdf | None
    model: object  # TrainedClassifier | FceganModel | DataCritic
    curve: list
    config: dict


def load_checkpoint(path) -> LoadedModel:
    with zipfile.ZipFile(path, "r") as zf:
        manifest = json.loads(zf.read("manifest.json"))
        if manifest.get("format") != FORMAT_MAGIC:
            raise CheckpointError(f"not a {FORMAT_MAGIC} archive: {path}")
        major = str(manifest.get("version", "")).split(".")[0]
        if major != FORMAT_VERSION.split(".")[0]:
            raise CheckpointError(
                f"unsupported checkpoint version {manifest.get('version')!r}; "
                f"this build reads major {FORMAT_VERSION.split('.')[0]}"
            )
        kind = manifest["kind"]
        schema = DatasetSchema.from_json(zf.read("schema.json").decode())
        encoder = Encoder.from_dict(json.loads(zf.read("encoder.json")))
        config = json.loads(zf.read("config.json"))
        curve = json.loads(zf.read("curve.json"))
        cdf = None
        if "cdf.json" in zf.namelist():
            cdf = EmpiricalCdf.from_dict(json.loads(zf.read("cdf.json")))
        index = json.loads(zf.read("tensors.json"))

        if kind == KIND_CLASSIFIER:
            cfg = ClassifierConfig(**_tupled(config, ("hidden_dims", "adam_betas")))
            net = MlpNet(encoder.dim, cfg.hidden_dims, len(schema.target_classes))
            _load_state_dict(zf, "network", net, index)
            model = TrainedClassifier(net, encoder, schema, cfg, curve)
        elif kind == KIND_FCEGAN:
            cfg = FceganConfig(
                **_tupled(config, ("gen_hidden", "disc_hidden", "adam_betas"))
            )
            k = len(schema.target_classes)
            n_cols = len(schema.feature_names)
            gen_in = encoder.dim + k + (encoder.dim + n_cols if cfg.use_templates else 0) + k + cfg.noise_dim
            gen = Generator(gen_in, cfg.gen_hidden, encoder.dim)
            d_og = PacCritic(encoder.dim, cfg.disc_hidden, pac=cfg.pac)
            d_cf = PacCritic(encoder.dim + k, cfg.disc_hidden, pac=cfg.pac)
            _load_state_dict(zf, "generator", gen, index)
            _load_state_dict(zf, "d_og", d_og, index)
            _load_state_dict(zf, "d_cf", d_cf, index)
            extra = json.loads(zf.read("extra.json"))
            clf = None
            if extra.get("has_classifier"):
                ccfg = ClassifierConfig(
                    **_tupled(extra["classifier_config"], ("hidden_dims", "adam_betas"))
                )
                cnet = MlpNet(encoder.dim, ccfg.hidden_dims, len(schema.target_classes))
                _load_state_dict(zf, "classifier", cnet, index)
                clf = TrainedClassifier(cnet, encoder, schema, ccfg)
            model = FceganModel(
                gen, d_og, d_cf, encoder, schema, cfg, curve,
                classifier=clf, classifier_role=extra.get("classifier_role", "full"),
            )
        elif kind == KIND_CRITIC:
            cfg = FceganConfig(
                **_tupled(config, ("gen_hidden", "disc_hidden", "adam_betas"))
            ) if config else None
            net = PacCritic(
                encoder.dim, cfg.disc_hidden if cfg else (256, 256), pac=cfg.pac if cfg else 10
            )
            _load_state_dict(zf, "critic", net, index)
            extra = json.loads(zf.read("extra.json"))
            model = DataCritic(
                net, encoder, schema, extra["reference_mean"], extra["reference_std"], cfg
            )
        else:
            raise CheckpointError(f"unknown checkpoint kind {kind!r}")
    return LoadedModel(kind, schema, encoder, cdf, model, curve, config)


def _tupled(config: dict, keys) -> dict:
    out = dict(config)
    for k in keys:
        if k in out and isinstance(out[k], list):
            out[k] = tuple(out[k])
    return out


@dataclass
class ModelRegistryEntry:
    id: str
    kind: str
    schema_hash: str
    config: dict
    created_at: str
    checkpoint_path: str
    linked: dict = field(default_factory=dict)


class Registry:
    """Directory-backed model registry; serving reads it, training jobs write it."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._cache: dict[str, LoadedModel] = {}

    @classmethod
    def from_env(cls, default: str = "./registry") -> "Registry":
        return cls(os.environ.get(REGISTRY_ENV, default))

    def entries(self) -> list[ModelRegistryEntry]:
        out = []
        for meta_path in sorted(self.root.glob("*/meta.json")):
            out.append(self._entry_from_meta(meta_path))
        return out

    def _entry_from_meta(self, meta_path: Path) -> ModelRegistryEntry:
        meta = json.loads(meta_path.read_text())
        return ModelRegistryEntry(
            id=meta["id"],
            kind=meta["kind"],
            schema_hash=meta["schema_hash"],
            config=meta.get("config", {}),
            created_at=meta.get("created_at", ""),
            checkpoint_path=str(meta_path.parent / "checkpoint.zip"),
            linked=meta.get("linked", {}),
        )

    def get(self, model_id: str) -> ModelRegistryEntry:
        meta_path = self.root / model_id / "meta.json"
        if not meta_path.exists():
            raise KeyError(f"unknown model id {model_id!r}")
        return self._entry_from_meta(meta_path)

    def load(self, model_id: str) -> LoadedModel:
        if model_id not in self._cache:
            entry = self.get(model_id)
            loaded = load_checkpoint(entry.checkpoint_path)
            if loaded.schema.hash() != entry.schema_hash:
                raise CheckpointError(
                    f"registry entry {model_id!r} schema hash does not match its checkpoint"
                )
            self._cache[model_id] = loaded
        return self._cache[model_id]

    def add(self, model_id: str, checkpoint_path, linked: dict | None = None) -> ModelRegistryEntry:
        if "/" in model_id or model_id in ("", ".", ".."):
            raise ValueError(f"invalid model id {model_id!r}")
        loaded = load_checkpoint(checkpoint_path)
        target = self.root / model_id
        if target.exists():
            raise ValueError(f"model id {model_id!r} already registered")
        target.mkdir(parents=True)
        data = Path(checkpoint_path).read_bytes()
        (target / "checkpoint.zip").write_bytes(data)
        linked = linked or {}
        for role, other_id in linked.items():
            other = self.get(other_id)
            if other.schema_hash != loaded.schema.hash():
                raise CheckpointError(
                    f"linked {role} {other_id!r} was trained on a different schema"
                )
        meta = {
            "id": model_id,
            "kind": loaded.kind,
            "schema_hash": loaded.schema.hash(),
            "config": loaded.config,
            "created_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            "linked": linked,
        }
        (target / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=1))
        return self.get(model_id)
