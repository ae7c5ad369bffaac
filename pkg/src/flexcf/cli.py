"""Unified command line: training, generation, evaluation, benchmarks, serving.

Exit codes: 0 success, 1 user error (bad flags, missing inputs, validation),
2 internal error. Config files are plain ``key=value`` lines (``#`` comments);
``--set`` applies the same keys from the command line, e.g.
``--set fcegan.max_epochs=20 --set classifier.hidden_dims=256,256``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import traceback
from pathlib import Path

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)


class UserError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UserError(f"{message}\n{self.format_usage()}")


def parse_value(text: str):
    low = text.strip()
    if low.lower() in ("true", "false"):
        return low.lower() == "true"
    if "," in low:
        return tuple(parse_value(p) for p in low.split(",") if p != "")
    for cast in (int, float):
        try:
            return cast(low)
        except ValueError:
            continue
    return low


def read_overrides(config_path: str | None, sets: list[str]) -> dict:
    pairs: dict[str, object] = {}
    lines = []
    if config_path:
        p = Path(config_path)
        if not p.exists():
            raise UserError(f"config file not found: {config_path}")
        lines += p.read_text().splitlines()
    lines += sets or []
    for line in lines:
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UserError(f"bad config line (expected key=value): {line!r}")
        key, value = line.split("=", 1)
        pairs[key.strip()] = parse_value(value)
    return pairs


def apply_overrides(cfg, prefix: str, overrides: dict):
    for key, value in overrides.items():
        if "." not in key:
            continue
        section, field = key.split(".", 1)
        if section != prefix:
            continue
        if not hasattr(cfg, field):
            raise UserError(f"unknown config key {key!r}")
        current = getattr(cfg, field)
        if isinstance(current, tuple) and not isinstance(value, tuple):
            value = (value,)
        object.__setattr__(cfg, field, value)
    # re-validate invariants after mutation
    if hasattr(cfg, "__post_init__"):
        cfg.__post_init__()
    return cfg


def known_sections(overrides: dict, allowed: set[str]) -> None:
    for key in overrides:
        section = key.split(".", 1)[0]
        if section not in allowed:
            raise UserError(
                f"unknown config section {section!r} in {key!r}; expected one of {sorted(allowed)}"
            )


def _load_data(args):
    from .data import load_csv
    from .schema import DatasetSchema

    schema = None
    if getattr(args, "schema", None):
        schema = DatasetSchema.from_json(Path(args.schema).read_text())
    if not Path(args.data).exists():
        raise UserError(f"data file not found: {args.data}")
    return load_csv(args.data, schema=schema)


def _load_instance(path: str, schema) -> dict:
    p = Path(path)
    if not p.exists():
        raise UserError(f"input file not found: {path}")
    if p.suffix.lower() == ".json":
        return json.loads(p.read_text())
    frame = pd.read_csv(p, skipinitialspace=True)
    if frame.empty:
        raise UserError(f"input file {path} has no rows")
    row = frame.iloc[0]
    return {c: row[c] for c in frame.columns if c in schema.feature_names}


def _read_template(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise UserError(f"template file not found: {path}")
    return json.loads(p.read_text())


def cmd_train_classifier(args, overrides) -> int:
    from .classifier import ClassifierConfig, PredictionHistory, export_history, train_classifier
    from .checkpoint import save_classifier
    from .data import EmpiricalCdf, split

    known_sections(overrides, {"classifier"})
    schema, rows = _load_data(args)
    s = split(rows, seed=args.seed)
    cfg = ClassifierConfig()
    if args.epochs:
        cfg.max_epochs = args.epochs
    apply_overrides(cfg, "classifier", overrides)
    model = train_classifier(s, schema, cfg, seed=args.seed)
    cdf = EmpiricalCdf.fit(s.train, schema)
    save_classifier(model, args.out, cdf=cdf)
    print(f"saved classifier checkpoint to {args.out}")
    if args.export_history:
        history = PredictionHistory(
            export_history(model, s.train), export_history(model, s.validation)
        )
        Path(args.export_history).write_text(history.to_json())
        print(f"wrote prediction history to {args.export_history}")
    return 0


def cmd_train_fcegan(args, overrides) -> int:
    from .checkpoint import load_checkpoint, save_fcegan, KIND_CLASSIFIER
    from .classifier import PredictionHistory
    from .data import EmpiricalCdf, split
    from .gan import FceganConfig, train_fcegan

    known_sections(overrides, {"fcegan"})
    mode = args.mode.replace("-", "_")
    cfg = FceganConfig(mode=mode, lambda_clas=0.0 if mode == "black_box" else 1.0)
    if args.epochs:
        cfg.max_epochs = args.epochs
    apply_overrides(cfg, "fcegan", overrides)

    if mode == "black_box":
        if not args.history:
            raise UserError(
                "train-fcegan --mode black-box requires --history (a prediction-record "
                "JSON exported from the classifier); the live model is not consulted"
            )
        history = PredictionHistory.from_json(Path(args.history).read_text())
        if args.schema:
            from .schema import DatasetSchema

            schema = DatasetSchema.from_json(Path(args.schema).read_text())
        elif args.classifier:
            schema = load_checkpoint(args.classifier).schema
        else:
            raise UserError("black-box training needs --schema or --classifier for the schema")
        model = train_fcegan(None, cfg, seed=args.seed, history=history, schema=schema)
        rows = pd.DataFrame([r.instance for r in history.train])
        cdf = EmpiricalCdf({c: rows[c].to_numpy(dtype=float) for c in schema.continuous_columns})
    else:
        if not args.classifier:
            raise UserError("train-fcegan in classifier mode requires --classifier")
        loaded = load_checkpoint(args.classifier)
        if loaded.kind != KIND_CLASSIFIER:
            raise UserError(f"--classifier must point at a classifier checkpoint, got {loaded.kind}")
        if not args.data:
            raise UserError("train-fcegan in classifier mode requires --data")
        schema, rows = _load_data(args)
        s = split(rows, seed=args.seed)
        model = train_fcegan(s, cfg, seed=args.seed, classifier=loaded.model)
        cdf = loaded.cdf or EmpiricalCdf.fit(s.train, schema)
    save_fcegan(model, args.out, cdf=cdf)
    best = max((e["valid_fraction"] for e in model.curve), default=None)
    print(f"saved generator checkpoint to {args.out} (best validation validity: {best})")
    return 0


def cmd_train_critic(args, overrides) -> int:
    from .checkpoint import save_critic
    from .data import EmpiricalCdf, split
    from .gan import FceganConfig
    from .metrics import train_data_critic

    known_sections(overrides, {"critic"})
    schema, rows = _load_data(args)
    s = split(rows, seed=args.seed)
    cfg = FceganConfig(max_epochs=args.epochs or 30)
    apply_overrides(cfg, "critic", overrides)
    critic = train_data_critic(s.train, schema, config=cfg, seed=args.seed)
    save_critic(critic, args.out, cdf=EmpiricalCdf.fit(s.train, schema))
    print(f"saved data critic checkpoint to {args.out}")
    return 0


def _write_batch_outputs(batch, report, out_dir: str) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    frame = batch.rows.copy()
    frame["desired_class"] = batch.desired
    if batch.predicted is not None:
        frame["predicted_class"] = batch.predicted
        frame["valid"] = batch.valid
    frame.to_csv(out / "counterfactuals.csv", index=False)
    (out / "metrics.json").write_text(report.to_json())
    print(f"wrote {out / 'counterfactuals.csv'} and {out / 'metrics.json'}")


def cmd_generate(args, overrides) -> int:
    from .checkpoint import KIND_FCEGAN, load_checkpoint
    from .metrics import evaluate
    from .templates import make_template

    loaded = load_checkpoint(args.model)
    if loaded.kind != KIND_FCEGAN:
        raise UserError(f"generate needs a generator checkpoint, got {loaded.kind}")
    schema = loaded.schema
    instance = _load_instance(args.input, schema)
    template_spec = _read_template(args.template)
    template = make_template(
        schema, instance, template_spec["mutable"], template_spec["desired_class"]
    )
    rng = np.random.default_rng(args.seed)
    verifier = None
    if args.classifier:
        verifier = load_checkpoint(args.classifier).model
    batch = loaded.model.generate(instance, template, args.n, rng, classifier=verifier)
    critic = load_checkpoint(args.critic).model if args.critic else None
    report = evaluate(
        batch, pd.DataFrame([instance]), [template],
        cdf=loaded.cdf, critic=critic, schema=schema,
    )
    _write_batch_outputs(batch, report, args.out_dir)
    return 0


def cmd_optimize(args, overrides) -> int:
    from .checkpoint import KIND_CLASSIFIER, KIND_FCEGAN, load_checkpoint
    from .gan import CLS_ROLE_FULL
    from .metrics import evaluate
    from .optimizer import OptimizerConfig, optimize_batch
    from .templates import make_template

    known_sections(overrides, {"optimizer"})
    loaded = load_checkpoint(args.model)
    if loaded.kind == KIND_CLASSIFIER:
        classifier = loaded.model
    elif loaded.kind == KIND_FCEGAN and loaded.model.classifier is not None and (
        loaded.model.classifier_role == CLS_ROLE_FULL
    ):
        classifier = loaded.model.classifier
    else:
        raise UserError("optimize needs a classifier checkpoint (or a generator embedding one)")
    schema = classifier.schema
    instance = _load_instance(args.input, schema)
    template_spec = _read_template(args.template)
    template = make_template(
        schema, instance, template_spec["mutable"], template_spec["desired_class"]
    )
    cfg = OptimizerConfig(steps=args.steps, n_per_original=args.n)
    apply_overrides(cfg, "optimizer", overrides)
    critic = load_checkpoint(args.critic).model if args.critic else None
    batch = optimize_batch(
        classifier, pd.DataFrame([instance]), [template], cfg,
        critic=critic, rng=np.random.default_rng(args.seed),
    )
    report = evaluate(
        batch, pd.DataFrame([instance]), [template],
        cdf=loaded.cdf, critic=critic, schema=schema,
    )
    _write_batch_outputs(batch, report, args.out_dir)
    return 0


def cmd_evaluate(args, overrides) -> int:
    from .batch import CounterfactualBatch
    from .checkpoint import load_checkpoint
    from .metrics import evaluate
    from .templates import make_template

    loaded = load_checkpoint(args.classifier)
    classifier = loaded.model
    schema = classifier.schema
    originals = pd.read_csv(args.originals, skipinitialspace=True)
    candidates = pd.read_csv(args.candidates, skipinitialspace=True)
    template_spec = _read_template(args.template)
    templates = [
        make_template(schema, originals.iloc[i], template_spec["mutable"],
                      template_spec["desired_class"])
        for i in range(len(originals))
    ]
    group_col = "group_id" if "group_id" in candidates.columns else None
    group_ids = (
        candidates[group_col].to_numpy(dtype=int)
        if group_col
        else np.arange(len(candidates)) % len(originals)
    )
    rows = candidates[schema.feature_names]
    batch = CounterfactualBatch(
        rows=rows,
        encoded=classifier.encoder.encode(rows),
        desired=[templates[g].desired_class for g in group_ids],
        group_ids=group_ids,
    )
    critic = load_checkpoint(args.critic).model if args.critic else None
    report = evaluate(
        batch, originals, templates, classifier=classifier,
        cdf=loaded.cdf, critic=critic,
    )
    Path(args.out).write_text(report.to_json())
    print(f"wrote {args.out}")
    return 0


def cmd_bench(args, overrides) -> int:
    from .bench import (
        METHODS,
        BenchContext,
        run_flexibility_sweep,
        write_auc_bars_svg,
        write_flexibility_curves_svg,
    )
    from .classifier import ClassifierConfig
    from .data import split
    from .gan import FceganConfig
    from .optimizer import OptimizerConfig

    known_sections(overrides, {"classifier", "fcegan", "optimizer", "critic"})
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise UserError(f"unknown methods {unknown}; choose from {list(METHODS)}")
    schema, rows = _load_data(args)
    if args.cap_rows and len(rows) > args.cap_rows:
        rows = rows.head(args.cap_rows)
    s = split(rows, seed=args.seed)

    clf_cfg = apply_overrides(ClassifierConfig(), "classifier", overrides)
    fce_cfg = apply_overrides(FceganConfig(), "fcegan", overrides)
    opt_cfg = apply_overrides(OptimizerConfig(), "optimizer", overrides)
    critic_cfg = apply_overrides(FceganConfig(max_epochs=30), "critic", overrides)

    ctx = BenchContext.build(
        schema, s,
        desired_class=args.desired_class,
        seed=args.seed,
        classifier_config=clf_cfg,
        fcegan_config=fce_cfg,
        optimizer_config=opt_cfg,
        critic_config=critic_cfg,
        with_critic=not args.no_critic,
    )
    grid = [float(g) for g in args.grid.split(",")]
    seeds = list(range(args.seeds))
    results = []
    for method in methods:
        results.append(
            run_flexibility_sweep(
                ctx, method, grid=grid, seeds=seeds,
                n_per_instance=args.n_per_instance, cap=args.cap, out_dir=args.out,
            )
        )
    out = Path(args.out)
    write_flexibility_curves_svg(results, "valid_fraction", out / "valid_fraction_curves.svg")
    write_auc_bars_svg(results, "valid_fraction", out / "valid_fraction_auc.svg")
    print(f"wrote results to {out} (aggregate.csv, cells/, svg plots)")
    return 0


def cmd_serve(args, overrides) -> int:
    from .checkpoint import Registry
    from .service import serve

    registry = Registry(args.registry) if args.registry else Registry.from_env()
    serve(registry, host=args.host, port=args.port)
    return 0


def cmd_register(args, overrides) -> int:
    from .checkpoint import Registry

    registry = Registry(args.registry) if args.registry else Registry.from_env()
    linked = {}
    for pair in args.link or []:
        if "=" not in pair:
            raise UserError(f"--link expects role=model_id, got {pair!r}")
        role, other = pair.split("=", 1)
        linked[role] = other
    entry = registry.add(args.id, args.checkpoint, linked=linked)
    print(f"registered {entry.id} ({entry.kind}, schema {entry.schema_hash})")
    return 0


def build_parser() -> Parser:
    parser = Parser(prog="flexcf", description=__doc__)
    parser.add_argument("--seed", type=int, default=0, help="global random seed")
    parser.add_argument("--config", default=None, help="key=value config file")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="config override, repeatable")
    # the same flags are accepted after the subcommand; SUPPRESS keeps the
    # pre-subcommand values when the flag is absent there
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--config", default=argparse.SUPPRESS)
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    p = sub.add_parser("train-classifier", help="train the reference MLP classifier",
                       parents=[common])
    p.add_argument("--data", required=True)
    p.add_argument("--schema")
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--export-history", help="also write prediction records JSON")
    p.set_defaults(func=cmd_train_classifier)

    p = sub.add_parser("train-fcegan", help="train the counterfactual generator", parents=[common])
    p.add_argument("--data")
    p.add_argument("--schema")
    p.add_argument("--classifier")
    p.add_argument("--mode", choices=["classifier", "black-box"], default="classifier")
    p.add_argument("--history", help="prediction records JSON (black-box mode)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_fcegan)

    p = sub.add_parser("train-critic", help="train the independent data critic", parents=[common])
    p.add_argument("--data", required=True)
    p.add_argument("--schema")
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_critic)

    p = sub.add_parser("generate", help="generate counterfactuals for one instance", parents=[common])
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help="instance JSON or CSV (first row)")
    p.add_argument("--template", required=True, help="template JSON")
    p.add_argument("--n", type=int, default=5)
    p.add_argument("--classifier", help="verifier checkpoint for black-box models")
    p.add_argument("--critic", help="data critic checkpoint for fakeness")
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("optimize", help="gradient-descent counterfactual search", parents=[common])
    p.add_argument("--model", required=True, help="classifier checkpoint (or generator with one)")
    p.add_argument("--input", required=True)
    p.add_argument("--template", required=True)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--steps", type=int, default=30)
    p.add_argument("--critic")
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("evaluate", help="metric report for candidate rows", parents=[common])
    p.add_argument("--originals", required=True)
    p.add_argument("--candidates", required=True)
    p.add_argument("--template", required=True)
    p.add_argument("--classifier", required=True)
    p.add_argument("--critic")
    p.add_argument("--out", default="metrics.json")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", help="flexibility sweeps with AUC/SEM aggregation", parents=[common])
    p.add_argument("--data", required=True)
    p.add_argument("--schema")
    p.add_argument("--methods", required=True, help="comma-separated method names")
    p.add_argument("--grid", default="0.1,0.25,0.5,0.75,1.0")
    p.add_argument("--seeds", type=int, default=5, help="number of seeds (0..N-1)")
    p.add_argument("--cap", type=int, default=500, help="max evaluation instances")
    p.add_argument("--cap-rows", type=int, default=0, help="subsample the dataset first")
    p.add_argument("--n-per-instance", type=int, default=5)
    p.add_argument("--desired-class")
    p.add_argument("--no-critic", action="store_true", help="skip the fakeness critic")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("serve", help="run the HTTP generation service", parents=[common])
    p.add_argument("--registry")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8321)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("register", help="add a checkpoint to the model registry", parents=[common])
    p.add_argument("--registry")
    p.add_argument("--id", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--link", action="append", metavar="ROLE=MODEL_ID",
                   help="link a companion entry (classifier=..., critic=...)")
    p.set_defaults(func=cmd_register)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        overrides = read_overrides(args.config, args.set)
        return args.func(args, overrides)
    except UserError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (FileNotFoundError, json.JSONDecodeError, ValueError, KeyError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 130
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
