"""CSV ingestion, splitting and reversible encoding between raw rows and model space."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .schema import CATEGORICAL, CONTINUOUS, DatasetSchema, SchemaError

logger = logging.getLogger(__name__)

# Cell contents treated as missing on ingestion (rows containing them are dropped).
MISSING_TOKENS = ["", " ", "?", "NA", "N/A", "NaN", "nan", "null"]

STD_EPS = 1e-8


class IngestError(ValueError):
    """A row failed to parse against the schema; carries the row index."""

    def __init__(self, message: str, row_index: int | None = None):
        super().__init__(message)
        self.row_index = row_index


@dataclass(frozen=True)
class SplitDataset:
    train: pd.DataFrame
    validation: pd.DataFrame
    test: pd.DataFrame
    split_seed: int


def load_csv(path, schema: DatasetSchema | None = None) -> tuple[DatasetSchema, pd.DataFrame]:
    """Load a CSV with a header row, dropping rows with any missing value.

    Without a schema, columns whose every value parses as a number become
    continuous, everything else categorical, and the last column is taken as
    the (categorical) target.
    """
    raw = pd.read_csv(
        path,
        dtype=str,
        skipinitialspace=True,
        na_values=MISSING_TOKENS,
        keep_default_na=True,
    )
    if raw.columns.size == 0:
        raise IngestError("empty CSV")
    n_before = len(raw)
    raw = raw.dropna(axis=0, how="any").reset_index(drop=True)
    if n_before - len(raw):
        logger.info("dropped %d rows with missing values", n_before - len(raw))

    if schema is None:
        schema = _infer_schema(raw)
    return schema, conform_rows(raw, schema)


def _infer_schema(raw: pd.DataFrame) -> DatasetSchema:
    target = str(raw.columns[-1])
    columns: list[tuple[str, str]] = []
    categories: dict[str, tuple[str, ...]] = {}
    for name in raw.columns[:-1]:
        values = raw[name]
        numeric = pd.to_numeric(values, errors="coerce")
        if not numeric.isna().any():
            columns.append((str(name), CONTINUOUS))
        else:
            columns.append((str(name), CATEGORICAL))
            categories[str(name)] = tuple(_ordered_unique(values))
    target_classes = tuple(_ordered_unique(raw[target]))
    if pd.to_numeric(raw[target], errors="coerce").notna().all() and len(target_classes) > 20:
        raise SchemaError(f"last column {target!r} looks continuous; supply an explicit schema")
    return DatasetSchema(
        columns=tuple(columns), categories=categories, target=target, target_classes=target_classes
    )


def _ordered_unique(values: pd.Series) -> list[str]:
    return sorted({str(v) for v in values})


def conform_rows(raw: pd.DataFrame, schema: DatasetSchema) -> pd.DataFrame:
    """Validate raw string rows against the schema and coerce dtypes."""
    wanted = schema.feature_names + [schema.target]
    missing = [c for c in wanted if c not in raw.columns]
    if missing:
        raise SchemaError(f"columns missing from data: {missing}")
    out = {}
    for name, kind in schema.columns:
        col = raw[name]
        if kind == CONTINUOUS:
            numeric = pd.to_numeric(col, errors="coerce")
            bad = numeric.isna() & col.notna()
            if bad.any():
                idx = int(np.flatnonzero(bad.to_numpy())[0])
                raise IngestError(
                    f"row {idx}: value {col.iloc[idx]!r} in continuous column {name!r} "
                    "is not numeric",
                    row_index=idx,
                )
            out[name] = numeric.astype(np.float64)
        else:
            values = col.astype(str)
            vocab = set(schema.categories[name])
            unknown = ~values.isin(vocab)
            if unknown.any():
                idx = int(np.flatnonzero(unknown.to_numpy())[0])
                raise SchemaError(
                    f"row {idx}: unknown category {values.iloc[idx]!r} in column {name!r}"
                )
            out[name] = values
    target = raw[schema.target].astype(str)
    unknown = ~target.isin(set(schema.target_classes))
    if unknown.any():
        idx = int(np.flatnonzero(unknown.to_numpy())[0])
        raise SchemaError(f"row {idx}: unknown target class {target.iloc[idx]!r}")
    out[schema.target] = target
    return pd.DataFrame(out, columns=wanted)


def split(rows: pd.DataFrame, seed: int) -> SplitDataset:
    """Deterministic 60-20-20 train/validation/test split."""
    n = len(rows)
    if n < 5:
        raise ValueError(f"need at least 5 rows to split, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(0.6 * n))
    n_val = int(round(0.2 * n))
    idx_train = perm[:n_train]
    idx_val = perm[n_train : n_train + n_val]
    idx_test = perm[n_train + n_val :]
    take = lambda idx: rows.iloc[idx].reset_index(drop=True)
    return SplitDataset(take(idx_train), take(idx_val), take(idx_test), split_seed=seed)


@dataclass(frozen=True)
class Block:
    """Slice of the encoded vector belonging to one schema column."""

    column: str
    kind: str
    offset: int
    width: int


@dataclass
class EncodedInstance:
    """A single instance in model space with its block map."""

    vector: np.ndarray
    block_map: tuple[Block, ...]
    transform_id: str


class Encoder:
    """Reversible mapping between raw feature rows and model-space vectors.

    ``standardize`` mode z-scores continuous columns and one-hot encodes
    categorical columns. ``gmm`` mode encodes each continuous column as a
    mixture-mode one-hot plus a within-mode scalar; mode selection at encode
    time samples from the responsibilities under a seeded generator.
    Immutable after fitting.
    """

    def __init__(self, schema: DatasetSchema, mode: str, params: dict, seed: int = 0):
        if mode not in ("standardize", "gmm"):
            raise ValueError(f"unknown transform mode {mode!r}")
        self.schema = schema
        self.mode = mode
        self.seed = seed
        self._params = params
        self.blocks: tuple[Block, ...] = self._build_blocks()
        self.dim = sum(b.width for b in self.blocks)
        self._block_by_column = {b.column: b for b in self.blocks}

    # -- fitting ------------------------------------------------------------

    @classmethod
    def fit(
        cls, rows: pd.DataFrame, schema: DatasetSchema, mode: str = "standardize", seed: int = 0
    ) -> "Encoder":
        if rows.empty:
            raise ValueError("cannot fit an encoder on an empty frame")
        params: dict = {"continuous": {}, "gmm": {}}
        for name in schema.continuous_columns:
            values = rows[name].to_numpy(dtype=np.float64)
            mean = float(values.mean())
            std = float(values.std())
            params["continuous"][name] = {
                "mean": mean,
                "std": max(std, STD_EPS),
                "min": float(values.min()),
                "max": float(values.max()),
            }
            if mode == "gmm":
                params["gmm"][name] = cls._fit_gmm_column(name, values, seed)
        return cls(schema, mode, params, seed=seed)

    @staticmethod
    def _fit_gmm_column(name: str, values: np.ndarray, seed: int) -> dict:
        from sklearn.mixture import BayesianGaussianMixture

        if values.std() < STD_EPS:
            logger.warning(
                "column %r is constant; gmm transform falls back to a single component", name
            )
            return {"weights": [1.0], "means": [float(values.mean())], "stds": [STD_EPS]}
        gm = BayesianGaussianMixture(
            n_components=min(10, len(np.unique(values))),
            weight_concentration_prior=1e-3,
            max_iter=500,
            random_state=seed,
        )
        gm.fit(values.reshape(-1, 1))
        keep = gm.weights_ > 5e-3
        weights = gm.weights_[keep]
        return {
            "weights": (weights / weights.sum()).tolist(),
            "means": gm.means_[keep, 0].tolist(),
            "stds": np.sqrt(gm.covariances_[keep, 0, 0]).tolist(),
        }

    def _build_blocks(self) -> tuple[Block, ...]:
        blocks = []
        offset = 0
        for name, kind in self.schema.columns:
            if kind == CONTINUOUS:
                width = 1 if self.mode == "standardize" else 1 + len(self._params["gmm"][name]["weights"])
            else:
                width = len(self.schema.categories[name])
            blocks.append(Block(name, kind, offset, width))
            offset += width
        return tuple(blocks)

    # -- introspection ------------------------------------------------------

    @property
    def transform_id(self) -> str:
        return self.mode

    def block(self, column: str) -> Block:
        try:
            return self._block_by_column[column]
        except KeyError:
            raise SchemaError(f"unknown column {column!r}") from None

    def continuous_stats(self, column: str) -> dict:
        return self._params["continuous"][column]

    def dim_mask(self, columns) -> np.ndarray:
        """Boolean mask over encoded dims covering the given columns."""
        mask = np.zeros(self.dim, dtype=bool)
        for col in columns:
            b = self.block(col)
            mask[b.offset : b.offset + b.width] = True
        return mask

    # -- encode / decode -----------------------------------------------------

    def encode(self, rows: pd.DataFrame, rng: np.random.Generator | None = None) -> np.ndarray:
        n = len(rows)
        out = np.zeros((n, self.dim), dtype=np.float64)
        if self.mode == "gmm" and rng is None:
            rng = np.random.default_rng(self.seed)
        for b in self.blocks:
            if b.kind == CATEGORICAL:
                vocab = self.schema.categories[b.column]
                index = {c: i for i, c in enumerate(vocab)}
                values = rows[b.column].astype(str)
                unknown = ~values.isin(index)
                if unknown.any():
                    bad = values[unknown].iloc[0]
                    raise SchemaError(f"unknown category {bad!r} in column {b.column!r}")
                cols = values.map(index).to_numpy()
                out[np.arange(n), b.offset + cols] = 1.0
            elif self.mode == "standardize":
                st = self._params["continuous"][b.column]
                x = rows[b.column].to_numpy(dtype=np.float64)
                out[:, b.offset] = (x - st["mean"]) / st["std"]
            else:
                self._encode_gmm_column(b, rows[b.column].to_numpy(dtype=np.float64), out, rng)
        return out

    def _encode_gmm_column(self, b: Block, x: np.ndarray, out: np.ndarray, rng) -> None:
        g = self._params["gmm"][b.column]
        means = np.asarray(g["means"])
        stds = np.asarray(g["stds"])
        weights = np.asarray(g["weights"])
        # responsibilities of each mode for each value
        z = (x[:, None] - means[None, :]) / stds[None, :]
        log_r = np.log(weights[None, :]) - 0.5 * z**2 - np.log(stds[None, :])
        log_r -= log_r.max(axis=1, keepdims=True)
        resp = np.exp(log_r)
        resp /= resp.sum(axis=1, keepdims=True)
        cum = resp.cumsum(axis=1)
        u = rng.random(len(x))
        modes = (u[:, None] > cum).sum(axis=1)
        scalar = (x - means[modes]) / (4.0 * stds[modes])
        out[:, b.offset] = np.clip(scalar, -1.0, 1.0)
        out[np.arange(len(x)), b.offset + 1 + modes] = 1.0

    def encode_row(self, row: pd.Series | dict, rng=None) -> np.ndarray:
        return self.encode(pd.DataFrame([dict(row)]), rng=rng)[0]

    def decode(self, arr: np.ndarray) -> pd.DataFrame:
        arr = np.atleast_2d(np.asarray(arr, dtype=np.float64))
        if arr.shape[1] != self.dim:
            raise ValueError(f"expected dim {self.dim}, got {arr.shape[1]}")
        out = {}
        for b in self.blocks:
            blk = arr[:, b.offset : b.offset + b.width]
            if b.kind == CATEGORICAL:
                vocab = self.schema.categories[b.column]
                out[b.column] = pd.Series(np.argmax(blk, axis=1)).map(dict(enumerate(vocab)))
            elif self.mode == "standardize":
                st = self._params["continuous"][b.column]
                out[b.column] = blk[:, 0] * st["std"] + st["mean"]
            else:
                g = self._params["gmm"][b.column]
                means = np.asarray(g["means"])
                stds = np.asarray(g["stds"])
                modes = np.argmax(blk[:, 1:], axis=1)
                out[b.column] = blk[:, 0] * 4.0 * stds[modes] + means[modes]
        return pd.DataFrame(out, columns=self.schema.feature_names)

    def harden(self, arr: np.ndarray) -> np.ndarray:
        """Project soft vectors to hard ones: argmax one-hot categoricals,
        continuous values clamped to the observed training range."""
        arr = np.array(np.atleast_2d(arr), dtype=np.float64, copy=True)
        for b in self.blocks:
            blk = arr[:, b.offset : b.offset + b.width]
            if b.kind == CATEGORICAL:
                hard = np.zeros_like(blk)
                hard[np.arange(len(blk)), np.argmax(blk, axis=1)] = 1.0
                arr[:, b.offset : b.offset + b.width] = hard
            elif self.mode == "standardize":
                st = self._params["continuous"][b.column]
                lo = (st["min"] - st["mean"]) / st["std"]
                hi = (st["max"] - st["mean"]) / st["std"]
                arr[:, b.offset] = np.clip(blk[:, 0], lo, hi)
            else:
                st = self._params["continuous"][b.column]
                g = self._params["gmm"][b.column]
                modes = np.argmax(blk[:, 1:], axis=1)
                hard = np.zeros_like(blk)
                hard[np.arange(len(blk)), 1 + modes] = 1.0
                means = np.asarray(g["means"])[modes]
                stds = np.asarray(g["stds"])[modes]
                raw = np.clip(blk[:, 0], -1.0, 1.0) * 4.0 * stds + means
                hard[:, 0] = (np.clip(raw, st["min"], st["max"]) - means) / (4.0 * stds)
                arr[:, b.offset : b.offset + b.width] = hard
        return arr

    def encoded_instance(self, row, rng=None) -> EncodedInstance:
        return EncodedInstance(self.encode_row(row, rng=rng), self.blocks, self.mode)

    # -- persistence ----------------------------------------------------------

    def to_dict(self) -> dict:
        return {"mode": self.mode, "seed": self.seed, "params": self._params,
                "schema": self.schema.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "Encoder":
        return cls(DatasetSchema.from_dict(d["schema"]), d["mode"], d["params"], seed=d["seed"])


class EmpiricalCdf:
    """Per-column empirical CDF with mid-rank tie handling, fitted on training rows."""

    def __init__(self, values: dict[str, np.ndarray]):
        self._values = {k: np.sort(np.asarray(v, dtype=np.float64)) for k, v in values.items()}

    @classmethod
    def fit(cls, rows: pd.DataFrame, schema: DatasetSchema) -> "EmpiricalCdf":
        return cls({c: rows[c].to_numpy(dtype=np.float64) for c in schema.continuous_columns})

    @property
    def columns(self) -> list[str]:
        return list(self._values)

    def evaluate(self, column: str, value) -> np.ndarray | float:
        if column not in self._values:
            raise KeyError(f"no cdf fitted for column {column!r}")
        v = self._values[column]
        q = np.asarray(value, dtype=np.float64)
        lo = np.searchsorted(v, q, side="left")
        hi = np.searchsorted(v, q, side="right")
        out = (lo + 0.5 * (hi - lo)) / len(v)
        return float(out) if np.isscalar(value) or out.ndim == 0 else out

    def to_dict(self) -> dict:
        return {k: v.tolist() for k, v in self._values.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "EmpiricalCdf":
        return cls({k: np.asarray(v) for k, v in d.items()})
