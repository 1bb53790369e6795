"""Dense labeled feature matrices and their on-disk container.

A Dataset is written as a single self-describing binary file: magic,
length-prefixed JSON header (feature names, aggregation scheme, category
count, seed), then raw little-endian float64 rows and uint8 labels.
Saving and reloading is bit-exact.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"BYDS1\n"


@dataclass(eq=False)
class Dataset:
    """Feature matrix with binary buy labels (1 = buy).

    n_base_cols counts the leading engineered-feature columns (scalars
    plus description dims); columns from n_base_cols on are the
    category/time-bucket aggregation block NMF may replace.
    """

    rows: np.ndarray
    labels: np.ndarray
    feature_names: list[str]
    aggregation: str = "weekly"
    category_count: int = 0
    seed: int | None = None
    n_base_cols: int = 0

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        if self.rows.ndim != 2:
            raise ValueError("rows must be a 2-D matrix")
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        if not np.isfinite(self.rows).all():
            raise ValueError("rows must be finite")
        if self.labels.shape != (self.rows.shape[0],):
            raise ValueError("label count must equal row count")
        if not np.isin(self.labels, (0, 1)).all():
            raise ValueError("labels must be binary")
        if len(self.feature_names) != self.rows.shape[1]:
            raise ValueError("feature_names length must equal column count")
        if self.aggregation not in ("weekly", "semiweekly"):
            raise ValueError(f"unknown aggregation scheme '{self.aggregation}'")

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def d(self) -> int:
        return self.rows.shape[1]

    def positives(self) -> int:
        return int(self.labels.sum())

    def take(self, idx) -> "Dataset":
        """Row subset as a new Dataset (metadata preserved)."""
        idx = np.asarray(idx)
        return Dataset(
            rows=self.rows[idx].copy(),
            labels=self.labels[idx].copy(),
            feature_names=list(self.feature_names),
            aggregation=self.aggregation,
            category_count=self.category_count,
            seed=self.seed,
            n_base_cols=self.n_base_cols,
        )


def save_dataset(ds: Dataset, path) -> None:
    header = {
        "format": "buyintent-dataset",
        "version": 1,
        "n": ds.n,
        "d": ds.d,
        "feature_names": ds.feature_names,
        "aggregation": ds.aggregation,
        "category_count": ds.category_count,
        "seed": ds.seed,
        "n_base_cols": ds.n_base_cols,
    }
    payload = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(payload)))
        fh.write(payload)
        fh.write(np.ascontiguousarray(ds.rows, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(ds.labels, dtype=np.uint8).tobytes())


def load_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path}: not a dataset file")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        n, d = header["n"], header["d"]
        rows = np.frombuffer(fh.read(n * d * 8), dtype="<f8").reshape(n, d).copy()
        labels = np.frombuffer(fh.read(n), dtype=np.uint8).copy()
    return Dataset(
        rows=rows,
        labels=labels,
        feature_names=header["feature_names"],
        aggregation=header["aggregation"],
        category_count=header["category_count"],
        seed=header["seed"],
        n_base_cols=header["n_base_cols"],
    )


@dataclass(eq=False)
class Standardizer:
    """Per-column zero-mean unit-variance scaling, fit on training data
    only. Constant columns pass through unscaled."""

    mean: np.ndarray = field(default=None)
    std: np.ndarray = field(default=None)

    def fit(self, X: np.ndarray) -> "Standardizer":
        X = np.asarray(X, dtype=float)
        self.mean = X.mean(axis=0)
        std = X.std(axis=0)
        std[std == 0.0] = 1.0
        self.std = std
        return self

    def transform(self, X: np.ndarray) -> np.ndarray:
        if self.mean is None:
            raise ValueError("Standardizer not fitted")
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.mean.shape[0]:
            raise ValueError("column count does not match fitted statistics")
        return (X - self.mean) / self.std

    def to_dict(self) -> dict:
        return {"kind": "standardize", "mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        out = cls()
        out.mean = np.asarray(d["mean"], dtype=float)
        out.std = np.asarray(d["std"], dtype=float)
        return out


@dataclass(eq=False)
class RangeScaler:
    """Min-max scaling to [0, 1], fit on training data only.

    Sigmoid autoencoder and RBM trainers need inputs inside the unit
    interval; unseen data is clipped back into it after scaling.
    """

    lo: np.ndarray = field(default=None)
    span: np.ndarray = field(default=None)

    def fit(self, X: np.ndarray) -> "RangeScaler":
        X = np.asarray(X, dtype=float)
        self.lo = X.min(axis=0)
        span = X.max(axis=0) - self.lo
        span[span == 0.0] = 1.0
        self.span = span
        return self

    def transform(self, X: np.ndarray) -> np.ndarray:
        if self.lo is None:
            raise ValueError("RangeScaler not fitted")
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.lo.shape[0]:
            raise ValueError("column count does not match fitted statistics")
        return np.clip((X - self.lo) / self.span, 0.0, 1.0)

    def to_dict(self) -> dict:
        return {"kind": "range01", "lo": self.lo.tolist(), "span": self.span.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "RangeScaler":
        out = cls()
        out.lo = np.asarray(d["lo"], dtype=float)
        out.span = np.asarray(d["span"], dtype=float)
        return out


def scaler_from_dict(d: dict):
    if d is None:
        return None
    if d["kind"] == "standardize":
        return Standardizer.from_dict(d)
    if d["kind"] == "range01":
        return RangeScaler.from_dict(d)
    raise ValueError(f"unknown scaler kind '{d['kind']}'")
