"""Labeled numeric datasets: CSV ingestion, synthetic blobs, row
normalization, and the deterministic splits the attack protocol needs.

A dataset is split 25/25/50 into target-train / target-test / shadow-pool.
The target model trains on the first quarter and is scored on the second;
the attacker never touches either and works entirely from the pool.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, IngestionError, ParameterError
from .numkit import derive_rng


@dataclass(frozen=True)
class SyntheticSpec:
    """Gaussian class blobs: c centers pairwise class_separation apart."""

    n: int
    input_dim: int
    class_count: int
    class_separation: float
    seed: int = 0

    def __post_init__(self):
        if self.class_count < 2:
            raise ParameterError("class_count must be at least 2")
        if self.n < 8 * self.class_count:
            raise ParameterError(
                f"n={self.n} too small: need at least 8 per class ({8 * self.class_count})"
            )
        if self.input_dim < self.class_count:
            raise ParameterError(
                "input_dim must be >= class_count so the simplex of centers fits"
            )
        if self.class_separation < 0:
            raise ParameterError("class_separation must be non-negative")


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray          # (n, d) float64
    labels: np.ndarray            # (n,) int64 in [0, class_count)
    class_count: int
    feature_bounds: np.ndarray    # (d, 2) observed per-feature (min, max)
    name: str = "dataset"
    row_scale: float = 1.0        # cumulative factor applied by normalization

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if f.ndim != 2:
            raise ParameterError("features must be a 2-D array")
        if y.shape != (f.shape[0],):
            raise ParameterError("labels must be 1-D with one entry per row")
        if f.shape[0] < 8:
            raise ParameterError("dataset needs at least 8 rows to be splittable")
        if not np.all(np.isfinite(f)):
            raise ParameterError("features must be finite")
        if self.class_count < 2:
            raise ParameterError("class_count must be at least 2")
        if y.min() < 0 or y.max() >= self.class_count:
            raise ParameterError("labels must lie in [0, class_count)")
        b = np.asarray(self.feature_bounds, dtype=np.float64)
        if b.shape != (f.shape[1], 2):
            raise ParameterError("feature_bounds must have shape (d, 2)")
        if np.any(f < b[:, 0] - 1e-12) or np.any(f > b[:, 1] + 1e-12):
            raise ParameterError("feature values fall outside recorded bounds")
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "feature_bounds", b)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]


def observed_bounds(features: np.ndarray) -> np.ndarray:
    """Per-feature (min, max) over the given rows, shape (d, 2)."""
    return np.stack([features.min(axis=0), features.max(axis=0)], axis=1)


def load_csv(path: str, label_column: str, class_count: int, name: str | None = None) -> Dataset:
    """Read a numeric CSV with a header row into a Dataset.

    Every non-label column must parse as a finite real; the label column must
    hold integers in [0, class_count). Errors name the offending data row
    (1-based, excluding the header) and column.
    """
    if class_count < 2:
        raise ParameterError("class_count must be at least 2")
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise IngestionError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path} is empty; a header row is required") from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise IngestionError(f"label column {label_column!r} not in header {header}")
        label_idx = header.index(label_column)
        feat_names = [h for i, h in enumerate(header) if i != label_idx]

        rows, labels = [], []
        for rownum, cells in enumerate(reader, start=1):
            if len(cells) != len(header):
                raise IngestionError(
                    f"expected {len(header)} cells, found {len(cells)}", row=rownum
                )
            feats = []
            for i, cell in enumerate(cells):
                colname = header[i]
                if i == label_idx:
                    try:
                        value = float(cell)
                    except ValueError:
                        raise IngestionError(
                            f"label {cell!r} is not numeric", row=rownum, column=colname
                        ) from None
                    if not value.is_integer():
                        raise IngestionError(
                            f"label {cell!r} is not an integer", row=rownum, column=colname
                        )
                    label = int(value)
                    if not 0 <= label < class_count:
                        raise IngestionError(
                            f"label {label} outside [0, {class_count})",
                            row=rownum,
                            column=colname,
                        )
                    labels.append(label)
                else:
                    try:
                        x = float(cell)
                    except ValueError:
                        raise IngestionError(
                            f"cell {cell!r} is not numeric", row=rownum, column=colname
                        ) from None
                    if not math.isfinite(x):
                        raise IngestionError(
                            f"cell {cell!r} is not finite", row=rownum, column=colname
                        )
                    feats.append(x)
            rows.append(feats)

    if not rows:
        raise IngestionError(f"{path} contains a header but no data rows")
    features = np.asarray(rows, dtype=np.float64)
    labels_arr = np.asarray(labels, dtype=np.int64)
    return Dataset(
        features=features,
        labels=labels_arr,
        class_count=class_count,
        feature_bounds=observed_bounds(features),
        name=name or os.path.splitext(os.path.basename(path))[0],
    )


def save_csv(ds: Dataset, path: str) -> None:
    """Write a Dataset as CSV (feature_0..feature_{d-1}, label) with enough
    digits that load_csv reads identical float64 values back."""
    header = [f"feature_{i}" for i in range(ds.input_dim)] + ["label"]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row, label in zip(ds.features, ds.labels):
            cells = [f"{x:.17g}" for x in row] + [str(int(label))]
            fh.write(",".join(cells) + "\n")


def _simplex_centers(class_count: int, input_dim: int, separation: float) -> np.ndarray:
    """c centers in R^d, pairwise exactly `separation` apart, centered at 0.

    Built from the regular simplex on the first c coordinates: the unit basis
    vectors have pairwise distance sqrt(2), so shifting to zero mean and
    scaling by separation/sqrt(2) gives the wanted geometry.
    """
    eye = np.eye(class_count)
    verts = eye - eye.mean(axis=0, keepdims=True)
    verts *= separation / math.sqrt(2.0)
    centers = np.zeros((class_count, input_dim))
    centers[:, :class_count] = verts
    return centers


def synthesize(spec: SyntheticSpec) -> Dataset:
    """Balanced Gaussian blobs with unit per-feature noise.

    Deterministic in spec.seed: same spec, same dataset.
    """
    rng = derive_rng(spec.seed, "dataset.synthesize")
    centers = _simplex_centers(spec.class_count, spec.input_dim, spec.class_separation)

    base = spec.n // spec.class_count
    counts = [base + (1 if k < spec.n % spec.class_count else 0) for k in range(spec.class_count)]
    labels = np.concatenate([np.full(cnt, k, dtype=np.int64) for k, cnt in enumerate(counts)])
    noise = rng.standard_normal((spec.n, spec.input_dim))
    features = centers[labels] + noise

    order = rng.permutation(spec.n)
    features, labels = features[order], labels[order]
    return Dataset(
        features=features,
        labels=labels,
        class_count=spec.class_count,
        feature_bounds=observed_bounds(features),
        name=f"synthetic-c{spec.class_count}-d{spec.input_dim}",
    )


def normalize_rows_to_unit_ball(ds: Dataset) -> Dataset:
    """Scale all rows by 1/max(1, max_i ||x_i||_2) so every row norm is <= 1.

    A single global factor, so relative geometry is unchanged. Idempotent:
    once the max norm is at most 1 (within 1e-12), nothing changes.
    """
    norms = np.sqrt(np.sum(ds.features**2, axis=1))
    max_norm = float(norms.max()) if ds.n else 0.0
    if max_norm <= 1.0 + 1e-12:
        return ds
    features = ds.features / max_norm
    return Dataset(
        features=features,
        labels=ds.labels,
        class_count=ds.class_count,
        feature_bounds=observed_bounds(features),
        name=ds.name,
        row_scale=ds.row_scale / max_norm,
    )


@dataclass(frozen=True)
class SplitPlan:
    """Index sets for target_train / target_test / shadow_pool (25/25/50)."""

    target_train: np.ndarray
    target_test: np.ndarray
    shadow_pool: np.ndarray
    seed: int = 0

    def __post_init__(self):
        parts = [
            np.asarray(self.target_train, dtype=np.int64),
            np.asarray(self.target_test, dtype=np.int64),
            np.asarray(self.shadow_pool, dtype=np.int64),
        ]
        merged = np.concatenate(parts)
        if len(np.unique(merged)) != len(merged):
            raise ConfigurationError("split sets overlap")
        object.__setattr__(self, "target_train", parts[0])
        object.__setattr__(self, "target_test", parts[1])
        object.__setattr__(self, "shadow_pool", parts[2])

    @property
    def n(self) -> int:
        return len(self.target_train) + len(self.target_test) + len(self.shadow_pool)


def make_split(ds: Dataset, seed: int) -> SplitPlan:
    """Deterministic shuffle, then floor quarters for the two target sets and
    the remainder (at least half) for the shadow pool."""
    if ds.n < 8:
        raise ParameterError(f"dataset too small to split: n={ds.n}")
    perm = derive_rng(seed, "dataset.split").permutation(ds.n)
    q = ds.n // 4
    return SplitPlan(
        target_train=perm[:q],
        target_test=perm[q : 2 * q],
        shadow_pool=perm[2 * q :],
        seed=seed,
    )
