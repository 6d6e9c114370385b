"""Binary classification data: CSV ingest, [0,1] scaling and stratified splits."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with ``{-1, +1}`` labels.

    ``label_values`` keeps the raw label strings as ``(negative, positive)``
    so predictions can be mapped back.
    """

    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple
    label_values: tuple = ("-1", "1")

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels)
        if X.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        if y.shape != (X.shape[0],):
            raise ValueError(f"{X.shape[0]} feature rows but {y.shape} labels")
        if not np.all(np.isin(y, (-1, 1))):
            raise ValueError("labels must be -1 or +1")
        if len(self.feature_names) != X.shape[1]:
            raise ValueError("feature_names length does not match column count")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y.astype(np.int64))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n_samples(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    def subset(self, idx):
        idx = np.asarray(idx)
        return Dataset(self.features[idx], self.labels[idx], self.feature_names, self.label_values)

    def is_normalized(self):
        X = self.features
        return bool(np.all((X >= 0.0) & (X <= 1.0)))


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie strictly between 0 and 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


class MinMaxNormalizer(TransformerMixin, BaseEstimator):
    """Per-column min-max scaling onto [0, 1].

    Constant columns map to 0. Values outside the fitted range are clamped,
    which keeps data seen after fitting inside the unit box.
    """

    def __init__(self, clip=True):
        self.clip = clip

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        self.data_min_ = X.min(axis=0)
        self.data_max_ = X.max(axis=0)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "data_min_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} columns, got {X.shape[1]}")
        span = self.data_max_ - self.data_min_
        const = span == 0
        out = (X - self.data_min_) / np.where(const, 1.0, span)
        out[:, const] = 0.0
        if self.clip:
            np.clip(out, 0.0, 1.0, out=out)
        return out


def read_table(path, label_column):
    """Parse a headed CSV into raw float features, raw label strings and names."""
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if label_column not in header:
            raise ValueError(f"{path}: no column named {label_column!r}")
        li = header.index(label_column)
        names = [h for k, h in enumerate(header) if k != li]
        rows, raw_labels = [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(rec)}")
            row = []
            for k, cell in enumerate(rec):
                if k == li:
                    continue
                cell = cell.strip()
                try:
                    v = float(cell)
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: non-numeric value {cell!r} "
                                     f"in column {header[k]!r}") from None
                if not math.isfinite(v):
                    raise ValueError(f"{path}:{lineno}: missing or non-finite value in {header[k]!r}")
                row.append(v)
            rows.append(row)
            label = rec[li].strip()
            if not label:
                raise ValueError(f"{path}:{lineno}: missing label")
            raw_labels.append(label)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return np.asarray(rows, float).reshape(len(rows), len(names)), raw_labels, names


def encode_labels(raw_labels):
    """Map two distinct raw labels to -1 (lexicographically smaller) and +1."""
    values = sorted(set(raw_labels))
    if len(values) != 2:
        raise ValueError(f"expected exactly two label values, found {len(values)}: {values[:5]}")
    neg = values[0]
    y = np.array([-1 if v == neg else 1 for v in raw_labels], dtype=np.int64)
    return y, (values[0], values[1])


def load_csv(path, label_column):
    """Read ``path`` and min-max normalise every feature over all rows."""
    X, raw, names = read_table(path, label_column)
    y, values = encode_labels(raw)
    X = MinMaxNormalizer().fit_transform(X)
    return Dataset(X, y, tuple(names), values)


def _round_half_up(v):
    return int(math.floor(v + 0.5))


def split_indices(labels, spec):
    """Stratified train/test index split.

    Per-class quotas use largest remainders so the train side has exactly
    ``round(train_fraction * n)`` rows, and every class present gets at
    least one training row.
    """
    labels = np.asarray(labels)
    n = labels.size
    if n == 0:
        raise ValueError("cannot split an empty dataset")
    n_train = _round_half_up(spec.train_fraction * n)
    if n_train <= 0 or n_train >= n:
        raise ValueError(f"train_fraction {spec.train_fraction} leaves an empty side for {n} rows")
    classes = np.unique(labels)
    counts = np.array([(labels == c).sum() for c in classes])
    quota = counts * n_train / n
    take = np.floor(quota).astype(int)
    take = np.maximum(take, np.minimum(1, counts))
    order = sorted(range(len(classes)), key=lambda k: (-(quota[k] - math.floor(quota[k])), k))
    k = 0
    while take.sum() < n_train:
        c = order[k % len(order)]
        if take[c] < counts[c]:
            take[c] += 1
        k += 1
    while take.sum() > n_train:
        c = int(np.argmax(take - quota))
        take[c] -= 1
    rng = np.random.default_rng(spec.seed)
    train = []
    for c, t in zip(classes, take):
        idx = np.flatnonzero(labels == c)
        rng.shuffle(idx)
        train.extend(idx[:t].tolist())
    train = np.sort(np.asarray(train, dtype=np.int64))
    mask = np.ones(n, bool)
    mask[train] = False
    return train, np.flatnonzero(mask)


def split(data, spec):
    """Partition ``data`` into (train, test) according to ``spec``."""
    tr, te = split_indices(data.labels, spec)
    return data.subset(tr), data.subset(te)


def load_split(path, label_column, spec):
    """Load, split, then scale both sides with training-split statistics.

    Test values are clamped to [0, 1] after scaling.
    """
    X, raw, names = read_table(path, label_column)
    y, values = encode_labels(raw)
    tr, te = split_indices(y, spec)
    norm = MinMaxNormalizer().fit(X[tr])
    train = Dataset(norm.transform(X[tr]), y[tr], tuple(names), values)
    test = Dataset(norm.transform(X[te]), y[te], tuple(names), values)
    return train, test, norm
