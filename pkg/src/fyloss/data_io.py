"""Multi-label datasets in sparse text format.

One sample per line::

    <label>[,<label>]* <idx>:<val> <idx>:<val> ...

A line that starts with whitespace has no labels. Labels may carry weights
(``3:0.25``); unweighted labels get weight 1. Blank lines and lines starting
with ``#`` are skipped.

Raw data (:class:`RawDataset`) and preprocessed data (:class:`Dataset`) are
different types: only raw data can be standardized, so a dataset cannot be
standardized twice.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import EmptyAfterFiltering, IndexOutOfDeclaredRange, ParseError

FORMAT_VERSION = 1
# columns whose standard deviation is below this are treated as constant
CONSTANT_STD = 1e-12


class SplitTag(str, enum.Enum):
    TRAIN = "train"
    VALIDATION = "validation"
    TEST = "test"


@dataclass(frozen=True)
class RawDataset:
    """Parsed but unprocessed samples.

    ``labels[i]`` maps label index to (unnormalized) weight; it is empty for
    label-free samples.
    """

    X: sp.csr_matrix
    labels: tuple
    n_labels: int

    def __post_init__(self):
        object.__setattr__(self, "X", sp.csr_matrix(self.X, dtype=float))
        object.__setattr__(self, "labels", tuple(dict(lab) for lab in self.labels))
        if self.X.shape[0] != len(self.labels):
            raise ValueError("feature and label row counts differ")

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def n_features(self):
        return self.X.shape[1]

    def subset(self, rows):
        rows = np.asarray(rows, dtype=int)
        return RawDataset(self.X[rows], tuple(self.labels[i] for i in rows), self.n_labels)

    def to_dict(self):
        rows = []
        for i in range(self.n):
            start, stop = self.X.indptr[i], self.X.indptr[i + 1]
            rows.append({
                "labels": {str(k): w for k, w in self.labels[i].items()},
                "features": {str(j): float(v) for j, v in
                             zip(self.X.indices[start:stop], self.X.data[start:stop])},
            })
        return {"format_version": FORMAT_VERSION, "n_features": self.n_features,
                "n_labels": self.n_labels, "rows": rows}

    @classmethod
    def from_dict(cls, data):
        _check_version(data)
        p = data["n_features"]
        indptr, indices, values, labels = [0], [], [], []
        for row in data["rows"]:
            feats = sorted((int(j), float(v)) for j, v in row["features"].items())
            indices.extend(j for j, _ in feats)
            values.extend(v for _, v in feats)
            indptr.append(len(indices))
            labels.append({int(k): float(w) for k, w in row["labels"].items()})
        X = sp.csr_matrix((values, indices, indptr), shape=(len(labels), p))
        return cls(X, tuple(labels), data["n_labels"])


def _check_version(data):
    version = data.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported format_version {version!r}")


# --------------------------------------------------------------------------
# parsing

def _parse_index(token, lineno, col, base, limit, what):
    try:
        idx = int(token)
    except ValueError:
        raise ParseError(lineno, col, f"bad {what} index {token!r}") from None
    idx -= base
    if idx < 0 or (limit is not None and idx >= limit):
        raise IndexOutOfDeclaredRange(
            f"line {lineno}, column {col}: {what} index {token} outside declared range")
    return idx


def _parse_value(token, lineno, col):
    try:
        value = float(token)
    except ValueError:
        raise ParseError(lineno, col, f"bad value {token!r}") from None
    if not math.isfinite(value):
        raise ParseError(lineno, col, f"non-finite value {token!r}")
    return value


def _tokens(line):
    """Yield ``(column, token)`` pairs with 1-based columns."""
    col = 0
    for tok in line.split():
        col = line.index(tok, col)
        yield col + 1, tok
        col += len(tok)


def _parse_labels(token, lineno, col, base, n_labels):
    labels = {}
    offset = 0
    for part in token.split(","):
        pcol = col + offset
        offset += len(part) + 1
        if not part:
            raise ParseError(lineno, pcol, "empty label")
        name, sep, weight = part.partition(":")
        k = _parse_index(name, lineno, pcol, base, n_labels, "label")
        w = _parse_value(weight, lineno, pcol + len(name) + 1) if sep else 1.0
        if w < 0:
            raise ParseError(lineno, pcol, "negative label weight")
        if k in labels:
            raise ParseError(lineno, pcol, f"duplicate label {name}")
        labels[k] = w
    return labels


def parse_lines(lines, one_based=False, n_features=None, n_labels=None) -> RawDataset:
    """Parse an iterable of text lines; see :func:`parse_multilabel`."""
    base = 1 if one_based else 0
    indptr, indices, values, labels = [0], [], [], []
    for lineno, line in enumerate(lines, start=1):
        line = line.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        toks = list(_tokens(line))
        row_labels = {}
        if not line[0].isspace():
            col, tok = toks.pop(0)
            row_labels = _parse_labels(tok, lineno, col, base, n_labels)
        seen = set()
        for col, tok in toks:
            name, sep, val = tok.partition(":")
            if not sep:
                raise ParseError(lineno, col, f"expected <idx>:<val>, got {tok!r}")
            j = _parse_index(name, lineno, col, base, n_features, "feature")
            if j in seen:
                raise ParseError(lineno, col, f"duplicate feature {name}")
            seen.add(j)
            indices.append(j)
            values.append(_parse_value(val, lineno, col + len(name) + 1))
        indptr.append(len(indices))
        labels.append(row_labels)

    if n_features is None:
        n_features = max(indices, default=-1) + 1
    if n_labels is None:
        n_labels = max((max(lab) for lab in labels if lab), default=-1) + 1
    X = sp.csr_matrix((values, indices, indptr), shape=(len(labels), n_features))
    X.sort_indices()
    X.eliminate_zeros()
    return RawDataset(X, tuple(labels), n_labels)


def parse_multilabel(path, one_based=False, n_features=None, n_labels=None) -> RawDataset:
    """Read a multi-label file.

    ``one_based`` applies to both feature and label indices. When
    ``n_features`` or ``n_labels`` is given, indices beyond it raise
    :class:`IndexOutOfDeclaredRange`; otherwise they are inferred.
    """
    with open(path, encoding="utf-8") as fh:
        return parse_lines(fh, one_based, n_features, n_labels)


def format_lines(raw: RawDataset, one_based=False):
    """Inverse of :func:`parse_lines`, with values at 17 significant digits."""
    base = 1 if one_based else 0
    X = raw.X
    for i in range(raw.n):
        labs = raw.labels[i]
        if all(w == 1.0 for w in labs.values()):
            head = ",".join(str(k + base) for k in labs)
        else:
            head = ",".join(f"{k + base}:{w:.17g}" for k, w in labs.items())
        start, stop = X.indptr[i], X.indptr[i + 1]
        feats = " ".join(f"{j + base}:{v:.17g}"
                         for j, v in zip(X.indices[start:stop], X.data[start:stop]))
        if not head and not feats:
            # a blank line would be skipped; an explicit zero keeps the row
            feats = f"{base}:0"
        yield f"{head} {feats}".rstrip() if head else f" {feats}"


def write_multilabel(path, raw: RawDataset, one_based=False):
    with open(path, "w", encoding="utf-8") as fh:
        for line in format_lines(raw, one_based):
            fh.write(line + "\n")


# --------------------------------------------------------------------------
# standardization

@dataclass(frozen=True)
class FeatureStats:
    """Per-column mean and standard deviation of a training split."""

    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray

    @classmethod
    def fit(cls, X):
        X = sp.csr_matrix(X, dtype=float)
        n = X.shape[0]
        mean = np.asarray(X.sum(axis=0)).ravel() / n
        # sum of squared deviations: stored entries plus the implicit zeros
        C = X.tocsc()
        dev = C.copy()
        dev.data = (dev.data - np.repeat(mean, np.diff(C.indptr))) ** 2
        nnz = np.diff(C.indptr)
        ss = np.asarray(dev.sum(axis=0)).ravel() + (n - nnz) * mean ** 2
        std = np.sqrt(ss / n)
        constant = std <= CONSTANT_STD * np.maximum(1.0, np.abs(mean))
        return cls(mean, np.where(constant, 1.0, std), constant)

    @property
    def scale(self):
        """Multiplier applied after centering; zero for constant columns."""
        return np.where(self.constant, 0.0, 1.0 / self.std)

    def to_dict(self):
        return {"format_version": FORMAT_VERSION, "mean": self.mean.tolist(),
                "std": self.std.tolist(), "constant": self.constant.tolist()}

    @classmethod
    def from_dict(cls, data):
        _check_version(data)
        return cls(np.asarray(data["mean"], float), np.asarray(data["std"], float),
                   np.asarray(data["constant"], bool))


class StandardizedMatrix:
    """``(X - mean) * scale`` for a sparse ``X``, never densified.

    Supports ``Z @ B``, ``Z.T @ C``, row selection and ``toarray()``.
    """

    def __init__(self, X, stats: FeatureStats, transposed=False):
        self.X = sp.csr_matrix(X, dtype=float)
        self.stats = stats
        self._scale = stats.scale
        self._shift = stats.mean * self._scale
        self._transposed = transposed

    @property
    def shape(self):
        n, p = self.X.shape
        return (p, n) if self._transposed else (n, p)

    @property
    def T(self):
        return StandardizedMatrix(self.X, self.stats, not self._transposed)

    def __matmul__(self, B):
        B = np.asarray(B, dtype=float)
        if not self._transposed:
            scaled = B * self._scale[:, None] if B.ndim == 2 else B * self._scale
            return self.X @ scaled - self._shift @ B
        out = self.X.T @ B
        col = B.sum(axis=0)
        if B.ndim == 2:
            return out * self._scale[:, None] - np.outer(self._shift, col)
        return out * self._scale - self._shift * col

    def __getitem__(self, rows):
        if self._transposed:
            raise TypeError("row selection on a transposed view")
        return StandardizedMatrix(self.X[rows], self.stats)

    def toarray(self):
        dense = (self.X.toarray() - self.stats.mean) * self._scale
        return dense.T if self._transposed else dense


@dataclass(frozen=True)
class Dataset:
    """Preprocessed samples: standardized features and row-stochastic labels."""

    X: StandardizedMatrix
    Y: np.ndarray
    feature_stats: FeatureStats
    split_tag: SplitTag = SplitTag.TRAIN
    dropped: int = field(default=0, compare=False)

    @property
    def n(self):
        return self.Y.shape[0]

    def subset(self, rows, tag):
        rows = np.asarray(rows, dtype=int)
        return Dataset(self.X[rows], self.Y[rows], self.feature_stats, SplitTag(tag))


def label_proportions(labels, n_labels):
    """Rows of L1-normalized label weights; equal weights give ``1/k`` each."""
    Y = np.zeros((len(labels), n_labels))
    for i, lab in enumerate(labels):
        for k, w in lab.items():
            Y[i, k] = w
    totals = Y.sum(axis=1, keepdims=True)
    return Y / np.where(totals > 0, totals, 1.0)


def preprocess(raw: RawDataset, stats: FeatureStats | None = None, split_tag=None) -> Dataset:
    """Drop label-free rows, standardize features and normalize labels.

    Without ``stats`` they are estimated from ``raw`` (a training split);
    validation and test splits should pass the training statistics.
    """
    if not isinstance(raw, RawDataset):
        raise TypeError("preprocess takes a RawDataset; data is already standardized")
    Y = label_proportions(raw.labels, raw.n_labels)
    keep = np.flatnonzero(Y.sum(axis=1) > 0)
    if keep.size == 0:
        raise EmptyAfterFiltering("no sample has a label")
    X = raw.X[keep]
    Y = Y[keep]
    if np.any(np.abs(Y.sum(axis=1) - 1.0) > 1e-9):
        raise AssertionError("label proportions off the simplex")
    if stats is None:
        stats = FeatureStats.fit(X)
        tag = SplitTag.TRAIN if split_tag is None else SplitTag(split_tag)
    else:
        if stats.mean.shape[0] != raw.n_features:
            raise ValueError("statistics do not match the feature count")
        tag = SplitTag.TEST if split_tag is None else SplitTag(split_tag)
    return Dataset(StandardizedMatrix(X, stats), Y, stats, tag, raw.n - keep.size)


# --------------------------------------------------------------------------
# splitting

def split_sizes(n, fractions):
    """Floor of each share, then one extra for the largest remainders.

    Ties go to the earlier split.
    """
    fractions = np.asarray(fractions, dtype=float)
    if np.any(fractions <= 0) or abs(fractions.sum() - 1.0) > 1e-9:
        raise ValueError("fractions must be positive and sum to 1")
    exact = n * fractions
    sizes = np.floor(exact + 1e-9).astype(int)
    rest = exact - sizes
    order = sorted(range(len(sizes)), key=lambda i: (-rest[i], i))
    for i in order[: n - sizes.sum()]:
        sizes[i] += 1
    return tuple(int(s) for s in sizes)


def split(dataset, fractions=(0.6, 0.2, 0.2), seed=0):
    """Seeded shuffle, then contiguous train/validation/test partition.

    Works on raw data (split first, then preprocess with training
    statistics) and on processed data.
    """
    if len(fractions) != 3:
        raise ValueError("expected three fractions")
    sizes = split_sizes(dataset.n, fractions)
    perm = np.random.default_rng(seed).permutation(dataset.n)
    bounds = np.cumsum((0,) + sizes)
    parts = [perm[bounds[i]:bounds[i + 1]] for i in range(3)]
    if isinstance(dataset, Dataset):
        return tuple(dataset.subset(rows, tag) for rows, tag in zip(parts, SplitTag))
    return tuple(dataset.subset(rows) for rows in parts)


# --------------------------------------------------------------------------
# summaries and JSON

def dataset_summary(raw: RawDataset):
    """``n``, ``p``, ``d`` and the average number of labels per sample."""
    counts = [len(lab) for lab in raw.labels]
    return {
        "n": raw.n,
        "p": raw.n_features,
        "d": raw.n_labels,
        "avg_labels": float(np.mean(counts)) if counts else 0.0,
        "unlabeled": sum(c == 0 for c in counts),
    }


def save_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj.to_dict(), fh)


def load_raw_json(path) -> RawDataset:
    with open(path, encoding="utf-8") as fh:
        return RawDataset.from_dict(json.load(fh))


def load_stats_json(path) -> FeatureStats:
    with open(path, encoding="utf-8") as fh:
        return FeatureStats.from_dict(json.load(fh))
