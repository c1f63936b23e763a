"""Data model, CSV ingestion, unit scaling and the pure/adulterant view.

A sample is a fixed-length feature vector (one chromatogram) carrying a
non-empty set of oil labels. Pure oils carry one label, mixtures carry two
or more, optionally with their true mixing fractions.
"""

from __future__ import annotations

import csv
import math
import os
import tempfile
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

RATIO_TOL_EXAMPLE = 1e-9
RATIO_TOL_CSV = 1e-6


class DataError(ValueError):
    """Raised for malformed input data."""


@dataclass(frozen=True)
class LabelSpace:
    names: Tuple[str, ...]

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        if not names:
            raise DataError("label space must contain at least one label")
        for n in names:
            if not n or not isinstance(n, str):
                raise DataError(f"invalid label name {n!r}")
            if any(c in n for c in ",|:\t\n\r"):
                raise DataError(f"label name {n!r} contains a reserved character")
        if len(set(names)) != len(names):
            raise DataError("label names must be unique")

    @property
    def L(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise DataError(f"unknown label name {name!r}") from None

    def __len__(self):
        return len(self.names)


@dataclass(frozen=True)
class Example:
    features: np.ndarray
    labels: frozenset
    ratios: Optional[Dict[int, float]] = None
    id: str = ""

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=float)
        if feats.ndim != 1:
            raise DataError(f"example {self.id!r}: features must be a vector")
        if not np.all(np.isfinite(feats)):
            raise DataError(f"example {self.id!r}: non-finite feature")
        feats.setflags(write=False)
        object.__setattr__(self, "features", feats)
        labels = frozenset(int(l) for l in self.labels)
        if not labels:
            raise DataError(f"example {self.id!r}: empty label set")
        object.__setattr__(self, "labels", labels)
        if self.ratios is not None:
            ratios = {int(k): float(v) for k, v in self.ratios.items()}
            if set(ratios) != labels:
                raise DataError(f"example {self.id!r}: ratio keys differ from labels")
            if any(not (0.0 < v <= 1.0) for v in ratios.values()):
                raise DataError(f"example {self.id!r}: ratios must lie in (0, 1]")
            if abs(sum(ratios.values()) - 1.0) > RATIO_TOL_EXAMPLE:
                raise DataError(f"example {self.id!r}: ratios sum to {sum(ratios.values())}")
            object.__setattr__(self, "ratios", ratios)

    @property
    def is_mixture(self) -> bool:
        return len(self.labels) >= 2

    def __eq__(self, other):
        if not isinstance(other, Example):
            return NotImplemented
        return (
            self.id == other.id
            and self.labels == other.labels
            and self.ratios == other.ratios
            and np.array_equal(self.features, other.features)
        )

    __hash__ = None


@dataclass(frozen=True)
class Dataset:
    space: LabelSpace
    examples: Tuple[Example, ...]
    scaling: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        examples = tuple(self.examples)
        object.__setattr__(self, "examples", examples)
        if not examples:
            raise DataError("dataset must contain at least one example")
        d = examples[0].features.shape[0]
        for ex in examples:
            if ex.features.shape[0] != d:
                raise DataError(f"example {ex.id!r} has dimension {ex.features.shape[0]}, expected {d}")
            if max(ex.labels) >= self.space.L or min(ex.labels) < 0:
                raise DataError(f"example {ex.id!r} has a label outside the label space")

    @property
    def N(self) -> int:
        return len(self.examples)

    @property
    def d(self) -> int:
        return self.examples[0].features.shape[0]

    @property
    def X(self) -> np.ndarray:
        return np.vstack([ex.features for ex in self.examples])

    @property
    def ids(self) -> List[str]:
        return [ex.id for ex in self.examples]

    @property
    def label_sets(self) -> List[frozenset]:
        return [ex.labels for ex in self.examples]

    def indicator(self) -> np.ndarray:
        """N x L 0/1 label indicator matrix."""
        Y = np.zeros((self.N, self.space.L), dtype=int)
        for i, ex in enumerate(self.examples):
            Y[i, sorted(ex.labels)] = 1
        return Y

    def subset(self, indices: Sequence[int]) -> "Dataset":
        return Dataset(self.space, tuple(self.examples[i] for i in indices))

    def with_features(self, X: np.ndarray, scaling=None) -> "Dataset":
        X = np.asarray(X, dtype=float)
        if X.shape[0] != self.N:
            raise DataError("row count mismatch")
        examples = tuple(
            Example(X[i], ex.labels, ex.ratios, ex.id) for i, ex in enumerate(self.examples)
        )
        return Dataset(self.space, examples, scaling)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.space == other.space and self.examples == other.examples

    __hash__ = None


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------


def _parse_labels(field_value: str, space: LabelSpace, row: int):
    labels = []
    ratios = {}
    has_ratio = []
    for part in field_value.split("|"):
        part = part.strip()
        if not part:
            raise DataError(f"row {row}: empty label entry")
        if ":" in part:
            name, _, value = part.partition(":")
            try:
                r = float(value)
            except ValueError:
                raise DataError(f"row {row}: bad ratio {value!r}") from None
            has_ratio.append(True)
        else:
            name, r = part, None
            has_ratio.append(False)
        try:
            idx = space.index(name.strip())
        except DataError as exc:
            raise DataError(f"row {row}: {exc}") from None
        if idx in labels:
            raise DataError(f"row {row}: duplicate label {name!r}")
        labels.append(idx)
        if r is not None:
            ratios[idx] = r

    if not any(has_ratio):
        return labels, None
    if not all(has_ratio):
        raise DataError(f"row {row}: ratios must be given for all labels or none")
    total = sum(ratios.values())
    if abs(total - 1.0) > RATIO_TOL_CSV or not all(math.isfinite(v) for v in ratios.values()):
        raise DataError(f"row {row}: ratios sum to {total:g}, expected 1")
    if any(v <= 0 or v > 1 for v in ratios.values()):
        raise DataError(f"row {row}: ratio outside (0, 1]")
    # absorb rounding within the CSV tolerance so the Example invariant holds
    if abs(total - 1.0) > RATIO_TOL_EXAMPLE:
        ratios = {k: v / total for k, v in ratios.items()}
    return labels, ratios


def load_csv(path, space: LabelSpace) -> Dataset:
    """Read a dataset in the ``id,labels,f0,...`` CSV layout."""
    examples = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if len(header) < 3 or header[0] != "id" or header[1] != "labels":
            raise DataError(f"{path}: header must start with 'id,labels' and list features")
        d = len(header) - 2
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 2:
                raise DataError(f"row {row_no}: expected {d + 2} fields, got {len(row)}")
            labels, ratios = _parse_labels(row[1], space, row_no)
            try:
                feats = np.array([float(v) for v in row[2:]])
            except ValueError:
                raise DataError(f"row {row_no}: non-numeric feature") from None
            if not np.all(np.isfinite(feats)):
                raise DataError(f"row {row_no}: non-finite feature")
            examples.append(Example(feats, labels, ratios, row[0]))
    if not examples:
        raise DataError(f"{path}: no data rows")
    return Dataset(space, tuple(examples))


def read_feature_rows(path) -> Tuple[Tuple[str, ...], np.ndarray]:
    """Ids and feature matrix of a dataset CSV; the labels column may be empty."""
    ids, rows = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 3 or header[:2] != ["id", "labels"]:
            raise DataError(f"{path}: header must start with 'id,labels' and list features")
        d = len(header) - 2
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 2:
                raise DataError(f"row {row_no}: expected {d + 2} fields, got {len(row)}")
            try:
                feats = [float(v) for v in row[2:]]
            except ValueError:
                raise DataError(f"row {row_no}: non-numeric feature") from None
            ids.append(row[0])
            rows.append(feats)
    if not rows:
        raise DataError(f"{path}: no data rows")
    X = np.array(rows)
    if not np.all(np.isfinite(X)):
        raise DataError(f"{path}: non-finite feature")
    return tuple(ids), X


def label_names_in(path) -> Tuple[str, ...]:
    """Distinct label names used in a CSV file, in first-seen order."""
    seen: dict = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        for row in reader:
            if len(row) < 2:
                continue
            for part in row[1].split("|"):
                name = part.split(":", 1)[0].strip()
                if name:
                    seen.setdefault(name, None)
    return tuple(seen)


def format_labels(ex: Example, space: LabelSpace) -> str:
    parts = []
    for l in sorted(ex.labels):
        if ex.ratios is None:
            parts.append(space.names[l])
        else:
            parts.append(f"{space.names[l]}:{ex.ratios[l]!r}")
    return "|".join(parts)


def atomic_write_text(path, text: str):
    """Write ``text`` to ``path`` through a temp file and rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps_csv(dataset: Dataset) -> str:
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["id", "labels"] + [f"f{j}" for j in range(dataset.d)])
    for ex in dataset.examples:
        writer.writerow([ex.id, format_labels(ex, dataset.space)] + [repr(float(v)) for v in ex.features])
    return buf.getvalue()


def save_csv(dataset: Dataset, path):
    atomic_write_text(path, dumps_csv(dataset))


# --------------------------------------------------------------------------
# Scaling
# --------------------------------------------------------------------------


def _unit_scale(X, lo, hi):
    span = hi - lo
    const = span == 0
    safe = np.where(const, 1.0, span)
    out = 2.0 * (X - lo) / safe - 1.0
    out[:, const] = 0.0
    return out


class UnitScaler(TransformerMixin, BaseEstimator):
    """Map each attribute affinely onto [-1, +1] using training min/max.

    Constant attributes map to 0. Values outside the training range are
    not clamped, so test data may land outside [-1, +1].
    """

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
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return _unit_scale(X, self.data_min_, self.data_max_)

    @property
    def scaling_(self):
        return np.column_stack([self.data_min_, self.data_max_])

    @classmethod
    def from_scaling(cls, scaling):
        scaling = np.asarray(scaling, dtype=float)
        obj = cls()
        obj.data_min_ = scaling[:, 0].copy()
        obj.data_max_ = scaling[:, 1].copy()
        obj.n_features_in_ = scaling.shape[0]
        return obj


def scale_to_unit(dataset: Dataset) -> Dataset:
    """Scale every attribute to [-1, +1]; the (min, max) pairs go to ``scaling``."""
    scaler = UnitScaler().fit(dataset.X)
    return dataset.with_features(scaler.transform(dataset.X), scaler.scaling_)


def apply_scaling(dataset: Dataset, scaling) -> Dataset:
    """Scale ``dataset`` with (min, max) pairs recorded on other data."""
    scaler = UnitScaler.from_scaling(scaling)
    return dataset.with_features(scaler.transform(dataset.X), scaler.scaling_)


def binary_view(dataset: Dataset) -> List[Tuple[np.ndarray, int]]:
    """Pairs ``(features, sign)`` with +1 for mixtures and -1 for pure samples."""
    return [(ex.features, 1 if len(ex.labels) >= 2 else -1) for ex in dataset.examples]


def binary_targets(dataset: Dataset) -> np.ndarray:
    return np.array([1 if len(ex.labels) >= 2 else -1 for ex in dataset.examples])
