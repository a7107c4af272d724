"""Loading, encoding, splitting and standardizing tabular intrusion data.

The NSL-KDD files are header-less CSV with 41 attribute columns followed by
a class label and an integer difficulty score (which is dropped). Generic
CSV datasets with the same shape (attributes..., label[, difficulty]) load
through the same path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

__all__ = [
    "RawRecord",
    "EncodingSpec",
    "FeatureMatrix",
    "LabeledDataset",
    "SplitSpec",
    "load_nslkdd",
    "binarize_labels",
    "build_encoding",
    "encode",
    "split",
    "standardize",
]


@dataclass(frozen=True)
class RawRecord:
    attributes: tuple
    class_label: str
    difficulty: int | None = None


@dataclass(frozen=True)
class EncodingSpec:
    """One-hot layout learned from training records only.

    category_vocab maps a categorical column index to its ordered list of
    category strings (order of first appearance in the training records).
    """

    n_columns: int
    categorical_columns: tuple
    numeric_columns: tuple
    category_vocab: dict

    @property
    def dims(self) -> int:
        return len(self.numeric_columns) + sum(
            len(v) for v in self.category_vocab.values()
        )


@dataclass
class FeatureMatrix:
    values: np.ndarray
    mean: np.ndarray | None = None
    std: np.ndarray | None = None
    constant_mask: np.ndarray | None = None

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def dims(self) -> int:
        return self.values.shape[1]


@dataclass
class LabeledDataset:
    y: np.ndarray
    ids: np.ndarray
    features: FeatureMatrix | None = None
    class_labels: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.ids) != len(self.y):
            raise DataError("ids and y lengths differ")
        if len(np.unique(self.ids)) != len(self.ids):
            raise DataError("row ids must be unique")


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.8
    val_frac: float = 0.1
    test_frac: float = 0.1
    seed: int = 0

    def __post_init__(self):
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if any(f <= 0 for f in fracs):
            raise ConfigError("split fractions must all be > 0")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ConfigError("split fractions must sum to 1")


def _read_records(path, expect_fields=None, start_line=1):
    path = Path(path)
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=start_line):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if expect_fields is None:
                expect_fields = len(fields)
            if len(fields) != expect_fields:
                raise DataError(
                    f"{path.name}: line {lineno} has {len(fields)} fields, "
                    f"expected {expect_fields}"
                )
            rows.append(fields)
    if not rows:
        raise DataError(f"{path.name}: no records")
    return rows, expect_fields


def _looks_like_difficulty(rows) -> bool:
    """True when every value of the last column parses as an integer."""
    for r in rows:
        v = r[-1]
        try:
            int(v)
        except ValueError:
            return False
    return True


def load_nslkdd(train_path, test_path, has_difficulty: bool | None = None):
    """Load and merge the two NSL-KDD files, preserving file order.

    Returns a list of RawRecord. The last column is treated as a difficulty
    score when it is integer-valued everywhere (auto-detected unless
    has_difficulty is given); the column before it is the class label.
    """
    train_rows, n_fields = _read_records(train_path)
    test_rows, _ = _read_records(test_path, expect_fields=n_fields)
    rows = train_rows + test_rows
    if n_fields < 2:
        raise DataError("records need at least one attribute and a class label")
    if has_difficulty is None:
        has_difficulty = n_fields >= 3 and _looks_like_difficulty(rows)

    records = []
    if has_difficulty:
        for r in rows:
            records.append(RawRecord(tuple(r[:-2]), r[-2], int(r[-1])))
    else:
        for r in rows:
            records.append(RawRecord(tuple(r[:-1]), r[-1], None))
    return records


def binarize_labels(records) -> LabeledDataset:
    """y=1 for class label exactly "normal", y=0 for anything else."""
    if not records:
        raise DataError("no records")
    y = np.fromiter(
        (1 if r.class_label == "normal" else 0 for r in records),
        dtype=np.int8,
        count=len(records),
    )
    ids = np.arange(len(records), dtype=np.int64)
    return LabeledDataset(y=y, ids=ids, class_labels=[r.class_label for r in records])


def build_encoding(train_records) -> EncodingSpec:
    """Decide numeric vs categorical per column and collect training vocab.

    A column is categorical when any training value fails to parse as a
    float; its vocabulary is the ordered set of values seen in training.
    """
    if not train_records:
        raise DataError("no records")
    n_cols = len(train_records[0].attributes)
    categorical = []
    for col in range(n_cols):
        for r in train_records:
            try:
                float(r.attributes[col])
            except ValueError:
                categorical.append(col)
                break
    vocab = {}
    for col in categorical:
        seen = {}
        for r in train_records:
            seen.setdefault(r.attributes[col], None)
        vocab[col] = list(seen)
    numeric = tuple(c for c in range(n_cols) if c not in vocab)
    return EncodingSpec(
        n_columns=n_cols,
        categorical_columns=tuple(categorical),
        numeric_columns=numeric,
        category_vocab=vocab,
    )


def encode(records, spec: EncodingSpec) -> FeatureMatrix:
    """Encode records to a dense float matrix under a fixed spec.

    Numeric columns are parsed as floats; categorical columns become one-hot
    blocks over the training vocabulary, with unseen categories mapping to
    an all-zero block. Column order: numeric columns first (ascending), then
    one-hot blocks (ascending column index).
    """
    n = len(records)
    if n == 0:
        raise DataError("no records")
    out = np.zeros((n, spec.dims), dtype=np.float64)
    raw = [r.attributes for r in records]

    j = 0
    for col in spec.numeric_columns:
        column = [row[col] for row in raw]
        try:
            out[:, j] = np.asarray(column, dtype=np.float64)
        except ValueError:
            for i, v in enumerate(column):
                try:
                    float(v)
                except ValueError:
                    raise DataError(
                        f"row {i}, column {col}: cannot parse {v!r} as a number"
                    ) from None
            raise
        j += 1

    for col in spec.categorical_columns:
        lookup = {cat: k for k, cat in enumerate(spec.category_vocab[col])}
        width = len(lookup)
        for i, row in enumerate(raw):
            k = lookup.get(row[col])
            if k is not None:
                out[i, j + k] = 1.0
        j += width

    if not np.isfinite(out).all():
        raise DataError("encoded matrix contains non-finite values")
    return FeatureMatrix(values=out)


def split(dataset: LabeledDataset, spec: SplitSpec):
    """Shuffle by seed and partition into (train, val, test) subsets.

    Partitions are disjoint, exhaustive, and fully determined by the seed.
    """
    n = len(dataset.y)
    if n == 0:
        raise DataError("empty dataset")
    rng = np.random.default_rng(spec.seed)
    perm = rng.permutation(n)
    i1 = int(round(spec.train_frac * n))
    i2 = int(round((spec.train_frac + spec.val_frac) * n))
    parts = (perm[:i1], perm[i1:i2], perm[i2:])

    def take(idx):
        feats = None
        if dataset.features is not None:
            feats = FeatureMatrix(values=dataset.features.values[idx])
        labels = (
            [dataset.class_labels[i] for i in idx] if dataset.class_labels else []
        )
        return LabeledDataset(
            y=dataset.y[idx], ids=dataset.ids[idx], features=feats,
            class_labels=labels,
        )

    return take(parts[0]), take(parts[1]), take(parts[2])


def standardize(train: FeatureMatrix, others=()):
    """Standardize columns with training-set statistics.

    Training columns come out with mean ~0 and variance ~1; constant columns
    are zeroed. Matrices in `others` are transformed with the training stats
    (never their own). Returns (train, [others...]) as new FeatureMatrix
    objects carrying the stats.
    """
    x = train.values
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    constant = std < 1e-12
    safe_std = np.where(constant, 1.0, std)

    def transform(values):
        z = (values - mean) / safe_std
        z[:, constant] = 0.0
        return z

    out_train = FeatureMatrix(
        values=transform(x), mean=mean, std=safe_std, constant_mask=constant
    )
    out_others = [
        FeatureMatrix(
            values=transform(m.values), mean=mean, std=safe_std,
            constant_mask=constant,
        )
        for m in others
    ]
    return out_train, out_others
