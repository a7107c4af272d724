"""Turn fully labeled data into biased positive-unlabeled benchmarks.

The labeling mechanism has two dials. A supervised oracle first scores
every positive; "topper" t keeps the positives scoring above the t-th
quantile, mimicking a capture process that only sees the most blatant
cases. "Mixing" m then swaps m% of that selection for positives drawn
uniformly (with replacement) from the whole positive pool, walking the
sample from fully biased (m=0) back to a completely random one (m=100).
Survivors of the swap carry subgroup flag b=1, swapped-in rows b=0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import LabeledDataset
from .errors import ConfigError
from .forest import RFConfig, train_random_forest
from .pu import PUSet

__all__ = [
    "SimulationConfig", "OracleResult", "PUDataset", "train_oracle",
    "apply_topper", "apply_mixing", "assemble_pu_dataset", "simulate_cell",
    "write_pu_tsv",
]


@dataclass(frozen=True)
class SimulationConfig:
    topper_t: float
    mixing_m: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.topper_t < 1.0:
            raise ConfigError("topper_t must lie in [0, 1)")
        if not 0.0 <= self.mixing_m <= 100.0:
            raise ConfigError("mixing_m must lie in [0, 100]")


@dataclass
class OracleResult:
    """Supervised scorer plus its scores on the training positives."""

    model: object
    positive_ids: np.ndarray
    positive_scores: np.ndarray


@dataclass
class PUDataset:
    train: PUSet
    val: PUSet
    test: PUSet


def train_oracle(train: LabeledDataset, cfg: RFConfig = RFConfig()) -> OracleResult:
    """Fit a fully supervised forest on the true labels and score every
    positive row; these scores drive the topper selection."""
    model = train_random_forest(train.features.values, train.y, cfg)
    pos = train.y == 1
    scores = model.predict_proba(train.features.values[pos])
    return OracleResult(model=model, positive_ids=train.ids[pos].copy(),
                        positive_scores=scores)


def apply_topper(positive_ids, scores, t: float) -> np.ndarray:
    """Ids whose score strictly exceeds the empirical t-quantile of all
    positive scores; roughly the top (1-t) fraction."""
    if not 0.0 <= t < 1.0:
        raise ConfigError("topper quantile must lie in [0, 1)")
    positive_ids = np.asarray(positive_ids)
    scores = np.asarray(scores, dtype=np.float64)
    if positive_ids.size != scores.size:
        raise ValueError("scores must cover all positive ids")
    cut = np.quantile(scores, t)
    return positive_ids[scores > cut]


def apply_mixing(selected_ids, positive_ids, m: float, seed: int):
    """Swap ceil(m% of the selection) for uniform draws over all positives.

    Removed ids are chosen without replacement from the selection; the
    same count is drawn with replacement from the positive pool and
    deduplicated. Returns (labeled_ids, b) with b=1 for selection
    survivors and b=0 for rows present only via the draw. m=0 consumes no
    randomness and returns the selection unchanged.
    """
    if not 0.0 <= m <= 100.0:
        raise ConfigError("mixing percent must lie in [0, 100]")
    selected = np.asarray(selected_ids)
    pool = np.asarray(positive_ids)
    if selected.size and not np.isin(selected, pool).all():
        raise ValueError("selection must be a subset of the positive pool")

    selected = np.sort(selected)
    if m == 0 or selected.size == 0:
        return selected.copy(), np.ones(selected.size, dtype=np.int8)

    rng = np.random.default_rng(seed)
    n_swap = math.ceil(m / 100.0 * selected.size)
    removed = rng.choice(selected, size=n_swap, replace=False)
    survivors = np.setdiff1d(selected, removed)
    drawn = np.unique(rng.choice(pool, size=n_swap, replace=True))

    labeled = np.union1d(survivors, drawn)
    b = np.where(np.isin(labeled, survivors), 1, 0).astype(np.int8)
    return labeled, b


def _pu_from_split(split: LabeledDataset, labeled_ids, b_flags) -> PUSet:
    labeled_ids = np.asarray(labeled_ids)
    if labeled_ids.size == 0:
        raise ValueError("no labeled positives to learn from")
    pos_ids = split.ids[split.y == 1]
    if not np.isin(labeled_ids, pos_ids).all():
        raise ValueError("labeled id outside the split's positive rows")

    s = np.isin(split.ids, labeled_ids).astype(np.int8)
    b = np.full(split.ids.size, -1, dtype=np.int8)
    order = np.argsort(labeled_ids)
    pos_in_split = np.flatnonzero(s == 1)
    # split.ids[pos_in_split] are the labeled ids in split order; map flags over
    flag_for = dict(zip(labeled_ids[order].tolist(),
                        np.asarray(b_flags)[order].tolist()))
    b[pos_in_split] = [flag_for[i] for i in split.ids[pos_in_split].tolist()]
    return PUSet(features=split.features.values, s=s, b=b,
                 y=split.y.astype(np.int8), ids=split.ids)


def assemble_pu_dataset(train: LabeledDataset, val: LabeledDataset,
                        test: LabeledDataset, train_labeled, val_labeled) -> PUDataset:
    """Stamp s/b flags onto the splits. train_labeled and val_labeled are
    (ids, b_flags) pairs produced by the topper/mixing mechanism on the
    respective split's positives. Test rows keep ground truth only."""
    train_ids, train_b = train_labeled
    val_ids, val_b = val_labeled
    pu_train = _pu_from_split(train, train_ids, train_b)
    pu_val = _pu_from_split(val, val_ids, val_b)
    pu_test = PUSet(features=test.features.values,
                    s=np.zeros(test.ids.size, dtype=np.int8),
                    b=np.full(test.ids.size, -1, dtype=np.int8),
                    y=test.y.astype(np.int8), ids=test.ids)
    return PUDataset(train=pu_train, val=pu_val, test=pu_test)


def simulate_cell(train: LabeledDataset, val: LabeledDataset,
                  test: LabeledDataset, oracle: OracleResult,
                  cfg: SimulationConfig, val_seed: int | None = None) -> PUDataset:
    """One benchmark cell: label the training and validation splits with
    the same (t, m) mechanism, the validation side with its own seed."""
    if val_seed is None:
        val_seed = cfg.seed + 1
    selected = apply_topper(oracle.positive_ids, oracle.positive_scores,
                            cfg.topper_t)
    train_labeled = apply_mixing(selected, oracle.positive_ids,
                                 cfg.mixing_m, cfg.seed)

    val_pos = val.y == 1
    val_pos_ids = val.ids[val_pos]
    val_scores = oracle.model.predict_proba(val.features.values[val_pos])
    val_selected = apply_topper(val_pos_ids, val_scores, cfg.topper_t)
    val_labeled = apply_mixing(val_selected, val_pos_ids, cfg.mixing_m, val_seed)

    return assemble_pu_dataset(train, val, test, train_labeled, val_labeled)


def write_pu_tsv(pu: PUSet, path) -> None:
    """Columnar text export: id, features..., s, b, y_eval."""
    d = pu.dims
    header = ["id"] + [f"f{j}" for j in range(d)] + ["s", "b", "y_eval"]
    with open(path, "w") as fh:
        fh.write("\t".join(header) + "\n")
        for i in range(pu.rows):
            row = [str(int(pu.ids[i]))]
            row += [repr(float(v)) for v in pu.features[i]]
            row += [str(int(pu.s[i])), str(int(pu.b[i])), str(int(pu.y[i]))]
            fh.write("\t".join(row) + "\n")
