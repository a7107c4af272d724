"""Positive-unlabeled estimators built on the base classifiers.

Every estimator starts from the same decomposition: the probability that
an example is a true positive equals the probability it is labeled
divided by the probability a positive like it would be labeled,

    p(y=1|x) = p(s=1|x) / p(s=1|y=1,x).

The numerator is always a classifier separating labeled (s=1) from
unlabeled (s=0) rows. The estimators differ only in the denominator:

  EAM        constant c, the mean numerator score over labeled
             validation examples.
  MAM        c + p(b=1|y=1,x) * (1-c): labeled data carries a subgroup
             flag b splitting it into a biased part (b=1) and a random
             part (b=0); a propensity model is trained to tell them apart
             and c is estimated on the random part only.
  RAM        a learned propensity trained to separate labeled positives
             from pseudo unlabeled positives mined as the nearest
             unlabeled neighbors of the labeled set.
  BiasedSVM  no correction: a class-weighted SVM on the s-labels, its
             calibrated output used directly.
"""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass, field

import numpy as np

from .forest import RFConfig, train_random_forest
from .svm import SVMConfig, train_weighted_linear_svm

__all__ = [
    "PUSet", "PUModel", "ConstantModel", "fit_numerator", "estimate_c",
    "fit_eam", "fit_mam", "fit_ram", "fit_biased_svm",
    "mine_pseudo_unlabeled_positives", "score",
    "DEFAULT_SVM_WEIGHT_GRID",
]

DENOMINATOR_FLOOR = 0.01
C_FLOOR = 1e-4
DEFAULT_SVM_WEIGHT_GRID = (0.5, 1.0, 2.0, 4.0, 8.0, 16.0)


@dataclass
class PUSet:
    """Feature rows with labeled-flags; ground truth kept for scoring only.

    s marks labeled rows (labeled rows are positives by construction).
    b is a subgroup flag defined only on s=1 rows: 1 for rows captured by
    a biased mechanism, 0 for randomly captured ones, -1 elsewhere or
    when unknown. y is the evaluation-only truth, -1 when unavailable.
    """

    features: np.ndarray
    s: np.ndarray
    b: np.ndarray
    y: np.ndarray
    ids: np.ndarray

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.s = np.asarray(self.s, dtype=np.int8)
        self.b = np.asarray(self.b, dtype=np.int8)
        self.y = np.asarray(self.y, dtype=np.int8)
        self.ids = np.asarray(self.ids, dtype=np.int64)
        n = self.features.shape[0]
        if not (self.s.size == self.b.size == self.y.size == self.ids.size == n):
            raise ValueError("PU set arrays must share one length")
        if np.unique(self.ids).size != n:
            raise ValueError("PU set ids must be unique")
        if ((self.b != -1) & (self.s != 1)).any():
            raise ValueError("subgroup flag b is defined only on s=1 rows")
        if ((self.s == 1) & (self.y == 0)).any():
            raise ValueError("labeled rows cannot be ground-truth negatives")

    @property
    def rows(self) -> int:
        return self.features.shape[0]

    @property
    def dims(self) -> int:
        return self.features.shape[1]


@dataclass
class ConstantModel:
    """Stub classifier emitting one fixed score; used when a propensity
    degenerates to a constant and as a test double."""

    value: float
    feature_dims: int
    kind: str = "constant"

    def predict_proba(self, x) -> np.ndarray:
        x = np.asarray(getattr(x, "values", x), dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.feature_dims:
            raise ValueError(
                f"feature dimension mismatch: model has {self.feature_dims}"
            )
        return np.full(x.shape[0], self.value, dtype=np.float64)


@dataclass
class PUModel:
    kind: str                      # EAM | MAM | RAM | BiasedSVM
    numerator_model: object
    c: float | None = None
    propensity_model: object = None
    denominator_floor: float = DENOMINATOR_FLOOR
    notes: str = ""

    def score(self, x) -> np.ndarray:
        return score(self, x)

    @property
    def feature_dims(self) -> int:
        return self.numerator_model.feature_dims


def fit_numerator(train: PUSet, cfg: RFConfig = RFConfig()):
    """Classifier for p(s=1|x): labeled vs unlabeled rows. Shared verbatim
    by EAM, MAM and RAM."""
    if not ((train.s == 1).any() and (train.s == 0).any()):
        raise ValueError("numerator task needs both s=1 and s=0 examples")
    return train_random_forest(train.features, (train.s == 1).astype(np.uint8), cfg)


def estimate_c(numerator, val: PUSet, subgroup: str = "all_labeled") -> float:
    """Label frequency: mean numerator score over labeled validation rows.

    subgroup "all_labeled" averages over every s=1 row; "b0_only"
    restricts to the randomly captured part (s=1, b=0). Clamped to
    [1e-4, 1] so downstream division stays sane.
    """
    if subgroup == "all_labeled":
        mask = val.s == 1
    elif subgroup == "b0_only":
        mask = (val.s == 1) & (val.b == 0)
    else:
        raise ValueError(f"unknown subgroup {subgroup!r}")
    if not mask.any():
        raise ValueError(f"cannot estimate c: empty validation subgroup {subgroup!r}")
    scores = numerator.predict_proba(val.features[mask])
    return float(np.clip(scores.mean(), C_FLOOR, 1.0))


def fit_eam(train: PUSet, val: PUSet, cfg: RFConfig = RFConfig(),
            numerator=None) -> PUModel:
    """Constant-denominator estimator: score = clip(numerator / c, 0, 1).

    Exact when labeled positives are a uniform random sample of all
    positives; under biased labeling c is overestimated near the bias and
    the correction is only partial.
    """
    if numerator is None:
        numerator = fit_numerator(train, cfg)
    c = estimate_c(numerator, val, "all_labeled")
    return PUModel(kind="EAM", numerator_model=numerator, c=c)


def fit_mam(train: PUSet, val: PUSet, cfg: RFConfig = RFConfig(),
            numerator=None, propensity_cfg: RFConfig | None = None,
            on_degenerate: str = "error", mining_per_positive: int = 1,
            pseudo_ids=None) -> PUModel:
    """Two-subgroup estimator: denominator c + p(b=1|y=1,x) * (1-c).

    The propensity model separates biased captures (b=1) from random
    captures (b=0) among the labeled rows; c comes from the random part.

    When the labeled set carries only one b value the propensity task is
    undefined. on_degenerate="error" refuses (the default contract);
    "substitute" applies a documented fallback: with no random captures
    (all b=1) the missing class is stood in by mined pseudo unlabeled
    positives and c falls back to all labeled rows; with no biased
    captures (all b=0) the empirical propensity is the constant 0, which
    reduces the model to EAM.
    """
    if numerator is None:
        numerator = fit_numerator(train, cfg)
    if propensity_cfg is None:
        propensity_cfg = cfg

    labeled = train.s == 1
    b_vals = np.unique(train.b[labeled])
    has_b1 = (1 in b_vals)
    has_b0 = (0 in b_vals)
    notes = ""

    if has_b1 and has_b0:
        mask1 = labeled & (train.b == 1)
        mask0 = labeled & (train.b == 0)
        feats = np.vstack([train.features[mask1], train.features[mask0]])
        labels = np.concatenate([np.ones(int(mask1.sum()), dtype=np.uint8),
                                 np.zeros(int(mask0.sum()), dtype=np.uint8)])
        propensity = train_random_forest(feats, labels, propensity_cfg)
    elif on_degenerate != "substitute":
        raise ValueError("MAM requires both subgroups")
    elif has_b1 and not has_b0:
        if pseudo_ids is None:
            pseudo_ids = mine_pseudo_unlabeled_positives(
                train, per_positive=mining_per_positive)
        pseudo_ids = np.asarray(pseudo_ids)
        if pseudo_ids.size == 0:
            raise ValueError("MAM requires both subgroups")
        pseudo = np.isin(train.ids, pseudo_ids)
        feats = np.vstack([train.features[labeled], train.features[pseudo]])
        labels = np.concatenate([np.ones(int(labeled.sum()), dtype=np.uint8),
                                 np.zeros(int(pseudo.sum()), dtype=np.uint8)])
        propensity = train_random_forest(feats, labels, propensity_cfg)
        notes = "degenerate b: pseudo unlabeled positives stood in for b=0"
    elif has_b0 and not has_b1:
        propensity = ConstantModel(0.0, train.dims)
        notes = "degenerate b: no biased captures, propensity fixed at 0"
    else:
        raise ValueError("MAM requires both subgroups")

    c_subgroup = "b0_only" if ((val.s == 1) & (val.b == 0)).any() else "all_labeled"
    c = estimate_c(numerator, val, c_subgroup)
    return PUModel(kind="MAM", numerator_model=numerator, c=c,
                   propensity_model=propensity, notes=notes)


def mine_pseudo_unlabeled_positives(train: PUSet, per_positive: int = 1) -> np.ndarray:
    """Ids of the nearest unlabeled neighbors of each labeled row.

    For every s=1 row, its per_positive nearest s=0 rows by Euclidean
    distance (exact search; features should be standardized). The union
    is returned as sorted unique ids and treated downstream as positives
    that happened not to be captured. Ties break toward the lower row
    index. If fewer unlabeled rows exist than requested, all are returned
    with a warning.
    """
    if per_positive < 1:
        raise ValueError("per_positive must be >= 1")
    pos = np.flatnonzero(train.s == 1)
    unl = np.flatnonzero(train.s == 0)
    if pos.size == 0:
        raise ValueError("mining needs at least one labeled example")
    if unl.size == 0:
        warnings.warn("no unlabeled rows to mine; returning empty set")
        return np.empty(0, dtype=np.int64)
    if unl.size <= per_positive:
        warnings.warn(
            f"only {unl.size} unlabeled rows for per_positive={per_positive}; "
            "returning all of them")
        return np.sort(train.ids[unl])

    if pos.size * unl.size <= _EXACT_SCAN_LIMIT:
        rows = _nearest_exact(train.features, pos, unl, per_positive)
    else:
        rows = _nearest_prefiltered(train.features, pos, unl, per_positive)
    return np.sort(train.ids[rows])


_EXACT_SCAN_LIMIT = 2_000_000


def _nearest_exact(features, pos, unl, per_positive):
    """Exhaustive float64 scan; the reference the fast path must match."""
    u = features[unl]
    picked = []
    for p in pos:
        diff = u - features[p]
        d2 = np.einsum("ij,ij->i", diff, diff)
        keep = np.lexsort((unl, d2))[:per_positive]
        picked.append(unl[keep])
    return np.unique(np.concatenate(picked))


def _nearest_prefiltered(features, pos, unl, per_positive):
    """float32 gram prefilter, float64 re-check of the survivors.

    Candidates are everything within a rounding-error slack of the
    per_positive-th smallest float32 distance, so no point the exact scan
    would pick can be filtered out; the float64 re-check then reproduces
    the exact ordering, ties and all.
    """
    p64 = features[pos]
    u64 = features[unl]
    p32 = p64.astype(np.float32)
    u32 = u64.astype(np.float32)
    u_norm = np.einsum("ij,ij->i", u32, u32).astype(np.float64)
    d = features.shape[1]
    eps = float(np.finfo(np.float32).eps)
    u_scale = float(u_norm.max())

    picked = []
    chunk = max(1, int(32_000_000 // max(unl.size, 1)))
    for lo in range(0, pos.size, chunk):
        hi = min(lo + chunk, pos.size)
        pc = p32[lo:hi]
        p_norm = np.einsum("ij,ij->i", pc, pc).astype(np.float64)
        d2 = (p_norm[:, None] + u_norm - 2.0 * (pc @ u32.T))
        np.maximum(d2, 0.0, out=d2)
        kth = np.partition(d2, per_positive - 1, axis=1)[:, per_positive - 1]
        cutoff = kth + 4.0 * (d + 2) * eps * (p_norm + u_scale)
        for r in range(hi - lo):
            cols = np.flatnonzero(d2[r] <= cutoff[r])
            diff = u64[cols] - p64[lo + r]
            exact = np.einsum("ij,ij->i", diff, diff)
            keep = np.lexsort((unl[cols], exact))[:per_positive]
            picked.append(unl[cols[keep]])
    return np.unique(np.concatenate(picked))


def fit_ram(train: PUSet, cfg: RFConfig = RFConfig(), numerator=None,
            propensity_cfg: RFConfig | None = None,
            per_positive: int = 1,
            denominator_floor: float = DENOMINATOR_FLOOR,
            pseudo_ids=None) -> PUModel:
    """Learned-denominator estimator.

    Mines pseudo unlabeled positives near the labeled set, trains a
    propensity model separating labeled (1) from mined (0), and scores
    numerator / max(propensity, floor), clipped to [0,1]. No validation
    set is consumed.
    """
    if numerator is None:
        numerator = fit_numerator(train, cfg)
    if propensity_cfg is None:
        propensity_cfg = cfg
    if pseudo_ids is None:
        pseudo_ids = mine_pseudo_unlabeled_positives(train, per_positive=per_positive)
    pseudo_ids = np.asarray(pseudo_ids)
    if pseudo_ids.size == 0:
        raise ValueError("RAM needs pseudo unlabeled positives")
    labeled = train.s == 1
    pseudo = np.isin(train.ids, pseudo_ids)
    feats = np.vstack([train.features[labeled], train.features[pseudo]])
    labels = np.concatenate([np.ones(int(labeled.sum()), dtype=np.uint8),
                             np.zeros(int(pseudo.sum()), dtype=np.uint8)])
    propensity = train_random_forest(feats, labels, propensity_cfg)
    return PUModel(kind="RAM", numerator_model=numerator,
                   propensity_model=propensity,
                   denominator_floor=denominator_floor)


def fit_biased_svm(train: PUSet, val: PUSet,
                   weight_grid=DEFAULT_SVM_WEIGHT_GRID,
                   base_cfg: SVMConfig = SVMConfig()) -> PUModel:
    """Baseline: treat unlabeled as negative, sweep the positive-class
    hinge weight, keep the model with the best validation AUC on the
    s-labels. Calibrated SVM output is used directly as the score."""
    from .metrics import roc_auc

    if not ((train.s == 1).any() and (train.s == 0).any()):
        raise ValueError("baseline needs both s=1 and s=0 examples")
    if len(weight_grid) == 0:
        raise ValueError("weight grid must be non-empty")

    best = None
    best_auc = -np.inf
    best_w = None
    for pos_w in weight_grid:
        cfg = dataclasses.replace(base_cfg, positive_class_weight=float(pos_w),
                                  negative_class_weight=1.0)
        model = train_weighted_linear_svm(train.features,
                                          (train.s == 1).astype(np.uint8), cfg)
        auc = roc_auc(model.predict_proba(val.features), val.s == 1)
        if auc > best_auc:
            best, best_auc, best_w = model, auc, pos_w
    return PUModel(kind="BiasedSVM", numerator_model=best,
                   notes=f"positive_class_weight={best_w}")


def score(model: PUModel, x) -> np.ndarray:
    """p(y=1|x) per row under the model's denominator rule, in [0,1]."""
    numer = model.numerator_model.predict_proba(x)
    if model.kind == "BiasedSVM":
        return numer
    if model.kind == "EAM":
        return np.clip(numer / model.c, 0.0, 1.0)
    if model.kind == "MAM":
        prop = model.propensity_model.predict_proba(x)
        denom = model.c + prop * (1.0 - model.c)
        return np.clip(numer / denom, 0.0, 1.0)
    if model.kind == "RAM":
        prop = model.propensity_model.predict_proba(x)
        denom = np.maximum(prop, model.denominator_floor)
        return np.clip(numer / denom, 0.0, 1.0)
    raise ValueError(f"unknown model kind {model.kind!r}")
