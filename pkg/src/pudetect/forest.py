"""Random forest of CART-style trees with probability-estimating leaves.

Trees are grown on bootstrap samples with a fresh random feature subset at
every node, splitting on Gini impurity. Continuous features are quantized
to at most 256 histogram bins per fit (exact midpoints when a column has
few distinct values), which keeps split search linear in the node size.
Leaves hold Laplace-smoothed positive-class frequencies (pos+1)/(n+2), so
no leaf ever emits exactly 0 or 1.

All randomness derives from the config seed via numpy SeedSequence plus a
splitmix64 stream inside the tree builder, so a (data, config, seed) triple
fully determines the model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ConfigError

__all__ = ["RFConfig", "RandomForest", "train_random_forest"]

_MAX_BINS = 256


@dataclass(frozen=True)
class RFConfig:
    n_trees: int = 100
    max_depth: int = 20
    min_samples_leaf: int = 5
    features_per_split: int | str = "sqrt"
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1 or self.max_depth < 1 or self.min_samples_leaf < 1:
            raise ConfigError("n_trees, max_depth, min_samples_leaf must be >= 1")

    def resolve_mtry(self, n_features: int) -> int:
        if self.features_per_split == "sqrt":
            return max(1, int(np.sqrt(n_features)))
        m = int(self.features_per_split)
        if m < 1:
            raise ConfigError("features_per_split must be >= 1 or 'sqrt'")
        return min(m, n_features)


@njit(cache=True, nogil=True, inline="always")
def _splitmix64(state):
    state[0] = state[0] + np.uint64(0x9E3779B97F4A7C15)
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True)
def _grow_tree(codes, y, order, n_bins, mtry, max_depth, min_leaf, seed,
               feat, thr_bin, left, right, value):
    """Grow one tree over order[:] (bootstrap row indices), in place.

    codes is (d, n) uint8, one row per feature. Returns the node count.
    Tie-breaking: features are scanned in ascending index order and bins in
    ascending threshold order with strict improvement, so equal gains keep
    the lowest feature index, then the lowest threshold.
    """
    d = codes.shape[0]
    m = order.size
    rng = np.empty(1, dtype=np.uint64)
    rng[0] = seed

    perm = np.empty(d, dtype=np.int32)
    for i in range(d):
        perm[i] = i
    chosen = np.empty(mtry, dtype=np.int32)
    cnt = np.zeros(_MAX_BINS, dtype=np.int64)
    pos = np.zeros(_MAX_BINS, dtype=np.int64)
    scratch = np.empty(m, dtype=np.int32)

    # stack rows: node, start, end, depth, n_pos
    max_nodes = 2 * (m // min_leaf) + 8
    stack = np.empty((max_nodes, 5), dtype=np.int64)

    n_pos_root = np.int64(0)
    for i in range(m):
        n_pos_root += y[order[i]]

    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = m
    stack[0, 3] = 0
    stack[0, 4] = n_pos_root
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        depth = stack[top, 3]
        npos = stack[top, 4]
        n = end - start

        value[node] = (npos + 1.0) / (n + 2.0)
        feat[node] = -1

        if depth >= max_depth or n < 2 * min_leaf or npos == 0 or npos == n:
            continue

        pn = float(n)
        parent_gini = 1.0 - (npos / pn) ** 2 - ((n - npos) / pn) ** 2

        # sample mtry distinct features, then scan them in ascending order
        if mtry < d:
            for i in range(mtry):
                j = i + np.int64(_splitmix64(rng) % np.uint64(d - i))
                tmp = perm[i]
                perm[i] = perm[j]
                perm[j] = tmp
                chosen[i] = perm[i]
            chosen[:mtry].sort()
        else:
            for i in range(d):
                chosen[i] = i

        best_gain = 1e-12
        best_f = -1
        best_bin = -1
        best_nl = np.int64(0)
        best_pl = np.int64(0)

        for ci in range(mtry):
            f = chosen[ci]
            nb = n_bins[f]
            if nb < 2:
                continue
            codes_f = codes[f]
            for b in range(nb):
                cnt[b] = 0
                pos[b] = 0
            for i in range(start, end):
                row = order[i]
                b = codes_f[row]
                cnt[b] += 1
                pos[b] += y[row]

            cl = np.int64(0)
            pl = np.int64(0)
            for b in range(nb - 1):
                cl += cnt[b]
                pl += pos[b]
                if cl < min_leaf:
                    continue
                cr = n - cl
                if cr < min_leaf:
                    break
                pr = npos - pl
                gini_l = 1.0 - (pl / float(cl)) ** 2 - ((cl - pl) / float(cl)) ** 2
                gini_r = 1.0 - (pr / float(cr)) ** 2 - ((cr - pr) / float(cr)) ** 2
                gain = parent_gini - (cl * gini_l + cr * gini_r) / pn
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    best_bin = b
                    best_nl = cl
                    best_pl = pl

        if best_f < 0:
            continue

        # stable partition of order[start:end) on codes <= best_bin
        codes_f = codes[best_f]
        k_left = start
        k_right = 0
        for i in range(start, end):
            row = order[i]
            if codes_f[row] <= best_bin:
                order[k_left] = row
                k_left += 1
            else:
                scratch[k_right] = row
                k_right += 1
        for i in range(k_right):
            order[k_left + i] = scratch[i]

        left_id = n_nodes
        right_id = n_nodes + 1
        n_nodes += 2
        feat[node] = best_f
        thr_bin[node] = best_bin
        left[node] = left_id
        right[node] = right_id

        stack[top, 0] = right_id
        stack[top, 1] = start + best_nl
        stack[top, 2] = end
        stack[top, 3] = depth + 1
        stack[top, 4] = npos - best_pl
        top += 1
        stack[top, 0] = left_id
        stack[top, 1] = start
        stack[top, 2] = start + best_nl
        stack[top, 3] = depth + 1
        stack[top, 4] = best_pl
        top += 1

    return n_nodes


@njit(cache=True, nogil=True)
def _predict_forest(x, feat, thr, left, right, value, offsets, out):
    n = x.shape[0]
    n_trees = offsets.size - 1
    for i in range(n):
        acc = 0.0
        for t in range(n_trees):
            node = offsets[t]
            while feat[node] >= 0:
                if x[i, feat[node]] <= thr[node]:
                    node = left[node]
                else:
                    node = right[node]
            acc += value[node]
        out[i] = acc / n_trees


def _bin_columns(x):
    """Quantize columns to uint8 codes; returns (codes (d,n), cuts per column).

    A split "code <= j" is equivalent to "x <= cuts[j]" by construction.
    Columns with up to 256 distinct values use exact midpoints as cut
    points; wider columns use up to 255 quantile cuts.
    """
    n, d = x.shape
    codes = np.empty((d, n), dtype=np.uint8)
    all_cuts = []
    for f in range(d):
        col = x[:, f]
        u = np.unique(col)
        if u.size <= 1:
            cuts = np.empty(0, dtype=np.float64)
        elif u.size <= _MAX_BINS:
            cuts = (u[:-1] + u[1:]) * 0.5
        else:
            s = np.sort(col)
            idx = (np.arange(1, _MAX_BINS) * n) // _MAX_BINS
            cuts = np.unique(s[idx])
        codes[f] = np.searchsorted(cuts, col, side="left").astype(np.uint8)
        all_cuts.append(cuts)
    return codes, all_cuts


class RandomForest:
    """Fitted forest stored as flat node arrays (one block per tree)."""

    kind = "random_forest"

    def __init__(self, feat, thr, left, right, value, offsets, feature_dims,
                 config: RFConfig | None = None):
        self.feat = np.ascontiguousarray(feat, dtype=np.int32)
        self.thr = np.ascontiguousarray(thr, dtype=np.float64)
        self.left = np.ascontiguousarray(left, dtype=np.int32)
        self.right = np.ascontiguousarray(right, dtype=np.int32)
        self.value = np.ascontiguousarray(value, dtype=np.float64)
        self.offsets = np.ascontiguousarray(offsets, dtype=np.int64)
        self.feature_dims = int(feature_dims)
        self.config = config

    @property
    def n_trees(self) -> int:
        return self.offsets.size - 1

    def predict_proba(self, x) -> np.ndarray:
        """Mean over trees of the leaf positive-class frequency, per row."""
        x = _as_matrix(x)
        if x.shape[1] != self.feature_dims:
            raise ValueError(
                f"feature dimension mismatch: model has {self.feature_dims}, "
                f"input has {x.shape[1]}"
            )
        out = np.empty(x.shape[0], dtype=np.float64)
        _predict_forest(np.ascontiguousarray(x, dtype=np.float64), self.feat,
                        self.thr, self.left, self.right, self.value,
                        self.offsets, out)
        return out


def _as_matrix(x) -> np.ndarray:
    values = getattr(x, "values", x)
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("expected a 2-d feature matrix")
    return arr


def train_random_forest(x, y, cfg: RFConfig = RFConfig()) -> RandomForest:
    """Fit a forest on a feature matrix and binary labels."""
    x = _as_matrix(x)
    y = np.asarray(y)
    if x.shape[0] != y.size:
        raise ValueError("row count of X must match label count")
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("degenerate training set: only one class present")
    if not np.isin(classes, (0, 1)).all():
        raise ValueError("labels must be binary 0/1")

    n, d = x.shape
    y8 = np.ascontiguousarray(y, dtype=np.uint8)
    codes, cuts = _bin_columns(x)
    n_bins = np.array([c.size + 1 for c in cuts], dtype=np.int64)
    mtry = cfg.resolve_mtry(d)

    master = np.random.SeedSequence(cfg.seed)
    children = master.spawn(cfg.n_trees)

    feats, thrs, lefts, rights, values = [], [], [], [], []
    offsets = np.zeros(cfg.n_trees + 1, dtype=np.int64)
    for t in range(cfg.n_trees):
        rng = np.random.default_rng(children[t])
        if cfg.bootstrap:
            order = rng.integers(0, n, size=n).astype(np.int32)
        else:
            order = np.arange(n, dtype=np.int32)
        node_seed = children[t].generate_state(1, dtype=np.uint64)[0]

        cap = 2 * (n // cfg.min_samples_leaf) + 8
        feat = np.empty(cap, dtype=np.int32)
        thr_bin = np.full(cap, -1, dtype=np.int32)
        left = np.zeros(cap, dtype=np.int32)
        right = np.zeros(cap, dtype=np.int32)
        value = np.zeros(cap, dtype=np.float64)

        n_nodes = _grow_tree(codes, y8, order, n_bins, mtry, cfg.max_depth,
                             cfg.min_samples_leaf, node_seed,
                             feat, thr_bin, left, right, value)

        thr = np.zeros(n_nodes, dtype=np.float64)
        for i in range(n_nodes):
            if feat[i] >= 0:
                thr[i] = cuts[feat[i]][thr_bin[i]]
        feats.append(feat[:n_nodes].copy())
        thrs.append(thr)
        lefts.append(left[:n_nodes].copy())
        rights.append(right[:n_nodes].copy())
        values.append(value[:n_nodes].copy())
        offsets[t + 1] = offsets[t] + n_nodes

    base = offsets[:-1]
    for t in range(cfg.n_trees):
        internal = feats[t] >= 0
        lefts[t][internal] += base[t]
        rights[t][internal] += base[t]

    return RandomForest(
        feat=np.concatenate(feats), thr=np.concatenate(thrs),
        left=np.concatenate(lefts), right=np.concatenate(rights),
        value=np.concatenate(values), offsets=offsets,
        feature_dims=d, config=cfg,
    )
