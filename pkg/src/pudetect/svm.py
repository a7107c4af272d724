"""Class-weighted linear SVM trained by stochastic subgradient descent.

Minimizes  lam/2 ||w||^2 + mean_i( weight_i * hinge(y_i, w.x_i + b) )
with per-class hinge weights, then maps the raw margin to [0,1] with a
monotone sigmoid fitted on a held-out slice (Platt scaling). Inputs are
expected to be standardized; nothing here rescales them.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

__all__ = ["SVMConfig", "WeightedLinearSVM", "train_weighted_linear_svm"]


@dataclass(frozen=True)
class SVMConfig:
    positive_class_weight: float = 1.0
    negative_class_weight: float = 1.0
    regularization: float = 1e-4
    epochs: int = 5
    learning_rate: float = 0.5
    rate_decay: float = 1e-3          # eta_t = learning_rate / (1 + rate_decay * t)
    batch_size: int = 256
    calibration_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        for field in ("positive_class_weight", "negative_class_weight",
                      "regularization", "learning_rate"):
            if getattr(self, field) <= 0:
                raise ConfigError(f"{field} must be > 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.rate_decay < 0:
            raise ConfigError("rate_decay must be >= 0")
        if not 0 <= self.calibration_fraction < 1:
            raise ConfigError("calibration_fraction must be in [0, 1)")


class WeightedLinearSVM:
    kind = "weighted_linear_svm"

    def __init__(self, w, b, calib_a, calib_b, feature_dims,
                 config: SVMConfig | None = None):
        self.w = np.asarray(w, dtype=np.float64)
        self.b = float(b)
        self.calib_a = float(calib_a)
        self.calib_b = float(calib_b)
        self.feature_dims = int(feature_dims)
        self.config = config

    def _check(self, x) -> np.ndarray:
        x = np.asarray(getattr(x, "values", x), dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.feature_dims:
            raise ValueError(
                f"feature dimension mismatch: model has {self.feature_dims}"
            )
        return x

    def decision_function(self, x) -> np.ndarray:
        return self._check(x) @ self.w + self.b

    def predict_proba(self, x) -> np.ndarray:
        z = self.calib_a * self.decision_function(x) + self.calib_b
        # exp saturates past +-500; clamp to keep extreme margins warning-free
        return 1.0 / (1.0 + np.exp(-np.clip(z, -500.0, 500.0)))


def _fit_platt(margins, y):
    """Fit sigmoid(a*f + b) to binary targets by Newton steps.

    Uses Platt's smoothed targets so outputs stay strictly inside (0,1).
    The slope is clamped positive to keep the map monotone increasing.
    """
    f = np.asarray(margins, dtype=np.float64)
    y = np.asarray(y)
    n_pos = int((y == 1).sum())
    n_neg = y.size - n_pos
    t = np.where(y == 1, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))

    a, b = 0.0, float(np.log((n_pos + 1.0) / (n_neg + 1.0)))
    for _ in range(60):
        z = np.clip(a * f + b, -35, 35)
        p = 1.0 / (1.0 + np.exp(-z))
        g = p - t
        ga, gb = float(g @ f), float(g.sum())
        w = p * (1.0 - p)
        haa = float(w @ (f * f)) + 1e-12
        hab = float(w @ f)
        hbb = float(w.sum()) + 1e-12
        det = haa * hbb - hab * hab
        if abs(det) < 1e-30:
            break
        da = (gb * hab - ga * hbb) / det
        db = (ga * hab - gb * haa) / det
        a, b = a + da, b + db
        if abs(da) < 1e-10 and abs(db) < 1e-10:
            break
    if a <= 0:
        # degenerate calibration set; fall back to a fixed gentle slope
        a = 1e-6
        z = np.clip(a * f, -35, 35)
        b = float(np.log((n_pos + 1.0) / (n_neg + 1.0))) - float(np.mean(z))
    return a, b


def train_weighted_linear_svm(x, y, cfg: SVMConfig = SVMConfig()) -> WeightedLinearSVM:
    x = np.asarray(getattr(x, "values", x), dtype=np.float64)
    y = np.asarray(y)
    if x.ndim != 2 or x.shape[0] != y.size:
        raise ValueError("X must be 2-d with one row per label")
    if np.unique(y).size < 2:
        raise ValueError("degenerate training set: only one class present")

    n, d = x.shape
    rng = np.random.default_rng(cfg.seed)

    # carve out a calibration slice; tiny inputs calibrate on the fit set
    perm = rng.permutation(n)
    n_cal = int(round(n * cfg.calibration_fraction))
    fit_idx, cal_idx = perm[n_cal:], perm[:n_cal]
    if (n_cal < 4 or np.unique(y[fit_idx]).size < 2
            or np.unique(y[cal_idx]).size < 2):
        fit_idx = perm
        cal_idx = perm

    xf, yf = x[fit_idx], y[fit_idx]
    ys = np.where(yf == 1, 1.0, -1.0)
    sample_w = np.where(yf == 1, cfg.positive_class_weight,
                        cfg.negative_class_weight)
    coef = sample_w * ys

    w = np.zeros(d)
    b = 0.0
    lam = cfg.regularization
    m = fit_idx.size
    step = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(m)
        for lo in range(0, m, cfg.batch_size):
            batch = order[lo:lo + cfg.batch_size]
            xb = xf[batch]
            margins = xb @ w + b
            viol = ys[batch] * margins < 1.0
            eta = cfg.learning_rate / (1.0 + cfg.rate_decay * step)
            step += 1
            if viol.any():
                cb = coef[batch][viol]
                w += eta * (cb @ xb[viol] / batch.size - lam * w)
                b += eta * cb.sum() / batch.size
            else:
                w -= eta * lam * w
        margins = xf @ w + b
        hinge = np.maximum(0.0, 1.0 - ys * margins)
        obj = 0.5 * lam * float(w @ w) + float(np.mean(sample_w * hinge))
        if not np.isfinite(obj):
            raise ValueError("diverged; reduce learning rate")

    calib_a, calib_b = _fit_platt(x[cal_idx] @ w + b, y[cal_idx])
    return WeightedLinearSVM(w, b, calib_a, calib_b, d, cfg)
