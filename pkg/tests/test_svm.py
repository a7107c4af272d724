import numpy as np
import pytest

from pudetect.errors import ConfigError
from pudetect.svm import SVMConfig, WeightedLinearSVM, train_weighted_linear_svm

from conftest import two_blobs


def overlapping_blobs(n=800, pos_frac=0.2, seed=4):
    rng = np.random.default_rng(seed)
    n_pos = int(n * pos_frac)
    pos = rng.normal(0.4, 1.0, size=(n_pos, 2))
    neg = rng.normal(-0.4, 1.0, size=(n - n_pos, 2))
    x = np.vstack([pos, neg])
    y = np.array([1] * n_pos + [0] * (n - n_pos))
    return x, y


class TestTraining:
    def test_separable_blobs_fit(self):
        x, y = two_blobs(n=400, gap=6.0, seed=1)
        model = train_weighted_linear_svm(x, y, SVMConfig(seed=0))
        acc = ((model.decision_function(x) >= 0).astype(int) == y).mean()
        assert acc == 1.0

    def test_positive_weight_raises_recall(self):
        x, y = overlapping_blobs()
        low = train_weighted_linear_svm(
            x, y, SVMConfig(positive_class_weight=1.0, seed=0))
        high = train_weighted_linear_svm(
            x, y, SVMConfig(positive_class_weight=16.0, seed=0))

        def recall(model):
            pred = model.decision_function(x) >= 0
            return pred[y == 1].mean()

        assert recall(high) > recall(low)
        assert recall(high) > 0.9

    def test_unit_weights_match_unweighted_reference(self):
        # replay the exact update sequence without the weighting machinery
        x, y = overlapping_blobs(n=300, seed=9)
        cfg = SVMConfig(epochs=3, batch_size=64, calibration_fraction=0.0,
                        seed=13)
        model = train_weighted_linear_svm(x, y, cfg)

        rng = np.random.default_rng(cfg.seed)
        perm = rng.permutation(len(y))
        xf, ys = x[perm], np.where(y[perm] == 1, 1.0, -1.0)
        w = np.zeros(2)
        b = 0.0
        step = 0
        for _ in range(cfg.epochs):
            order = rng.permutation(len(y))
            for lo in range(0, len(y), cfg.batch_size):
                batch = order[lo:lo + cfg.batch_size]
                xb = xf[batch]
                viol = ys[batch] * (xb @ w + b) < 1.0
                eta = cfg.learning_rate / (1.0 + cfg.rate_decay * step)
                step += 1
                if viol.any():
                    cb = ys[batch][viol]
                    w += eta * (cb @ xb[viol] / batch.size
                                - cfg.regularization * w)
                    b += eta * cb.sum() / batch.size
                else:
                    w -= eta * cfg.regularization * w

        assert np.array_equal(model.w, w)
        assert model.b == b

    def test_deterministic(self):
        x, y = overlapping_blobs(n=200, seed=2)
        cfg = SVMConfig(seed=5)
        a = train_weighted_linear_svm(x, y, cfg)
        b = train_weighted_linear_svm(x, y, cfg)
        assert np.array_equal(a.w, b.w)
        assert (a.b, a.calib_a, a.calib_b) == (b.b, b.calib_a, b.calib_b)

    @pytest.mark.filterwarnings("ignore:overflow encountered")
    def test_divergence_detected(self):
        x, y = two_blobs(n=100, gap=2.0, seed=0)
        cfg = SVMConfig(learning_rate=1e200, seed=0)
        with pytest.raises(ValueError, match="diverged"):
            train_weighted_linear_svm(x, y, cfg)

    def test_tiny_input_calibrates_on_fit_set(self):
        x = np.array([[1.0, 0.0], [2.0, 0.0], [-1.0, 0.0], [-2.0, 0.0]])
        y = np.array([1, 1, 0, 0])
        model = train_weighted_linear_svm(x, y, SVMConfig(epochs=20, seed=0))
        p = model.predict_proba(x)
        assert ((p > 0.0) & (p < 1.0)).all()
        assert p[0] > p[2]


class TestCalibration:
    def test_probabilities_open_interval_and_monotone(self):
        x, y = overlapping_blobs(n=500, seed=6)
        model = train_weighted_linear_svm(x, y, SVMConfig(seed=1))
        margins = model.decision_function(x)
        proba = model.predict_proba(x)
        assert ((proba > 0.0) & (proba < 1.0)).all()
        assert model.calib_a > 0
        order = np.argsort(margins)
        assert (np.diff(proba[order]) >= 0).all()

    def test_sigmoid_arithmetic(self):
        model = WeightedLinearSVM(w=[2.0], b=-1.0, calib_a=1.0, calib_b=0.0,
                                  feature_dims=1)
        # margin of [[0.5]] is 0; sigmoid(0) = 0.5
        assert model.predict_proba([[0.5]])[0] == pytest.approx(0.5, abs=1e-15)
        assert model.decision_function([[2.0]])[0] == pytest.approx(3.0)


class TestValidation:
    def test_single_class_rejected(self):
        with pytest.raises(ValueError, match="only one class"):
            train_weighted_linear_svm([[1.0], [2.0]], [1, 1])

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="one row per label"):
            train_weighted_linear_svm([[1.0], [2.0]], [1, 0, 1])

    def test_predict_dimension_checked(self):
        model = WeightedLinearSVM(w=[1.0, 1.0], b=0.0, calib_a=1.0,
                                  calib_b=0.0, feature_dims=2)
        with pytest.raises(ValueError, match="dimension mismatch"):
            model.predict_proba([[1.0]])

    @pytest.mark.parametrize("kw", [
        dict(positive_class_weight=0.0),
        dict(negative_class_weight=-1.0),
        dict(regularization=0.0),
        dict(learning_rate=0.0),
        dict(epochs=0),
        dict(batch_size=0),
        dict(rate_decay=-0.1),
        dict(calibration_fraction=1.0),
    ])
    def test_config_validation(self, kw):
        with pytest.raises(ConfigError):
            SVMConfig(**kw)
