import numpy as np
import pytest

from pudetect.bench import PreparedData
from pudetect.dataset import FeatureMatrix, LabeledDataset


def two_blobs(n=200, gap=4.0, seed=0, dims=2):
    """Linearly separable positive/negative clusters."""
    rng = np.random.default_rng(seed)
    n_pos = n // 2
    pos = rng.normal(gap / 2, 1.0, size=(n_pos, dims))
    neg = rng.normal(-gap / 2, 1.0, size=(n - n_pos, dims))
    x = np.vstack([pos, neg])
    y = np.array([1] * n_pos + [0] * (n - n_pos), dtype=np.int8)
    return x, y


def structured_split(n, seed, dims=6):
    """Positives in an easy core plus a hard fringe, negatives overlapping
    the fringe. The oracle scores the core high, so topper selection under-
    samples the fringe; fringe-vs-negative separation is non-linear.

    A slice of the negatives is scattered across the core so no region is
    perfectly pure: forest scores then vary row to row instead of
    collapsing into one tied block, which keeps quantile thresholds
    meaningful on small samples."""
    r = np.random.default_rng(seed)
    n_pos = n // 2
    n_core = int(n_pos * 0.6)
    core = r.normal(0.0, 0.7, size=(n_core, dims)) + 2.5
    fringe = r.normal(0.0, 0.7, size=(n_pos - n_core, dims))
    fringe[:, 0] -= 1.5
    n_neg = n - n_pos
    n_spread = max(1, int(n_neg * 0.15))
    neg = r.normal(0.0, 0.9, size=(n_neg - n_spread, dims))
    neg[:, 1] -= 1.8
    spread = r.normal(0.0, 2.0, size=(n_spread, dims)) + 1.5
    x = np.vstack([core, fringe, neg, spread])
    y = np.array([1] * n_pos + [0] * (n - n_pos), dtype=np.int8)
    return x, y


def synthetic_prepared(n_train=2000, n_val=500, n_test=500, seed=0, dims=6):
    """PreparedData over the structured synthetic corpus."""
    xs, ys, idss = [], [], []
    offset = 0
    for i, n in enumerate((n_train, n_val, n_test)):
        x, y = structured_split(n, seed * 101 + i)
        xs.append(x)
        ys.append(y)
        idss.append(np.arange(offset, offset + n, dtype=np.int64))
        offset += n
    mean = xs[0].mean(axis=0)
    std = xs[0].std(axis=0)
    sets = [
        LabeledDataset(y=y, ids=ids,
                       features=FeatureMatrix(values=(x - mean) / std))
        for x, y, ids in zip(xs, ys, idss)
    ]
    return PreparedData(train=sets[0], val=sets[1], test=sets[2],
                        feature_dims=dims)


CORPUS_PROTOS_POS = ("tcp", "udp")
CORPUS_PROTOS_NEG = ("tcp", "icmp")


def write_toy_corpus(dirpath, n_train=400, n_test=100, seed=3):
    """Raw two-file corpus in the loader's format: numeric attributes, one
    categorical attribute, class label, integer difficulty.

    A slice of the attacks mimics legitimate traffic so no feature region
    is pure; forest scores then vary row to row, which keeps quantile-based
    selection meaningful on these small samples."""
    rng = np.random.default_rng(seed)

    def rows(n, file_seed):
        r = np.random.default_rng(file_seed)
        out = []
        for i in range(n):
            human = i % 2 == 0
            if human:
                core = r.random() < 0.6
                f0 = r.normal(2.2 if core else -0.5, 0.6)
                f1 = r.normal(1.5, 0.7)
                proto = CORPUS_PROTOS_POS[int(r.random() < 0.3)]
                label = "normal"
            else:
                stealth = r.random() < 0.18
                f0 = r.normal(2.2 if stealth else -1.2, 0.8)
                f1 = r.normal(1.5 if stealth else -1.0, 0.8)
                proto = CORPUS_PROTOS_NEG[int(r.random() < 0.4)]
                label = ("neptune", "smurf")[int(r.random() < 0.5)]
            f2 = r.normal(0.0, 1.0)
            out.append(f"{f0!r},{f1!r},{f2!r},{proto},{label},{int(r.integers(0, 22))}")
        return out

    train = dirpath / "KDDTrain+.txt"
    test = dirpath / "KDDTest+.txt"
    train.write_text("\n".join(rows(n_train, seed)) + "\n")
    test.write_text("\n".join(rows(n_test, seed + 1)) + "\n")
    return train, test


UA_HUMAN = "Mozilla/5.0 (X11; Linux x86_64) Gecko/20100101 Firefox/119.0"
UA_SCRIPTED = "python-requests/2.31.0"


def write_hits_log(path, n_humans=60, n_bots=30, seed=11):
    """Tab-separated hit log with separable traffic: slow browser visitors
    (some of whom purchase) and fast scripted visitors from a 52.0.0.0/8
    block. Returns the path."""
    rng = np.random.default_rng(seed)
    lines = ["visitor_id\ttimestamp\turl\tuser_agent\tip\tpurchase_flag"]
    base = 1_700_000_000.0
    for i in range(n_humans):
        visitor = f"h{i:03d}"
        purchaser = rng.random() < 0.45
        ip = f"192.168.{int(rng.integers(0, 250))}.{int(rng.integers(1, 250))}"
        for _ in range(int(rng.integers(1, 3))):
            t = base + float(rng.integers(0, 5_000_000))
            n_hits = int(rng.integers(3, 9))
            buy_at = int(rng.integers(0, n_hits)) if purchaser else -1
            for k in range(n_hits):
                url = f"/page/{int(rng.integers(0, 30))}"
                flag = 1 if k == buy_at else 0
                lines.append(
                    f"{visitor}\t{t!r}\t{url}\t{UA_HUMAN}\t{ip}\t{flag}")
                t += float(rng.integers(20, 400))
    for i in range(n_bots):
        visitor = f"b{i:03d}"
        ip = f"52.{int(rng.integers(0, 250))}.{int(rng.integers(0, 250))}.7"
        t = base + float(rng.integers(0, 5_000_000))
        for _ in range(int(rng.integers(15, 40))):
            url = f"/page/{int(rng.integers(0, 400))}"
            lines.append(f"{visitor}\t{t!r}\t{url}\t{UA_SCRIPTED}\t{ip}\t0")
            t += float(rng.integers(1, 5))
    path = str(path)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


@pytest.fixture(scope="session")
def prepared_small():
    return synthetic_prepared(n_train=1600, n_val=400, n_test=400, seed=1)
