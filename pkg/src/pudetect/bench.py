"""Benchmark orchestration: prepare data, run one cell, run the grid.

A cell is one (topper t, mixing m, method, seed) combination. All
randomness inside a cell derives from its seed through a hash stream, so
a cell produces the same report whether run alone or inside the grid, in
any order. Within one (t, m, seed) the simulated dataset and the
numerator model are shared across EAM/MAM/RAM: the methods are meant to
be compared on identical inputs, and the numerator is identical by
definition anyway.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import (FeatureMatrix, LabeledDataset, SplitSpec,
                      binarize_labels, build_encoding, encode, load_nslkdd,
                      split, standardize)
from .errors import ConfigError, DataError
from .forest import RFConfig
from .metrics import EvaluationReport, evaluate_scores
from .pu import (DEFAULT_SVM_WEIGHT_GRID, fit_biased_svm, fit_eam, fit_mam,
                 fit_numerator, fit_ram, mine_pseudo_unlabeled_positives)
from .simulate import OracleResult, SimulationConfig, simulate_cell, train_oracle
from .svm import SVMConfig

__all__ = [
    "METHODS", "BenchmarkConfig", "PreparedData", "GridResult", "StageError",
    "derive_seed", "prepare_data", "save_prepared", "load_prepared",
    "ensure_prepared", "run_cell", "run_grid", "aggregate_reports",
    "load_benchmark_config",
]

METHODS = ("BiasedSVM", "EAM", "MAM", "RAM")

TRAIN_FILE = "KDDTrain+.txt"
TEST_FILE = "KDDTest+.txt"
PREPARED_FILE = "prepared.npz"


class StageError(RuntimeError):
    """A cell failed inside a named pipeline stage."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}': {cause}")
        self.stage = stage
        self.cause = cause


def derive_seed(*parts) -> int:
    """Deterministic 63-bit seed from a tuple of scalars/strings.

    Hash-based (not sequential) so per-cell streams are independent and
    insensitive to execution order.
    """
    key = "|".join(repr(p) for p in parts)
    digest = hashlib.sha256(key.encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


@dataclass(frozen=True)
class BenchmarkConfig:
    toppers: tuple = (0.90, 0.925)
    mixings: tuple = (0.0, 30.0, 70.0, 100.0)
    methods: tuple = METHODS
    seeds: tuple = (0, 1, 2, 3, 4)
    rf: RFConfig = field(default_factory=RFConfig)
    svm: SVMConfig = field(default_factory=SVMConfig)
    svm_weight_grid: tuple = DEFAULT_SVM_WEIGHT_GRID
    split: SplitSpec = field(default_factory=SplitSpec)
    oracle_seed: int = 900_001
    mining_per_positive: int = 1
    target_recall: float = 0.99

    def __post_init__(self):
        if not (self.toppers and self.mixings and self.methods and self.seeds):
            raise ConfigError("toppers, mixings, methods, seeds must be non-empty")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(
                f"unknown methods {bad}; valid: {', '.join(METHODS)}")
        for t in self.toppers:
            if not 0.0 <= t < 1.0:
                raise ConfigError("toppers must lie in [0, 1)")
        for m in self.mixings:
            if not 0.0 <= m <= 100.0:
                raise ConfigError("mixings must lie in [0, 100]")


def load_benchmark_config(path=None, overrides=None) -> BenchmarkConfig:
    """Build a config from a YAML file plus a dict of overrides.

    The file mirrors BenchmarkConfig: scalar lists plus nested `rf`, `svm`
    and `split` tables. Unknown keys are rejected.
    """
    raw = {}
    if path is not None:
        import yaml
        with open(path) as fh:
            loaded = yaml.safe_load(fh) or {}
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a mapping")
        raw.update(loaded)
    if overrides:
        raw.update({k: v for k, v in overrides.items() if v is not None})

    known = {f.name for f in dataclasses.fields(BenchmarkConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    kwargs = {}
    for key, value in raw.items():
        if key == "rf":
            kwargs[key] = value if isinstance(value, RFConfig) else RFConfig(**value)
        elif key == "svm":
            kwargs[key] = value if isinstance(value, SVMConfig) else SVMConfig(**value)
        elif key == "split":
            kwargs[key] = value if isinstance(value, SplitSpec) else SplitSpec(**value)
        elif key in ("toppers", "mixings", "methods", "seeds", "svm_weight_grid"):
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    return BenchmarkConfig(**kwargs)


@dataclass
class PreparedData:
    """Encoded, split, standardized dataset ready for simulation."""

    train: LabeledDataset
    val: LabeledDataset
    test: LabeledDataset
    feature_dims: int


def prepare_data(data_dir, split_spec: SplitSpec = SplitSpec()) -> PreparedData:
    """Load the two raw corpus files from data_dir, binarize labels
    (legitimate=1), one-hot encode with train-split vocabulary, and
    standardize every split with training statistics."""
    data_dir = Path(data_dir)
    train_path = data_dir / TRAIN_FILE
    test_path = data_dir / TEST_FILE
    missing = [p.name for p in (train_path, test_path) if not p.exists()]
    if missing:
        raise DataError(
            f"missing {', '.join(missing)} in {data_dir}; expected the "
            f"corpus files {TRAIN_FILE} and {TEST_FILE}")

    records = load_nslkdd(train_path, test_path)
    labeled = binarize_labels(records)
    tr, va, te = split(labeled, split_spec)

    # encoding vocabulary comes from the training split only
    train_records = [records[i] for i in tr.ids]
    spec = build_encoding(train_records)
    tr.features = encode(train_records, spec)
    va.features = encode([records[i] for i in va.ids], spec)
    te.features = encode([records[i] for i in te.ids], spec)
    tr.features, (va.features, te.features) = _std3(tr.features, va.features,
                                                    te.features)
    return PreparedData(train=tr, val=va, test=te, feature_dims=spec.dims)


def _std3(train, val, test):
    out_train, others = standardize(train, (val, test))
    return out_train, (others[0], others[1])


def save_prepared(prepared: PreparedData, path) -> None:
    arrays = {}
    for name, ds in (("train", prepared.train), ("val", prepared.val),
                     ("test", prepared.test)):
        arrays[f"{name}.x"] = ds.features.values
        arrays[f"{name}.y"] = ds.y
        arrays[f"{name}.ids"] = ds.ids
    arrays["meta"] = np.frombuffer(
        json.dumps({"version": 1, "dims": prepared.feature_dims}).encode(),
        dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez_compressed(fh, **arrays)


def load_prepared(path) -> PreparedData:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("version") != 1:
            raise DataError("unsupported prepared-data version")
        parts = {}
        for name in ("train", "val", "test"):
            parts[name] = LabeledDataset(
                y=data[f"{name}.y"], ids=data[f"{name}.ids"],
                features=FeatureMatrix(values=data[f"{name}.x"]))
    return PreparedData(train=parts["train"], val=parts["val"],
                        test=parts["test"], feature_dims=meta["dims"])


def ensure_prepared(data_dir, split_spec: SplitSpec = SplitSpec()) -> PreparedData:
    """Accept either a directory holding prepared.npz or the raw files."""
    data_dir = Path(data_dir)
    cached = data_dir / PREPARED_FILE
    if cached.exists():
        return load_prepared(cached)
    return prepare_data(data_dir, split_spec)


def _grid_oracle(prepared: PreparedData, cfg: BenchmarkConfig) -> OracleResult:
    oracle_cfg = dataclasses.replace(
        cfg.rf, seed=derive_seed(cfg.oracle_seed, "oracle"))
    return train_oracle(prepared.train, oracle_cfg)


def _shared_mined(shared, pud, per_positive):
    if "mined" not in shared:
        shared["mined"] = mine_pseudo_unlabeled_positives(
            pud.train, per_positive=per_positive)
    return shared["mined"]


def run_cell(prepared: PreparedData, cfg: BenchmarkConfig, t: float, m: float,
             method: str, seed: int, oracle: OracleResult | None = None,
             shared: dict | None = None) -> EvaluationReport:
    """Execute one benchmark cell end to end and return its report.

    Deterministic given (prepared data, cfg, t, m, method, seed); the
    optional oracle/shared arguments only cache work that would otherwise
    be recomputed identically.
    """
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; valid: {', '.join(METHODS)}")
    if method not in cfg.methods:
        raise ConfigError(f"method {method!r} not enabled in this config")
    shared = shared if shared is not None else {}
    cell_key = (t, m, seed)
    if shared.setdefault("cell", cell_key) != cell_key:
        raise ValueError("shared cache belongs to a different (t, m, seed) cell")

    def stage(name, fn):
        try:
            return fn()
        except (KeyboardInterrupt, SystemExit):
            raise
        except Exception as exc:
            raise StageError(name, exc) from exc

    if oracle is None:
        oracle = stage("oracle", lambda: _grid_oracle(prepared, cfg))

    def _simulate():
        if "pud" not in shared:
            sim = SimulationConfig(topper_t=t, mixing_m=m,
                                   seed=derive_seed(seed, t, m, "mix-train"))
            shared["pud"] = simulate_cell(
                prepared.train, prepared.val, prepared.test, oracle, sim,
                val_seed=derive_seed(seed, t, m, "mix-val"))
        return shared["pud"]

    pud = stage("simulate", _simulate)

    def _numerator():
        if "numerator" not in shared:
            num_cfg = dataclasses.replace(
                cfg.rf, seed=derive_seed(seed, t, m, "numerator"))
            shared["numerator"] = fit_numerator(pud.train, num_cfg)
        return shared["numerator"]

    def _fit():
        if method == "BiasedSVM":
            base = dataclasses.replace(cfg.svm, seed=derive_seed(seed, t, m, "svm"))
            return fit_biased_svm(pud.train, pud.val,
                                  weight_grid=cfg.svm_weight_grid, base_cfg=base)
        numerator = _numerator()
        if method == "EAM":
            return fit_eam(pud.train, pud.val, numerator=numerator)
        if method == "MAM":
            prop_cfg = dataclasses.replace(
                cfg.rf, seed=derive_seed(seed, t, m, "propensity"))
            labeled_b = pud.train.b[pud.train.s == 1]
            pseudo = None
            if (labeled_b == 1).all():
                pseudo = _shared_mined(shared, pud, cfg.mining_per_positive)
            return fit_mam(pud.train, pud.val, numerator=numerator,
                           propensity_cfg=prop_cfg, on_degenerate="substitute",
                           pseudo_ids=pseudo)
        prop_cfg = dataclasses.replace(cfg.rf, seed=derive_seed(seed, t, m, "ram"))
        return fit_ram(pud.train, numerator=numerator, propensity_cfg=prop_cfg,
                       pseudo_ids=_shared_mined(shared, pud,
                                                cfg.mining_per_positive))

    model = stage("fit", _fit)

    def _score():
        test_scores = model.score(pud.test.features)
        val_pos = pud.val.s == 1
        val_scores = model.score(pud.val.features[val_pos])
        return test_scores, val_scores

    test_scores, val_scores = stage("score", _score)
    report = stage("evaluate", lambda: evaluate_scores(
        method, t, m, seed, test_scores, pud.test.y, val_scores,
        target_recall=cfg.target_recall))
    if method == "MAM" and model.notes:
        report.notes = model.notes
    return report


@dataclass
class GridResult:
    reports: list
    aggregates: dict
    elapsed_seconds: float = 0.0


def run_grid(prepared: PreparedData, cfg: BenchmarkConfig,
             progress=None) -> GridResult:
    """Run every (t, m, seed, method) cell; failures are recorded per cell
    and do not stop the grid."""
    started = time.time()
    oracle = _grid_oracle(prepared, cfg)
    reports = []
    for t in cfg.toppers:
        for m in cfg.mixings:
            for seed in cfg.seeds:
                shared = {}
                for method in cfg.methods:
                    try:
                        rep = run_cell(prepared, cfg, t, m, method, seed,
                                       oracle=oracle, shared=shared)
                    except StageError as exc:
                        rep = EvaluationReport(
                            method=method, topper=t, mixing=m, seed=seed,
                            auc=float("nan"),
                            precision_at_recall99=float("nan"),
                            threshold=float("nan"), tp=0, fp=0, tn=0, fn=0,
                            notes=f"failed at {exc.stage}: {exc.cause}")
                    reports.append(rep)
                    if progress is not None:
                        progress(rep)
    return GridResult(reports=reports, aggregates=aggregate_reports(reports),
                      elapsed_seconds=time.time() - started)


@dataclass
class CellAggregate:
    auc_mean: float
    auc_std: float
    precision_mean: float
    precision_std: float
    n_runs: int
    n_failed: int


def aggregate_reports(reports) -> dict:
    """Mean and across-seed stddev per (topper, mixing, method).

    Rows are sorted by seed before reducing so the result is independent
    of execution order; failed cells count separately.
    """
    groups = {}
    for rep in reports:
        groups.setdefault((rep.topper, rep.mixing, rep.method), []).append(rep)

    out = {}
    for key, reps in groups.items():
        reps = sorted(reps, key=lambda r: r.seed)
        ok = [r for r in reps if np.isfinite(r.auc)]
        n_failed = len(reps) - len(ok)
        if not ok:
            out[key] = CellAggregate(float("nan"), float("nan"), float("nan"),
                                     float("nan"), 0, n_failed)
            continue
        aucs = np.array([r.auc for r in ok])
        precs = np.array([r.precision_at_recall99 for r in ok])
        ddof = 1 if len(ok) > 1 else 0
        out[key] = CellAggregate(
            auc_mean=float(aucs.mean()),
            auc_std=float(aucs.std(ddof=ddof)),
            precision_mean=float(precs.mean()),
            precision_std=float(precs.std(ddof=ddof)),
            n_runs=len(ok), n_failed=n_failed)
    return out
