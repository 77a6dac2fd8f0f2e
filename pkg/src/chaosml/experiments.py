"""Benchmark pipelines, configs and reports.

Each named benchmark runs normalisation, optional SMOTE, the chaotic
transform, an optional LDA stage, the iteration sweep and the metrics, and
also scores the same readout on untransformed features as a baseline.
"""

from __future__ import annotations

import copy
import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import __version__
from .attractors import AttractorSpec, IntegrationConfig
from .circuit import (
    DEFAULT_R8,
    R_SCALE,
    CircuitConfig,
    circuit_transform,
    power_estimate,
    resistors_to_params,
    rho_to_r9,
)
from .data import (
    HCV_SCHEMA,
    DataError,
    Dataset,
    SplitConfig,
    Task,
    generate_blobs,
    generate_sinc,
    import_embedding,
    load_abalone,
    load_csv,
    load_iris_bundled,
    load_mnist_idx,
    concat,
    pca_reduce,
    smote_balance,
    split_indices,
    zscore,
)
from .readout import (
    Readout,
    SweepMode,
    accuracy,
    confusion,
    evaluate,
    fit_predict,
    iteration_sweep,
    lda_fit,
)
from .transform import TrajectoryTensor, transform

log = logging.getLogger(__name__)

BENCHMARKS = ("sinc", "sinc-dual", "abalone", "iris", "liver", "mnist")
DATA_SOURCES = ("sinc", "abalone", "iris", "liver", "mnist", "blobs", "csv")


class ConfigError(ValueError):
    pass


# -- config -----------------------------------------------------------------

@dataclass
class DataConfig:
    source: str = "sinc"
    path: str | None = None  # csv / abalone / liver / iris file
    images: list[str] = field(default_factory=list)  # mnist idx image files
    labels: list[str] = field(default_factory=list)  # matching label files
    embedding: str | None = None  # external low-dimensional coordinates (headerless csv)
    reduce_dim: int | None = None  # built-in PCA when no embedding is supplied
    n_samples: int = 2048  # sinc
    subsample: int | None = None  # keep the first n rows (quick runs)
    normalize: bool = True
    smote: bool = False
    smote_k: int = 5
    target: str | None = None  # csv source
    task: str = "classification"  # csv source
    blob_counts: list[int] = field(default_factory=lambda: [120, 40, 30, 20])
    blob_features: int = 12
    blob_separation: float = 1.0


@dataclass
class ExperimentConfig:
    name: str = "sinc"
    data: DataConfig = field(default_factory=DataConfig)
    attractors: list[dict] = field(default_factory=lambda: [AttractorSpec.lorenz().to_dict()])
    dt: float = 1e-2
    n_steps: int = 100
    readout: str = "linear"
    readout_params: dict = field(default_factory=dict)
    extra_readouts: list[str] = field(default_factory=list)
    lda_components: int | None = None
    train_fraction: float = 0.8
    seed: int = 0
    mode: str = "paper"
    out_dir: str | None = None
    circuit: dict | None = None
    scan: dict = field(default_factory=dict)
    optimize: dict = field(default_factory=dict)

    def validate(self) -> ExperimentConfig:
        if self.data.source not in DATA_SOURCES:
            raise ConfigError(f"unknown data source {self.data.source!r}; choose from {DATA_SOURCES}")
        for r in [self.readout, *self.extra_readouts]:
            try:
                Readout(r)
            except ValueError:
                raise ConfigError(f"unknown readout {r!r}; choose from {[k.value for k in Readout]}") from None
        try:
            SweepMode(self.mode)
        except ValueError:
            raise ConfigError(f"mode must be 'paper' or 'honest', got {self.mode!r}") from None
        if not self.attractors:
            raise ConfigError("at least one attractor is required")
        try:
            self.specs()
            self.integration()
            self.split()
            if self.circuit is not None:
                CircuitConfig(**self.circuit)
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from None
        return self

    def specs(self) -> list[AttractorSpec]:
        return [AttractorSpec.from_dict(a) for a in self.attractors]

    def integration(self) -> IntegrationConfig:
        return IntegrationConfig(self.dt, self.n_steps)

    def split(self, seed: int | None = None) -> SplitConfig:
        return SplitConfig(self.train_fraction, self.seed if seed is None else seed)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        d = copy.deepcopy(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        data = d.pop("data", {}) or {}
        dknown = {f.name for f in fields(DataConfig)}
        if set(data) - dknown:
            raise ConfigError(f"unknown data keys: {sorted(set(data) - dknown)}")
        return cls(data=DataConfig(**data), **d)


def _lorenz(sigma=10.0, beta=8.0 / 3.0, rho=28.0) -> dict:
    return AttractorSpec.lorenz(sigma, beta, rho).to_dict()


def default_config(name: str) -> ExperimentConfig:
    """Default settings for each named benchmark."""
    if name == "sinc":
        return ExperimentConfig(name, DataConfig("sinc", normalize=False), [_lorenz(rho=28.0)], readout="linear")
    if name == "sinc-dual":
        return ExperimentConfig(name, DataConfig("sinc", normalize=False),
                                [_lorenz(rho=28.0), _lorenz(rho=97.0)], readout="linear")
    if name == "abalone":
        return ExperimentConfig(name, DataConfig("abalone"), [_lorenz(10.0, 2.667, 64.917)], readout="linear")
    if name == "iris":
        return ExperimentConfig(name, DataConfig("iris"), [_lorenz(rho=97.0)], readout="ridge_classifier",
                                extra_readouts=["linear_svm", "knn"], lda_components=2, train_fraction=0.7)
    if name == "liver":
        return ExperimentConfig(name, DataConfig("liver", smote=True), [_lorenz(rho=97.0)],
                                readout="ridge_classifier", extra_readouts=["linear_svm", "knn"])
    if name == "mnist":
        return ExperimentConfig(name, DataConfig("mnist", reduce_dim=7), [_lorenz(rho=97.0)],
                                readout="ridge_classifier")
    raise ConfigError(f"unknown benchmark {name!r}; choose from {BENCHMARKS}")


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path=None, name: str | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Benchmark defaults, then the YAML file, then explicit overrides."""
    file_cfg = {}
    if path is not None:
        try:
            file_cfg = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    name = name or file_cfg.get("name") or "sinc"
    base = default_config(name).to_dict() if name in BENCHMARKS else ExperimentConfig(name).to_dict()
    merged = _merge(_merge(base, file_cfg), overrides or {})
    merged["name"] = name
    return ExperimentConfig.from_dict(merged).validate()


# -- data -------------------------------------------------------------------

def _need(path, what):
    if not path:
        raise DataError(f"{what} path not configured")
    if not Path(path).exists():
        raise DataError(f"{what} file not found: {path}")
    return path


def load_dataset(dc: DataConfig, seed: int = 0) -> Dataset:
    """Load and preprocess a dataset (z-score, reduction, SMOTE) per config."""
    src = dc.source
    if src == "sinc":
        ds = generate_sinc(dc.n_samples, seed)
    elif src == "blobs":
        ds = generate_blobs(tuple(dc.blob_counts), dc.blob_features, dc.blob_separation, seed)
    elif src == "iris":
        ds = load_csv(_need(dc.path, "iris"), _iris_schema()) if dc.path else load_iris_bundled()
    elif src == "abalone":
        ds = load_abalone(_need(dc.path, "abalone"))
    elif src == "liver":
        ds = load_csv(_need(dc.path, "HCV"), HCV_SCHEMA)
    elif src == "csv":
        from .data import CsvSchema

        if not dc.target:
            raise DataError("csv source needs data.target")
        ds = load_csv(_need(dc.path, "csv"), CsvSchema(dc.target, Task(dc.task)))
    elif src == "mnist":
        if not dc.images or len(dc.images) != len(dc.labels):
            raise DataError("mnist needs matching data.images and data.labels lists")
        parts = [load_mnist_idx(_need(i, "mnist images"), _need(l, "mnist labels"))
                 for i, l in zip(dc.images, dc.labels)]
        ds = parts[0]
        for p in parts[1:]:
            ds = concat(ds, p)
    else:  # pragma: no cover - validated earlier
        raise DataError(src)
    if dc.subsample:
        ds = ds.subset(slice(0, dc.subsample))
    if dc.embedding:
        ds = ds.with_X(import_embedding(_need(dc.embedding, "embedding"), ds.n_samples))
    elif dc.reduce_dim:
        ds = ds.with_X(pca_reduce(ds.X, dc.reduce_dim)[1])
    if dc.normalize:
        ds = zscore(ds)
    if dc.smote:
        ds = smote_balance(ds, dc.smote_k, seed)
    return ds


def _iris_schema():
    from .data import IRIS_SCHEMA

    return IRIS_SCHEMA


# -- reports ----------------------------------------------------------------

def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    return o


@dataclass
class Report:
    experiment: str
    config: dict
    metric: str = ""
    baseline: dict = field(default_factory=dict)  # readout -> metric on raw features
    results: dict = field(default_factory=dict)  # readout -> sweep dict
    best_iteration: int | None = None
    best_metric: float | None = None
    confusion: dict | None = None  # {"before": counts, "after": counts}
    extra: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    power: dict | None = None
    version: str = __version__

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> Report:
        return cls(**d)

    def content(self) -> dict:
        """Everything except wall-clock timing (for reproducibility checks)."""
        d = self.to_dict()
        d.pop("timing", None)
        return d

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(self.to_json())
        primary = self.results.get(self.config.get("readout"))
        if primary and "metric_curve" in primary:
            with open(out / "curve.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["iteration", primary["metric"]])
                for k, v in enumerate(primary["metric_curve"], start=1):
                    w.writerow([k, repr(v)])
        if self.confusion:
            with open(out / "confusion.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["stage", "true", "pred", "count", "row_fraction"])
                for stage, m in self.confusion.items():
                    counts = np.asarray(m["counts"])
                    norm = np.asarray(m["normalized"])
                    for i in range(counts.shape[0]):
                        for j in range(counts.shape[1]):
                            w.writerow([stage, i, j, int(counts[i, j]), repr(float(norm[i, j]))])
        return out / "report.json"


def _cm_dict(pred, truth, n):
    cm = confusion(pred, truth, n)
    return {"counts": cm.counts, "normalized": cm.normalized, "percent": cm.percent()}


# -- pipelines --------------------------------------------------------------

def _features_at(tensors: list[TrajectoryTensor], k: int) -> np.ndarray:
    return np.hstack([t.values[:, :, k, :].reshape(t.n_samples, -1) for t in tensors])


class _Slices:
    """Per-iteration concatenated features of one or more transformers."""

    def __init__(self, tensors: list[TrajectoryTensor]):
        self.tensors = tensors
        self.n_steps = tensors[0].n_steps

    def __len__(self):
        return self.n_steps

    def __getitem__(self, k):
        return _features_at(self.tensors, k)


def compute_tensors(cfg: ExperimentConfig, ds: Dataset) -> list[TrajectoryTensor]:
    if cfg.circuit is not None:
        return [circuit_transform(ds.X, CircuitConfig(**cfg.circuit))]
    return [transform(ds.X, spec, cfg.integration()) for spec in cfg.specs()]


def run_pipeline(cfg: ExperimentConfig, ds: Dataset | None = None, tensors=None) -> Report:
    cfg.validate()
    t0 = time.perf_counter()
    if ds is None:
        ds = load_dataset(cfg.data, cfg.seed)
    t_load = time.perf_counter()
    if tensors is None:
        tensors = compute_tensors(cfg, ds)
    t_tf = time.perf_counter()
    tr, te = split_indices(ds.n_samples, cfg.split())
    slices = _Slices(tensors)
    readouts = [cfg.readout, *[r for r in cfg.extra_readouts if r != cfg.readout]]
    lda = cfg.lda_components
    report = Report(cfg.name, cfg.to_dict())
    for r in readouts:
        params = cfg.readout_params if r == cfg.readout else {}
        report.baseline[r] = evaluate(r, ds.X[tr], ds.y[tr], ds.X[te], ds.y[te], params, lda)
        sweep = iteration_sweep(slices, ds.y, tr, te, r, params, lda=lda, mode=cfg.mode, seed=cfg.seed)
        report.results[r] = sweep.to_dict()
    primary = report.results[cfg.readout]
    report.metric = primary["metric"]
    report.best_iteration = primary["best_iteration"]
    report.best_metric = primary["test_metric"]
    if ds.task is Task.CLASSIFICATION:
        k = report.best_iteration - 1
        Xb_tr, Xb_te = ds.X[tr], ds.X[te]
        F = slices[k]
        Xa_tr, Xa_te = F[tr], F[te]
        if lda:
            p = lda_fit(Xb_tr, ds.y[tr], lda)
            Xb_tr, Xb_te = p.transform(Xb_tr), p.transform(Xb_te)
            p = lda_fit(Xa_tr, ds.y[tr], lda)
            Xa_tr, Xa_te = p.transform(Xa_tr), p.transform(Xa_te)
        n = ds.n_classes
        before = fit_predict(cfg.readout, Xb_tr, ds.y[tr], Xb_te, cfg.readout_params)
        after = fit_predict(cfg.readout, Xa_tr, ds.y[tr], Xa_te, cfg.readout_params)
        report.confusion = {"before": _cm_dict(before, ds.y[te], n), "after": _cm_dict(after, ds.y[te], n)}
        report.extra["class_names"] = list(ds.class_names or [])
    report.extra["n_samples"] = ds.n_samples
    report.extra["n_vars"] = ds.n_vars
    report.extra["n_train"], report.extra["n_test"] = len(tr), len(te)
    if cfg.circuit is not None:
        cc = CircuitConfig(**cfg.circuit)
        rho, beta = resistors_to_params(cc)
        report.power = power_estimate(cc).to_dict()
        report.extra["circuit_params"] = {"rho": rho, "beta": beta, "time_constant_s": cc.time_constant}
    t_end = time.perf_counter()
    report.timing = {"load_s": t_load - t0, "transform_s": t_tf - t_load, "sweep_s": t_end - t_tf}
    return report


def run_benchmark(name: str, cfg: ExperimentConfig | None = None, **kw) -> Report:
    if name not in BENCHMARKS:
        raise ConfigError(f"unknown benchmark {name!r}; choose from {BENCHMARKS}")
    cfg = cfg or default_config(name)
    return run_pipeline(cfg, **kw)


def emit_split_study(name_or_cfg, n_splits: int = 20, iteration: int | None = None,
                     ds: Dataset | None = None) -> Report:
    """Accuracy over seeds 0..n_splits-1 at a fixed iteration.

    The iteration defaults to the paper-mode optimum on the seed-0 split.
    Baseline accuracies on raw features are collected per split as well, so
    a paired comparison is available.
    """
    from scipy import stats

    cfg = default_config(name_or_cfg) if isinstance(name_or_cfg, str) else name_or_cfg
    cfg.validate()
    if n_splits < 1:
        raise ValueError("n_splits must be >= 1")
    if ds is None:
        ds = load_dataset(cfg.data, cfg.seed)
    if ds.task is not Task.CLASSIFICATION:
        raise ConfigError("split study needs a classification benchmark")
    tensors = compute_tensors(cfg, ds)
    slices = _Slices(tensors)
    readouts = [cfg.readout, *[r for r in cfg.extra_readouts if r != cfg.readout]]
    lda = cfg.lda_components
    report = Report(cfg.name + "-splits", cfg.to_dict(), metric="accuracy")
    for r in readouts:
        params = cfg.readout_params if r == cfg.readout else {}
        if iteration is None:
            tr, te = split_indices(ds.n_samples, cfg.split(0))
            k = iteration_sweep(slices, ds.y, tr, te, r, params, lda=lda).best_index
        else:
            k = iteration - 1
        F = slices[k]
        after, before = [], []
        for seed in range(n_splits):
            tr, te = split_indices(ds.n_samples, cfg.split(seed))
            after.append(evaluate(r, F[tr], ds.y[tr], F[te], ds.y[te], params, lda))
            before.append(evaluate(r, ds.X[tr], ds.y[tr], ds.X[te], ds.y[te], params, lda))
        a, b = np.array(after), np.array(before)
        entry = {
            "iteration": k + 1,
            "per_split": a,
            "mean": float(a.mean()),
            "std": float(a.std(ddof=1)) if n_splits > 1 else 0.0,
            "baseline_per_split": b,
            "baseline_mean": float(b.mean()),
            "baseline_std": float(b.std(ddof=1)) if n_splits > 1 else 0.0,
        }
        if n_splits > 1 and np.any(a != b):
            t, p = stats.ttest_rel(a, b)
            entry["paired_t"], entry["paired_p"] = float(t), float(p)
        report.results[r] = entry
    report.best_iteration = report.results[cfg.readout]["iteration"]
    report.best_metric = report.results[cfg.readout]["mean"]
    return report


def run_scan(cfg: ExperimentConfig, ds: Dataset | None = None) -> tuple[Report, list]:
    """LLE-versus-accuracy table over a rho grid."""
    from .lyapunov import lle_accuracy_scan, pearson_r, welch_t

    cfg.validate()
    sc = {"rho_min": 1, "rho_max": 100, "rho_step": 1, "readout": "linear_svm", **cfg.scan}
    grid = np.arange(sc["rho_min"], sc["rho_max"] + 1e-9, sc["rho_step"])
    if ds is None:
        ds = load_dataset(cfg.data, cfg.seed)
    spec = cfg.specs()[0]
    t0 = time.perf_counter()
    rows = lle_accuracy_scan(ds, grid, cfg.integration(), sc["readout"], sc.get("params"), cfg.split(),
                             sigma=spec.params.get("sigma", 10.0), beta=spec.params.get("beta", 8.0 / 3.0))
    lle = np.array([r.lle for r in rows])
    acc = np.array([r.best_accuracy for r in rows])
    report = Report("scan", cfg.to_dict(), metric="accuracy")
    stats_ = {}
    try:
        stats_["pearson_r_all"] = pearson_r(lle, acc)
    except ValueError as exc:
        stats_["pearson_r_all"] = None
        log.info("pearson (all rows): %s", exc)
    chaotic = lle > 0
    try:
        stats_["pearson_r_chaotic"] = pearson_r(lle[chaotic], acc[chaotic])
    except ValueError as exc:
        stats_["pearson_r_chaotic"] = None
        log.info("pearson (chaotic rows): %s", exc)
    try:
        t, dof = welch_t(lle, acc)
        stats_["welch_t_lle_vs_accuracy"] = {"t": t, "dof": dof}
    except ValueError:
        stats_["welch_t_lle_vs_accuracy"] = None
    report.extra = {"stats": stats_, "n_rows": len(rows), "n_chaotic": int(chaotic.sum())}
    report.results = {"rows": [asdict(r) for r in rows]}
    best = int(np.argmax(acc))
    report.best_metric = float(acc[best])
    report.best_iteration = rows[best].best_iteration
    report.timing = {"scan_s": time.perf_counter() - t0}
    return report, rows


def sweep_objective(cfg: ExperimentConfig, ds: Dataset):
    """Paper-mode best metric on the seed-0 split as a function of attractor params.

    The returned callable minimises: RMSE for regressors, 1 - accuracy for
    classifiers.
    """
    tr, te = split_indices(ds.n_samples, cfg.split())
    base = cfg.specs()
    icfg = cfg.integration()
    maximize = Readout(cfg.readout).is_classifier

    def objective(params: dict) -> float:
        if "rho1" in params:
            specs = [base[0].replace(rho=params["rho1"]), base[-1].replace(rho=params["rho2"])]
        else:
            specs = [base[0].replace(**{k: v for k, v in params.items() if k in base[0].params})]
        tensors = [transform(ds.X, s, icfg) for s in specs]
        res = iteration_sweep(_Slices(tensors), ds.y, tr, te, cfg.readout, cfg.readout_params,
                              lda=cfg.lda_components)
        return 1.0 - res.best_metric if maximize else res.best_metric

    return objective


def run_optimize(cfg: ExperimentConfig, ds: Dataset | None = None):
    from .hyperopt import SearchSpace, optimize, optimize_dual_rho

    cfg.validate()
    oc = {"budget": 40, "strategy": "refine", **cfg.optimize}
    if ds is None:
        ds = load_dataset(cfg.data, cfg.seed)
    objective = sweep_objective(cfg, ds)
    t0 = time.perf_counter()
    if len(cfg.attractors) == 2:
        bounds = oc.get("bounds", {"rho1": [1.0, 100.0], "rho2": [1.0, 100.0]})
        space = SearchSpace({k: tuple(v) for k, v in bounds.items()})
        res = optimize_dual_rho(lambda a, b: objective({"rho1": a, "rho2": b}), space, oc["budget"],
                                cfg.seed, oc["strategy"])
    else:
        bounds = oc.get("bounds", {"rho": [1.0, 100.0]})
        space = SearchSpace({k: tuple(v) for k, v in bounds.items()})
        res = optimize(objective, space, oc["budget"], oc["strategy"], cfg.seed)
    report = Report("optimize-" + cfg.name, cfg.to_dict(), metric="objective")
    report.best_metric = res.best_objective
    report.extra = {"best_params": res.best_params, "n_evaluations": len(res.log)}
    report.results = {"log": [{"params": p, "objective": v} for p, v in res.log]}
    report.timing = {"optimize_s": time.perf_counter() - t0}
    return report, res


def run_circuit(cfg: ExperimentConfig, ds: Dataset | None = None) -> Report:
    """Benchmark pipeline on circuit-model trajectories (plus the power budget)."""
    circ = dict(cfg.circuit or {})
    spec = cfg.specs()[0]
    circ.setdefault("sigma", spec.params["sigma"])
    circ.setdefault("n_steps", cfg.n_steps)
    circ.setdefault("tau_per_step", cfg.dt)
    if "R9" not in circ:
        circ["R9"] = rho_to_r9(spec.params["rho"], circ.get("R8", DEFAULT_R8))
    if "R4" not in circ and "R5" not in circ:
        circ["R4"] = circ["R5"] = 0.5 * R_SCALE / spec.params["beta"]
    cc = CircuitConfig(**circ)
    cfg = replace(cfg, circuit=cc.to_dict())
    report = run_pipeline(cfg, ds)
    report.experiment = "circuit-" + cfg.name
    return report
