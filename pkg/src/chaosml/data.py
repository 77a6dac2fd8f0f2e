"""Datasets: generation, file parsing, normalisation, balancing and splitting."""

from __future__ import annotations

import csv
import enum
import logging
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)


class Task(str, enum.Enum):
    REGRESSION = "regression"
    CLASSIFICATION = "classification"


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    task: Task
    class_names: tuple[str, ...] | None = None
    feature_names: tuple[str, ...] | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise DataError(f"X must be 2-D, got shape {X.shape}")
        task = Task(self.task)
        y = np.asarray(self.y, dtype=int if task is Task.CLASSIFICATION else float)
        if y.ndim != 1 or len(y) != len(X):
            raise DataError(f"X has {len(X)} rows but y has shape {y.shape}")
        if not np.all(np.isfinite(X)):
            raise DataError("X contains non-finite entries")
        if task is Task.REGRESSION and not np.all(np.isfinite(y)):
            raise DataError("y contains non-finite entries")
        if task is Task.CLASSIFICATION and len(y):
            if y.min() < 0:
                raise DataError("class indices must be non-negative")
            n_classes = len(self.class_names) if self.class_names else int(y.max()) + 1
            if y.max() >= n_classes:
                raise DataError("class index out of range of class_names")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "task", task)

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_vars(self) -> int:
        return self.X.shape[1]

    @property
    def n_classes(self) -> int:
        if self.task is not Task.CLASSIFICATION:
            raise DataError("regression dataset has no classes")
        if self.class_names:
            return len(self.class_names)
        return int(self.y.max()) + 1

    def subset(self, idx) -> Dataset:
        return replace(self, X=self.X[idx], y=self.y[idx])

    def with_X(self, X) -> Dataset:
        return replace(self, X=X)


# -- synthetic data ---------------------------------------------------------

def sinc(x):
    x = np.asarray(x, dtype=float)
    out = np.ones_like(x)
    nz = x != 0
    out[nz] = np.sin(x[nz]) / x[nz]
    return out


def generate_sinc(n: int = 2048, seed: int = 0) -> Dataset:
    """Uniform samples on [-pi, pi] with unnormalised sinc targets."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    x = rng.uniform(-np.pi, np.pi, size=n)
    return Dataset(x[:, None], sinc(x), Task.REGRESSION, feature_names=("x",))


def generate_blobs(
    counts: Sequence[int] = (120, 40, 30, 20),
    n_features: int = 12,
    separation: float = 1.5,
    seed: int = 0,
) -> Dataset:
    """Imbalanced Gaussian classes with random centres; a stand-in for tabular data."""
    rng = np.random.default_rng(seed)
    centres = rng.normal(0.0, separation, size=(len(counts), n_features))
    X = np.vstack([c + rng.normal(size=(n, n_features)) for c, n in zip(centres, counts)])
    y = np.repeat(np.arange(len(counts)), counts)
    names = tuple(f"class{i}" for i in range(len(counts)))
    return Dataset(X, y, Task.CLASSIFICATION, class_names=names)


# -- normalisation ----------------------------------------------------------

@dataclass(frozen=True)
class Scaler:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, X) -> np.ndarray:
        return zscore_apply(self, X)


def zscore_fit(X) -> Scaler:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 2:
        raise DataError("need at least 2 samples to fit a scaler")
    mean = X.mean(axis=0)
    std = X.std(axis=0, ddof=1)
    # a constant column can show round-off spread around its mean
    bad = np.flatnonzero(~(std > 1e-12 * np.maximum(np.abs(mean), 1e-300)) | (np.ptp(X, axis=0) == 0))
    if bad.size:
        raise DataError(f"zero variance column: {bad.tolist()}")
    return Scaler(mean, std)


def zscore_apply(scaler: Scaler, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return (X - scaler.mean) / scaler.std


def zscore(ds: Dataset) -> Dataset:
    return ds.with_X(zscore_apply(zscore_fit(ds.X), ds.X))


def normalize_target_01(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    lo, hi = y.min(), y.max()
    if not hi > lo:
        raise DataError("constant target cannot be rescaled to [0, 1]")
    return (y - lo) / (hi - lo)


# -- splitting --------------------------------------------------------------

@dataclass(frozen=True)
class SplitConfig:
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")


def split_indices(n: int, cfg: SplitConfig) -> tuple[np.ndarray, np.ndarray]:
    """Shuffle with the legacy Mersenne-Twister stream and cut.

    The permutation comes from ``RandomState(seed)`` and the test block is
    taken from its head, which gives the same partition the common
    ``train_test_split(test_size=1 - f, random_state=seed)`` idiom produces.
    """
    if n < 2:
        raise DataError("need at least 2 samples to split")
    n_train = int(math.floor(cfg.train_fraction * n + 1e-9))
    n_test = n - n_train
    if n_train < 1 or n_test < 1:
        raise DataError(f"split of {n} samples at {cfg.train_fraction} leaves an empty partition")
    perm = np.random.RandomState(cfg.seed).permutation(n)
    return perm[n_test:], perm[:n_test]


def train_test_split(ds: Dataset, cfg: SplitConfig = SplitConfig()) -> tuple[Dataset, Dataset]:
    tr, te = split_indices(ds.n_samples, cfg)
    return ds.subset(tr), ds.subset(te)


# -- SMOTE ------------------------------------------------------------------

def _knn_same_class(Xc: np.ndarray, k: int) -> np.ndarray:
    d2 = ((Xc[:, None, :] - Xc[None, :, :]) ** 2).sum(-1)
    np.fill_diagonal(d2, np.inf)
    return np.argsort(d2, axis=1, kind="stable")[:, :k]


def smote_balance(ds: Dataset, k: int = 5, seed: int = 0) -> Dataset:
    """Oversample every class up to the majority count.

    Originals are kept verbatim (in their original order) and synthetic rows
    are appended class by class. A synthetic row is ``x + lam * (nb - x)``
    with ``x`` a random member of the class, ``nb`` one of its ``k`` nearest
    same-class neighbours and ``lam ~ U[0, 1]``.
    """
    if ds.task is not Task.CLASSIFICATION:
        raise DataError("SMOTE requires a classification dataset")
    rng = np.random.default_rng(seed)
    counts = np.bincount(ds.y, minlength=ds.n_classes)
    target = counts.max()
    new_X, new_y = [ds.X], [ds.y]
    for c, count in enumerate(counts):
        need = target - count
        if need == 0:
            continue
        if count < 2:
            raise DataError(f"class {c} has {count} sample(s); SMOTE needs at least 2")
        kc = k
        if kc >= count:
            kc = count - 1
            log.warning("class %d has %d samples; clamping k from %d to %d", c, count, k, kc)
        Xc = ds.X[ds.y == c]
        nbrs = _knn_same_class(Xc, kc)
        base = rng.integers(0, count, size=need)
        pick = nbrs[base, rng.integers(0, kc, size=need)]
        lam = rng.uniform(0.0, 1.0, size=need)[:, None]
        new_X.append(Xc[base] + lam * (Xc[pick] - Xc[base]))
        new_y.append(np.full(need, c))
    return replace(ds, X=np.vstack(new_X), y=np.concatenate(new_y))


# -- CSV loading ------------------------------------------------------------

@dataclass(frozen=True)
class CsvSchema:
    """How to turn a delimited text file into a :class:`Dataset`.

    ``categorical`` maps a column name to either ``"onehot"`` or a dict of
    string -> number codes. ``class_map`` maps raw target strings to class
    names; raw values mapped to ``None`` are dropped. ``names`` supplies the
    header for headerless files.
    """

    target: str
    task: Task
    features: tuple[str, ...] | None = None
    drop: tuple[str, ...] = ()
    categorical: Mapping[str, object] = field(default_factory=dict)
    class_map: Mapping[str, str | None] | None = None
    class_order: tuple[str, ...] | None = None
    missing: str = "drop"  # or "mean"
    names: tuple[str, ...] | None = None
    missing_tokens: tuple[str, ...] = ("", "NA", "NaN", "nan", "?")


ABALONE_SCHEMA = CsvSchema(
    target="Rings",
    task=Task.REGRESSION,
    names=("Sex", "Length", "Diameter", "Height", "Whole_weight",
           "Shucked_weight", "Viscera_weight", "Shell_weight", "Rings"),
    categorical={"Sex": {"M": 0.0, "F": 1.0, "I": 2.0}},
)

ABALONE_ONEHOT_SCHEMA = replace(ABALONE_SCHEMA, categorical={"Sex": "onehot"})

IRIS_SCHEMA = CsvSchema(target="species", task=Task.CLASSIFICATION)

HCV_SCHEMA = CsvSchema(
    target="Category",
    task=Task.CLASSIFICATION,
    features=("Age", "Sex", "ALB", "ALP", "ALT", "AST", "BIL", "CHE", "CHOL", "CREA", "GGT", "PROT"),
    categorical={"Sex": {"m": 0.0, "f": 1.0}},
    class_map={
        "0=Blood Donor": "healthy",
        "0s=suspect Blood Donor": None,
        "1=Hepatitis": "hepatitis",
        "2=Fibrosis": "fibrosis",
        "3=Cirrhosis": "cirrhosis",
    },
    class_order=("healthy", "hepatitis", "fibrosis", "cirrhosis"),
)


def _read_rows(path: Path, schema: CsvSchema) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if schema.names is not None:
        header = list(schema.names)
    else:
        if not rows:
            raise DataError(f"{path}: empty file")
        header, rows = [h.strip() for h in rows[0]], rows[1:]
    for i, r in enumerate(rows):
        if len(r) != len(header):
            raise DataError(f"{path}: row {i + 1} has {len(r)} fields, header has {len(header)}")
    return header, rows


def load_csv(path, schema: CsvSchema) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    header, rows = _read_rows(path, schema)
    if schema.target not in header:
        raise DataError(f"{path}: target column {schema.target!r} not in header {header}")
    col = {h: i for i, h in enumerate(header)}
    if schema.features is not None:
        feats = list(schema.features)
        missing_cols = [f for f in feats if f not in col]
        if missing_cols:
            raise DataError(f"{path}: feature column(s) {missing_cols} not found")
    else:
        # unnamed leading index columns are dropped
        feats = [h for h in header if h != schema.target and h not in schema.drop and h != ""]

    raw_y = [r[col[schema.target]].strip() for r in rows]
    keep = np.ones(len(rows), dtype=bool)
    if schema.class_map is not None:
        unknown = sorted({v for v in raw_y if v not in schema.class_map})
        if unknown:
            raise DataError(f"{path}: unmapped target values {unknown}")
        keep &= np.array([schema.class_map[v] is not None for v in raw_y], dtype=bool)

    columns, names = [], []
    for f in feats:
        vals = [r[col[f]].strip() for r in rows]
        spec = schema.categorical.get(f)
        if spec == "onehot":
            levels = sorted({v for v in vals if v not in schema.missing_tokens})
            for lev in levels:
                columns.append(np.array([np.nan if v in schema.missing_tokens else float(v == lev) for v in vals]))
                names.append(f"{f}={lev}")
            continue
        out = np.empty(len(vals))
        for i, v in enumerate(vals):
            if v in schema.missing_tokens:
                out[i] = np.nan
            elif spec is not None:
                if v not in spec:
                    raise DataError(f"{path}: row {i + 1} column {f!r} has unknown category {v!r}")
                out[i] = spec[v]
            else:
                try:
                    out[i] = float(v)
                except ValueError:
                    raise DataError(f"{path}: row {i + 1} column {f!r} is not numeric: {v!r}") from None
        columns.append(out)
        names.append(f)
    X = np.column_stack(columns) if columns else np.empty((len(rows), 0))

    if schema.task is Task.REGRESSION:
        y = np.array([np.nan if v in schema.missing_tokens else float(v) for v in raw_y])
        keep &= np.isfinite(y)
    else:
        keep &= np.array([v not in schema.missing_tokens for v in raw_y], dtype=bool)

    nan_rows = ~np.all(np.isfinite(X), axis=1)
    if schema.missing == "drop":
        keep &= ~nan_rows
        X = X[keep]
    elif schema.missing == "mean":
        X = X[keep]
        means = np.nanmean(X, axis=0)
        r, c = np.nonzero(~np.isfinite(X))
        X[r, c] = means[c]
    else:
        raise ValueError(f"unknown missing-value policy {schema.missing!r}")
    if nan_rows.any():
        log.info("%s: %d row(s) with missing values (%s)", path, int(nan_rows.sum()), schema.missing)

    if schema.task is Task.REGRESSION:
        return Dataset(X, y[keep], Task.REGRESSION, feature_names=tuple(names))

    labels = [schema.class_map[v] if schema.class_map else v for v, k in zip(raw_y, keep) if k]
    order = list(schema.class_order) if schema.class_order else sorted(set(labels))
    index = {c: i for i, c in enumerate(order)}
    return Dataset(X, np.array([index[c] for c in labels]), Task.CLASSIFICATION,
                   class_names=tuple(order), feature_names=tuple(names))


def load_abalone(path, onehot_sex: bool = False) -> Dataset:
    """Abalone with ring counts rescaled to [0, 1]."""
    ds = load_csv(path, ABALONE_ONEHOT_SCHEMA if onehot_sex else ABALONE_SCHEMA)
    return replace(ds, y=normalize_target_01(ds.y))


def load_iris_bundled() -> Dataset:
    """Fisher's iris as shipped with scikit-learn (no download needed)."""
    from sklearn.datasets import load_iris

    b = load_iris()
    return Dataset(b.data, b.target, Task.CLASSIFICATION,
                   class_names=tuple(b.target_names), feature_names=tuple(b.feature_names))


# -- IDX (MNIST) ------------------------------------------------------------

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

_IDX_DTYPES = {0x08: ">u1", 0x09: ">i1", 0x0B: ">i2", 0x0C: ">i4", 0x0D: ">f4", 0x0E: ">f8"}
_IDX_CODES = {np.dtype(v).newbyteorder("=").str[1:]: k for k, v in _IDX_DTYPES.items()}


def _open_maybe_gz(path: Path):
    import gzip

    with open(path, "rb") as fh:
        head = fh.read(2)
    return gzip.open(path, "rb") if head == b"\x1f\x8b" else open(path, "rb")


def read_idx(path, expect_magic: int | None = None) -> np.ndarray:
    path = Path(path)
    with _open_maybe_gz(path) as fh:
        buf = fh.read()
    if len(buf) < 4:
        raise DataError(f"{path}: truncated header at byte offset {len(buf)}")
    (magic,) = struct.unpack(">I", buf[:4])
    if expect_magic is not None and magic != expect_magic:
        raise DataError(f"{path}: bad magic 0x{magic:08x} at byte offset 0, expected 0x{expect_magic:08x}")
    if magic >> 16 != 0:
        raise DataError(f"{path}: bad magic 0x{magic:08x} at byte offset 0")
    code, ndim = (magic >> 8) & 0xFF, magic & 0xFF
    if code not in _IDX_DTYPES:
        raise DataError(f"{path}: unknown IDX type code 0x{code:02x} at byte offset 2")
    hdr_end = 4 + 4 * ndim
    if len(buf) < hdr_end:
        raise DataError(f"{path}: truncated dimension header at byte offset {len(buf)}")
    dims = struct.unpack(f">{ndim}I", buf[4:hdr_end])
    dtype = np.dtype(_IDX_DTYPES[code])
    expected = int(np.prod(dims)) * dtype.itemsize
    if len(buf) - hdr_end != expected:
        raise DataError(
            f"{path}: payload is {len(buf) - hdr_end} bytes starting at byte offset {hdr_end}, "
            f"expected {expected}"
        )
    return np.frombuffer(buf, dtype=dtype, offset=hdr_end).reshape(dims).astype(dtype.newbyteorder("="))


def write_idx(path, arr) -> None:
    arr = np.asarray(arr)
    key = arr.dtype.newbyteorder("=").str[1:]
    if key not in _IDX_CODES:
        raise DataError(f"dtype {arr.dtype} has no IDX type code")
    code = _IDX_CODES[key]
    magic = (code << 8) | arr.ndim
    with open(path, "wb") as fh:
        fh.write(struct.pack(">I", magic))
        fh.write(struct.pack(f">{arr.ndim}I", *arr.shape))
        fh.write(arr.astype(np.dtype(_IDX_DTYPES[code])).tobytes())


def load_mnist_idx(images_path, labels_path) -> Dataset:
    """Flattened raw pixels in [0, 255]; no normalisation."""
    images = read_idx(images_path, IDX_IMAGES_MAGIC)
    labels = read_idx(labels_path, IDX_LABELS_MAGIC)
    if images.ndim != 3 or labels.ndim != 1:
        raise DataError("expected a 3-D image array and a 1-D label array")
    if len(images) != len(labels):
        raise DataError(f"{len(images)} images but {len(labels)} labels")
    return Dataset(images.reshape(len(images), -1).astype(float), labels.astype(int),
                   Task.CLASSIFICATION, class_names=tuple(str(d) for d in range(10)))


def concat(a: Dataset, b: Dataset) -> Dataset:
    return replace(a, X=np.vstack([a.X, b.X]), y=np.concatenate([a.y, b.y]))


# -- dimensionality reduction -----------------------------------------------

@dataclass(frozen=True)
class PCAProjection:
    mean: np.ndarray
    components: np.ndarray  # (vars, d)
    explained_variance: np.ndarray

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) @ self.components

    def inverse(self, Z) -> np.ndarray:
        return np.asarray(Z) @ self.components.T + self.mean


def pca_reduce(X, d: int) -> tuple[PCAProjection, np.ndarray]:
    """Principal components from the covariance eigendecomposition."""
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if not 1 <= d <= min(n, p):
        raise ValueError(f"d must be in [1, {min(n, p)}], got {d}")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / max(n - 1, 1)
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1][:d]
    vals, vecs = np.clip(vals[order], 0.0, None), vecs[:, order]
    # sign: largest-magnitude loading positive
    flip = np.sign(vecs[np.argmax(np.abs(vecs), axis=0), np.arange(d)])
    vecs = vecs * np.where(flip == 0, 1.0, flip)
    proj = PCAProjection(mean, vecs, vals)
    return proj, proj.transform(X)


def import_embedding(path, n_expected: int | None = None) -> np.ndarray:
    """Headerless CSV of externally computed coordinates, one row per sample."""
    try:
        Z = np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    if not np.all(np.isfinite(Z)):
        raise DataError(f"{path}: non-finite values in embedding")
    if n_expected is not None and len(Z) != n_expected:
        raise DataError(f"{path}: embedding has {len(Z)} rows, labels have {n_expected}")
    return Z
