"""Linear readouts, metrics and the best-iteration sweep."""

from __future__ import annotations

import enum
import json
import logging
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numba
import numpy as np
import scipy.linalg

log = logging.getLogger(__name__)


class SingularSystemError(np.linalg.LinAlgError):
    pass


class ConvergenceWarning(UserWarning):
    pass


# -- ridge ------------------------------------------------------------------

@dataclass(frozen=True)
class RidgeModel:
    weights: np.ndarray  # (features, outputs)
    intercept: np.ndarray  # (outputs,)
    reg_lambda: float = 1.0
    classes: np.ndarray | None = None  # set for classifiers

    def decision_function(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.weights + self.intercept


def ridge_fit(X, y, reg_lambda: float = 1.0) -> RidgeModel:
    """Solve (Xc'Xc + lambda I) w = Xc'yc on centred data; intercept is unpenalised."""
    if reg_lambda < 0:
        raise ValueError("reg_lambda must be >= 0")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    squeeze = y.ndim == 1
    Y = y[:, None] if squeeze else y
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"X has {X.shape[0]} rows, y has {Y.shape[0]}")
    xm, ym = X.mean(axis=0), Y.mean(axis=0)
    Xc, Yc = X - xm, Y - ym
    A = Xc.T @ Xc
    A[np.diag_indices_from(A)] += reg_lambda
    b = Xc.T @ Yc
    if reg_lambda == 0 and np.linalg.cond(A) > 1e14:
        raise SingularSystemError("normal equations are singular at lambda=0; use lambda > 0")
    try:
        W = scipy.linalg.solve(A, b, assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        if reg_lambda == 0:
            raise SingularSystemError("normal equations are singular at lambda=0; use lambda > 0") from None
        W = np.linalg.lstsq(A, b, rcond=None)[0]
    b0 = ym - xm @ W
    if squeeze:
        return RidgeModel(W, b0, float(reg_lambda))
    return RidgeModel(W, b0, float(reg_lambda))


def ridge_predict(model: RidgeModel, X) -> np.ndarray:
    out = model.decision_function(X)
    return out[:, 0] if out.shape[1] == 1 else out


def linear_fit(X, y) -> RidgeModel:
    """Ordinary least squares (ridge at lambda = 0)."""
    return ridge_fit(X, y, 0.0)


def ridge_classify_fit(X, labels, reg_lambda: float = 1.0) -> RidgeModel:
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if len(classes) < 2:
        raise ValueError("ridge classification needs at least 2 classes")
    if len(classes) == 2:
        T = np.where(labels == classes[1], 1.0, -1.0)[:, None]
    else:
        T = np.where(labels[:, None] == classes[None, :], 1.0, -1.0)
    m = ridge_fit(X, T, reg_lambda)
    return RidgeModel(m.weights, m.intercept, m.reg_lambda, classes)


def ridge_classify_predict(model: RidgeModel, X) -> np.ndarray:
    scores = model.decision_function(X)
    if scores.shape[1] == 1:
        return model.classes[(scores[:, 0] > 0).astype(int)]
    return model.classes[np.argmax(scores, axis=1)]


# -- linear SVM -------------------------------------------------------------

@dataclass(frozen=True)
class LinearSVMModel:
    weights: np.ndarray  # (features, n_problems)
    bias: np.ndarray  # (n_problems,)
    C: float
    classes: np.ndarray
    dual_history: tuple[tuple[float, ...], ...] = ()
    primal_history: tuple[tuple[float, ...], ...] = ()  # loss of the incumbent after each epoch
    raw_primal_history: tuple[tuple[float, ...], ...] = ()  # loss of the current iterate

    def decision_function(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.weights + self.bias


def _svm_primal(w, Xa, s, C, sw):
    margins = 1.0 - s * (Xa @ w)
    return 0.5 * w @ w + C * np.sum(sw * np.maximum(margins, 0.0))


@numba.njit(cache=True)
def _dcd_epoch(Xa, s, U, Q, alpha, w, order):
    max_pg, min_pg = -np.inf, np.inf
    for i in order:
        if Q[i] == 0.0:
            continue
        g = s[i] * np.dot(w, Xa[i]) - 1.0
        if alpha[i] == 0.0:
            pg = min(g, 0.0)
        elif alpha[i] == U[i]:
            pg = max(g, 0.0)
        else:
            pg = g
        max_pg = max(max_pg, pg)
        min_pg = min(min_pg, pg)
        if pg != 0.0:
            old = alpha[i]
            alpha[i] = min(max(old - g / Q[i], 0.0), U[i])
            w += (alpha[i] - old) * s[i] * Xa[i]
    return max_pg - min_pg


def _svm_dcd(Xa, s, C, sw, max_epochs, tol, rng):
    """Dual coordinate descent for the L1-loss SVM (bias folded into Xa).

    The dual objective falls monotonically; the primal of the current iterate
    need not, so the lowest-primal iterate seen so far is kept and returned.
    """
    n = len(Xa)
    alpha = np.zeros(n)
    w = np.zeros(Xa.shape[1])
    Q = np.einsum("ij,ij->i", Xa, Xa)
    U = C * sw
    best_w, best_p = w.copy(), _svm_primal(w, Xa, s, C, sw)
    dual_hist, raw_hist, best_hist = [], [], []
    converged = False
    for _ in range(max_epochs):
        gap = _dcd_epoch(Xa, s, U, Q, alpha, w, rng.permutation(n))
        p = _svm_primal(w, Xa, s, C, sw)
        if p <= best_p:
            best_w, best_p = w.copy(), p
        dual_hist.append(0.5 * w @ w - alpha.sum())
        raw_hist.append(p)
        best_hist.append(best_p)
        if gap < tol:
            converged = True
            break
    return best_w, dual_hist, raw_hist, best_hist, converged


def linear_svm_fit(
    X,
    labels,
    C: float = 1.0,
    *,
    sample_weight=None,
    max_epochs: int = 1000,
    tol: float = 1e-3,
    seed: int = 0,
    bias_scale: float = 1.0,
) -> LinearSVMModel:
    """One-vs-rest hinge-loss SVM minimising 0.5|w|^2 + C sum(hinge)."""
    if not C > 0:
        raise ValueError("C must be positive")
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if len(classes) < 2:
        raise ValueError("SVM needs at least 2 classes")
    sw = np.ones(len(X)) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    Xa = np.hstack([X, np.full((len(X), 1), bias_scale)])
    problems = [classes[1]] if len(classes) == 2 else list(classes)
    W, B, duals, primals, raws = [], [], [], [], []
    for c in problems:
        s = np.where(labels == c, 1.0, -1.0)
        rng = np.random.default_rng(seed)
        w, dh, rh, ph, ok = _svm_dcd(Xa, s, C, sw, max_epochs, tol, rng)
        if not ok:
            warnings.warn(f"linear SVM (class {c}) did not converge in {max_epochs} epochs",
                          ConvergenceWarning, stacklevel=2)
        W.append(w[:-1])
        B.append(w[-1] * bias_scale)
        duals.append(tuple(dh))
        primals.append(tuple(ph))
        raws.append(tuple(rh))
    return LinearSVMModel(np.column_stack(W), np.array(B), float(C), classes,
                          tuple(duals), tuple(primals), tuple(raws))


def linear_svm_predict(model: LinearSVMModel, X) -> np.ndarray:
    scores = model.decision_function(X)
    if scores.shape[1] == 1:
        return model.classes[(scores[:, 0] > 0).astype(int)]
    return model.classes[np.argmax(scores, axis=1)]


# -- k-NN -------------------------------------------------------------------

def knn_predict(train_X, train_labels, X, k: int = 5) -> np.ndarray:
    train_X = np.asarray(train_X, dtype=float)
    train_labels = np.asarray(train_labels)
    X = np.asarray(X, dtype=float)
    if not 1 <= k <= len(train_X):
        raise ValueError(f"k must be in [1, {len(train_X)}]")
    classes, coded = np.unique(train_labels, return_inverse=True)
    out = np.empty(len(X), dtype=int)
    for start in range(0, len(X), 2048):
        q = X[start:start + 2048]
        d2 = (q * q).sum(1)[:, None] - 2.0 * q @ train_X.T + (train_X * train_X).sum(1)[None, :]
        nn = np.argsort(d2, axis=1, kind="stable")[:, :k]
        votes = np.zeros((len(q), len(classes)), dtype=int)
        np.add.at(votes, (np.repeat(np.arange(len(q)), k), coded[nn].ravel()), 1)
        out[start:start + len(q)] = np.argmax(votes, axis=1)
    return classes[out]


# -- LDA --------------------------------------------------------------------

@dataclass(frozen=True)
class LDAProjection:
    projection: np.ndarray  # (features, components)
    eigenvalues: np.ndarray
    mean: np.ndarray

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) @ self.projection


def lda_fit(X, labels, components: int | None = None) -> LDAProjection:
    """Fisher discriminant directions from the generalised problem Sb v = l Sw v."""
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    classes = np.unique(labels)
    d = X.shape[1]
    max_comp = min(len(classes) - 1, d)
    if components is None:
        components = max_comp
    if not 1 <= components <= max_comp:
        raise ValueError(f"components must be in [1, {max_comp}]")
    mean = X.mean(axis=0)
    Sw = np.zeros((d, d))
    Sb = np.zeros((d, d))
    for c in classes:
        Xc = X[labels == c]
        mc = Xc.mean(axis=0)
        D = Xc - mc
        Sw += D.T @ D
        dm = (mc - mean)[:, None]
        Sb += len(Xc) * dm @ dm.T
    try:
        np.linalg.cholesky(Sw)
        if np.linalg.cond(Sw) > 1e12:
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        eps = 1e-6 * np.trace(Sw) / d if np.trace(Sw) > 0 else 1e-6
        warnings.warn(f"within-class scatter is singular; adding {eps:.3g} * I", stacklevel=2)
        Sw = Sw + eps * np.eye(d)
    vals, vecs = scipy.linalg.eigh(Sb, Sw)
    order = np.argsort(vals)[::-1][:components]
    # eigh returns v' Sw v = 1; rescale so the projected pooled within-class
    # covariance Sw / (n - n_classes) is the identity
    vecs = vecs[:, order] * np.sqrt(max(len(X) - len(classes), 1))
    vals = vals[order]
    flip = np.sign(vecs[np.argmax(np.abs(vecs), axis=0), np.arange(components)])
    vecs = vecs * np.where(flip == 0, 1.0, flip)
    return LDAProjection(vecs, vals, mean)


def lda_transform(proj: LDAProjection, X) -> np.ndarray:
    return proj.transform(X)


# -- metrics ----------------------------------------------------------------

def rmse(pred, truth) -> float:
    pred, truth = np.asarray(pred, dtype=float), np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise ValueError("prediction and truth lengths differ")
    if pred.size == 0:
        raise ValueError("empty input")
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def accuracy(pred, truth) -> float:
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError("prediction and truth lengths differ")
    if pred.size == 0:
        raise ValueError("empty input")
    return float(np.mean(pred == truth))


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # rows = true class
    normalized: np.ndarray
    empty_rows: tuple[int, ...] = ()

    def percent(self) -> np.ndarray:
        """Row-normalised percentages rounded to whole numbers."""
        return np.rint(100.0 * self.normalized).astype(int)


def confusion(pred, truth, n_classes: int | None = None) -> ConfusionMatrix:
    pred, truth = np.asarray(pred, dtype=int), np.asarray(truth, dtype=int)
    if pred.shape != truth.shape:
        raise ValueError("prediction and truth lengths differ")
    if pred.size == 0:
        raise ValueError("empty input")
    n = n_classes or int(max(pred.max(), truth.max())) + 1
    counts = np.zeros((n, n), dtype=int)
    np.add.at(counts, (truth, pred), 1)
    support = counts.sum(axis=1)
    norm = np.zeros((n, n))
    ok = support > 0
    norm[ok] = counts[ok] / support[ok, None]
    return ConfusionMatrix(counts, norm, tuple(np.flatnonzero(~ok).tolist()))


# -- readout dispatch -------------------------------------------------------

class Readout(str, enum.Enum):
    LINEAR = "linear"  # OLS regression
    RIDGE = "ridge"  # ridge regression
    RIDGE_CLASSIFIER = "ridge_classifier"
    LINEAR_SVM = "linear_svm"
    KNN = "knn"

    @property
    def is_classifier(self) -> bool:
        return self in (Readout.RIDGE_CLASSIFIER, Readout.LINEAR_SVM, Readout.KNN)


def fit_predict(kind: Readout | str, Xtr, ytr, Xte, params: dict | None = None) -> np.ndarray:
    """Fit readout ``kind`` on the training rows and predict the test rows."""
    kind = Readout(kind)
    params = dict(params or {})
    if kind is Readout.LINEAR:
        return ridge_predict(linear_fit(Xtr, ytr), Xte)
    if kind is Readout.RIDGE:
        return ridge_predict(ridge_fit(Xtr, ytr, params.get("reg_lambda", 1.0)), Xte)
    if kind is Readout.RIDGE_CLASSIFIER:
        return ridge_classify_predict(ridge_classify_fit(Xtr, ytr, params.get("reg_lambda", 1.0)), Xte)
    if kind is Readout.LINEAR_SVM:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            m = linear_svm_fit(Xtr, ytr, params.get("C", 1.0), max_epochs=params.get("max_epochs", 1000),
                               seed=params.get("seed", 0))
        return linear_svm_predict(m, Xte)
    if kind is Readout.KNN:
        return knn_predict(Xtr, ytr, Xte, params.get("k", 5))
    raise ValueError(kind)  # pragma: no cover


def evaluate(kind: Readout | str, Xtr, ytr, Xte, yte, params: dict | None = None, lda: int | None = None) -> float:
    """Test metric (RMSE for regressors, accuracy for classifiers).

    With ``lda`` set, an LDA projection with that many components is fitted
    on the training rows and applied to both sides first.
    """
    kind = Readout(kind)
    if lda:
        proj = lda_fit(Xtr, ytr, lda)
        Xtr, Xte = proj.transform(Xtr), proj.transform(Xte)
    pred = fit_predict(kind, Xtr, ytr, Xte, params)
    return accuracy(pred, yte) if kind.is_classifier else rmse(pred, yte)


# -- sweep ------------------------------------------------------------------

class SweepMode(str, enum.Enum):
    PAPER = "paper"  # optimum picked on the test split
    HONEST = "honest"  # optimum picked on a validation split carved from train


@dataclass(frozen=True)
class SweepResult:
    metric_curve: np.ndarray  # curve the optimum was selected on
    best_index: int  # 0-based
    best_metric: float
    maximize: bool
    mode: SweepMode = SweepMode.PAPER
    test_metric: float | None = None  # metric reported on the test split
    test_curve: np.ndarray | None = None

    @property
    def best_iteration(self) -> int:
        """1-based iteration (iteration 1 = first RK4 step)."""
        return self.best_index + 1

    @property
    def metric_name(self) -> str:
        return "accuracy" if self.maximize else "rmse"

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "metric": self.metric_name,
            "best_iteration": self.best_iteration,
            "best_metric": self.best_metric,
            "test_metric": self.test_metric,
            "metric_curve": [float(v) for v in self.metric_curve],
            "test_curve": None if self.test_curve is None else [float(v) for v in self.test_curve],
        }


def _optimum(curve: np.ndarray, maximize: bool) -> int:
    # first attainment; NaNs (failed fits) never win
    c = np.where(np.isfinite(curve), curve, -np.inf if maximize else np.inf)
    return int(np.argmax(c) if maximize else np.argmin(c))


def sweep_curve(
    slices: Callable[[int], np.ndarray] | Sequence[np.ndarray],
    n_steps: int,
    y,
    train_idx,
    test_idx,
    readout: Readout | str,
    params: dict | None = None,
    lda: int | None = None,
) -> np.ndarray:
    get = slices if callable(slices) else slices.__getitem__
    y = np.asarray(y)
    curve = np.empty(n_steps)
    for k in range(n_steps):
        F = get(k)
        try:
            curve[k] = evaluate(readout, F[train_idx], y[train_idx], F[test_idx], y[test_idx], params, lda)
        except np.linalg.LinAlgError:
            curve[k] = np.nan
    return curve


def iteration_sweep(
    tensor,
    y,
    train_idx,
    test_idx,
    readout: Readout | str,
    params: dict | None = None,
    *,
    lda: int | None = None,
    mode: SweepMode | str = SweepMode.PAPER,
    val_fraction: float = 0.25,
    seed: int = 0,
) -> SweepResult:
    """Fit and score the readout on every iteration slice of ``tensor``.

    ``tensor`` is a TrajectoryTensor (or anything with ``n_steps`` and a
    ``values`` array of shape (samples, vars, steps, 3)), or a list of
    per-iteration feature matrices. In paper mode the optimum is selected on
    the test rows. In honest mode a validation block is split from the
    training rows; the optimum is chosen there and the test metric is
    reported at that iteration after refitting on all training rows.
    """
    readout = Readout(readout)
    mode = SweepMode(mode)
    maximize = readout.is_classifier
    if hasattr(tensor, "values") and np.ndim(tensor.values) == 4:
        vals = tensor.values
        n_steps = vals.shape[2]
        get = lambda k: vals[:, :, k, :].reshape(len(vals), -1)  # noqa: E731
    else:
        n_steps = len(tensor)
        get = lambda k: np.asarray(tensor[k])  # noqa: E731
    train_idx, test_idx = np.asarray(train_idx), np.asarray(test_idx)
    test_curve = sweep_curve(get, n_steps, y, train_idx, test_idx, readout, params, lda)
    if mode is SweepMode.PAPER:
        best = _optimum(test_curve, maximize)
        return SweepResult(test_curve, best, float(test_curve[best]), maximize, mode,
                           float(test_curve[best]), test_curve)
    perm = np.random.RandomState(seed).permutation(len(train_idx))
    n_val = max(1, int(round(val_fraction * len(train_idx))))
    val_idx, fit_idx = train_idx[perm[:n_val]], train_idx[perm[n_val:]]
    val_curve = sweep_curve(get, n_steps, y, fit_idx, val_idx, readout, params, lda)
    best = _optimum(val_curve, maximize)
    return SweepResult(val_curve, best, float(val_curve[best]), maximize, mode,
                       float(test_curve[best]), test_curve)


# -- model records ----------------------------------------------------------

def save_model(path, model, provenance: dict | None = None) -> None:
    if isinstance(model, RidgeModel):
        rec = {"type": "ridge", "weights": model.weights.tolist(), "intercept": model.intercept.tolist(),
               "reg_lambda": model.reg_lambda,
               "classes": None if model.classes is None else model.classes.tolist()}
    elif isinstance(model, LinearSVMModel):
        rec = {"type": "linear_svm", "weights": model.weights.tolist(), "bias": model.bias.tolist(),
               "C": model.C, "classes": model.classes.tolist()}
    else:
        raise TypeError(f"cannot save {type(model).__name__}")
    rec["provenance"] = provenance or {}
    Path(path).write_text(json.dumps(rec, indent=1))


def load_model(path):
    rec = json.loads(Path(path).read_text())
    classes = None if rec.get("classes") is None else np.asarray(rec["classes"])
    if rec["type"] == "ridge":
        return RidgeModel(np.asarray(rec["weights"], dtype=float), np.asarray(rec["intercept"], dtype=float),
                          rec["reg_lambda"], classes)
    if rec["type"] == "linear_svm":
        return LinearSVMModel(np.asarray(rec["weights"], dtype=float), np.asarray(rec["bias"], dtype=float),
                              rec["C"], classes)
    raise ValueError(f"unknown model type {rec['type']!r}")
