"""Cross-module invariants on synthetic data only; no files are read."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from chaosml.attractors import AttractorSpec, IntegrationConfig
from chaosml.data import (
    SplitConfig,
    generate_blobs,
    generate_sinc,
    normalize_target_01,
    smote_balance,
    split_indices,
    zscore,
)
from chaosml.lyapunov import lle_accuracy_scan, read_scan_csv, write_scan_csv
from chaosml.readout import confusion, iteration_sweep, ridge_classify_fit, ridge_classify_predict
from chaosml.transform import transform

SHORT = IntegrationConfig(1e-2, 30)

finite = st.floats(-1e3, 1e3, allow_nan=False)


@given(arrays(float, st.tuples(st.integers(3, 40), st.integers(1, 5)), elements=finite))
def test_zscore_gives_zero_mean_unit_std(X):
    spread = np.ptp(X, axis=0)
    if np.any(spread < 1e-3 * (1 + np.abs(X).max(axis=0))):
        return  # near-constant columns are rejected, covered elsewhere
    from chaosml.data import Dataset, Task

    Z = zscore(Dataset(X, np.zeros(len(X)), Task.REGRESSION)).X
    np.testing.assert_allclose(Z.mean(axis=0), 0.0, atol=1e-9)
    np.testing.assert_allclose(Z.std(axis=0, ddof=1), 1.0, rtol=1e-9)


@given(arrays(float, st.integers(2, 50), elements=finite))
def test_target_normalization_spans_unit_interval(y):
    if np.ptp(y) == 0:
        return
    t = normalize_target_01(y)
    assert t.min() == 0.0 and t.max() == 1.0
    assert np.all(np.diff(t[np.argsort(y, kind="stable")]) >= 0)  # order preserved up to rounding


@settings(max_examples=25)
@given(st.lists(st.integers(2, 30), min_size=2, max_size=5), st.integers(0, 2**16))
def test_smote_balances_every_class(counts, seed):
    ds = generate_blobs(counts, n_features=3, seed=seed)
    out = smote_balance(ds, k=5, seed=seed)
    assert set(np.bincount(out.y)) == {max(counts)}
    np.testing.assert_array_equal(out.X[: ds.n_samples], ds.X)


@given(st.lists(st.integers(0, 3), min_size=1, max_size=60), st.integers(0, 2**16))
def test_confusion_rows_sum_to_one(truth, seed):
    truth = np.array(truth)
    pred = np.random.default_rng(seed).integers(0, 4, size=len(truth))
    cm = confusion(pred, truth, 4)
    sums = cm.normalized.sum(axis=1)
    support = cm.counts.sum(axis=1) > 0
    np.testing.assert_allclose(sums[support], 1.0, atol=1e-9)
    np.testing.assert_array_equal(sums[~support], 0.0)
    assert cm.counts.sum() == len(truth)


@pytest.mark.parametrize("readout", ["linear", "ridge"])
def test_regression_sweep_is_deterministic(readout):
    ds = generate_sinc(200, seed=1)
    tr, te = split_indices(ds.n_samples, SplitConfig())
    runs = [iteration_sweep(transform(ds.X, AttractorSpec.lorenz(), SHORT), ds.y, tr, te, readout)
            for _ in range(2)]
    np.testing.assert_array_equal(runs[0].metric_curve, runs[1].metric_curve)
    assert runs[0].best_iteration == runs[1].best_iteration
    assert runs[0].best_metric == runs[0].metric_curve.min()


@pytest.mark.parametrize("readout", ["ridge_classifier", "linear_svm", "knn"])
def test_classification_sweep_is_deterministic(readout):
    ds = zscore(generate_blobs((30, 12, 8), n_features=4, seed=2))
    tr, te = split_indices(ds.n_samples, SplitConfig())
    runs = [iteration_sweep(transform(ds.X, AttractorSpec.lorenz(rho=97.0), SHORT), ds.y, tr, te, readout)
            for _ in range(2)]
    np.testing.assert_array_equal(runs[0].metric_curve, runs[1].metric_curve)
    assert runs[0].best_metric == runs[0].metric_curve.max()
    assert runs[0].best_iteration == int(np.argmax(runs[0].metric_curve)) + 1


@given(st.floats(0.01, 100), st.floats(-100, 100), st.integers(0, 2**16))
def test_ridge_argmax_invariant_under_increasing_affine_map(scale, shift, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(40, 5))
    y = rng.integers(0, 4, size=40)
    m = ridge_classify_fit(X, y)
    scores = m.decision_function(X)
    np.testing.assert_array_equal(m.classes[np.argmax(scale * scores + shift, 1)], ridge_classify_predict(m, X))


@given(st.permutations(range(3)), st.integers(0, 2**16))
def test_label_permutation_permutes_predictions(perm, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(45, 4))
    y = np.repeat(np.arange(3), 15)
    perm = np.array(perm)
    a = ridge_classify_predict(ridge_classify_fit(X, y), X)
    b = ridge_classify_predict(ridge_classify_fit(X, perm[y]), X)
    np.testing.assert_array_equal(perm[a], b)


def test_scan_is_reproducible(tmp_path):
    ds = zscore(generate_blobs((30, 12, 8), n_features=4, seed=4))
    kw = dict(readout="ridge_classifier", lle_kwargs={"n_steps": 3000})
    a = lle_accuracy_scan(ds, [2.0, 28.0, 97.0], SHORT, **kw)
    b = lle_accuracy_scan(ds, [2.0, 28.0, 97.0], SHORT, **kw)
    assert a == b
    write_scan_csv(tmp_path / "scan.csv", a)
    assert read_scan_csv(tmp_path / "scan.csv") == a
