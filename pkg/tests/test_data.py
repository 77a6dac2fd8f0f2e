import gzip
import logging
import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from chaosml.data import (
    HCV_SCHEMA,
    IDX_IMAGES_MAGIC,
    IDX_LABELS_MAGIC,
    CsvSchema,
    DataError,
    Dataset,
    SplitConfig,
    Task,
    generate_sinc,
    import_embedding,
    load_abalone,
    load_csv,
    load_mnist_idx,
    normalize_target_01,
    pca_reduce,
    read_idx,
    sinc,
    smote_balance,
    split_indices,
    train_test_split,
    write_idx,
    zscore_apply,
    zscore_fit,
)


def test_sinc_values():
    assert sinc(0.0) == 1.0
    assert abs(sinc(np.pi)) < 1e-15


def test_generate_sinc_defaults():
    ds = generate_sinc()
    assert ds.n_samples == 2048 and ds.n_vars == 1
    assert np.all(np.abs(ds.X) <= np.pi)
    np.testing.assert_array_equal(ds.y, sinc(ds.X[:, 0]))
    np.testing.assert_array_equal(generate_sinc(seed=4).X, generate_sinc(seed=4).X)


def test_dataset_validation():
    with pytest.raises(DataError):
        Dataset(np.zeros((3, 2)), np.zeros(2), Task.REGRESSION)
    with pytest.raises(DataError):
        Dataset(np.array([[np.nan]]), np.zeros(1), Task.REGRESSION)
    with pytest.raises(DataError):
        Dataset(np.zeros((2, 1)), [0, 3], Task.CLASSIFICATION, class_names=("a", "b"))


def test_zscore_two_values_symmetric():
    Z = zscore_apply(zscore_fit([[1.0], [3.0]]), [[1.0], [3.0]])
    s = 1 / math.sqrt(2)  # (3 - 2) / sample std sqrt(2)
    np.testing.assert_allclose(Z[:, 0], [-s, s])


def test_zscore_rejects_constant_column():
    with pytest.raises(DataError, match="zero variance column"):
        zscore_fit([[5.0, 1.0], [5.0, 2.0], [5.0, 3.0]])


@given(hnp.arrays(float, st.tuples(st.integers(3, 30), st.integers(1, 5)),
                  elements=st.floats(-1e3, 1e3, allow_nan=False)))
def test_zscore_moments(X):
    if np.any(np.ptp(X, axis=0) == 0):
        with pytest.raises(DataError):
            zscore_fit(X)
        return
    # columns whose spread is at the round-off level cannot be standardised to 1e-10
    assume(np.all(np.ptp(X, axis=0) > 1e-6 * (1 + np.abs(X).max(axis=0))))
    Z = zscore_apply(zscore_fit(X), X)
    assert np.all(np.abs(Z.mean(axis=0)) < 1e-10)
    np.testing.assert_allclose(Z.std(axis=0, ddof=1), 1.0, atol=1e-10)


def test_normalize_target():
    np.testing.assert_array_equal(normalize_target_01([1, 29]), [0, 1])
    np.testing.assert_array_equal(normalize_target_01([0, 5, 10]), [0, 0.5, 1])
    with pytest.raises(DataError):
        normalize_target_01([2, 2, 2])


def test_split_sizes_iris_like():
    tr, te = split_indices(150, SplitConfig(0.7, 0))
    assert (len(tr), len(te)) == (105, 45)
    assert sorted(np.concatenate([tr, te]).tolist()) == list(range(150))


def test_split_matches_common_toolkit_idiom():
    from sklearn.model_selection import train_test_split as sk_split

    idx = np.arange(150)
    for seed in range(5):
        sk_tr, sk_te = sk_split(idx, test_size=0.3, random_state=seed)
        tr, te = split_indices(150, SplitConfig(0.7, seed))
        np.testing.assert_array_equal(tr, sk_tr)
        np.testing.assert_array_equal(te, sk_te)


def test_twenty_distinct_partitions():
    parts = {tuple(sorted(split_indices(150, SplitConfig(0.7, s))[1])) for s in range(20)}
    assert len(parts) == 20


def test_split_rejects_empty_partition():
    with pytest.raises(DataError):
        split_indices(3, SplitConfig(0.1, 0))


@given(st.integers(2, 400), st.floats(0.05, 0.95), st.integers(0, 2**31 - 1))
def test_split_is_deterministic_partition(n, f, seed):
    cfg = SplitConfig(f, seed)
    try:
        tr, te = split_indices(n, cfg)
    except DataError:
        assert math.floor(f * n + 1e-9) in (0, n)
        return
    assert len(tr) == math.floor(f * n + 1e-9)
    assert not set(tr) & set(te) and len(tr) + len(te) == n
    tr2, te2 = split_indices(n, cfg)
    np.testing.assert_array_equal(tr, tr2)
    np.testing.assert_array_equal(te, te2)


def _imbalanced(counts, d=3, seed=0):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(3 * c, 1.0, size=(n, d)) for c, n in enumerate(counts)])
    return Dataset(X, np.repeat(np.arange(len(counts)), counts), Task.CLASSIFICATION)


def test_smote_counts():
    out = smote_balance(_imbalanced([10, 50]))
    assert np.bincount(out.y).tolist() == [50, 50]


def test_smote_clamps_k(caplog):
    with caplog.at_level(logging.WARNING):
        out = smote_balance(_imbalanced([3, 9]), k=5)
    assert "clamping k" in caplog.text
    assert np.bincount(out.y).tolist() == [9, 9]


def test_smote_needs_two_per_class():
    with pytest.raises(DataError):
        smote_balance(_imbalanced([1, 9]))


@given(st.lists(st.integers(2, 25), min_size=2, max_size=4), st.integers(1, 6), st.integers(0, 1000))
def test_smote_properties(counts, k, seed):
    ds = _imbalanced(counts, seed=seed)
    out = smote_balance(ds, k=k, seed=seed)
    assert len(set(np.bincount(out.y))) == 1
    np.testing.assert_array_equal(out.X[:ds.n_samples], ds.X)
    np.testing.assert_array_equal(out.y[:ds.n_samples], ds.y)
    # each synthetic row lies on a segment between two real same-class rows
    for x, c in zip(out.X[ds.n_samples:], out.y[ds.n_samples:]):
        R = ds.X[ds.y == c]
        ok = False
        for a in R:
            d = R - a
            nd = np.einsum("ij,ij->i", d, d)
            lam = np.where(nd > 0, (d @ (x - a)) / np.where(nd > 0, nd, 1), 0)
            resid = np.linalg.norm(a + lam[:, None] * d - x, axis=1)
            if np.any((lam >= -1e-9) & (lam <= 1 + 1e-9) & (resid < 1e-9)):
                ok = True
                break
        assert ok
    np.testing.assert_array_equal(smote_balance(ds, k=k, seed=seed).X, out.X)


def test_idx_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    imgs = rng.integers(0, 256, size=(7, 28, 28), dtype=np.uint8)
    labels = rng.integers(0, 10, size=7, dtype=np.uint8)
    write_idx(tmp_path / "i", imgs)
    write_idx(tmp_path / "l", labels)
    np.testing.assert_array_equal(read_idx(tmp_path / "i", IDX_IMAGES_MAGIC), imgs)
    ds = load_mnist_idx(tmp_path / "i", tmp_path / "l")
    assert ds.X.shape == (7, 784) and ds.X.max() <= 255
    np.testing.assert_array_equal(ds.y, labels)


@given(hnp.arrays(st.sampled_from([np.uint8, np.int16, np.int32, np.float32, np.float64]),
                  hnp.array_shapes(min_dims=1, max_dims=3, max_side=5)))
def test_idx_round_trip_any_dtype(tmp_path_factory, arr):
    path = tmp_path_factory.mktemp("idx") / "a"
    write_idx(path, arr)
    back = read_idx(path)
    assert back.dtype == arr.dtype
    np.testing.assert_array_equal(back, arr)


def test_idx_gzip_and_magic(tmp_path):
    write_idx(tmp_path / "l", np.arange(5, dtype=np.uint8))
    with open(tmp_path / "l", "rb") as f, gzip.open(tmp_path / "l.gz", "wb") as g:
        g.write(f.read())
    assert read_idx(tmp_path / "l.gz", IDX_LABELS_MAGIC).tolist() == [0, 1, 2, 3, 4]
    with pytest.raises(DataError, match="byte offset 0"):
        read_idx(tmp_path / "l", IDX_IMAGES_MAGIC)


def test_idx_truncated_payload(tmp_path):
    write_idx(tmp_path / "a", np.zeros((4, 4), dtype=np.uint8))
    data = (tmp_path / "a").read_bytes()
    (tmp_path / "b").write_bytes(data[:-3])
    with pytest.raises(DataError, match="byte offset 12"):
        read_idx(tmp_path / "b")


def test_pca_exact_subspace():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(50, 2)) @ rng.normal(size=(2, 6)) + 3.0
    proj, Z = pca_reduce(X, 2)
    assert Z.shape == (50, 2)
    np.testing.assert_allclose(proj.inverse(Z), X, atol=1e-10)
    assert np.all(np.diff(proj.explained_variance) <= 0)


def test_pca_matches_toolkit_variance():
    from sklearn.decomposition import PCA

    X = np.random.default_rng(2).normal(size=(80, 5)) * [5, 3, 2, 1, 0.5]
    proj, _ = pca_reduce(X, 3)
    np.testing.assert_allclose(proj.explained_variance, PCA(3).fit(X).explained_variance_, rtol=1e-10)
    with pytest.raises(ValueError):
        pca_reduce(X, 6)


def test_import_embedding(tmp_path):
    np.savetxt(tmp_path / "e.csv", np.ones((4, 7)), delimiter=",")
    assert import_embedding(tmp_path / "e.csv", 4).shape == (4, 7)
    with pytest.raises(DataError, match="4 rows"):
        import_embedding(tmp_path / "e.csv", 5)


HCV_TEXT = """,Category,Age,Sex,ALB,ALP,ALT,AST,BIL,CHE,CHOL,CREA,GGT,PROT
1,0=Blood Donor,32,m,38.5,52.5,7.7,22.1,7.5,6.93,3.23,106,12.1,69
2,0s=suspect Blood Donor,47,m,22.5,124,79.5,46.7,2.3,6.83,4.3,170,345.6,58.6
3,1=Hepatitis,23,m,47,19.1,38.9,164.2,17,7.09,3.8,79,90.4,70.1
4,2=Fibrosis,29,m,41,NA,2.4,43.1,5.3,6.63,4.51,1040,23.3,73.3
5,3=Cirrhosis,38,f,44,NA,94,60,12,4.37,3.2,61,29,72
6,3=Cirrhosis,46,f,29.6,120,0.9,92.5,85,4.47,3.53,107,103.7,70.2
"""


def test_hcv_schema(tmp_path):
    p = tmp_path / "hcv.csv"
    p.write_text(HCV_TEXT)
    ds = load_csv(p, HCV_SCHEMA)
    assert ds.n_vars == 12
    assert ds.class_names == ("healthy", "hepatitis", "fibrosis", "cirrhosis")
    # suspect donor dropped, two rows with missing ALP dropped
    assert ds.y.tolist() == [0, 1, 3]
    from dataclasses import replace

    imputed = load_csv(p, replace(HCV_SCHEMA, missing="mean"))
    assert imputed.n_samples == 5
    np.testing.assert_allclose(imputed.X[3, 3], np.mean([52.5, 19.1, 120]))


def test_abalone_headerless(tmp_path):
    p = tmp_path / "abalone.data"
    p.write_text("M,0.455,0.365,0.095,0.514,0.2245,0.101,0.15,15\n"
                 "F,0.53,0.42,0.135,0.677,0.2565,0.1415,0.21,9\n"
                 "I,0.33,0.255,0.08,0.205,0.0895,0.0395,0.055,7\n")
    ds = load_abalone(p)
    assert ds.n_vars == 8
    assert ds.X[:, 0].tolist() == [0, 1, 2]
    np.testing.assert_allclose(ds.y, [1, 0.25, 0])
    assert load_abalone(p, onehot_sex=True).n_vars == 10


def test_csv_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b,t\n1,2,x\n3,oops,y\n")
    with pytest.raises(DataError, match="not numeric"):
        load_csv(p, CsvSchema("t", Task.CLASSIFICATION))
    with pytest.raises(DataError, match="target column"):
        load_csv(p, CsvSchema("zz", Task.CLASSIFICATION))
    with pytest.raises(FileNotFoundError):
        load_csv(tmp_path / "missing.csv", CsvSchema("t", Task.CLASSIFICATION))


def test_train_test_split_datasets():
    ds = generate_sinc(100)
    tr, te = train_test_split(ds)
    assert (tr.n_samples, te.n_samples) == (80, 20)
