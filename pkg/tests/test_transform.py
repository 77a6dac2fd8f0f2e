import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from chaosml.attractors import AttractorSpec, IntegrationConfig, integrate, rk4_step
from chaosml.transform import (
    TrajectoryTensor,
    TransformDivergence,
    dual_transform,
    encode_initial,
    export_slice_csv,
    iter_slices,
    load_tensor,
    save_tensor,
    slice_iteration,
    stack_slices,
    transform,
)

L28 = AttractorSpec.lorenz(rho=28.0)
L97 = AttractorSpec.lorenz(rho=97.0)
CFG = IntegrationConfig(1e-2, 30)

matrices = hnp.arrays(float, st.tuples(st.integers(1, 8), st.integers(1, 4)),
                      elements=st.floats(-3, 3, allow_nan=False))


def test_encoding():
    np.testing.assert_array_equal(encode_initial(0.0), [0, 1.05, 0])
    np.testing.assert_array_equal(encode_initial(2.0), [2, 1.05, -2])
    np.testing.assert_array_equal(encode_initial(-1.3), [-1.3, 1.05, 1.3])
    assert encode_initial(np.zeros((4, 3))).shape == (4, 3, 3)


def test_tensor_entries_match_integrate():
    X = np.array([[0.3, -1.2], [2.0, 0.0]])
    t = transform(X, L97, CFG)
    assert t.shape == (2, 2, 30, 3)
    for i in range(2):
        for j in range(2):
            np.testing.assert_array_equal(t.values[i, j], integrate(L97, encode_initial(X[i, j]), CFG))


def test_zero_input_leaves_the_encoded_state():
    t = transform(np.zeros((1, 1)), L28, CFG)
    np.testing.assert_array_equal(t.values[0, 0, 0], rk4_step(L28, [0, 1.05, 0], 1e-2))
    assert not np.array_equal(t.values[0, 0, 0], [0, 1.05, 0])


def test_identical_rows_identical_slices():
    t = transform(np.array([[0.5, 1.0], [0.5, 1.0]]), L28, CFG)
    np.testing.assert_array_equal(t.values[0], t.values[1])


@given(matrices, st.randoms(use_true_random=False))
def test_permuting_samples_permutes_rows(X, rnd):
    perm = list(range(len(X)))
    rnd.shuffle(perm)
    a = transform(X, L28, CFG)
    b = transform(X[perm], L28, CFG)
    np.testing.assert_array_equal(a.values[perm], b.values)


@given(matrices)
def test_transform_is_pure(X):
    np.testing.assert_array_equal(transform(X, L97, CFG).values, transform(X, L97, CFG).values)


@given(matrices, st.integers(1, 4), st.integers(1, 3))
def test_chunking_and_workers_do_not_change_result(X, workers, chunk):
    ref = transform(X, L97, CFG).values
    np.testing.assert_array_equal(transform(X, L97, CFG, workers=workers, chunk=chunk).values, ref)


def test_streamed_slices_match_tensor():
    X = np.random.default_rng(0).normal(size=(9, 3))
    t = transform(X, L97, CFG)
    for fm in iter_slices(X, L97, CFG):
        np.testing.assert_array_equal(fm.values, slice_iteration(t, fm.iteration).values)


def test_slice_shapes_and_restack():
    X = np.random.default_rng(1).normal(size=(6, 4))
    t = transform(X, L28, CFG)
    fm = slice_iteration(t, 5)
    assert fm.values.shape == (6, 12)
    np.testing.assert_array_equal(fm.values[:, 3:6], t.values[:, 1, 5, :])
    back = stack_slices([slice_iteration(t, k) for k in range(t.n_steps)], L28, CFG)
    np.testing.assert_array_equal(back.values, t.values)
    with pytest.raises(IndexError):
        slice_iteration(t, 30)


def test_dual_transform():
    X = np.linspace(-3, 3, 7)[:, None]
    same = dual_transform(X, L28, L28, CFG, 10)
    assert same.values.shape == (7, 6)
    np.testing.assert_array_equal(same.values[:, :3], same.values[:, 3:])
    mixed = dual_transform(X, L28, L97, CFG, 10)
    np.testing.assert_array_equal(mixed.values[:, 3:], slice_iteration(transform(X, L97, CFG), 10).values)
    with pytest.raises(ValueError):
        dual_transform(X, L28, AttractorSpec.default("rossler"), CFG, 10)


def test_divergence_names_sample_variable_step():
    X = np.array([[0.1, 0.2], [0.3, 5e5]])
    with pytest.raises(TransformDivergence) as exc:
        transform(X, L28, CFG, chunk=1)
    assert (exc.value.sample, exc.value.variable) == (1, 1)
    assert exc.value.step == 0


def _mean_log_separation_slope(rho, n_steps):
    v = np.linspace(-3, 3, 25)
    X = np.concatenate([v, v + 1e-6])[:, None]
    t = transform(X, AttractorSpec.lorenz(rho=rho), IntegrationConfig(1e-2, n_steps)).values[:, 0]
    logd = np.log(np.linalg.norm(t[:25] - t[25:], axis=2)).mean(axis=0)
    return np.polyfit(np.arange(1, n_steps + 1), logd, 1)[0]


@pytest.mark.xfail(strict=True, reason="encoded states contract onto the attractor during the first 100 steps")
def test_nearby_inputs_diverge_within_100_iterations():
    assert _mean_log_separation_slope(28.0, 100) > 0


@pytest.mark.parametrize("rho, n_steps", [(28.0, 1000), (97.0, 300)])
def test_nearby_inputs_diverge_after_transient(rho, n_steps):
    assert _mean_log_separation_slope(rho, n_steps) > 0


def test_tensor_file_round_trip(tmp_path):
    t = transform(np.random.default_rng(2).normal(size=(5, 2)), L97, CFG)
    save_tensor(tmp_path / "t.bin", t, {"note": "x"})
    back, header = load_tensor(tmp_path / "t.bin")
    np.testing.assert_array_equal(back.values, t.values)
    assert back.spec == t.spec and back.cfg == t.cfg
    assert header["extra"] == {"note": "x"}
    (tmp_path / "bad.bin").write_bytes(b"NOPE" + bytes(20))
    with pytest.raises(ValueError):
        load_tensor(tmp_path / "bad.bin")


def test_slice_csv_export(tmp_path):
    t = transform(np.ones((2, 2)), L28, CFG)
    export_slice_csv(tmp_path / "s.csv", slice_iteration(t, 0))
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0].split(",")[:3] == ["t0_v0_x", "t0_v0_y", "t0_v0_z"]
    np.testing.assert_array_equal(np.loadtxt(tmp_path / "s.csv", delimiter=",", skiprows=1),
                                  slice_iteration(t, 0).values)


def test_tensor_validation():
    with pytest.raises(ValueError):
        TrajectoryTensor(np.zeros((2, 1, 5, 3)), L28, CFG)
    with pytest.raises(ValueError):
        TrajectoryTensor(np.zeros((2, 1, 30, 2)), L28, CFG)
