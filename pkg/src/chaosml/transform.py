"""Chaotic feature transform: predictors become initial conditions of a flow."""

from __future__ import annotations

import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

from .attractors import AttractorSpec, DivergenceError, IntegrationConfig, integrate

Y_SEED = 1.05


class TransformDivergence(RuntimeError):
    def __init__(self, sample: int, variable: int, step: int):
        self.sample, self.variable, self.step = sample, variable, step
        super().__init__(f"trajectory diverged for sample {sample}, variable {variable} at step {step}")


def encode_initial(v) -> np.ndarray:
    """(v, 1.05, -v); vectorised over ``v``."""
    v = np.asarray(v, dtype=float)
    return np.stack([v, np.full_like(v, Y_SEED), -v], axis=-1)


Encoder = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class TrajectoryTensor:
    """values[sample, variable, iteration, axis]."""

    values: np.ndarray
    spec: AttractorSpec
    cfg: IntegrationConfig

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 4 or v.shape[3] != 3:
            raise ValueError(f"trajectory tensor must be (samples, vars, iterations, 3), got {v.shape}")
        if v.shape[2] != self.cfg.n_steps:
            raise ValueError("iteration dimension does not match n_steps")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.values.shape

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_vars(self) -> int:
        return self.values.shape[1]

    @property
    def n_steps(self) -> int:
        return self.values.shape[2]

    def subset(self, idx) -> TrajectoryTensor:
        return TrajectoryTensor(self.values[idx], self.spec, self.cfg)


@dataclass(frozen=True)
class FeatureMatrix:
    values: np.ndarray
    iteration: int  # 0-based
    specs: tuple[AttractorSpec, ...] = field(default_factory=tuple)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.specs and v.shape[1] % (3 * len(self.specs)):
            raise ValueError("column count is not a multiple of 3 * n_transformers")


def _integrate_block(spec, init, cfg, offset):
    try:
        return integrate(spec, init, cfg)
    except DivergenceError as e:
        i, j = e.index if e.index else (0, 0)
        raise TransformDivergence(offset + i, j, e.step) from None


def transform(
    X,
    spec: AttractorSpec,
    cfg: IntegrationConfig = IntegrationConfig(),
    *,
    encoder: Encoder = encode_initial,
    workers: int = 1,
    chunk: int = 4096,
) -> TrajectoryTensor:
    """Integrate every (sample, variable) initial condition independently.

    ``X`` may be a matrix or a :class:`~chaosml.data.Dataset`. Work is
    chunked over samples; with ``workers > 1`` chunks run on a thread pool
    and are reassembled in order, so the result does not depend on the
    worker count.
    """
    X = np.asarray(getattr(X, "X", X), dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    init = encoder(X)
    n = len(X)
    starts = list(range(0, max(n, 1), chunk))
    if workers <= 1 or len(starts) == 1:
        blocks = [_integrate_block(spec, init[s:s + chunk], cfg, s) for s in starts]
    else:
        with ThreadPoolExecutor(workers) as pool:
            blocks = list(pool.map(lambda s: _integrate_block(spec, init[s:s + chunk], cfg, s), starts))
    values = np.concatenate(blocks, axis=0) if n else np.empty((0, X.shape[1], cfg.n_steps, 3))
    return TrajectoryTensor(values, spec, cfg)


def iter_slices(
    X, spec: AttractorSpec, cfg: IntegrationConfig = IntegrationConfig(), encoder: Encoder = encode_initial
) -> Iterator[FeatureMatrix]:
    """Stream feature matrices one iteration at a time without storing the tensor."""
    from .attractors import _check, _rk4

    X = np.asarray(getattr(X, "X", X), dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    s = encoder(X)
    for k in range(cfg.n_steps):
        with np.errstate(over="ignore", invalid="ignore"):
            s = _rk4(spec, s, cfg.dt)
        try:
            _check(s, k)
        except DivergenceError as e:
            i, j = e.index if e.index else (0, 0)
            raise TransformDivergence(i, j, k) from None
        yield FeatureMatrix(s.reshape(len(X), -1).copy(), k, (spec,))


def slice_iteration(t: TrajectoryTensor, k: int) -> FeatureMatrix:
    """Row i is (x, y, z) of every variable at 0-based iteration ``k``."""
    if not 0 <= k < t.n_steps:
        raise IndexError(f"iteration {k} out of range [0, {t.n_steps})")
    return FeatureMatrix(t.values[:, :, k, :].reshape(t.n_samples, -1), k, (t.spec,))


def stack_slices(slices: Sequence[FeatureMatrix], spec: AttractorSpec, cfg: IntegrationConfig) -> TrajectoryTensor:
    arr = np.stack([s.values for s in slices], axis=1)
    n, steps, cols = arr.shape
    return TrajectoryTensor(arr.reshape(n, steps, cols // 3, 3).transpose(0, 2, 1, 3), spec, cfg)


def concat_features(parts: Sequence[FeatureMatrix]) -> FeatureMatrix:
    specs = tuple(s for p in parts for s in p.specs)
    return FeatureMatrix(np.hstack([p.values for p in parts]), parts[0].iteration, specs)


def dual_transform(
    X, spec_a: AttractorSpec, spec_b: AttractorSpec, cfg: IntegrationConfig, k: int
) -> FeatureMatrix:
    """Two transformers on the same input, concatenated at the same iteration."""
    if spec_a.kind != spec_b.kind:
        raise ValueError("dual transformers must share the attractor kind")
    a = slice_iteration(transform(X, spec_a, cfg), k)
    b = slice_iteration(transform(X, spec_b, cfg), k)
    return concat_features([a, b])


# -- tensor files -----------------------------------------------------------

_MAGIC = b"CHTT"
_VERSION = 1


def save_tensor(path, t: TrajectoryTensor, extra: dict | None = None) -> None:
    """Binary layout: magic, u32 version, u32 header length, JSON header, float64 LE payload."""
    header = {
        "dims": list(t.shape),
        "dt": t.cfg.dt,
        "n_steps": t.cfg.n_steps,
        "spec": t.spec.to_dict(),
        "dtype": "<f8",
        "order": "sample,variable,iteration,axis",
    }
    if extra:
        header["extra"] = extra
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(t.values, dtype="<f8").tobytes())


def load_tensor(path) -> tuple[TrajectoryTensor, dict]:
    buf = Path(path).read_bytes()
    if buf[:4] != _MAGIC:
        raise ValueError(f"{path}: not a trajectory tensor file")
    version, hlen = struct.unpack("<II", buf[4:12])
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    header = json.loads(buf[12:12 + hlen])
    dims = tuple(header["dims"])
    values = np.frombuffer(buf, dtype="<f8", offset=12 + hlen)
    if values.size != int(np.prod(dims)):
        raise ValueError(f"{path}: payload size does not match dims {dims}")
    spec = AttractorSpec.from_dict(header["spec"])
    cfg = IntegrationConfig(header["dt"], header["n_steps"])
    return TrajectoryTensor(values.reshape(dims).astype(float), spec, cfg), header


def export_slice_csv(path, fm: FeatureMatrix, n_vars: int | None = None) -> None:
    n_cols = fm.values.shape[1]
    n_vars = n_vars or n_cols // 3
    names = [f"t{b}_v{j}_{ax}" for b in range(n_cols // (3 * n_vars)) for j in range(n_vars) for ax in "xyz"]
    np.savetxt(path, fm.values, delimiter=",", header=",".join(names), comments="", fmt="%.17g")
