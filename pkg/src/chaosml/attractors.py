"""Chaotic flows and a fixed-step RK4 integrator.

States are arrays whose last axis holds (x, y, z). Every function here is
vectorised over leading axes, so a whole batch of initial conditions can be
integrated in one call.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numba
import numpy as np

DIVERGENCE_LIMIT = 1e6


class NonFiniteStateError(ValueError):
    pass


class DivergenceError(RuntimeError):
    """Raised when a trajectory leaves the finite / bounded region.

    ``step`` is the 0-based index of the RK4 step that produced the bad state
    and ``index`` is the batch index of the first offending trajectory.
    """

    def __init__(self, step: int, index: tuple[int, ...] | None = None):
        self.step = step
        self.index = index
        msg = f"trajectory diverged at step {step}"
        if index is not None:
            msg += f" (batch index {index})"
        super().__init__(msg)


class AttractorKind(str, enum.Enum):
    LORENZ = "lorenz"
    ROSSLER = "rossler"
    CHEN = "chen"
    CHUA = "chua"
    BURKE_SHAW = "burke_shaw"
    SPROTT = "sprott"


REQUIRED_PARAMS: dict[AttractorKind, tuple[str, ...]] = {
    AttractorKind.LORENZ: ("sigma", "beta", "rho"),
    AttractorKind.ROSSLER: ("a", "b", "c"),
    AttractorKind.CHEN: ("a", "b", "c"),
    AttractorKind.CHUA: ("a", "b", "c", "d"),
    AttractorKind.BURKE_SHAW: ("a", "b"),
    AttractorKind.SPROTT: ("a", "b"),
}

# Benchmark parameter sets used for the attractor comparison on sinc.
DEFAULT_PARAMS: dict[AttractorKind, dict[str, float]] = {
    AttractorKind.LORENZ: {"sigma": 10.0, "beta": 8.0 / 3.0, "rho": 28.0},
    AttractorKind.ROSSLER: {"a": 0.2, "b": 0.2, "c": 5.7},
    AttractorKind.CHEN: {"a": 60.0, "b": 2.667, "c": 97.0},
    AttractorKind.CHUA: {"a": 9.0, "b": 100.0 / 7.0, "c": 8.0 / 7.0, "d": 5.0 / 7.0},
    AttractorKind.BURKE_SHAW: {"a": 10.0, "b": 4.272},
    AttractorKind.SPROTT: {"a": 2.07, "b": 1.79},
}


@dataclass(frozen=True)
class AttractorSpec:
    kind: AttractorKind
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        kind = AttractorKind(self.kind)
        object.__setattr__(self, "kind", kind)
        required = set(REQUIRED_PARAMS[kind])
        given = set(self.params)
        if given != required:
            missing = sorted(required - given)
            extra = sorted(given - required)
            raise ValueError(
                f"{kind.value} requires parameters {sorted(required)}; "
                f"missing={missing} extra={extra}"
            )
        clean = {}
        for name in REQUIRED_PARAMS[kind]:
            value = float(self.params[name])
            if not math.isfinite(value):
                raise ValueError(f"parameter {name} must be finite, got {value}")
            clean[name] = value
        object.__setattr__(self, "params", MappingProxyType(clean))

    @classmethod
    def lorenz(cls, sigma: float = 10.0, beta: float = 8.0 / 3.0, rho: float = 28.0) -> AttractorSpec:
        return cls(AttractorKind.LORENZ, {"sigma": sigma, "beta": beta, "rho": rho})

    @classmethod
    def default(cls, kind: AttractorKind | str) -> AttractorSpec:
        kind = AttractorKind(kind)
        return cls(kind, dict(DEFAULT_PARAMS[kind]))

    def replace(self, **params: float) -> AttractorSpec:
        merged = dict(self.params)
        merged.update(params)
        return AttractorSpec(self.kind, merged)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d: Mapping) -> AttractorSpec:
        return cls(AttractorKind(d["kind"]), dict(d["params"]))

    # hashable despite the mapping field
    def __hash__(self):
        return hash((self.kind, tuple(sorted(self.params.items()))))

    def __eq__(self, other):
        if not isinstance(other, AttractorSpec):
            return NotImplemented
        return self.kind == other.kind and dict(self.params) == dict(other.params)


@dataclass(frozen=True)
class IntegrationConfig:
    dt: float = 1e-2
    n_steps: int = 100

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive and finite, got {self.dt}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps}")
        object.__setattr__(self, "n_steps", int(self.n_steps))


def _chua_diode(x, m0, m1):
    return m1 * x + 0.5 * (m0 - m1) * (np.abs(x + 1.0) - np.abs(x - 1.0))


def _flow(spec: AttractorSpec, s: np.ndarray) -> np.ndarray:
    x, y, z = s[..., 0], s[..., 1], s[..., 2]
    p = spec.params
    kind = spec.kind
    if kind is AttractorKind.LORENZ:
        sigma, beta, rho = p["sigma"], p["beta"], p["rho"]
        dx = -sigma * x + sigma * y
        dy = -x * z + rho * x - y
        dz = x * y - beta * z
    elif kind is AttractorKind.ROSSLER:
        a, b, c = p["a"], p["b"], p["c"]
        dx = -y - z
        dy = x + a * y
        dz = b + z * (x - c)
    elif kind is AttractorKind.CHEN:
        a, b, c = p["a"], p["b"], p["c"]
        dx = a * (y - x)
        dy = (c - a) * x - x * z + c * y
        dz = x * y - b * z
    elif kind is AttractorKind.BURKE_SHAW:
        a, b = p["a"], p["b"]
        dx = -a * (x + y)
        dy = -y - a * x * z
        dz = a * x * y + b
    elif kind is AttractorKind.CHUA:
        # slopes of the diode characteristic are the negated table values
        a, b = p["a"], p["b"]
        m0, m1 = -p["c"], -p["d"]
        dx = a * (y - x - _chua_diode(x, m0, m1))
        dy = x - y + z
        dz = -b * y
    elif kind is AttractorKind.SPROTT:
        # two-parameter Sprott system with coexisting strange attractor and tori
        a, b = p["a"], p["b"]
        dx = y + a * x * y + x * z
        dy = 1.0 - b * x * x + y * z
        dz = x - x * x - y * y
    else:  # pragma: no cover
        raise ValueError(kind)
    return np.stack([dx, dy, dz], axis=-1)


def derivative(spec: AttractorSpec, s) -> np.ndarray:
    """Right-hand side of the flow at state(s) ``s`` (last axis = x, y, z)."""
    s = np.asarray(s, dtype=float)
    if s.shape[-1] != 3:
        raise ValueError(f"state must have trailing dimension 3, got shape {s.shape}")
    if not np.all(np.isfinite(s)):
        raise NonFiniteStateError("non-finite state")
    return _flow(spec, s)


def _rk4(spec: AttractorSpec, s: np.ndarray, dt: float) -> np.ndarray:
    k1 = _flow(spec, s)
    k2 = _flow(spec, s + 0.5 * dt * k1)
    k3 = _flow(spec, s + 0.5 * dt * k2)
    k4 = _flow(spec, s + dt * k3)
    return s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _check(s: np.ndarray, step: int) -> None:
    bad = ~np.isfinite(s) | (np.abs(s) > DIVERGENCE_LIMIT)
    if bad.any():
        idx = np.argwhere(bad)[0][:-1]
        raise DivergenceError(step, tuple(int(i) for i in idx) if idx.size else None)


def rk4_step(spec: AttractorSpec, s, dt: float) -> np.ndarray:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    s = np.asarray(s, dtype=float)
    if not np.all(np.isfinite(s)):
        raise NonFiniteStateError("non-finite state")
    with np.errstate(over="ignore", invalid="ignore"):
        out = _rk4(spec, s, dt)
    _check(out, 0)
    return out


_KIND_CODE = {k: i for i, k in enumerate(AttractorKind)}


def _param_vector(spec: AttractorSpec) -> np.ndarray:
    p = spec.params
    if spec.kind is AttractorKind.LORENZ:
        return np.array([p["sigma"], p["beta"], p["rho"], 0.0])
    if spec.kind is AttractorKind.CHUA:
        return np.array([p["a"], p["b"], -p["c"], -p["d"]])
    return np.array([p.get(n, 0.0) for n in ("a", "b", "c", "d")])


@numba.njit(cache=True)
def _flow_scalar(kind, p, x, y, z):
    # same expressions, in the same order, as _flow
    if kind == 0:
        return -p[0] * x + p[0] * y, -x * z + p[2] * x - y, x * y - p[1] * z
    if kind == 1:
        return -y - z, x + p[0] * y, p[1] + z * (x - p[2])
    if kind == 2:
        return p[0] * (y - x), (p[2] - p[0]) * x - x * z + p[2] * y, x * y - p[1] * z
    if kind == 3:
        f = p[3] * x + 0.5 * (p[2] - p[3]) * (abs(x + 1.0) - abs(x - 1.0))
        return p[0] * (y - x - f), x - y + z, -p[1] * y
    if kind == 4:
        return -p[0] * (x + y), -y - p[0] * x * z, p[0] * x * y + p[1]
    return y + p[0] * x * y + x * z, 1.0 - p[1] * x * x + y * z, x - x * x - y * y


@numba.njit(cache=True)
def _integrate_kernel(kind, p, S, dt, n_steps, out, limit):
    h = 0.5 * dt
    w = dt / 6.0
    for k in range(n_steps):
        for i in range(S.shape[0]):
            x, y, z = S[i, 0], S[i, 1], S[i, 2]
            a1, b1, c1 = _flow_scalar(kind, p, x, y, z)
            a2, b2, c2 = _flow_scalar(kind, p, x + h * a1, y + h * b1, z + h * c1)
            a3, b3, c3 = _flow_scalar(kind, p, x + h * a2, y + h * b2, z + h * c2)
            a4, b4, c4 = _flow_scalar(kind, p, x + dt * a3, y + dt * b3, z + dt * c3)
            x = x + w * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
            y = y + w * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
            z = z + w * (c1 + 2.0 * c2 + 2.0 * c3 + c4)
            S[i, 0], S[i, 1], S[i, 2] = x, y, z
            out[i, k, 0], out[i, k, 1], out[i, k, 2] = x, y, z
        for i in range(S.shape[0]):
            for j in range(3):
                v = S[i, j]
                if not (abs(v) <= limit):
                    return k, i
    return -1, -1


def integrate(spec: AttractorSpec, init, cfg: IntegrationConfig = IntegrationConfig()) -> np.ndarray:
    """Integrate ``cfg.n_steps`` RK4 steps from ``init``.

    Returns an array of shape ``(*init.shape[:-1], n_steps, 3)`` where entry
    ``k`` along the step axis is the state after ``k + 1`` steps. The initial
    state itself is not part of the output.
    """
    s = np.asarray(init, dtype=float)
    if s.shape[-1] != 3:
        raise ValueError(f"state must have trailing dimension 3, got shape {s.shape}")
    if not np.all(np.isfinite(s)):
        raise NonFiniteStateError("non-finite state")
    lead = s.shape[:-1]
    S = np.ascontiguousarray(s.reshape(-1, 3)).copy()
    out = np.empty((len(S), cfg.n_steps, 3))
    step, row = _integrate_kernel(_KIND_CODE[spec.kind], _param_vector(spec), S, float(cfg.dt),
                                  cfg.n_steps, out, DIVERGENCE_LIMIT)
    if step >= 0:
        idx = np.unravel_index(row, lead) if lead else ()
        raise DivergenceError(int(step), tuple(int(i) for i in idx) if lead else None)
    return out.reshape(lead + (cfg.n_steps, 3))
