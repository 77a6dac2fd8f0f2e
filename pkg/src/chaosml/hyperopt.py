"""Derivative-free search over attractor parameters.

Strategies: exhaustive ``grid``, seeded ``random`` sampling, and the default
``refine`` (coarse grid, then shrinking grids around the incumbent).
"""

from __future__ import annotations

import csv
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)

Objective = Callable[[dict], float]


@dataclass(frozen=True)
class SearchSpace:
    bounds: Mapping[str, tuple[float, float]]
    fixed: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not 1 <= len(self.bounds) <= 3:
            raise ValueError("search space needs between 1 and 3 free parameters")
        for name, (lo, hi) in self.bounds.items():
            if not lo < hi:
                raise ValueError(f"empty interval for {name}: [{lo}, {hi}]")
        overlap = set(self.bounds) & set(self.fixed)
        if overlap:
            raise ValueError(f"parameters both free and fixed: {sorted(overlap)}")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.bounds)

    def full(self, point: Mapping[str, float]) -> dict:
        return {**self.fixed, **{k: float(v) for k, v in point.items()}}


@dataclass
class OptResult:
    best_params: dict
    best_objective: float
    log: list[tuple[dict, float]]

    def to_rows(self, names: Sequence[str]) -> list[list]:
        return [[p[n] for n in names] + [v] for p, v in self.log]


class _Evaluator:
    def __init__(self, objective: Objective, space: SearchSpace, budget: int, canonical=None):
        self.objective, self.space, self.budget = objective, space, budget
        self.canonical = canonical
        self.log: list[tuple[dict, float]] = []
        self.cache: dict[tuple, float] = {}

    @property
    def remaining(self) -> int:
        return self.budget - len(self.log)

    def __call__(self, point: Mapping[str, float]) -> float:
        if self.canonical:
            point = self.canonical(point)
        key = tuple(round(float(point[n]), 12) for n in self.space.names)
        if key in self.cache:
            return self.cache[key]
        if self.remaining <= 0:
            return math.inf
        params = self.space.full(point)
        try:
            value = float(self.objective(params))
            if math.isnan(value):
                value = math.inf
        except Exception as exc:  # objective failures are recorded, not fatal
            log.info("objective failed at %s: %s", params, exc)
            value = math.inf
        self.cache[key] = value
        self.log.append((params, value))
        return value

    def result(self) -> OptResult:
        if not self.log:
            raise RuntimeError("no evaluations were made")
        i = min(range(len(self.log)), key=lambda j: self.log[j][1])
        return OptResult(dict(self.log[i][0]), self.log[i][1], list(self.log))


def _grid(space: SearchSpace, per_axis: int, bounds=None) -> list[dict]:
    bounds = bounds or space.bounds
    axes = [np.linspace(lo, hi, per_axis) if per_axis > 1 else np.array([(lo + hi) / 2])
            for lo, hi in (bounds[n] for n in space.names)]
    return [dict(zip(space.names, pt)) for pt in itertools.product(*axes)]


def _per_axis(budget: int, dim: int) -> int:
    return max(1, int(math.floor(budget ** (1.0 / dim) + 1e-9)))


def grid_search(ev: _Evaluator, space: SearchSpace, per_axis: int | None = None) -> None:
    per_axis = per_axis or _per_axis(ev.budget, len(space.names))
    for pt in _grid(space, per_axis):
        if ev.remaining <= 0:
            break
        ev(pt)


def random_search(ev: _Evaluator, space: SearchSpace, seed: int) -> None:
    rng = np.random.default_rng(seed)
    for _ in range(ev.budget):
        ev({n: rng.uniform(lo, hi) for n, (lo, hi) in space.bounds.items()})


def refine_search(ev: _Evaluator, space: SearchSpace, coarse_fraction: float = 0.5, shrink: float = 0.5) -> None:
    dim = len(space.names)
    coarse_budget = max(1, int(ev.budget * coarse_fraction))
    per_axis = _per_axis(coarse_budget, dim)
    grid_search(ev, space, per_axis)
    widths = {n: (hi - lo) / max(per_axis - 1, 1) for n, (lo, hi) in space.bounds.items()}
    local = 3
    stalled = 0
    while ev.remaining > 0 and stalled < 50:
        best = ev.result().best_params
        bounds = {}
        for n, (lo, hi) in space.bounds.items():
            c = best[n]
            bounds[n] = (max(lo, c - widths[n]), min(hi, c + widths[n]))
        before = len(ev.log)
        for pt in _grid(space, local, bounds):
            if ev.remaining <= 0:
                break
            ev(pt)
        stalled = stalled + 1 if len(ev.log) == before else 0
        widths = {n: w * shrink for n, w in widths.items()}
        if all(w < 1e-9 * (hi - lo) for w, (lo, hi) in zip(widths.values(), space.bounds.values())):
            break


STRATEGIES = ("grid", "random", "refine")


def optimize(
    objective: Objective,
    space: SearchSpace,
    budget: int = 60,
    strategy: str = "refine",
    seed: int = 0,
    *,
    per_axis: int | None = None,
    canonical=None,
) -> OptResult:
    """Minimise ``objective`` over ``space`` with at most ``budget`` evaluations.

    Failed or NaN evaluations are logged as +inf and the search continues.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    ev = _Evaluator(objective, space, budget, canonical)
    if strategy == "grid":
        grid_search(ev, space, per_axis)
    elif strategy == "random":
        random_search(ev, space, seed)
    elif strategy == "refine":
        refine_search(ev, space)
    else:
        raise ValueError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
    return ev.result()


def optimize_dual_rho(
    objective: Callable[[float, float], float],
    space: SearchSpace,
    budget: int = 60,
    seed: int = 0,
    strategy: str = "refine",
) -> OptResult:
    """Search over a (rho1, rho2) pair; points are canonicalised to rho1 <= rho2."""
    if set(space.bounds) != {"rho1", "rho2"}:
        raise ValueError("dual search space must have exactly rho1 and rho2 free")

    def canonical(pt):
        a, b = float(pt["rho1"]), float(pt["rho2"])
        return {"rho1": min(a, b), "rho2": max(a, b)}

    res = optimize(lambda p: objective(p["rho1"], p["rho2"]), space, budget, strategy, seed, canonical=canonical)
    return res


def write_log_csv(path, result: OptResult) -> None:
    names = sorted({k for p, _ in result.log for k in p})
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names + ["objective"])
        for p, v in result.log:
            w.writerow([repr(p[n]) for n in names] + [repr(v)])
