"""Largest Lyapunov exponent estimation and the LLE-versus-accuracy scan."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .attractors import AttractorSpec, IntegrationConfig, integrate

REFERENCE_INIT = (1.0, 1.05, -1.0)
# reference trajectory for per-rho estimates: settle, then record
REFERENCE_TRANSIENT = 1000
REFERENCE_LENGTH = 8000


@dataclass(frozen=True)
class LLEEstimate:
    lambda_max: float  # per unit time
    embedding_dim: int
    delay: int
    mean_period: int
    fit_window: tuple[int, int]
    divergence_curve: np.ndarray  # mean log distance per step
    dt: float = 1.0


def delay_embed(series, dim: int, tau: int) -> np.ndarray:
    """Row t is (s[t], s[t + tau], ..., s[t + (dim - 1) tau])."""
    s = np.asarray(series, dtype=float).ravel()
    if dim < 1 or tau < 1:
        raise ValueError("dim and tau must be >= 1")
    n = len(s) - (dim - 1) * tau
    if n < 1:
        raise ValueError(f"series of length {len(s)} is too short for dim={dim}, tau={tau}")
    idx = np.arange(n)[:, None] + tau * np.arange(dim)[None, :]
    return s[idx]


def _autocorr(series) -> np.ndarray | None:
    s = np.asarray(series, dtype=float) - np.mean(series)
    n = len(s)
    if n < 4 or not np.any(s):
        return None
    f = np.fft.rfft(s, 2 * n)
    ac = np.fft.irfft(f * np.conj(f))[:n]
    return ac / ac[0]


def autocorr_delay(series, fallback: int = 10) -> int:
    """Lag at which the autocorrelation first drops below 1 - 1/e."""
    ac = _autocorr(series)
    if ac is None:
        return fallback
    below = ac < 1.0 - 1.0 / math.e
    return int(np.argmax(below)) if below.any() else fallback


def autocorr_first_minimum(series, fallback: int = 10) -> int:
    """First local minimum of the autocorrelation function."""
    ac = _autocorr(series)
    if ac is None:
        return fallback
    for k in range(1, len(ac) // 2):
        if ac[k] < ac[k - 1] and ac[k] <= ac[k + 1]:
            return k
    return fallback


def mean_period(series, fallback: int = 100) -> int:
    """Reciprocal of the power-weighted mean frequency, in samples."""
    s = np.asarray(series, dtype=float) - np.mean(series)
    p = np.abs(np.fft.rfft(s)) ** 2
    freqs = np.fft.rfftfreq(len(s))
    p, freqs = p[1:], freqs[1:]
    if p.sum() <= 0:
        return fallback
    mf = float(np.sum(freqs * p) / np.sum(p))
    if not mf > 0:
        return fallback
    return max(1, int(math.ceil(1.0 / mf)))


def _nearest_neighbours(Y: np.ndarray, n_ref: int, min_tsep: int) -> tuple[np.ndarray, np.ndarray]:
    """Nearest neighbour of each of the first n_ref rows among the first n_ref rows,
    excluding temporally close candidates."""
    P = Y[:n_ref]
    sq = np.einsum("ij,ij->i", P, P)
    nn = np.full(n_ref, -1)
    idx = np.arange(n_ref)
    for start in range(0, n_ref, 1024):
        stop = min(start + 1024, n_ref)
        d2 = sq[start:stop, None] - 2.0 * P[start:stop] @ P.T + sq[None, :]
        rows = idx[start:stop, None]
        d2[np.abs(rows - idx[None, :]) <= min_tsep] = np.inf
        best = np.argmin(d2, axis=1)
        ok = np.isfinite(d2[np.arange(stop - start), best])
        nn[start:stop] = np.where(ok, best, -1)
    return idx[nn >= 0], nn[nn >= 0]


def rosenstein_lle(
    series,
    dim: int = 3,
    tau: int | None = None,
    mean_period_steps: int | None = None,
    fit_window: tuple[int, int] = (1, 200),
    dt: float = 1e-2,
    trajectory_len: int | None = None,
) -> LLEEstimate:
    """Rosenstein's nearest-neighbour divergence estimate of the largest exponent.

    ``fit_window`` is an inclusive range of divergence steps; the returned
    exponent is the least-squares slope of the mean log distance over that
    window divided by ``dt``.
    """
    s = np.asarray(series, dtype=float).ravel()
    if tau is None:
        tau = autocorr_delay(s)
    if mean_period_steps is None:
        mean_period_steps = mean_period(s)
    if mean_period_steps <= 0:
        raise ValueError("mean period must be positive")
    lo, hi = fit_window
    if not 0 <= lo < hi:
        raise ValueError(f"invalid fit window {fit_window}")
    traj = trajectory_len or hi + 1
    if traj <= hi:
        raise ValueError("trajectory_len must exceed the fit window end")
    Y = delay_embed(s, dim, tau)
    n_ref = len(Y) - traj + 1
    if n_ref < 2 * mean_period_steps + 2:
        raise ValueError(
            f"series too short: {len(Y)} embedded points leave {n_ref} reference points "
            f"for mean period {mean_period_steps}"
        )
    i, j = _nearest_neighbours(Y, n_ref, mean_period_steps)
    if len(i) == 0:
        raise ValueError("no valid neighbour pairs")
    curve = np.empty(traj)
    for k in range(traj):
        d = np.linalg.norm(Y[i + k] - Y[j + k], axis=1)
        d = d[d > 0]
        curve[k] = np.mean(np.log(d)) if len(d) else -np.inf
    ks = np.arange(lo, hi + 1)
    window = curve[lo:hi + 1]
    ok = np.isfinite(window)
    if ok.sum() < 2:
        raise ValueError("divergence curve has fewer than two finite points in the fit window")
    slope = np.polyfit(ks[ok], window[ok], 1)[0]
    return LLEEstimate(float(slope / dt), dim, int(tau), int(mean_period_steps), (lo, hi), curve, dt)


def benettin_lle(
    spec: AttractorSpec,
    init=REFERENCE_INIT,
    dt: float = 1e-2,
    n_steps: int = 50_000,
    transient: int = 2_000,
    d0: float = 1e-8,
    renorm_every: int = 10,
) -> float:
    """Two-trajectory renormalisation estimate, straight from the flow."""
    a = integrate(spec, np.asarray(init, dtype=float), IntegrationConfig(dt, transient))[-1]
    pair = np.stack([a, a + np.array([d0, 0.0, 0.0])])
    total = 0.0
    n_blocks = n_steps // renorm_every
    block = IntegrationConfig(dt, renorm_every)
    for _ in range(n_blocks):
        pair = integrate(spec, pair, block)[:, -1]
        diff = pair[1] - pair[0]
        d = float(np.sqrt(diff @ diff))
        if d == 0.0:
            raise ArithmeticError("trajectories collapsed onto each other")
        total += math.log(d / d0)
        pair[1] = pair[0] + diff * (d0 / d)
    return total / (n_blocks * renorm_every * dt)


def reference_series(
    spec: AttractorSpec, n_steps: int, dt: float = 1e-2, init=REFERENCE_INIT, axis: int = 0, skip: int = 0
) -> np.ndarray:
    traj = integrate(spec, np.asarray(init, dtype=float), IntegrationConfig(dt, n_steps + skip))
    return traj[skip:, axis]


# -- statistics -------------------------------------------------------------

def pearson_r(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("inputs must be equal-length 1-D sequences")
    if len(a) < 3:
        raise ValueError("need at least 3 observations")
    da, db = a - a.mean(), b - b.mean()
    sa, sb = math.sqrt(da @ da), math.sqrt(db @ db)
    if sa == 0 or sb == 0:
        raise ValueError("zero variance input")
    return float(np.clip((da @ db) / (sa * sb), -1.0, 1.0))


def welch_t(a, b) -> tuple[float, float]:
    """Welch's unequal-variance t statistic and Welch-Satterthwaite dof."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("need at least 2 observations per group")
    va, vb = a.var(ddof=1) / len(a), b.var(ddof=1) / len(b)
    if va + vb == 0:
        raise ValueError("zero variance input")
    t = (a.mean() - b.mean()) / math.sqrt(va + vb)
    dof = (va + vb) ** 2 / (va**2 / (len(a) - 1) + vb**2 / (len(b) - 1))
    return float(t), float(dof)


# -- scan -------------------------------------------------------------------

@dataclass(frozen=True)
class ScanRow:
    rho: float
    lle: float
    best_accuracy: float
    best_iteration: int = 0

    def __post_init__(self):
        if not 1.0 <= self.rho <= 100.0:
            raise ValueError(f"rho {self.rho} outside [1, 100]")


def lle_for_rho(
    rho: float,
    sigma: float = 10.0,
    beta: float = 8.0 / 3.0,
    dt: float = 1e-2,
    n_steps: int = REFERENCE_LENGTH,
    fit_window: tuple[int, int] = (1, 200),
    dim: int = 3,
    tau: int | None = None,
    mean_period_steps: int | None = None,
    skip: int = REFERENCE_TRANSIENT,
) -> LLEEstimate:
    """Rosenstein estimate on the x-series of the reference Lorenz trajectory."""
    spec = AttractorSpec.lorenz(sigma, beta, rho)
    s = reference_series(spec, n_steps, dt, skip=skip)
    return rosenstein_lle(s, dim, tau, mean_period_steps, fit_window, dt)


def lle_accuracy_scan(
    ds,
    rho_grid: Sequence[float],
    cfg: IntegrationConfig = IntegrationConfig(),
    readout: str = "linear_svm",
    params: dict | None = None,
    split=None,
    *,
    sigma: float = 10.0,
    beta: float = 8.0 / 3.0,
    lle_kwargs: dict | None = None,
) -> list[ScanRow]:
    """Best sweep accuracy and reference-trajectory LLE for every rho."""
    from .data import SplitConfig, split_indices
    from .readout import iteration_sweep
    from .transform import transform

    split = split or SplitConfig()
    tr, te = split_indices(ds.n_samples, split)
    rows = []
    for rho in rho_grid:
        spec = AttractorSpec.lorenz(sigma, beta, float(rho))
        t = transform(ds.X, spec, cfg)
        res = iteration_sweep(t, ds.y, tr, te, readout, params)
        est = lle_for_rho(float(rho), sigma, beta, cfg.dt, **(lle_kwargs or {}))
        rows.append(ScanRow(float(rho), est.lambda_max, res.best_metric, res.best_iteration))
    return rows


def write_scan_csv(path, rows: Sequence[ScanRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rho", "lle", "accuracy", "best_iteration"])
        for r in rows:
            w.writerow([repr(r.rho), repr(r.lle), repr(r.best_accuracy), r.best_iteration])


def read_scan_csv(path) -> list[ScanRow]:
    with open(path, newline="") as fh:
        return [ScanRow(float(r["rho"]), float(r["lle"]), float(r["accuracy"]), int(r["best_iteration"]))
                for r in csv.DictReader(fh)]
