"""Behavioural model of the analog Lorenz circuit.

Parameters are set by resistors (all constants scaled against 1 MOhm) and the
flow is integrated in the voltage domain. This is not a netlist simulator:
op-amp and multiplier non-idealities are ignored.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .attractors import AttractorSpec, IntegrationConfig, integrate

R_SCALE = 1e6  # ohms

MULTIPLIER_MAX_MW = 108.0  # AD633 at maximum supply current and voltage
OPAMP_MAX_MW = 45.0  # quad op-amp package at maximum supply

POWER_NOTE = (
    "Maximum-supply bound. Chaotic operation is oscillatory and does not run at "
    "maximum voltage all the time, so actual consumption is below this figure."
)

# R8 chosen so that R9 = 33 kOhm gives rho = 28
DEFAULT_R8 = R_SCALE / 28.0 - 33e3


@dataclass(frozen=True)
class CircuitConfig:
    R4: float = 0.5 * R_SCALE * 3.0 / 8.0  # beta = 8/3 with R4 == R5
    R5: float = 0.5 * R_SCALE * 3.0 / 8.0
    R8: float = DEFAULT_R8
    R9: float = 33e3
    sigma: float = 10.0
    dt: float = 1e-5  # seconds per recorded iteration
    n_steps: int = 1000
    tau_per_step: float = 1e-2  # dimensionless time advanced by one circuit step
    voltage_scale: float = 1.0  # volts per dimensionless unit
    n_multipliers: int = 2
    n_opamps: int = 3

    def __post_init__(self):
        for name in ("R4", "R5", "R8", "R9"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.dt > 0 or not self.tau_per_step > 0 or not self.voltage_scale > 0:
            raise ValueError("dt, tau_per_step and voltage_scale must be positive")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")

    @property
    def time_constant(self) -> float:
        """Integrator RC constant (seconds per unit of dimensionless time)."""
        return self.dt / self.tau_per_step

    def with_rho(self, rho: float) -> CircuitConfig:
        return CircuitConfig(**{**asdict(self), "R9": rho_to_r9(rho, self.R8)})

    def to_dict(self) -> dict:
        return asdict(self)


def resistors_to_params(cfg: CircuitConfig) -> tuple[float, float]:
    """(rho, beta) = (1 MOhm / (R8 + R9), 1 MOhm / (R4 + R5))."""
    rho = R_SCALE / (cfg.R8 + cfg.R9)
    beta = R_SCALE / (cfg.R4 + cfg.R5)
    if not (rho > 0 and beta > 0):
        raise ValueError("resistances must give positive parameters")
    return rho, beta


def rho_to_r9(rho: float, R8: float) -> float:
    if not rho > 0:
        raise ValueError("rho must be positive")
    r9 = R_SCALE / rho - R8
    if not r9 > 0:
        raise ValueError(f"rho={rho} needs R8 + R9 = {R_SCALE / rho:.6g} Ohm, below R8={R8:.6g} Ohm")
    return r9


def circuit_spec(cfg: CircuitConfig) -> AttractorSpec:
    rho, beta = resistors_to_params(cfg)
    return AttractorSpec.lorenz(cfg.sigma, beta, rho)


def simulate_circuit(cfg: CircuitConfig, init_voltages) -> np.ndarray:
    """Node voltages (x, y, z) at each of ``cfg.n_steps`` circuit steps.

    Voltages are divided by ``voltage_scale`` to reach the dimensionless
    flow, integrated with RK4 at ``tau_per_step`` per circuit step, and
    scaled back. Vectorised over leading axes of ``init_voltages``.
    """
    v0 = np.asarray(init_voltages, dtype=float)
    traj = integrate(circuit_spec(cfg), v0 / cfg.voltage_scale, IntegrationConfig(cfg.tau_per_step, cfg.n_steps))
    return traj * cfg.voltage_scale


def circuit_transform(X, cfg: CircuitConfig):
    """Chaotic transform with the circuit model in place of the numerical flow.

    Each predictor value is applied as (v, 1.05, -v) volts (times
    ``voltage_scale``) at the integrator outputs.
    """
    from .transform import TrajectoryTensor, encode_initial

    X = np.asarray(getattr(X, "X", X), dtype=float)
    volts = simulate_circuit(cfg, encode_initial(X) * cfg.voltage_scale)
    return TrajectoryTensor(volts, circuit_spec(cfg), IntegrationConfig(cfg.tau_per_step, cfg.n_steps))


@dataclass(frozen=True)
class PowerReport:
    components: dict = field(default_factory=dict)  # name -> max mW (per type, all units)
    total_mw: float = 0.0
    note: str = POWER_NOTE

    def to_dict(self) -> dict:
        return {"components_mw": dict(self.components), "total_mw": self.total_mw, "note": self.note}


def power_estimate(cfg: CircuitConfig = CircuitConfig()) -> PowerReport:
    if cfg.n_multipliers < 0 or cfg.n_opamps < 0:
        raise ValueError("component counts must be non-negative")
    comps = {
        "multipliers": cfg.n_multipliers * MULTIPLIER_MAX_MW,
        "opamps": cfg.n_opamps * OPAMP_MAX_MW,
    }
    return PowerReport(comps, float(sum(comps.values())))
