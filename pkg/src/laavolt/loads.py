"""Voltage-dependent load models and the appliance catalog types.

Three models are supported for a bus load with nominal demand
``p0 + j q0`` (the demand drawn at 1.0 p.u.):

* constant power (CP): demand independent of voltage,
* ZIP: ``p0 * (alpha + beta*V + gamma*V**2)``, quadratic in ``V``,
* ZP: ``p0 * (alpha' + gamma'*U)`` with ``U = V**2``, obtained from ZIP by
  splitting the constant-current share evenly between the other two parts.

ZP is linear in the squared voltage, which is what lets the linearised
feeder equations be solved in one shot.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Union

import numpy as np

from .errors import (
    CoefficientSumError,
    NonpositivePower,
    NonpositiveSquaredVoltage,
    NonpositiveVoltage,
    UnknownBus,
    ZeroCount,
)

SUM_TOL = 1e-9


@dataclass(frozen=True)
class ConstantPower:
    def __str__(self) -> str:
        return "CP"


CP = ConstantPower()


@dataclass(frozen=True)
class ZipCoefficients:
    """Constant-power (alpha), constant-current (beta) and constant-impedance
    (gamma) shares for active and reactive demand. Each triple sums to one."""

    alpha_p: float
    beta_p: float
    gamma_p: float
    alpha_q: float
    beta_q: float
    gamma_q: float

    def __post_init__(self) -> None:
        for tag, s in (("p", self.alpha_p + self.beta_p + self.gamma_p),
                       ("q", self.alpha_q + self.beta_q + self.gamma_q)):
            if abs(s - 1.0) > SUM_TOL:
                raise CoefficientSumError(f"ZIP {tag}-coefficients sum to {s!r}, expected 1")

    @classmethod
    def uniform(cls, alpha: float, beta: float, gamma: float) -> ZipCoefficients:
        """Same triple for active and reactive demand."""
        return cls(alpha, beta, gamma, alpha, beta, gamma)

    def p_factor(self, v):
        return self.alpha_p + self.beta_p * v + self.gamma_p * v * v

    def q_factor(self, v):
        return self.alpha_q + self.beta_q * v + self.gamma_q * v * v

    def __str__(self) -> str:
        return "ZIP"


@dataclass(frozen=True)
class ZpCoefficients:
    alpha_p: float
    gamma_p: float
    alpha_q: float
    gamma_q: float

    def __post_init__(self) -> None:
        for tag, s in (("p", self.alpha_p + self.gamma_p), ("q", self.alpha_q + self.gamma_q)):
            if abs(s - 1.0) > SUM_TOL:
                raise CoefficientSumError(f"ZP {tag}-coefficients sum to {s!r}, expected 1")

    def p_factor_u(self, u):
        return self.alpha_p + self.gamma_p * u

    def q_factor_u(self, u):
        return self.alpha_q + self.gamma_q * u

    def __str__(self) -> str:
        return "ZP"


LoadModel = Union[ConstantPower, ZipCoefficients, ZpCoefficients]


@dataclass(frozen=True)
class LoadSpec:
    """Nominal demand at one bus in per-unit, with its voltage model.

    Several specs may target the same bus; their demands add.
    """

    bus: int
    p0: float
    q0: float
    model: LoadModel = field(default=CP)

    def __post_init__(self) -> None:
        if self.p0 < 0 or self.q0 < 0:
            raise ValueError(f"bus {self.bus}: negative demand (generation is not modelled)")

    def with_model(self, model: LoadModel) -> LoadSpec:
        return LoadSpec(self.bus, self.p0, self.q0, model)

    def scaled(self, factor: float) -> LoadSpec:
        return LoadSpec(self.bus, self.p0 * factor, self.q0 * factor, self.model)


@dataclass(frozen=True)
class DeviceSpec:
    """One class of controllable appliance. Ratings are per device."""

    name: str
    p_per_device: float  # kW
    q_per_device: float  # kVAR
    zip: ZipCoefficients

    def __post_init__(self) -> None:
        if not self.p_per_device > 0:
            raise NonpositivePower(f"device {self.name!r}: active power per device must be > 0")
        if self.q_per_device < 0:
            raise NonpositivePower(f"device {self.name!r}: reactive power per device must be >= 0")

    @property
    def q_over_p(self) -> float:
        return self.q_per_device / self.p_per_device


def zip_power(load: LoadSpec, v: float) -> complex:
    """Demand of a ZIP load at voltage magnitude ``v`` (p.u.)."""
    if not v > 0:
        raise NonpositiveVoltage(f"voltage must be positive, got {v!r}")
    c = load.model
    if not isinstance(c, ZipCoefficients):
        raise TypeError(f"zip_power needs a ZIP load, got {c}")
    return complex(load.p0 * c.p_factor(v), load.q0 * c.q_factor(v))


def to_zp(zip: ZipCoefficients) -> ZpCoefficients:
    """Fold the constant-current share half into P and half into Z."""
    return ZpCoefficients(
        alpha_p=zip.alpha_p + zip.beta_p / 2,
        gamma_p=zip.gamma_p + zip.beta_p / 2,
        alpha_q=zip.alpha_q + zip.beta_q / 2,
        gamma_q=zip.gamma_q + zip.beta_q / 2,
    )


def as_zp(model: LoadModel) -> ZpCoefficients:
    """ZP view of any load model (CP maps to alpha'=1, gamma'=0)."""
    if isinstance(model, ZpCoefficients):
        return model
    if isinstance(model, ZipCoefficients):
        return to_zp(model)
    return ZpCoefficients(1.0, 0.0, 1.0, 0.0)


def zp_power(p0: float, q0: float, zp: ZpCoefficients, u: float) -> complex:
    """Demand of a ZP load at squared voltage ``u``."""
    if not u > 0:
        raise NonpositiveSquaredVoltage(f"squared voltage must be positive, got {u!r}")
    return complex(p0 * zp.p_factor_u(u), q0 * zp.q_factor_u(u))


def load_power(load: LoadSpec, v: float) -> complex:
    """Demand of ``load`` at voltage magnitude ``v`` whatever its model."""
    m = load.model
    if isinstance(m, ZipCoefficients):
        return zip_power(load, v)
    if isinstance(m, ZpCoefficients):
        if not v > 0:
            raise NonpositiveVoltage(f"voltage must be positive, got {v!r}")
        return zp_power(load.p0, load.q0, m, v * v)
    return complex(load.p0, load.q0)


def device_load_pu(device: DeviceSpec, count: int, base_mva: float) -> tuple[float, float]:
    """Nominal (P, Q) of ``count`` devices in per-unit on ``base_mva``."""
    kw_per_pu = base_mva * 1000.0
    return count * device.p_per_device / kw_per_pu, count * device.q_per_device / kw_per_pu


def attack_injection(
    device: DeviceSpec,
    count: int,
    v: float,
    model: str = "ZIP",
    base_mva: float = 1.0,
) -> complex:
    """Extra demand (p.u.) drawn by ``count`` switched-on devices at voltage ``v``.

    ``model`` is ``"CP"`` (nameplate demand) or ``"ZIP"`` (device
    coefficients evaluated at ``v``).
    """
    if isinstance(count, bool) or not isinstance(count, (int, np.integer)):
        raise TypeError("device count must be an integer")
    if count < 1:
        raise ZeroCount(f"device count must be >= 1, got {count}")
    if not v > 0:
        raise NonpositiveVoltage(f"voltage must be positive, got {v!r}")
    p, q = device_load_pu(device, int(count), base_mva)
    model = model.upper()
    if model == "CP":
        return complex(p, q)
    if model == "ZIP":
        return complex(p * device.zip.p_factor(v), q * device.zip.q_factor(v))
    raise ValueError(f"unknown attack model {model!r}")


class LoadVectors:
    """Per-bus arrays (indexed by bus id, length N+1) of a load set.

    Splits every load into the parts the solvers need: nominal demand,
    and for ZP the constant and U-proportional shares.
    """

    def __init__(self, n_bus: int, loads: Iterable[LoadSpec]):
        self.loads = tuple(loads)
        n = n_bus + 1
        self.p0 = np.zeros(n)
        self.q0 = np.zeros(n)
        self.zp_p_const = np.zeros(n)
        self.zp_q_const = np.zeros(n)
        self.zp_p_u = np.zeros(n)
        self.zp_q_u = np.zeros(n)
        for ld in self.loads:
            if not 1 <= ld.bus <= n_bus:
                raise UnknownBus(f"load at unknown bus {ld.bus}")
            zp = as_zp(ld.model)
            self.p0[ld.bus] += ld.p0
            self.q0[ld.bus] += ld.q0
            self.zp_p_const[ld.bus] += ld.p0 * zp.alpha_p
            self.zp_q_const[ld.bus] += ld.q0 * zp.alpha_q
            self.zp_p_u[ld.bus] += ld.p0 * zp.gamma_p
            self.zp_q_u[ld.bus] += ld.q0 * zp.gamma_q

    def evaluate(self, vm: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Actual (P, Q) per bus at voltage magnitudes ``vm`` (indexed by bus id)."""
        n = len(self.p0)
        p = np.zeros(n)
        q = np.zeros(n)
        for ld in self.loads:
            s = load_power(ld, float(vm[ld.bus]))
            p[ld.bus] += s.real
            q[ld.bus] += s.imag
        return p, q

    @property
    def all_constant_power(self) -> bool:
        return all(isinstance(ld.model, ConstantPower) for ld in self.loads)


def total_demand(loads: Iterable[LoadSpec]) -> complex:
    return sum((complex(ld.p0, ld.q0) for ld in loads), 0j)
