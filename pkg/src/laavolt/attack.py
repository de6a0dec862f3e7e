"""Load-altering attacks: forward impact and minimum compromised devices.

An attack switches on ``count`` devices of one class at bus ``a``; their
demand adds to the bus' own load. Under LinDistFlow an extra demand
``P + jQ`` at ``a`` lowers the squared voltage of every bus ``k`` by
``2 (P R_ka + Q X_ka)``, with ``R_ka, X_ka`` the impedance shared by the
two feeding paths. That locality drives everything in this module.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import (
    AlreadyViolated,
    LaaError,
    NegativeCriticalPower,
    NonpositiveDenominator,
    NotLeaf,
    UnknownBus,
    ZeroCount,
)
from .loads import (
    CP,
    DeviceSpec,
    LoadSpec,
    LoadVectors,
    ZipCoefficients,
    ZpCoefficients,
    attack_injection,
    device_load_pu,
    to_zp,
)
from .network import RadialNetwork
from .powerflow import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    OmegaSystem,
    Solver,
    VoltageSolution,
    _solution_from_u,
    assemble_zp_system,
    baseline_path_terms,
    dense_solve,
    is_constant_power,
    ldf_squared_voltages,
    solve_iter_zip,
    solve_omega,
)

MODELS = ("CP", "ZIP")


@dataclass(frozen=True)
class AttackSpec:
    bus: int
    device: DeviceSpec
    count: int | None = None
    model: str = "ZIP"
    # Coefficients of the switched load; ``None`` means the device's own.
    coefficients: ZipCoefficients | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "model", self.model.upper())
        if self.model not in MODELS:
            raise ValueError(f"attack model must be CP or ZIP, got {self.model!r}")
        if self.count is not None and self.count < 1:
            raise ZeroCount(f"device count must be >= 1, got {self.count}")

    @property
    def zip(self) -> ZipCoefficients:
        return self.coefficients or self.device.zip

    def zp(self) -> ZpCoefficients:
        if self.model == "CP":
            return ZpCoefficients(1.0, 0.0, 1.0, 0.0)
        return to_zp(self.zip)

    def nominal_pu(self, base_mva: float) -> tuple[float, float]:
        if self.count is None:
            raise ValueError("attack device count is unknown")
        return device_load_pu(self.device, self.count, base_mva)

    def as_load(self, base_mva: float) -> LoadSpec:
        """The switched devices as an extra bus load."""
        p, q = self.nominal_pu(base_mva)
        return LoadSpec(self.bus, p, q, CP if self.model == "CP" else self.zip)


@dataclass(frozen=True)
class CriticalAttackResult:
    bus: int
    device: DeviceSpec
    p_attack: float  # p.u., nominal demand of the switched devices
    q_attack: float
    device_count: int
    voltages: VoltageSolution
    threshold: float
    model: str
    method: str  # "closed-form" or "search"

    def p_attack_kw(self, base_mva: float) -> float:
        return self.p_attack * base_mva * 1000.0


def _check_attack_bus(net: RadialNetwork, bus: int) -> None:
    if not isinstance(bus, (int, np.integer)) or not 2 <= bus <= net.n_bus:
        raise UnknownBus(f"attacked bus must be in 2..{net.n_bus}, got {bus!r}")


def _require_cp(loads) -> tuple[LoadSpec, ...]:
    loads = tuple(loads)
    if not is_constant_power(loads):
        raise TypeError("this operation needs constant-power base loads")
    return loads


def _count_for(p_attack_pu: float, device: DeviceSpec, base_mva: float) -> int:
    return math.ceil(p_attack_pu * base_mva * 1000.0 / device.p_per_device)


# -- constant power -----------------------------------------------------------------

def cp_attack_voltages(net: RadialNetwork, loads: Iterable[LoadSpec], bus: int,
                       p_attack: float, q_attack: float, source_v: float = 1.0) -> VoltageSolution:
    """LinDistFlow voltages with a constant extra demand at ``bus`` (p.u.)."""
    _check_attack_bus(net, bus)
    lv = LoadVectors(net.n_bus, _require_cp(loads))
    u = ldf_squared_voltages(net, lv.p0, lv.q0, source_v)
    u[1:] -= 2.0 * p_attack * net.shared_r[:, bus - 2] + 2.0 * q_attack * net.shared_x[:, bus - 2]
    return _solution_from_u(u, Solver.LDF_CP, 1, 0.0, notes={"attack_bus": bus})


def voltage_under_attack_cp(net: RadialNetwork, loads: Iterable[LoadSpec], attack: AttackSpec,
                            source_v: float = 1.0) -> VoltageSolution:
    """Post-attack LinDistFlow profile, constant-power loads and devices."""
    p, q = attack.nominal_pu(net.base_mva)
    return cp_attack_voltages(net, loads, attack.bus, p, q, source_v)


def critical_devices_cp(net: RadialNetwork, loads: Iterable[LoadSpec], bus: int,
                        device: DeviceSpec, v_th: float, source_v: float = 1.0
                        ) -> CriticalAttackResult:
    """Smallest constant-power attack at ``bus`` that pulls its voltage to ``v_th``.

    Solves ``U_th = V1^2 - 2 D_a - 2 P (R_aa + (Q_D/P_D) X_aa)`` for ``P``,
    where ``D_a`` is the pre-attack path term of bus ``a``.
    """
    _check_attack_bus(net, bus)
    loads = _require_cp(loads)
    if not 0 < v_th < source_v:
        raise ValueError("v_th must lie between 0 and the source voltage")
    delta = baseline_path_terms(net, loads)[bus]
    r_aa = net.shared_r[bus - 2, bus - 2]
    x_aa = net.shared_x[bus - 2, bus - 2]
    num = v_th ** 2 - source_v ** 2 + 2.0 * delta
    den = -2.0 * (r_aa + device.q_over_p * x_aa)
    if not den < 0:
        raise NonpositiveDenominator(f"bus {bus}: degenerate path impedance")
    if num > 0:
        raise AlreadyViolated(f"bus {bus} is already below {v_th} p.u. before any attack")
    p_att = num / den
    q_att = device.q_over_p * p_att
    sol = cp_attack_voltages(net, loads, bus, p_att, q_att, source_v)
    return CriticalAttackResult(bus, device, p_att, q_att, _count_for(p_att, device, net.base_mva),
                                sol, v_th, "CP", "closed-form")


# -- ZP closed form ----------------------------------------------------------------

def zp_attack_system(net: RadialNetwork, loads: Iterable[LoadSpec], bus: int,
                     p_attack: float, q_attack: float, zp: ZpCoefficients,
                     source_v: float = 1.0) -> OmegaSystem:
    """Omega system with a ZP attack load ``p(alpha' + gamma' U_a)`` at ``bus``.

    The constant share enters the constant column of every row whose path
    overlaps the attacked bus' path; the ``gamma'`` share enters column
    ``a`` of the same rows.
    """
    _check_attack_bus(net, bus)
    base = assemble_zp_system(net, loads, source_v)
    j = bus - 2
    r_col = net.shared_r[:, j]
    x_col = net.shared_x[:, j]
    dprime = base.omega_dprime - 2.0 * (p_attack * zp.alpha_p * r_col + q_attack * zp.alpha_q * x_col)
    prime = base.omega_prime.copy()
    prime[:, j] += -2.0 * (p_attack * zp.gamma_p * r_col + q_attack * zp.gamma_q * x_col)
    return OmegaSystem(prime, dprime, base.buses, base.source_v)


def assemble_zp_attack_system(net: RadialNetwork, loads: Iterable[LoadSpec], attack: AttackSpec,
                              source_v: float = 1.0) -> OmegaSystem:
    p, q = attack.nominal_pu(net.base_mva)
    return zp_attack_system(net, loads, attack.bus, p, q, attack.zp(), source_v)


def solve_zp_under_attack(net: RadialNetwork, loads: Iterable[LoadSpec], attack: AttackSpec,
                          source_v: float = 1.0) -> VoltageSolution:
    """One linear solve of the attacked ZP system."""
    omega = assemble_zp_attack_system(net, loads, attack, source_v)
    return solve_omega(omega, notes={"attack_bus": attack.bus})


def _search_min_count(violates, hi_start: int = 1, limit: int = 10_000_000) -> int:
    """Smallest positive integer ``n`` with ``violates(n)``; ``violates`` monotone."""
    hi = hi_start
    while not violates(hi):
        hi *= 2
        if hi > limit:
            raise NegativeCriticalPower("no attack size up to the search limit breaches the threshold")
    lo = hi // 2  # violates(lo) is False unless lo == 0
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if violates(mid):
            hi = mid
        else:
            lo = mid
    return hi


def critical_devices_zip(net: RadialNetwork, loads: Iterable[LoadSpec], leaf_bus: int,
                         device: DeviceSpec, v_th: float, source_v: float = 1.0,
                         coefficients: ZipCoefficients | None = None,
                         allow_search: bool = False) -> CriticalAttackResult:
    """Smallest ZIP attack at a leaf that pulls the leaf to ``v_th``.

    ``U_a`` is pinned at ``v_th**2`` and the attack power takes its place in
    the unknown vector, giving a square linear system whose ``a``-th row
    has no identity term.  Reactive attack demand follows ``Q_D/P_D``.

    For a non-leaf bus the pinned-voltage system does not say whether some
    downstream bus crosses first; with ``allow_search`` the count is then
    found by bisection over :func:`solve_zp_under_attack` on the feeder
    minimum instead (``method == "search"``), otherwise NotLeaf is raised.
    """
    _check_attack_bus(net, leaf_bus)
    loads = tuple(loads)
    if not 0 < v_th < source_v:
        raise ValueError("v_th must lie between 0 and the source voltage")
    zip_c = coefficients or device.zip
    if not net.is_leaf(leaf_bus):
        if not allow_search:
            raise NotLeaf(f"bus {leaf_bus} has downstream buses")
        return _critical_zip_search(net, loads, leaf_bus, device, v_th, source_v, zip_c)

    zp = to_zp(zip_c)
    rho = device.q_over_p
    u_th = v_th ** 2
    base = assemble_zp_system(net, loads, source_v)
    j = leaf_bus - 2
    r_col = net.shared_r[:, j]
    x_col = net.shared_x[:, j]
    # coefficient of the unknown attack power in every row, with U_a = U_th
    c = -2.0 * (r_col * (zp.alpha_p + zp.gamma_p * u_th)
                + rho * x_col * (zp.alpha_q + zp.gamma_q * u_th))
    n = len(base.buses)
    a = np.eye(n) - base.omega_prime
    a[j, j] = 0.0
    a[:, j] = -c
    rhs = base.omega_dprime + base.omega_prime[:, j] * u_th
    rhs[j] -= u_th
    x = dense_solve(a, rhs)
    p_att = float(x[j])
    if p_att < 0:
        raise NegativeCriticalPower(f"bus {leaf_bus} is below {v_th} p.u. without any attack")
    u = x.copy()
    u[j] = u_th
    sol = _solution_from_u(np.concatenate(([source_v ** 2], u)), Solver.ZP_CLOSED, 1, 0.0,
                           notes={"attack_bus": leaf_bus})
    return CriticalAttackResult(leaf_bus, device, p_att, rho * p_att,
                                _count_for(p_att, device, net.base_mva), sol, v_th, "ZIP",
                                "closed-form")


def _critical_zip_search(net, loads, bus, device, v_th, source_v, zip_c) -> CriticalAttackResult:
    base_sol = solve_omega(assemble_zp_system(net, loads, source_v))
    if base_sol.min_voltage <= v_th:
        raise AlreadyViolated(f"feeder minimum is already {base_sol.min_voltage:.4f} p.u.")

    def solve(n):
        return solve_zp_under_attack(net, loads, AttackSpec(bus, device, n, "ZIP", zip_c), source_v)

    def violates(n):
        try:
            return solve(n).min_voltage <= v_th
        except LaaError:
            return True

    count = _search_min_count(violates)
    p, q = device_load_pu(device, count, net.base_mva)
    return CriticalAttackResult(bus, device, p, q, count, solve(count), v_th, "ZIP", "search")


# -- demand report -------------------------------------------------------------------

class DemandReport(NamedTuple):
    additional_p_kw: float
    additional_q_kvar: float
    bus_voltage: float
    solution: VoltageSolution


def attack_demand_report(net: RadialNetwork, loads: Iterable[LoadSpec], attack: AttackSpec,
                         source_v: float = 1.0, tol: float = DEFAULT_TOL,
                         max_iter: int = DEFAULT_MAX_ITER) -> DemandReport:
    """Extra demand actually drawn by the attack at the post-attack AC voltage."""
    if attack.count is None:
        raise ValueError("attack device count is unknown")
    _check_attack_bus(net, attack.bus)
    sol = solve_iter_zip(net, tuple(loads) + (attack.as_load(net.base_mva),), source_v,
                         tol, max_iter, engine="AC_BFS")
    v_a = sol.at(attack.bus)
    dev = attack.device if attack.coefficients is None else DeviceSpec(
        attack.device.name, attack.device.p_per_device, attack.device.q_per_device,
        attack.coefficients)
    s = attack_injection(dev, attack.count, v_a, attack.model, base_mva=net.base_mva)
    kw = net.base_mva * 1000.0
    return DemandReport(s.real * kw, s.imag * kw, v_a, sol)


# -- sweeps ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    bus: int
    device: str
    model: str
    result: CriticalAttackResult | None
    error: str | None = None

    @property
    def count(self) -> int | None:
        return None if self.result is None else self.result.device_count


def sweep_critical(net: RadialNetwork, loads: Iterable[LoadSpec], bus_set: Sequence[int],
                   device_set: Sequence[DeviceSpec], v_th: float,
                   models: Sequence[str] = MODELS, source_v: float = 1.0,
                   workers: int | None = None, coefficients: ZipCoefficients | None = None,
                   ) -> list[SweepRow]:
    """Critical device counts for every (bus, device, model) cell.

    CP cells use the nominal demand of ``loads`` as constant power; ZIP cells
    use ``loads`` as given. Failures are recorded per cell. Rows come back
    bus-major, then device, then model, whatever ``workers`` is.
    """
    loads = tuple(loads)
    cp_loads = tuple(ld.with_model(CP) for ld in loads)
    models = [m.upper() for m in models]
    for m in models:
        if m not in MODELS:
            raise ValueError(f"unknown model {m!r}")
    cells = [(b, d, m) for b in bus_set for d in device_set for m in models]

    def run(cell):
        b, d, m = cell
        try:
            if m == "CP":
                res = critical_devices_cp(net, cp_loads, b, d, v_th, source_v)
            else:
                res = critical_devices_zip(net, loads, b, d, v_th, source_v,
                                           coefficients=coefficients, allow_search=True)
            return SweepRow(b, d.name, m, res)
        except (LaaError, ValueError, TypeError) as exc:
            return SweepRow(b, d.name, m, None, f"{type(exc).__name__}: {exc}")

    if workers and workers > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, cells))
    return [run(c) for c in cells]
