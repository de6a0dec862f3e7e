"""Steady-state voltage solvers for radial feeders.

``solve_ac_bfs``
    Full AC backward/forward sweep including branch losses. Used as the
    reference everything else is measured against.
``solve_ldf_cp``
    Lossless LinDistFlow with constant-power loads; closed form.
``solve_iter_zip``
    Fixed-point loop: evaluate voltage-dependent loads at the last voltages,
    freeze them as constant power, re-solve with the chosen engine.
``solve_zp_closed_form``
    LinDistFlow with ZP loads written as the linear system
    ``(I - Omega') U = Omega''`` in squared voltages and solved once.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

from .errors import NegativeSquaredVoltage, NotConverged, SingularNetwork, SingularSystem
from .loads import ConstantPower, LoadSpec, LoadVectors
from .network import RadialNetwork

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 100
RCOND_MIN = 1e-12
OMEGA_WARN = 0.5


class Solver(str, enum.Enum):
    AC_BFS = "AC_BFS"
    LDF_CP = "LDF_CP"
    ITER_ZIP = "ITER_ZIP"
    ZP_CLOSED = "ZP_CLOSED"


@dataclass(frozen=True)
class VoltageSolution:
    """Bus voltage magnitudes. ``v[0]`` is bus 1; use :meth:`at` for bus ids."""

    v: np.ndarray
    u: np.ndarray
    solver: Solver
    iterations: int
    converged: bool
    max_mismatch: float
    notes: dict = field(default_factory=dict, compare=False)

    def at(self, bus: int) -> float:
        if not 1 <= bus <= len(self.v):
            raise IndexError(f"bus {bus} out of range")
        return float(self.v[bus - 1])

    @property
    def n_bus(self) -> int:
        return len(self.v)

    @property
    def min_voltage(self) -> float:
        return float(self.v.min())

    @property
    def min_bus(self) -> int:
        return int(np.argmin(self.v)) + 1

    def as_rows(self) -> list[tuple[int, float]]:
        return [(i + 1, float(x)) for i, x in enumerate(self.v)]


def _solution_from_u(u: np.ndarray, solver: Solver, iterations: int, mismatch: float,
                     converged: bool = True, notes: dict | None = None) -> VoltageSolution:
    """Build a solution from a full (root included) squared-voltage vector."""
    bad = np.flatnonzero(~(u > 0))
    if bad.size:
        bus = int(bad[0]) + 1
        raise NegativeSquaredVoltage(
            f"squared voltage at bus {bus} is {u[bad[0]]:.6g}; the operating point is infeasible",
            bus=bus,
        )
    v = np.sqrt(u)
    v.setflags(write=False)
    u = u.copy()
    u.setflags(write=False)
    return VoltageSolution(v, u, solver, iterations, converged, float(mismatch), notes or {})


def _solution_from_v(v: np.ndarray, solver: Solver, iterations: int, mismatch: float,
                     converged: bool = True, notes: dict | None = None) -> VoltageSolution:
    v = np.array(v, dtype=float)
    u = v * v
    v.setflags(write=False)
    u.setflags(write=False)
    return VoltageSolution(v, u, solver, iterations, converged, float(mismatch), notes or {})


# -- full AC ------------------------------------------------------------------

def _bfs(net: RadialNetwork, demand, source_v: float, tol: float, max_iter: int,
         v_start: np.ndarray | None = None) -> tuple[np.ndarray, int, float, bool]:
    """Backward/forward sweep. ``demand(vm_by_bus) -> (p, q)`` per bus id."""
    m = net.incidence
    z = net.r_by_bus[2:] + 1j * net.x_by_bus[2:]
    vc = np.full(net.n_bus + 1, complex(source_v))
    if v_start is not None:
        vc[1:] = v_start
    vc[0] = 0.0
    mismatch = np.inf
    for it in range(1, max_iter + 1):
        vm = np.abs(vc)
        if np.any(vm[1:] == 0) or not np.all(np.isfinite(vm[1:])):
            raise SingularNetwork("voltage collapsed to zero during backward/forward sweep")
        p, q = demand(vm)
        i_load = np.conj((p[2:] + 1j * q[2:]) / vc[2:])
        i_branch = m @ i_load                    # backward: current into each bus' branch
        v_new = np.empty_like(vc)
        v_new[0] = 0.0
        v_new[1] = source_v
        v_new[2:] = source_v - m.T @ (z * i_branch)   # forward: drops summed along each path
        mismatch = float(np.max(np.abs(v_new[1:] - vc[1:])))
        vc = v_new
        if not np.isfinite(mismatch):
            raise NotConverged("backward/forward sweep diverged", it, mismatch)
        if mismatch < tol:
            return vc, it, mismatch, True
    return vc, max_iter, mismatch, False


def solve_ac_bfs(net: RadialNetwork, loads: Iterable[LoadSpec], source_v: float = 1.0,
                 tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> VoltageSolution:
    """AC power flow by backward/forward sweep.

    Voltage-dependent loads are re-evaluated at the latest voltages on every
    sweep, so ZIP and ZP loads converge together with the network.

    Raises NotConverged when ``max_iter`` sweeps leave a voltage change of
    ``tol`` or more.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    lv = LoadVectors(net.n_bus, loads)
    if lv.all_constant_power:
        def demand(vm):
            return lv.p0, lv.q0
    else:
        demand = lv.evaluate
    vc, it, mismatch, ok = _bfs(net, demand, source_v, tol, max_iter)
    if not ok:
        raise NotConverged(f"backward/forward sweep did not converge in {max_iter} iterations "
                           f"(last change {mismatch:.3g})", it, mismatch)
    return _solution_from_v(np.abs(vc[1:]), Solver.AC_BFS, it, mismatch,
                            notes={"angle_rad": np.angle(vc[1:]).tolist()})


# -- LinDistFlow ----------------------------------------------------------------

def ldf_squared_voltages(net: RadialNetwork, p: np.ndarray, q: np.ndarray,
                         source_v: float = 1.0) -> np.ndarray:
    """Squared voltages (length N, bus 1 first) for fixed per-bus demand.

    ``p`` and ``q`` are indexed by bus id. Branch flows are the lossless
    sums of downstream demand; each bus subtracts ``2(rP + xQ)`` of every
    branch on its path from the source.
    """
    m = net.incidence
    p_flow = m @ p[2:]
    q_flow = m @ q[2:]
    drop = net.r_by_bus[2:] * p_flow + net.x_by_bus[2:] * q_flow
    u = np.empty(net.n_bus)
    u[0] = source_v * source_v
    u[1:] = u[0] - 2.0 * (m.T @ drop)
    return u


def baseline_path_terms(net: RadialNetwork, loads: Iterable[LoadSpec]) -> np.ndarray:
    """Per-bus sum of ``r P + x Q`` over the feeding path at nominal demand.

    Indexed by bus id (length N+1, zeros for slot 0 and the root).
    """
    lv = LoadVectors(net.n_bus, loads)
    m = net.incidence
    drop = net.r_by_bus[2:] * (m @ lv.p0[2:]) + net.x_by_bus[2:] * (m @ lv.q0[2:])
    out = np.zeros(net.n_bus + 1)
    out[2:] = m.T @ drop
    return out


def solve_ldf_cp(net: RadialNetwork, loads: Iterable[LoadSpec],
                 source_v: float = 1.0) -> VoltageSolution:
    """LinDistFlow voltages for constant-power loads (no iteration)."""
    lv = LoadVectors(net.n_bus, loads)
    if not lv.all_constant_power:
        raise TypeError("solve_ldf_cp needs constant-power loads; use solve_iter_zip or "
                        "solve_zp_closed_form for voltage-dependent loads")
    u = ldf_squared_voltages(net, lv.p0, lv.q0, source_v)
    return _solution_from_u(u, Solver.LDF_CP, 1, 0.0)


# -- iterative ZIP ----------------------------------------------------------------

def solve_iter_zip(net: RadialNetwork, loads: Iterable[LoadSpec], source_v: float = 1.0,
                   tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                   engine: str = "AC_BFS", initial_v: float | Sequence[float] | None = None,
                   ) -> VoltageSolution:
    """Fixed-point solve for voltage-dependent loads.

    Each pass evaluates every load at the previous voltages and solves the
    resulting constant-power flow with ``engine`` (``"AC_BFS"`` or
    ``"LDF"``). Stops when the largest voltage change is below ``tol``.
    The LDF engine is exact for the lossless model, which makes it the
    natural cross-check for the ZP closed form.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    engine = engine.upper()
    if engine not in ("AC_BFS", "AC", "LDF"):
        raise ValueError(f"unknown engine {engine!r}")
    lv = LoadVectors(net.n_bus, loads)
    v = np.full(net.n_bus, float(source_v))
    if initial_v is not None:
        v[1:] = np.broadcast_to(np.asarray(initial_v, dtype=float), (net.n_bus,))[1:]
    vm = np.zeros(net.n_bus + 1)
    mismatch = np.inf
    vc = None
    for it in range(1, max_iter + 1):
        vm[1:] = v
        if np.any(v <= 0):
            raise NegativeSquaredVoltage("non-positive voltage during ZIP iteration")
        p, q = lv.evaluate(vm)
        if engine == "LDF":
            u = ldf_squared_voltages(net, p, q, source_v)
            if np.any(u <= 0):
                _solution_from_u(u, Solver.ITER_ZIP, it, mismatch)  # raises
            v_new = np.sqrt(u)
        else:
            vc, _, inner, ok = _bfs(net, lambda _vm: (p, q), source_v, tol, max_iter, vc)
            if not ok:
                raise NotConverged(f"inner sweep did not converge (last change {inner:.3g})",
                                   it, inner)
            vc = vc[1:]
            v_new = np.abs(vc)
        mismatch = float(np.max(np.abs(v_new - v)))
        v = v_new
        if mismatch < tol:
            return _solution_from_v(v, Solver.ITER_ZIP, it, mismatch,
                                    notes={"engine": "LDF" if engine == "LDF" else "AC_BFS"})
    raise NotConverged(f"ZIP fixed point did not converge in {max_iter} iterations "
                       f"(last change {mismatch:.3g})", max_iter, mismatch)


# -- ZP closed form -------------------------------------------------------------

@dataclass(frozen=True)
class OmegaSystem:
    """``U = Omega'' + Omega' U`` over the non-root buses.

    Row/column ``j`` of both parts refers to bus ``buses[j]`` (``2..N``).
    """

    omega_prime: np.ndarray
    omega_dprime: np.ndarray
    buses: tuple[int, ...]
    source_v: float = 1.0

    def index(self, bus: int) -> int:
        return bus - 2

    def residual(self, u: np.ndarray) -> np.ndarray:
        """``U - Omega [1; U]`` for non-root squared voltages ``u``."""
        return u - (self.omega_dprime + self.omega_prime @ u)

    def solve(self) -> np.ndarray:
        """Non-root squared voltages from one dense solve."""
        a = np.eye(len(self.buses)) - self.omega_prime
        return dense_solve(a, self.omega_dprime)

    def full_u(self, u_nonroot: np.ndarray) -> np.ndarray:
        return np.concatenate(([self.source_v ** 2], u_nonroot))


def dense_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """LU with partial pivoting; refuses ill-conditioned systems."""
    if a.size == 0:
        return np.zeros(0)
    with warnings.catch_warnings():
        warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
        try:
            lu, piv = scipy.linalg.lu_factor(a)
        except (scipy.linalg.LinAlgWarning, ValueError, np.linalg.LinAlgError) as exc:
            raise SingularSystem(f"linear system is singular: {exc}") from exc
    anorm = np.linalg.norm(a, 1)
    rcond, info = scipy.linalg.lapack.dgecon(lu, anorm, norm="1")
    if info != 0 or not rcond >= RCOND_MIN:
        raise SingularSystem(f"linear system is singular (reciprocal condition {rcond:.3g})")
    return scipy.linalg.lu_solve((lu, piv), b)


def _warn_large(omega: OmegaSystem) -> None:
    big = max(np.max(np.abs(omega.omega_prime), initial=0.0),
              np.max(np.abs(omega.omega_dprime - omega.source_v ** 2), initial=0.0))
    if big > OMEGA_WARN:
        warnings.warn(f"Omega entry of magnitude {big:.3g} exceeds {OMEGA_WARN}; "
                      "check per-unit conversion", RuntimeWarning, stacklevel=3)


def assemble_zp_system(net: RadialNetwork, loads: Iterable[LoadSpec],
                       source_v: float = 1.0) -> OmegaSystem:
    """Coefficients of LinDistFlow with every load reduced to ZP.

    Bus ``k`` sees ``U_k = V1^2 - 2 sum_m (R_km P_m + X_km Q_m)`` where
    ``R_km`` is the resistance shared by the paths to ``k`` and ``m``.  With
    ``P_m = p0_m (alpha'_m + gamma'_m U_m)`` the constant parts form
    ``Omega''`` and the U-proportional parts form ``Omega'``.
    """
    lv = LoadVectors(net.n_bus, loads)
    r, x = net.shared_r, net.shared_x
    const = source_v ** 2 - 2.0 * (r @ lv.zp_p_const[2:] + x @ lv.zp_q_const[2:])
    coeff = -2.0 * (r * lv.zp_p_u[2:] + x * lv.zp_q_u[2:])
    omega = OmegaSystem(coeff, const, tuple(range(2, net.n_bus + 1)), float(source_v))
    _warn_large(omega)
    return omega


def solve_omega(omega: OmegaSystem, solver: Solver = Solver.ZP_CLOSED,
                notes: dict | None = None) -> VoltageSolution:
    u = omega.solve()
    mismatch = float(np.max(np.abs(omega.residual(u)), initial=0.0))
    return _solution_from_u(omega.full_u(u), solver, 1, mismatch, notes=notes)


def solve_zp_closed_form(net: RadialNetwork, loads: Iterable[LoadSpec],
                         source_v: float = 1.0) -> VoltageSolution:
    """One-shot ZP/LinDistFlow voltages. ZIP loads are reduced to ZP first."""
    return solve_omega(assemble_zp_system(net, loads, source_v))


def max_relative_error_pct(reference: VoltageSolution, approx: VoltageSolution) -> float:
    """Largest ``|V_ref - V| / V_ref`` over buses, in percent."""
    return float(np.max(np.abs(reference.v - approx.v) / reference.v) * 100.0)


def is_constant_power(loads: Iterable[LoadSpec]) -> bool:
    return all(isinstance(ld.model, ConstantPower) for ld in loads)
