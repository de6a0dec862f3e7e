import math

import numpy as np
import pytest

from _support import N_RANDOM, random_tree, random_zip
from laavolt.errors import NegativeSquaredVoltage, NotConverged, SingularSystem
from laavolt.loads import CP, LoadSpec, ZipCoefficients, ZpCoefficients, to_zp
from laavolt.network import Branch, build_network, path_to
from laavolt.powerflow import (
    OmegaSystem,
    Solver,
    assemble_zp_system,
    dense_solve,
    max_relative_error_pct,
    solve_ac_bfs,
    solve_iter_zip,
    solve_ldf_cp,
    solve_zp_closed_form,
)

TWO_BUS = build_network([1, 2], [Branch(1, 2, 0.01, 0.01)])
# exact two-bus flow, U^2 - (1 - 2(rP+xQ)) U + |z|^2 |S|^2 = 0, larger root;
# cross-checked against a direct complex fixed point V2 = 1 - z conj(S/V2)
TWO_BUS_V_EXACT = 0.9984976176592139


def test_ac_two_bus_matches_exact_quadratic():
    sol = solve_ac_bfs(TWO_BUS, [LoadSpec(2, 0.1, 0.05)], tol=1e-14)
    assert sol.at(2) == pytest.approx(TWO_BUS_V_EXACT, abs=1e-13)
    assert sol.converged and sol.solver is Solver.AC_BFS


def test_ldf_two_bus():
    sol = solve_ldf_cp(TWO_BUS, [LoadSpec(2, 0.1, 0.05)])
    assert sol.u[1] == pytest.approx(0.997, abs=1e-15)
    assert sol.at(2) == pytest.approx(0.998499, abs=5e-7)


@pytest.mark.parametrize("solver", [
    lambda n, l: solve_ac_bfs(n, l, 1.02),
    lambda n, l: solve_ldf_cp(n, l, 1.02),
    lambda n, l: solve_iter_zip(n, l, 1.02),
    lambda n, l: solve_iter_zip(n, l, 1.02, engine="LDF"),
    lambda n, l: solve_zp_closed_form(n, l, 1.02),
])
def test_flat_profile_without_load(solver):
    net, _, _ = random_tree(3)
    sol = solver(net, [LoadSpec(2, 0.0, 0.0)])
    assert np.all(sol.v == 1.02)
    assert sol.iterations == 1


def test_ac_zero_load_one_iteration(feeder_cp):
    net, loads = feeder_cp
    sol = solve_ac_bfs(net, [ld.scaled(1e-30) for ld in loads][:0])
    assert sol.iterations == 1 and np.all(sol.v == 1.0)


def test_solution_invariants(feeder_zip):
    net, loads = feeder_zip
    for sol in (solve_ac_bfs(net, loads), solve_zp_closed_form(net, loads),
                solve_iter_zip(net, loads, engine="LDF")):
        assert sol.v[0] == 1.0
        assert np.max(np.abs(sol.u - sol.v ** 2)) <= 1e-12
        assert sol.max_mismatch <= 1e-8
        with pytest.raises(ValueError):
            sol.v[3] = 0.0


def test_ldf_path_sum_equals_recursive_drop():
    net, loads, _ = random_tree(11)
    sol = solve_ldf_cp(net, loads)
    p = np.zeros(net.n_bus + 1)
    q = np.zeros(net.n_bus + 1)
    for ld in loads:
        p[ld.bus] += ld.p0
        q[ld.bus] += ld.q0
    u = {1: 1.0}
    for k in net.order[1:]:
        sub = net.subtree(k)
        pk, qk = p[list(sub)].sum(), q[list(sub)].sum()
        u[k] = u[net.parent(k)] - 2 * (net.r_by_bus[k] * pk + net.x_by_bus[k] * qk)
    assert sol.u == pytest.approx([u[k] for k in range(1, net.n_bus + 1)], abs=1e-14)


def test_ldf_rejects_voltage_dependent_loads():
    with pytest.raises(TypeError):
        solve_ldf_cp(TWO_BUS, [LoadSpec(2, 0.1, 0.0, ZipCoefficients.uniform(0, 0, 1))])


def test_ldf_collapse_reported():
    with pytest.raises(NegativeSquaredVoltage) as exc:
        solve_ldf_cp(TWO_BUS, [LoadSpec(2, 40.0, 20.0)])
    assert exc.value.bus == 2


def test_ac_not_converged():
    with pytest.raises(NotConverged):
        solve_ac_bfs(TWO_BUS, [LoadSpec(2, 0.1, 0.05)], tol=1e-14, max_iter=2)


def test_iter_zip_degenerate_cp(feeder_cp):
    net, loads = feeder_cp
    as_zip = [ld.with_model(ZipCoefficients.uniform(1, 0, 0)) for ld in loads]
    for engine, ref in (("LDF", solve_ldf_cp(net, loads)), ("AC_BFS", solve_ac_bfs(net, loads))):
        sol = solve_iter_zip(net, as_zip, engine=engine)
        assert sol.v == pytest.approx(ref.v, abs=1e-9)
        assert sol.iterations <= 2


def test_iter_zip_start_independent(feeder_zip):
    net, loads = feeder_zip
    warm = solve_iter_zip(net, loads, tol=1e-10)
    cold = solve_iter_zip(net, loads, tol=1e-10, initial_v=0.9)
    assert np.max(np.abs(warm.v - cold.v)) < 1e-8


def test_iter_ac_agrees_with_native_ac(feeder_zip):
    net, loads = feeder_zip
    a = solve_ac_bfs(net, loads, tol=1e-12)
    b = solve_iter_zip(net, loads, tol=1e-12)
    assert np.max(np.abs(a.v - b.v)) < 1e-10


# -- ZP system ---------------------------------------------------------------------

def test_assemble_two_bus_hand_values():
    zp = ZpCoefficients(0.35, 0.65, 0.35, 0.65)
    omega = assemble_zp_system(TWO_BUS, [LoadSpec(2, 0.1, 0.05, zp)])
    assert omega.omega_dprime[0] == pytest.approx(0.99895, abs=1e-15)
    assert omega.omega_prime[0, 0] == pytest.approx(-0.00195, abs=1e-15)


def test_assemble_cp_degenerate_gives_ldf(feeder_cp):
    net, loads = feeder_cp
    omega = assemble_zp_system(net, loads)
    assert not omega.omega_prime.any()
    assert omega.omega_dprime == pytest.approx(solve_ldf_cp(net, loads).u[1:], abs=1e-15)


def test_assemble_inherits_from_parent_off_path():
    # loads only at bus 3; bus 4 hangs off bus 2, not on the path to 3
    net = build_network([1, 2, 3, 4], [Branch(1, 2, 0.01, 0.02), Branch(2, 3, 0.03, 0.01),
                                       Branch(2, 4, 0.05, 0.05)])
    omega = assemble_zp_system(net, [LoadSpec(3, 0.1, 0.05, ZpCoefficients(0.4, 0.6, 0.3, 0.7))])
    j3 = omega.index(3)
    assert omega.omega_prime[omega.index(4), j3] == omega.omega_prime[omega.index(2), j3]
    assert omega.omega_prime[omega.index(4), j3] != 0


def ldf_zp_residual(net, loads, u_full):
    """LinDistFlow equations with ZP demand, written out along each path."""
    p = np.zeros(net.n_bus + 1)
    q = np.zeros(net.n_bus + 1)
    for ld in loads:
        zp = ld.model if isinstance(ld.model, ZpCoefficients) else to_zp(ld.model)
        p[ld.bus] += ld.p0 * (zp.alpha_p + zp.gamma_p * u_full[ld.bus - 1])
        q[ld.bus] += ld.q0 * (zp.alpha_q + zp.gamma_q * u_full[ld.bus - 1])
    res = []
    for k in range(2, net.n_bus + 1):
        drop = 0.0
        for i in path_to(net, k):
            sub = list(net.subtree(i))
            drop += net.r_by_bus[i] * p[sub].sum() + net.x_by_bus[i] * q[sub].sum()
        res.append(u_full[k - 1] - (1.0 - 2 * drop))
    return np.array(res)


@pytest.mark.parametrize("seed", range(0, N_RANDOM, 5))
def test_omega_residual_matches_ldf_equations(seed):
    net, loads, rng = random_tree(seed)
    loads = [ld.with_model(random_zip(rng)) for ld in loads]
    omega = assemble_zp_system(net, loads)
    for _ in range(3):
        u = rng.uniform(0.8, 1.1, net.n_bus - 1)
        expected = ldf_zp_residual(net, loads, np.concatenate(([1.0], u)))
        assert omega.residual(u) == pytest.approx(expected, abs=1e-14)


def test_zp_closed_form_cp_degenerate(feeder_cp):
    net, loads = feeder_cp
    a = solve_zp_closed_form(net, loads)
    b = solve_ldf_cp(net, loads)
    assert np.max(np.abs(a.v - b.v)) <= 1e-12


def test_zp_closed_form_ieee33_accuracy(feeder_zip):
    net, loads = feeder_zip
    err = max_relative_error_pct(solve_ac_bfs(net, loads), solve_zp_closed_form(net, loads))
    assert err <= 1.5


def test_dense_solve_singular():
    with pytest.raises(SingularSystem):
        dense_solve(np.array([[1.0, 2.0], [2.0, 4.0]]), np.ones(2))
    with pytest.raises(SingularSystem):
        OmegaSystem(np.eye(2), np.ones(2), (2, 3)).solve()


def test_large_omega_warns():
    net = build_network([1, 2], [Branch(1, 2, 2.0, 2.0)])
    with pytest.warns(RuntimeWarning):
        assemble_zp_system(net, [LoadSpec(2, 0.3, 0.1, ZpCoefficients(0.5, 0.5, 0.5, 0.5))])


# -- properties -------------------------------------------------------------------

@pytest.mark.parametrize("seed", range(N_RANDOM))
def test_zp_closed_form_equals_iterative_ldf_when_beta_zero(seed):
    net, loads, rng = random_tree(seed)
    loads = [ld.with_model(random_zip(rng, beta_zero=True)) for ld in loads]
    a = solve_zp_closed_form(net, loads)
    b = solve_iter_zip(net, loads, tol=1e-13, max_iter=500, engine="LDF")
    assert np.max(np.abs(a.v - b.v)) <= 1e-8


@pytest.mark.parametrize("seed", range(0, N_RANDOM, 3))
def test_ldf_upper_bounds_ac(seed):
    net, loads, _ = random_tree(seed)
    ldf = solve_ldf_cp(net, loads)
    ac = solve_ac_bfs(net, loads, tol=1e-12)
    assert np.all(ldf.v >= ac.v - 1e-12)


def test_ldf_upper_bounds_ac_ieee33(feeder_cp):
    net, loads = feeder_cp
    assert np.all(solve_ldf_cp(net, loads).v >= solve_ac_bfs(net, loads, tol=1e-12).v - 1e-12)


@pytest.mark.parametrize("seed", range(0, N_RANDOM, 7))
def test_ldf_monotone_in_load(seed):
    net, loads, rng = random_tree(seed)
    base = solve_ldf_cp(net, loads).u
    bus = int(rng.integers(2, net.n_bus + 1))
    more = solve_ldf_cp(net, list(loads) + [LoadSpec(bus, 0.01, 0.02)]).u
    assert np.all(more <= base)


@pytest.mark.parametrize("seed", range(0, N_RANDOM, 4))
def test_zip_profile_above_cp(seed):
    net, loads, rng = random_tree(seed)
    zl = [ld.with_model(random_zip(rng, nonnegative=True)) for ld in loads]
    for engine in ("LDF", "AC_BFS"):
        cp = solve_iter_zip(net, loads, engine=engine, tol=1e-12)
        zp = solve_iter_zip(net, zl, engine=engine, tol=1e-12)
        assert np.all(zp.v >= cp.v - 1e-12)


def test_zip_profile_above_cp_ieee33(feeder_zip, feeder_cp):
    zip_sol = solve_ac_bfs(*feeder_zip)
    cp_sol = solve_ac_bfs(*feeder_cp)
    assert np.all(zip_sol.v >= cp_sol.v)


def test_deterministic(feeder_zip):
    net, loads = feeder_zip
    for f in (solve_ac_bfs, solve_zp_closed_form, solve_iter_zip):
        assert np.array_equal(f(net, loads).v, f(net, loads).v)


def test_ieee33_baseline_reference_values(feeder_zip, feeder_cp):
    # well-known full-load Baran-Wu result: 0.9131 p.u. at bus 18 (AC, CP loads)
    net, loads = feeder_cp
    full = [ld.scaled(2.0) for ld in loads]
    assert solve_ac_bfs(net, full).at(18) == pytest.approx(0.9131, abs=1e-4)
    assert math.isclose(solve_ac_bfs(net, loads).min_voltage, 0.9583, abs_tol=1e-4)
