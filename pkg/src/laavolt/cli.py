"""Command line entry point: ``laavolt <command> [flags]``.

Every command writes CSV tables and a ``summary.json`` into ``--out`` and a
short report on stdout. ``--plot-data`` adds two-column ``.dat`` files
(bus, voltage) for each voltage profile.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .attack import (
    AttackSpec,
    attack_demand_report,
    critical_devices_cp,
    critical_devices_zip,
    solve_zp_under_attack,
    sweep_critical,
    voltage_under_attack_cp,
)
from .errors import LaaError
from .io import DEFAULT_CASE, DEFAULT_CATALOG, ScenarioConfig, data_path
from .loads import CP
from .powerflow import (
    VoltageSolution,
    max_relative_error_pct,
    solve_ac_bfs,
    solve_iter_zip,
    solve_ldf_cp,
    solve_zp_closed_form,
)


def _fmt(x: float) -> str:
    return f"{x:.10f}"


class Run:
    """Output sink for one command: CSV files, plot data and the summary."""

    def __init__(self, args: argparse.Namespace, cfg: ScenarioConfig):
        self.out = Path(args.out)
        self.plot = args.plot_data
        self.summary: dict = {
            "command": args.command,
            "version": __version__,
            "config": {
                "case": str(cfg.case), "catalog": str(cfg.catalog), "model": cfg.model,
                "zip_set": cfg.zip_set, "scale": cfg.scale, "v_th": cfg.v_th,
                "source_v": cfg.source_v, "tol": cfg.tol, "max_iter": cfg.max_iter,
            },
            "solutions": {},
            "errors": [],
        }
        self.out.mkdir(parents=True, exist_ok=True)

    def csv(self, name: str, header: Sequence[str], rows) -> Path:
        path = self.out / name
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) if isinstance(v, float) else v for v in row])
        return path

    def profile(self, name: str, sol: VoltageSolution) -> None:
        self.summary["solutions"][name] = {
            "solver": sol.solver.value, "iterations": sol.iterations,
            "converged": sol.converged, "max_mismatch": sol.max_mismatch,
            "min_voltage": sol.min_voltage, "min_bus": sol.min_bus,
            **{k: v for k, v in sol.notes.items() if k != "angle_rad"},
        }
        if self.plot:
            with (self.out / f"{name}.dat").open("w") as fh:
                fh.write(f"# bus voltage_pu ({name})\n")
                for bus, v in sol.as_rows():
                    fh.write(f"{bus} {_fmt(v)}\n")

    def finish(self) -> None:
        with (self.out / "summary.json").open("w") as fh:
            json.dump(self.summary, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _profiles_csv(run: Run, name: str, profiles: dict[str, VoltageSolution]) -> None:
    cols = list(profiles)
    n = next(iter(profiles.values())).n_bus
    rows = [[b] + [float(profiles[c].v[b - 1]) for c in cols] for b in range(1, n + 1)]
    run.csv(name, ["bus"] + [f"v_{c}" for c in cols], rows)


def _attack(args, net, catalog, cfg, count=None, model="ZIP") -> AttackSpec:
    coeff = catalog.coefficients(cfg.zip_set) if args.attack_coefficients == "bus" else None
    return AttackSpec(args.attack_bus, catalog.device(args.device),
                      args.count if count is None else count, model, coeff)


# -- commands -----------------------------------------------------------------------

def cmd_solve(args, cfg, run):
    net, loads, _ = cfg.load()
    solver = args.solver
    if solver == "ac":
        sol = solve_ac_bfs(net, loads, cfg.source_v, cfg.tol, cfg.max_iter)
    elif solver == "ldf":
        if cfg.model == "cp":
            sol = solve_ldf_cp(net, loads, cfg.source_v)
        else:
            sol = solve_iter_zip(net, loads, cfg.source_v, cfg.tol, cfg.max_iter, engine="LDF")
    elif solver == "iter":
        sol = solve_iter_zip(net, loads, cfg.source_v, cfg.tol, cfg.max_iter, engine="AC_BFS")
    else:
        sol = solve_zp_closed_form(net, loads, cfg.source_v)
    run.csv("voltages.csv", ["bus", "v_pu", "u_pu"],
            [(b, float(sol.v[b - 1]), float(sol.u[b - 1])) for b in range(1, net.n_bus + 1)])
    run.profile("solve", sol)
    print(f"{sol.solver.value}: {sol.iterations} iteration(s), "
          f"minimum {sol.min_voltage:.5f} p.u. at bus {sol.min_bus}")


def cmd_attack(args, cfg, run):
    net, zip_loads, catalog = dataclasses.replace(cfg, model="zip").load()
    cp_loads = tuple(ld.with_model(CP) for ld in zip_loads)
    atk_cp = _attack(args, net, catalog, cfg, model="CP")
    atk_zip = _attack(args, net, catalog, cfg, model="ZIP")
    extra_cp = atk_cp.as_load(net.base_mva)
    extra_zip = atk_zip.as_load(net.base_mva)
    solve = lambda loads: solve_iter_zip(net, loads, cfg.source_v, cfg.tol, cfg.max_iter)
    profiles = {
        "cp_no_attack": solve(cp_loads),
        "cp_attack": solve(cp_loads + (extra_cp,)),
        "zip_no_attack": solve(zip_loads),
        "zip_attack": solve(zip_loads + (extra_zip,)),
        "cp_attack_ldf": voltage_under_attack_cp(net, cp_loads, atk_cp, cfg.source_v),
        "zip_attack_zp": solve_zp_under_attack(net, zip_loads, atk_zip, cfg.source_v),
    }
    _profiles_csv(run, "attack_profiles.csv", profiles)
    for name, sol in profiles.items():
        run.profile(name, sol)
        print(f"{name:>14}: minimum {sol.min_voltage:.5f} p.u. at bus {sol.min_bus}")


def cmd_critical(args, cfg, run):
    net, loads, catalog = cfg.load()
    device = catalog.device(args.device)
    if cfg.model == "cp":
        res = critical_devices_cp(net, loads, args.attack_bus, device, cfg.v_th, cfg.source_v)
    else:
        coeff = catalog.coefficients(cfg.zip_set) if args.attack_coefficients == "bus" else None
        res = critical_devices_zip(net, loads, args.attack_bus, device, cfg.v_th, cfg.source_v,
                                   coefficients=coeff, allow_search=True)
    atk = _attack(args, net, catalog, cfg, count=res.device_count, model=res.model)
    check = solve_iter_zip(net, loads + (atk.as_load(net.base_mva),), cfg.source_v,
                           cfg.tol, cfg.max_iter)
    run.csv("critical.csv",
            ["bus", "device", "model", "method", "device_count", "p_attack_kw", "q_attack_kvar",
             "v_th", "v_bus_approx", "v_bus_ac"],
            [(res.bus, device.name, res.model, res.method, res.device_count,
              res.p_attack_kw(net.base_mva), res.q_attack * net.base_mva * 1000.0, cfg.v_th,
              res.voltages.at(res.bus), check.at(res.bus))])
    _profiles_csv(run, "critical_profile.csv", {"approx": res.voltages, "ac": check})
    run.profile("critical_approx", res.voltages)
    run.profile("critical_ac", check)
    run.summary["critical"] = {"device_count": res.device_count, "method": res.method,
                               "p_attack_kw": res.p_attack_kw(net.base_mva)}
    print(f"{res.device_count} x {device.name} at bus {res.bus} ({res.model}, {res.method}) "
          f"bring it to {cfg.v_th} p.u.; AC check gives {check.at(res.bus):.5f} p.u.")


def cmd_sweep(args, cfg, run):
    net, loads, catalog = dataclasses.replace(cfg, model="zip").load()
    buses = [int(b) for b in args.buses.split(",") if b.strip()]
    models = [m.strip().upper() for m in args.models.split(",") if m.strip()]
    devices = ([catalog.device(d.strip()) for d in args.devices.split(",")]
               if args.devices else list(catalog))
    coeff = catalog.coefficients(cfg.zip_set) if args.attack_coefficients == "bus" else None
    rows = sweep_critical(net, loads, buses, devices, cfg.v_th, models, cfg.source_v,
                          workers=args.workers, coefficients=coeff)
    out = []
    for r in rows:
        res = r.result
        out.append((r.bus, r.device, r.model,
                    "" if res is None else res.device_count,
                    "" if res is None else res.p_attack_kw(net.base_mva),
                    "" if res is None else res.method, r.error or ""))
        if r.error:
            run.summary["errors"].append({"bus": r.bus, "device": r.device, "model": r.model,
                                          "error": r.error})
    run.csv("sweep.csv", ["bus", "device", "model", "device_count", "p_attack_kw", "method",
                          "error"], out)
    run.summary["sweep"] = [{"bus": r.bus, "device": r.device, "model": r.model,
                             "device_count": r.count} for r in rows]
    width = max([len(d.name) for d in devices], default=6)
    print(f"{'bus':>4} " + " ".join(f"{d.name + ' ' + m:>{width + 4}}"
                                     for d in devices for m in models))
    for b in buses:
        cells = [r for r in rows if r.bus == b]
        print(f"{b:>4} " + " ".join(f"{(r.count if r.count is not None else 'err'):>{width + 4}}"
                                     for r in cells))


def cmd_demand(args, cfg, run):
    net, loads, catalog = dataclasses.replace(cfg, model="zip").load()
    buses = [int(b) for b in args.buses.split(",") if b.strip()]
    rows = []
    for b in buses:
        args.attack_bus = b
        rep = attack_demand_report(net, loads, _attack(args, net, catalog, cfg),
                                   cfg.source_v, cfg.tol, cfg.max_iter)
        rows.append((b, args.device, args.count, rep.additional_p_kw, rep.additional_q_kvar,
                     rep.bus_voltage))
        run.profile(f"demand_bus{b}", rep.solution)
        print(f"bus {b:>3}: +{rep.additional_p_kw:.2f} kW, +{rep.additional_q_kvar:.2f} kVAR "
              f"at {rep.bus_voltage:.5f} p.u.")
    run.csv("demand.csv", ["bus", "device", "count", "additional_p_kw", "additional_q_kvar",
                           "v_bus"], rows)


def cmd_validate(args, cfg, run):
    net, zip_loads, _ = dataclasses.replace(cfg, model="zip").load()
    cp_loads = tuple(ld.with_model(CP) for ld in zip_loads)
    ac_zip = solve_ac_bfs(net, zip_loads, cfg.source_v, cfg.tol, cfg.max_iter)
    zp = solve_zp_closed_form(net, zip_loads, cfg.source_v)
    ac_cp = solve_ac_bfs(net, cp_loads, cfg.source_v, cfg.tol, cfg.max_iter)
    ldf = solve_ldf_cp(net, cp_loads, cfg.source_v)
    iter_ldf = solve_iter_zip(net, zip_loads, cfg.source_v, cfg.tol, cfg.max_iter, engine="LDF")
    checks = {
        "zp_closed_vs_ac_zip_pct": max_relative_error_pct(ac_zip, zp),
        "ldf_vs_ac_cp_pct": max_relative_error_pct(ac_cp, ldf),
        "iter_ldf_vs_ac_zip_pct": max_relative_error_pct(ac_zip, iter_ldf),
    }
    profiles = {"ac_zip": ac_zip, "zp_closed": zp, "ac_cp": ac_cp, "ldf_cp": ldf,
                "iter_ldf_zip": iter_ldf}
    _profiles_csv(run, "validate_profiles.csv", profiles)
    for name, sol in profiles.items():
        run.profile(name, sol)
    run.summary["max_relative_error_pct"] = checks
    print(f"max relative error, ZP closed form vs AC (ZIP loads): "
          f"{checks['zp_closed_vs_ac_zip_pct']:.4f}%")
    print(f"max relative error, LinDistFlow vs AC (CP loads):      "
          f"{checks['ldf_vs_ac_cp_pct']:.4f}%")


COMMANDS = {
    "solve": cmd_solve, "attack": cmd_attack, "critical": cmd_critical,
    "sweep": cmd_sweep, "demand": cmd_demand, "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--case", type=Path, default=None,
                        help=f"case file (default: bundled {DEFAULT_CASE})")
    common.add_argument("--catalog", type=Path, default=None,
                        help=f"device catalog (default: bundled {DEFAULT_CATALOG})")
    common.add_argument("--model", choices=("cp", "zip"), default="zip")
    common.add_argument("--zip-set", default="residential-type-F",
                        help="named ZIP coefficient set for bus loads")
    common.add_argument("--scale", type=float, default=0.5, help="load multiplier")
    common.add_argument("--vth", type=float, default=0.95, help="voltage threshold, p.u.")
    common.add_argument("--source-v", type=float, default=1.0)
    common.add_argument("--tol", type=float, default=1e-8)
    common.add_argument("--max-iter", type=int, default=100)
    common.add_argument("--out", default="laavolt-out", help="output directory")
    common.add_argument("--plot-data", action="store_true", help="write bus/voltage .dat files")
    common.add_argument("--attack-coefficients", choices=("device", "bus"), default="device",
                        help="ZIP coefficients of the switched devices")

    p = argparse.ArgumentParser(prog="laavolt", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[common], help="baseline voltage profile")
    s.add_argument("--solver", choices=("ac", "ldf", "iter", "zp"), default="ac")

    s = sub.add_parser("attack", parents=[common], help="CP and ZIP profiles under an attack")
    s.add_argument("--attack-bus", type=int, required=True)
    s.add_argument("--device", default="air-conditioner")
    s.add_argument("--count", type=int, required=True)

    s = sub.add_parser("critical", parents=[common], help="minimum devices to reach --vth")
    s.add_argument("--attack-bus", type=int, required=True)
    s.add_argument("--device", default="air-conditioner")

    s = sub.add_parser("sweep", parents=[common], help="critical counts over buses x devices")
    s.add_argument("--buses", default="18,22,25,33")
    s.add_argument("--models", default="cp,zip")
    s.add_argument("--devices", default=None, help="comma list (default: whole catalog)")
    s.add_argument("--workers", type=int, default=1)

    s = sub.add_parser("demand", parents=[common], help="extra demand drawn by an attack")
    s.add_argument("--buses", default="3,18")
    s.add_argument("--device", default="air-conditioner")
    s.add_argument("--count", type=int, default=800)

    sub.add_parser("validate", parents=[common], help="solver cross-checks")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = ScenarioConfig(
            case=args.case or data_path(DEFAULT_CASE),
            catalog=args.catalog or data_path(DEFAULT_CATALOG),
            model=args.model, zip_set=args.zip_set, scale=args.scale, v_th=args.vth,
            source_v=args.source_v, tol=args.tol, max_iter=args.max_iter,
        )
        run = Run(args, cfg)
        COMMANDS[args.command](args, cfg, run)
    except (LaaError, KeyError, ValueError, TypeError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
        print(json.dumps({"error": type(exc).__name__, "message": msg}), file=sys.stderr)
        return 1
    run.finish()
    return 0


if __name__ == "__main__":
    sys.exit(main())
