"""Voltage impact of load-altering attacks on radial distribution feeders."""

from .attack import (
    AttackSpec,
    CriticalAttackResult,
    DemandReport,
    SweepRow,
    assemble_zp_attack_system,
    attack_demand_report,
    cp_attack_voltages,
    critical_devices_cp,
    critical_devices_zip,
    solve_zp_under_attack,
    sweep_critical,
    voltage_under_attack_cp,
    zp_attack_system,
)
from .io import DeviceCatalog, ScenarioConfig, parse_case, parse_device_catalog, write_case
from .loads import (
    CP,
    DeviceSpec,
    LoadSpec,
    ZipCoefficients,
    ZpCoefficients,
    attack_injection,
    to_zp,
    zip_power,
    zp_power,
)
from .network import Branch, Bus, RadialNetwork, build_network, downstream_loads, path_to, shared_path_impedance
from .powerflow import (
    OmegaSystem,
    Solver,
    VoltageSolution,
    assemble_zp_system,
    max_relative_error_pct,
    solve_ac_bfs,
    solve_iter_zip,
    solve_ldf_cp,
    solve_zp_closed_form,
)

__version__ = "0.1.0"
