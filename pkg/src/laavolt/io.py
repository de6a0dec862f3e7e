"""Case files, device catalogs and run configuration.

Native case format (line oriented, ``#`` starts a comment)::

    laavolt-case 1
    units impedance=ohm power=kw      # mandatory; ohm|pu and kw|mw|pu
    base_mva 10
    base_kv 12.66
    scale 1.0                         # optional load multiplier
    bus <id> <P> <Q> [name]
    branch <from> <to> <r> <x>

MATPOWER ``.m`` cases are read from their ``baseMVA``, ``bus`` and
``branch`` tables (Pd/Qd in MW/MVAr, r/x in p.u.). Out-of-service branches
are skipped, so tie switches in the standard feeders are ignored.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

from .errors import (
    CoefficientSumError,
    NonpositivePower,
    NonRadial,
    ParseError,
    TopologyError,
    UnitAmbiguity,
    UnknownBus,
)
from .loads import CP, DeviceSpec, LoadModel, LoadSpec, ZipCoefficients
from .network import Branch, Bus, RadialNetwork, build_network

NATIVE_MAGIC = "laavolt-case"
_IMPEDANCE_UNITS = ("ohm", "pu")
_POWER_UNITS = {"kw": 1e-3, "mw": 1.0, "pu": None}


def data_path(name: str) -> Path:
    """Path of a file shipped in ``laavolt/data``."""
    return Path(str(resources.files("laavolt") / "data" / name))


DEFAULT_CASE = "ieee33.case"
DEFAULT_CATALOG = "devices.json"


# -- cases ----------------------------------------------------------------------

def parse_case(path: str | Path) -> tuple[RadialNetwork, tuple[LoadSpec, ...]]:
    """Read a case file into a per-unit network and constant-power loads."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read case file {path}: {exc}") from exc
    if path.suffix == ".m" or re.search(r"^\s*mpc\.", text, re.M):
        return _parse_matpower(text)
    return _parse_native(text)


def _finish(buses, branches, base_mva, base_kv, loads):
    if not branches and len(buses) != 1:
        raise NonRadial("case has no branches")
    try:
        net = build_network(buses, branches, base_mva, base_kv)
    except UnknownBus as exc:
        raise ParseError(str(exc)) from exc
    except NonRadial:
        raise
    except TopologyError as exc:
        raise NonRadial(str(exc)) from exc
    return net, tuple(loads)


def _parse_native(text: str):
    units: dict[str, str] | None = None
    base_mva = base_kv = None
    scale = 1.0
    seen_magic = False
    buses: list[Bus] = []
    raw_loads: list[tuple[int, float, float, int]] = []
    raw_branches: list[tuple[int, int, float, float, int]] = []

    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        tok = body.split()
        key = tok[0].lower()

        def num(i, kind=float):
            if i >= len(tok):
                raise ParseError(f"{key}: missing field {i}", lineno)
            try:
                return kind(tok[i])
            except ValueError:
                col = line.find(tok[i]) + 1
                raise ParseError(f"{key}: cannot read {tok[i]!r} as a number", lineno, col) from None

        if key == NATIVE_MAGIC:
            seen_magic = True
            if len(tok) > 1 and tok[1] != "1":
                raise ParseError(f"unsupported case format version {tok[1]!r}", lineno)
        elif key == "units":
            units = {}
            for item in tok[1:]:
                k, _, v = item.partition("=")
                units[k.lower()] = v.lower()
            if units.get("impedance") not in _IMPEDANCE_UNITS or units.get("power") not in _POWER_UNITS:
                raise UnitAmbiguity(f"line {lineno}: units must declare impedance=ohm|pu and "
                                    f"power=kw|mw|pu, got {' '.join(tok[1:])!r}")
        elif key == "base_mva":
            base_mva = num(1)
        elif key == "base_kv":
            base_kv = num(1)
        elif key == "scale":
            scale = num(1)
            if not scale > 0:
                raise ParseError("scale must be positive", lineno)
        elif key == "bus":
            bid = num(1, int)
            name = " ".join(tok[4:]) or None
            buses.append(Bus(bid, name))
            raw_loads.append((bid, num(2), num(3), lineno))
        elif key == "branch":
            raw_branches.append((num(1, int), num(2, int), num(3), num(4), lineno))
        else:
            raise ParseError(f"unknown record {tok[0]!r}", lineno, line.find(tok[0]) + 1)

    if not seen_magic:
        raise ParseError(f"missing '{NATIVE_MAGIC} 1' header")
    if units is None:
        raise UnitAmbiguity("case file does not declare its units")
    if base_mva is None or base_mva <= 0:
        raise ParseError("base_mva missing or not positive")
    if units["impedance"] == "ohm" and (base_kv is None or base_kv <= 0):
        raise UnitAmbiguity("ohmic impedances need a positive base_kv")
    base_kv = base_kv if base_kv is not None else 1.0

    z_base = base_kv ** 2 / base_mva if units["impedance"] == "ohm" else 1.0
    mw = _POWER_UNITS[units["power"]]
    to_pu = (lambda s: s * mw / base_mva) if mw is not None else (lambda s: s)

    ids = {b.id for b in buses}
    branches = []
    for f, t, r, x, lineno in raw_branches:
        for end in (f, t):
            if end not in ids:
                raise ParseError(f"branch {f}-{t} references unknown bus {end}", lineno)
        try:
            branches.append(Branch(f, t, r / z_base, x / z_base))
        except TopologyError as exc:
            raise ParseError(str(exc), lineno) from exc

    loads = []
    for bid, p, q, lineno in raw_loads:
        if p < 0 or q < 0:
            raise ParseError(f"bus {bid}: negative load", lineno)
        if p or q:
            loads.append(LoadSpec(bid, to_pu(p) * scale, to_pu(q) * scale))
    return _finish(buses, branches, base_mva, base_kv, loads)


def _matlab_matrix(text: str, name: str) -> list[list[float]]:
    m = re.search(rf"mpc\.{name}\s*=\s*\[(.*?)\]\s*;", text, re.S)
    if not m:
        raise ParseError(f"MATPOWER table mpc.{name} not found")
    start_line = text.count("\n", 0, m.start(1)) + 1
    rows = []
    for offset, raw in enumerate(m.group(1).split("\n")):
        line = raw.split("%", 1)[0]
        for chunk in line.split(";"):
            chunk = chunk.strip()
            if not chunk:
                continue
            try:
                rows.append([float(v) for v in re.split(r"[\s,]+", chunk)])
            except ValueError:
                raise ParseError(f"mpc.{name}: malformed row {chunk!r}", start_line + offset) from None
    return rows


def _parse_matpower(text: str):
    m = re.search(r"mpc\.baseMVA\s*=\s*([0-9.eE+-]+)\s*;", text)
    if not m:
        raise ParseError("mpc.baseMVA not found")
    base_mva = float(m.group(1))
    bus_rows = _matlab_matrix(text, "bus")
    branch_rows = _matlab_matrix(text, "branch")

    buses, loads = [], []
    base_kv = None
    for row in bus_rows:
        if len(row) < 10:
            raise ParseError(f"bus row {row} has fewer than 10 columns")
        bid, btype, pd, qd = int(row[0]), int(row[1]), row[2], row[3]
        if btype == 3 and bid != 1:
            raise NonRadial(f"reference bus is {bid}; the feeder source must be bus 1")
        if row[9] > 0 and base_kv is None:
            base_kv = row[9]
        buses.append(Bus(bid))
        if pd < 0 or qd < 0:
            raise ParseError(f"bus {bid}: negative load")
        if pd or qd:
            loads.append(LoadSpec(bid, pd / base_mva, qd / base_mva))

    ids = {b.id for b in buses}
    branches = []
    for row in branch_rows:
        if len(row) < 4:
            raise ParseError(f"branch row {row} has fewer than 4 columns")
        if len(row) > 10 and row[10] == 0:
            continue
        f, t = int(row[0]), int(row[1])
        for end in (f, t):
            if end not in ids:
                raise ParseError(f"branch {f}-{t} references unknown bus {end}")
        branches.append(Branch(f, t, row[2], row[3]))
    return _finish(buses, branches, base_mva, base_kv or 1.0, loads)


def write_case(net: RadialNetwork, loads: Iterable[LoadSpec], path: str | Path) -> None:
    """Write ``net`` and the nominal demand of ``loads`` in the native format.

    Values are written in per-unit with full float precision, so reading the
    file back reproduces the in-memory model.
    """
    p = [0.0] * (net.n_bus + 1)
    q = [0.0] * (net.n_bus + 1)
    for ld in loads:
        p[ld.bus] += ld.p0
        q[ld.bus] += ld.q0
    out = [f"{NATIVE_MAGIC} 1", "units impedance=pu power=pu",
           f"base_mva {net.base_mva!r}", f"base_kv {net.base_kv!r}", ""]
    for b in net.buses:
        name = f" {b.name}" if b.name else ""
        out.append(f"bus {b.id} {p[b.id]!r} {q[b.id]!r}{name}")
    out.append("")
    for br in net.branches:
        out.append(f"branch {br.parent} {br.child} {br.r!r} {br.x!r}")
    Path(path).write_text("\n".join(out) + "\n")


def scale_loads(loads: Iterable[LoadSpec], factor: float) -> tuple[LoadSpec, ...]:
    if not factor > 0:
        raise ValueError("load scaling factor must be positive")
    return tuple(ld.scaled(factor) for ld in loads)


def apply_model(loads: Iterable[LoadSpec], model: LoadModel) -> tuple[LoadSpec, ...]:
    return tuple(ld.with_model(model) for ld in loads)


# -- device catalog --------------------------------------------------------------

_ZIP_FIELDS = ("alpha_p", "beta_p", "gamma_p", "alpha_q", "beta_q", "gamma_q")


@dataclass(frozen=True)
class DeviceCatalog:
    devices: tuple[DeviceSpec, ...]
    coefficient_sets: Mapping[str, ZipCoefficients] = field(default_factory=dict)
    verified_against_reference: bool = False
    notes: str = ""

    def device(self, name: str) -> DeviceSpec:
        for d in self.devices:
            if d.name == name:
                return d
        raise KeyError(f"no device {name!r} in catalog (have {[d.name for d in self.devices]})")

    def coefficients(self, name: str) -> ZipCoefficients:
        try:
            return self.coefficient_sets[name]
        except KeyError:
            raise KeyError(f"no coefficient set {name!r} in catalog "
                           f"(have {sorted(self.coefficient_sets)})") from None

    def __iter__(self):
        return iter(self.devices)

    def __len__(self) -> int:
        return len(self.devices)


def _zip_from_record(rec: Mapping, where: str) -> ZipCoefficients:
    missing = [f for f in _ZIP_FIELDS if f not in rec]
    if missing:
        raise ParseError(f"{where}: missing ZIP fields {missing}")
    try:
        return ZipCoefficients(*(float(rec[f]) for f in _ZIP_FIELDS))
    except CoefficientSumError as exc:
        raise CoefficientSumError(f"{where}: {exc}") from None


def parse_device_catalog(path: str | Path) -> DeviceCatalog:
    """Load a JSON device catalog.

    ``{"devices": [{"name", "p_per_device_kw", "q_per_device_kvar",
    "alpha_p", ..., "gamma_q"}, ...], "coefficient_sets": {name: {...}}}``
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ParseError(f"cannot read catalog {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"catalog {path}: {exc.msg}", exc.lineno, exc.colno) from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("devices"), list):
        raise ParseError(f"catalog {path}: expected an object with a 'devices' list")

    devices = []
    for i, rec in enumerate(doc["devices"]):
        where = f"device #{i} ({rec.get('name', '?')})"
        for f in ("name", "p_per_device_kw", "q_per_device_kvar"):
            if f not in rec:
                raise ParseError(f"{where}: missing field {f!r}")
        p, q = float(rec["p_per_device_kw"]), float(rec["q_per_device_kvar"])
        if not (math.isfinite(p) and p > 0):
            raise NonpositivePower(f"{where}: p_per_device_kw must be > 0")
        devices.append(DeviceSpec(str(rec["name"]), p, q, _zip_from_record(rec, where)))
    names = [d.name for d in devices]
    if len(set(names)) != len(names):
        raise ParseError(f"catalog {path}: duplicate device names")

    sets = {name: _zip_from_record(rec, f"coefficient set {name!r}")
            for name, rec in doc.get("coefficient_sets", {}).items()}
    return DeviceCatalog(tuple(devices), sets,
                         bool(doc.get("verified_against_reference", False)),
                         str(doc.get("notes", "")))


# -- scenario --------------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioConfig:
    case: Path = field(default_factory=lambda: data_path(DEFAULT_CASE))
    catalog: Path = field(default_factory=lambda: data_path(DEFAULT_CATALOG))
    model: str = "zip"
    zip_set: str = "residential-type-F"
    scale: float = 0.5
    v_th: float = 0.95
    source_v: float = 1.0
    tol: float = 1e-8
    max_iter: int = 100

    def __post_init__(self) -> None:
        if not 0.5 < self.v_th < 1.0:
            raise ValueError(f"v_th must lie in (0.5, 1.0), got {self.v_th}")
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if self.model not in ("cp", "zip"):
            raise ValueError(f"model must be 'cp' or 'zip', got {self.model!r}")
        if not self.tol > 0 or self.max_iter < 1:
            raise ValueError("tol must be positive and max_iter at least 1")
        if not self.source_v > 0:
            raise ValueError("source voltage must be positive")

    def load(self) -> tuple[RadialNetwork, tuple[LoadSpec, ...], DeviceCatalog]:
        """Network, scaled loads with the configured model, and the catalog."""
        net, loads = parse_case(self.case)
        catalog = parse_device_catalog(self.catalog)
        loads = scale_loads(loads, self.scale)
        model = CP if self.model == "cp" else catalog.coefficients(self.zip_set)
        return net, apply_model(loads, model), catalog
