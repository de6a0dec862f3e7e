"""Shared builders for the test suite."""

from __future__ import annotations

import numpy as np

from laavolt.io import apply_model, data_path, parse_case, parse_device_catalog, scale_loads
from laavolt.loads import CP, LoadSpec, ZipCoefficients
from laavolt.network import Branch, Bus, build_network

N_RANDOM = 120
V_TH = 0.95


def random_tree(seed: int, n_max: int = 20, r_max: float = 0.01, load_max: float = 0.05):
    """Random radial feeder with 2..n_max buses and CP loads <= load_max p.u."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, n_max + 1))
    branches = []
    for child in range(2, n + 1):
        parent = int(rng.integers(1, child))
        r, x = rng.uniform(0.001, r_max, size=2)
        ends = (parent, child) if rng.random() < 0.5 else (child, parent)
        branches.append(Branch(ends[0], ends[1], float(r), float(x)))
    rng.shuffle(branches)
    net = build_network([Bus(i) for i in range(1, n + 1)], branches)
    loads = tuple(
        LoadSpec(i, float(rng.uniform(0, load_max)), float(rng.uniform(0, load_max)))
        for i in range(2, n + 1)
    )
    return net, loads, rng


def random_zip(rng, beta_zero: bool = False, nonnegative: bool = False) -> ZipCoefficients:
    """ZIP coefficients; with ``nonnegative`` demand rises monotonically with V."""
    def triple():
        if nonnegative:
            w = rng.dirichlet(np.ones(3))
            a, b, g = (float(v) for v in w)
        else:
            a, b = rng.uniform(-0.5, 1.5, size=2)
            g = 1.0 - a - b
        if beta_zero:
            a, b, g = a + b / 2, 0.0, g + b / 2
        return a, b, 1.0 - a - b
    return ZipCoefficients(*triple(), *triple())


def ieee33(scale: float = 0.5, model=None):
    net, loads = parse_case(data_path("ieee33.case"))
    loads = scale_loads(loads, scale)
    if model is not None:
        loads = apply_model(loads, model)
    return net, loads


def catalog():
    return parse_device_catalog(data_path("devices.json"))


def ieee33_zip():
    cat = catalog()
    return ieee33(model=cat.coefficients("residential-type-F"))


def ieee33_cp():
    return ieee33(model=CP)
