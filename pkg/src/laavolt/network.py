"""Radial feeder topology.

A feeder is a tree rooted at bus 1 (the substation).  Every other bus ``i``
has a single parent ``pi(i)`` and is fed through the branch ``(pi(i), i)``,
so branch quantities are stored against their child bus.

All path queries the solvers need reduce to the *path incidence matrix*
``M`` with ``M[i, k] = 1`` when bus ``i`` lies on the root-to-``k`` path
(root excluded, ``k`` included).  With it, shared-path resistances are
``R = M.T @ diag(r) @ M`` and lossless branch flows are ``M @ loads``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    BadRoot,
    CycleDetected,
    Disconnected,
    DuplicateBranch,
    TopologyError,
    UnknownBus,
)

ROOT = 1


@dataclass(frozen=True)
class Bus:
    id: int
    name: str | None = None


@dataclass(frozen=True)
class Branch:
    """Series impedance between ``parent`` and ``child`` in per-unit."""

    parent: int
    child: int
    r: float
    x: float

    def __post_init__(self) -> None:
        if self.r < 0 or self.x < 0:
            raise TopologyError(f"branch {self.parent}-{self.child}: negative impedance")
        if self.r == 0 and self.x == 0:
            raise TopologyError(f"branch {self.parent}-{self.child}: zero impedance")


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class RadialNetwork:
    """Immutable rooted tree with precomputed path data.

    Use :func:`build_network` to construct one.  Bus ids run ``1..n_bus``;
    arrays named ``*_by_bus`` have length ``n_bus + 1`` and are indexed by
    bus id directly (slot 0 unused, slot 1 is the root and holds zeros).
    Square matrices cover the non-root buses ``2..n_bus`` in id order.
    """

    def __init__(
        self,
        buses: Sequence[Bus],
        branches: Sequence[Branch],
        base_mva: float,
        base_kv: float,
        parent: Sequence[int],
        order: Sequence[int],
    ):
        self.buses = tuple(buses)
        self.branches = tuple(sorted(branches, key=lambda b: b.child))
        self.base_mva = float(base_mva)
        self.base_kv = float(base_kv)
        n = len(self.buses)
        self.n_bus = n

        self.parent_by_bus = _frozen(np.asarray(parent, dtype=int))
        self.order = tuple(order)  # root first, every parent before its children

        children: list[list[int]] = [[] for _ in range(n + 1)]
        for b in self.branches:
            children[b.parent].append(b.child)
        self.children = tuple(tuple(sorted(c)) for c in children)

        r = np.zeros(n + 1)
        x = np.zeros(n + 1)
        for b in self.branches:
            r[b.child] = b.r
            x[b.child] = b.x
        self.r_by_bus = _frozen(r)
        self.x_by_bus = _frozen(x)

        paths: list[tuple[int, ...]] = [(), ()]
        for k in range(2, n + 1):
            p = []
            i = k
            while i != ROOT:
                p.append(i)
                i = int(self.parent_by_bus[i])
            paths.append(tuple(reversed(p)))
        self._paths = tuple(paths)

        m = np.zeros((n - 1, n - 1))
        for k in range(2, n + 1):
            for i in self._paths[k]:
                m[i - 2, k - 2] = 1.0
        self.incidence = _frozen(m)
        self.shared_r = _frozen(m.T @ (r[2:, None] * m))
        self.shared_x = _frozen(m.T @ (x[2:, None] * m))

    # -- queries -------------------------------------------------------------

    def _check(self, k: int) -> int:
        if not isinstance(k, (int, np.integer)) or not 1 <= k <= self.n_bus:
            raise UnknownBus(f"bus {k!r} not in 1..{self.n_bus}")
        return int(k)

    def parent(self, k: int) -> int | None:
        k = self._check(k)
        return None if k == ROOT else int(self.parent_by_bus[k])

    def is_leaf(self, k: int) -> bool:
        return not self.children[self._check(k)]

    @property
    def leaves(self) -> tuple[int, ...]:
        return tuple(k for k in range(2, self.n_bus + 1) if not self.children[k])

    def subtree(self, i: int) -> tuple[int, ...]:
        """Bus ``i`` and all of its descendants, in traversal order."""
        i = self._check(i)
        out = []
        stack = [i]
        while stack:
            b = stack.pop()
            out.append(b)
            stack.extend(reversed(self.children[b]))
        return tuple(out)

    def __repr__(self) -> str:
        return f"RadialNetwork(n_bus={self.n_bus}, base_mva={self.base_mva}, base_kv={self.base_kv})"


def build_network(
    buses: Iterable[Bus | int],
    branches: Iterable[Branch],
    base_mva: float = 1.0,
    base_kv: float = 1.0,
) -> RadialNetwork:
    """Validate a bus/branch list and return a :class:`RadialNetwork`.

    Branch endpoints may be given in either order; they are re-oriented
    parent to child by a breadth-first walk from bus 1.
    """
    bus_list = [b if isinstance(b, Bus) else Bus(int(b)) for b in buses]
    ids = sorted(b.id for b in bus_list)
    if not ids:
        raise TopologyError("network has no buses")
    if ROOT not in ids:
        raise BadRoot("bus 1 (the source bus) is missing")
    if ids != list(range(1, len(ids) + 1)):
        raise TopologyError("bus ids must form the contiguous range 1..N")
    if base_mva <= 0 or base_kv <= 0:
        raise TopologyError("bases must be positive")
    n = len(ids)

    adj: list[list[tuple[int, Branch]]] = [[] for _ in range(n + 1)]
    seen: set[frozenset[int]] = set()
    branch_list = list(branches)
    for b in branch_list:
        for end in (b.parent, b.child):
            if not 1 <= end <= n:
                raise UnknownBus(f"branch {b.parent}-{b.child} references unknown bus {end}")
        if b.parent == b.child:
            raise CycleDetected(f"self-loop at bus {b.parent}")
        key = frozenset((b.parent, b.child))
        if key in seen:
            raise DuplicateBranch(f"duplicate branch {b.parent}-{b.child}")
        seen.add(key)
        adj[b.parent].append((b.child, b))
        adj[b.child].append((b.parent, b))

    parent = [0] * (n + 1)
    oriented: list[Branch] = []
    order = [ROOT]
    visited = {ROOT}
    queue = deque([ROOT])
    used: set[int] = set()
    while queue:
        u = queue.popleft()
        for v, b in adj[u]:
            if id(b) in used:
                continue
            used.add(id(b))
            if v in visited:
                raise CycleDetected(f"branch {b.parent}-{b.child} closes a loop")
            visited.add(v)
            parent[v] = u
            order.append(v)
            queue.append(v)
            oriented.append(b if b.parent == u else Branch(u, v, b.r, b.x))
    if len(visited) != n:
        missing = sorted(set(range(1, n + 1)) - visited)
        raise Disconnected(f"buses unreachable from bus 1: {missing}")

    by_id = {b.id: b for b in bus_list}
    return RadialNetwork(
        [by_id[i] for i in range(1, n + 1)], oriented, base_mva, base_kv, parent, order
    )


def path_to(net: RadialNetwork, k: int) -> list[int]:
    """Buses on the path from the root to ``k``, root excluded, ``k`` last."""
    k = net._check(k)
    if k == ROOT:
        raise UnknownBus("the root bus has no feeding path")
    return list(net._paths[k])


def shared_path_impedance(net: RadialNetwork, k: int, a: int) -> tuple[float, float]:
    """Total (r, x) of the branches common to the paths to ``k`` and ``a``."""
    k, a = net._check(k), net._check(a)
    if ROOT in (k, a):
        raise UnknownBus("the root bus has no feeding path")
    return float(net.shared_r[k - 2, a - 2]), float(net.shared_x[k - 2, a - 2])


def downstream_loads(net: RadialNetwork, loads: Iterable, i: int) -> complex:
    """Nominal complex demand of bus ``i`` and everything it feeds.

    ``loads`` is any iterable of objects with ``bus``, ``p0`` and ``q0``.
    """
    sub = set(net.subtree(i))
    total = 0j
    for ld in loads:
        if ld.bus in sub:
            total += complex(ld.p0, ld.q0)
    return total
