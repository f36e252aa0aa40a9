"""Overlay construction: affinity groups, UNL/TNL/NML lists and the three link topologies."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

import numpy as np


class Variant(str, Enum):
    SIMC = "SimC"
    SIMRM = "SimRM"
    SIMK = "SimK"

    @classmethod
    def parse(cls, value: "str | Variant") -> "Variant":
        if isinstance(value, Variant):
            return value
        for v in cls:
            if v.value.lower() == str(value).lower():
                return v
        raise ConfigError(f"unknown variant {value!r}")


class ConfigError(ValueError):
    """Raised for invalid overlay or scenario parameters."""


BASE_LATENCY_MS = (5.0, 50.0)
SIMC_UNL_RANGE = (20, 30)
SIMRM_UNL_RANGE = (46, 50)
SIMRM_OUTBOUND_LINKS = 36


@dataclass(frozen=True)
class OverlayParams:
    num_nodes: int = 256
    c: int = 2
    b: int = 2
    d: int = 5
    outbound_links_to_node_ratio: float = 10 / 256

    @property
    def group_size(self) -> int:
        return math.isqrt(self.num_nodes)

    @property
    def num_groups(self) -> int:
        return self.group_size

    def validate(self, variant: "Variant | str | None" = None) -> None:
        n = self.num_nodes
        if n < 1:
            raise ConfigError("num_nodes must be positive")
        if variant is not None and Variant.parse(variant) is Variant.SIMK:
            if self.group_size ** 2 != n:
                raise ConfigError(f"SimK requires a perfect-square node count, got {n}")
            if self.c < 1:
                raise ConfigError("c must be at least 1")
            if self.c > self.group_size:
                raise ConfigError(f"c={self.c} exceeds group size {self.group_size}")
        if self.b <= 1:
            raise ConfigError("b must be greater than 1")
        if self.d < 5:
            raise ConfigError("d must be at least 5")
        if not (0 < self.outbound_links_to_node_ratio <= 1):
            raise ConfigError("outbound_links_to_node_ratio must lie in (0, 1]")
        uses_ratio = variant is None or Variant.parse(variant) is Variant.SIMC
        if uses_ratio and self.outbound_links_to_node_ratio * n < 1 - 1e-9:
            raise ConfigError("outbound_links_to_node_ratio * num_nodes must be at least 1")

    def simc_outbound(self) -> int:
        return max(1, math.ceil(self.outbound_links_to_node_ratio * self.num_nodes - 1e-9))

    def unl_size(self) -> int:
        s = self.group_size
        return (s - 1) + self.c * (s - 1)


def affinity_group_of(node: int, params: OverlayParams) -> int:
    """Group index of a node id; consecutive ids fill one group at a time."""
    if params.group_size ** 2 != params.num_nodes:
        raise ConfigError(f"node count {params.num_nodes} is not a perfect square")
    if not 0 <= node < params.num_nodes:
        raise ConfigError(f"node id {node} outside [0, {params.num_nodes})")
    return node // params.group_size


@dataclass
class UnlView:
    unl_a: set[int] = field(default_factory=set)
    unl_b: dict[int, set[int]] = field(default_factory=dict)

    def members(self) -> set[int]:
        out = set(self.unl_a)
        for grp in self.unl_b.values():
            out |= grp
        return out

    def __len__(self) -> int:
        return len(self.unl_a) + sum(len(g) for g in self.unl_b.values())


@dataclass
class Nml:
    nml_a: set[int] = field(default_factory=set)
    nml_b: dict[int, set[int]] = field(default_factory=dict)
    nml_c: set[int] = field(default_factory=set)

    def members(self) -> set[int]:
        out = set(self.nml_a) | self.nml_c
        for grp in self.nml_b.values():
            out |= grp
        return out


@dataclass
class NodeLists:
    node: int
    unl: UnlView
    tnl: set[int]
    nml: Nml


@dataclass
class Topology:
    """Static per-case graph. Links are undirected and stored in CSR form.

    ``latency[k]`` is the base latency of the directed link
    ``node -> indices[k]`` for the row ``node`` that owns position ``k``.
    """

    variant: Variant
    params: OverlayParams
    indptr: np.ndarray
    indices: np.ndarray
    latency: np.ndarray
    unl: list[np.ndarray]
    groups: np.ndarray
    shortfall: dict[int, dict[int, int]] = field(default_factory=dict)
    _tnl: list[np.ndarray] | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.params.num_nodes

    def neighbours(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def link_latencies(self, v: int) -> np.ndarray:
        return self.latency[self.indptr[v]:self.indptr[v + 1]]

    def degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    def connection_entries(self) -> int:
        """Total adjacency entries, i.e. twice the number of undirected links."""
        return int(self.indices.size)

    def tnl(self, v: int) -> np.ndarray:
        if self._tnl is None:
            buckets: list[list[int]] = [[] for _ in range(self.n)]
            for u, members in enumerate(self.unl):
                for w in members.tolist():
                    buckets[w].append(u)
            self._tnl = [np.array(sorted(b), dtype=np.int64) for b in buckets]
        return self._tnl[v]

    def node_lists(self, v: int) -> NodeLists:
        """UNL/TNL/NML view of one node. NML is the full membership in a static overlay."""
        unl = UnlView()
        gv = int(self.groups[v])
        for u in self.unl[v].tolist():
            gu = int(self.groups[u])
            if gu == gv and self.variant is Variant.SIMK:
                unl.unl_a.add(u)
            else:
                unl.unl_b.setdefault(gu, set()).add(u)
        nml = Nml()
        for u in range(self.n):
            if u == v:
                continue
            gu = int(self.groups[u])
            if gu == gv:
                nml.nml_a.add(u)
            else:
                nml.nml_b.setdefault(gu, set()).add(u)
        return NodeLists(v, unl, set(self.tnl(v).tolist()), nml)

    def link_pairs(self) -> set[tuple[int, int]]:
        out = set()
        for v in range(self.n):
            for w in self.neighbours(v).tolist():
                out.add((min(v, w), max(v, w)))
        return out

    def adjacency_matrix(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=bool)
        rows = np.repeat(np.arange(self.n), np.diff(self.indptr))
        a[rows, self.indices] = True
        return a

    def export_edges(self) -> str:
        lines = []
        for v in range(self.n):
            for w, lat in zip(self.neighbours(v).tolist(), self.link_latencies(v).tolist()):
                lines.append(f"{v} {w} {lat:.6f}")
        return "\n".join(lines) + ("\n" if lines else "")

    def summary(self) -> dict:
        deg = self.degree()
        return {
            "variant": self.variant.value,
            "num_nodes": self.n,
            "c": self.params.c,
            "connection_entries": self.connection_entries(),
            "undirected_links": self.connection_entries() // 2,
            "avg_degree": float(deg.mean()) if deg.size else 0.0,
            "min_degree": int(deg.min()) if deg.size else 0,
            "max_degree": int(deg.max()) if deg.size else 0,
            "avg_unl_size": float(np.mean([u.size for u in self.unl])) if self.unl else 0.0,
            "shortfall": {str(k): {str(g): m for g, m in v.items()} for k, v in self.shortfall.items()},
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True)


def _csr_from_bool(adj: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = adj.shape[0]
    deg = adj.sum(axis=1)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(deg, out=indptr[1:])
    indices = np.nonzero(adj)[1].astype(np.int64)
    latency = rng.uniform(BASE_LATENCY_MS[0], BASE_LATENCY_MS[1], size=indices.size)
    return indptr, indices, latency


def _groups(params: OverlayParams) -> np.ndarray:
    s = max(params.group_size, 1)
    return np.arange(params.num_nodes) // s


def _simk_unl_matrix(params: OverlayParams, rng: np.random.Generator) -> np.ndarray:
    n, s, c = params.num_nodes, params.group_size, params.c
    g = np.arange(n) // s
    unl = g[:, None] == g[None, :]
    np.fill_diagonal(unl, False)
    if s > 1 and c > 0:
        keys = rng.random((n, s, s))
        pick = np.argpartition(keys, c - 1, axis=2)[:, :, :c]
        targets = pick + (np.arange(s) * s)[None, :, None]
        foreign = np.arange(s)[None, :] != g[:, None]
        mask = np.repeat(foreign[:, :, None], c, axis=2)
        rows = np.broadcast_to(np.arange(n)[:, None, None], targets.shape)
        unl[rows[mask], targets[mask]] = True
    return unl


def build_simk_overlay(params: OverlayParams, rng: np.random.Generator) -> Topology:
    """Affinity-group overlay. UNL = whole own group plus ``c`` random members of
    every foreign group; links are the UNL/TNL relations."""
    params.validate(Variant.SIMK)
    unl = _simk_unl_matrix(params, rng)
    adj = unl | unl.T
    indptr, indices, latency = _csr_from_bool(adj, rng)
    unl_lists = [np.nonzero(row)[0].astype(np.int64) for row in unl]
    return Topology(Variant.SIMK, params, indptr, indices, latency, unl_lists, _groups(params))


def _random_links(n: int, outbound: int, rng: np.random.Generator) -> np.ndarray:
    """Each node in turn adds ``outbound`` links to distinct random peers it is not linked with yet."""
    adj = np.zeros((n, n), dtype=bool)
    for v in range(n):
        free = np.flatnonzero(~adj[v])
        free = free[free != v]
        k = min(outbound, free.size)
        if k == 0:
            continue
        chosen = rng.choice(free, size=k, replace=False)
        adj[v, chosen] = True
        adj[chosen, v] = True
    return adj


def _random_unls(n: int, size_range: tuple[int, int], rng: np.random.Generator) -> list[np.ndarray]:
    lo, hi = size_range
    hi = min(hi, n - 1)
    lo = min(lo, hi)
    sizes = rng.integers(lo, hi + 1, size=n)
    keys = rng.random((n, n))
    np.fill_diagonal(keys, np.inf)
    order = np.argsort(keys, axis=1)
    return [np.sort(order[v, :sizes[v]]).astype(np.int64) for v in range(n)]


def build_simc_topology(params: OverlayParams, rng: np.random.Generator) -> Topology:
    """Baseline random topology: ``ceil(ratio * N)`` outbound links per node and an
    independent random UNL of 20 to 30 members."""
    params.validate(Variant.SIMC)
    adj = _random_links(params.num_nodes, params.simc_outbound(), rng)
    indptr, indices, latency = _csr_from_bool(adj, rng)
    unls = _random_unls(params.num_nodes, SIMC_UNL_RANGE, rng)
    return Topology(Variant.SIMC, params, indptr, indices, latency, unls, _groups(params))


def build_simrm_topology(params: OverlayParams, rng: np.random.Generator,
                         outbound: int = SIMRM_OUTBOUND_LINKS) -> Topology:
    """Random mesh with link density comparable to SimK and larger random UNLs."""
    params.validate(Variant.SIMRM)
    adj = _random_links(params.num_nodes, outbound, rng)
    indptr, indices, latency = _csr_from_bool(adj, rng)
    unls = _random_unls(params.num_nodes, SIMRM_UNL_RANGE, rng)
    return Topology(Variant.SIMRM, params, indptr, indices, latency, unls, _groups(params))


def build_topology(variant: "Variant | str", params: OverlayParams, rng: np.random.Generator) -> Topology:
    variant = Variant.parse(variant)
    if variant is Variant.SIMK:
        return build_simk_overlay(params, rng)
    if variant is Variant.SIMC:
        return build_simc_topology(params, rng)
    return build_simrm_topology(params, rng)


def build_simk_from_membership(params: OverlayParams, unl_sets: list[set[int]],
                               rng: np.random.Generator) -> Topology:
    """SimK topology from externally supplied UNLs (e.g. produced by the join protocol).

    Groups with fewer than ``c`` available members are recorded in ``shortfall``.
    """
    params.validate(Variant.SIMK)
    n = params.num_nodes
    unl = np.zeros((n, n), dtype=bool)
    groups = _groups(params)
    shortfall: dict[int, dict[int, int]] = {}
    for v, members in enumerate(unl_sets):
        for u in members:
            unl[v, u] = True
        per_group: dict[int, int] = {}
        for u in members:
            if groups[u] != groups[v]:
                per_group[int(groups[u])] = per_group.get(int(groups[u]), 0) + 1
        for g in range(params.num_groups):
            if g != groups[v] and per_group.get(g, 0) < params.c:
                shortfall.setdefault(v, {})[g] = params.c - per_group.get(g, 0)
    adj = unl | unl.T
    indptr, indices, latency = _csr_from_bool(adj, rng)
    unl_lists = [np.nonzero(row)[0].astype(np.int64) for row in unl]
    return Topology(Variant.SIMK, params, indptr, indices, latency, unl_lists, groups, shortfall)


# --------------------------------------------------------------------------
# path census


@dataclass(frozen=True)
class PathCensus:
    hops: int
    same_group_count: int
    cross_group_count: int


def path_census(params: OverlayParams, hops: int, same_group: bool | None = None) -> PathCensus:
    """Closed-form lower bounds on the number of deterministic paths of exactly
    ``hops`` hops between two nodes in the same / different affinity groups.

    Only path families that exist in every overlay are counted; families that
    depend on the random UNL-B draw are left out.
    """
    if hops not in (1, 2, 3):
        raise ConfigError("hops must be 1, 2 or 3")
    s, c = params.group_size, params.c
    if hops == 1:
        same, cross = 1, 1
    elif hops == 2:
        same, cross = s - 2, c + c
    else:
        same = c * c * (s - 1) + c * (c - 1)
        cross = c * (s - 2) + c * (s - 1) + c * c * (s - 2)
    return PathCensus(hops, max(same, 0), max(cross, 0))


def count_simple_paths(topology: Topology, a: int, b: int, max_hops: int = 3,
                       exclude: Iterable[int] = ()) -> dict[int, int]:
    """Number of simple paths from ``a`` to ``b`` of each length up to ``max_hops``,
    optionally avoiding a set of intermediate nodes."""
    if a == b:
        raise ConfigError("path counting needs two distinct nodes")
    banned = set(exclude)
    nbrs = [set(topology.neighbours(v).tolist()) - banned for v in range(topology.n)]
    counts = {h: 0 for h in range(1, max_hops + 1)}

    def walk(v: int, depth: int, visited: set[int]) -> None:
        for w in nbrs[v]:
            if w == b:
                counts[depth] += 1
            elif depth < max_hops and w not in visited:
                visited.add(w)
                walk(w, depth + 1, visited)
                visited.discard(w)

    walk(a, 1, {a})
    return counts


def three_hop_fault_bound(params: OverlayParams) -> int:
    """Malicious-node count below which the overlay keeps genuine nodes within three hops."""
    return (params.c + 1) * (params.group_size - 1)
