"""Per-case setup: topology, malicious placement and effective link latencies."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..overlay import Topology, Variant, build_topology
from .config import (ECLIPSE_MODES, TARGET_MODES, LinkModel, MaliciousPlacement, PlacementScheme,
                     ScenarioConfig)


def case_rngs(seed: int) -> dict[str, np.random.Generator]:
    """Independent named streams derived from one case seed."""
    children = np.random.SeedSequence(seed).spawn(4)
    names = ("topology", "placement", "network", "spare")
    return {name: np.random.default_rng(ss) for name, ss in zip(names, children)}


def reverse_positions(topology: Topology) -> np.ndarray:
    """For each CSR position of link (v, w), the position of (w, v)."""
    n = topology.n
    rows = np.repeat(np.arange(n), np.diff(topology.indptr))
    keys = rows * n + topology.indices
    back = topology.indices * n + rows
    return np.searchsorted(keys, back)


def apply_network_issues(topology: Topology, config: ScenarioConfig,
                         rng: np.random.Generator) -> np.ndarray:
    """Per-position network-issue factors (1.0 = unaffected), symmetric per link.

    A link picked from both ends keeps the larger factor.
    """
    factors = np.ones(topology.indices.size)
    if not config.ni_enabled:
        return factors
    n = topology.n
    rev = reverse_positions(topology)
    n_nodes = math.floor(config.percent_nodes_affected_by_ni * n / 100 + 1e-9)
    nodes = np.sort(rng.choice(n, size=n_nodes, replace=False))
    lo, hi = config.min_latency_factor_ni, config.max_latency_factor_ni
    for v in nodes.tolist():
        start, stop = int(topology.indptr[v]), int(topology.indptr[v + 1])
        deg = stop - start
        k = math.floor(config.percent_links_affected_by_ni * deg / 100 + 1e-9)
        if k == 0:
            continue
        picked = start + rng.choice(deg, size=k, replace=False)
        draw = rng.uniform(lo, hi, size=k) if hi > lo else np.full(k, lo)
        factors[picked] = np.maximum(factors[picked], draw)
        factors[rev[picked]] = np.maximum(factors[rev[picked]], draw)
    return factors


def link_latency_factors(topology: Topology, config: ScenarioConfig) -> np.ndarray:
    """Fixed multipliers for intra-group (UNL-A style) and inter-group links."""
    if config.unla_llf_max == 1 and config.unlb_llf_max == 1:
        return np.ones(topology.indices.size)
    if topology.variant is Variant.SIMC:
        return np.full(topology.indices.size, float(config.unla_llf_max))
    rows = np.repeat(np.arange(topology.n), np.diff(topology.indptr))
    same = topology.groups[rows] == topology.groups[topology.indices]
    return np.where(same, float(config.unla_llf_max), float(config.unlb_llf_max))


def place_malicious(config: ScenarioConfig, rng: np.random.Generator,
                    topology: Topology) -> MaliciousPlacement:
    n = topology.n
    source = int(rng.integers(n))
    target = None
    if config.mode in TARGET_MODES and n > 1:
        target = int(rng.integers(n - 1))
        if target >= source:
            target += 1
    limit = config.effective_upper_limit - 1 if (
        config.mode == 8 and config.is_upper_limit_malicious_applicable) else n
    capped = False

    eclipsers: list[int] = []
    if config.mode in ECLIPSE_MODES and config.percentage_eclipsed > 0 and target is not None:
        pool = topology.neighbours(target) if config.mode == 8 else topology.unl[target]
        cand = pool[pool != source]
        want = math.ceil(config.percentage_eclipsed * pool.size / 100 - 1e-9)
        k = min(want, pool.size - 1, cand.size)
        if k > limit:
            k, capped = limit, True
        if k > 0:
            eclipsers = sorted(rng.choice(cand, size=k, replace=False).tolist())

    random_part: list[int] = []
    want = math.floor(config.percentage_malicious * n / 100 + 1e-9)
    if want > 0:
        excluded = set(eclipsers) | {source}
        if target is not None:
            excluded.add(target)
        cand = np.array([v for v in range(n) if v not in excluded], dtype=np.int64)
        k = min(want, cand.size)
        if len(eclipsers) + k > limit:
            k, capped = max(limit - len(eclipsers), 0), True
        if k > 0:
            random_part = rng.choice(cand, size=k, replace=False).tolist()

    malicious = frozenset(eclipsers) | frozenset(random_part)
    if eclipsers:
        scheme = PlacementScheme.ECLIPSE_TARGET
    elif random_part:
        scheme = PlacementScheme.RANDOM_UNIFORM
    else:
        scheme = PlacementScheme.NONE
    return MaliciousPlacement(scheme, target, config.percentage_eclipsed, source,
                              malicious, frozenset(eclipsers), capped)


@dataclass
class CaseSetup:
    config: ScenarioConfig
    seed: int
    topology: Topology
    placement: MaliciousPlacement
    latency: np.ndarray          # effective latency per CSR position
    ni_factor: np.ndarray
    malicious: np.ndarray        # bool mask

    @property
    def genuine_count(self) -> int:
        return int(self.topology.n - self.malicious.sum())

    def link_model(self, v: int, w: int) -> LinkModel:
        start, stop = self.topology.indptr[v], self.topology.indptr[v + 1]
        row = self.topology.indices[start:stop]
        pos = start + int(np.searchsorted(row, w))
        if pos >= stop or self.topology.indices[pos] != w:
            raise KeyError((v, w))
        base = float(self.topology.latency[pos])
        ni = float(self.ni_factor[pos])
        return LinkModel(base, ni, float(self.latency[pos]) / (base * ni))


def build_case(config: ScenarioConfig, seed: int) -> CaseSetup:
    config.validate()
    rngs = case_rngs(seed)
    topology = build_topology(config.variant, config.overlay_params, rngs["topology"])
    placement = place_malicious(config, rngs["placement"], topology)
    ni = apply_network_issues(topology, config, rngs["network"])
    llf = link_latency_factors(topology, config)
    latency = topology.latency * llf * ni
    mal = np.zeros(topology.n, dtype=bool)
    if placement.malicious:
        mal[list(placement.malicious)] = True
    return CaseSetup(config, seed, topology, placement, latency, ni, mal)
