from __future__ import annotations

import math
from collections import deque

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .config import CaseState, ScenarioConfig


def shortest_distances(indptr: np.ndarray, indices: np.ndarray, source: int,
                       removed: np.ndarray | None = None) -> np.ndarray:
    """Hop distances from ``source`` over an undirected CSR graph with ``removed``
    nodes taken out. Unreachable nodes get ``inf``."""
    n = indptr.size - 1
    if removed is not None and removed.any():
        rows = np.repeat(np.arange(n), np.diff(indptr))
        keep = ~(removed[rows] | removed[indices])
        data = np.ones(int(keep.sum()))
        graph = csr_matrix((data, (rows[keep], indices[keep])), shape=(n, n))
    else:
        graph = csr_matrix((np.ones(indices.size), indices, indptr), shape=(n, n))
    dist = shortest_path(graph, directed=True, unweighted=True, indices=source)
    if removed is not None and removed[source]:
        dist[:] = np.inf
    return dist


def bfs_distances(adjacency: dict[int, list[int]] | list[list[int]], source: int) -> dict[int, int]:
    """Plain BFS over an adjacency list, for small graphs."""
    dist = {source: 0}
    queue = deque([source])
    while queue:
        v = queue.popleft()
        for w in adjacency[v]:
            if w not in dist:
                dist[w] = dist[v] + 1
                queue.append(w)
    return dist


def effective_ncp(config: ScenarioConfig, genuine: int) -> float:
    genuine_pct = 100.0 * genuine / config.num_nodes
    return min(config.network_consensus_percent, genuine_pct)


def required_count(config: ScenarioConfig, genuine: int) -> int:
    """Nodes that must receive / agree: min(genuine, NCP share of N), with NCP clamped
    to the realised genuine percentage."""
    if config.network_consensus_percent * config.num_nodes >= 100.0 * genuine:
        return genuine
    return min(genuine, math.floor(config.network_consensus_percent * config.num_nodes / 100 + 1e-9))


def success_predicate(mode: int, config: ScenarioConfig, state: CaseState) -> tuple[bool, bool]:
    if mode in (1, 2):
        return state.reached >= state.required, False
    if mode in (3, 5):
        return state.reached >= state.required and state.target_reached, False
    if mode in (4, 6):
        return state.target_reached, False
    if mode == 8:
        s1 = state.reached >= state.genuine
        return s1, s1 and state.max_dist <= 3
    raise ValueError(f"unknown mode {mode}")
