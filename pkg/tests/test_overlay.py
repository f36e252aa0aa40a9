import itertools

import networkx as nx
import numpy as np
import pytest

from sissle.overlay import (ConfigError, OverlayParams, Variant, affinity_group_of, build_simc_topology,
                            build_simk_from_membership, build_simk_overlay, build_simrm_topology,
                            build_topology, count_simple_paths, path_census, three_hop_fault_bound)


def simk(n, c=2, seed=0):
    return build_simk_overlay(OverlayParams(num_nodes=n, c=c), np.random.default_rng(seed))


def as_graph(topo):
    g = nx.Graph()
    g.add_nodes_from(range(topo.n))
    g.add_edges_from(topo.link_pairs())
    return g


@pytest.mark.parametrize("n,c", [(4, 1), (4, 2), (16, 1), (16, 2), (16, 4)])
@pytest.mark.parametrize("seed", range(5))
def test_reciprocity_and_size_laws(n, c, seed):
    topo = simk(n, c, seed)
    s = topo.params.group_size
    for v in range(n):
        lists = topo.node_lists(v)
        assert lists.unl.unl_a == {u for u in range(n) if u // s == v // s and u != v}
        assert set(lists.unl.unl_b) == {g for g in range(s) if g != v // s}
        assert all(len(m) == c for m in lists.unl.unl_b.values())
        assert len(lists.unl) == topo.params.unl_size()
        assert lists.unl.members() <= lists.nml.members()
        assert v not in lists.unl.members()
    for x, y in itertools.product(range(n), repeat=2):
        assert (x in topo.unl[y]) == (y in topo.tnl(x))
    links = topo.link_pairs()
    expected = {(min(v, int(u)), max(v, int(u))) for v in range(n) for u in topo.unl[v]}
    assert links == expected
    adj = topo.adjacency_matrix()
    assert (adj == adj.T).all()
    assert not adj.diagonal().any()


def test_size_law_at_256():
    topo = simk(256, 2, 11)
    assert {len(u) for u in topo.unl} == {45}


def test_group_assignment_is_balanced():
    p = OverlayParams(num_nodes=25)
    groups = [affinity_group_of(v, p) for v in range(25)]
    assert sorted(set(groups)) == list(range(5))
    assert all(groups.count(g) == 5 for g in range(5))
    with pytest.raises(ConfigError):
        affinity_group_of(3, OverlayParams(num_nodes=20))
    with pytest.raises(ConfigError):
        affinity_group_of(25, p)


def test_invalid_params_rejected():
    with pytest.raises(ConfigError):
        OverlayParams(num_nodes=20).validate(Variant.SIMK)
    with pytest.raises(ConfigError):
        OverlayParams(num_nodes=16, c=5).validate("SimK")
    with pytest.raises(ConfigError):
        OverlayParams(num_nodes=16, b=1).validate()
    with pytest.raises(ConfigError):
        OverlayParams(num_nodes=16, d=4).validate()
    with pytest.raises(ConfigError):
        Variant.parse("SimX")


def test_census_examples():
    assert path_census(OverlayParams(num_nodes=256, c=2), 3).same_group_count == 62
    assert path_census(OverlayParams(num_nodes=16, c=2), 3).same_group_count == 14
    for n, c in [(16, 1), (64, 3), (256, 2)]:
        assert path_census(OverlayParams(num_nodes=n, c=c), 1).same_group_count == 1
        assert path_census(OverlayParams(num_nodes=n, c=c), 1).cross_group_count == 1
    with pytest.raises(ConfigError):
        path_census(OverlayParams(), 4)


def test_path_counter_matches_networkx():
    topo = simk(16, 2, 3)
    g = as_graph(topo)
    for a, b in [(0, 1), (0, 5), (7, 12), (15, 3)]:
        ours = count_simple_paths(topo, a, b, 3)
        ref = {h: 0 for h in (1, 2, 3)}
        for path in nx.all_simple_paths(g, a, b, cutoff=3):
            ref[len(path) - 1] += 1
        assert ours == ref


@pytest.mark.parametrize("n", [16, 25])
@pytest.mark.parametrize("c", [1, 2])
def test_same_group_path_lower_bounds(n, c):
    p = OverlayParams(num_nodes=n, c=c)
    bounds = {h: path_census(p, h).same_group_count for h in (1, 2, 3)}
    s = p.group_size
    for seed in range(4):
        g = as_graph(build_simk_overlay(p, np.random.default_rng(seed)))
        for a, b in itertools.combinations(range(n), 2):
            if a // s != b // s:
                continue
            counts = {h: 0 for h in (1, 2, 3)}
            for path in nx.all_simple_paths(g, a, b, cutoff=3):
                counts[len(path) - 1] += 1
            assert sum(counts.values()) >= sum(bounds.values())
            for h in (1, 2, 3):
                assert counts[h] >= bounds[h], (seed, a, b, h)


def test_fault_bound():
    assert three_hop_fault_bound(OverlayParams(num_nodes=256, c=2)) == 45
    assert three_hop_fault_bound(OverlayParams(num_nodes=16, c=1)) == 6


def test_simc_and_simrm_link_totals():
    for seed in range(5):
        assert build_simc_topology(OverlayParams(), np.random.default_rng(seed)).connection_entries() == 5120
        assert build_simrm_topology(OverlayParams(), np.random.default_rng(seed)).connection_entries() == 18432


def test_simk_link_total_near_calibration():
    totals = [simk(256, 2, s).connection_entries() for s in range(20)]
    assert abs(np.mean(totals) / 18240 - 1) < 0.02


def test_simrm_denser_than_simk():
    rm = build_simrm_topology(OverlayParams(), np.random.default_rng(0)).degree().mean()
    k = simk(256, 2, 0).degree().mean()
    assert rm > k


def test_random_unl_sizes():
    c = build_simc_topology(OverlayParams(), np.random.default_rng(1))
    assert all(20 <= u.size <= 30 for u in c.unl)
    rm = build_simrm_topology(OverlayParams(), np.random.default_rng(1))
    assert all(46 <= u.size <= 50 for u in rm.unl)
    for t in (c, rm):
        assert all(v not in t.unl[v] for v in range(t.n))


def test_build_is_seed_deterministic():
    for variant in Variant:
        a = build_topology(variant, OverlayParams(), np.random.default_rng(5))
        b = build_topology(variant, OverlayParams(), np.random.default_rng(5))
        assert np.array_equal(a.indices, b.indices)
        assert np.array_equal(a.latency, b.latency)
        assert a.export_edges() == b.export_edges()


def test_latencies_in_range_and_symmetric_links():
    topo = build_simc_topology(OverlayParams(), np.random.default_rng(2))
    assert topo.latency.min() >= 5 and topo.latency.max() <= 50
    adj = topo.adjacency_matrix()
    assert (adj == adj.T).all()


def test_membership_built_overlay_records_shortfall():
    p = OverlayParams(num_nodes=16, c=2)
    unls = [set() for _ in range(16)]
    for v in range(16):
        g = v // 4
        unls[v] = {u for u in range(16) if u // 4 == g and u != v}
        for h in range(4):
            if h != g:
                unls[v] |= {4 * h, 4 * h + 1} if h != 3 else {12}
    topo = build_simk_from_membership(p, unls, np.random.default_rng(0))
    assert topo.shortfall[0] == {3: 1}
    assert 12 not in topo.shortfall
    assert set(topo.tnl(12).tolist()) >= {0, 1, 4, 5}
