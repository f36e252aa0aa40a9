import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sissle.membership import (Contact, LivenessState, MemberRecord, MembershipNetwork, MembershipNode,
                               NmlResponse, TimingParams, UnlChangeMonitor, build_unl_from_nml, join_step,
                               merge_nml_entries, on_ack, on_message, on_node_leave, on_trust_token,
                               replenish_unl_b, tick_liveness, unl_build_step)
from sissle.netsim import MsgKind
from sissle.overlay import ConfigError, OverlayParams

S1, S2, S3, S4 = LivenessState.S1, LivenessState.S2, LivenessState.S3, LivenessState.S4
T = TimingParams()


def first_time_in(record, state, step=0.25, limit=40.0):
    t = record.last_timestamp
    r = record
    while t < limit:
        t += step
        r = tick_liveness(r, t, T).record
        if r.state is state:
            return t
    return None


def test_liveness_transition_times():
    r = MemberRecord(1, S1, 0.0)
    assert first_time_in(r, S2) == pytest.approx(6.25)
    assert first_time_in(MemberRecord(1, S2, 0.0), S3) == pytest.approx(12.25)
    assert first_time_in(MemberRecord(1, S3, 0.0), S4) == pytest.approx(24.25)
    # exactly at the boundary nothing happens yet
    assert tick_liveness(r, 6.0, T).record.state is S1
    assert tick_liveness(MemberRecord(1, S2, 0.0), 12.0, T).record.state is S2
    assert tick_liveness(MemberRecord(1, S3, 0.0), 24.0, T).record.state is S3


def test_late_tick_cascades_and_asks_before_deleting():
    res = tick_liveness(MemberRecord(1, S1, 0.0), 30.0, T)
    assert res.transitions == ((S1, S2), (S2, S3), (S3, S4))
    assert res.deleted and res.contact_attempt


@given(st.sampled_from([S1, S2, S3]), st.floats(min_value=0, max_value=100), st.booleans())
def test_any_communication_promotes_instantly(state, now, trusted):
    r = MemberRecord(4, state, 0.0, heartbeat_num=3)
    new = on_message(r, Contact(4), now, trusted)
    assert new.state is (S1 if trusted else S2)
    assert new.last_timestamp == now
    assert new.state.liveness >= S2.liveness


def test_stale_heartbeat_ignored():
    r = MemberRecord(4, S3, 1.0, heartbeat_num=5)
    assert on_message(r, Contact(4, heartbeat_num=5), 9.0, True) is r
    assert on_message(r, Contact(4, heartbeat_num=4), 9.0, True) is r
    fresh = on_message(r, Contact(4, heartbeat_num=6), 9.0, True)
    assert fresh.state is S1 and fresh.heartbeat_num == 6


def test_merge_keeps_newest():
    assert merge_nml_entries({1: 3.0, 2: 5.0}, {1: 4.0, 2: 1.0, 7: 0.5}) == {1: 4.0, 2: 5.0, 7: 0.5}


def test_timing_validation():
    with pytest.raises(ConfigError):
        TimingParams(t1=2, t2=1).validate()
    with pytest.raises(ConfigError):
        TimingParams(unl_change_tolerance=1.5).validate()


def test_unl_change_monitor_window():
    m = UnlChangeMonitor(T)
    m.record(0.0, 2)
    assert m.exceeded(1.0, 9)       # 2 > 0.2 * 9
    assert not m.exceeded(1.0, 10)
    assert not m.exceeded(10.5, 9)  # window has slid past


def node(v=0, n=16, **kw):
    return MembershipNode(v, OverlayParams(num_nodes=n), **kw)


def test_join_pulls_from_introducer_then_new_members():
    rng = np.random.default_rng(0)
    st_ = node(1, introducers={0})
    assert join_step(st_, [], rng) == [0]
    entries = {u: 0.0 for u in range(16) if u != 1}
    sends = join_step(st_, [NmlResponse(0, entries)], rng)
    own = {2, 3}
    assert own <= set(sends)
    for g in (1, 2, 3):
        assert sum(1 for u in sends if u // 4 == g) == min(4, 2 * 2)
    assert set(st_.records) == set(range(16)) - {1}


def test_join_stops_after_five_unchanged_iterations():
    rng = np.random.default_rng(0)
    st_ = node(1, introducers={0})
    join_step(st_, [], rng)
    join_step(st_, [NmlResponse(0, {0: 0.0, 2: 0.0})], rng)
    # answer every outstanding pull with nothing new
    for i in range(20):
        inbox = [NmlResponse(u, {}) for u in st_.join.outstanding()]
        join_step(st_, inbox, rng)
        if st_.join.done:
            break
    assert st_.join.done
    assert st_.join.unchanged_iterations == 5


def test_join_retries_then_substitutes():
    rng = np.random.default_rng(3)
    p = OverlayParams(num_nodes=16, c=2, b=2, d=5)
    st_ = MembershipNode(1, p, introducers={0})
    join_step(st_, [], rng)
    join_step(st_, [NmlResponse(0, {u: 0.0 for u in range(16) if u != 1})], rng)
    silent_group = [u for u in st_.join.outstanding() if u // 4 == 3]
    assert len(silent_group) == 4
    for i in range(p.d):
        inbox = [NmlResponse(u, {}) for u in st_.join.outstanding() if u // 4 != 3]
        sends = join_step(st_, inbox, rng)
        assert set(silent_group) <= set(sends)
    sends = join_step(st_, [], rng)
    assert not set(silent_group) & set(st_.join.outstanding())
    assert set(silent_group) <= st_.join.abandoned
    # every member of group 3 was already contacted, so no substitute exists
    assert not any(s in silent_group for s, _ in st_.join.substitutions)


def test_join_substitutes_fresh_node_in_same_group():
    rng = np.random.default_rng(0)
    p = OverlayParams(num_nodes=64, c=2, b=2, d=5)
    st_ = MembershipNode(1, p, introducers={0})
    join_step(st_, [], rng)
    join_step(st_, [NmlResponse(0, {u: 0.0 for u in range(64) if u != 1})], rng)
    group7 = [u for u in st_.join.outstanding() if u // 8 == 7]
    assert len(group7) == 4
    for _ in range(p.d + 1):
        join_step(st_, [NmlResponse(u, {}) for u in st_.join.outstanding() if u // 8 != 7], rng)
    subs = [(old, new) for old, new in st_.join.substitutions if old // 8 == 7]
    assert subs
    assert all(new // 8 == 7 and new not in group7 for _, new in subs)


def test_trust_token_adds_to_tnl_and_ack_adds_to_unl():
    a, b = node(0), node(5)
    ack_to = on_trust_token(b, 0, 1.0)
    assert ack_to == 0 and 0 in b.tnl
    on_ack(a, 5, 1.1)
    assert 5 in a.unl.unl_b[1]
    assert a.records[5].state is S1


def test_unl_build_with_silent_node_substitutes():
    rng = np.random.default_rng(1)
    p = OverlayParams(num_nodes=64, c=2, d=5)
    st_ = MembershipNode(0, p)
    for u in range(1, 64):
        st_.learn(u, 0.0, 0.0)
    targets = build_unl_from_nml(st_, rng)
    assert len(targets) == 7 + 2 * 7
    silent = next(u for u in targets if u // 8 == 4)
    acks = [u for u in targets if u != silent]
    sends = unl_build_step(st_, acks, rng, 1.0)
    for i in range(p.d - 1):
        sends = unl_build_step(st_, [], rng, 2.0 + i)
        assert sends == [silent]
    sends = unl_build_step(st_, [], rng, 10.0)
    assert len(sends) == 1 and sends[0] // 8 == 4 and sends[0] != silent
    unl_build_step(st_, sends, rng, 11.0)
    assert st_.build.done
    assert len(st_.unl) == p.unl_size()
    assert len(st_.unl.unl_b[4]) == 2 and silent not in st_.unl.members()


def test_unl_build_records_undersized_group():
    rng = np.random.default_rng(0)
    st_ = node(0)
    for u in (1, 2, 3, 4, 5, 8, 9, 12):
        st_.learn(u, 0.0, 0.0)
    targets = build_unl_from_nml(st_, rng)
    assert st_.build.undersized == {3: 1}
    unl_build_step(st_, targets, rng, 1.0)
    assert st_.unl.unl_b[3] == {12}


def test_node_leave_idempotent_and_forwarded_once():
    st_ = node(0)
    for u in (1, 2, 5, 6, 9):
        st_.learn(u, 0.0, 0.0)
    on_trust_token(st_, 5, 0.0)
    on_ack(st_, 5, 0.0)
    fwd = on_node_leave(st_, 5, 3.0, 3.0)
    assert sorted(fwd) == [1, 2, 6, 9]
    assert 5 not in st_.records and 5 not in st_.tnl and 5 not in st_.unl.members()
    snapshot = (dict(st_.records), set(st_.tnl), st_.unl.members())
    assert on_node_leave(st_, 5, 3.0, 4.0) == []
    assert (dict(st_.records), set(st_.tnl), st_.unl.members()) == snapshot
    # unknown nodes are ignored without forwarding
    assert on_node_leave(st_, 13, 3.0, 4.0) == []
    # stale gossip cannot resurrect a departed node
    assert not st_.learn(5, 2.0, 5.0)
    assert 5 not in st_.records


def test_replenish_restores_c_per_group_or_mirrors():
    rng = np.random.default_rng(0)
    st_ = node(0)
    for u in range(1, 16):
        st_.learn(u, 0.0, 0.0)
    st_.unl.unl_b = {1: {4}, 2: {8, 9}}
    st_.records = {u: r for u, r in st_.records.items() if u not in (13, 14, 15)}
    tokens = replenish_unl_b(st_, rng, 0.0)
    assert sum(1 for u in tokens if u // 4 == 1) == 1
    assert not any(u // 4 == 2 for u in tokens)
    assert [u for u in tokens if u // 4 == 3] == [12]
    # pending tokens are not duplicated on the next step
    assert replenish_unl_b(st_, rng, 0.5) == []


def run_network(n, seed, until):
    net = MembershipNetwork(OverlayParams(num_nodes=n), seed=seed)
    net.add_introducer(0)
    for v in range(1, n):
        net.schedule_join(v, 2.0 * v)
    net.run(until)
    return net


@pytest.mark.parametrize("n,seed", [(16, 0), (16, 1), (25, 2)])
def test_joins_converge_to_overlay_invariants(n, seed):
    net = run_network(n, seed, 2.0 * n + 60)
    assert net.check_overlay() == []
    for v, st_ in net.nodes.items():
        assert st_.phase == "live"
        assert len(st_.unl) == OverlayParams(num_nodes=n).unl_size()


def test_leave_and_crash_are_repaired():
    net = run_network(16, 3, 100.0)
    net.record_trace = True
    for st_ in net.nodes.values():
        st_.trace = net.trace
    net.schedule_leave(5, 101.0)
    net.schedule_crash(7, 101.0)
    net.run(140.0)
    rest = set(net.alive) - {5, 7}
    assert net.check_overlay(rest) == []
    assert all(5 not in net.nodes[v].records and 7 not in net.nodes[v].records for v in rest)
    assert all(count == 1 for count in net.leave_forwards.values())
    # demotion of the crashed node happens after 6 t1 of silence, never earlier
    demotions = [float(line.split()[0]) for line in net.trace if line.split()[2] == "7" and "S1 S2" in line]
    assert demotions and min(demotions) > 101.0 + 6 * T.t1 - 1.0
    assert net.sent[MsgKind.NODE_LEAVE] > 0


def test_trace_line_shape():
    net = MembershipNetwork(OverlayParams(num_nodes=16), seed=0, record_trace=True)
    net.add_introducer(0)
    net.schedule_join(1, 0.0)
    net.run(20.0)
    assert net.trace
    for line in net.trace:
        parts = line.split()
        assert len(parts) == 6
        float(parts[0])
        int(parts[1]), int(parts[2])
