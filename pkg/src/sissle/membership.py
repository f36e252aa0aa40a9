"""Dynamic UNL/TNL/NML maintenance: join, liveness states, leave and UNL-B replenishment.

The per-node pieces are plain transition functions on small state objects.
``MembershipNetwork`` wires them to the event queue for whole-network runs.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from enum import IntEnum

import numpy as np

from .netsim.events import PRIO_DELIVER, PRIO_TIMER, EventQueue, MsgKind, SimMessage
from .overlay import ConfigError, Nml, OverlayParams, UnlView


class LivenessState(IntEnum):
    S1 = 1
    S2 = 2
    S3 = 3
    S4 = 4

    @property
    def liveness(self) -> int:
        """Larger is more live: S1 > S2 > S3 > S4."""
        return 5 - int(self)


@dataclass(frozen=True)
class TimingParams:
    t1: float = 1.0
    t2: float = 6.0
    t3: float = 30.0
    t4: float = 1.0
    t5: float = 12.0
    unl_change_tolerance: float = 0.2
    unl_change_window: float = 10.0

    def validate(self) -> None:
        if not 0 < self.t1 < self.t2 < self.t3:
            raise ConfigError("timing must satisfy 0 < t1 < t2 < t3")
        if self.t4 <= 0 or self.t5 <= 0:
            raise ConfigError("t4 and t5 must be positive")
        if not 0 <= self.unl_change_tolerance <= 1:
            raise ConfigError("UNL change tolerance must lie in [0, 1]")

    @property
    def s1_s2_age(self) -> float:
        return 6 * self.t1

    @property
    def s2_s3_age(self) -> float:
        return self.t5

    @property
    def s3_s4_age(self) -> float:
        return 2 * self.t5


@dataclass(frozen=True)
class MemberRecord:
    node: int
    state: LivenessState
    last_timestamp: float
    heartbeat_num: int = 0


@dataclass(frozen=True)
class Contact:
    """Any received communication, seen through the liveness lens."""

    sender: int
    heartbeat_num: int | None = None


def on_message(record: MemberRecord, msg: Contact, now: float, trusted: bool) -> MemberRecord:
    """Refresh a record on receipt of any communication from its node.

    A heartbeat whose number is not newer than the stored one is stale and ignored.
    """
    hb = record.heartbeat_num
    if msg.heartbeat_num is not None:
        if msg.heartbeat_num <= record.heartbeat_num:
            return record
        hb = msg.heartbeat_num
    state = LivenessState.S1 if trusted else LivenessState.S2
    return MemberRecord(record.node, state, now, hb)


@dataclass(frozen=True)
class TickResult:
    record: MemberRecord
    contact_attempt: bool = False
    deleted: bool = False
    transitions: tuple[tuple[LivenessState, LivenessState], ...] = ()


def tick_liveness(record: MemberRecord, now: float, timing: TimingParams) -> TickResult:
    """Demote a silent node according to the age of its last timestamp."""
    age = now - record.last_timestamp
    state = record.state
    steps = []
    if state is LivenessState.S1 and age > timing.s1_s2_age:
        steps.append((state, LivenessState.S2))
        state = LivenessState.S2
    if state is LivenessState.S2 and age > timing.s2_s3_age:
        steps.append((state, LivenessState.S3))
        state = LivenessState.S3
    contact = False
    if state is LivenessState.S3 and age > timing.s3_s4_age:
        steps.append((state, LivenessState.S4))
        state = LivenessState.S4
        contact = True
    new = replace(record, state=state)
    return TickResult(new, contact, state is LivenessState.S4, tuple(steps))


def merge_nml_entries(a: dict[int, float], b: dict[int, float]) -> dict[int, float]:
    """Union of two NML entry maps, keeping the newest timestamp per node."""
    out = dict(a)
    for node, ts in b.items():
        if node not in out or ts > out[node]:
            out[node] = ts
    return out


class UnlChangeMonitor:
    """Tracks UNL membership changes and reports when a sliding window exceeds the tolerance."""

    def __init__(self, timing: TimingParams):
        self.timing = timing
        self.events: deque[float] = deque()

    def record(self, now: float, count: int = 1) -> None:
        for _ in range(count):
            self.events.append(now)

    def changes(self, now: float) -> int:
        while self.events and self.events[0] <= now - self.timing.unl_change_window:
            self.events.popleft()
        return len(self.events)

    def exceeded(self, now: float, unl_size: int) -> bool:
        if unl_size <= 0:
            return False
        return self.changes(now) > self.timing.unl_change_tolerance * unl_size


# ---------------------------------------------------------------------------
# node state


@dataclass
class JoinProgress:
    iteration: int = 0
    contacted: set[int] = field(default_factory=set)
    responded: set[int] = field(default_factory=set)
    abandoned: set[int] = field(default_factory=set)
    pending_retries: dict[int, int] = field(default_factory=dict)
    unchanged_iterations: int = 0
    b_contacted: dict[int, set[int]] = field(default_factory=dict)
    substitutions: list[tuple[int, int]] = field(default_factory=list)
    done: bool = False

    def outstanding(self) -> list[int]:
        return sorted(self.pending_retries)


@dataclass
class UnlBuild:
    attempts: dict[int, int] = field(default_factory=dict)    # outstanding token -> sends so far
    tried: set[int] = field(default_factory=set)
    acked: set[int] = field(default_factory=set)
    undersized: dict[int, int] = field(default_factory=dict)
    done: bool = False


@dataclass
class NmlResponse:
    src: int
    entries: dict[int, float]


@dataclass
class MembershipNode:
    node: int
    params: OverlayParams
    timing: TimingParams = field(default_factory=TimingParams)
    introducers: set[int] = field(default_factory=set)
    records: dict[int, MemberRecord] = field(default_factory=dict)
    unl: UnlView = field(default_factory=UnlView)
    tnl: set[int] = field(default_factory=set)
    phase: str = "join"
    join: JoinProgress = field(default_factory=JoinProgress)
    build: UnlBuild = field(default_factory=UnlBuild)
    seen_leaves: set[tuple[int, float]] = field(default_factory=set)
    departed: dict[int, float] = field(default_factory=dict)
    pending_tokens: dict[int, float] = field(default_factory=dict)
    heartbeat_num: int = 0
    trace: list[str] | None = None
    monitor: UnlChangeMonitor | None = None

    def __post_init__(self):
        if self.monitor is None:
            self.monitor = UnlChangeMonitor(self.timing)

    # -- helpers -------------------------------------------------------------
    @property
    def group(self) -> int:
        return self.node // self.params.group_size

    def group_of(self, u: int) -> int:
        return u // self.params.group_size

    @property
    def nml(self) -> Nml:
        out = Nml(nml_c=set(self.introducers) - {self.node})
        for u in self.records:
            g = self.group_of(u)
            if g == self.group:
                out.nml_a.add(u)
            else:
                out.nml_b.setdefault(g, set()).add(u)
        return out

    def trusted(self, u: int) -> bool:
        return u in self.tnl or u in self.unl.members()

    def live_members(self) -> set[int]:
        return {u for u, r in self.records.items() if r.state in (LivenessState.S1, LivenessState.S2)}

    def _log(self, now: float, peer: int, old, new, reason: str) -> None:
        if self.trace is not None:
            o = old.name if isinstance(old, LivenessState) else str(old)
            n = new.name if isinstance(new, LivenessState) else str(new)
            self.trace.append(f"{now:.6f} {self.node} {peer} {o} {n} {reason}")

    def _set_state(self, u: int, state: LivenessState, now: float, reason: str) -> None:
        r = self.records.get(u)
        if r is None or r.state is state:
            return
        self.records[u] = replace(r, state=state)
        self._log(now, u, r.state, state, reason)

    def learn(self, u: int, ts: float, now: float) -> bool:
        """Add or refresh an NML entry from third-party information. Returns True if new."""
        if u == self.node:
            return False
        if u in self.departed and ts <= self.departed[u]:
            return False
        r = self.records.get(u)
        if r is None:
            state = LivenessState.S1 if self.trusted(u) else LivenessState.S2
            self.records[u] = MemberRecord(u, state, ts)
            self._log(now, u, "none", state, "learned")
            return True
        if ts > r.last_timestamp:
            state = LivenessState.S1 if self.trusted(u) else LivenessState.S2
            self.records[u] = MemberRecord(u, state, ts, r.heartbeat_num)
            if state is not r.state:
                self._log(now, u, r.state, state, "merge")
        return False

    def hear_from(self, u: int, now: float, heartbeat_num: int | None = None) -> None:
        """Direct communication from ``u``: instant promotion."""
        if u == self.node:
            return
        self.departed.pop(u, None)
        r = self.records.get(u)
        if r is None:
            self.learn(u, now, now)
            if heartbeat_num is not None:
                self.records[u] = replace(self.records[u], heartbeat_num=heartbeat_num)
            return
        new = on_message(r, Contact(u, heartbeat_num), now, self.trusted(u))
        if new is not r:
            self.records[u] = new
            if new.state is not r.state:
                self._log(now, u, r.state, new.state, "contact")

    def entries(self, now: float) -> dict[int, float]:
        out = {u: r.last_timestamp for u, r in self.records.items()}
        out[self.node] = now
        return out

    def add_to_unl(self, u: int, now: float) -> None:
        if u == self.node or u in self.unl.members():
            return
        g = self.group_of(u)
        if g == self.group:
            self.unl.unl_a.add(u)
        else:
            self.unl.unl_b.setdefault(g, set()).add(u)
        self.monitor.record(now)
        if u in self.records:
            self._set_state(u, LivenessState.S1, now, "trust")

    def drop_trust(self, u: int, now: float) -> None:
        removed = False
        if u in self.unl.unl_a:
            self.unl.unl_a.discard(u)
            removed = True
        g = self.group_of(u)
        if u in self.unl.unl_b.get(g, set()):
            self.unl.unl_b[g].discard(u)
            if not self.unl.unl_b[g]:
                del self.unl.unl_b[g]
            removed = True
        if removed:
            self.monitor.record(now)
        self.tnl.discard(u)

    def unl_unstable(self, now: float) -> bool:
        return self.monitor.exceeded(now, len(self.unl))


# ---------------------------------------------------------------------------
# join


def join_step(state: MembershipNode, inbox: list[NmlResponse], rng: np.random.Generator,
              now: float = 0.0) -> list[int]:
    """One NML-building iteration. Returns the NML pull targets for this iteration."""
    jp = state.join
    p = state.params
    jp.iteration += 1
    changed = False
    for resp in inbox:
        jp.responded.add(resp.src)
        jp.pending_retries.pop(resp.src, None)
        state.hear_from(resp.src, now)
        for u, ts in sorted(resp.entries.items()):
            if state.learn(u, ts, now):
                changed = True

    sends: list[int] = []
    nml = state.nml

    def contact(u: int) -> None:
        jp.contacted.add(u)
        jp.pending_retries[u] = 0
        sends.append(u)
        g = state.group_of(u)
        if g != state.group:
            jp.b_contacted.setdefault(g, set()).add(u)

    for u in jp.outstanding():
        if jp.pending_retries[u] < p.d:
            jp.pending_retries[u] += 1
            sends.append(u)
            continue
        del jp.pending_retries[u]
        jp.abandoned.add(u)
        g = state.group_of(u)
        if g == state.group or u in nml.nml_c:
            continue
        members = nml.nml_b.get(g, set())
        if len(jp.responded & members) < p.c:
            fresh = sorted(members - jp.contacted)
            if fresh:
                sub = int(fresh[int(rng.integers(len(fresh)))])
                jp.substitutions.append((u, sub))
                contact(sub)

    for u in sorted((nml.nml_a | nml.nml_c) - jp.contacted):
        contact(u)
    for g in sorted(nml.nml_b):
        quota = p.c * p.b - len(jp.b_contacted.get(g, set()))
        fresh = sorted(nml.nml_b[g] - jp.contacted)
        if quota > 0 and fresh:
            k = min(quota, len(fresh))
            for u in rng.choice(np.array(fresh), size=k, replace=False).tolist():
                contact(int(u))

    jp.unchanged_iterations = 0 if changed else jp.unchanged_iterations + 1
    if not jp.pending_retries and jp.unchanged_iterations >= 5:
        jp.done = True
    return sends


# ---------------------------------------------------------------------------
# UNL build


def build_unl_from_nml(state: MembershipNode, rng: np.random.Generator) -> list[int]:
    """Initial trust tokens: the whole own group plus ``c`` random members per foreign group."""
    b = state.build
    nml = state.nml
    targets = sorted(nml.nml_a)
    for g in sorted(nml.nml_b):
        members = sorted(nml.nml_b[g])
        k = min(state.params.c, len(members))
        if k < state.params.c:
            b.undersized[g] = state.params.c - k
        targets += sorted(int(u) for u in rng.choice(np.array(members), size=k, replace=False))
    for u in targets:
        b.attempts[u] = 1
        b.tried.add(u)
    if not targets:
        b.done = True
    return targets


def on_trust_token(state: MembershipNode, sender: int, now: float) -> int:
    """Token receipt: the sender enters the TNL and gets an ACK (returned as its id)."""
    state.tnl.add(sender)
    state.hear_from(sender, now)
    state._set_state(sender, LivenessState.S1, now, "token")
    return sender


def on_ack(state: MembershipNode, sender: int, now: float) -> None:
    state.build.attempts.pop(sender, None)
    state.build.acked.add(sender)
    state.pending_tokens.pop(sender, None)
    state.hear_from(sender, now)
    state.add_to_unl(sender, now)


def unl_build_step(state: MembershipNode, acks: list[int], rng: np.random.Generator,
                   now: float = 0.0) -> list[int]:
    """Retry silent token targets up to ``d`` times, then substitute from the same group."""
    b = state.build
    p = state.params
    for a in acks:
        on_ack(state, a, now)
    sends = []
    nml = state.nml
    for u in sorted(b.attempts):
        if b.attempts[u] <= p.d:
            b.attempts[u] += 1
            sends.append(u)
            continue
        del b.attempts[u]
        g = state.group_of(u)
        if g == state.group:
            continue
        have = len(state.unl.unl_b.get(g, set())) + sum(1 for v in b.attempts if state.group_of(v) == g)
        if have >= p.c:
            continue
        fresh = sorted(nml.nml_b.get(g, set()) - b.tried)
        if fresh:
            sub = int(fresh[int(rng.integers(len(fresh)))])
            b.tried.add(sub)
            b.attempts[sub] = 1
            sends.append(sub)
        else:
            b.undersized[g] = p.c - have
    if not b.attempts:
        b.done = True
    return sends


# ---------------------------------------------------------------------------
# leave and replenishment


def on_node_leave(state: MembershipNode, leaving: int, timestamp: float, now: float = 0.0) -> list[int]:
    """Handle a leave notice. Returns forward targets (non-empty only on the first sighting
    of a node this owner still listed)."""
    key = (leaving, timestamp)
    if key in state.seen_leaves:
        return []
    state.seen_leaves.add(key)
    present = leaving in state.records or leaving in state.tnl or leaving in state.unl.members()
    if not present or leaving == state.node:
        return []
    targets = sorted((state.unl.members() | state.tnl | set(state.records)) - {leaving, state.node})
    state.drop_trust(leaving, now)
    old = state.records.pop(leaving, None)
    state.departed[leaving] = timestamp
    state.pending_tokens.pop(leaving, None)
    state._log(now, leaving, old.state if old else "none", LivenessState.S4, "leave")
    return targets


def replenish_unl_b(state: MembershipNode, rng: np.random.Generator, now: float = 0.0) -> list[int]:
    """Trust tokens that bring every foreign group of UNL-B back to ``c`` live members.

    Groups whose NML-B holds fewer than ``c`` members are mirrored in full.
    """
    c = state.params.c
    nml = state.nml
    live = state.live_members()
    tokens = []
    for g in sorted(nml.nml_b):
        members = nml.nml_b[g] & live
        current = state.unl.unl_b.get(g, set())
        pending = {u for u in state.pending_tokens if state.group_of(u) == g}
        if len(members) < c:
            want = sorted(members - current - pending)
        else:
            need = c - len(current) - len(pending)
            cand = sorted(members - current - pending)
            if need <= 0 or not cand:
                continue
            want = sorted(int(u) for u in rng.choice(np.array(cand), size=min(need, len(cand)), replace=False))
        for u in want:
            state.pending_tokens[u] = now
            tokens.append(u)
    return tokens


def ensure_unl_a(state: MembershipNode, now: float = 0.0) -> list[int]:
    """Own-group NML members that are live but not yet in UNL-A get a trust token."""
    out = []
    for u in sorted(state.nml.nml_a & state.live_members()):
        if u not in state.unl.unl_a and u not in state.pending_tokens:
            state.pending_tokens[u] = now
            out.append(u)
    return out


# ---------------------------------------------------------------------------
# whole-network driver


@dataclass
class MembershipNetwork:
    """Event-driven membership simulation over a set of nodes joining and leaving."""

    params: OverlayParams
    timing: TimingParams = field(default_factory=TimingParams)
    seed: int = 0
    latency: tuple[float, float] = (0.005, 0.05)
    introducer_intimation: bool = False
    record_trace: bool = False

    def __post_init__(self):
        self.timing.validate()
        self.rng = np.random.default_rng(self.seed)
        self.q = EventQueue()
        self.nodes: dict[int, MembershipNode] = {}
        self.alive: set[int] = set()
        self.silent: set[int] = set()
        self.now = 0.0
        self.sent: dict[MsgKind, int] = {k: 0 for k in MsgKind}
        self.trace: list[str] = []
        self.leave_forwards: dict[tuple[int, int], int] = {}
        self.inbox_nml: dict[int, list[NmlResponse]] = {}
        self.inbox_ack: dict[int, list[int]] = {}
        self.introducers: set[int] = set()

    # -- setup ---------------------------------------------------------------
    def add_introducer(self, node: int, at: float = 0.0) -> None:
        """Bootstrap node that is live from the start with empty lists."""
        st = self._make(node)
        st.phase = "live"
        st.join.done = True
        st.build.done = True
        self.introducers.add(node)
        self.alive.add(node)
        self._schedule_live_timers(node, at)

    def schedule_join(self, node: int, at: float) -> None:
        self.q.push(at, PRIO_TIMER, ("join", node))

    def schedule_leave(self, node: int, at: float) -> None:
        self.q.push(at, PRIO_TIMER, ("leave", node))

    def schedule_crash(self, node: int, at: float) -> None:
        self.q.push(at, PRIO_TIMER, ("crash", node))

    def _make(self, node: int) -> MembershipNode:
        st = MembershipNode(node, self.params, self.timing, introducers=set(self.introducers),
                            trace=self.trace if self.record_trace else None)
        self.nodes[node] = st
        return st

    # -- messaging -----------------------------------------------------------
    def send(self, kind: MsgKind, src: int, dst: int, payload=None) -> None:
        lat = float(self.rng.uniform(*self.latency))
        self.q.send(SimMessage(kind, src, dst, payload, self.now, self.now + lat))
        self.sent[kind] += 1

    def _deliver(self, msg: SimMessage) -> None:
        dst = msg.dst
        if dst not in self.alive or dst in self.silent:
            return
        st = self.nodes[dst]
        now = self.now
        if msg.kind is MsgKind.NODE_LEAVE:
            leaving, ts = msg.payload
            fwd = on_node_leave(st, leaving, ts, now)
            if fwd:
                key = (dst, leaving)
                self.leave_forwards[key] = self.leave_forwards.get(key, 0) + 1
            for u in fwd:
                self.send(MsgKind.NODE_LEAVE, dst, u, (leaving, ts))
            return
        if msg.src in st.departed:
            return
        if msg.kind is MsgKind.HEARTBEAT:
            hb, want_reply = msg.payload
            st.hear_from(msg.src, now, hb)
            if want_reply:
                self.send(MsgKind.HEARTBEAT, dst, msg.src, (None, False))
        elif msg.kind is MsgKind.NML_PULL:
            st.hear_from(msg.src, now)
            self.send(MsgKind.NML_RESPONSE, dst, msg.src, NmlResponse(dst, st.entries(now)))
            if self.introducer_intimation and dst in self.introducers:
                for u in sorted(st.live_members() - {msg.src}):
                    self.send(MsgKind.NML_RESPONSE, dst, u, NmlResponse(dst, {msg.src: now}))
        elif msg.kind is MsgKind.NML_RESPONSE:
            if st.phase == "join":
                self.inbox_nml.setdefault(dst, []).append(msg.payload)
            else:
                st.hear_from(msg.src, now)
                for u, ts in sorted(msg.payload.entries.items()):
                    st.learn(u, ts, now)
        elif msg.kind is MsgKind.TRUST_TOKEN:
            if st.phase == "join":
                st.tnl.add(msg.src)
                st.hear_from(msg.src, now)
                self.send(MsgKind.ACK, dst, msg.src)
            else:
                self.send(MsgKind.ACK, dst, on_trust_token(st, msg.src, now))
        elif msg.kind is MsgKind.ACK:
            if st.phase == "build":
                self.inbox_ack.setdefault(dst, []).append(msg.src)
            else:
                on_ack(st, msg.src, now)
        else:
            st.hear_from(msg.src, now)

    # -- timers --------------------------------------------------------------
    def _schedule_live_timers(self, node: int, at: float) -> None:
        t = self.timing
        self.q.push(at + t.t1, PRIO_TIMER, ("round", node))
        self.q.push(at + t.t2, PRIO_TIMER, ("heartbeat", node))
        self.q.push(at + t.t3, PRIO_TIMER, ("gossip", node))
        self.q.push(at + t.t1, PRIO_TIMER, ("liveness", node))

    def _timer(self, what: str, node: int) -> None:
        now = self.now
        t = self.timing
        if what == "join":
            st = self._make(node)
            self.alive.add(node)
            st.phase = "join"
            self.q.push(now, PRIO_TIMER, ("join_iter", node))
            return
        if what == "leave":
            if node in self.alive:
                st = self.nodes[node]
                for u in sorted(set(st.records) | st.tnl | st.unl.members()):
                    self.send(MsgKind.NODE_LEAVE, node, u, (node, now))
                self.alive.discard(node)
            return
        if what == "crash":
            self.silent.add(node)
            return
        if node not in self.alive or node in self.silent:
            return
        st = self.nodes[node]
        if what == "join_iter":
            inbox = self.inbox_nml.pop(node, [])
            for u in join_step(st, inbox, self.rng, now):
                self.send(MsgKind.NML_PULL, node, u)
            if st.join.done:
                st.phase = "build"
                for u in build_unl_from_nml(st, self.rng):
                    self.send(MsgKind.TRUST_TOKEN, node, u)
                self.q.push(now + t.t4, PRIO_TIMER, ("build_iter", node))
            else:
                self.q.push(now + t.t4, PRIO_TIMER, ("join_iter", node))
        elif what == "build_iter":
            acks = self.inbox_ack.pop(node, [])
            for u in unl_build_step(st, acks, self.rng, now):
                self.send(MsgKind.TRUST_TOKEN, node, u)
            if st.build.done:
                st.phase = "live"
                self._schedule_live_timers(node, now)
            else:
                self.q.push(now + t.t4, PRIO_TIMER, ("build_iter", node))
        elif what == "round":
            for u in sorted(st.unl.members() | st.tnl):
                self.send(MsgKind.PROPOSAL, node, u)
            for u in ensure_unl_a(st, now) + replenish_unl_b(st, self.rng, now):
                self.send(MsgKind.TRUST_TOKEN, node, u)
            for u, since in list(st.pending_tokens.items()):
                if now - since > t.s1_s2_age:
                    del st.pending_tokens[u]
            self.q.push(now + t.t1, PRIO_TIMER, ("round", node))
        elif what == "heartbeat":
            st.heartbeat_num += 1
            for u in sorted(st.unl.members() | st.tnl):
                self.send(MsgKind.HEARTBEAT, node, u, (st.heartbeat_num, False))
            self.q.push(now + t.t2, PRIO_TIMER, ("heartbeat", node))
        elif what == "gossip":
            entries = st.entries(now)
            for u in sorted(st.records):
                self.send(MsgKind.NML_RESPONSE, node, u, NmlResponse(node, entries))
            self.q.push(now + t.t3, PRIO_TIMER, ("gossip", node))
        elif what == "liveness":
            for u in sorted(st.records):
                r = st.records[u]
                res = tick_liveness(r, now, t)
                if not res.transitions:
                    if r.state is LivenessState.S3:
                        self.send(MsgKind.HEARTBEAT, node, u, (None, True))
                    continue
                for old, new in res.transitions:
                    st._log(now, u, old, new, "timeout")
                if res.record.state is not LivenessState.S1:
                    st.drop_trust(u, now)
                if res.contact_attempt:
                    self.send(MsgKind.HEARTBEAT, node, u, (None, True))
                if res.deleted:
                    del st.records[u]
                else:
                    st.records[u] = res.record
                    if res.record.state is LivenessState.S3:
                        self.send(MsgKind.HEARTBEAT, node, u, (None, True))
            self.q.push(now + t.t1, PRIO_TIMER, ("liveness", node))

    def run(self, until: float) -> None:
        while self.q and self.q.peek_time() <= until:
            now, prio, item = self.q.pop()
            self.now = now
            if prio == PRIO_DELIVER:
                self._deliver(item)
            else:
                self._timer(*item)
        self.now = until

    # -- inspection ----------------------------------------------------------
    def unl_sets(self) -> dict[int, set[int]]:
        return {v: st.unl.members() for v, st in self.nodes.items() if v in self.alive}

    def check_overlay(self, members: set[int] | None = None) -> list[str]:
        """Structural problems among live nodes (empty list = all invariants hold)."""
        members = set(self.alive) - self.silent if members is None else members
        s, c = self.params.group_size, self.params.c
        problems = []
        for v in sorted(members):
            st = self.nodes[v]
            own = {u for u in members if u // s == v // s and u != v}
            if st.unl.unl_a != own:
                problems.append(f"node {v}: UNL-A {sorted(st.unl.unl_a)} != own group {sorted(own)}")
            for g in range(s):
                if g == v // s:
                    continue
                avail = {u for u in members if u // s == g}
                have = st.unl.unl_b.get(g, set())
                if not have <= avail:
                    problems.append(f"node {v}: UNL-B group {g} holds departed nodes")
                if len(have) < min(c, len(avail)):
                    problems.append(f"node {v}: UNL-B group {g} has {len(have)} < {min(c, len(avail))}")
            if not st.unl.members() <= set(st.records):
                problems.append(f"node {v}: UNL not contained in NML")
            if v in st.unl.members():
                problems.append(f"node {v}: lists itself")
        for x in sorted(members):
            for y in sorted(members):
                in_unl = y in self.nodes[x].unl.members()
                in_tnl = x in self.nodes[y].tnl
                if in_unl and not in_tnl:
                    problems.append(f"{y} in UNL({x}) but {x} not in TNL({y})")
        return problems
