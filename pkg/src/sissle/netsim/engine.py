"""Message-level discrete-event engine.

Every message is an individual event; this is the reference implementation
that the vectorised engine in ``fast.py`` is checked against.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import consensus as cs
from ..overlay import Variant
from .config import CONSENSUS_MODES
from .events import PRIO_DELIVER, PRIO_SUBROUND, PRIO_TICK, EventQueue, MsgKind, SimMessage
from .scenario import CaseSetup

TXN_ID = 1


@dataclass
class EngineOutcome:
    receipt: np.ndarray            # first time each node held the transaction (inf = never)
    closed: np.ndarray             # close time per node (inf = not closed)
    sent: int
    recvd: int
    event_log: list[tuple] = field(default_factory=list)


@dataclass
class Recipients:
    nodes: list[np.ndarray]
    latency: list[np.ndarray]


def link_recipients(setup: CaseSetup) -> Recipients:
    t = setup.topology
    nodes, lats = [], []
    for v in range(t.n):
        a, b = t.indptr[v], t.indptr[v + 1]
        nodes.append(t.indices[a:b])
        lats.append(setup.latency[a:b])
    return Recipients(nodes, lats)


def restricted_recipients(setup: CaseSetup, full: Recipients, stage: int) -> Recipients:
    """Stage 1 to UNL only, stage 2 to TNL only (ablation switch)."""
    t = setup.topology
    nodes, lats = [], []
    for v in range(t.n):
        want = t.unl[v] if stage == 1 else t.tnl(v)
        mask = np.isin(full.nodes[v], want)
        nodes.append(full.nodes[v][mask])
        lats.append(full.latency[v][mask])
    return Recipients(nodes, lats)


def recipient_sets(setup: CaseSetup) -> tuple[Recipients, Recipients]:
    full = link_recipients(setup)
    if setup.config.restrict_recipients and setup.topology.variant is Variant.SIMK:
        return restricted_recipients(setup, full, 1), restricted_recipients(setup, full, 2)
    return full, full


def tick_time(t: float, x: float) -> float:
    return math.ceil(t / x) * x


class EventEngine:
    def __init__(self, setup: CaseSetup, record_log: bool = False):
        self.setup = setup
        self.cfg = setup.config
        self.n = setup.topology.n
        self.x = self.cfg.batch_period_ms
        self.record_log = record_log
        self.rec1, self.rec2 = recipient_sets(setup)
        self.consensus = self.cfg.mode in CONSENSUS_MODES
        self.end = self.cfg.round_deadline_ms if self.consensus else math.inf
        self.q = EventQueue()
        self.sent = 0
        self.recvd = 0
        self.log: list[tuple] = []
        self.catalogue = {TXN_ID: cs.Transaction(TXN_ID, valid=self.cfg.txn_valid, fee=1.0)}
        self.s1 = [cs.Stage1State(v, forward_txns_as_set=self.cfg.forward_txns_as_set)
                   for v in range(self.n)]
        t = setup.topology
        self.s2 = [cs.Stage2State(v, frozenset(t.unl[v].tolist())) for v in range(self.n)]
        self.schedules: list[cs.ThresholdSchedule | None] = [None] * self.n
        self.reach: list[set[int]] = []
        if t.variant is Variant.SIMK:
            self.reach = [set(t.unl[v].tolist()) | set(t.tnl(v).tolist()) for v in range(self.n)]
        self.tick_pending = [False] * self.n
        self.sub_round = 0
        self.receipt = np.full(self.n, np.inf)
        self.closed = np.full(self.n, np.inf)

    # -- helpers -------------------------------------------------------------
    def genuine(self, v: int) -> bool:
        return not self.setup.malicious[v]

    def _emit(self, kind: MsgKind, v: int, payload, now: float, rec: Recipients, forwarded: bool) -> None:
        for w, lat in zip(rec.nodes[v].tolist(), rec.latency[v].tolist()):
            msg = SimMessage(kind, v, w, payload, now, now + lat, forwarded=forwarded)
            self.q.send(msg)
            self.sent += 1
            if self.record_log:
                self.log.append(("send", now, kind.value, v, w, _payload_key(payload), forwarded))

    def _want_tick(self, v: int, now: float) -> None:
        if not self.tick_pending[v]:
            self.tick_pending[v] = True
            self.q.push(tick_time(now, self.x), PRIO_TICK, ("tick", v))

    # -- handlers ------------------------------------------------------------
    def _deliver(self, msg: SimMessage, now: float) -> None:
        self.recvd += 1
        v = msg.dst
        if self.record_log:
            self.log.append(("recv", now, msg.kind.value, msg.src, v, _payload_key(msg.payload), msg.forwarded))
        if msg.kind is MsgKind.CANDIDATE_SET:
            st = self.s1[v]
            fresh = cs.receive_candidate_set(st, msg.payload, self.catalogue, now)
            if TXN_ID in st.view and not math.isfinite(self.receipt[v]):
                self.receipt[v] = st.view[TXN_ID]
            if fresh and self.genuine(v):
                self._want_tick(v, now)
            elif fresh:
                st.pending.clear()           # malicious relays swallow everything
        elif msg.kind is MsgKind.PROPOSAL:
            st2 = self.s2[v]
            fresh = cs.receive_proposal(st2, msg.payload)
            if not self.genuine(v):
                st2.pending.clear()
                return
            if fresh:
                self._want_tick(v, now)
            self._check_close(v, now)

    def _tick(self, v: int, now: float) -> None:
        self.tick_pending[v] = False
        for batch in cs.stage1_step(self.s1[v], self.catalogue):
            self._emit(MsgKind.CANDIDATE_SET, v, batch, now, self.rec1, True)
        props, self.s2[v].pending = self.s2[v].pending, []
        for p in props:
            self._emit(MsgKind.PROPOSAL, v, p, now, self.rec2, True)

    def _completeness(self, v: int) -> float:
        reach = self.reach[v]
        if not reach:
            return 0.0
        seen = sum(1 for u in self.s1[v].seen_origins if u in reach)
        return seen / len(reach)

    def _closing_threshold(self, v: int) -> float | None:
        sched = self.schedules[v]
        if sched is None:
            return None
        if self.setup.topology.variant is Variant.SIMK:
            return sched.absolute_cap
        if self.sub_round == self.cfg.sub_rounds:
            return sched.final
        return None

    def _check_close(self, v: int, now: float) -> None:
        if self.sub_round < 1 or now >= self.end or math.isfinite(self.closed[v]):
            return
        thr = self._closing_threshold(v)
        if thr is None:
            return
        if cs.try_close(self.s2[v], TXN_ID, thr, now):
            self.closed[v] = now

    def _sub_round(self, j: int, now: float) -> None:
        self.sub_round = j
        variant = self.setup.topology.variant
        for v in range(self.n):
            if not self.genuine(v):
                continue
            comp = self._completeness(v) if variant is Variant.SIMK else 0.0
            sched = cs.graded_schedule(variant, self.cfg.sub_rounds, (self.cfg.unl_trust,), comp)
            holding = [t for t, at in self.s1[v].view.items() if at <= now]
            prop, _ = cs.stage2_step(self.s2[v], j, holding, self.schedules[v])
            self.schedules[v] = sched
            if prop is not None:
                self._emit(MsgKind.PROPOSAL, v, prop, now, self.rec2, False)
            self._check_close(v, now)

    # -- main loop -----------------------------------------------------------
    def run(self) -> EngineOutcome:
        cfg = self.cfg
        src = self.setup.placement.source
        txn = self.catalogue[TXN_ID]
        if self.consensus:
            for v in range(self.n):
                if not self.genuine(v):
                    continue
                st = self.s1[v]
                if v == src:
                    st.ledger.queue.append(txn)
                decl = cs.declare_candidate_set(st, 0.0)
                if v == src and TXN_ID in st.view:
                    self.receipt[v] = 0.0
                self._emit(MsgKind.CANDIDATE_SET, v, decl, 0.0, self.rec1, False)
            for j in range(1, cfg.sub_rounds + 1):
                self.q.push(cfg.sub_round_start(j), PRIO_SUBROUND, ("subround", j))
        else:
            st = self.s1[src]
            st.ledger.queue.append(txn)
            decl = cs.declare_candidate_set(st, 0.0)
            if TXN_ID in st.view:
                self.receipt[src] = 0.0
            if decl.txns:
                self._emit(MsgKind.CANDIDATE_SET, src, decl, 0.0, self.rec1, False)

        while self.q:
            now, prio, item = self.q.pop()
            if now >= self.end:
                break
            if prio == PRIO_DELIVER:
                self._deliver(item, now)
            elif item[0] == "tick":
                self._tick(item[1], now)
            else:
                self._sub_round(item[1], now)
        return EngineOutcome(self.receipt, self.closed, self.sent, self.recvd, self.log)


def _payload_key(payload) -> tuple:
    if isinstance(payload, cs.CandidateSet):
        return ("set", payload.origin, tuple(sorted(payload.txns)))
    if isinstance(payload, cs.Proposal):
        return ("prop", payload.origin, payload.sub_round, payload.votes)
    return ("other", repr(payload))


def run_event_engine(setup: CaseSetup, record_log: bool = False) -> EngineOutcome:
    return EventEngine(setup, record_log).run()
