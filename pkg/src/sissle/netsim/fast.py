"""Vectorised engine with the same semantics as the message-level engine.

Instead of one heap event per message it advances batch tick by batch tick
and relaxes arrival times for every (item, node) pair that fires on that tick.
The arithmetic is the same as in ``engine.py`` so the results agree exactly.
"""
from __future__ import annotations

import math

import numpy as np

from .. import consensus as cs
from ..overlay import Variant
from .config import CONSENSUS_MODES
from .engine import EngineOutcome, Recipients, recipient_sets
from .scenario import CaseSetup


class _Flood:
    """Arrival-time matrix for a family of items that share one recipient graph."""

    def __init__(self, rec: Recipients, n: int, capacity: int, relay: np.ndarray, end: float):
        self.rec = rec
        self.n = n
        self.arrival = np.full((capacity, n), np.inf)
        self.origin = np.full(capacity, -1, dtype=np.int64)
        self.count = 0
        self.relay = relay
        self.end = end
        self.sent = 0
        self.recvd = 0
        self.degree = np.array([r.size for r in rec.nodes], dtype=np.int64)
        self.n_before_end = np.array([int((lat < end).sum()) for lat in rec.latency], dtype=np.int64)

    def originate(self, origin: int, now: float) -> int:
        k = self.count
        self.count += 1
        self.origin[k] = origin
        self.arrival[k, origin] = now
        nb, lat = self.rec.nodes[origin], self.rec.latency[origin]
        if nb.size:
            self.arrival[k, nb] = np.minimum(self.arrival[k, nb], now + lat)
            self.sent += nb.size
            self.recvd += int((now + lat < self.end).sum())
        return k

    def fire(self, m: int, x: float) -> None:
        """Relay every item whose first arrival falls in tick ``m``."""
        if self.count == 0:
            return
        a = self.arrival[:self.count]
        due = np.ceil(a / x) == m
        due &= self.relay[None, :]
        due[np.arange(self.count), self.origin[:self.count]] = False
        if not due.any():
            return
        now = m * x
        for v in np.flatnonzero(due.any(axis=0)).tolist():
            nb = self.rec.nodes[v]
            rows = np.flatnonzero(due[:, v])
            r = rows.size
            self.sent += r * int(self.degree[v])
            if not nb.size:
                continue
            arr = now + self.rec.latency[v]
            self.recvd += r * int((arr < self.end).sum())
            block = a[np.ix_(rows, nb)]
            a[np.ix_(rows, nb)] = np.minimum(block, arr[None, :])

    def last_tick(self, x: float) -> int:
        """Largest tick index any relay still has to fire on."""
        if self.count == 0:
            return 0
        a = self.arrival[:self.count]
        mask = np.isfinite(a) & self.relay[None, :]
        mask[np.arange(self.count), self.origin[:self.count]] = False
        if not mask.any():
            return 0
        return int(np.ceil(a[mask] / x).max())


class FastEngine:
    def __init__(self, setup: CaseSetup):
        self.setup = setup
        self.cfg = setup.config
        self.n = setup.topology.n
        self.x = self.cfg.batch_period_ms
        self.genuine = ~setup.malicious
        self.consensus = self.cfg.mode in CONSENSUS_MODES
        self.end = self.cfg.round_deadline_ms if self.consensus else math.inf
        self.rec1, self.rec2 = recipient_sets(setup)

    def run(self) -> EngineOutcome:
        if self.consensus:
            return self._run_consensus()
        return self._run_propagation()

    # ------------------------------------------------------------------
    def _run_propagation(self) -> EngineOutcome:
        src = self.setup.placement.source
        relay = self.genuine.copy()
        txn = _Flood(self.rec1, self.n, 1, relay if self.cfg.txn_valid else np.zeros(self.n, bool), self.end)
        receipt = np.full(self.n, np.inf)
        txn.originate(src, 0.0)
        m = 1
        while m <= txn.last_tick(self.x):
            txn.fire(m, self.x)
            m += 1
        if self.cfg.txn_valid:
            receipt = txn.arrival[0].copy()
        return EngineOutcome(receipt, np.full(self.n, np.inf), txn.sent, txn.recvd)

    # ------------------------------------------------------------------
    def _run_consensus(self) -> EngineOutcome:
        cfg, n, x, end = self.cfg, self.n, self.x, self.end
        topo = self.setup.topology
        src = self.setup.placement.source
        g = self.genuine
        variant = topo.variant
        valid = cfg.txn_valid

        txn = _Flood(self.rec1, n, 1, g if valid else np.zeros(n, bool), end)
        props = _Flood(self.rec2, n, 2 * n + 1, g, end)

        # declarations at t=0: every genuine node tells its stage-1 recipients
        seen_direct = np.full((n, n), np.inf)      # [origin, receiver]
        decl_sent = decl_recvd = 0
        for u in np.flatnonzero(g).tolist():
            nb, lat = self.rec1.nodes[u], self.rec1.latency[u]
            if u == src:
                txn.originate(u, 0.0)
                continue
            seen_direct[u, nb] = np.minimum(seen_direct[u, nb], 0.0 + lat)
            decl_sent += nb.size
            decl_recvd += int((lat < end).sum())

        reach = None
        if variant is Variant.SIMK:
            reach = [np.union1d(topo.unl[v], topo.tnl(v)) for v in range(n)]
        unl = topo.unl
        unl_size = np.array([u.size for u in unl])

        yes_item = np.full(n, -1, dtype=np.int64)
        no_item = np.full(n, -1, dtype=np.int64)
        last_vote = np.zeros(n, dtype=np.int8)        # 0 none, 1 yes, -1 silent no, 2 issued no
        eliminated = np.zeros(n, dtype=bool)
        closed = np.full(n, np.inf)
        sched: list[cs.ThresholdSchedule | None] = [None] * n
        k = cfg.sub_rounds
        starts = [cfg.sub_round_start(j) for j in range(1, k + 1)]

        def item_times(item_idx: np.ndarray, receiver: int) -> np.ndarray:
            out = np.full(item_idx.size, np.inf)
            ok = item_idx >= 0
            out[ok] = props.arrival[item_idx[ok], receiver]
            return out

        def counts_at(i: int, t: float) -> int:
            members = unl[i]
            y = item_times(yes_item[members], i)
            nn = item_times(no_item[members], i)
            return int(((y <= t) & ~(np.maximum(y, nn) <= t)).sum())

        def closing_threshold(i: int, j: int) -> float | None:
            s = sched[i]
            if s is None:
                return None
            if variant is Variant.SIMK:
                return s.absolute_cap
            return s.final if j == k else None

        def close_window(j: int, lo: float, hi: float, hi_inclusive: bool) -> None:
            """Deliveries inside sub-round j that could close a node."""
            for i in np.flatnonzero(g & ~np.isfinite(closed)).tolist():
                if last_vote[i] != 1 or eliminated[i]:
                    continue
                thr = closing_threshold(i, j)
                if thr is None:
                    continue
                need = cs.support_needed(thr, int(unl_size[i]))
                members = unl[i]
                y = item_times(yes_item[members], i)
                nn = item_times(no_item[members], i)
                off = np.where(np.isfinite(nn), np.maximum(y, nn), np.inf)
                cand = y[(y > lo) & ((y <= hi) if hi_inclusive else (y < hi))]
                if cand.size == 0:
                    continue
                cand = np.sort(cand)
                ys, offs = np.sort(y), np.sort(off)
                cnt = np.searchsorted(ys, cand, side="right") - np.searchsorted(offs, cand, side="right")
                hit = np.flatnonzero(cnt >= need)
                if hit.size:
                    closed[i] = cand[hit[0]]

        def sub_round(j: int, now: float) -> None:
            if j >= 2:
                close_window(j - 1, starts[j - 2], now, True)
            receipt = txn.arrival[0] if valid else np.full(n, np.inf)
            for i in np.flatnonzero(g).tolist():
                if variant is Variant.SIMK:
                    r = reach[i]
                    if r.size:
                        seen = seen_direct[r, i] <= now
                        seen |= (r == src) & (txn.arrival[0, i] <= now)
                        comp = float(seen.sum()) / r.size
                    else:
                        comp = 0.0
                else:
                    comp = 0.0
                new_sched = cs.graded_schedule(variant, k, (cfg.unl_trust,), comp)
                holding = receipt[i] <= now
                if holding:
                    prev = sched[i]
                    if prev is not None and j >= 2 and not (closed[i] <= now) and not eliminated[i]:
                        thr = prev.per_subround[min(j - 2, len(prev.per_subround) - 1)]
                        if counts_at(i, now) < cs.support_needed(thr, int(unl_size[i])):
                            eliminated[i] = True
                    if eliminated[i]:
                        if last_vote[i] == 1:
                            last_vote[i] = 2
                            no_item[i] = props.originate(i, now)
                        elif last_vote[i] == 0:
                            last_vote[i] = -1
                    elif last_vote[i] == 0:
                        last_vote[i] = 1
                        yes_item[i] = props.originate(i, now)
                sched[i] = new_sched
                if math.isfinite(closed[i]) or last_vote[i] != 1 or eliminated[i]:
                    continue
                thr = closing_threshold(i, j)
                if thr is not None and counts_at(i, now) >= cs.support_needed(thr, int(unl_size[i])):
                    closed[i] = now

        # wave loop over ticks and sub-round starts
        last_m = math.ceil(end / x)
        m = 1
        j = 0
        while True:
            tick_t = m * x
            next_sr = starts[j] if j < k else math.inf
            if next_sr <= tick_t and next_sr < end:
                sub_round(j + 1, next_sr)
                j += 1
                continue
            if tick_t >= end or m > last_m:
                break
            txn.fire(m, x)
            props.fire(m, x)
            m += 1
        close_window(k, starts[k - 1], end, False)
        receipt = txn.arrival[0].copy() if valid else np.full(n, np.inf)
        sent = decl_sent + txn.sent + props.sent
        recvd = decl_recvd + txn.recvd + props.recvd
        return EngineOutcome(receipt, closed, sent, recvd)


def run_fast_engine(setup: CaseSetup) -> EngineOutcome:
    return FastEngine(setup).run()
