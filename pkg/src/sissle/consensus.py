"""Two-stage consensus: candidate-set propagation and graded-threshold proposal rounds."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .overlay import Variant

CLASSIC_FINAL = 0.8
EPSILON = 1e-9
DEFAULT_BASE = (0.5, 0.6, 0.7)


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class Transaction:
    id: int
    valid: bool = True
    fee: float = 0.0


@dataclass(frozen=True)
class CandidateSet:
    origin: int
    txns: frozenset[int]


@dataclass(frozen=True)
class Proposal:
    origin: int
    sub_round: int
    votes: tuple[tuple[int, bool], ...]

    def vote_map(self) -> dict[int, bool]:
        return dict(self.votes)


@dataclass(frozen=True)
class ThresholdSchedule:
    per_subround: tuple[float, ...]
    absolute_cap: float

    def __post_init__(self):
        ps = self.per_subround
        if not ps:
            raise DomainError("schedule needs at least one sub-round")
        if any(not 0 < v <= 1 for v in ps):
            raise DomainError("thresholds must lie in (0, 1]")
        if any(a > b for a, b in zip(ps, ps[1:])):
            raise DomainError("thresholds must be non-decreasing")
        if any(v > self.absolute_cap + 1e-12 for v in ps):
            raise DomainError("threshold exceeds the absolute cap")

    @property
    def final(self) -> float:
        return self.per_subround[-1]


@dataclass
class NodeLedgerState:
    last_closed: set[int] = field(default_factory=set)
    held_over: set[int] = field(default_factory=set)
    queue: list[Transaction] = field(default_factory=list)


def mandatory_wait(x: float) -> float:
    """Wait before Stage 2: long enough for three hops of batched forwarding."""
    if x <= 0:
        raise DomainError("batch period must be positive")
    return 6 * x


def min_overlap_for_threshold(rho: float) -> float:
    if not 0.5 < rho <= 1:
        raise DomainError(f"threshold {rho} must lie in (0.5, 1]")
    # rounding strips binary noise so decimal inputs give decimal answers (0.8 -> 0.4)
    return round(2 * (1 - rho), 12)


def threshold_from_trust(good_fractions: Sequence[float]) -> float:
    if len(good_fractions) == 0:
        raise DomainError("need at least one trust fraction")
    if any(not 0 <= f <= 1 for f in good_fractions):
        raise DomainError("trust fractions must lie in [0, 1]")
    return 1 - min(good_fractions) / 2


def graded_cap(trust: Sequence[float] = (1.0,), completeness: float = 1.0) -> float:
    """Absolute threshold that relaxes from 0.8 toward the trust-derived bound as
    propagation completeness rises, never dropping to 0.5 or below."""
    floor = max(0.5 + EPSILON, threshold_from_trust(trust))
    floor = min(floor, CLASSIC_FINAL)
    completeness = min(max(completeness, 0.0), 1.0)
    return CLASSIC_FINAL - (CLASSIC_FINAL - floor) * completeness


def base_thresholds(sub_rounds: int) -> list[float]:
    out = []
    for j in range(sub_rounds - 1):
        out.append(DEFAULT_BASE[j] if j < len(DEFAULT_BASE) else DEFAULT_BASE[-1])
    return out


def graded_schedule(variant: "Variant | str" = Variant.SIMK, sub_rounds: int = 4,
                    trust: Sequence[float] = (1.0,), completeness: float = 0.0) -> ThresholdSchedule:
    if sub_rounds < 1:
        raise DomainError("sub_rounds must be at least 1")
    variant = Variant.parse(variant)
    cap = CLASSIC_FINAL if variant is not Variant.SIMK else graded_cap(trust, completeness)
    ps = [min(b, cap) for b in base_thresholds(sub_rounds)] + [cap]
    return ThresholdSchedule(tuple(ps), cap)


def support_needed(threshold: float, unl_size: int) -> int:
    """Smallest yes-count k with k / unl_size >= threshold."""
    if unl_size <= 0:
        return 1
    k = max(0, math.ceil(threshold * unl_size) - 1)
    while k / unl_size < threshold:
        k += 1
    return k


# ---------------------------------------------------------------------------
# Stage 1


@dataclass
class Stage1State:
    node: int
    ledger: NodeLedgerState = field(default_factory=NodeLedgerState)
    known: dict[int, Transaction] = field(default_factory=dict)
    view: dict[int, float] = field(default_factory=dict)       # txn id -> time assimilated
    seen_origins: dict[int, float] = field(default_factory=dict)
    forwarded_keys: set = field(default_factory=set)
    pending: list[CandidateSet] = field(default_factory=list)
    declared: bool = False
    forward_txns_as_set: bool = False


def declare_candidate_set(state: Stage1State, now: float) -> CandidateSet | None:
    """Flush held-over then queued transactions into the node's own candidate set.
    Declared once per round."""
    if state.declared:
        return None
    state.declared = True
    held = [state.known[t] for t in sorted(state.ledger.held_over) if t in state.known]
    txns = held + list(state.ledger.queue)
    state.ledger.queue.clear()
    ids = []
    for t in txns:
        state.known[t.id] = t
        ids.append(t.id)
        if t.valid:
            state.view.setdefault(t.id, now)
    state.seen_origins.setdefault(state.node, now)
    state.forwarded_keys.add(("set", state.node))
    return CandidateSet(state.node, frozenset(ids))


def receive_candidate_set(state: Stage1State, cs: CandidateSet, catalogue: dict[int, Transaction],
                          now: float) -> bool:
    """Vet and assimilate a foreign candidate set; queue it for one forward.

    Returns True when something new was queued for forwarding.
    """
    state.seen_origins.setdefault(cs.origin, now)
    vetted = [t for t in sorted(cs.txns) if t in catalogue and catalogue[t].valid]
    for t in vetted:
        state.known.setdefault(t, catalogue[t])
        state.view.setdefault(t, now)
    if not vetted:
        return False
    if state.forward_txns_as_set:
        fresh = [t for t in vetted if ("txn", t) not in state.forwarded_keys]
        if not fresh:
            return False
        for t in fresh:
            state.forwarded_keys.add(("txn", t))
        state.pending.append(CandidateSet(cs.origin, frozenset(fresh)))
        return True
    key = ("set", cs.origin)
    if key in state.forwarded_keys:
        return False
    state.forwarded_keys.add(key)
    state.pending.append(CandidateSet(cs.origin, frozenset(vetted)))
    return True


def stage1_step(state: Stage1State, catalogue: dict[int, Transaction],
                bandwidth_cap: int | None = None) -> list[CandidateSet]:
    """Release the next forwarding batch. With a cap, the highest-fee transactions go first
    and the rest wait for later batches."""
    if not state.pending:
        return []
    if bandwidth_cap is None:
        out, state.pending = state.pending, []
        return out
    items = [(cs.origin, t) for cs in state.pending for t in cs.txns]
    items.sort(key=lambda it: (-catalogue[it[1]].fee, it[1], it[0]))
    chosen, rest = items[:bandwidth_cap], items[bandwidth_cap:]
    state.pending = _regroup(rest)
    return _regroup(chosen)


def _regroup(items: Iterable[tuple[int, int]]) -> list[CandidateSet]:
    by_origin: dict[int, set[int]] = {}
    for origin, t in items:
        by_origin.setdefault(origin, set()).add(t)
    return [CandidateSet(o, frozenset(ts)) for o, ts in by_origin.items()]


# ---------------------------------------------------------------------------
# Stage 2


@dataclass
class Stage2State:
    node: int
    unl: frozenset[int]
    latest: dict[int, tuple[int, dict[int, bool]]] = field(default_factory=dict)
    last_vote: dict[int, bool] = field(default_factory=dict)
    eliminated: dict[int, int] = field(default_factory=dict)    # txn -> sub-round of elimination
    closed: dict[int, float] = field(default_factory=dict)      # txn -> close time
    seen_proposals: set[tuple[int, int]] = field(default_factory=set)
    pending: list[Proposal] = field(default_factory=list)
    issued: list[Proposal] = field(default_factory=list)


def yes_count(state: Stage2State, txn: int) -> int:
    n = 0
    for origin in state.unl:
        entry = state.latest.get(origin)
        if entry is not None and entry[1].get(txn, False):
            n += 1
    return n


def yes_fraction(state: Stage2State, txn: int) -> float:
    return yes_count(state, txn) / len(state.unl) if state.unl else 0.0


def receive_proposal(state: Stage2State, prop: Proposal) -> bool:
    """Record a proposal (only the newest per origin counts). Returns True when it should be
    forwarded, i.e. on the first sighting of (origin, sub-round)."""
    key = (prop.origin, prop.sub_round)
    if key in state.seen_proposals or prop.origin == state.node:
        return False
    state.seen_proposals.add(key)
    cur = state.latest.get(prop.origin)
    if cur is None or prop.sub_round > cur[0]:
        merged = dict(cur[1]) if cur is not None else {}
        merged.update(prop.vote_map())
        state.latest[prop.origin] = (prop.sub_round, merged)
    state.pending.append(prop)
    return True


def stage2_step(state: Stage2State, sub_round: int, holding: Iterable[int],
                previous: ThresholdSchedule | None) -> tuple[Proposal | None, set[int]]:
    """Start of a sub-round: eliminate transactions whose support fell below the previous
    sub-round's threshold, then issue a proposal if any vote changed.

    Returns the proposal (or None) and the set of transactions newly eliminated.
    """
    dropped: set[int] = set()
    holding = sorted(set(holding))
    if previous is not None and sub_round >= 2:
        thr = previous.per_subround[min(sub_round - 2, len(previous.per_subround) - 1)]
        need = support_needed(thr, len(state.unl))
        for t in holding:
            if t in state.closed or t in state.eliminated:
                continue
            if yes_count(state, t) < need:
                state.eliminated[t] = sub_round
                dropped.add(t)
    changes = []
    for t in holding:
        vote = t not in state.eliminated
        if state.last_vote.get(t) != vote:
            if not vote and t not in state.last_vote:
                state.last_vote[t] = vote
                continue
            state.last_vote[t] = vote
            changes.append((t, vote))
    if not changes:
        return None, dropped
    prop = Proposal(state.node, sub_round, tuple(changes))
    state.seen_proposals.add((state.node, sub_round))
    state.issued.append(prop)
    return prop, dropped


def try_close(state: Stage2State, txn: int, threshold: float, now: float) -> bool:
    if txn in state.closed:
        return True
    if txn in state.eliminated or not state.last_vote.get(txn, False):
        return False
    if yes_count(state, txn) >= support_needed(threshold, len(state.unl)):
        state.closed[txn] = now
        return True
    return False


def finish_round(state: Stage2State, ledger: NodeLedgerState, holding: Iterable[int]) -> None:
    for t in holding:
        if t in state.closed:
            ledger.last_closed.add(t)
            ledger.held_over.discard(t)
        else:
            ledger.held_over.add(t)


def trace_line(time: float, node: int, sub_round: int, txn: int, fraction: float, decision: str) -> str:
    return f"{time:.6f} {node} {sub_round} {txn} {fraction:.6f} {decision}"
