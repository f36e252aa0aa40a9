"""Message and event-queue plumbing for the discrete-event engine."""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from enum import Enum
from typing import Any


class MsgKind(str, Enum):
    CANDIDATE_SET = "CandidateSet"
    PROPOSAL = "Proposal"
    HEARTBEAT = "Heartbeat"
    NML_PULL = "NmlPull"
    NML_RESPONSE = "NmlResponse"
    TRUST_TOKEN = "TrustToken"
    ACK = "Ack"
    NODE_LEAVE = "NodeLeave"


@dataclass
class SimMessage:
    kind: MsgKind
    src: int
    dst: int
    payload: Any
    sent_at: float
    deliver_at: float
    seq: int = 0
    forwarded: bool = False


# event priorities at equal timestamps: deliveries first, then sub-round
# boundaries, then batch ticks
PRIO_DELIVER = 0
PRIO_SUBROUND = 1
PRIO_TICK = 2
PRIO_TIMER = 3


@dataclass(order=True)
class _Entry:
    time: float
    prio: int
    seq: int
    item: Any = field(compare=False)


class EventQueue:
    """Min-heap ordered by (time, priority, insertion sequence)."""

    def __init__(self) -> None:
        self._heap: list[_Entry] = []
        self._seq = 0

    def push(self, time: float, prio: int, item: Any) -> int:
        self._seq += 1
        heapq.heappush(self._heap, _Entry(time, prio, self._seq, item))
        return self._seq

    def send(self, msg: SimMessage) -> SimMessage:
        if msg.deliver_at < msg.sent_at:
            raise ValueError("message delivered before it was sent")
        msg.seq = self.push(msg.deliver_at, PRIO_DELIVER, msg)
        return msg

    def pop(self) -> tuple[float, int, Any]:
        e = heapq.heappop(self._heap)
        return e.time, e.prio, e.item

    def peek_time(self) -> float | None:
        return self._heap[0].time if self._heap else None

    def __len__(self) -> int:
        return len(self._heap)

    def __bool__(self) -> bool:
        return bool(self._heap)
