from __future__ import annotations

import math

import numpy as np

from .config import CONSENSUS_MODES, CaseResult, CaseState, ScenarioConfig
from .engine import EngineOutcome, run_event_engine
from .fast import run_fast_engine
from .metrics import required_count, shortest_distances, success_predicate
from .scenario import CaseSetup, build_case


def summarise(setup: CaseSetup, out: EngineOutcome) -> CaseResult:
    cfg = setup.config
    mode = cfg.mode
    g = ~setup.malicious
    genuine = int(g.sum())
    src = setup.placement.source
    target = setup.placement.target
    t = setup.topology

    times = out.closed if mode in CONSENSUS_MODES else out.receipt
    reached_times = np.sort(times[g][np.isfinite(times[g])])
    required = required_count(cfg, genuine)
    target_time = float(times[target]) if target is not None else math.inf

    dist = shortest_distances(t.indptr, t.indices, src, setup.malicious)
    gd = dist[g]
    max_d = float(gd.max()) if gd.size else 0.0
    others = g.copy()
    others[src] = False
    od = dist[others]
    od = od[np.isfinite(od)]
    avg_d = float(od.mean()) if od.size else 0.0

    state = CaseState(mode, t.n, genuine, int(reached_times.size),
                      target_reached=math.isfinite(target_time), max_dist=max_d, required=required)
    success, success2 = success_predicate(mode, cfg, state)

    elapsed = None
    if success:
        if mode in (1, 2):
            elapsed = float(reached_times[required - 1]) if required > 0 else 0.0
        elif mode in (3, 5):
            base = float(reached_times[required - 1]) if required > 0 else 0.0
            elapsed = max(base, target_time)
        elif mode in (4, 6):
            elapsed = target_time
        else:
            elapsed = float(reached_times[-1]) if reached_times.size else 0.0

    return CaseResult(
        seed=setup.seed,
        success=bool(success),
        success2=bool(success2),
        elapsed=elapsed,
        sent_msgs=int(out.sent),
        recvd_msgs=int(out.recvd),
        actual_genuine_nodes=genuine,
        pct_malicious_realized=100.0 * (t.n - genuine) / t.n,
        max_shortest_dist=max_d,
        avg_shortest_dist=avg_d,
        closed_nodes=int(np.isfinite(out.closed[g]).sum()),
        received_nodes=int(np.isfinite(out.receipt[g]).sum()),
        source=src,
        target=target,
        config_hash=cfg.config_hash(),
    )


def run_case(config: ScenarioConfig, seed: int, engine: str = "fast",
             event_log: list | None = None) -> CaseResult:
    """Run one seeded case. ``engine`` is "fast" (vectorised) or "event" (message-level).

    Passing a list as ``event_log`` forces the message-level engine and fills it with
    the send/receive log.
    """
    setup = build_case(config, seed)
    if event_log is not None or engine == "event":
        out = run_event_engine(setup, record_log=event_log is not None)
        if event_log is not None:
            event_log.extend(out.event_log)
    elif engine == "fast":
        out = run_fast_engine(setup)
    else:
        raise ValueError(f"unknown engine {engine!r}")
    return summarise(setup, out)
