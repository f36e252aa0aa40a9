"""Seeded discrete-event network simulator."""
from .case import run_case, summarise
from .config import (CONSENSUS_MODES, PROPAGATION_MODES, VALID_MODES, CaseResult, CaseState, LinkModel,
                     MaliciousPlacement, PlacementScheme, ScenarioConfig, default_seed_max)
from .engine import run_event_engine
from .events import EventQueue, MsgKind, SimMessage
from .fast import run_fast_engine
from .metrics import required_count, shortest_distances, success_predicate
from .scenario import apply_network_issues, build_case, place_malicious

__all__ = [
    "CONSENSUS_MODES", "PROPAGATION_MODES", "VALID_MODES", "CaseResult", "CaseState", "EventQueue",
    "LinkModel", "MaliciousPlacement", "MsgKind", "PlacementScheme", "ScenarioConfig", "SimMessage",
    "apply_network_issues", "build_case", "default_seed_max", "place_malicious", "required_count",
    "run_case", "run_event_engine", "run_fast_engine", "shortest_distances", "success_predicate",
    "summarise",
]
