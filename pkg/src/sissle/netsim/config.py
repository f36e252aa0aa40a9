from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum

from ..overlay import ConfigError, OverlayParams, Variant

VALID_MODES = (1, 2, 3, 4, 5, 6, 8)
CONSENSUS_MODES = (1, 3, 5)
PROPAGATION_MODES = (2, 4, 6, 8)
TARGET_MODES = (3, 4, 5, 6, 8)
ECLIPSE_MODES = (5, 6, 8)


def default_seed_max(mode: int) -> int:
    return 1500 if mode % 2 == 1 else 5000


@dataclass(frozen=True)
class ScenarioConfig:
    variant: Variant = Variant.SIMK
    mode: int = 2
    num_nodes: int = 256
    c: int = 2
    b: int = 2
    d: int = 5
    percentage_malicious: float = 0.0
    network_consensus_percent: float = 100.0
    outbound_links_to_node_ratio: float = 10 / 256
    min_latency_factor_ni: float = 0.0
    max_latency_factor_ni: float = 0.0
    percent_nodes_affected_by_ni: float = 100.0
    percent_links_affected_by_ni: float = 0.0
    percentage_eclipsed: float = 0.0
    seed_max: int | None = None
    upper_limit_malicious: int | None = None
    is_upper_limit_malicious_applicable: bool = False
    unla_llf_max: float = 1.0
    unlb_llf_max: float = 1.0
    # protocol timing (milliseconds)
    batch_period_ms: float = 25.0
    sub_rounds: int = 4
    sub_round_ms: float | None = None
    unl_trust: float = 1.0
    restrict_recipients: bool = False
    forward_txns_as_set: bool = False
    txn_valid: bool = True

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(self.variant))

    @property
    def overlay_params(self) -> OverlayParams:
        return OverlayParams(num_nodes=self.num_nodes, c=self.c, b=self.b, d=self.d,
                             outbound_links_to_node_ratio=self.outbound_links_to_node_ratio)

    @property
    def effective_seed_max(self) -> int:
        return self.seed_max if self.seed_max is not None else default_seed_max(self.mode)

    @property
    def effective_upper_limit(self) -> int:
        if self.upper_limit_malicious is not None:
            return self.upper_limit_malicious
        p = self.overlay_params
        return (p.c + 1) * (p.group_size - 1)

    @property
    def mandatory_wait_ms(self) -> float:
        return 6 * self.batch_period_ms

    @property
    def sub_round_period_ms(self) -> float:
        return self.sub_round_ms if self.sub_round_ms is not None else self.mandatory_wait_ms

    def sub_round_start(self, j: int) -> float:
        """Start time of sub-round ``j`` (1-based)."""
        return self.mandatory_wait_ms + (j - 1) * self.sub_round_period_ms

    @property
    def round_deadline_ms(self) -> float:
        return self.mandatory_wait_ms + self.sub_rounds * self.sub_round_period_ms

    @property
    def ni_enabled(self) -> bool:
        return (self.max_latency_factor_ni > 0 and self.percent_links_affected_by_ni > 0
                and self.percent_nodes_affected_by_ni > 0)

    def validate(self) -> None:
        if self.mode not in VALID_MODES:
            raise ConfigError(f"mode {self.mode} is not one of {VALID_MODES}")
        self.overlay_params.validate(self.variant)
        for name in ("percentage_malicious", "network_consensus_percent", "percent_nodes_affected_by_ni",
                     "percent_links_affected_by_ni", "percentage_eclipsed"):
            v = getattr(self, name)
            if not 0 <= v <= 100:
                raise ConfigError(f"{name}={v} outside [0, 100]")
        if self.min_latency_factor_ni > self.max_latency_factor_ni:
            raise ConfigError("min latency factor exceeds max latency factor")
        if self.ni_enabled and self.min_latency_factor_ni < 1:
            raise ConfigError("network-issue latency factors must be at least 1")
        if self.unla_llf_max < 1 or self.unlb_llf_max < 1:
            raise ConfigError("link latency factor maxima must be at least 1")
        if self.seed_max is not None and self.seed_max < 1:
            raise ConfigError("seed_max must be positive")
        if self.batch_period_ms <= 0:
            raise ConfigError("batch period must be positive")
        if self.sub_rounds < 1:
            raise ConfigError("at least one sub-round is required")
        if self.sub_round_period_ms <= 0:
            raise ConfigError("sub-round period must be positive")
        if not 0 <= self.unl_trust <= 1:
            raise ConfigError("unl_trust must lie in [0, 1]")
        if self.is_upper_limit_malicious_applicable and self.effective_upper_limit < 1:
            raise ConfigError("upper limit on malicious nodes must be positive")

    def with_(self, **kw) -> "ScenarioConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["variant"] = self.variant.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})

    def config_hash(self, exclude: tuple[str, ...] = ()) -> str:
        d = {k: v for k, v in self.to_dict().items() if k not in exclude}
        raw = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(raw).hexdigest()[:16]


@dataclass(frozen=True)
class LinkModel:
    base_latency_ms: float
    ni_factor: float = 1.0
    llf: float = 1.0

    @property
    def effective_latency_ms(self) -> float:
        return self.base_latency_ms * self.llf * self.ni_factor


class PlacementScheme(str, Enum):
    NONE = "None"
    RANDOM_UNIFORM = "RandomUniform"
    ECLIPSE_TARGET = "EclipseTarget"


@dataclass
class MaliciousPlacement:
    scheme: PlacementScheme
    target: int | None
    eclipsed_fraction: float
    source: int
    malicious: frozenset[int] = frozenset()
    eclipsers: frozenset[int] = frozenset()
    capped: bool = False

    @property
    def count(self) -> int:
        return len(self.malicious)


@dataclass
class CaseResult:
    seed: int
    success: bool
    success2: bool
    elapsed: float | None
    sent_msgs: int
    recvd_msgs: int
    actual_genuine_nodes: int
    pct_malicious_realized: float
    max_shortest_dist: float
    avg_shortest_dist: float
    closed_nodes: int = 0
    received_nodes: int = 0
    source: int = -1
    target: int | None = None
    config_hash: str = ""

    def to_json(self) -> str:
        d = asdict(self)
        for k in ("max_shortest_dist", "avg_shortest_dist", "elapsed"):
            v = d[k]
            if v is not None and not math.isfinite(v):
                d[k] = None
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "CaseResult":
        d = json.loads(line)
        for k in ("max_shortest_dist", "avg_shortest_dist"):
            if d[k] is None:
                d[k] = math.inf
        return cls(**d)


@dataclass
class CaseState:
    """What the success predicate needs to know about a finished case."""

    mode: int
    num_nodes: int
    genuine: int
    reached: int
    target_reached: bool = False
    max_dist: float = math.inf
    required: int = 0
    extra: dict = field(default_factory=dict)
