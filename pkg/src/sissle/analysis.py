"""Batch execution, aggregate statistics, cross-variant comparison and report output."""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Iterable, Iterator

from .netsim import CaseResult, ScenarioConfig, run_case
from .overlay import ConfigError, Variant

SENTINEL = -1.0


@dataclass(frozen=True)
class SeverityPreset:
    name: str
    pct_malicious: float
    min_lf: float
    max_lf: float
    pct_links: float
    pct_nodes: float
    ncp: float

    def apply(self, config: ScenarioConfig) -> ScenarioConfig:
        return config.with_(percentage_malicious=self.pct_malicious,
                            min_latency_factor_ni=self.min_lf,
                            max_latency_factor_ni=self.max_lf,
                            percent_links_affected_by_ni=self.pct_links,
                            percent_nodes_affected_by_ni=self.pct_nodes,
                            network_consensus_percent=self.ncp)


SEVERITIES: dict[str, SeverityPreset] = {
    "Ideal": SeverityPreset("Ideal", 0, 0, 0, 0, 100, 100),
    "RealWorld": SeverityPreset("RealWorld", 20, 1.5, 2, 25, 100, 80),
    "Mild": SeverityPreset("Mild", 40, 3, 3.5, 50, 100, 60),
    "ModerateSevere": SeverityPreset("ModerateSevere", 60, 4.5, 5, 75, 100, 40),
    "VerySevere": SeverityPreset("VerySevere", 80, 6.5, 7, 75, 100, 20),
}


def severity_preset(name: str) -> SeverityPreset:
    key = name.replace("-", "").replace("_", "").replace(" ", "").lower()
    for preset in SEVERITIES.values():
        if preset.name.lower() == key:
            return preset
    if key.isdigit() and int(key) < len(SEVERITIES):
        return list(SEVERITIES.values())[int(key)]
    raise ConfigError(f"unknown severity {name!r}; expected one of {list(SEVERITIES)}")


class RunningStat:
    """Welford accumulator for mean and population standard deviation."""

    def __init__(self) -> None:
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0
        self.max = -math.inf

    def add(self, x: float) -> None:
        self.n += 1
        d = x - self.mean
        self.mean += d / self.n
        self.m2 += d * (x - self.mean)
        self.max = max(self.max, x)

    @property
    def sd(self) -> float:
        return math.sqrt(self.m2 / self.n) if self.n else 0.0


@dataclass
class BatchStats:
    avg_time: float | None
    sd_time: float | None
    psc: float
    avg_sent: float
    sd_sent: float
    avg_recvd: float
    sd_recvd: float
    avg_agn: float
    sd_agn: float
    avg_pct_malicious: float
    avg_dist: float | None
    sd_dist: float | None
    max_dist: float | None
    ps2c: float
    all_failed: bool
    meta: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        return asdict(self)


CSV_COLUMNS = [
    ("AvTime", "avg_time"), ("PSC", "psc"), ("AvSM", "avg_sent"), ("AvRM", "avg_recvd"),
    ("AvAGN", "avg_agn"), ("SDTime", "sd_time"), ("SDSM", "sd_sent"), ("SDRM", "sd_recvd"),
    ("SDAGN", "sd_agn"), ("AvPMN", "avg_pct_malicious"), ("AvD", "avg_dist"), ("SDD", "sd_dist"),
    ("MD", "max_dist"), ("PS2C", "ps2c"),
]
FLAG_COLUMN = "AllFailed"
OPTIONAL_FIELDS = {"avg_time", "sd_time", "avg_dist", "sd_dist", "max_dist"}


class BatchAccumulator:
    def __init__(self) -> None:
        self.cases = 0
        self.successes = 0
        self.success2 = 0
        self.time = RunningStat()
        self.sent = RunningStat()
        self.recvd = RunningStat()
        self.agn = RunningStat()
        self.pmal = RunningStat()
        self.dist = RunningStat()

    def add(self, r: CaseResult) -> None:
        self.cases += 1
        if r.success:
            self.successes += 1
            if r.elapsed is not None:
                self.time.add(r.elapsed)
        if r.success2:
            self.success2 += 1
        self.sent.add(r.sent_msgs)
        self.recvd.add(r.recvd_msgs)
        self.agn.add(r.actual_genuine_nodes)
        self.pmal.add(r.pct_malicious_realized)
        if math.isfinite(r.max_shortest_dist):
            self.dist.add(r.max_shortest_dist)

    def result(self, meta: dict | None = None) -> BatchStats:
        n = max(self.cases, 1)
        has_time = self.time.n > 0
        has_dist = self.dist.n > 0
        return BatchStats(
            avg_time=self.time.mean if has_time else None,
            sd_time=self.time.sd if has_time else None,
            psc=100.0 * self.successes / n,
            avg_sent=self.sent.mean, sd_sent=self.sent.sd,
            avg_recvd=self.recvd.mean, sd_recvd=self.recvd.sd,
            avg_agn=self.agn.mean, sd_agn=self.agn.sd,
            avg_pct_malicious=self.pmal.mean,
            avg_dist=self.dist.mean if has_dist else None,
            sd_dist=self.dist.sd if has_dist else None,
            max_dist=self.dist.max if has_dist else None,
            ps2c=100.0 * self.success2 / n,
            all_failed=self.successes == 0,
            meta=dict(meta or {}),
        )


def worker_count() -> int:
    raw = os.environ.get("SISSLE_WORKERS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ConfigError(f"SISSLE_WORKERS must be an integer, got {raw!r}") from None
    return os.cpu_count() or 1


def _run_chunk(args: tuple[dict, list[int], str]) -> list[CaseResult]:
    cfg_dict, seeds, engine = args
    cfg = ScenarioConfig.from_dict(cfg_dict)
    return [run_case(cfg, s, engine) for s in seeds]


def iter_cases(config: ScenarioConfig, base_seed: int = 0, seed_max: int | None = None,
               workers: int | None = None, engine: str = "fast") -> Iterator[CaseResult]:
    """Yield case results in seed order, fanning out to worker processes when asked."""
    config.validate()
    count = seed_max if seed_max is not None else config.effective_seed_max
    if count < 1:
        raise ConfigError("seed_max must be at least 1")
    seeds = list(range(base_seed, base_seed + count))
    workers = worker_count() if workers is None else max(1, workers)
    if workers == 1 or count < 2 * workers:
        for s in seeds:
            yield run_case(config, s, engine)
        return
    size = max(1, min(50, count // (workers * 4)))
    chunks = [seeds[i:i + size] for i in range(0, count, size)]
    cfg_dict = config.to_dict()
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for batch in pool.map(_run_chunk, [(cfg_dict, c, engine) for c in chunks]):
            yield from batch


def batch_meta(config: ScenarioConfig, base_seed: int, seed_max: int) -> dict:
    return {
        "variant": config.variant.value,
        "mode": config.mode,
        "num_nodes": config.num_nodes,
        "base_seed": base_seed,
        "seed_max": seed_max,
        "scenario": config.config_hash(exclude=("variant", "seed_max")),
    }


def run_batch(config: ScenarioConfig, base_seed: int = 0, seed_max: int | None = None,
              workers: int | None = None, engine: str = "fast",
              on_case: Callable[[CaseResult], None] | None = None) -> BatchStats:
    count = seed_max if seed_max is not None else config.effective_seed_max
    acc = BatchAccumulator()
    for r in iter_cases(config, base_seed, count, workers, engine):
        acc.add(r)
        if on_case is not None:
            on_case(r)
    return acc.result(batch_meta(config, base_seed, count))


@dataclass
class ComparisonReport:
    speedup: float | None
    success_ratio: float | None
    sent_ratio: float | None
    recvd_ratio: float | None
    hop3_ratio: float | None
    meta: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("speedup", "success_ratio", "sent_ratio", "recvd_ratio", "hop3_ratio"):
            if d[k] is None:
                d[k] = "undefined"
        return d


def _ratio(num: float | None, den: float | None) -> float | None:
    if num is None or den is None or den == 0:
        return None
    return num / den


def compare(baseline: BatchStats, candidate: BatchStats) -> ComparisonReport:
    """Ratios of ``candidate`` (normally SimK) against ``baseline`` (normally SimC)."""
    keys = ("mode", "num_nodes", "base_seed", "seed_max", "scenario")
    a = {k: baseline.meta.get(k) for k in keys}
    b = {k: candidate.meta.get(k) for k in keys}
    if a != b:
        raise ConfigError(f"cannot compare batches from different configurations: {a} vs {b}")
    speedup = None
    if not baseline.all_failed and not candidate.all_failed:
        speedup = _ratio(baseline.avg_time, candidate.avg_time)
    return ComparisonReport(
        speedup=speedup,
        success_ratio=_ratio(candidate.psc, baseline.psc),
        sent_ratio=_ratio(candidate.avg_sent, baseline.avg_sent),
        recvd_ratio=_ratio(candidate.avg_recvd, baseline.avg_recvd),
        hop3_ratio=_ratio(candidate.ps2c, baseline.ps2c),
        meta={"baseline": baseline.meta.get("variant"), "candidate": candidate.meta.get("variant"), **a},
    )


# ---------------------------------------------------------------------------
# report output


def _fmt(v) -> str:
    if v is None:
        return repr(SENTINEL)
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(float(v))


def stats_to_csv(stats: BatchStats) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([c for c, _ in CSV_COLUMNS] + [FLAG_COLUMN])
    w.writerow([_fmt(getattr(stats, f)) for _, f in CSV_COLUMNS] + [_fmt(stats.all_failed)])
    return buf.getvalue()


def stats_from_csv(text: str) -> BatchStats:
    rows = list(csv.reader(io.StringIO(text)))
    if len(rows) != 2:
        raise ValueError("expected a header row and one data row")
    header, data = rows
    values = dict(zip(header, data))
    kw = {}
    for col, f in CSV_COLUMNS:
        v = float(values[col])
        kw[f] = None if (f in OPTIONAL_FIELDS and v == SENTINEL) else v
    kw["all_failed"] = values[FLAG_COLUMN] == "true"
    return BatchStats(**kw)


def comparison_to_csv(report: ComparisonReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ["speedup", "success_ratio", "sent_ratio", "recvd_ratio", "hop3_ratio"]
    w.writerow(cols)
    w.writerow(["undefined" if getattr(report, c) is None else repr(float(getattr(report, c))) for c in cols])
    return buf.getvalue()


def comparison_from_csv(text: str) -> ComparisonReport:
    header, data = list(csv.reader(io.StringIO(text)))
    vals = {h: (None if d == "undefined" else float(d)) for h, d in zip(header, data)}
    return ComparisonReport(**vals)


def emit_report(obj: "BatchStats | ComparisonReport", fmt: str = "csv", path: str | None = None) -> str:
    if fmt not in ("csv", "json"):
        raise ConfigError(f"unsupported format {fmt!r}")
    if isinstance(obj, BatchStats):
        text = stats_to_csv(obj) if fmt == "csv" else json.dumps(obj.to_dict(), sort_keys=True) + "\n"
    elif isinstance(obj, ComparisonReport):
        text = comparison_to_csv(obj) if fmt == "csv" else json.dumps(obj.to_dict(), sort_keys=True) + "\n"
    else:
        raise TypeError(f"cannot emit {type(obj).__name__}")
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return text


def stats_from_json(text: str) -> BatchStats:
    d = json.loads(text)
    return BatchStats(**{f.name: d[f.name] for f in fields(BatchStats) if f.name in d})


# ---------------------------------------------------------------------------
# default sweeps


@dataclass
class SweepCell:
    label: str
    config: ScenarioConfig


def severity_sweep(modes: Iterable[int] = (1, 2), variants: Iterable[str] = ("SimC", "SimK", "SimRM"),
                   base: ScenarioConfig | None = None) -> list[SweepCell]:
    base = base or ScenarioConfig()
    cells = []
    for mode in modes:
        for preset in SEVERITIES.values():
            for v in variants:
                cfg = preset.apply(base.with_(mode=mode, variant=Variant.parse(v)))
                cells.append(SweepCell(f"mode={mode} severity={preset.name} variant={v}", cfg))
    return cells


def malicious_sweep(modes: Iterable[int] = (1, 2, 3, 4), levels: Iterable[float] = (0, 10, 20, 30, 40, 50, 60, 70, 80, 90),
                    variants: Iterable[str] = ("SimC", "SimK", "SimRM"),
                    base: ScenarioConfig | None = None) -> list[SweepCell]:
    base = base or ScenarioConfig()
    return [SweepCell(f"mode={m} pm={p} variant={v}",
                      base.with_(mode=m, percentage_malicious=p, variant=Variant.parse(v)))
            for m in modes for p in levels for v in variants]


def eclipse_sweep(variants: Iterable[str] = ("SimC", "SimK", "SimRM"),
                  base: ScenarioConfig | None = None) -> list[SweepCell]:
    base = base or ScenarioConfig()
    cells = []
    for mode, levels in ((5, (0, 5, 15, 25, 35)), (6, (0, 5, 15, 25, 35)), (8, (0, 100))):
        for pe in levels:
            for v in variants:
                cells.append(SweepCell(f"mode={mode} pe={pe} variant={v}",
                                       base.with_(mode=mode, percentage_eclipsed=pe, variant=Variant.parse(v))))
    return cells


def llf_sweep(unla: Iterable[float] = (1, 2, 3), unlb: Iterable[float] = (1, 2, 3, 4, 5),
              variants: Iterable[str] = ("SimC", "SimK", "SimRM"),
              base: ScenarioConfig | None = None) -> list[SweepCell]:
    base = base or ScenarioConfig()
    cells = []
    for a in unla:
        for b in unlb:
            for v in variants:
                # SimC has no affinity groups; it applies the UNL-A factor to every link
                cells.append(SweepCell(f"mode=1 llf={a},{b} variant={v}",
                                       base.with_(mode=1, unla_llf_max=a, unlb_llf_max=b,
                                                  variant=Variant.parse(v))))
    return cells


DEFAULT_SWEEPS = {
    "severity": severity_sweep,
    "malicious": malicious_sweep,
    "eclipse": eclipse_sweep,
    "llf": llf_sweep,
}
