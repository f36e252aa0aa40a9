"""Command-line entry point: ``sissle batch|case|compare|sweep|topology``."""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .analysis import DEFAULT_SWEEPS, compare, emit_report, run_batch, severity_preset, worker_count
from .netsim import ScenarioConfig, run_case
from .overlay import ConfigError, Variant, build_topology


def _upper_limit(text: str):
    return "auto" if text == "auto" else int(text)


def _scenario_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--variant", default="SimK", help="SimC, SimRM or SimK")
    p.add_argument("--mode", type=int, default=2)
    p.add_argument("--num-nodes", type=int, default=256)
    p.add_argument("--c", type=int, default=2)
    p.add_argument("--b", type=int, default=2)
    p.add_argument("--d", type=int, default=5)
    p.add_argument("--percentage-malicious", type=float, default=None)
    p.add_argument("--network-consensus-percent", type=float, default=None)
    p.add_argument("--outbound-links-to-node-ratio", type=float, default=None)
    p.add_argument("--min-latency-factor-ni", type=float, default=None)
    p.add_argument("--max-latency-factor-ni", type=float, default=None)
    p.add_argument("--percent-nodes-ni", type=float, default=None)
    p.add_argument("--percent-links-ni", type=float, default=None)
    p.add_argument("--percentage-eclipsed", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0, help="first seed of the batch")
    p.add_argument("--seed-max", type=int, default=None, help="number of cases")
    p.add_argument("--severity", default=None, help="Ideal, RealWorld, Mild, ModerateSevere, VerySevere")
    p.add_argument("--unla-llf-max", type=float, default=1.0)
    p.add_argument("--unlb-llf-max", type=float, default=1.0)
    p.add_argument("--upper-limit-malicious", type=_upper_limit, nargs="?", const="auto", default=None,
                   help="cap on malicious nodes in mode 8; bare flag or 'auto' uses the 3-hop fault bound")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", default=None, help="output file (stdout if omitted)")
    p.add_argument("--workers", type=int, default=None, help="overrides SISSLE_WORKERS")


def config_from_args(args: argparse.Namespace) -> ScenarioConfig:
    cfg = ScenarioConfig(variant=Variant.parse(args.variant), mode=args.mode, num_nodes=args.num_nodes,
                         c=args.c, b=args.b, d=args.d, percentage_eclipsed=args.percentage_eclipsed,
                         unla_llf_max=args.unla_llf_max, unlb_llf_max=args.unlb_llf_max,
                         seed_max=args.seed_max)
    if args.severity:
        cfg = severity_preset(args.severity).apply(cfg)
    overrides = {
        "percentage_malicious": args.percentage_malicious,
        "network_consensus_percent": args.network_consensus_percent,
        "outbound_links_to_node_ratio": args.outbound_links_to_node_ratio,
        "min_latency_factor_ni": args.min_latency_factor_ni,
        "max_latency_factor_ni": args.max_latency_factor_ni,
        "percent_nodes_affected_by_ni": args.percent_nodes_ni,
        "percent_links_affected_by_ni": args.percent_links_ni,
    }
    cfg = cfg.with_(**{k: v for k, v in overrides.items() if v is not None})
    if args.upper_limit_malicious is not None:
        limit = None if args.upper_limit_malicious == "auto" else args.upper_limit_malicious
        cfg = cfg.with_(is_upper_limit_malicious_applicable=True, upper_limit_malicious=limit)
    cfg.validate()
    return cfg


def _write(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def cmd_batch(args) -> int:
    cfg = config_from_args(args)
    workers = args.workers if args.workers is not None else worker_count()
    stats = run_batch(cfg, args.seed, args.seed_max, workers=workers)
    _write(emit_report(stats, args.format), args.out)
    return 0


def cmd_case(args) -> int:
    cfg = config_from_args(args)
    log = [] if args.event_log else None
    res = run_case(cfg, args.seed, engine=args.engine, event_log=log)
    lines = [res.to_json()]
    if log is not None:
        lines += [json.dumps(list(e)) for e in log]
    _write("\n".join(lines) + "\n", args.out)
    return 0


def cmd_compare(args) -> int:
    cfg = config_from_args(args)
    workers = args.workers if args.workers is not None else worker_count()
    base = run_batch(cfg.with_(variant=Variant.parse(args.baseline)), args.seed, args.seed_max, workers=workers)
    cand = run_batch(cfg.with_(variant=Variant.parse(args.variant)), args.seed, args.seed_max, workers=workers)
    _write(emit_report(compare(base, cand), args.format), args.out)
    return 0


def cmd_sweep(args) -> int:
    cfg = config_from_args(args)
    workers = args.workers if args.workers is not None else worker_count()
    out = []
    for cell in DEFAULT_SWEEPS[args.name](base=cfg):
        stats = run_batch(cell.config, args.seed, args.seed_max or cell.config.effective_seed_max, workers=workers)
        d = stats.to_dict()
        d["cell"] = cell.label
        out.append(json.dumps(d, sort_keys=True))
        if args.progress:
            print(cell.label, f"psc={stats.psc:.2f}", file=sys.stderr)
    _write("\n".join(out) + "\n", args.out)
    return 0


def cmd_topology(args) -> int:
    cfg = config_from_args(args)
    rng = np.random.default_rng(args.seed)
    topo = build_topology(cfg.variant, cfg.overlay_params, rng)
    text = topo.summary_json() + "\n" if args.summary else topo.export_edges()
    _write(text, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sissle", description="SISSLE overlay and consensus simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("batch", help="run seed_max cases and emit aggregate statistics")
    _scenario_flags(p)
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("case", help="run a single seeded case and emit its JSON record")
    _scenario_flags(p)
    p.add_argument("--engine", choices=("fast", "event"), default="fast")
    p.add_argument("--event-log", action="store_true", help="append the message-level send/receive log")
    p.set_defaults(func=cmd_case)

    p = sub.add_parser("compare", help="run a baseline and a candidate variant and emit the ratios")
    _scenario_flags(p)
    p.add_argument("--baseline", default="SimC")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="run one of the default sweeps, one JSON line per cell")
    _scenario_flags(p)
    p.add_argument("name", choices=sorted(DEFAULT_SWEEPS))
    p.add_argument("--progress", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("topology", help="export the overlay built for a seed")
    _scenario_flags(p)
    p.add_argument("--summary", action="store_true", help="print counts instead of the edge list")
    p.set_defaults(func=cmd_topology)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"sissle: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
