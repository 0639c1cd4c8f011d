"""Command-line entry point: run one experiment or a full sweep and write CSVs."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from .errors import InvalidInputError
from .protocol import Variant
from .report import emit_all
from .sim import SimConfig, Topology, build_graph, run_experiments, trial_seeds
from .topology import write_edge_list

log = logging.getLogger("trustgossip")

SWEEP_SIZES = (20, 50, 100, 200)
SWEEP_TOPOLOGIES = ("er", "ws", "ba", "complete")
SWEEP_ASR = (1.0, 0.75, 0.5, 0.25)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="trustgossip",
        description="Simulate gossip-based trust propagation over random topologies.")
    p.add_argument("--variant", choices=[v.value for v in Variant], default="original")
    p.add_argument("--topology", choices=SWEEP_TOPOLOGIES, default="complete")
    p.add_argument("--n", type=int, default=50, help="node count")
    p.add_argument("--p", type=float, default=None,
                   help="ER edge probability (0.05) or WS rewiring probability (0.1)")
    p.add_argument("--k", type=int, default=4, help="WS lattice degree")
    p.add_argument("--m", type=int, default=2, help="BA edges per arrival")
    p.add_argument("--rounds", type=int, default=500)
    p.add_argument("--interactions", type=int, default=100, help="interactions per round")
    p.add_argument("--asr", type=float, default=1.0, help="attestation success rate")
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--permissioned", action="store_true")
    p.add_argument("--extension", action="store_true",
                   help="enable epoch keys and signed policies")
    p.add_argument("--expiry-rounds", type=int, default=None)
    p.add_argument("--heterogeneous", action="store_true",
                   help="split nodes into thirds supporting {p}, {p,q} and {q}")
    p.add_argument("--require-connected", action="store_true",
                   help="redraw random graphs until connected")
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--sweep", choices=("grid", "asr"), default=None,
                   help="grid: every topology, variant and n in 20/50/100/200; "
                        "asr: every variant at ASR 1/0.75/0.5/0.25 on a complete graph")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--dump-edges", action="store_true",
                   help="also write each trial's edge list")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args: argparse.Namespace) -> SimConfig:
    return SimConfig(
        variant=Variant(args.variant),
        topology=Topology(args.topology, args.p, args.k, args.m),
        n=args.n,
        rounds=args.rounds,
        interactions_per_round=args.interactions,
        asr=args.asr,
        trials=args.trials,
        seed=args.seed,
        permissioned=args.permissioned,
        extension_enabled=args.extension,
        expiry_rounds=args.expiry_rounds,
        protocol_assignment="heterogeneous" if args.heterogeneous else "uniform",
        require_connected=args.require_connected,
    )


def sweep_configs(base: SimConfig, kind: str) -> list[tuple[str, SimConfig]]:
    """Named configs for a sweep; names double as output directory names."""
    out = []
    if kind == "grid":
        for topo in SWEEP_TOPOLOGIES:
            for variant in Variant:
                for n in SWEEP_SIZES:
                    t = replace(base.topology, kind=topo, p=None)
                    cfg = replace(base, variant=variant, topology=t, n=n)
                    out.append((f"{topo}_{variant.value}_n{n}", cfg))
    else:
        for variant in Variant:
            for asr in SWEEP_ASR:
                cfg = replace(base, variant=variant, topology=Topology("complete"), asr=asr)
                out.append((f"complete_{variant.value}_asr{asr}", cfg))
    return out


def experiment_dir_name(config: SimConfig) -> str:
    return f"{config.topology.kind}_{config.variant.value}_n{config.n}"


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")
    try:
        base = config_from_args(args)
        named = (sweep_configs(base, args.sweep) if args.sweep
                 else [(experiment_dir_name(base), base)])
    except InvalidInputError as exc:
        parser.error(str(exc))

    start = time.perf_counter()
    results = run_experiments([cfg for _, cfg in named], jobs=args.jobs)
    for (name, cfg), result in zip(named, results):
        target = args.out / name if args.sweep else args.out
        emit_all(result, target)
        if args.dump_edges:
            for i, seed in enumerate(trial_seeds(cfg)):
                write_edge_list(build_graph(cfg, seed), target / f"edges_{i}.txt")
        log.info("%s: final avg_trust_pct=%.4f", name, result.mean[-1].avg_trust_pct)
    log.info("done in %.1f s", time.perf_counter() - start)
    return 0


if __name__ == "__main__":
    sys.exit(main())
