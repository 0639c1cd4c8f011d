"""Round-based simulation of trust propagation over a fixed topology.

Every trial owns one root seed, split into independent streams for the
topology, the interaction schedule, attestation outcomes and node
identities. Attestation outcomes are drawn as a fixed ``(interactions, 2)``
block per round, one slot per interaction and direction, whether or not the
slot is used. Changing the variant therefore leaves graph, schedule and
per-slot outcomes untouched, so variants can be compared trial by trial.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Optional, Sequence

import numpy as np

from .core import NodeId, derive_node_id
from .errors import DegenerateGraphError, InvalidInputError
from .identity import CertificateIssuer, KeyGenerator, epoch_of
from .protocol import (
    CostModel,
    ExtensionConfig,
    NodeState,
    ProtocolConfig,
    Variant,
    run_pairwise,
)
from .topology import (
    Graph,
    gen_barabasi_albert,
    gen_complete,
    gen_erdos_renyi,
    gen_watts_strogatz,
)

TOPOLOGIES = ("er", "ws", "ba", "complete")
PROTOCOL_P, PROTOCOL_Q = 1, 2


@dataclass(frozen=True)
class Topology:
    kind: str = "complete"
    p: Optional[float] = None
    k: int = 4
    m: int = 2

    def __post_init__(self) -> None:
        if self.kind not in TOPOLOGIES:
            raise InvalidInputError(f"unknown topology {self.kind!r}")
        if self.p is None:
            object.__setattr__(self, "p", {"er": 0.05, "ws": 0.1}.get(self.kind, 0.0))

    def generate(self, n: int, rng: np.random.Generator) -> Graph:
        if self.kind == "er":
            return gen_erdos_renyi(n, self.p, rng)
        if self.kind == "ws":
            return gen_watts_strogatz(n, self.k, self.p, rng)
        if self.kind == "ba":
            return gen_barabasi_albert(n, self.m, rng)
        return gen_complete(n)

    def label(self) -> str:
        if self.kind == "er":
            return f"er(p={self.p})"
        if self.kind == "ws":
            return f"ws(k={self.k},p={self.p})"
        if self.kind == "ba":
            return f"ba(m={self.m})"
        return "complete"


@dataclass(frozen=True)
class SimConfig:
    variant: Variant = Variant.ORIGINAL
    topology: Topology = field(default_factory=Topology)
    n: int = 50
    rounds: int = 500
    interactions_per_round: int = 100
    asr: float = 1.0
    trials: int = 5
    seed: int = 0
    permissioned: bool = False
    extension_enabled: bool = False
    expiry_rounds: Optional[int] = None
    protocol_assignment: str = "uniform"
    require_connected: bool = False
    epoch_length: int = 1000

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.n < 2:
            raise InvalidInputError("n must be >= 2")
        if self.rounds < 1 or self.interactions_per_round < 1 or self.trials < 1:
            raise InvalidInputError("rounds, interactions_per_round and trials must be >= 1")
        if not 0.0 <= self.asr <= 1.0:
            raise InvalidInputError(f"asr {self.asr} outside [0, 1]")
        if self.expiry_rounds is not None and self.expiry_rounds < 1:
            raise InvalidInputError("expiry_rounds must be >= 1")
        if self.protocol_assignment not in ("uniform", "heterogeneous"):
            raise InvalidInputError(f"unknown protocol assignment {self.protocol_assignment!r}")
        if not 0 <= self.seed < 2**64:
            raise InvalidInputError("seed must be a 64-bit unsigned integer")
        t = self.topology
        if t.kind == "ws" and (t.k < 2 or t.k % 2 or self.n <= t.k):
            raise InvalidInputError(f"watts-strogatz needs an even k >= 2 below n (k={t.k})")
        if t.kind == "ba" and not 1 <= t.m < self.n:
            raise InvalidInputError(f"barabasi-albert needs 1 <= m < n (m={t.m})")
        if t.p is not None and not 0.0 <= t.p <= 1.0:
            raise InvalidInputError(f"topology probability {t.p} outside [0, 1]")

    def echo(self) -> dict:
        """Flat key/value view, used for the config echo file."""
        return {
            "variant": self.variant.value,
            "topology": self.topology.kind,
            "topology_params": self.topology.label(),
            "n": self.n,
            "rounds": self.rounds,
            "interactions_per_round": self.interactions_per_round,
            "asr": self.asr,
            "trials": self.trials,
            "seed": self.seed,
            "permissioned": self.permissioned,
            "extension_enabled": self.extension_enabled,
            "expiry_rounds": self.expiry_rounds,
            "protocol_assignment": self.protocol_assignment,
            "require_connected": self.require_connected,
            "epoch_length": self.epoch_length,
        }


@dataclass
class RoundMetrics:
    round: int
    avg_trust: float
    avg_trust_pct: float
    bytes_sync: float
    bytes_total: float
    attestations_attempted: float
    attestations_succeeded: float
    wallclock_seconds: float
    bytes_hello: float = 0
    bytes_bundles: float = 0
    interactions: int = 0

    @property
    def bytes_sync_per_interaction(self) -> float:
        return self.bytes_sync / self.interactions if self.interactions else 0.0


METRIC_FIELDS = tuple(f.name for f in fields(RoundMetrics) if f.name != "round")


@dataclass
class ExperimentResult:
    config: SimConfig
    trials: list  # one list of RoundMetrics per trial
    mean: list = field(default_factory=list)
    std: list = field(default_factory=list)

    def series(self, name: str, trial: Optional[int] = None) -> np.ndarray:
        rows = self.mean if trial is None else self.trials[trial]
        return np.array([getattr(r, name) for r in rows], dtype=float)

    def trial_matrix(self, name: str) -> np.ndarray:
        return np.array([[getattr(r, name) for r in t] for t in self.trials], dtype=float)


# -- setup ------------------------------------------------------------------------------

def _streams(trial_seed: int) -> dict:
    children = np.random.SeedSequence(trial_seed).spawn(4)
    names = ("topology", "schedule", "attest", "identity")
    return {name: np.random.default_rng(c) for name, c in zip(names, children)}


def build_graph(config: SimConfig, trial_seed: int) -> Graph:
    """The trial's topology, regenerated deterministically from its seed."""
    return _graph_from(config, _streams(trial_seed)["topology"])


def _graph_from(config: SimConfig, rng: np.random.Generator) -> Graph:
    for _ in range(1000):
        graph = config.topology.generate(config.n, rng)
        if not config.require_connected or graph.is_connected():
            return graph
    raise DegenerateGraphError("could not draw a connected graph in 1000 attempts")


def protocol_set(index: int, n: int, assignment: str) -> frozenset:
    if assignment == "uniform":
        return frozenset({PROTOCOL_P})
    third = index * 3 // n
    return (frozenset({PROTOCOL_P}), frozenset({PROTOCOL_P, PROTOCOL_Q}),
            frozenset({PROTOCOL_Q}))[third]


@dataclass
class Network:
    """Live state of one trial: nodes indexed like the graph, plus shared services."""

    graph: Graph
    nodes: list
    protocol: ProtocolConfig
    pkg: Optional[KeyGenerator] = None
    issuer: Optional[CertificateIssuer] = None

    def refresh_keys(self, now: int) -> None:
        if self.pkg is None:
            return
        epoch = epoch_of(now, self.pkg.epoch_length)
        for node in self.nodes:
            if epoch not in node.epoch_keys and node.id not in self.pkg.denylist:
                node.epoch_keys[epoch] = self.pkg.get_key(node.id, epoch, node.certificate, now)


def build_network(config: SimConfig, trial_seed: int) -> tuple:
    """Graph and initialised nodes for a trial; returns ``(network, streams)``."""
    streams = _streams(trial_seed)
    graph = _graph_from(config, streams["topology"])
    ident = streams["identity"]
    prf_key = ident.bytes(32)
    ids: list[NodeId] = []
    seen: set = set()
    while len(ids) < config.n:
        node_id = derive_node_id(ident.bytes(32), prf_key)
        if node_id not in seen:
            seen.add(node_id)
            ids.append(node_id)

    issuer = None
    allowed = {}
    if config.permissioned or config.extension_enabled:
        issuer = CertificateIssuer(b"issuer01", ident.bytes(32))
        allowed = {issuer.issuer_id: issuer.public_key}
    pkg = None
    extension = None
    if config.extension_enabled:
        pkg = KeyGenerator(ident.bytes(32), allowed, epoch_length=config.epoch_length)
        extension = ExtensionConfig(pkg.master_public, config.epoch_length)
    protocol = ProtocolConfig(config.variant, config.permissioned, allowed, extension,
                              CostModel())
    nodes = [
        NodeState(node_id, protocol_set(i, config.n, config.protocol_assignment),
                  certificate=issuer.issue(node_id) if issuer else None,
                  policy_ttl=config.expiry_rounds)
        for i, node_id in enumerate(ids)
    ]
    net = Network(graph, nodes, protocol, pkg, issuer)
    net.refresh_keys(0)
    return net, streams


def sample_interactions(graph: Graph, count: int, rng: np.random.Generator) -> list:
    """``count`` edges drawn uniformly with replacement."""
    if not graph.edges:
        raise DegenerateGraphError("graph has no edges to sample")
    picks = rng.integers(0, len(graph.edges), size=count)
    edges = graph.edges
    return [edges[i] for i in picks.tolist()]


class SlotOracle:
    """Attestation outcomes read from pre-drawn uniforms, one per (interaction, direction).

    Direction 0 is the interaction's first verifier, direction 1 the other.
    """

    def __init__(self, asr: float) -> None:
        self.asr = asr
        self.first: Optional[NodeId] = None
        self.draws = (0.0, 0.0)

    def arm(self, first_verifier: NodeId, draws) -> None:
        self.first = first_verifier
        self.draws = draws

    def __call__(self, prover, verifier, protocol_id, nonce) -> bool:
        slot = 0 if verifier == self.first else 1
        return self.draws[slot] < self.asr


# -- running ----------------------------------------------------------------------------

def run_trial(config: SimConfig, trial_seed: int, trace=None) -> list:
    net, streams = build_network(config, trial_seed)
    nodes, graph = net.nodes, net.graph
    if not graph.edges:
        raise DegenerateGraphError("graph has no edges to sample")
    schedule_rng, attest_rng = streams["schedule"], streams["attest"]
    oracle = SlotOracle(config.asr)
    protocol = net.protocol
    expiring = config.expiry_rounds is not None
    n = config.n
    out = []
    for rnd in range(1, config.rounds + 1):
        now = rnd
        net.refresh_keys(now)
        pairs = sample_interactions(graph, config.interactions_per_round, schedule_rng)
        draws = attest_rng.random((config.interactions_per_round, 2)).tolist()
        b_sync = b_total = b_hello = b_bundles = attempted = succeeded = 0
        t0 = time.perf_counter()
        for (u, v), slot in zip(pairs, draws):
            a, b = nodes[u], nodes[v]
            if b.id < a.id:
                a, b = b, a
            oracle.arm(a.id, slot)
            rep = run_pairwise(a, b, oracle, now, protocol, trace, rnd)
            b_sync += rep.bytes_sync
            b_total += rep.bytes_total
            b_hello += rep.bytes_hello
            b_bundles += rep.bytes_bundles
            attempted += rep.attestations_attempted
            succeeded += rep.attestations_succeeded
        if expiring:
            for node in nodes:
                node.expire(now)
        elapsed = time.perf_counter() - t0
        if expiring:
            trust = sum(node.store.trusted_count(now) for node in nodes) / n
        else:
            trust = sum(node.store.trusted_count() for node in nodes) / n
        out.append(RoundMetrics(rnd, trust, trust / (n - 1), b_sync, b_total, attempted,
                                succeeded, elapsed, b_hello, b_bundles,
                                config.interactions_per_round))
    return out


def _run_trial_args(args):
    return run_trial(*args)


def aggregate(trials: Sequence[list]) -> tuple[list, list]:
    """Per-round mean and population standard deviation across trials."""
    rounds = len(trials[0])
    mean, std = [], []
    for i in range(rounds):
        rows = [t[i] for t in trials]
        mu = {name: float(np.mean([getattr(r, name) for r in rows])) for name in METRIC_FIELDS}
        sd = {name: float(np.std([getattr(r, name) for r in rows])) for name in METRIC_FIELDS}
        mu["interactions"] = sd["interactions"] = rows[0].interactions
        mean.append(RoundMetrics(rows[0].round, **mu))
        std.append(RoundMetrics(rows[0].round, **sd))
    return mean, std


def trial_seeds(config: SimConfig) -> list[int]:
    return [(config.seed + i) % 2**64 for i in range(config.trials)]


def run_experiment(config: SimConfig, jobs: int = 1) -> ExperimentResult:
    """Run ``config.trials`` trials (seeds ``seed + i``) and aggregate them per round."""
    seeds = trial_seeds(config)
    if jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            trials = list(pool.map(_run_trial_args, [(config, s) for s in seeds]))
    else:
        trials = [run_trial(config, s) for s in seeds]
    mean, std = aggregate(trials)
    return ExperimentResult(config, trials, mean, std)


def run_experiments(configs: Sequence[SimConfig], jobs: int = 1) -> list:
    """Run several experiments, spreading all their trials over one worker pool."""
    tasks = [(c, s) for c in configs for s in trial_seeds(c)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            flat = list(pool.map(_run_trial_args, tasks))
    else:
        flat = [run_trial(c, s) for c, s in tasks]
    results, i = [], 0
    for c in configs:
        trials = flat[i:i + c.trials]
        i += c.trials
        mean, std = aggregate(trials)
        results.append(ExperimentResult(c, trials, mean, std))
    return results
