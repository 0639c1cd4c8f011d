"""Hand-built interaction schedules used to check complexity and trust properties."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .core import derive_node_id
from .protocol import (
    AttestationOracle,
    ConstantOracle,
    InteractionReport,
    NodeState,
    ProtocolConfig,
    Variant,
    run_pairwise,
)


def make_nodes(n: int, seed: int = 0, protocols=frozenset({1}),
               policy_ttl: int | None = None) -> list[NodeState]:
    """``n`` nodes with distinct pseudo-random ids, sorted by id."""
    rng = np.random.default_rng(seed)
    prf_key = rng.bytes(32)
    ids = set()
    while len(ids) < n:
        ids.add(derive_node_id(rng.bytes(32), prf_key))
    return [NodeState(i, frozenset(protocols), policy_ttl=policy_ttl) for i in sorted(ids)]


@dataclass
class ScenarioResult:
    nodes: list
    reports: list = field(default_factory=list)

    @property
    def attestations(self) -> int:
        return sum(r.attestations_attempted for r in self.reports)

    @property
    def successful_attestations(self) -> int:
        return sum(r.attestations_succeeded for r in self.reports)

    def trust_fraction(self) -> float:
        n = len(self.nodes)
        return sum(node.store.trusted_count() for node in self.nodes) / (n * (n - 1))

    def fully_trusted(self) -> bool:
        n = len(self.nodes)
        return all(node.store.trusted_count() == n - 1 for node in self.nodes)


def _interact(a: NodeState, b: NodeState, oracle: AttestationOracle, now: int,
              config: ProtocolConfig) -> InteractionReport:
    if b.id < a.id:
        a, b = b, a
    return run_pairwise(a, b, oracle, now, config)


def sequential_join(n: int, variant: Variant = Variant.NO_BLOOM, seed: int = 0,
                    oracle: AttestationOracle | None = None) -> ScenarioResult:
    """Nodes join one at a time, each meeting only the previous joiner.

    Every join costs two attestations. A closing pass walks the chain back
    from the newest node; those pairs already trust each other, so they only
    sync and the full trust list flows back to the oldest nodes.
    """
    config = ProtocolConfig(variant)
    oracle = oracle or ConstantOracle(True)
    nodes = make_nodes(n, seed)
    result = ScenarioResult(nodes)
    now = 1
    for i in range(1, n):
        result.reports.append(_interact(nodes[i - 1], nodes[i], oracle, now, config))
        now += 1
    for i in range(n - 1, 0, -1):
        result.reports.append(_interact(nodes[i], nodes[i - 1], oracle, now, config))
        now += 1
    return result


def all_pairs_once(n: int, variant: Variant = Variant.NAIVE, seed: int = 0,
                   oracle: AttestationOracle | None = None) -> ScenarioResult:
    """Every unordered pair interacts exactly once, in lexicographic order."""
    config = ProtocolConfig(variant)
    oracle = oracle or ConstantOracle(True)
    nodes = make_nodes(n, seed)
    result = ScenarioResult(nodes)
    for now, (i, j) in enumerate(combinations(range(n), 2), start=1):
        result.reports.append(_interact(nodes[i], nodes[j], oracle, now, config))
    return result
