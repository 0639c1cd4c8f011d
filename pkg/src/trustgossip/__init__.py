"""Gossip-based propagation of remote-attestation trust between TEE nodes."""

from .bloom import BloomFilter, bloom_fp_estimate, bloom_from_store
from .core import MergeRule, NodeId, Policy, TrustEntry, TrustStore, entry_digest
from .protocol import NodeState, ProtocolConfig, Variant, run_pairwise
from .sim import ExperimentResult, RoundMetrics, SimConfig, Topology, run_experiment, run_trial

__version__ = "0.1.0"

__all__ = [
    "BloomFilter", "bloom_fp_estimate", "bloom_from_store",
    "MergeRule", "NodeId", "Policy", "TrustEntry", "TrustStore", "entry_digest",
    "NodeState", "ProtocolConfig", "Variant", "run_pairwise",
    "ExperimentResult", "RoundMetrics", "SimConfig", "Topology", "run_experiment", "run_trial",
]
