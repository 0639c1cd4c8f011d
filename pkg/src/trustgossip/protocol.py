"""Pairwise trust establishment: connect, verify, attest, sync, then swap roles.

``run_pairwise(a, b, ...)`` drives one interaction with ``a`` as the first
verifier. Each direction is::

    verify:  does the verifier already trust the prover?
      yes -> SyncSignal, then sync
      no  -> attest; on success record a policy for the prover, then sync
             on failure (or no shared protocol) the whole interaction ends
    sync:    the prover sends the entries the verifier's filter says it lacks

The Naive variant never syncs; NoBloom sends the prover's whole store.
"""

from __future__ import annotations

import enum
import hashlib
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Mapping, NamedTuple, Optional, Protocol

from .bloom import BloomFilter, bloom_from_store
from .core import ENTRY_SIZE, NodeId, Policy, TrustEntry, TrustStore
from .errors import (
    ConnectRefusedError,
    IncompatibleProtocolsError,
    InvalidInputError,
    StaleKeyError,
)
from .identity import (
    BUNDLE_SIZE,
    CERTIFICATE_SIZE,
    DEFAULT_EPOCH_LENGTH,
    Certificate,
    EpochKey,
    bundle_digest,
    epoch_of,
    make_signature_check,
    sign_policy,
    verify_certificate,
    verify_policy_signature,
)


class Variant(enum.Enum):
    ORIGINAL = "original"
    NO_BLOOM = "no-bloom"
    NAIVE = "naive"


class NextAction(enum.Enum):
    START_SYNC = "sync"
    START_ATTEST = "attest"
    SKIP = "skip"  # already trusted under Naive: nothing left to do in this direction


class Phase(enum.Enum):
    AWAIT_HELLO = "await-hello"
    VERIFYING = "verifying"
    ATTESTING = "attesting"
    SYNCING = "syncing"
    DONE = "done"
    FAILED = "failed"


class AttestationOracle(Protocol):
    def __call__(self, prover: NodeId, verifier: NodeId, protocol_id: int,
                 nonce: bytes) -> bool: ...


@dataclass(frozen=True)
class CostModel:
    """Byte costs for messages whose real size depends on deployment choices."""

    key_agreement_bytes: int = 0
    attest_message_bytes: int = 0
    signal_bytes: int = 0


# -- messages ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Hello:
    sender: NodeId
    filter: bytes
    protocols: frozenset
    certificate: Optional[Certificate] = None

    def wire_size(self, cost: CostModel) -> int:
        cert = CERTIFICATE_SIZE if self.certificate is not None else 0
        return 8 + len(self.filter) + 2 * len(self.protocols) + cert


@dataclass(frozen=True)
class SyncSignal:
    def wire_size(self, cost: CostModel) -> int:
        return cost.signal_bytes


@dataclass(frozen=True)
class MissingEntries:
    entries: tuple
    bundles: Mapping[bytes, bytes] = field(default_factory=dict)

    def wire_size(self, cost: CostModel) -> int:
        return ENTRY_SIZE * len(self.entries)

    def bundle_bytes(self) -> int:
        return BUNDLE_SIZE * len(self.bundles)


@dataclass(frozen=True)
class AttestChallenge:
    protocol_id: int
    nonce: bytes

    def wire_size(self, cost: CostModel) -> int:
        return cost.attest_message_bytes


@dataclass(frozen=True)
class AttestEvidence:
    protocol_id: int
    evidence: bytes = b""

    def wire_size(self, cost: CostModel) -> int:
        return cost.attest_message_bytes


@dataclass(frozen=True)
class PolicyOffer:
    policy: Policy

    def wire_size(self, cost: CostModel) -> int:
        return 40


@dataclass(frozen=True)
class PolicySignature:
    signature: bytes

    def wire_size(self, cost: CostModel) -> int:
        return 64


@dataclass(frozen=True)
class Terminate:
    reason: str

    def wire_size(self, cost: CostModel) -> int:
        return 0


@dataclass(frozen=True)
class TraceRecord:
    round: int
    sender: NodeId
    receiver: NodeId
    kind: str
    bytes: int


TraceHook = Callable[[TraceRecord], None]


# -- configuration and node state -------------------------------------------------------

@dataclass(frozen=True)
class ExtensionConfig:
    """Signature gate settings for the hardware-adversary extension."""

    master_public: bytes
    epoch_length: int = DEFAULT_EPOCH_LENGTH
    reject_stale_epoch: bool = False


@dataclass(frozen=True)
class ProtocolConfig:
    variant: Variant = Variant.ORIGINAL
    permissioned: bool = False
    allowed_issuers: Mapping[bytes, bytes] = field(default_factory=dict)
    extension: Optional[ExtensionConfig] = None
    cost: CostModel = CostModel()


@dataclass
class NodeState:
    """Everything a node's TEE keeps between interactions."""

    id: NodeId
    protocols: frozenset
    store: TrustStore = None
    certificate: Optional[Certificate] = None
    criteria_code: int = 1
    policy_ttl: Optional[int] = None
    epoch_keys: dict = field(default_factory=dict)
    bundles: dict = field(default_factory=dict, repr=False)
    blocked: set = field(default_factory=set)
    _filter: Optional[BloomFilter] = field(default=None, repr=False)
    _filter_wire: bytes = field(default=b"", repr=False)
    _nonce_counter: int = field(default=0, repr=False)

    def __post_init__(self) -> None:
        if not self.protocols:
            raise InvalidInputError("a node must support at least one attestation protocol")
        self.protocols = frozenset(self.protocols)
        if self.store is None:
            self.store = TrustStore(self.id)

    def advertised_filter(self) -> BloomFilter:
        if self._filter is None:
            self._filter = bloom_from_store(self.store)
            self._filter_wire = self._filter.to_bytes()
        return self._filter

    def filter_wire(self) -> bytes:
        self.advertised_filter()
        return self._filter_wire

    def invalidate_filter(self) -> None:
        self._filter = None

    def expire(self, now: int) -> list:
        removed = self.store.expire(now)
        if removed:
            self.invalidate_filter()
        return removed

    def next_nonce(self, peer: NodeId) -> bytes:
        self._nonce_counter += 1
        return hashlib.blake2b(bytes(self.id) + bytes(peer)
                               + struct.pack(">Q", self._nonce_counter), digest_size=8).digest()

    def key_for(self, now: int, epoch_length: int) -> Optional[EpochKey]:
        return self.epoch_keys.get(epoch_of(now, epoch_length))


# decoded filters are read-only, so identical wire bytes can share one object
_decode_filter = lru_cache(maxsize=4096)(BloomFilter.from_bytes)


@dataclass
class Session:
    local: NodeId
    peer: Optional[NodeId] = None
    phase: Phase = Phase.AWAIT_HELLO
    peer_filter: Optional[BloomFilter] = None
    peer_protocols: frozenset = frozenset()
    self_verified_peer: bool = False
    peer_verified_self: bool = False

    def fail(self) -> None:
        self.phase = Phase.FAILED

    def receive_hello(self, hello: Hello) -> None:
        if self.phase is not Phase.AWAIT_HELLO:
            raise InvalidInputError(f"Hello received in phase {self.phase}")
        self.peer = hello.sender
        self.peer_filter = _decode_filter(hello.filter) if hello.filter else None
        self.peer_protocols = hello.protocols
        self.phase = Phase.VERIFYING


def make_hello(node: NodeState, config: ProtocolConfig) -> Hello:
    filt = node.filter_wire() if config.variant is Variant.ORIGINAL else b""
    cert = node.certificate if config.permissioned else None
    return Hello(node.id, filt, node.protocols, cert)


# -- subprotocols -----------------------------------------------------------------------

def connect(a: NodeState, b: NodeState, config: ProtocolConfig = ProtocolConfig(),
            trace: Optional[TraceHook] = None, round: int = 0) -> tuple[Session, Session]:
    """Exchange Hello messages. Raises ConnectRefusedError on a rejected certificate."""
    if a.id == b.id:
        raise InvalidInputError("a node cannot connect to itself")
    sa, sb = Session(a.id), Session(b.id)
    if config.permissioned:
        for local, remote, sess in ((a, b, sa), (b, a, sb)):
            if remote.id in local.blocked or not verify_certificate(
                    remote.certificate, config.allowed_issuers, remote.id):
                local.blocked.add(remote.id)
                sa.fail()
                sb.fail()
                raise ConnectRefusedError(f"{local.id!r} refused {remote.id!r}")
    ha, hb = make_hello(a, config), make_hello(b, config)
    if trace is not None:
        if config.cost.key_agreement_bytes:
            trace(TraceRecord(round, a.id, b.id, "KeyAgreement", config.cost.key_agreement_bytes))
            trace(TraceRecord(round, b.id, a.id, "KeyAgreement", config.cost.key_agreement_bytes))
        trace(TraceRecord(round, a.id, b.id, "Hello", ha.wire_size(config.cost)))
        trace(TraceRecord(round, b.id, a.id, "Hello", hb.wire_size(config.cost)))
    sa.receive_hello(hb)
    sb.receive_hello(ha)
    return sa, sb


def verify(session: Session, store: TrustStore, now: Optional[int] = None,
           variant: Variant = Variant.ORIGINAL) -> NextAction:
    if session.phase is not Phase.VERIFYING:
        raise InvalidInputError(f"verify called in phase {session.phase}")
    if store.contains(session.peer, now):
        return NextAction.SKIP if variant is Variant.NAIVE else NextAction.START_SYNC
    return NextAction.START_ATTEST


def choose_protocol(a: Iterable[int], b: Iterable[int]) -> Optional[int]:
    common = set(a) & set(b)
    return min(common) if common else None


@dataclass(frozen=True)
class AttestOutcome:
    success: bool
    policy: Optional[Policy] = None
    protocol_id: Optional[int] = None
    bundle: Optional[bytes] = None
    messages: tuple = ()

    def entry(self, prover: NodeId) -> TrustEntry:
        if not self.success:
            raise InvalidInputError("no entry for a failed attestation")
        if self.bundle is None:
            return TrustEntry(prover, self.policy)
        return TrustEntry(prover, self.policy, signature=bundle_digest(self.bundle))


def attest(verifier: NodeState, prover: NodeState, oracle: AttestationOracle, now: int,
           config: ProtocolConfig = ProtocolConfig()) -> AttestOutcome:
    """Attest ``prover`` to ``verifier`` and, on success, mint the verifier's policy for it.

    Neither node's store is touched here. With the extension enabled the
    prover must sign the policy with its current epoch key, and the verifier
    checks that signature from the master public key alone.
    """
    protocol_id = choose_protocol(verifier.protocols, prover.protocols)
    if protocol_id is None:
        raise IncompatibleProtocolsError(
            f"{verifier.id!r} and {prover.id!r} share no attestation protocol")
    nonce = verifier.next_nonce(prover.id)
    msgs = [("V", AttestChallenge(protocol_id, nonce)), ("P", AttestEvidence(protocol_id))]
    if not oracle(prover.id, verifier.id, protocol_id, nonce):
        return AttestOutcome(False, protocol_id=protocol_id, messages=tuple(msgs))
    expires = 0 if verifier.policy_ttl is None else now + verifier.policy_ttl
    policy = Policy(verifier.criteria_code, now, expires, protocol_id)
    ext = config.extension
    if ext is None:
        return AttestOutcome(True, policy, protocol_id, messages=tuple(msgs))

    msgs.append(("V", PolicyOffer(policy)))
    key = prover.key_for(now, ext.epoch_length)
    if key is None:
        return AttestOutcome(False, protocol_id=protocol_id, messages=tuple(msgs))
    try:
        bundle = sign_policy(key, policy, now)
    except StaleKeyError:
        return AttestOutcome(False, protocol_id=protocol_id, messages=tuple(msgs))
    msgs.append(("P", PolicySignature(bundle_digest(bundle))))
    if not verify_policy_signature(ext.master_public, bytes(prover.id),
                                   epoch_of(now, ext.epoch_length), policy, bundle):
        return AttestOutcome(False, protocol_id=protocol_id, messages=tuple(msgs))
    return AttestOutcome(True, policy, protocol_id, bundle, tuple(msgs))


def sync_select(prover_store: TrustStore, verifier_filter: Optional[BloomFilter],
                verifier_id: NodeId, variant: Variant = Variant.ORIGINAL) -> list:
    """Entries the prover sends: those the verifier's filter does not claim to hold."""
    if variant is Variant.NAIVE:
        raise InvalidInputError("naive nodes do not sync")
    if variant is Variant.NO_BLOOM or verifier_filter is None:
        return [e for e in prover_store if e.subject != verifier_id]
    return [e for e in verifier_filter.select_absent(prover_store) if e.subject != verifier_id]


class SyncOutcome(NamedTuple):
    store: TrustStore
    accepted: int
    rejected: int
    changed: int


def sync_apply(verifier_store: TrustStore, entries: Iterable[TrustEntry], now: int,
               sig_check: Optional[Callable[[TrustEntry], bool]] = None) -> SyncOutcome:
    """Merge received entries that are unexpired and, if checked, correctly signed."""
    accepted, rejected, changed = verifier_store.merge(entries, now, sig_check)
    return SyncOutcome(verifier_store, accepted, rejected, changed)


# -- the full interaction ---------------------------------------------------------------

@dataclass
class DirectionReport:
    verifier: NodeId
    prover: NodeId
    action: NextAction
    attested: Optional[bool] = None
    entries_sent: int = 0
    accepted: int = 0
    rejected: int = 0


@dataclass
class InteractionReport:
    first: NodeId
    second: NodeId
    directions: list = field(default_factory=list)
    failure: Optional[str] = None
    attestations_attempted: int = 0
    attestations_succeeded: int = 0
    bytes_hello: int = 0
    bytes_sync: int = 0
    bytes_attest: int = 0
    bytes_other: int = 0
    bytes_bundles: int = 0

    @property
    def bytes_total(self) -> int:
        return self.bytes_hello + self.bytes_sync + self.bytes_attest + self.bytes_other

    @property
    def completed(self) -> bool:
        return self.failure is None


_ATTEST_KINDS = {"AttestChallenge", "AttestEvidence", "PolicyOffer", "PolicySignature"}


class _Accountant:
    """Tallies message bytes into a report and forwards records to the trace hook."""

    __slots__ = ("report", "cost", "trace", "round")

    def __init__(self, report: InteractionReport, cost: CostModel,
                 trace: Optional[TraceHook], round: int) -> None:
        self.report, self.cost, self.trace, self.round = report, cost, trace, round

    def __call__(self, record: TraceRecord) -> None:
        r = self.report
        if record.kind == "Hello":
            r.bytes_hello += record.bytes
        elif record.kind == "MissingEntries":
            r.bytes_sync += record.bytes
        elif record.kind in _ATTEST_KINDS:
            r.bytes_attest += record.bytes
        else:
            r.bytes_other += record.bytes
        if self.trace is not None:
            self.trace(record)

    def send(self, sender: NodeId, receiver: NodeId, msg) -> None:
        self(TraceRecord(self.round, sender, receiver, type(msg).__name__,
                         msg.wire_size(self.cost)))


def _run_direction(v: NodeState, p: NodeState, v_sess: Session, p_sess: Session,
                   oracle: AttestationOracle, now: int, config: ProtocolConfig,
                   acct: _Accountant) -> bool:
    """One verifier/prover pass. Returns False if the interaction must stop."""
    report = acct.report
    variant = config.variant
    action = verify(v_sess, v.store, now, variant)
    d = DirectionReport(v.id, p.id, action)
    report.directions.append(d)

    if action is NextAction.START_ATTEST:
        v_sess.phase = p_sess.phase = Phase.ATTESTING
        try:
            outcome = attest(v, p, oracle, now, config)
        except IncompatibleProtocolsError:
            acct.send(v.id, p.id, Terminate("incompatible-protocols"))
            report.failure = "incompatible-protocols"
            return False
        report.attestations_attempted += 1
        for who, msg in outcome.messages:
            src, dst = (v.id, p.id) if who == "V" else (p.id, v.id)
            acct.send(src, dst, msg)
        d.attested = outcome.success
        if not outcome.success:
            acct.send(v.id, p.id, Terminate("attestation-failed"))
            report.failure = "attestation-failed"
            return False
        report.attestations_succeeded += 1
        entry = outcome.entry(p.id)
        if v.store.insert(entry):
            v.invalidate_filter()
        if outcome.bundle is not None:
            v.bundles[entry.signature] = outcome.bundle
        if variant is Variant.NAIVE:
            return True
    elif action is NextAction.START_SYNC:
        acct.send(v.id, p.id, SyncSignal())
    else:
        return True

    v_sess.phase = p_sess.phase = Phase.SYNCING
    # the prover checks against the verifier's filter as received at connect time
    entries = sync_select(p.store, p_sess.peer_filter, v.id, variant)
    bundles = {}
    if config.extension is not None:
        bundles = {e.signature: p.bundles[e.signature] for e in entries
                   if e.signature in p.bundles}
    msg = MissingEntries(tuple(entries), bundles)
    acct.send(p.id, v.id, msg)
    report.bytes_bundles += msg.bundle_bytes()
    d.entries_sent = len(entries)

    sig_check = None
    ext = config.extension
    if ext is not None:
        sig_check = make_signature_check(ext.master_public, bundles, ext.epoch_length, now,
                                         ext.reject_stale_epoch)
    out = sync_apply(v.store, entries, now, sig_check)
    d.accepted, d.rejected = out.accepted, out.rejected
    if out.changed:
        v.invalidate_filter()
        if bundles:
            for e in entries:
                b = bundles.get(e.signature)
                if b is not None:
                    v.bundles[e.signature] = b
    return True


def run_pairwise(a: NodeState, b: NodeState, oracle: AttestationOracle, now: int,
                 config: ProtocolConfig = ProtocolConfig(), trace: Optional[TraceHook] = None,
                 round: int = 0) -> InteractionReport:
    """Run one full interaction with ``a`` verifying first, then ``b``.

    Failures (refused connection, no common protocol, failed attestation) end
    the interaction and are recorded in ``report.failure`` rather than raised.
    """
    if a.id == b.id:
        raise InvalidInputError("a node cannot interact with itself")
    report = InteractionReport(a.id, b.id)
    acct = _Accountant(report, config.cost, trace, round)
    try:
        sa, sb = connect(a, b, config, acct, round)
    except ConnectRefusedError:
        report.failure = "connect-refused"
        return report

    if not _run_direction(a, b, sa, sb, oracle, now, config, acct):
        sa.fail()
        sb.fail()
        return report
    sa.self_verified_peer = sb.peer_verified_self = True
    sa.phase = sb.phase = Phase.VERIFYING
    if not _run_direction(b, a, sb, sa, oracle, now, config, acct):
        sa.fail()
        sb.fail()
        return report
    sb.self_verified_peer = sa.peer_verified_self = True
    sa.phase = sb.phase = Phase.DONE
    return report


# -- oracles ----------------------------------------------------------------------------

class ConstantOracle:
    def __init__(self, success: bool = True) -> None:
        self.success = success
        self.calls = 0

    def __call__(self, prover, verifier, protocol_id, nonce) -> bool:
        self.calls += 1
        return self.success


class RandomOracle:
    """Succeeds with probability ``asr``, drawing from ``rng.random()``."""

    def __init__(self, asr: float, rng) -> None:
        if not 0.0 <= asr <= 1.0:
            raise InvalidInputError("asr must lie in [0, 1]")
        self.asr = asr
        self.rng = rng

    def __call__(self, prover, verifier, protocol_id, nonce) -> bool:
        return self.rng.random() < self.asr


class UnreachableOracle:
    """Wraps another oracle and always fails for the listed provers."""

    def __init__(self, inner: AttestationOracle, unreachable: Iterable[NodeId]) -> None:
        self.inner = inner
        self.unreachable = set(unreachable)

    def __call__(self, prover, verifier, protocol_id, nonce) -> bool:
        if prover in self.unreachable:
            return False
        return self.inner(prover, verifier, protocol_id, nonce)
