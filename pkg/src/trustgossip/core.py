"""Identities, policies, trust entries and trust stores.

A trust entry is the unit of gossip. Its wire form is a fixed 128-byte record::

    offset   size  field
    0        8     subject node id
    8        40    policy
    48       64    signature (all zero when signatures are disabled)
    112      16    reserved

The 40-byte policy record is ``>HQQHH`` (criteria code, attested-at,
expires-at, protocol id, flags) followed by 18 zero bytes. All integers are
big-endian.
"""

from __future__ import annotations

import enum
import hashlib
import hmac
import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Iterator

from .errors import DecodeError, InvalidInputError

NODE_ID_SIZE = 8
POLICY_SIZE = 40
SIGNATURE_SIZE = 64
RESERVED_SIZE = 16
ENTRY_SIZE = NODE_ID_SIZE + POLICY_SIZE + SIGNATURE_SIZE + RESERVED_SIZE
DIGEST_SIZE = 8

_POLICY_STRUCT = struct.Struct(">HQQHH18x")
_ZERO_SIGNATURE = bytes(SIGNATURE_SIZE)
_ZERO_RESERVED = bytes(RESERVED_SIZE)


class NodeId(bytes):
    """An 8-byte opaque node identifier. Ordering is lexicographic on the bytes."""

    def __new__(cls, value: bytes) -> "NodeId":
        if len(value) != NODE_ID_SIZE:
            raise InvalidInputError(f"node id must be {NODE_ID_SIZE} bytes, got {len(value)}")
        return super().__new__(cls, value)

    def __repr__(self) -> str:
        return f"NodeId({self.hex()})"


def derive_node_id(public_key: bytes, prf_key: bytes) -> NodeId:
    """Derive a node id from a public key with HMAC-SHA256 keyed by ``prf_key``."""
    if not public_key:
        raise InvalidInputError("public key must be non-empty")
    if len(prf_key) != 32:
        raise InvalidInputError("prf key must be 32 bytes")
    mac = hmac.new(prf_key, public_key, hashlib.sha256).digest()
    return NodeId(mac[:NODE_ID_SIZE])


@dataclass(frozen=True)
class Policy:
    """What a verifier attested a prover against, and when.

    ``expires_at == 0`` means the attestation never expires.
    """

    criteria_code: int
    attested_at: int
    expires_at: int = 0
    protocol_id: int = 0
    flags: int = 0

    def __post_init__(self) -> None:
        for name, bits in (("criteria_code", 16), ("protocol_id", 16), ("flags", 16),
                           ("attested_at", 64), ("expires_at", 64)):
            value = getattr(self, name)
            if not 0 <= value < (1 << bits):
                raise InvalidInputError(f"{name}={value} does not fit in {bits} bits")
        if self.expires_at != 0 and self.expires_at <= self.attested_at:
            raise InvalidInputError("expires_at must be 0 or later than attested_at")

    def encode(self) -> bytes:
        return _POLICY_STRUCT.pack(self.criteria_code, self.attested_at, self.expires_at,
                                   self.protocol_id, self.flags)

    @classmethod
    def decode(cls, data: bytes) -> "Policy":
        if len(data) != POLICY_SIZE:
            raise DecodeError(f"policy must be {POLICY_SIZE} bytes, got {len(data)}")
        if any(data[_POLICY_STRUCT.size - 18:]):
            raise DecodeError("non-zero policy padding")
        try:
            return cls(*_POLICY_STRUCT.unpack(data))
        except InvalidInputError as exc:
            raise DecodeError(str(exc)) from exc

    def valid_at(self, now: int) -> bool:
        return self.expires_at == 0 or self.expires_at >= now


@dataclass(frozen=True)
class TrustEntry:
    subject: NodeId
    policy: Policy
    signature: bytes = _ZERO_SIGNATURE
    reserved: bytes = _ZERO_RESERVED

    def __post_init__(self) -> None:
        if len(self.subject) != NODE_ID_SIZE:
            raise InvalidInputError("subject must be an 8-byte node id")
        if len(self.signature) != SIGNATURE_SIZE:
            raise InvalidInputError(f"signature must be {SIGNATURE_SIZE} bytes")
        if len(self.reserved) != RESERVED_SIZE:
            raise InvalidInputError(f"reserved must be {RESERVED_SIZE} bytes")

    @cached_property
    def digest(self) -> bytes:
        return entry_digest(self.subject, self.policy)

    @property
    def signed(self) -> bool:
        return self.signature != _ZERO_SIGNATURE


def encode_entry(entry: TrustEntry) -> bytes:
    return bytes(entry.subject) + entry.policy.encode() + entry.signature + entry.reserved


def decode_entry(data: bytes) -> TrustEntry:
    if len(data) != ENTRY_SIZE:
        raise DecodeError(f"trust entry must be {ENTRY_SIZE} bytes, got {len(data)}")
    return TrustEntry(
        subject=NodeId(data[0:8]),
        policy=Policy.decode(data[8:48]),
        signature=bytes(data[48:112]),
        reserved=bytes(data[112:128]),
    )


def entry_digest(subject: bytes, policy: Policy) -> bytes:
    """8-byte digest of ``subject || policy``; the signature is deliberately left out."""
    return hashlib.blake2b(bytes(subject) + policy.encode(), digest_size=DIGEST_SIZE).digest()


class MergeRule(enum.Enum):
    NEWEST_WINS = "newest-wins"
    KEEP_ALL = "keep-all"


@dataclass
class TrustStore:
    """A node's list of trusted peers.

    Under ``NEWEST_WINS`` each subject maps to a single entry; under
    ``KEEP_ALL`` it maps to the list of every entry inserted for it.
    """

    owner: NodeId
    merge_rule: MergeRule = MergeRule.NEWEST_WINS
    _by_subject: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        self._keep_all = self.merge_rule is MergeRule.KEEP_ALL

    def __len__(self) -> int:
        if self._keep_all:
            return sum(len(v) for v in self._by_subject.values())
        return len(self._by_subject)

    def __iter__(self) -> Iterator[TrustEntry]:
        if self._keep_all:
            return (e for entries in self._by_subject.values() for e in entries)
        return iter(self._by_subject.values())

    def subjects(self) -> set:
        return set(self._by_subject)

    def get(self, subject: bytes) -> list:
        found = self._by_subject.get(subject)
        if found is None:
            return []
        return list(found) if self._keep_all else [found]

    def insert(self, entry: TrustEntry) -> bool:
        """Merge ``entry`` in. Returns True if the store changed."""
        if entry.subject == self.owner:
            raise InvalidInputError("a node cannot hold an entry about itself")
        current = self._by_subject.get(entry.subject)
        if self._keep_all:
            if current is None:
                self._by_subject[entry.subject] = [entry]
            else:
                current.append(entry)
            return True
        # ties keep the incumbent
        if current is None or entry.policy.attested_at > current.policy.attested_at:
            self._by_subject[entry.subject] = entry
            return True
        return False

    def merge(self, entries: Iterable[TrustEntry], now: int,
              accept: Callable[[TrustEntry], bool] | None = None) -> tuple[int, int, int]:
        """Insert every entry valid at ``now`` that ``accept`` approves.

        Entries about the owner are skipped silently. Returns
        ``(accepted, rejected, changed)``.
        """
        owner = self.owner
        accepted = rejected = changed = 0
        if self._keep_all or accept is not None:
            for e in entries:
                if e.subject == owner:
                    continue
                if not e.policy.valid_at(now) or (accept is not None and not accept(e)):
                    rejected += 1
                    continue
                accepted += 1
                changed += self.insert(e)
            return accepted, rejected, changed
        by_subject = self._by_subject
        for e in entries:
            subject = e.subject
            if subject == owner:
                continue
            policy = e.policy
            if policy.expires_at and policy.expires_at < now:
                rejected += 1
                continue
            accepted += 1
            current = by_subject.get(subject)
            if current is None or (current is not e
                                   and policy.attested_at > current.policy.attested_at):
                by_subject[subject] = e
                changed += 1
        return accepted, rejected, changed

    def contains(self, subject: bytes, now: int | None = None) -> bool:
        found = self._by_subject.get(subject)
        if found is None:
            return False
        if now is None:
            return True
        if self._keep_all:
            return any(e.policy.valid_at(now) for e in found)
        return found.policy.valid_at(now)

    def trusted_count(self, now: int | None = None) -> int:
        """Number of distinct subjects with at least one unexpired entry."""
        if now is None:
            return len(self._by_subject)
        return sum(1 for s in self._by_subject if self.contains(s, now))

    def expire(self, now: int) -> list:
        """Drop entries that expired before ``now``; return the subject of each dropped entry.

        The caller is responsible for rebuilding any Bloom filter built from
        this store.
        """
        removed = []
        for subject in list(self._by_subject):
            found = self._by_subject[subject]
            entries = found if self._keep_all else [found]
            kept = [e for e in entries if e.policy.valid_at(now)]
            if len(kept) == len(entries):
                continue
            removed.extend([subject] * (len(entries) - len(kept)))
            if not kept:
                del self._by_subject[subject]
            elif self._keep_all:
                self._by_subject[subject] = kept
        return removed

    def copy(self) -> "TrustStore":
        clone = TrustStore(self.owner, self.merge_rule)
        if self._keep_all:
            clone._by_subject = {k: list(v) for k, v in self._by_subject.items()}
        else:
            clone._by_subject = dict(self._by_subject)
        return clone

    @classmethod
    def from_entries(cls, owner: NodeId, entries: Iterable[TrustEntry],
                     merge_rule: MergeRule = MergeRule.NEWEST_WINS) -> "TrustStore":
        store = cls(owner, merge_rule)
        for entry in entries:
            store.insert(entry)
        return store


def store_insert(store: TrustStore, entry: TrustEntry) -> TrustStore:
    store.insert(entry)
    return store


def store_contains(store: TrustStore, subject: bytes, now: int | None = None) -> bool:
    return store.contains(subject, now)


def store_expire(store: TrustStore, now: int) -> tuple[TrustStore, list]:
    removed = store.expire(now)
    return store, removed
