"""Join certificates and the epoch-key service used against hardware adversaries.

Identity-based signatures are emulated with ordinary Ed25519: the key
generator derives a per-(node, epoch) signing key from its master secret and
hands the node that key together with a *binding*, the master key's
signature over ``(node id, epoch, verification key)``. A policy signature
travels as a bundle ``binding || policy signature``. Anyone holding only the
master public key, the node id and the epoch can check it: the binding
proves which key speaks for that identity in that epoch, and the key proves
the policy. Revocation is epoch-granular because a denied node simply gets
no further bindings.

Binding layout (112 bytes)::

    0   8   node id
    8   8   epoch (big-endian)
    16  32  epoch verification key
    48  64  master signature over b"binding" || bytes[0:48]

Bundle layout (176 bytes): binding followed by the 64-byte policy signature
over ``b"policy" || node id || epoch || policy``. A trust entry's 64-byte
signature field holds SHA-512 of the bundle; the bundle itself rides
alongside the entry.
"""

from __future__ import annotations

import hashlib
import hmac
import struct
import threading
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from .core import NODE_ID_SIZE, NodeId, Policy, TrustEntry
from .errors import (
    EpochOutOfRangeError,
    InvalidInputError,
    RevokedError,
    StaleKeyError,
    UnauthorisedError,
)

DEFAULT_EPOCH_LENGTH = 1000
DEFAULT_PREFETCH_WINDOW = 1

BINDING_SIZE = 112
BUNDLE_SIZE = BINDING_SIZE + 64
CERTIFICATE_SIZE = 80

_EPOCH = struct.Struct(">Q")


def _raw_public(key: Ed25519PrivateKey) -> bytes:
    return key.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)


def _verify(public: bytes, signature: bytes, message: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(public).verify(signature, message)
    except (InvalidSignature, ValueError):
        return False
    return True


def epoch_of(now: int, epoch_length: int = DEFAULT_EPOCH_LENGTH) -> int:
    return now // epoch_length


# -- join certificates ----------------------------------------------------------------

@dataclass(frozen=True)
class Certificate:
    """An issuer's statement that ``subject`` may join the network (80 bytes on the wire)."""

    issuer: bytes
    subject: NodeId
    signature: bytes

    def encode(self) -> bytes:
        return self.issuer + bytes(self.subject) + self.signature

    @classmethod
    def decode(cls, data: bytes) -> "Certificate":
        if len(data) != CERTIFICATE_SIZE:
            raise InvalidInputError(f"certificate must be {CERTIFICATE_SIZE} bytes")
        return cls(data[:8], NodeId(data[8:16]), data[16:])


class CertificateIssuer:
    """A manufacturer or owner that signs join certificates."""

    def __init__(self, issuer_id: bytes, seed: bytes) -> None:
        if len(issuer_id) != 8 or len(seed) != 32:
            raise InvalidInputError("issuer id must be 8 bytes and seed 32 bytes")
        self.issuer_id = bytes(issuer_id)
        self._key = Ed25519PrivateKey.from_private_bytes(seed)
        self.public_key = _raw_public(self._key)

    def issue(self, subject: NodeId) -> Certificate:
        sig = self._key.sign(b"cert" + self.issuer_id + bytes(subject))
        return Certificate(self.issuer_id, subject, sig)


def verify_certificate(cert: Certificate | None, allowed_issuers: Mapping[bytes, bytes],
                       subject: NodeId | None = None) -> bool:
    """Check ``cert`` against a mapping of issuer id to issuer public key."""
    if cert is None:
        return False
    if subject is not None and cert.subject != subject:
        return False
    public = allowed_issuers.get(cert.issuer)
    if public is None:
        return False
    return _verify(public, cert.signature, b"cert" + cert.issuer + bytes(cert.subject))


# -- epoch keys -------------------------------------------------------------------------

@dataclass(frozen=True)
class EpochIdentity:
    node: NodeId
    epoch: int


@dataclass(frozen=True)
class EpochKey:
    identity: EpochIdentity
    signing_key: bytes = field(repr=False)
    binding: bytes
    epoch_length: int = DEFAULT_EPOCH_LENGTH


def _binding_message(node: bytes, epoch: int, verification_key: bytes) -> bytes:
    return b"binding" + bytes(node) + _EPOCH.pack(epoch) + verification_key


def _policy_message(node: bytes, epoch: int, policy: Policy) -> bytes:
    return b"policy" + bytes(node) + _EPOCH.pack(epoch) + policy.encode()


class KeyGenerator:
    """Issues epoch-scoped signing keys and keeps the denylist.

    Key issuance and denial are serialised behind a lock.
    """

    def __init__(self, seed: bytes, allowed_issuers: Mapping[bytes, bytes] | None = None,
                 epoch_length: int = DEFAULT_EPOCH_LENGTH,
                 prefetch_window: int = DEFAULT_PREFETCH_WINDOW) -> None:
        if len(seed) != 32:
            raise InvalidInputError("key generator seed must be 32 bytes")
        if epoch_length < 1 or prefetch_window < 0:
            raise InvalidInputError("epoch_length must be >= 1 and prefetch_window >= 0")
        self._master = Ed25519PrivateKey.from_private_bytes(seed)
        self._derive_secret = hashlib.sha256(b"epoch-key-derivation" + seed).digest()
        self.master_public = _raw_public(self._master)
        self.allowed_issuers = dict(allowed_issuers or {})
        self.epoch_length = epoch_length
        self.prefetch_window = prefetch_window
        self.denylist: set = set()
        self._lock = threading.Lock()

    def get_key(self, node: NodeId, epoch: int, certificate: Certificate | None,
                now: int = 0) -> EpochKey:
        with self._lock:
            if not verify_certificate(certificate, self.allowed_issuers, node):
                raise UnauthorisedError(f"certificate for {node!r} not accepted")
            if node in self.denylist:
                raise RevokedError(f"{node!r} is on the denylist")
            current = epoch_of(now, self.epoch_length)
            if not current <= epoch <= current + self.prefetch_window:
                raise EpochOutOfRangeError(
                    f"epoch {epoch} outside [{current}, {current + self.prefetch_window}]")
            seed = hmac.new(self._derive_secret, bytes(node) + _EPOCH.pack(epoch),
                            hashlib.sha256).digest()
            signing = Ed25519PrivateKey.from_private_bytes(seed)
            vk = _raw_public(signing)
            binding_sig = self._master.sign(_binding_message(node, epoch, vk))
            binding = bytes(node) + _EPOCH.pack(epoch) + vk + binding_sig
            return EpochKey(EpochIdentity(node, epoch), seed, binding, self.epoch_length)

    def deny(self, node: NodeId) -> None:
        with self._lock:
            self.denylist.add(node)


def pkg_init(seed: bytes, allowed_issuers: Mapping[bytes, bytes] | None = None,
             **kwargs) -> KeyGenerator:
    return KeyGenerator(seed, allowed_issuers, **kwargs)


def sign_policy(key: EpochKey, policy: Policy, now: int | None = None) -> bytes:
    """Sign ``policy`` under an epoch key and return the 176-byte bundle.

    ``now`` defaults to the policy's attestation time; the key must belong to
    the epoch containing it.
    """
    when = policy.attested_at if now is None else now
    current = epoch_of(when, key.epoch_length)
    if current != key.identity.epoch:
        raise StaleKeyError(f"key for epoch {key.identity.epoch} used in epoch {current}")
    signing = Ed25519PrivateKey.from_private_bytes(key.signing_key)
    sig = signing.sign(_policy_message(key.identity.node, key.identity.epoch, policy))
    return key.binding + sig


def bundle_digest(bundle: bytes) -> bytes:
    return hashlib.sha512(bundle).digest()


@lru_cache(maxsize=1 << 16)
def verify_policy_signature(master_public: bytes, node: bytes, epoch: int, policy: Policy,
                            bundle: bytes) -> bool:
    """True iff ``bundle`` is a valid signature by ``(node, epoch)`` over ``policy``."""
    if len(bundle) != BUNDLE_SIZE or len(node) != NODE_ID_SIZE:
        return False
    binding, sig = bundle[:BINDING_SIZE], bundle[BINDING_SIZE:]
    if binding[:8] != bytes(node) or _EPOCH.unpack(binding[8:16])[0] != epoch:
        return False
    vk, binding_sig = binding[16:48], binding[48:]
    if not _verify(master_public, binding_sig, _binding_message(node, epoch, vk)):
        return False
    return _verify(vk, sig, _policy_message(node, epoch, policy))


def make_signature_check(master_public: bytes, bundles: Mapping[bytes, bytes],
                         epoch_length: int = DEFAULT_EPOCH_LENGTH, now: int | None = None,
                         reject_stale_epoch: bool = False):
    """Build the per-entry signature gate used by ``sync_apply``.

    ``bundles`` maps an entry's 64-byte signature field to the bundle sent
    with it. The signing epoch is the epoch of the policy's attestation time.
    """

    def check(entry: TrustEntry) -> bool:
        bundle = bundles.get(entry.signature)
        if bundle is None or bundle_digest(bundle) != entry.signature:
            return False
        epoch = epoch_of(entry.policy.attested_at, epoch_length)
        if reject_stale_epoch and now is not None and epoch < epoch_of(now, epoch_length):
            return False
        return verify_policy_signature(master_public, bytes(entry.subject), epoch,
                                       entry.policy, bundle)

    return check
