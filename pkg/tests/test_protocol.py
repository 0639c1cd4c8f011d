import pytest

from conftest import entry, make_node, node_id
from trustgossip.bloom import BloomFilter, bloom_from_store
from trustgossip.core import Policy, TrustEntry, TrustStore
from trustgossip.errors import ConnectRefusedError, IncompatibleProtocolsError, InvalidInputError
from trustgossip.identity import CertificateIssuer
from trustgossip.protocol import (
    ConstantOracle,
    Hello,
    MissingEntries,
    NextAction,
    Phase,
    ProtocolConfig,
    UnreachableOracle,
    Variant,
    attest,
    choose_protocol,
    connect,
    run_pairwise,
    sync_apply,
    sync_select,
    verify,
)

ORIGINAL = ProtocolConfig(Variant.ORIGINAL)
NO_BLOOM = ProtocolConfig(Variant.NO_BLOOM)
NAIVE = ProtocolConfig(Variant.NAIVE)
OK = ConstantOracle(True)


def trusts(node, other) -> bool:
    return node.store.contains(other.id)


class TestConnect:
    def test_fresh_nodes(self):
        a, b = make_node(1), make_node(2, protocols=(1, 2))
        sa, sb = connect(a, b)
        assert sa.phase is sb.phase is Phase.VERIFYING
        assert sa.peer == b.id and sb.peer == a.id
        assert sa.peer_protocols == {1, 2} and sb.peer_protocols == {1}
        assert sa.peer_filter == b.advertised_filter()

    def test_hello_size(self):
        a = make_node(1, protocols=(1, 2, 3))
        hello = Hello(a.id, a.filter_wire(), a.protocols)
        assert hello.wire_size(ORIGINAL.cost) == 8 + 64 + 2 * 3

    def test_hello_size_with_certificate(self):
        issuer = CertificateIssuer(b"issuer01", bytes(32))
        a = make_node(1)
        hello = Hello(a.id, a.filter_wire(), a.protocols, issuer.issue(a.id))
        assert hello.wire_size(ORIGINAL.cost) == 8 + 64 + 2 + 80

    def test_self_connect(self):
        a = make_node(1)
        with pytest.raises(InvalidInputError):
            connect(a, a)

    def test_permissioned_refuses_unknown_issuer(self):
        good = CertificateIssuer(b"issuer01", bytes(32))
        rogue = CertificateIssuer(b"issuer02", b"\x01" * 32)
        config = ProtocolConfig(permissioned=True,
                                allowed_issuers={good.issuer_id: good.public_key})
        a, b = make_node(1), make_node(2)
        a.certificate = good.issue(a.id)
        b.certificate = rogue.issue(b.id)
        with pytest.raises(ConnectRefusedError):
            connect(a, b, config)
        assert b.id in a.blocked
        report = run_pairwise(a, b, OK, 1, config)
        assert report.failure == "connect-refused" and len(a.store) == 0

    def test_permissioned_accepts_allowed(self):
        good = CertificateIssuer(b"issuer01", bytes(32))
        config = ProtocolConfig(permissioned=True,
                                allowed_issuers={good.issuer_id: good.public_key})
        a, b = make_node(1), make_node(2)
        a.certificate, b.certificate = good.issue(a.id), good.issue(b.id)
        report = run_pairwise(a, b, OK, 1, config)
        assert report.completed and trusts(a, b) and trusts(b, a)
        assert report.bytes_hello == 2 * (8 + 64 + 2 + 80)

    def test_stolen_certificate_refused(self):
        good = CertificateIssuer(b"issuer01", bytes(32))
        config = ProtocolConfig(permissioned=True,
                                allowed_issuers={good.issuer_id: good.public_key})
        a, b = make_node(1), make_node(2)
        a.certificate = good.issue(a.id)
        b.certificate = good.issue(a.id)  # certificate names someone else
        assert run_pairwise(a, b, OK, 1, config).failure == "connect-refused"


class TestVerify:
    def _session(self, a, b):
        return connect(a, b)[0]

    def test_known_peer_syncs(self):
        a, b = make_node(1), make_node(2)
        a.store.insert(entry(2))
        assert verify(self._session(a, b), a.store, 5) is NextAction.START_SYNC

    def test_unknown_peer_attests(self):
        a, b = make_node(1), make_node(2)
        assert verify(self._session(a, b), a.store, 5) is NextAction.START_ATTEST

    def test_expired_peer_attests(self):
        a, b = make_node(1), make_node(2)
        a.store.insert(entry(2, attested_at=1, expires_at=3))
        assert verify(self._session(a, b), a.store, 5) is NextAction.START_ATTEST

    def test_naive_skips_sync(self):
        a, b = make_node(1), make_node(2)
        a.store.insert(entry(2))
        assert verify(self._session(a, b), a.store, 5, Variant.NAIVE) is NextAction.SKIP


@pytest.mark.parametrize("a, b, expected", [({1, 2}, {2, 3}, 2), ({1}, {2}, None), ({5}, {5}, 5)])
def test_choose_protocol(a, b, expected):
    assert choose_protocol(a, b) == expected


class TestAttest:
    def test_success_policy(self):
        v, p = make_node(1, protocols=(3, 4), criteria_code=7), make_node(2, protocols=(4,))
        out = attest(v, p, OK, now=42)
        assert out.success and out.policy == Policy(7, 42, 0, 4)
        assert out.entry(p.id).subject == p.id

    def test_ttl(self):
        v, p = make_node(1, policy_ttl=10), make_node(2)
        assert attest(v, p, OK, now=5).policy.expires_at == 15

    def test_failure_no_policy(self):
        out = attest(make_node(1), make_node(2), ConstantOracle(False), now=1)
        assert not out.success and out.policy is None
        with pytest.raises(InvalidInputError):
            out.entry(node_id(2))

    def test_disjoint_protocols_skip_oracle(self):
        oracle = ConstantOracle(True)
        with pytest.raises(IncompatibleProtocolsError):
            attest(make_node(1, protocols=(1,)), make_node(2, protocols=(2,)), oracle, 1)
        assert oracle.calls == 0


class TestSync:
    def _store(self, owner, subjects):
        s = TrustStore(node_id(owner))
        for i in subjects:
            s.insert(entry(i))
        return s

    def test_filter_knows_everything(self):
        prover = self._store(1, [3, 4, 5])
        f = bloom_from_store(prover)
        assert sync_select(prover, f, node_id(2)) == []

    def test_empty_filter_sends_all_but_verifier(self):
        prover = self._store(1, [2, 3, 4])
        sent = sync_select(prover, BloomFilter(), node_id(2))
        assert sorted(e.subject for e in sent) == [node_id(3), node_id(4)]

    def test_no_bloom_sends_all_but_verifier(self):
        prover = self._store(1, [2, 3, 4])
        f = bloom_from_store(prover)
        sent = sync_select(prover, f, node_id(2), Variant.NO_BLOOM)
        assert sorted(e.subject for e in sent) == [node_id(3), node_id(4)]

    def test_naive_does_not_sync(self):
        with pytest.raises(InvalidInputError):
            sync_select(self._store(1, [3]), BloomFilter(), node_id(2), Variant.NAIVE)

    def test_omissions_are_exactly_false_positives(self):
        prover = self._store(1, range(2, 100))
        known = self._store(0, range(2, 40))
        f = bloom_from_store(known)
        sent = {e.subject for e in sync_select(prover, f, node_id(0))}
        missing = [e for e in prover if e.subject not in known.subjects()]
        omitted = [e for e in missing if e.subject not in sent]
        assert all(f.query(e.digest) for e in omitted)
        assert sent <= {e.subject for e in missing}

    def test_apply(self):
        store = TrustStore(node_id(0))
        out = sync_apply(store, [entry(1), entry(2)], now=5)
        assert (out.accepted, out.rejected) == (2, 0)
        out = sync_apply(store, [entry(3, attested_at=1, expires_at=2)], now=5)
        assert (out.accepted, out.rejected) == (0, 1)

    def test_missing_entries_size(self):
        assert MissingEntries(tuple(entry(i) for i in range(12))).wire_size(ORIGINAL.cost) == 1536


class TestRunPairwise:
    def test_cold_start(self):
        a, b = make_node(1), make_node(2)
        records = []
        report = run_pairwise(a, b, OK, 1, ORIGINAL, trace=records.append)
        assert report.attestations_attempted == report.attestations_succeeded == 2
        assert trusts(a, b) and trusts(b, a)
        assert [r.kind for r in records].count("MissingEntries") == 2
        assert report.directions[0].verifier == a.id

    def test_already_trusting(self):
        a, b = make_node(1), make_node(2)
        run_pairwise(a, b, OK, 1, ORIGINAL)
        records = []
        report = run_pairwise(a, b, OK, 2, ORIGINAL, trace=records.append)
        assert report.attestations_attempted == 0
        kinds = [r.kind for r in records]
        assert kinds.count("SyncSignal") == 2 and kinds.count("MissingEntries") == 2
        assert all(d.action is NextAction.START_SYNC for d in report.directions)

    def test_naive_gossips_nothing(self):
        a, b, c = make_node(1), make_node(2), make_node(3)
        a.store.insert(entry(3))
        report = run_pairwise(a, b, OK, 1, NAIVE)
        assert report.attestations_attempted == 2 and report.bytes_sync == 0
        assert b.store.subjects() == {a.id}
        assert a.store.subjects() == {b.id, c.id}

    def test_no_bloom_resends_known_entries(self):
        a, b = make_node(1), make_node(2)
        a.store.insert(entry(3))
        b.store.insert(entry(3))
        run_pairwise(a, b, OK, 1, NO_BLOOM)
        report = run_pairwise(a, b, OK, 2, NO_BLOOM)
        assert report.bytes_sync == 128 * 2
        assert run_pairwise(a, b, OK, 3, ORIGINAL).bytes_sync == 0

    def test_failure_stops_both_directions(self):
        a, b = make_node(1), make_node(2)
        report = run_pairwise(a, b, ConstantOracle(False), 1, ORIGINAL)
        assert report.failure == "attestation-failed"
        assert report.attestations_attempted == 1 and len(report.directions) == 1
        assert len(a.store) == 0 and len(b.store) == 0

    def test_failed_attestation_leaves_stores(self):
        a, b = make_node(1), make_node(2)
        a.store.insert(entry(5))
        b.store.insert(entry(6))
        before = (list(a.store), list(b.store))
        run_pairwise(a, b, ConstantOracle(False), 1, ORIGINAL)
        assert (list(a.store), list(b.store)) == before

    def test_incompatible_recorded(self):
        a, b = make_node(1, protocols=(1,)), make_node(2, protocols=(2,))
        report = run_pairwise(a, b, OK, 1, ORIGINAL)
        assert report.failure == "incompatible-protocols"
        assert report.attestations_attempted == 0

    def test_byte_accounting(self):
        a, b, c = make_node(1), make_node(2), make_node(3)
        a.store.insert(entry(3))
        report = run_pairwise(a, b, OK, 1, ORIGINAL)
        # b's store is empty when a verifies; a then sends its entry for c, not b's own
        assert report.bytes_sync == 128
        assert report.bytes_hello == 2 * (8 + 64 + 2)
        assert report.bytes_total == report.bytes_hello + report.bytes_sync
        assert trusts(b, c)

    def test_shared_filter_not_mutated(self):
        # a's store grows mid-interaction; the filter it advertised stays as sent
        a, b = make_node(1), make_node(2)
        b.store.insert(entry(3))
        snapshot = a.advertised_filter()
        run_pairwise(a, b, OK, 1, ORIGINAL)
        assert snapshot.bits == 0
        assert trusts(a, make_node(3))

    def test_lazy_filter_rebuild(self):
        a, b = make_node(1), make_node(2)
        empty = a.advertised_filter()
        run_pairwise(a, b, OK, 1, ORIGINAL)
        rebuilt = a.advertised_filter()
        assert rebuilt is not empty and rebuilt.query(a.store.get(b.id)[0].digest)


class TestBridgingScenarios:
    def test_transitivity(self):
        a, b, c = make_node(1), make_node(2), make_node(3)
        oracle = ConstantOracle(True)
        run_pairwise(b, c, oracle, 1, ORIGINAL)
        calls = oracle.calls
        run_pairwise(a, b, oracle, 2, ORIGINAL)
        assert oracle.calls - calls == 2  # a<->b only
        assert trusts(a, c)

    def test_heterogeneous_bridging(self):
        a = make_node(1, protocols=(1,))
        b = make_node(2, protocols=(1, 2))
        c = make_node(3, protocols=(2,))
        assert run_pairwise(a, c, OK, 1, ORIGINAL).failure == "incompatible-protocols"
        assert run_pairwise(c, a, OK, 1, ORIGINAL).failure == "incompatible-protocols"
        run_pairwise(b, c, OK, 2, ORIGINAL)
        run_pairwise(a, b, OK, 3, ORIGINAL)
        assert trusts(a, c)
        run_pairwise(b, c, OK, 4, ORIGINAL)
        assert trusts(c, a)

    def test_offline_bridging(self):
        a, b, c = make_node(1), make_node(2), make_node(3)
        run_pairwise(b, c, OK, 1, ORIGINAL)
        offline = UnreachableOracle(OK, [c.id])
        assert run_pairwise(a, c, offline, 2, ORIGINAL).failure == "attestation-failed"
        run_pairwise(a, b, offline, 3, ORIGINAL)
        assert trusts(a, c)

    def test_signed_entries_unchanged_without_extension(self):
        a, b = make_node(1), make_node(2)
        run_pairwise(a, b, OK, 1, ORIGINAL)
        got = a.store.get(b.id)[0]
        assert isinstance(got, TrustEntry) and not got.signed
