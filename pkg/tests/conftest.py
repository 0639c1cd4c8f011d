import numpy as np
import pytest

from trustgossip.core import NodeId, Policy, TrustEntry
from trustgossip.protocol import NodeState

ACCEPTANCE_LINES: list[str] = []


def node_id(i: int) -> NodeId:
    return NodeId(i.to_bytes(8, "big"))


def entry(subject: int, attested_at: int = 1, expires_at: int = 0, criteria: int = 1,
          protocol: int = 1) -> TrustEntry:
    return TrustEntry(node_id(subject), Policy(criteria, attested_at, expires_at, protocol))


def make_node(i: int, protocols=(1,), **kwargs) -> NodeState:
    return NodeState(node_id(i), frozenset(protocols), **kwargs)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
