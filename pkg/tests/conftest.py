import ipaddress
import socket
from pathlib import Path

import numpy as np
import pytest

from feedbacklab.analysis import TermVector
from feedbacklab.index import index_from_vectors

TOY = Path(__file__).parent / "fixtures" / "toy"

_real_connect = socket.socket.connect
_real_connect_ex = socket.socket.connect_ex


def _is_loopback(address):
    if isinstance(address, tuple):
        host = address[0]
    else:
        return True  # AF_UNIX
    if host in ("localhost",):
        return True
    try:
        return ipaddress.ip_address(host).is_loopback
    except ValueError:
        return False


class NetworkBlocked(OSError):
    pass


def _guarded_connect(self, address):
    if not _is_loopback(address):
        raise NetworkBlocked(f"network access blocked in tests: {address!r}")
    return _real_connect(self, address)


def _guarded_connect_ex(self, address):
    if not _is_loopback(address):
        raise NetworkBlocked(f"network access blocked in tests: {address!r}")
    return _real_connect_ex(self, address)


@pytest.fixture(autouse=True)
def no_network(monkeypatch):
    """Only loopback connections are allowed anywhere in the suite."""
    monkeypatch.setattr(socket.socket, "connect", _guarded_connect)
    monkeypatch.setattr(socket.socket, "connect_ex", _guarded_connect_ex)


@pytest.fixture
def toy_dir():
    return TOY


def random_vectors(rng, n_docs, vocab_size, max_len=40):
    """Random documents as term vectors over a ``t0..t{vocab_size-1}`` vocabulary (Zipf-ish draws)."""
    probs = 1.0 / np.arange(1, vocab_size + 1)
    probs /= probs.sum()
    vocab = np.array([f"t{i}" for i in range(vocab_size)])
    out = {}
    for i in range(n_docs):
        length = int(rng.integers(1, max_len + 1))
        terms = rng.choice(vocab, size=length, p=probs)
        counts = {}
        for t in terms:
            counts[str(t)] = counts.get(str(t), 0) + 1
        out[f"doc{i:04d}"] = TermVector(counts)
    return out


def random_index(rng, n_docs, vocab_size, max_len=40):
    vectors = random_vectors(rng, n_docs, vocab_size, max_len)
    return index_from_vectors(vectors), vectors


def random_tokens(rng, vocab_size, length, prefix="t"):
    return [f"{prefix}{int(i)}" for i in rng.integers(0, vocab_size, size=length)]


_acceptance = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _acceptance.append((report.nodeid.split("::")[-1], report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _acceptance:
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{status}  {name}")
