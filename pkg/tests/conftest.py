import numpy as np
import pytest

from dpptransfer import _backend

_ACCEPTANCE = []


@pytest.fixture(params=sorted(_backend.IMPLEMENTATIONS))
def core(request):
    """Each available implementation of the hot kernels."""
    return _backend.IMPLEMENTATIONS[request.param]


@pytest.fixture
def rng():
    return np.random.default_rng(20261019)


@pytest.fixture
def acceptance():
    """Records one pass/fail line per acceptance criterion for the terminal summary."""

    def record(number, name, passed, detail=""):
        _ACCEPTANCE.append((number, name, bool(passed), detail))
        return passed

    return record


def random_contraction(rng, n, rank=None, lo=0.05, hi=0.95):
    rank = n if rank is None else rank
    V, _ = np.linalg.qr(rng.standard_normal((n, rank)))
    lam = rng.uniform(lo, hi, rank)
    return (V * lam) @ V.T


def random_projection(rng, n, rank):
    V, _ = np.linalg.qr(rng.standard_normal((n, rank)))
    return V @ V.T


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, passed, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {number}. {name} {detail}".rstrip())
