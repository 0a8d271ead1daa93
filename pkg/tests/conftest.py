import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def write(tmp_path):
    def _write(name, text):
        p = tmp_path / name
        p.write_text(text)
        return p

    return _write


def chain_data(S=10, N=2000, rho=0.4, seed=0):
    from gameseg.dataset import precision_from_support

    theta = precision_from_support(S, {(i, i + 1) for i in range(S - 1)}, rho)
    L = np.linalg.cholesky(np.linalg.inv(theta))
    rng = np.random.default_rng(seed)
    return rng.standard_normal((N, S)) @ L.T


_ACCEPTANCE: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line per acceptance criterion (``ok=None`` is SKIP)."""

    def _record(name, ok, detail=""):
        status = "SKIP" if ok is None else "PASS" if ok else "FAIL"
        line = f"{status} {name}: {detail}" if detail else f"{status} {name}"
        _ACCEPTANCE.append(line)
        print(line)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
