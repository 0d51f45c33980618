import numpy as np
import pytest

from magnetodecay.geometry import Domain
from magnetodecay.material import Material

ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, title: str, ok: bool, detail: str) -> str:
    line = f"acceptance {number:2d} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def ball():
    return Domain.from_spec({"family": "ball", "params": {"radius": 1.0}})


@pytest.fixture(scope="session")
def quartic():
    return Domain.from_spec({"family": "superquadric", "params": {"exponents": [2, 1, 1]}})


@pytest.fixture
def material():
    return Material(lam=1.0, mu=1.0, B=(1.0, 0.0, 0.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
