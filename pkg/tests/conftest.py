import numpy as np
import pytest

from sinkflow.dataio import FlowData, SyntheticSpec, generate_synthetic

# doubly stochastic, non-symmetric; a stationary target the Sinkhorn head can represent
KERNEL4 = np.array(
    [
        [0.80, 0.10, 0.05, 0.05],
        [0.05, 0.75, 0.15, 0.05],
        [0.10, 0.05, 0.70, 0.15],
        [0.05, 0.10, 0.10, 0.75],
    ]
)

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_synthetic():
    spec = SyntheticSpec(k=4, N=2000, T=60, kernel=KERNEL4.tolist(), seed=7, initial=[0.4, 0.3, 0.2, 0.1])
    tl = generate_synthetic(spec)
    return tl, FlowData.from_timeline(tl)


@pytest.fixture
def record_acceptance():
    def _record(name, ok, detail=""):
        ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
