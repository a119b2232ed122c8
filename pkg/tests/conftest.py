from pathlib import Path

import numpy as np
import pytest

from moe_replica.trace import LoadTrace, load_trace

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def toy4_trace() -> LoadTrace:
    # 4 layers x 8 experts, 16 tokens per layer: two moderately skewed layers,
    # one highly skewed layer (expert 6 carries half the load), one uniform layer
    return load_trace(FIXTURES / "toy4.json")


@pytest.fixture
def hot_trace() -> LoadTrace:
    counts = np.ones((32, 1, 8), dtype=np.int64)
    counts[:, 0, 0] = 60
    return LoadTrace(counts)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_report():
    def report(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
