import numpy as np
import pytest

from cfaging.scenario import ScenarioConfig, desk_config


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_cfg():
    return desk_config(M=8, K=3, pilot_len=3, frame_len=64)


@pytest.fixture
def paper_cfg():
    return ScenarioConfig()


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line per acceptance criterion; shown in the terminal summary."""
    def _report(number, title, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}" + (f" | {detail}" if detail else "")
        _ACCEPTANCE_LINES.append(line)
        print(line)
    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
