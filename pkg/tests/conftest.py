from pathlib import Path

import pytest

from s2rqa.execution_model import build_graph, parse_trace
from s2rqa.llm_gateway import Gateway, ModelConfig

from oracles import ACCEPTANCE

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"



@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def trace_paths() -> list[Path]:
    return sorted((FIXTURES / "traces").glob("*.json"))


@pytest.fixture(scope="session")
def mileage_graph(trace_paths):
    return build_graph([parse_trace(p) for p in trace_paths])


@pytest.fixture
def gateway() -> Gateway:
    return Gateway(ModelConfig())


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, desc = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {desc}")
