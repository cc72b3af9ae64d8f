import io

import pytest

from manetsim import ScenarioConfig, Simulation


def static_config(n: int, protocol: str = "aodv", seed: int = 1, **overrides) -> ScenarioConfig:
    return ScenarioConfig().with_(
        sim__node_count=n, sim__v_min=0.0, sim__v_max=0.0,
        sim__protocol=protocol, sim__seed=seed, **overrides,
    )


def static_sim(positions, protocol="aodv", seed=1, traces=None, **overrides) -> Simulation:
    """Simulation with nodes pinned at ``positions`` (no motion)."""
    cfg = static_config(len(positions), protocol, seed, **overrides)
    return Simulation(cfg, positions=positions, traces=traces)


def line(n: int, spacing: float, y: float = 400.0):
    return [(10.0 + i * spacing, y) for i in range(n)]


@pytest.fixture
def trace_buffers():
    return {"events": io.StringIO(), "routing": io.StringIO()}


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for text in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(text)
