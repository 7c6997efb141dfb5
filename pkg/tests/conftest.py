import numpy as np
import pytest

from ridepool.chrouting import build_ch
from ridepool.netgraph import RoadGraph
from ridepool.synth import grid_city


def path_graph(weights=(1, 1), kind="vehicle"):
    """a -> b -> c ... with the given edge weights."""
    n = len(weights) + 1
    return RoadGraph(kind, [chr(ord("a") + i) for i in range(n)], np.zeros(n), np.arange(n) * 1e-3,
                     list(range(n - 1)), list(range(n - 1)), list(range(1, n)), list(weights))


@pytest.fixture(scope="session")
def small_city():
    road, ped = grid_city(10, 10, seed=7)
    return road, ped, build_ch(road)


@pytest.fixture(scope="session")
def mid_city():
    road, ped = grid_city(20, 20, seed=11)
    return road, ped, build_ch(road)


ACCEPTANCE_LINES: list[str] = []


def acceptance(number: int, ok: bool, detail: str) -> bool:
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
