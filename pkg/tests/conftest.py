import warnings

import numpy as np
import pytest

from rggstein import GospaParams, SpatialGraph, Window
from rggstein.point_process import PointPattern

warnings.filterwarnings("ignore", message=".*TBB.*")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def unit2():
    return Window.unit(2)


def random_graph(g: np.random.Generator, n: int, d: int = 2, p: float = 0.5,
                 spread: float = 1.0) -> SpatialGraph:
    pts = g.random((n, d)) * spread
    adj = np.triu(g.random((n, n)) < p, 1)
    return SpatialGraph.from_adjacency(PointPattern(pts, d=d), adj | adj.T)


def metric_params(g: np.random.Generator) -> GospaParams:
    """Random caps, variant and edge metric."""
    return GospaParams.make(float(g.uniform(0.2, 2.0)), float(g.uniform(0.2, 2.0)),
                            int(g.integers(1, 3)),
                            "indicator" if g.random() < 0.5 else "endpoint-aware")


# one line per acceptance criterion, filled by tests/test_acceptance.py
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
