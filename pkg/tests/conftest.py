"""Shared fixtures and independent oracles used across the test suite."""

import numpy as np
import pytest

from pangraph.graph import CsrGraph, graph_from_edges

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def p2() -> CsrGraph:
    """Single edge 0-1."""
    return graph_from_edges([(0, 1)], 2)


@pytest.fixture
def p3() -> CsrGraph:
    """Path 0-1-2."""
    return graph_from_edges([(0, 1), (1, 2)], 3)


@pytest.fixture
def k3() -> CsrGraph:
    """Triangle."""
    return graph_from_edges([(0, 1), (1, 2), (0, 2)], 3)


@pytest.fixture
def s3() -> CsrGraph:
    """Star: center 0 with leaves 1..3."""
    return graph_from_edges([(0, 1), (0, 2), (0, 3)], 4)


def random_graph(rng: np.random.Generator, n: int, p: float,
                 features: int = 0, label: int = 0,
                 connected: bool = False) -> CsrGraph:
    """Erdos-Renyi G(n, p); optionally chained into one component."""
    edges = [(i, j) for i in range(n) for j in range(i + 1, n)
             if rng.random() < p]
    if connected:
        edges += [(i, i + 1) for i in range(n - 1)]
    feats = rng.standard_normal((n, features)) if features else None
    return graph_from_edges(sorted(set(edges)), n, feats, label=label)


def dfs_walk_count(dense_adj: np.ndarray, i: int, j: int, n: int) -> int:
    """Brute-force count of length-n walks i -> j by depth-first expansion."""
    if n == 0:
        return int(i == j)
    total = 0
    for k in np.nonzero(dense_adj[i])[0]:
        total += dfs_walk_count(dense_adj, int(k), j, n - 1)
    return total


def gcn_reference(a: np.ndarray, x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """D~^{-1/2} (I + A) D~^{-1/2} X W with D~ = D + I."""
    a_tilde = a + np.eye(a.shape[0])
    d = np.diag(1.0 / np.sqrt(a_tilde.sum(axis=1)))
    return d @ a_tilde @ d @ x @ w
