"""Shared fixtures: scripts/ on sys.path, seeded generators and small graphs."""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent / "scripts"))

from graph_core import BipartiteGraph  # noqa: E402


def binomial_slack(p: float, trials: int, sigmas: float = 4.0) -> float:
    """sigmas standard errors of a Bernoulli(p) frequency over trials draws"""
    return sigmas * float(np.sqrt(max(p * (1.0 - p), 1e-12) / trials))


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture
def make_graph():
    """Build a graph from an adjacency list: make_graph(offline_count, [[u, ...], ...])"""
    def build(offline_count, adjacency):
        return BipartiteGraph(offline_count, len(adjacency), tuple(tuple(sorted(row)) for row in adjacency))
    return build


@pytest.fixture
def complete_2x2(make_graph):
    return make_graph(2, [[0, 1], [0, 1]])


@pytest.fixture
def split_graph(make_graph):
    """v0 - {u0, u1}, v1 - {u2}"""
    return make_graph(3, [[0, 1], [2]])
