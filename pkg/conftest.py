from itertools import combinations

import networkx as nx
import pytest

from graphs import build_custom, build_cycle, build_torus, build_tree_ball


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: larger Monte Carlo runs (deselect with -m 'not slow')")


def path_graph(n):
    return build_custom(n, [(i, i + 1) for i in range(n - 1)])


def lollipop(clique=6, tail=6):
    """K_clique with a path of `tail` extra vertices hanging off its last vertex."""
    edges = list(combinations(range(clique), 2))
    edges += [(clique - 1 + i, clique + i) for i in range(tail)]
    return build_custom(clique + tail, edges)


def to_networkx(g):
    G = nx.Graph()
    G.add_nodes_from(range(g.vertex_count))
    G.add_edges_from(g.edges.tolist())
    return G


@pytest.fixture
def cycle8():
    return build_cycle(8)


@pytest.fixture
def torus33():
    return build_torus([3, 3])


@pytest.fixture
def small_tree():
    return build_tree_ball(3, 4)


@pytest.fixture
def lollipop66():
    return lollipop(6, 6)
