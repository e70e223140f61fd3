import numpy as np
import pytest

from apnet.graph import build_graph


def random_connected_graph(rng, n=None, max_nodes=20):
    """Random spanning tree plus extra edges; always connected."""
    if n is None:
        n = int(rng.integers(2, max_nodes + 1))
    edges = set()
    order = rng.permutation(n) + 1
    for k in range(1, n):
        j = int(order[int(rng.integers(0, k))])
        edges.add((min(j, int(order[k])), max(j, int(order[k]))))
    extra = int(rng.integers(0, n))
    for _ in range(extra):
        i, j = rng.integers(1, n + 1, size=2)
        if i != j:
            edges.add((min(i, j), max(i, j)))
    return build_graph(n, sorted(edges))


@pytest.fixture
def path2():
    return build_graph(2, [(1, 2)])


@pytest.fixture
def path3():
    return build_graph(3, [(1, 2), (2, 3)])


@pytest.fixture
def six_agent_graph():
    # sparse connected layout used by the consensus scenarios
    return build_graph(6, [(1, 2), (1, 3), (2, 3), (3, 4), (4, 5), (4, 6), (5, 6)])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
