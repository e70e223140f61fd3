"""Undirected agent graphs and their spectral matrices.

All consensus and adaptive machinery consumes the matrices cached here:
degree, adjacency, incidence, Laplacian, and the Laplacian pseudoinverse.
Graphs are immutable after construction and safe to share across threads.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np


class InvalidEdge(ValueError):
    """Edge endpoint out of range, or a self-loop."""


class DisconnectedGraph(ValueError):
    """Construction rejects disconnected graphs; every downstream result assumes connectivity."""


class AllZeroK(ValueError):
    """Regularizing diag(k) needs at least one strictly positive entry."""


# Relative cutoff separating the structural zero eigenvalue from the rest.
_NULLSPACE_RTOL = 1e-10


@dataclass(frozen=True)
class Graph:
    """Connected undirected graph with cached matrix representations.

    Edges are stored 0-indexed and sorted; the construction API speaks
    1-indexed pairs to match scenario files.
    """

    node_count: int
    edges: tuple[tuple[int, int], ...]
    degree: np.ndarray = field(repr=False)
    adjacency: np.ndarray = field(repr=False)
    incidence: np.ndarray = field(repr=False)
    laplacian: np.ndarray = field(repr=False)
    laplacian_pinv: np.ndarray = field(repr=False)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def neighbors(self, i: int) -> np.ndarray:
        """0-indexed neighbor list of node i (0-indexed)."""
        return np.flatnonzero(self.adjacency[i])


def build_graph(node_count: int, edges) -> Graph:
    """Build a connected undirected graph from 1-indexed node pairs.

    Duplicate edges collapse; self-loops and out-of-range endpoints raise
    InvalidEdge; a disconnected result raises DisconnectedGraph.
    """
    if node_count < 2:
        raise InvalidEdge(f"need at least 2 nodes, got {node_count}")
    canonical = set()
    for pair in edges:
        i, j = int(pair[0]), int(pair[1])
        if i == j:
            raise InvalidEdge(f"self-loop at node {i}")
        if not (1 <= i <= node_count and 1 <= j <= node_count):
            raise InvalidEdge(f"edge ({i},{j}) out of range 1..{node_count}")
        canonical.add((min(i, j) - 1, max(i, j) - 1))
    edge_list = tuple(sorted(canonical))

    n, m = node_count, len(edge_list)
    adjacency = np.zeros((n, n))
    incidence = np.zeros((n, m))
    for col, (i, j) in enumerate(edge_list):
        adjacency[i, j] = adjacency[j, i] = 1.0
        # Orientation is arbitrary for L = B B^T; fix +1 at the lower index
        # so builds are deterministic.
        incidence[i, col] = 1.0
        incidence[j, col] = -1.0
    degree = np.diag(adjacency.sum(axis=1))
    laplacian = degree - adjacency

    if not _connected(adjacency):
        raise DisconnectedGraph(f"graph with {n} nodes and {m} edges is not connected")

    return Graph(
        node_count=n,
        edges=edge_list,
        degree=degree,
        adjacency=adjacency,
        incidence=incidence,
        laplacian=laplacian,
        laplacian_pinv=_pinv_symmetric(laplacian),
    )


def laplacian_pinv(g: Graph) -> np.ndarray:
    """Moore-Penrose pseudoinverse of the graph Laplacian.

    Satisfies L L^+ = I - (1/N) 1 1^T on connected graphs.
    """
    return g.laplacian_pinv


def regularized_laplacian(g: Graph, k) -> np.ndarray:
    """L + diag(k); positive definite once any k_i > 0 on a connected graph."""
    k = np.asarray(k, dtype=float)
    if k.shape != (g.node_count,):
        raise ValueError(f"k must have length {g.node_count}, got shape {k.shape}")
    if np.any(k < 0):
        raise ValueError("k must be entrywise nonnegative")
    if not np.any(k > 0):
        raise AllZeroK("at least one entry of k must be strictly positive")
    return g.laplacian + np.diag(k)


def _connected(adjacency: np.ndarray) -> bool:
    n = adjacency.shape[0]
    seen = np.zeros(n, dtype=bool)
    queue = deque([0])
    seen[0] = True
    while queue:
        i = queue.popleft()
        for j in np.flatnonzero(adjacency[i]):
            if not seen[j]:
                seen[j] = True
                queue.append(j)
    return bool(seen.all())


def _pinv_symmetric(mat: np.ndarray) -> np.ndarray:
    """Pseudoinverse via eigendecomposition, thresholding the known nullspace."""
    eigvals, eigvecs = np.linalg.eigh(mat)
    cutoff = _NULLSPACE_RTOL * eigvals[-1]
    inv = np.where(eigvals > cutoff, 1.0 / np.where(eigvals > cutoff, eigvals, 1.0), 0.0)
    return (eigvecs * inv) @ eigvecs.T
