"""Small synthetic task graphs for tests, demos and the acceptance suite."""
from __future__ import annotations

import numpy as np

from .taskgraph import TaskGraph, make_graph


def chain_graph(n: int, volume: int = 1, compute: int = 0) -> TaskGraph:
    return make_graph(n, [(i, i + 1, volume) for i in range(n - 1)], [compute] * n)


def ring_graph(n: int, volume: int = 1) -> TaskGraph:
    """Chain closed by a back edge; the back edge is the only non-forward-order edge."""
    return make_graph(n, [(i, (i + 1) % n, volume) for i in range(n)])


def random_dag(
    n: int,
    seed: int,
    edge_prob: float = 0.5,
    max_bytes: int = 100,
    max_compute: int = 0,
) -> TaskGraph:
    """Random DAG with edges i -> j (i < j) and integer volumes in [1, max_bytes].

    A chain backbone keeps the graph connected.
    """
    rng = np.random.default_rng(seed)
    edges = []
    for j in range(1, n):
        parents = [i for i in range(j) if rng.random() < edge_prob]
        if not parents:
            parents = [j - 1]
        for i in parents:
            edges.append((i, j, int(rng.integers(1, max_bytes + 1))))
    compute = rng.integers(0, max_compute + 1, size=n) if max_compute else np.zeros(n, dtype=int)
    return make_graph(n, edges, compute.tolist())
