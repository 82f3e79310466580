"""Baseline placement engines, the clockwise ring conflict resolver and an exhaustive oracle."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .mesh import Mesh, Placement, PlacementError, cost_from_coords
from .taskgraph import TaskGraph

ENGINES = ("zigzag", "snake", "random", "oracle")
ORACLE_LIMIT = 10**7


@dataclass(frozen=True)
class EngineConfig:
    engine: str = "zigzag"
    seed: int = 0
    iterations: int = 1000

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ValueError(f"engine must be one of {ENGINES}, got {self.engine!r}")
        if self.engine == "random" and self.iterations < 1:
            raise ValueError("random search needs iterations >= 1")


def _check_fits(n: int, mesh: Mesh) -> None:
    if n > mesh.n_cores:
        raise PlacementError(f"{n} logical cores do not fit on a {mesh} mesh ({mesh.n_cores} physical cores)")


def zigzag_coords(n: int, mesh: Mesh) -> np.ndarray:
    _check_fits(n, mesh)
    k = np.arange(n)
    return np.stack([k % mesh.width, k // mesh.width], axis=1)


def snake_coords(n: int, mesh: Mesh) -> np.ndarray:
    _check_fits(n, mesh)
    k = np.arange(n)
    row = k // mesh.width
    col = np.where(row % 2 == 0, k % mesh.width, mesh.width - 1 - k % mesh.width)
    return np.stack([col, row], axis=1)


def place_zigzag(graph: TaskGraph, mesh: Mesh) -> Placement:
    """Row-major fill from the top-left corner."""
    return Placement.from_array(mesh, zigzag_coords(graph.n, mesh))


def place_snake(graph: TaskGraph, mesh: Mesh) -> Placement:
    """Serpentine fill: even rows left to right, odd rows right to left."""
    return Placement.from_array(mesh, snake_coords(graph.n, mesh))


def place_random_search(graph: TaskGraph, mesh: Mesh, config: EngineConfig) -> tuple[Placement, list[int]]:
    """Uniform random injective placements; keep the cheapest.

    Returns the argmin and the best-so-far cost after each sample.
    """
    _check_fits(graph.n, mesh)
    if config.iterations < 1:
        raise ValueError("iterations must be >= 1")
    rng = np.random.default_rng(config.seed)
    W = mesh.width
    best_cost = None
    best_xy = None
    trace = []
    for _ in range(config.iterations):
        cells = rng.permutation(mesh.n_cores)[: graph.n]
        xy = np.stack([cells % W, cells // W], axis=1)
        c = cost_from_coords(graph, xy)
        if best_cost is None or c < best_cost:
            best_cost, best_xy = c, xy
        trace.append(best_cost)
    return Placement.from_array(mesh, best_xy), trace


def place_oracle(graph: TaskGraph, mesh: Mesh, limit: int = ORACLE_LIMIT) -> Placement:
    """Exhaustive minimum-cost placement.

    Ties go to the lexicographically smallest sequence of row-major cell indices
    (node 0's cell first).
    """
    n = graph.n
    _check_fits(n, mesh)
    count = math.perm(mesh.n_cores, n)
    if count > limit:
        raise ValueError(f"oracle needs {count} placements, above the limit of {limit}")
    if n == 0:
        return Placement(mesh, {})
    src, dst, vol = graph.edge_arrays
    cx = np.arange(mesh.n_cores) % mesh.width
    cy = np.arange(mesh.n_cores) // mesh.width
    dist = np.abs(cx[:, None] - cx[None, :]) + np.abs(cy[:, None] - cy[None, :])
    best_cost = None
    best_perm = None
    perms = itertools.permutations(range(mesh.n_cores), n)
    chunk = 200_000
    while True:
        block = np.fromiter(
            itertools.chain.from_iterable(itertools.islice(perms, chunk)), dtype=np.int64
        ).reshape(-1, n)
        if block.size == 0:
            break
        if len(src):
            costs = (dist[block[:, src], block[:, dst]] * vol).sum(axis=1)
        else:
            costs = np.zeros(len(block), dtype=np.int64)
        i = int(np.argmin(costs))  # first minimum == lexicographically smallest in this block
        if best_cost is None or costs[i] < best_cost:
            best_cost, best_perm = int(costs[i]), block[i].copy()
    return Placement.from_array(mesh, np.stack([cx[best_perm], cy[best_perm]], axis=1))


def ring(center: tuple[int, int], d: int) -> list[tuple[int, int]]:
    """Cells at Manhattan distance ``d``, starting due north and walking clockwise."""
    x, y = center
    if d == 0:
        return [(x, y)]
    out = []
    for i in range(d):
        out.append((x + i, y - d + i))  # N -> E
    for i in range(d):
        out.append((x + d - i, y + i))  # E -> S
    for i in range(d):
        out.append((x - i, y + d - i))  # S -> W
    for i in range(d):
        out.append((x - d + i, y - i))  # W -> N
    return out


def traffic_priority(graph: TaskGraph) -> list[int]:
    """Heaviest total traffic first, ties by node id."""
    return sorted(range(graph.n), key=lambda i: (-(graph.nodes[i].bytes_in + graph.nodes[i].bytes_out), i))


def resolve_conflicts(
    targets: Mapping[int, tuple[int, int]],
    priorities: Sequence[int],
    mesh: Mesh,
) -> Placement:
    """Turn possibly colliding targets into an injective placement.

    Nodes are served in ``priorities`` order; a node whose target is taken
    gets the first free cell on the nearest clockwise ring around it.
    """
    order = list(priorities)
    if sorted(order) != sorted(targets):
        raise ValueError("priorities must be a total order over the target nodes")
    _check_fits(len(order), mesh)
    taken = np.zeros((mesh.height, mesh.width), dtype=bool)
    out: dict[int, tuple[int, int]] = {}
    max_d = mesh.width + mesh.height
    for node in order:
        tx, ty = targets[node]
        if not mesh.contains((tx, ty)):
            raise PlacementError(f"target {(tx, ty)} of node {node} outside {mesh}")
        cell = None
        for d in range(max_d + 1):
            for cx, cy in ring((tx, ty), d):
                if 0 <= cx < mesh.width and 0 <= cy < mesh.height and not taken[cy, cx]:
                    cell = (cx, cy)
                    break
            if cell is not None:
                break
        taken[cell[1], cell[0]] = True
        out[node] = cell
    return Placement(mesh, out)


def resolve_array(targets: np.ndarray, order: Sequence[int], mesh: Mesh, rings: list | None = None) -> np.ndarray:
    """Array form of :func:`resolve_conflicts` for the RL sampling loop.

    ``rings`` may hold precomputed ring offsets (see :func:`ring_offsets`).
    """
    W, H = mesh.width, mesh.height
    rings = rings if rings is not None else ring_offsets(mesh)
    taken = np.zeros(H * W, dtype=bool)
    out = np.empty_like(targets)
    for node in order:
        tx, ty = int(targets[node, 0]), int(targets[node, 1])
        idx = ty * W + tx
        if not taken[idx]:
            taken[idx] = True
            out[node] = (tx, ty)
            continue
        for dx, dy in rings:
            cx, cy = tx + dx, ty + dy
            if 0 <= cx < W and 0 <= cy < H and not taken[cy * W + cx]:
                taken[cy * W + cx] = True
                out[node] = (cx, cy)
                break
    return out


def ring_offsets(mesh: Mesh) -> list[tuple[int, int]]:
    """Concatenated ring offsets for d = 1 .. W+H in scan order."""
    offs = []
    for d in range(1, mesh.width + mesh.height + 1):
        offs.extend(ring((0, 0), d))
    return offs


def place(graph: TaskGraph, mesh: Mesh, config: EngineConfig) -> tuple[Placement, list[int] | None]:
    """Dispatch on ``config.engine``; the trace is only returned by random search."""
    if config.engine == "zigzag":
        return place_zigzag(graph, mesh), None
    if config.engine == "snake":
        return place_snake(graph, mesh), None
    if config.engine == "random":
        return place_random_search(graph, mesh, config)
    return place_oracle(graph, mesh), None
