"""2D-mesh topology, clockwise minimal routing and closed-form placement metrics.

Coordinates are ``(x, y)`` with the origin in the top-left corner, ``+x`` east
and ``+y`` south.  Every route is minimal: at each router the packet takes the
first productive direction in the clockwise order N, E, S, W.
"""
from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Mapping

import numpy as np

from .taskgraph import ModelSpecError, TaskGraph

# clockwise from due north
DIRECTIONS = ("N", "E", "S", "W")
STEP = {"N": (0, -1), "E": (1, 0), "S": (0, 1), "W": (-1, 0)}
# port index used by directional load arrays: left, right, up, down
PORT_NAMES = ("left", "right", "up", "down")
PORT_OF = {"W": 0, "E": 1, "N": 2, "S": 3}


class PlacementError(ValueError):
    pass


@dataclass(frozen=True)
class Mesh:
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"mesh must be at least 1x1, got {self.width}x{self.height}")

    @property
    def n_cores(self) -> int:
        return self.width * self.height

    def contains(self, xy) -> bool:
        x, y = xy
        return 0 <= x < self.width and 0 <= y < self.height

    def cells(self) -> list[tuple[int, int]]:
        """All coordinates in row-major order."""
        return [(x, y) for y in range(self.height) for x in range(self.width)]

    def neighbors(self, xy) -> list[tuple[int, int]]:
        x, y = xy
        out = []
        for d in DIRECTIONS:
            dx, dy = STEP[d]
            if self.contains((x + dx, y + dy)):
                out.append((x + dx, y + dy))
        return out

    @classmethod
    def parse(cls, text: str) -> "Mesh":
        """``"4x8"`` -> Mesh(4, 8)."""
        try:
            w, h = text.lower().replace("×", "x").split("x")
            return cls(int(w), int(h))
        except ValueError as exc:
            raise ValueError(f"mesh must look like WxH, got {text!r}") from exc

    def __str__(self) -> str:
        return f"{self.width}x{self.height}"


@dataclass(frozen=True)
class Route:
    src: tuple[int, int]
    dst: tuple[int, int]
    hops: tuple[str, ...]

    def cells(self) -> list[tuple[int, int]]:
        """Routers visited, source first, destination last."""
        x, y = self.src
        out = [(x, y)]
        for d in self.hops:
            dx, dy = STEP[d]
            x, y = x + dx, y + dy
            out.append((x, y))
        return out


def hops(src, dst) -> int:
    return abs(src[0] - dst[0]) + abs(src[1] - dst[1])


@lru_cache(maxsize=1 << 16)
def _route_dirs(sx: int, sy: int, tx: int, ty: int) -> tuple[str, ...]:
    path = []
    x, y = sx, sy
    while (x, y) != (tx, ty):
        for d in DIRECTIONS:
            dx, dy = STEP[d]
            if abs(x + dx - tx) + abs(y + dy - ty) < abs(x - tx) + abs(y - ty):
                path.append(d)
                x, y = x + dx, y + dy
                break
    return tuple(path)


def route(mesh: Mesh, src, dst) -> Route:
    if not mesh.contains(src) or not mesh.contains(dst):
        raise ValueError(f"route endpoints {src}->{dst} outside {mesh}")
    src = (int(src[0]), int(src[1]))
    dst = (int(dst[0]), int(dst[1]))
    return Route(src, dst, _route_dirs(*src, *dst))


class Placement:
    """Injective map from task-graph node id to mesh coordinate."""

    def __init__(self, mesh: Mesh, assign: Mapping[int, tuple[int, int]]):
        self.mesh = mesh
        self.assign = {int(k): (int(v[0]), int(v[1])) for k, v in assign.items()}
        if len(self.assign) > mesh.n_cores:
            raise PlacementError(f"{len(self.assign)} nodes do not fit on a {mesh} mesh ({mesh.n_cores} cores)")
        for node, xy in self.assign.items():
            if not mesh.contains(xy):
                raise PlacementError(f"node {node} placed out of bounds at {xy} on {mesh}")
        if len(set(self.assign.values())) != len(self.assign):
            dup = [xy for xy, c in Counter(self.assign.values()).items() if c > 1]
            raise PlacementError(f"placement is not injective: cells {dup} used more than once")

    @classmethod
    def from_array(cls, mesh: Mesh, xy: np.ndarray) -> "Placement":
        return cls(mesh, {i: (int(p[0]), int(p[1])) for i, p in enumerate(xy)})

    def coords(self, n: int) -> np.ndarray:
        """(n, 2) int array for nodes 0..n-1; raises naming the first unplaced node."""
        out = np.empty((n, 2), dtype=np.int64)
        for i in range(n):
            if i not in self.assign:
                raise PlacementError(f"node {i} is not placed")
            out[i] = self.assign[i]
        return out

    def __getitem__(self, node: int) -> tuple[int, int]:
        return self.assign[node]

    def __len__(self) -> int:
        return len(self.assign)

    def __eq__(self, other) -> bool:
        return isinstance(other, Placement) and self.mesh == other.mesh and self.assign == other.assign

    def __repr__(self) -> str:
        return f"Placement({self.mesh}, {self.assign})"

    def to_dict(self) -> dict:
        return {
            "mesh": [self.mesh.width, self.mesh.height],
            "assign": {str(k): list(self.assign[k]) for k in sorted(self.assign)},
        }

    @classmethod
    def from_dict(cls, doc: dict, source: str = "<placement>") -> "Placement":
        for name in ("mesh", "assign"):
            if name not in doc:
                raise ModelSpecError(f"{source}: missing required field {name!r}")
        w, h = doc["mesh"]
        try:
            return cls(Mesh(int(w), int(h)), {int(k): tuple(v) for k, v in doc["assign"].items()})
        except PlacementError as exc:
            raise ModelSpecError(f"{source}: {exc}") from None


def save_placement(p: Placement, path: str | Path) -> None:
    Path(path).write_text(json.dumps(p.to_dict(), indent=1) + "\n")


def load_placement(path: str | Path) -> Placement:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ModelSpecError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return Placement.from_dict(doc, str(path))


def _edge_hops(graph: TaskGraph, xy: np.ndarray) -> np.ndarray:
    src, dst, _ = graph.edge_arrays
    if len(src) == 0:
        return np.zeros(0, dtype=np.int64)
    return np.abs(xy[src] - xy[dst]).sum(axis=1)


def cost_from_coords(graph: TaskGraph, xy: np.ndarray) -> int:
    """Communication cost for an (n, 2) coordinate array; the hot path of every engine."""
    _, _, vol = graph.edge_arrays
    return int(np.dot(vol, _edge_hops(graph, xy)))


def communication_cost(graph: TaskGraph, placement: Placement) -> int:
    """Sum over edges of bytes times hop distance (intra-core edges cost 0)."""
    return cost_from_coords(graph, placement.coords(graph.n))


@dataclass
class DirectionalLoad:
    """Outgoing bytes per core and port, array shape (height, width, 4) in PORT_NAMES order."""

    volume: np.ndarray

    @property
    def left(self) -> np.ndarray:
        return self.volume[..., 0]

    @property
    def right(self) -> np.ndarray:
        return self.volume[..., 1]

    @property
    def up(self) -> np.ndarray:
        return self.volume[..., 2]

    @property
    def down(self) -> np.ndarray:
        return self.volume[..., 3]

    def per_core(self) -> np.ndarray:
        """Total forwarded bytes per core, shape (height, width)."""
        return self.volume.sum(axis=-1)

    def total(self) -> int:
        return int(self.volume.sum())


def directional_loads(graph: TaskGraph, placement: Placement, mesh: Mesh | None = None) -> DirectionalLoad:
    mesh = mesh or placement.mesh
    xy = placement.coords(graph.n)
    vol = np.zeros((mesh.height, mesh.width, 4), dtype=np.int64)
    for e in graph.edges:
        r = route(mesh, tuple(xy[e.src]), tuple(xy[e.dst]))
        x, y = r.src
        for d in r.hops:
            vol[y, x, PORT_OF[d]] += e.bytes
            dx, dy = STEP[d]
            x, y = x + dx, y + dy
    return DirectionalLoad(vol)


def hop_histogram(graph: TaskGraph, placement: Placement) -> dict:
    """Hop-count distribution over edges plus edge- and bytes-weighted means."""
    h = _edge_hops(graph, placement.coords(graph.n))
    _, _, vol = graph.edge_arrays
    counts = Counter(int(v) for v in h)
    total = int(vol.sum())
    return {
        "histogram": dict(sorted(counts.items())),
        "mean_hops": float(h.mean()) if len(h) else 0.0,
        "mean_hops_bytes": float(np.dot(vol, h) / total) if total else 0.0,
    }


def heatmap_csv(grid: np.ndarray) -> str:
    """One CSV row per y; cell = bytes forwarded by that core."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in np.asarray(grid):
        writer.writerow([int(v) for v in row])
    return buf.getvalue()


def write_heatmap(grid: np.ndarray, path: str | Path) -> None:
    Path(path).write_text(heatmap_csv(grid))


def read_heatmap(path: str | Path) -> np.ndarray:
    with open(path, newline="") as f:
        return np.array([[int(v) for v in row] for row in csv.reader(f) if row], dtype=np.int64)
