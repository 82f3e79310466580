"""Deterministic packet-level NoC and pipeline simulator.

Each logical core runs its work per sample on its physical core.  Output
traffic is cut into chunks that travel the fixed clockwise route
store-and-forward, paying ``ceil(chunk / link_bandwidth)`` cycles on every
link.  Each output port is a FIFO served by (enqueue time, source node id).

``layerwise`` starts a node's work on a sample only when all of its inputs
have arrived.  ``fpdeep`` cuts every node's work into ``1 / tile_fraction``
tiles; tile ``j`` may start once ``(j + 1) * tile_fraction`` of every input
has arrived, and emits the matching share of its outputs when it finishes.
"""
from __future__ import annotations

import csv
import heapq
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mesh import PORT_OF, STEP, Mesh, Placement, heatmap_csv, route
from .taskgraph import TaskGraph

PIPELINES = ("layerwise", "fpdeep")

# event kinds; same-cycle ties resolve in this order
_ARRIVE, _COMPUTE_DONE, _PORT_DONE, _ARBITRATE, _SCHEDULE = range(5)


@dataclass(frozen=True)
class SimConfig:
    link_bandwidth: int = 16
    pipeline: str = "layerwise"
    mode: str = "inference"
    batch_size: int = 8
    tile_fraction: float = 1 / 16
    chunk_bytes: int = 64
    clock_mhz: float | None = None  # only used for reporting

    def __post_init__(self):
        if self.link_bandwidth <= 0:
            raise ValueError("link_bandwidth must be > 0")
        if self.pipeline not in PIPELINES:
            raise ValueError(f"pipeline must be one of {PIPELINES}, got {self.pipeline!r}")
        if self.mode not in ("inference", "training"):
            raise ValueError(f"mode must be 'inference' or 'training', got {self.mode!r}")
        if not 0 < self.tile_fraction <= 1:
            raise ValueError("tile_fraction must be in (0, 1]")
        if self.batch_size < 1 or self.chunk_bytes < 1:
            raise ValueError("batch_size and chunk_bytes must be >= 1")

    @property
    def tiles(self) -> int:
        return 1 if self.pipeline == "layerwise" else max(1, round(1 / self.tile_fraction))


@dataclass
class SimResult:
    makespan: int
    batch_size: int
    n_cores: int
    forwarded: np.ndarray  # (H, W) bytes sent out of each core's mesh ports
    busy: list[list[tuple[int, int]]]  # per logical node, compute intervals
    peak_queue: dict[tuple[int, int, str], int]
    injected: list[int]  # bytes per edge over the batch
    delivered: list[int]
    config: SimConfig = field(repr=False, default=None)

    @property
    def throughput(self) -> float:
        """Samples per kilocycle."""
        return 1000.0 * self.batch_size / self.makespan if self.makespan else float("inf")

    def busy_cycles(self) -> int:
        return sum(e - s for iv in self.busy for s, e in iv)

    def mean_utilization(self) -> float:
        if self.makespan == 0:
            return 0.0
        return self.busy_cycles() / (self.n_cores * self.makespan)

    def summary(self) -> dict:
        d = {
            "makespan": self.makespan,
            "batch_size": self.batch_size,
            "throughput_per_kcycle": self.throughput,
            "mean_utilization": self.mean_utilization(),
            "busy_cycles": self.busy_cycles(),
            "max_forwarded_bytes": int(self.forwarded.max()) if self.forwarded.size else 0,
            "total_forwarded_bytes": int(self.forwarded.sum()),
            "max_queue_depth": max(self.peak_queue.values(), default=0),
        }
        if self.config is not None:
            d["config"] = {
                "link_bandwidth": self.config.link_bandwidth,
                "pipeline": self.config.pipeline,
                "mode": self.config.mode,
                "batch_size": self.config.batch_size,
                "tile_fraction": self.config.tile_fraction,
                "chunk_bytes": self.config.chunk_bytes,
                "clock_mhz": self.config.clock_mhz,
            }
            if self.config.clock_mhz:
                d["makespan_us"] = self.makespan / self.config.clock_mhz
        return d


def _split(total: int, parts: int) -> list[int]:
    return [(j + 1) * total // parts - j * total // parts for j in range(parts)]


def _need(total: int, j: int, parts: int) -> int:
    """Bytes of an input that must have arrived before tile ``j`` may start."""
    return -(-(j + 1) * total // parts)


class _Phase:
    __slots__ = ("cycles", "ins", "outs")

    def __init__(self, cycles, ins, outs):
        self.cycles = cycles
        self.ins = ins
        self.outs = outs


def simulate(graph: TaskGraph, placement: Placement, mesh: Mesh | None = None, config: SimConfig = SimConfig()) -> SimResult:
    mesh = mesh or placement.mesh
    if config.mode == "training" and graph.mode != "training":
        raise ValueError("training simulation needs a training-mode task graph")
    xy = placement.coords(graph.n)
    for i in range(graph.n):
        if not mesh.contains(tuple(xy[i])):
            raise ValueError(f"node {i} placed outside {mesh}")
    m = config.tiles
    B = config.batch_size
    bw = config.link_bandwidth
    training = config.mode == "training"

    edges = [e for e in graph.edges if training or e.kind == "fwd"]
    routes = []
    for e in edges:
        r = route(mesh, tuple(xy[e.src]), tuple(xy[e.dst]))
        if len(r.hops) == 0:
            raise RuntimeError(f"edge {e.src}->{e.dst} has no route (nodes share a core)")
        cells = r.cells()
        routes.append([(cells[h], r.hops[h]) for h in range(len(r.hops))])

    phases: list[list[_Phase]] = []
    for nd in graph.nodes:
        fwd_in = [k for k, e in enumerate(edges) if e.dst == nd.id and e.kind == "fwd"]
        fwd_out = [k for k, e in enumerate(edges) if e.src == nd.id and e.kind == "fwd"]
        ps = [_Phase(_split(nd.fp_cycles if training or graph.mode == "training" else nd.compute_cycles, m), fwd_in, fwd_out)]
        if training:
            bwd_in = [k for k, e in enumerate(edges) if e.dst == nd.id and e.kind == "bwd"]
            bwd_out = [k for k, e in enumerate(edges) if e.src == nd.id and e.kind == "bwd"]
            ps.append(_Phase(_split(nd.compute_cycles - nd.fp_cycles, m), bwd_in, bwd_out))
        phases.append(ps)
    n_ph = len(phases[0]) if phases else 1

    arrived = [[0] * B for _ in edges]
    injected = [0] * len(edges)
    delivered = [0] * len(edges)
    next_tile = [[[0] * n_ph for _ in range(B)] for _ in range(graph.n)]
    busy_until = [None] * graph.n  # None: idle
    busy: list[list[tuple[int, int]]] = [[] for _ in range(graph.n)]
    forwarded = np.zeros((mesh.height, mesh.width), dtype=np.int64)
    ports: dict[tuple[int, int, str], list] = {}
    port_busy: dict[tuple[int, int, str], bool] = {}
    peak: dict[tuple[int, int, str], int] = {}
    events: list = []
    seq = 0

    def push(t, kind, payload):
        nonlocal seq
        heapq.heappush(events, (t, kind, seq, payload))
        seq += 1

    def enqueue(t, k, s, nbytes, hop):
        (x, y), d = routes[k][hop]
        key = (x, y, d)
        q = ports.setdefault(key, [])
        heapq.heappush(q, (t, edges[k].src, k, s, hop, nbytes, seq))
        peak[key] = max(peak.get(key, 0), len(q))
        if not port_busy.get(key):
            port_busy[key] = True
            push(t, _ARBITRATE, key)

    def ready(v, s, p, j) -> bool:
        if j >= m:
            return False
        if p == 1 and next_tile[v][s][0] < m:
            return False
        for k in phases[v][p].ins:
            if arrived[k][s] < _need(edges[k].bytes, j, m):
                return False
        return True

    def try_start(v, t):
        if busy_until[v] is not None:
            return
        # earliest sample first, forward before backward
        for s in range(B):
            for p in range(n_ph):
                j = next_tile[v][s][p]
                if ready(v, s, p, j):
                    cyc = phases[v][p].cycles[j]
                    busy_until[v] = t + cyc
                    if cyc:
                        busy[v].append((t, t + cyc))
                    push(t + cyc, _COMPUTE_DONE, (v, s, p, j))
                    return

    for v in range(graph.n):
        push(0, _SCHEDULE, v)

    makespan = 0
    while events:
        t, kind, _, payload = heapq.heappop(events)
        if kind == _COMPUTE_DONE:
            v, s, p, j = payload
            makespan = max(makespan, t)
            busy_until[v] = None
            next_tile[v][s][p] = j + 1
            for k in phases[v][p].outs:
                share = _need(edges[k].bytes, j, m) - (_need(edges[k].bytes, j - 1, m) if j else 0)
                injected[k] += share
                while share > 0:
                    c = min(share, config.chunk_bytes)
                    enqueue(t, k, s, c, 0)
                    share -= c
            push(t, _SCHEDULE, v)
        elif kind == _ARBITRATE:
            key = payload
            q = ports[key]
            if not q:
                port_busy[key] = False
                continue
            chunk = heapq.heappop(q)
            push(t + -(-chunk[5] // bw), _PORT_DONE, (key, chunk))
        elif kind == _PORT_DONE:
            key, (_, _, k, s, hop, nbytes, _) = payload
            forwarded[key[1], key[0]] += nbytes
            push(t, _ARBITRATE, key)
            if hop + 1 == len(routes[k]):
                push(t, _ARRIVE, (k, s, nbytes))
            else:
                enqueue(t, k, s, nbytes, hop + 1)
        elif kind == _ARRIVE:
            k, s, nbytes = payload
            arrived[k][s] += nbytes
            delivered[k] += nbytes
            push(t, _SCHEDULE, edges[k].dst)
        else:  # _SCHEDULE
            try_start(payload, t)

    unfinished = [v for v in range(graph.n) for s in range(B) for p in range(n_ph) if next_tile[v][s][p] < m]
    if unfinished:
        raise RuntimeError(f"simulation stalled with unfinished work on nodes {sorted(set(unfinished))}")
    return SimResult(
        makespan=makespan,
        batch_size=B,
        n_cores=mesh.n_cores,
        forwarded=forwarded,
        busy=busy,
        peak_queue=peak,
        injected=injected,
        delivered=delivered,
        config=config,
    )


def utilization_waveform(result: SimResult, bucket: int) -> list[tuple[int, float]]:
    """(bucket start, fraction of physical cores computing) for each bucket up to the makespan."""
    if bucket < 1:
        raise ValueError("bucket must be >= 1")
    n_buckets = max(1, math.ceil(result.makespan / bucket))
    acc = np.zeros(n_buckets, dtype=np.float64)
    for iv in result.busy:
        for s, e in iv:
            b0, b1 = s // bucket, (e - 1) // bucket
            for b in range(b0, min(b1, n_buckets - 1) + 1):
                lo, hi = max(s, b * bucket), min(e, (b + 1) * bucket)
                acc[b] += hi - lo
    width = np.full(n_buckets, float(bucket))
    width[-1] = result.makespan - (n_buckets - 1) * bucket or bucket
    return [(b * bucket, float(acc[b] / (result.n_cores * width[b]))) for b in range(n_buckets)]


def waveform_csv(wave: list[tuple[int, float]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["cycle", "busy_fraction"])
    for t, f in wave:
        w.writerow([t, repr(f)])
    return buf.getvalue()


def export(result: SimResult, out_dir: str | Path, bucket: int | None = None) -> None:
    """Write sim_result.json, waveform.csv and heatmap.csv into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bucket = bucket or max(1, result.makespan // 200)
    (out / "sim_result.json").write_text(json.dumps(result.summary(), indent=1) + "\n")
    (out / "waveform.csv").write_text(waveform_csv(utilization_waveform(result, bucket)))
    (out / "heatmap.csv").write_text(heatmap_csv(result.forwarded))
