"""SNN layer cost model, compute/storage-balanced partitioning and task-graph construction.

A model is a list of :class:`LayerSpec`.  :func:`partition_model` cuts it into
exactly ``n_cores`` :class:`SliceSpec` (one logical core each) and
:func:`build_taskgraph` turns the slices into a weighted DAG whose edges carry
packed spike traffic (and FP16 gradient traffic in training mode).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from functools import cached_property
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

MODES = ("inference", "training")
LAYER_KINDS = ("conv", "fc")
FP16_BYTES = 2


class ModelSpecError(ValueError):
    """Malformed model or task-graph file."""


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


@dataclass(frozen=True)
class HardwareProfile:
    # 16x16 MAC array per core
    macs_per_core: int = 256
    sram_bytes_per_core: int = 256 * 1024
    link_bandwidth: int = 16
    offchip_bandwidth: int = 8
    # share of SRAM kept free for activations / spikes
    activation_reserve: float = 0.25

    def __post_init__(self):
        for name in ("macs_per_core", "sram_bytes_per_core", "link_bandwidth", "offchip_bandwidth"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        side = math.isqrt(self.macs_per_core)
        if side * side != self.macs_per_core:
            raise ValueError(f"macs_per_core must be a perfect square, got {self.macs_per_core}")
        if not 0.0 <= self.activation_reserve < 1.0:
            raise ValueError("activation_reserve must be in [0, 1)")

    @property
    def weight_capacity(self) -> int:
        """SRAM bytes available for resident weights."""
        return int(self.sram_bytes_per_core * (1.0 - self.activation_reserve))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "HardwareProfile":
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        unknown = set(d) - set(known)
        if unknown:
            raise ModelSpecError(f"unknown hardware field(s): {sorted(unknown)}")
        return cls(**known)


@dataclass(frozen=True)
class LayerSpec:
    """One SNN layer.

    ``input`` names the layer whose spikes this layer convolves (``None``: the
    previous layer in the list).  ``residual`` optionally names a layer whose
    output is added to this one's, which produces extra forward edges.
    """

    id: str
    kind: str
    in_channels: int
    out_channels: int
    kernel: tuple[int, int] = (1, 1)
    out: tuple[int, int] = (1, 1)
    timesteps: int = 4
    input: str | None = None
    residual: str | None = None

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ModelSpecError(
                f"layer {self.id!r}: unsupported kind {self.kind!r}; supported kinds: {list(LAYER_KINDS)}"
            )
        object.__setattr__(self, "kernel", tuple(int(v) for v in self.kernel))
        object.__setattr__(self, "out", tuple(int(v) for v in self.out))
        dims = {
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "kernel_h": self.kernel[0],
            "kernel_w": self.kernel[1],
            "out_h": self.out[0],
            "out_w": self.out[1],
            "timesteps": self.timesteps,
        }
        for name, v in dims.items():
            if int(v) < 1:
                raise ModelSpecError(f"layer {self.id!r}: {name} must be >= 1, got {v}")

    @property
    def weight_bytes(self) -> int:
        kh, kw = self.kernel
        return self.in_channels * self.out_channels * kh * kw * FP16_BYTES

    @property
    def out_elems(self) -> int:
        """Output elements per timestep per output channel."""
        return self.out[0] * self.out[1]


class LayerCost(NamedTuple):
    fp_ops: int
    bp_ops: int
    wg_ops: int
    weight_bytes: int
    spike_bytes: int  # packed 1 bit/elem, per timestep
    grad_bytes: int  # FP16, per timestep
    total_ops: int


def estimate_layer_cost(layer: LayerSpec, hw: HardwareProfile, mode: str = "inference") -> LayerCost:
    _check_mode(mode)
    kh, kw = layer.kernel
    oh, ow = layer.out
    for v in (layer.in_channels, layer.out_channels, kh, kw, oh, ow, layer.timesteps):
        if v < 1:
            raise ValueError(f"zero-sized dimension in layer {layer.id!r}")
    fp = layer.timesteps * layer.out_channels * layer.in_channels * kh * kw * oh * ow
    total = fp if mode == "inference" else 3 * fp
    elems = layer.out_channels * oh * ow
    return LayerCost(
        fp_ops=fp,
        bp_ops=fp,
        wg_ops=fp,
        weight_bytes=layer.weight_bytes,
        spike_bytes=-(-elems // 8),
        grad_bytes=elems * FP16_BYTES,
        total_ops=total,
    )


@dataclass(frozen=True)
class SliceSpec:
    layer_id: str
    c_range: tuple[int, int]
    k_range: tuple[int, int]
    fp_ops: int
    bp_ops: int
    wg_ops: int
    resident_weight_bytes: int
    overflow_weight_bytes: int
    est_latency_cycles: int
    mode: str = "inference"

    @property
    def weight_bytes(self) -> int:
        return self.resident_weight_bytes + self.overflow_weight_bytes

    @property
    def total_ops(self) -> int:
        if self.mode == "inference":
            return self.fp_ops
        return self.fp_ops + self.bp_ops + self.wg_ops

    def to_dict(self) -> dict:
        d = asdict(self)
        d["c_range"] = list(self.c_range)
        d["k_range"] = list(self.k_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SliceSpec":
        d = dict(d)
        d["c_range"] = tuple(d["c_range"])
        d["k_range"] = tuple(d["k_range"])
        return cls(**d)


def slice_latency(fp_ops: int, total_ops: int, overflow_bytes: int, hw: HardwareProfile) -> int:
    return -(-total_ops // hw.macs_per_core) + -(-overflow_bytes // hw.offchip_bandwidth)


def recompute_latency(s: SliceSpec, hw: HardwareProfile) -> int:
    return slice_latency(s.fp_ops, s.total_ops, s.overflow_weight_bytes, hw)


def make_slice(
    layer: LayerSpec,
    c_range: tuple[int, int],
    k_range: tuple[int, int],
    hw: HardwareProfile,
    mode: str,
) -> SliceSpec:
    c0, c1 = c_range
    k0, k1 = k_range
    if not (0 <= c0 < c1 <= layer.in_channels and 0 <= k0 < k1 <= layer.out_channels):
        raise ValueError(f"slice ranges {c_range}/{k_range} outside layer {layer.id!r}")
    kh, kw = layer.kernel
    fp = layer.timesteps * (k1 - k0) * (c1 - c0) * kh * kw * layer.out_elems
    wbytes = (c1 - c0) * (k1 - k0) * kh * kw * FP16_BYTES
    resident = min(wbytes, hw.weight_capacity)
    overflow = wbytes - resident
    total = fp if mode == "inference" else 3 * fp
    return SliceSpec(
        layer_id=layer.id,
        c_range=(c0, c1),
        k_range=(k0, k1),
        fp_ops=fp,
        bp_ops=fp,
        wg_ops=fp,
        resident_weight_bytes=resident,
        overflow_weight_bytes=overflow,
        est_latency_cycles=slice_latency(fp, total, overflow, hw),
        mode=mode,
    )


def _even_cuts(length: int, parts: int) -> list[tuple[int, int]]:
    bounds = [(i * length) // parts for i in range(parts + 1)]
    return [(bounds[i], bounds[i + 1]) for i in range(parts)]


def split_layer(layer: LayerSpec, n: int, hw: HardwareProfile, mode: str) -> list[SliceSpec]:
    """Split one layer into ``n`` slices, along K first, then along C."""
    K, C = layer.out_channels, layer.in_channels
    if n < 1 or n > K * C:
        raise ValueError(f"layer {layer.id!r} cannot be split into {n} slices (K*C = {K * C})")
    if n <= K:
        return [make_slice(layer, (0, C), kr, hw, mode) for kr in _even_cuts(K, n)]
    # more slices than output channels: one channel per K-group, C split inside
    slices = []
    per_k = [hi - lo for lo, hi in _even_cuts(n, K)]
    for k, pieces in enumerate(per_k):
        for cr in _even_cuts(C, pieces):
            slices.append(make_slice(layer, cr, (k, k + 1), hw, mode))
    return slices


def _split_latency_range(layer: LayerSpec, n: int, hw: HardwareProfile, mode: str) -> tuple[int, int]:
    lat = [s.est_latency_cycles for s in split_layer(layer, n, hw, mode)]
    return min(lat), max(lat)


def _allocate(weights: Sequence[float], n_cores: int, per_slice, caps: Sequence[int]) -> list[int]:
    """Proportional rounding, then repair the total, then greedy max-reduction moves.

    ``per_slice(i, n)`` returns the per-slice cost of layer ``i`` split ``n`` ways.
    """
    total = float(sum(weights))
    alloc = [min(caps[i], max(1, round(n_cores * w / total))) for i, w in enumerate(weights)]
    while sum(alloc) > n_cores:
        cands = [i for i in range(len(alloc)) if alloc[i] > 1]
        i = min(cands, key=lambda j: (per_slice(j, alloc[j]), j))
        alloc[i] -= 1
    while sum(alloc) < n_cores:
        cands = [i for i in range(len(alloc)) if alloc[i] < caps[i]]
        if not cands:
            raise ValueError(f"model cannot be split into {n_cores} slices")
        i = max(cands, key=lambda j: (per_slice(j, alloc[j]), -j))
        alloc[i] += 1
    return alloc


def _rebalance(alloc: list[int], per_slice, caps: Sequence[int]) -> list[int]:
    # move one slice from the cheapest donor to the slowest layer while that lowers the max
    alloc = list(alloc)
    for _ in range(10 * sum(alloc)):
        lat = [per_slice(i, a) for i, a in enumerate(alloc)]
        worst = max(range(len(alloc)), key=lambda i: (lat[i], -i))
        if alloc[worst] >= caps[worst]:
            break
        donors = [i for i in range(len(alloc)) if i != worst and alloc[i] > 1]
        if not donors:
            break
        donor = min(donors, key=lambda i: (per_slice(i, alloc[i] - 1), i))
        new_max = max(per_slice(worst, alloc[worst] + 1), per_slice(donor, alloc[donor] - 1))
        others = max((lat[i] for i in range(len(alloc)) if i not in (worst, donor)), default=0)
        if max(new_max, others) >= lat[worst]:
            break
        alloc[worst] += 1
        alloc[donor] -= 1
    return alloc


def _reduce_ratio(alloc: list[int], lat_range, caps: Sequence[int]) -> list[int]:
    # single-slice moves, best first, while the global max/min latency ratio strictly drops
    alloc = list(alloc)

    def ratio(a):
        rng = [lat_range(i, n) for i, n in enumerate(a)]
        return max(r[1] for r in rng) / min(r[0] for r in rng)

    current = ratio(alloc)
    for _ in range(10 * sum(alloc)):
        best = None
        for d in range(len(alloc)):
            if alloc[d] <= 1:
                continue
            for r in range(len(alloc)):
                if r == d or alloc[r] >= caps[r]:
                    continue
                alloc[d] -= 1
                alloc[r] += 1
                q = ratio(alloc)
                alloc[d] += 1
                alloc[r] -= 1
                if q < current and (best is None or q < best[0]):
                    best = (q, d, r)
        if best is None:
            break
        current, d, r = best
        alloc[d] -= 1
        alloc[r] += 1
    return alloc


def partition_model(
    layers: Sequence[LayerSpec],
    hw: HardwareProfile,
    n_cores: int,
    mode: str = "inference",
) -> list[SliceSpec]:
    """Compute/storage-balanced partitioning into exactly ``n_cores`` slices."""
    _check_mode(mode)
    if n_cores < len(layers):
        raise ValueError(f"infeasible: {n_cores} cores for {len(layers)} layers (need n_cores >= layers)")
    caps = [l.out_channels * l.in_channels for l in layers]
    cache: dict[tuple[int, int], tuple[int, int]] = {}

    def lat_range(i: int, n: int) -> tuple[int, int]:
        key = (i, n)
        if key not in cache:
            cache[key] = _split_latency_range(layers[i], n, hw, mode)
        return cache[key]

    def per_slice(i: int, n: int) -> int:
        return lat_range(i, n)[1]

    weights = [per_slice(i, 1) for i in range(len(layers))]
    alloc = _allocate(weights, n_cores, per_slice, caps)
    alloc = _rebalance(alloc, per_slice, caps)
    alloc = _reduce_ratio(alloc, lat_range, caps)
    out: list[SliceSpec] = []
    for layer, n in zip(layers, alloc):
        out.extend(split_layer(layer, n, hw, mode))
    return out


def partition_uniform(
    layers: Sequence[LayerSpec],
    hw: HardwareProfile,
    n_cores: int,
    mode: str = "inference",
) -> list[SliceSpec]:
    """Reference scheme: equal weight bytes per slice, K cut evenly.

    Used as the comparison point for :func:`partition_model`.
    """
    _check_mode(mode)
    if n_cores < len(layers):
        raise ValueError(f"infeasible: {n_cores} cores for {len(layers)} layers (need n_cores >= layers)")
    caps = [l.out_channels * l.in_channels for l in layers]
    wb = [l.weight_bytes for l in layers]
    alloc = _allocate(wb, n_cores, lambda i, n: wb[i] / n, caps)
    out: list[SliceSpec] = []
    for layer, n in zip(layers, alloc):
        out.extend(split_layer(layer, n, hw, mode))
    return out


def latency_ratio(slices: Sequence[SliceSpec]) -> float:
    lat = [s.est_latency_cycles for s in slices]
    return max(lat) / min(lat)


# --------------------------------------------------------------------------- task graph


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    bytes: int
    kind: str = "fwd"  # "fwd" spikes, "bwd" FP16 gradients


@dataclass
class TaskNode:
    id: int
    multicast: bool
    degree_in: int
    degree_out: int
    bytes_in: int
    bytes_out: int
    compute_cycles: int
    # portion of compute_cycles belonging to the forward pass (== compute_cycles in inference)
    fp_cycles: int
    slice: SliceSpec | None = None


@dataclass
class TaskGraph:
    nodes: list[TaskNode]
    edges: list[Edge]
    mode: str = "inference"
    hardware: dict | None = field(default=None, compare=False)

    @property
    def n(self) -> int:
        return len(self.nodes)

    @cached_property
    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(src, dst, bytes) as int64 arrays in edge order."""
        src = np.array([e.src for e in self.edges], dtype=np.int64)
        dst = np.array([e.dst for e in self.edges], dtype=np.int64)
        vol = np.array([e.bytes for e in self.edges], dtype=np.int64)
        return src, dst, vol

    def total_bytes(self) -> int:
        return sum(e.bytes for e in self.edges)

    def validate(self) -> None:
        _check_mode(self.mode)
        ids = [nd.id for nd in self.nodes]
        if ids != list(range(len(ids))):
            raise ModelSpecError("node ids must be 0..n-1 in order")
        n = len(ids)
        for i, e in enumerate(self.edges):
            if not (0 <= e.src < n and 0 <= e.dst < n):
                raise ModelSpecError(f"edge {i}: endpoint outside 0..{n - 1}")
            if e.src == e.dst:
                raise ModelSpecError(f"edge {i}: self-edge on node {e.src}")
            if e.bytes < 0:
                raise ModelSpecError(f"edge {i}: negative bytes")
            if e.kind not in ("fwd", "bwd"):
                raise ModelSpecError(f"edge {i}: unknown kind {e.kind!r}")
        expected = node_features(n, self.edges)
        for nd in self.nodes:
            f = expected[nd.id]
            got = (nd.multicast, nd.degree_in, nd.degree_out, nd.bytes_in, nd.bytes_out)
            if got != f:
                raise ModelSpecError(f"node {nd.id}: features {got} inconsistent with edges {f}")
        if _has_cycle(n, [e for e in self.edges if e.kind == "fwd"]):
            raise ModelSpecError("forward edges contain a cycle")


def node_features(n: int, edges: Sequence[Edge]) -> list[tuple[bool, int, int, int, int]]:
    deg_in = [0] * n
    deg_out = [0] * n
    b_in = [0] * n
    b_out = [0] * n
    for e in edges:
        deg_out[e.src] += 1
        deg_in[e.dst] += 1
        b_out[e.src] += e.bytes
        b_in[e.dst] += e.bytes
    return [(deg_out[i] > 1, deg_in[i], deg_out[i], b_in[i], b_out[i]) for i in range(n)]


def _has_cycle(n: int, edges: Sequence[Edge]) -> bool:
    succ: list[list[int]] = [[] for _ in range(n)]
    indeg = [0] * n
    for e in edges:
        succ[e.src].append(e.dst)
        indeg[e.dst] += 1
    stack = [i for i in range(n) if indeg[i] == 0]
    seen = 0
    while stack:
        u = stack.pop()
        seen += 1
        for v in succ[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                stack.append(v)
    return seen != n


def make_graph(
    n: int,
    edges: Sequence[Edge | tuple],
    compute_cycles: Sequence[int] | None = None,
    mode: str = "inference",
) -> TaskGraph:
    """Build a TaskGraph with features derived from ``edges``.

    Convenient for synthetic instances; tuples are ``(src, dst, bytes[, kind])``.
    """
    edges = [e if isinstance(e, Edge) else Edge(*e) for e in edges]
    cycles = list(compute_cycles) if compute_cycles is not None else [0] * n
    feats = node_features(n, edges)
    nodes = [
        TaskNode(i, *feats[i], compute_cycles=int(cycles[i]), fp_cycles=int(cycles[i]))
        for i in range(n)
    ]
    return TaskGraph(nodes=nodes, edges=edges, mode=mode)


def _resolve_inputs(layers: Sequence[LayerSpec]) -> dict[str, str | None]:
    ids = [l.id for l in layers]
    if len(set(ids)) != len(ids):
        raise ModelSpecError("duplicate layer ids")
    pos = {lid: i for i, lid in enumerate(ids)}
    inputs: dict[str, str | None] = {}
    for i, l in enumerate(layers):
        src = l.input if l.input is not None else (ids[i - 1] if i > 0 else None)
        for ref in (src, l.residual):
            if ref is not None and (ref not in pos or pos[ref] >= i):
                raise ModelSpecError(f"layer {l.id!r}: reference {ref!r} must name an earlier layer")
        inputs[l.id] = src
    return inputs


def _overlap(a: tuple[int, int], b: tuple[int, int]) -> int:
    return max(0, min(a[1], b[1]) - max(a[0], b[0]))


def build_taskgraph(
    slices: Sequence[SliceSpec],
    layers: Sequence[LayerSpec],
    mode: str = "inference",
    hw: HardwareProfile | None = None,
) -> TaskGraph:
    """Weighted DAG over slices.

    Every slice of a producer layer feeds every slice of its consumer layer
    that reads an overlapping channel range.  Forward volume is the packed spike
    bytes of the overlapping channels over all timesteps; training adds one
    reverse edge per forward edge carrying the FP16 gradient of the same channels.
    """
    _check_mode(mode)
    by_layer: dict[str, list[int]] = {}
    for i, s in enumerate(slices):
        by_layer.setdefault(s.layer_id, []).append(i)
    lmap = {l.id: l for l in layers}
    missing = set(by_layer) - set(lmap)
    if missing:
        raise ValueError(f"slices reference unknown layers: {sorted(missing)}")
    inputs = _resolve_inputs(layers)

    fwd: dict[tuple[int, int], tuple[int, int]] = {}  # (u, v) -> (spike bytes, grad bytes)

    def connect(prod: LayerSpec, cons_slices: list[int], channel_of) -> None:
        for u in by_layer.get(prod.id, []):
            for v in cons_slices:
                ch = channel_of(slices[u], slices[v])
                if ch <= 0:
                    continue
                spikes = -(-ch * prod.out_elems // 8) * prod.timesteps
                grads = ch * prod.out_elems * FP16_BYTES * prod.timesteps
                old = fwd.get((u, v), (0, 0))
                fwd[(u, v)] = (old[0] + spikes, old[1] + grads)

    for layer in layers:
        cons = by_layer.get(layer.id, [])
        src = inputs[layer.id]
        if src is not None:
            connect(lmap[src], cons, lambda su, sv: _overlap(su.k_range, sv.c_range))
        if layer.residual is not None:
            res = lmap[layer.residual]
            if res.out_channels == layer.out_channels:
                connect(res, cons, lambda su, sv: _overlap(su.k_range, sv.k_range))
            else:
                # projection shortcut: every output channel mixes all input channels
                connect(res, cons, lambda su, sv: su.k_range[1] - su.k_range[0])

    edges = [Edge(u, v, b[0], "fwd") for (u, v), b in fwd.items()]
    if mode == "training":
        edges += [Edge(v, u, b[1], "bwd") for (u, v), b in fwd.items()]
    feats = node_features(len(slices), edges)
    hwp = hw or HardwareProfile()
    nodes = []
    for i, s in enumerate(slices):
        fp_cycles = slice_latency(s.fp_ops, s.fp_ops, s.overflow_weight_bytes, hwp)
        total = s.est_latency_cycles if s.mode == mode else slice_latency(
            s.fp_ops, s.fp_ops if mode == "inference" else 3 * s.fp_ops, s.overflow_weight_bytes, hwp
        )
        nodes.append(TaskNode(i, *feats[i], compute_cycles=total, fp_cycles=min(fp_cycles, total), slice=s))
    return TaskGraph(nodes=nodes, edges=edges, mode=mode, hardware=hwp.to_dict())


# --------------------------------------------------------------------------- file formats

_REQUIRED_LAYER_FIELDS = ("id", "kind", "in_channels", "out_channels")


def _pair(v, name: str, where: str) -> tuple[int, int]:
    if isinstance(v, int) and not isinstance(v, bool):
        return (v, v)
    if isinstance(v, (list, tuple)) and len(v) == 2 and all(isinstance(x, int) for x in v):
        return (int(v[0]), int(v[1]))
    raise ModelSpecError(f"{where}: field {name!r} must be an int or [h, w], got {v!r}")


def parse_model_spec(doc: dict, source: str = "<model>") -> list[LayerSpec]:
    if not isinstance(doc, dict) or "layers" not in doc:
        raise ModelSpecError(f"{source}: missing required field 'layers'")
    if not isinstance(doc["layers"], list) or not doc["layers"]:
        raise ModelSpecError(f"{source}: 'layers' must be a non-empty list")
    layers = []
    for i, raw in enumerate(doc["layers"]):
        where = f"{source}: layers[{i}]"
        if not isinstance(raw, dict):
            raise ModelSpecError(f"{where}: expected an object")
        for name in _REQUIRED_LAYER_FIELDS:
            if name not in raw:
                raise ModelSpecError(f"{where}: missing required field {name!r}")
        kind = raw["kind"]
        if kind not in LAYER_KINDS:
            raise ModelSpecError(
                f"{where}: unsupported layer kind {kind!r}; supported kinds: {list(LAYER_KINDS)}"
            )
        for name in ("in_channels", "out_channels", "timesteps"):
            if name in raw and (not isinstance(raw[name], int) or isinstance(raw[name], bool)):
                raise ModelSpecError(f"{where}: field {name!r} must be an integer, got {raw[name]!r}")
        layers.append(
            LayerSpec(
                id=str(raw["id"]),
                kind=kind,
                in_channels=raw["in_channels"],
                out_channels=raw["out_channels"],
                kernel=_pair(raw.get("kernel", [1, 1]), "kernel", where),
                out=_pair(raw.get("out", [1, 1]), "out", where),
                timesteps=raw.get("timesteps", doc.get("timesteps", 4)),
                input=raw.get("input"),
                residual=raw.get("residual"),
            )
        )
    _resolve_inputs(layers)
    return layers


def load_model_spec(path: str | Path) -> list[LayerSpec]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ModelSpecError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return parse_model_spec(doc, str(path))


def model_spec_to_dict(layers: Sequence[LayerSpec]) -> dict:
    out = []
    for l in layers:
        d = {
            "id": l.id,
            "kind": l.kind,
            "in_channels": l.in_channels,
            "out_channels": l.out_channels,
            "kernel": list(l.kernel),
            "out": list(l.out),
            "timesteps": l.timesteps,
        }
        if l.input is not None:
            d["input"] = l.input
        if l.residual is not None:
            d["residual"] = l.residual
        out.append(d)
    return {"layers": out}


def save_model_spec(layers: Sequence[LayerSpec], path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_spec_to_dict(layers), indent=1) + "\n")


def taskgraph_to_dict(graph: TaskGraph) -> dict:
    nodes = []
    for nd in graph.nodes:
        d = {
            "id": nd.id,
            "multicast": nd.multicast,
            "compute_cycles": nd.compute_cycles,
            "fp_cycles": nd.fp_cycles,
            "bytes_in": nd.bytes_in,
            "bytes_out": nd.bytes_out,
            "degree_in": nd.degree_in,
            "degree_out": nd.degree_out,
        }
        if nd.slice is not None:
            d["slice"] = nd.slice.to_dict()
        nodes.append(d)
    doc = {
        "mode": graph.mode,
        "nodes": nodes,
        "edges": [{"src": e.src, "dst": e.dst, "bytes": e.bytes, "kind": e.kind} for e in graph.edges],
    }
    if graph.hardware is not None:
        doc["hardware"] = graph.hardware
    return doc


def taskgraph_from_dict(doc: dict, source: str = "<taskgraph>") -> TaskGraph:
    for name in ("mode", "nodes", "edges"):
        if name not in doc:
            raise ModelSpecError(f"{source}: missing required field {name!r}")
    nodes = []
    for i, raw in enumerate(doc["nodes"]):
        for name in ("id", "multicast", "compute_cycles", "bytes_in", "bytes_out", "degree_in", "degree_out"):
            if name not in raw:
                raise ModelSpecError(f"{source}: nodes[{i}]: missing required field {name!r}")
        sl = SliceSpec.from_dict(raw["slice"]) if "slice" in raw else None
        nodes.append(
            TaskNode(
                id=int(raw["id"]),
                multicast=bool(raw["multicast"]),
                degree_in=int(raw["degree_in"]),
                degree_out=int(raw["degree_out"]),
                bytes_in=int(raw["bytes_in"]),
                bytes_out=int(raw["bytes_out"]),
                compute_cycles=int(raw["compute_cycles"]),
                fp_cycles=int(raw.get("fp_cycles", raw["compute_cycles"])),
                slice=sl,
            )
        )
    edges = []
    for i, raw in enumerate(doc["edges"]):
        for name in ("src", "dst", "bytes"):
            if name not in raw:
                raise ModelSpecError(f"{source}: edges[{i}]: missing required field {name!r}")
        edges.append(Edge(int(raw["src"]), int(raw["dst"]), int(raw["bytes"]), raw.get("kind", "fwd")))
    g = TaskGraph(nodes=nodes, edges=edges, mode=doc["mode"], hardware=doc.get("hardware"))
    try:
        g.validate()
    except ModelSpecError as exc:
        raise ModelSpecError(f"{source}: {exc}") from None
    return g


def save_taskgraph(graph: TaskGraph, path: str | Path) -> None:
    Path(path).write_text(json.dumps(taskgraph_to_dict(graph), indent=1) + "\n")


def load_taskgraph(path: str | Path) -> TaskGraph:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ModelSpecError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return taskgraph_from_dict(doc, str(path))


def bundled_model(name: str) -> list[LayerSpec]:
    """Load one of the bundled benchmark specs (``spike_resnet18``, ``spike_vgg16``, ...)."""
    path = Path(__file__).parent / "models" / f"{name}.json"
    if not path.exists():
        avail = sorted(p.stem for p in path.parent.glob("*.json"))
        raise FileNotFoundError(f"no bundled model {name!r}; available: {avail}")
    return load_model_spec(path)
