"""Partition Spike-ResNet18 into 32 logical cores and compare against equal-weight slicing."""
# %%
import numpy as np

from coreplace.taskgraph import (
    HardwareProfile,
    build_taskgraph,
    bundled_model,
    estimate_layer_cost,
    latency_ratio,
    partition_model,
    partition_uniform,
)

hw = HardwareProfile()
layers = bundled_model("spike_resnet18")

# %% per-layer footprint
for l in layers:
    c = estimate_layer_cost(l, hw, "training")
    print(f"{l.id:10s} C={l.in_channels:4d} K={l.out_channels:4d} ops={c.total_ops:.3e} weights={c.weight_bytes:8d} B")

# %% balanced vs uniform
for mode in ("inference", "training"):
    bal = partition_model(layers, hw, 32, mode)
    uni = partition_uniform(layers, hw, 32, mode)
    lat = np.array([s.est_latency_cycles for s in bal])
    print(f"\n{mode}: balanced max/min {latency_ratio(bal):.3f}, uniform {latency_ratio(uni):.3f}")
    print("slices per layer:", {l.id: sum(s.layer_id == l.id for s in bal) for l in layers})
    print(f"latency spread {lat.min()} .. {lat.max()} cycles")

# %% the task graph the placer sees
g = build_taskgraph(partition_model(layers, hw, 32, "training"), layers, "training", hw)
fwd = sum(e.kind == "fwd" for e in g.edges)
print(f"\n{g.n} nodes, {fwd} forward + {len(g.edges) - fwd} backward edges, {g.total_bytes()} bytes per sample")
print("multicast nodes:", [nd.id for nd in g.nodes if nd.multicast])
