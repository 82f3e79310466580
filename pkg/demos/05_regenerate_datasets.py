"""Regenerate the benchmark task graphs (32 and 64 logical cores, both modes) into ./datasets.

Spike-ResNet50 has 49 layers, so only its 64-core variant exists.
"""
# %%
from pathlib import Path

from coreplace.taskgraph import HardwareProfile, build_taskgraph, bundled_model, partition_model, save_taskgraph

hw = HardwareProfile()
out = Path("datasets")
out.mkdir(exist_ok=True)
for model in ("spike_resnet18", "spike_vgg16", "spike_resnet50"):
    layers = bundled_model(model)
    for cores in (32, 64):
        if cores < len(layers):
            print(f"skip {model}@{cores}: {len(layers)} layers need at least {len(layers)} cores")
            continue
        for mode in ("inference", "training"):
            g = build_taskgraph(partition_model(layers, hw, cores, mode), layers, mode, hw)
            path = out / f"{model}_{cores}_{mode}.json"
            save_taskgraph(g, path)
            print(f"{path}: {g.n} nodes, {len(g.edges)} edges, {g.total_bytes()} bytes")
