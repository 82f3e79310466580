"""Layer-wise vs fine-grained (fpdeep) pipelining on the NoC simulator.

Writes sim_result.json / waveform.csv / heatmap.csv per run under ./sim_out.
"""
# %%
from coreplace.mesh import Mesh
from coreplace.placement import place_zigzag
from coreplace.sim import SimConfig, export, simulate
from coreplace.taskgraph import HardwareProfile, build_taskgraph, bundled_model, partition_model

hw = HardwareProfile()
mesh = Mesh(4, 8)
layers = bundled_model("spike_resnet18")

for mode in ("inference", "training"):
    g = build_taskgraph(partition_model(layers, hw, 32, mode), layers, mode, hw)
    p = place_zigzag(g, mesh)
    for pipe in ("layerwise", "fpdeep"):
        # 1 KiB chunks keep the event count small; the default is 64 B
        r = simulate(g, p, mesh, SimConfig(pipeline=pipe, mode=mode, chunk_bytes=1024))
        export(r, f"sim_out/{mode}_{pipe}")
        print(
            f"{mode:9s} {pipe:9s} makespan {r.makespan:10d}  {r.throughput:.5f} samples/kcycle"
            f"  utilization {r.mean_utilization():.3f}  peak queue {max(r.peak_queue.values())}"
        )
