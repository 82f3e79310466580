"""Train the PPO placement policy on Spike-ResNet18 (32 cores, 4x8 mesh) and compare with zigzag.

Usage: python3 03_train_policy.py [episodes] [mode]
"""
# %%
import sys
import time

from coreplace import rl
from coreplace.mesh import Mesh, communication_cost, directional_loads, hop_histogram
from coreplace.placement import place_snake, place_zigzag
from coreplace.taskgraph import HardwareProfile, build_taskgraph, bundled_model, partition_model

episodes = int(sys.argv[1]) if len(sys.argv) > 1 else 500
mode = sys.argv[2] if len(sys.argv) > 2 else "inference"
hw = HardwareProfile()
mesh = Mesh(4, 8)
layers = bundled_model("spike_resnet18")
g = build_taskgraph(partition_model(layers, hw, 32, mode), layers, mode, hw)

# %%
t0 = time.time()
res = rl.train(g, mesh, rl.RLConfig(episodes=episodes, seed=0))
print(f"{episodes} episodes in {time.time() - t0:.0f}s")
for ep, r, best in res.curve[:: max(1, episodes // 10)]:
    print(f"  episode {ep:5d}  mean reward {r:+.3f}  best cost {best}")

# %%
zig = place_zigzag(g, mesh)
for name, p in (("zigzag", zig), ("snake", place_snake(g, mesh)), ("rl", res.placement)):
    h = hop_histogram(g, p)
    print(
        f"{name:7s} cost {communication_cost(g, p):10d}  mean hops {h['mean_hops']:.3f}"
        f" (bytes-weighted {h['mean_hops_bytes']:.3f})  max fwd {directional_loads(g, p).per_core().max()}"
    )
print(f"reduction vs zigzag: {100 * (1 - res.best_cost / res.baseline_cost):.1f}%")
