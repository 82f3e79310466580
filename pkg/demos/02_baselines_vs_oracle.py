"""Baseline placers against the exhaustive oracle on small random graphs (6 nodes, 2x3 mesh)."""
# %%
from coreplace.instances import random_dag
from coreplace.mesh import Mesh, communication_cost
from coreplace.placement import EngineConfig, place_oracle, place_random_search, place_snake, place_zigzag

mesh = Mesh(2, 3)
print("seed  oracle  zigzag  snake  random(1000)")
for seed in range(10):
    g = random_dag(6, seed)
    rs, trace = place_random_search(g, mesh, EngineConfig("random", seed=seed, iterations=1000))
    row = [place_oracle(g, mesh), place_zigzag(g, mesh), place_snake(g, mesh), rs]
    print(f"{seed:4d}  " + "  ".join(f"{communication_cost(g, p):6d}" for p in row))

# %% random search converges fast at this size: 6!/(0!) = 720 placements in total
print("best-so-far after 1, 10, 100, 1000 draws:", [trace[i] for i in (0, 9, 99, 999)])
