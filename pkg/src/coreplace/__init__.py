"""Partition SNN models into logical cores, place them on a 2D mesh, and simulate the result."""

__version__ = "0.1.0"

from .mesh import Mesh, Placement, communication_cost, directional_loads, hop_histogram, hops, route
from .placement import (
    EngineConfig,
    place_oracle,
    place_random_search,
    place_snake,
    place_zigzag,
    resolve_conflicts,
)
from .rl import RLConfig, train
from .sim import SimConfig, simulate, utilization_waveform
from .taskgraph import (
    HardwareProfile,
    LayerSpec,
    TaskGraph,
    build_taskgraph,
    bundled_model,
    estimate_layer_cost,
    partition_model,
)

__all__ = [
    "EngineConfig",
    "HardwareProfile",
    "LayerSpec",
    "Mesh",
    "Placement",
    "RLConfig",
    "SimConfig",
    "TaskGraph",
    "build_taskgraph",
    "bundled_model",
    "communication_cost",
    "directional_loads",
    "estimate_layer_cost",
    "hop_histogram",
    "hops",
    "partition_model",
    "place_oracle",
    "place_random_search",
    "place_snake",
    "place_zigzag",
    "resolve_conflicts",
    "route",
    "simulate",
    "train",
    "utilization_waveform",
]
