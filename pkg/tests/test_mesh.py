import numpy as np
import pytest
from hypothesis import given, strategies as st

from coreplace.instances import random_dag, ring_graph
from coreplace.mesh import (
    STEP,
    Mesh,
    Placement,
    PlacementError,
    communication_cost,
    directional_loads,
    hop_histogram,
    hops,
    load_placement,
    read_heatmap,
    route,
    save_placement,
    write_heatmap,
)
from coreplace.taskgraph import ModelSpecError, make_graph


@st.composite
def graph_and_placement(draw, max_side=8):
    w = draw(st.integers(1, max_side))
    h = draw(st.integers(1, max_side))
    mesh = Mesh(w, h)
    n = draw(st.integers(1, min(12, w * h)))
    seed = draw(st.integers(0, 2**32 - 1))
    g = random_dag(n, seed, edge_prob=0.4, max_bytes=1000)
    cells = np.random.default_rng(seed).permutation(w * h)[:n]
    p = Placement(mesh, {i: (int(c % w), int(c // w)) for i, c in enumerate(cells)})
    return g, p, mesh


# --------------------------------------------------------------------------- routing


def test_route_examples():
    m = Mesh(4, 4)
    assert route(m, (0, 0), (0, 0)).hops == ()
    assert route(m, (0, 0), (2, 0)).hops == ("E", "E")
    assert route(m, (0, 0), (1, 1)).hops == ("E", "S")
    # north precedes east clockwise
    assert route(m, (0, 3), (2, 1)).hops == ("N", "N", "E", "E")
    assert route(m, (3, 3), (1, 1)).hops == ("N", "N", "W", "W")


def test_hops_examples():
    assert hops((0, 0), (1, 2)) == 3
    assert hops((3, 3), (3, 3)) == 0
    assert hops((0, 7), (3, 0)) == 10


@given(st.integers(1, 8), st.integers(1, 8), st.data())
def test_route_minimal_and_productive(w, h, data):
    m = Mesh(w, h)
    s = (data.draw(st.integers(0, w - 1)), data.draw(st.integers(0, h - 1)))
    d = (data.draw(st.integers(0, w - 1)), data.draw(st.integers(0, h - 1)))
    r = route(m, s, d)
    assert len(r.hops) == hops(s, d) == hops(d, s)
    cells = r.cells()
    assert cells[0] == s and cells[-1] == d
    for a, b in zip(cells, cells[1:]):
        assert hops(b, d) == hops(a, d) - 1
        assert m.contains(b)


def test_route_rejects_out_of_bounds():
    with pytest.raises(ValueError):
        route(Mesh(2, 2), (0, 0), (2, 0))


def test_mesh_basics():
    m = Mesh.parse("4x8")
    assert (m.width, m.height, m.n_cores) == (4, 8, 32)
    assert str(m) == "4x8"
    assert len(m.neighbors((0, 0))) == 2
    assert len(m.neighbors((1, 1))) == 4
    with pytest.raises(ValueError):
        Mesh.parse("4by8")


# --------------------------------------------------------------------------- placement type


def test_placement_validation():
    m = Mesh(2, 2)
    with pytest.raises(PlacementError, match="injective"):
        Placement(m, {0: (0, 0), 1: (0, 0)})
    with pytest.raises(PlacementError, match="out of bounds"):
        Placement(m, {0: (2, 0)})
    with pytest.raises(PlacementError, match="do not fit"):
        Placement(m, {i: (0, 0) for i in range(5)})


def test_placement_roundtrip(tmp_path):
    p = Placement(Mesh(3, 2), {0: (2, 1), 1: (0, 0)})
    save_placement(p, tmp_path / "p.json")
    assert load_placement(tmp_path / "p.json") == p
    (tmp_path / "bad.json").write_text('{"mesh": [2, 2], "assign": {"0": [0, 0], "1": [0, 0]}}')
    with pytest.raises(ModelSpecError, match="injective"):
        load_placement(tmp_path / "bad.json")


# --------------------------------------------------------------------------- metrics


def test_cost_examples():
    g = make_graph(2, [(0, 1, 10)])
    m = Mesh(2, 2)
    assert communication_cost(g, Placement(m, {0: (0, 0), 1: (1, 0)})) == 10
    ring = ring_graph(4)
    p = Placement(m, {0: (0, 0), 1: (1, 0), 2: (1, 1), 3: (0, 1)})
    assert communication_cost(ring, p) == 4


def test_unplaced_node_named():
    g = make_graph(3, [(0, 1, 1), (1, 2, 1)])
    with pytest.raises(PlacementError, match="node 2"):
        communication_cost(g, Placement(Mesh(2, 2), {0: (0, 0), 1: (1, 0)}))


def test_directional_loads_path_walk():
    g = make_graph(2, [(0, 1, 5)])
    m = Mesh(3, 1)
    loads = directional_loads(g, Placement(m, {0: (0, 0), 1: (2, 0)}), m)
    assert loads.right.tolist() == [[5, 5, 0]]
    assert loads.left.sum() == loads.up.sum() == loads.down.sum() == 0
    assert loads.total() == 10


def test_directional_loads_empty_graph():
    g = make_graph(3, [])
    p = Placement(Mesh(2, 2), {0: (0, 0), 1: (1, 0), 2: (0, 1)})
    assert directional_loads(g, p).total() == 0


@given(graph_and_placement())
def test_conservation_identity(gp):
    g, p, m = gp
    loads = directional_loads(g, p, m)
    assert loads.total() == communication_cost(g, p)
    assert (loads.volume >= 0).all()
    # border cores send nothing off-grid
    assert loads.left[:, 0].sum() == 0 and loads.right[:, -1].sum() == 0
    assert loads.up[0, :].sum() == 0 and loads.down[-1, :].sum() == 0


@given(graph_and_placement())
def test_mirror_invariance_and_lower_bound(gp):
    g, p, m = gp
    mirrored = Placement(m, {k: (m.width - 1 - x, y) for k, (x, y) in p.assign.items()})
    assert communication_cost(g, mirrored) == communication_cost(g, p)
    xy = p.coords(g.n)
    lower = sum(e.bytes for e in g.edges if tuple(xy[e.src]) != tuple(xy[e.dst]))
    assert communication_cost(g, p) >= lower


def test_hop_histogram_examples():
    chain = make_graph(3, [(0, 1, 1), (1, 2, 3)])
    h = hop_histogram(chain, Placement(Mesh(3, 1), {0: (0, 0), 1: (1, 0), 2: (2, 0)}))
    assert h["histogram"] == {1: 2}
    assert h["mean_hops"] == 1.0
    h = hop_histogram(chain, Placement(Mesh(3, 1), {0: (0, 0), 1: (2, 0), 2: (1, 0)}))
    assert h["histogram"] == {1: 1, 2: 1}
    assert h["mean_hops_bytes"] == pytest.approx((2 * 1 + 1 * 3) / 4)


def test_heatmap_roundtrip(tmp_path):
    g = random_dag(6, 3)
    m = Mesh(3, 2)
    p = Placement.from_array(m, np.array([[0, 0], [1, 0], [2, 0], [0, 1], [1, 1], [2, 1]]))
    grid = directional_loads(g, p).per_core()
    write_heatmap(grid, tmp_path / "h.csv")
    text = (tmp_path / "h.csv").read_text().splitlines()
    assert len(text) == 2 and all(len(r.split(",")) == 3 for r in text)
    assert (read_heatmap(tmp_path / "h.csv") == grid).all()


def test_step_table_consistent():
    assert {d: STEP[d] for d in "NESW"} == {"N": (0, -1), "E": (1, 0), "S": (0, 1), "W": (-1, 0)}
