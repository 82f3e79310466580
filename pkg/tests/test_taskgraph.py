import json

import pytest
from hypothesis import given, strategies as st

from coreplace.taskgraph import (
    MODES,
    HardwareProfile,
    LayerSpec,
    ModelSpecError,
    build_taskgraph,
    bundled_model,
    estimate_layer_cost,
    latency_ratio,
    load_model_spec,
    load_taskgraph,
    make_graph,
    node_features,
    parse_model_spec,
    partition_model,
    partition_uniform,
    recompute_latency,
    save_model_spec,
    save_taskgraph,
    split_layer,
)

HW = HardwareProfile()


def conv(id, c, k, kernel=3, out=8, t=4, **kw):
    return LayerSpec(id, "conv", c, k, (kernel, kernel), (out, out), t, **kw)


# --------------------------------------------------------------------------- cost model


def test_fp_ops_small_conv():
    layer = conv("a", 3, 4, kernel=3, out=8, t=2)
    cost = estimate_layer_cost(layer, HW, "inference")
    assert cost.fp_ops == 13824
    assert cost.total_ops == 13824
    assert estimate_layer_cost(layer, HW, "training").total_ops == 41472


def test_fp_ops_resnet18_conv1():
    layer = LayerSpec("conv1", "conv", 3, 64, (7, 7), (112, 112), 4)
    # 4 * 64 * 3 * 49 * 12544
    assert estimate_layer_cost(layer, HW).fp_ops == 472055808


def test_activation_bytes():
    layer = conv("a", 3, 5, out=3)  # 45 elements per timestep
    cost = estimate_layer_cost(layer, HW)
    assert cost.spike_bytes == 6
    assert cost.grad_bytes == 90


@given(
    c=st.integers(1, 64), k=st.integers(1, 64), kh=st.integers(1, 7), kw=st.integers(1, 7)
)
def test_weight_bytes_identity(c, k, kh, kw):
    layer = LayerSpec("x", "conv", c, k, (kh, kw), (4, 4))
    assert layer.weight_bytes == c * k * kh * kw * 2


def test_zero_dims_rejected():
    with pytest.raises(ModelSpecError):
        LayerSpec("x", "conv", 0, 4)
    with pytest.raises(ModelSpecError):
        LayerSpec("x", "conv", 4, 4, (3, 3), (0, 8))


def test_hardware_validation():
    with pytest.raises(ValueError):
        HardwareProfile(macs_per_core=200)  # not a square
    with pytest.raises(ValueError):
        HardwareProfile(link_bandwidth=0)
    assert HardwareProfile.from_dict(HW.to_dict()) == HW


def test_cost_model_pure():
    layer = conv("a", 16, 32)
    assert estimate_layer_cost(layer, HW, "training") == estimate_layer_cost(layer, HW, "training")


# --------------------------------------------------------------------------- partitioning


def test_proportional_allocation_3_to_1():
    # same spatial dims, 3x the output channels -> 3x the cost
    layers = [conv("a", 8, 48), conv("b", 8, 16)]
    slices = partition_model(layers, HW, 4)
    assert [s.layer_id for s in slices] == ["a", "a", "a", "b"]


def test_symmetric_split():
    layer = conv("a", 4, 8)
    assert [s.k_range for s in split_layer(layer, 2, HW, "inference")] == [(0, 4), (4, 8)]


def test_c_split_when_slices_exceed_k():
    layer = conv("a", 4, 2)
    slices = split_layer(layer, 4, HW, "inference")
    assert [(s.k_range, s.c_range) for s in slices] == [
        ((0, 1), (0, 2)),
        ((0, 1), (2, 4)),
        ((1, 2), (0, 2)),
        ((1, 2), (2, 4)),
    ]


def test_infeasible_core_count():
    with pytest.raises(ValueError, match="infeasible"):
        partition_model([conv("a", 4, 4), conv("b", 4, 4)], HW, 1)


def _check_tiling(layers, slices):
    for layer in layers:
        mine = [s for s in slices if s.layer_id == layer.id]
        cells = sorted((k, c) for s in mine for k in range(*s.k_range) for c in range(*s.c_range))
        assert cells == [(k, c) for k in range(layer.out_channels) for c in range(layer.in_channels)]


@pytest.mark.parametrize("name", ["spike_resnet18", "spike_vgg16", "toy8"])
@pytest.mark.parametrize("mode", MODES)
def test_partition_tiles_and_counts(name, mode):
    layers = bundled_model(name)
    slices = partition_model(layers, HW, 32, mode)
    assert len(slices) == 32
    _check_tiling(layers, slices)
    for s in slices:
        assert s.resident_weight_bytes + s.overflow_weight_bytes == s.weight_bytes
        assert recompute_latency(s, HW) == s.est_latency_cycles


@given(
    ks=st.lists(st.integers(1, 24), min_size=1, max_size=5),
    extra=st.integers(0, 10),
    mode=st.sampled_from(MODES),
)
def test_partition_tiling_property(ks, extra, mode):
    layers = [conv(f"l{i}", 4, k, out=4 + i) for i, k in enumerate(ks)]
    n = len(layers) + extra
    slices = partition_model(layers, HW, n, mode)
    assert len(slices) == n
    _check_tiling(layers, slices)


@given(k=st.integers(2, 64), n=st.integers(1, 16))
def test_balance_dominance_single_layer(k, n):
    layer = conv("a", 8, k)
    n = min(n, k)
    balanced = partition_model([layer], HW, n)
    uniform = partition_uniform([layer], HW, n)
    assert max(s.est_latency_cycles for s in balanced) <= max(s.est_latency_cycles for s in uniform)


def test_resnet18_balance_better_than_uniform():
    layers = bundled_model("spike_resnet18")
    for mode in MODES:
        assert latency_ratio(partition_model(layers, HW, 32, mode)) < latency_ratio(
            partition_uniform(layers, HW, 32, mode)
        )


def test_overflow_charged():
    hw = HardwareProfile(sram_bytes_per_core=1024)
    layer = conv("a", 64, 64)  # 73728 weight bytes, 768 resident
    (s,) = split_layer(layer, 1, hw, "inference")
    assert s.resident_weight_bytes == 768
    assert s.overflow_weight_bytes == 73728 - 768
    assert s.est_latency_cycles == -(-s.fp_ops // 256) + -(-(73728 - 768) // 8)


# --------------------------------------------------------------------------- task graph


def _graph(layers, n, mode="inference"):
    return build_taskgraph(partition_model(layers, HW, n, mode), layers, mode, HW)


def test_single_consumer_not_multicast():
    g = _graph([conv("a", 4, 4), conv("b", 4, 4)], 2)
    assert [(e.src, e.dst) for e in g.edges] == [(0, 1)]
    assert not g.nodes[0].multicast
    assert g.nodes[0].degree_out == 1


def test_fanout_three_is_multicast():
    layers = [conv("a", 4, 4, out=2), conv("b", 4, 300, out=8)]
    slices = split_layer(layers[0], 1, HW, "inference") + split_layer(layers[1], 3, HW, "inference")
    g = build_taskgraph(slices, layers, "inference", HW)
    assert g.nodes[0].multicast and g.nodes[0].degree_out == 3


def test_forward_volume_is_packed_spikes():
    layers = [conv("a", 4, 4, out=3, t=2), conv("b", 4, 4)]
    g = _graph(layers, 2)
    # 4 channels * 9 elems = 36 bits -> 5 bytes per timestep
    assert g.edges[0].bytes == 10


def test_training_adds_reverse_edges():
    layers = [conv("a", 4, 8), conv("b", 8, 8), conv("c", 8, 4)]
    inf = _graph(layers, 5, "inference")
    tr = _graph(layers, 5, "training")
    assert all(e.kind == "fwd" for e in inf.edges)
    fwd = [e for e in tr.edges if e.kind == "fwd"]
    bwd = [e for e in tr.edges if e.kind == "bwd"]
    assert len(fwd) == len(bwd) == len(inf.edges)
    assert {(e.dst, e.src) for e in bwd} == {(e.src, e.dst) for e in fwd}
    assert tr.total_bytes() >= inf.total_bytes()


def test_residual_edges_present():
    layers = bundled_model("spike_resnet18")
    g = _graph(layers, 32)
    g.validate()
    by_layer = {}
    for nd in g.nodes:
        by_layer.setdefault(nd.slice.layer_id, []).append(nd.id)
    pairs = {(e.src, e.dst) for e in g.edges}
    # layer2 adds the block input (conv1's output) to its own
    res = [l for l in layers if l.residual][0]
    src_nodes = by_layer[res.residual]
    dst_nodes = by_layer[res.id]
    assert any((u, v) in pairs for u in src_nodes for v in dst_nodes)


@pytest.mark.parametrize("name", ["spike_resnet18", "spike_vgg16", "spike_resnet50", "toy8"])
def test_feature_consistency_bundled(name):
    layers = bundled_model(name)
    n = 64 if name == "spike_resnet50" else 32
    for mode in MODES:
        g = _graph(layers, n, mode)
        g.validate()
        feats = node_features(g.n, g.edges)
        for nd in g.nodes:
            assert (nd.multicast, nd.degree_in, nd.degree_out, nd.bytes_in, nd.bytes_out) == feats[nd.id]
            assert nd.multicast == (nd.degree_out > 1)


def test_mode_monotonicity_bundled():
    layers = bundled_model("toy8")
    s = partition_model(layers, HW, 32, "training")
    assert build_taskgraph(s, layers, "training", HW).total_bytes() >= build_taskgraph(
        s, layers, "inference", HW
    ).total_bytes()


def test_validate_rejects_inconsistent_features():
    g = make_graph(2, [(0, 1, 5)])
    g.nodes[0].bytes_out = 4
    with pytest.raises(ModelSpecError, match="node 0"):
        g.validate()
    with pytest.raises(ModelSpecError, match="cycle"):
        make_graph(2, [(0, 1, 1), (1, 0, 1)]).validate()


# --------------------------------------------------------------------------- files


def test_model_roundtrip(tmp_path):
    layers = [conv("a", 3, 8), conv("b", 8, 8), LayerSpec("fc", "fc", 8, 10)]
    save_model_spec(layers, tmp_path / "m.json")
    assert load_model_spec(tmp_path / "m.json") == layers


def test_taskgraph_roundtrip(tmp_path):
    layers = bundled_model("toy8")
    for mode in MODES:
        g = _graph(layers, 32, mode)
        save_taskgraph(g, tmp_path / "g.json")
        assert load_taskgraph(tmp_path / "g.json") == g


def test_missing_field_named():
    doc = {"layers": [{"id": "a", "kind": "conv", "in_channels": 3}]}
    with pytest.raises(ModelSpecError, match="layers\\[0\\].*'out_channels'"):
        parse_model_spec(doc)


def test_unknown_kind_lists_supported():
    doc = {"layers": [{"id": "p", "kind": "pool", "in_channels": 3, "out_channels": 3}]}
    with pytest.raises(ModelSpecError, match="pool.*supported kinds.*conv.*fc"):
        parse_model_spec(doc)


def test_bad_json_reports_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"layers": [\n  {"id": "a",,}\n]}')
    with pytest.raises(ModelSpecError, match="line 2"):
        load_model_spec(p)


def test_taskgraph_file_schema_error(tmp_path):
    p = tmp_path / "g.json"
    p.write_text(json.dumps({"mode": "inference", "nodes": [{"id": 0}], "edges": []}))
    with pytest.raises(ModelSpecError, match="nodes\\[0\\].*'multicast'"):
        load_taskgraph(p)


def test_bundled_models():
    assert len(bundled_model("spike_resnet18")) == 17
    assert len(bundled_model("spike_resnet50")) == 49
    assert len(bundled_model("spike_vgg16")) == 16
    with pytest.raises(FileNotFoundError, match="available"):
        bundled_model("nope")
