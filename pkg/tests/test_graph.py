"""Graph assembly, shape inference, and serialization tests."""

import numpy as np
import pytest

from shuffleseg.graph import Graph, GraphBuilder, GraphError, LayerNode, infer_shapes
from shuffleseg.network import (
    DEFAULT_DPC_BRANCHES,
    DpcBranchSpec,
    NetworkSpec,
    build_backbone,
    build_basic_unit,
    build_downsample_unit,
    build_network,
    shape_summary,
)

TABLE_769 = {
    "Conv2D": (385, 385, 24),
    "MaxPool": (193, 193, 24),
    "Stage 2": (97, 97, 116),
    "Stage 3": (49, 49, 232),
    "Stage 4": (49, 49, 464),
    "Head": (49, 49, 512),
    "Conv2D 1x1": (49, 49, 256),
    "Conv2D logits": (49, 49, 19),
    "Bilinear Up": (769, 769, 19),
    "ArgMax": (769, 769, 1),
}


def unit_graph(channels, rate=1, kind="basic", **kwargs):
    b = GraphBuilder()
    src = b.add("input", "input", channels=channels)
    if kind == "basic":
        build_basic_unit(b, src, "unit", channels, rate=rate)
    else:
        build_downsample_unit(b, src, "unit", channels, **kwargs)
    return b.build()


class TestUnits:
    def test_basic_unit_preserves_shape_at_table_widths(self):
        for channels, rate, size in ((116, 1, 97), (464, 2, 49)):
            g = unit_graph(channels, rate=rate)
            shapes = infer_shapes(g, (1, channels, size, size))
            assert shapes[g.output_id] == (1, channels, size, size)

    def test_basic_unit_every_even_width(self):
        for channels in range(2, 65, 2):
            g = unit_graph(channels)
            shapes = infer_shapes(g, (1, channels, 9, 9))
            assert shapes[g.output_id] == (1, channels, 9, 9)

    def test_basic_unit_odd_channels_rejected(self):
        b = GraphBuilder()
        src = b.add("input", "input", channels=5)
        with pytest.raises(GraphError):
            build_basic_unit(b, src, "unit", 5)

    def test_downsample_unit_stage2_shape(self):
        g = unit_graph(24, kind="down", out_channels=116, stride=2)
        shapes = infer_shapes(g, (1, 24, 193, 193))
        assert shapes[g.output_id] == (1, 116, 97, 97)

    def test_downsample_unit_stride1_keeps_dims(self):
        for h, w in ((49, 49), (14, 15), (7, 9)):
            g = unit_graph(232, kind="down", out_channels=464, stride=1)
            shapes = infer_shapes(g, (1, 232, h, w))
            assert shapes[g.output_id] == (1, 464, h, w)

    def test_downsample_unit_odd_out_rejected(self):
        b = GraphBuilder()
        src = b.add("input", "input", channels=4)
        with pytest.raises(GraphError):
            build_downsample_unit(b, src, "unit", 4, 7)

    def test_downsample_unit_bad_stride_rejected(self):
        b = GraphBuilder()
        src = b.add("input", "input", channels=4)
        with pytest.raises(GraphError):
            build_downsample_unit(b, src, "unit", 4, 8, stride=3)


def backbone_graph(output_stride):
    b = GraphBuilder()
    src = b.add("input", "input", channels=3)
    build_backbone(b, src, output_stride=output_stride)
    return b.build()


class TestBackbone:
    def test_os16_final_features(self):
        g = backbone_graph(16)
        shapes = infer_shapes(g, (1, 3, 769, 769))
        assert shapes[g.output_id] == (1, 464, 49, 49)

    def test_os8_final_features(self):
        g = backbone_graph(8)
        shapes = infer_shapes(g, (1, 3, 769, 769))
        assert shapes[g.output_id] == (1, 464, 97, 97)

    def test_os16_at_224(self):
        g = backbone_graph(16)
        shapes = infer_shapes(g, (1, 3, 224, 224))
        assert shapes[g.output_id] == (1, 464, 14, 14)

    def test_os32_restores_classification_schedule(self):
        # Undoing the rewrite (all strides back to 2, all rates 1) reproduces
        # the 32-stride schedule: 224x224 -> 7x7x464.
        g = backbone_graph(32)
        shapes = infer_shapes(g, (1, 3, 224, 224))
        assert shapes[g.output_id] == (1, 464, 7, 7)
        for node in g.nodes:
            if node.kind == "dwconv":
                assert node.params["rate"] == [1, 1]

    def test_final_dims_match_output_stride(self):
        for os_ in (8, 16):
            g = backbone_graph(os_)
            for size in (769, 224, 513):
                shapes = infer_shapes(g, (1, 3, size, size))
                want = -(-size // os_)
                assert shapes[g.output_id][2:] == (want, want)

    def test_unit_counts(self):
        g = backbone_graph(16)
        for stage, count in (("stage2", 4), ("stage3", 8), ("stage4", 4)):
            units = {n.id.split("/")[1] for n in g.nodes
                     if n.id.startswith(stage + "/")}
            assert len(units) == count

    def test_stage4_rates_at_os16(self):
        g = backbone_graph(16)
        for node in g.nodes:
            if node.kind != "dwconv":
                continue
            stage = node.id.split("/")[0]
            expected = [2, 2] if (stage == "stage4" and "unit0" not in node.id) else [1, 1]
            assert node.params["rate"] == expected, node.id

    def test_unsupported_output_stride(self):
        with pytest.raises(GraphError):
            backbone_graph(12)


class TestFullNetwork:
    @pytest.mark.parametrize("head", ["basic", "dpc"])
    def test_table_rows_at_769(self, head):
        g = build_network(NetworkSpec(head=head))
        rows = shape_summary(g, (1, 3, 769, 769))
        assert len(rows) == len(TABLE_769)
        for label, node_id, hwc in rows:
            assert hwc == TABLE_769[label], (label, hwc)

    def test_logits_before_resize_at_224(self):
        g = build_network(NetworkSpec())
        shapes = infer_shapes(g, (1, 3, 224, 224))
        assert shapes["exit/logits"] == (1, 19, 14, 14)
        assert shapes["exit/resize"] == (1, 19, 224, 224)

    def test_num_classes_changes_only_tail_widths(self):
        base = build_network(NetworkSpec())
        other = build_network(NetworkSpec(num_classes=7))
        s1 = infer_shapes(base, (1, 3, 129, 129))
        s2 = infer_shapes(other, (1, 3, 129, 129))
        for node_id, shape in s1.items():
            if node_id in ("exit/logits", "exit/dropout", "exit/resize"):
                assert s2[node_id] == (shape[0], 7, shape[2], shape[3])
            else:
                assert s2[node_id] == shape

    def test_two_class_spec_gives_two_channel_logits(self):
        g = build_network(NetworkSpec(num_classes=2))
        shapes = infer_shapes(g, (1, 3, 65, 65))
        assert shapes["exit/logits"][1] == 2
        assert shapes["exit/resize"] == (1, 2, 65, 65)

    def test_inference_dropout_is_identity(self):
        import numpy as np
        from shuffleseg.runtime import execute
        from shuffleseg.weights import init_random

        g = build_network(NetworkSpec(num_classes=3))
        values = execute(g, init_random(g, seed=0),
                         np.zeros((1, 3, 33, 33), dtype=np.float32),
                         upto="exit/dropout")
        np.testing.assert_array_equal(values["exit/dropout"],
                                      values["exit/logits"])

    def test_dpc_branch_widths_before_projection(self):
        g = build_network(NetworkSpec(head="dpc"))
        shapes = infer_shapes(g, (1, 3, 769, 769))
        widths = [shapes[f"head/branch{i}/pw/relu"][1] for i in range(5)]
        assert widths == [b.width for b in DEFAULT_DPC_BRANCHES]
        assert shapes["head/concat"][1] == sum(widths)

    def test_dpc_branches_overridable(self):
        branches = tuple(DpcBranchSpec(-1, (r, r), 256) for r in (1, 2, 3, 4, 5))
        g = build_network(NetworkSpec(head="dpc", dpc_branches=branches))
        shapes = infer_shapes(g, (1, 3, 65, 65))
        assert shapes["head/concat"][1] == 5 * 256

    def test_dpc_forward_reference_rejected(self):
        with pytest.raises(GraphError):
            NetworkSpec(head="dpc", dpc_branches=(
                DpcBranchSpec(0, (1, 1), 64),))  # self-reference

    def test_invalid_spec_values(self):
        with pytest.raises(GraphError):
            NetworkSpec(output_stride=4)
        with pytest.raises(GraphError):
            NetworkSpec(num_classes=1)
        with pytest.raises(GraphError):
            NetworkSpec(head="fancy")
        with pytest.raises(GraphError):
            NetworkSpec(dropout_keep_prob=0.0)

    def test_depth_multiplier_scales_evenly(self):
        spec = NetworkSpec(depth_multiplier=0.5)
        widths = spec.stage_widths()
        assert all(wd % 2 == 0 for wd in widths)
        g = build_network(spec)
        shapes = infer_shapes(g, (1, 3, 129, 129))
        assert shapes["stage4/unit3/shuffle"][1] == widths[-1]


class TestShapeInferenceErrors:
    def test_mismatch_names_node_and_dims(self):
        nodes = [
            LayerNode("input", "input", (), {"channels": 3}),
            LayerNode("badconv", "conv", ("input",),
                      {"in_channels": 4, "out_channels": 8, "kernel": [1, 1],
                       "stride": [1, 1], "rate": [1, 1], "groups": 1, "bias": False}),
        ]
        g = Graph(nodes)
        with pytest.raises(GraphError, match="badconv"):
            infer_shapes(g, (1, 3, 8, 8))

    def test_input_channel_mismatch(self):
        g = build_network(NetworkSpec())
        with pytest.raises(GraphError, match="input"):
            infer_shapes(g, (1, 4, 64, 64))


class TestGraphStructure:
    def test_duplicate_id_rejected(self):
        nodes = [LayerNode("input", "input", (), {"channels": 3}),
                 LayerNode("input", "relu", ("input",), {})]
        with pytest.raises(GraphError, match="duplicate"):
            Graph(nodes)

    def test_forward_reference_rejected(self):
        nodes = [LayerNode("a", "relu", ("b",), {}),
                 LayerNode("b", "input", (), {"channels": 3})]
        with pytest.raises(GraphError):
            Graph(nodes)

    def test_two_terminals_rejected(self):
        nodes = [LayerNode("input", "input", (), {"channels": 3}),
                 LayerNode("a", "relu", ("input",), {}),
                 LayerNode("b", "relu", ("input",), {})]
        with pytest.raises(GraphError, match="output"):
            Graph(nodes)


class TestSerialization:
    def test_round_trip_stable(self):
        g = build_network(NetworkSpec(head="dpc"))
        text = g.to_json()
        g2 = Graph.from_json(text)
        assert g2.to_json() == text
        assert g2 == g
        assert g2.fingerprint() == g.fingerprint()

    def test_save_load(self, tmp_path):
        g = build_network(NetworkSpec())
        path = tmp_path / "net.graph.json"
        g.save(path)
        assert Graph.load(path) == g

    def test_fingerprint_distinguishes_configs(self):
        a = build_network(NetworkSpec(head="basic"))
        b = build_network(NetworkSpec(head="dpc"))
        c = build_network(NetworkSpec(output_stride=8))
        assert len({a.fingerprint(), b.fingerprint(), c.fingerprint()}) == 3

    def test_bad_format_rejected(self):
        with pytest.raises(GraphError):
            Graph.from_json('{"format": "something-else", "nodes": []}')
