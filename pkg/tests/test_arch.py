import dataclasses
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfgrow.arch import (
    ArchGraph,
    AxisUsage,
    GammaVar,
    WeightSpec,
    arch_from_json,
    arch_to_json,
    build_attention_block,
    build_mlp,
    build_skip_block,
    compute_partition,
    format_partition,
)
from mfgrow.errors import ParameterError, StructureError


class TestReferencePartitions:
    def test_four_layer_skip_net(self):
        g = build_mlp(4, 16, with_bias=True, with_skip=True)
        p = compute_partition(g)
        assert p.groups == ((1,), (2, 3), (4,))
        assert p.widths == (16, 16, 1)
        assert p.resizable == (True, True, False)

    def test_skip_block(self):
        p = compute_partition(build_skip_block(8))
        assert p.groups == ((1,), (2, 5), (3,), (4,))
        assert p.widths == (8, 8, 8, 8)

    def test_attention_block(self):
        g = build_attention_block(8, 6)
        assert len(g.gammas) == 7
        p = compute_partition(g)
        assert p.groups == ((1,), (2, 3, 4), (5,), (6,), (7,))

    def test_attention_width_one(self):
        p = compute_partition(build_attention_block(1, 1))
        assert p.groups == ((1,), (2, 3, 4), (5,), (6,), (7,))
        assert p.widths == (1, 1, 1, 1, 1)

    def test_plain_chain_all_singletons(self):
        p = compute_partition(build_mlp(5, 8))
        assert p.groups == ((1,), (2,), (3,), (4,))

    def test_two_layer(self):
        g = build_mlp(2, 8)
        assert {w.name for w in g.weights} == {"u", "v"}
        p = compute_partition(g)
        assert p.groups == ((1,),)

    def test_five_layer_weight_count(self):
        g = build_mlp(5, 8)
        assert len(g.weights) == 5


class TestPartitionProperties:
    def test_idempotent(self):
        g = build_mlp(4, 8, with_bias=True, with_skip=True)
        assert compute_partition(g) == compute_partition(g)

    @settings(max_examples=25, deadline=None)
    @given(st.randoms(use_true_random=False))
    def test_usage_permutation_invariance(self, rnd):
        g = build_attention_block(4, 3)
        usages = list(g.usages)
        rnd.shuffle(usages)
        shuffled = dataclasses.replace(g, usages=tuple(usages))
        assert compute_partition(shuffled) == compute_partition(g)

    def test_adding_usage_only_coarsens(self):
        g = build_mlp(5, 8)
        base = compute_partition(g)
        # Reuse gamma 2 on w2's row axis (currently gamma 3): forces a merge.
        extra = dataclasses.replace(g, usages=g.usages + (AxisUsage("w2", "row", 2),))
        merged = compute_partition(extra)
        base_groups = [set(grp) for grp in base.groups]
        for grp in merged.groups:
            covered = [bg for bg in base_groups if bg & set(grp)]
            assert set().union(*covered) == set(grp)
        assert len(merged) < len(base)

    def test_group_widths_equal_checked(self):
        weights = (
            WeightSpec("a", "matrix", (4, 8)),
            WeightSpec("b", "vector", (8,)),
        )
        usages = (
            AxisUsage("a", "row", 1),
            AxisUsage("a", "col", 2),
            AxisUsage("a", "row", 3),  # same axis as gamma 1, width conflict below
            AxisUsage("b", "row", 2),
        )
        gammas = (GammaVar(1, 4), GammaVar(2, 8), GammaVar(3, 4))
        g = ArchGraph(weights, usages, gammas, "MFP", topology="fragment")
        p = compute_partition(g)
        assert p.group_of(1) == p.group_of(3)

    def test_forced_merge_width_conflict_raises(self):
        weights = (WeightSpec("a", "matrix", (4, 8)),)
        usages = (
            AxisUsage("a", "row", 1),
            AxisUsage("a", "col", 2),
            AxisUsage("a", "col", 3),
        )
        # Gamma 3 declared with the wrong width: validation names the axis.
        gammas = (GammaVar(1, 4), GammaVar(2, 8), GammaVar(3, 4))
        g = ArchGraph(weights, usages, gammas, "MFP", topology="fragment")
        with pytest.raises(StructureError, match="a"):
            compute_partition(g)


class TestBuilders:
    def test_depth_below_two_rejected(self):
        with pytest.raises(ParameterError):
            build_mlp(1, 8)

    def test_skip_requires_depth_four(self):
        with pytest.raises(ParameterError):
            build_mlp(5, 8, with_skip=True)

    def test_cifar_shape_conventions(self):
        g = build_mlp(3, 300, with_bias=True, input_dim=3072, output_dim=10)
        assert g.weight("u").shape == (300, 3072)
        assert g.weight("w1").shape == (300, 300)
        assert g.weight("v").shape == (10, 300)
        p = compute_partition(g)
        assert sorted(p.widths) == [10, 300, 300, 3072]
        assert sum(p.resizable) == 2

    def test_hidden_widths(self):
        g = build_mlp(3, 300, with_bias=True, input_dim=3072, output_dim=10)
        assert g.hidden_widths == {300}

    def test_format_partition(self):
        g = build_mlp(4, 16, with_bias=True, with_skip=True)
        text = format_partition(compute_partition(g))
        lines = text.splitlines()
        assert lines[0] == "Γ_1: {γ_1} width=16"
        assert lines[1] == "Γ_2: {γ_2, γ_3} width=16"
        assert lines[2] == "Γ_3: {γ_4} width=1"


class TestValidation:
    def test_uncovered_axis_rejected_for_trainable(self):
        weights = (WeightSpec("a", "matrix", (4, 4)),)
        usages = (AxisUsage("a", "row", 1),)
        gammas = (GammaVar(1, 4),)
        g = ArchGraph(weights, usages, gammas, "MFP", topology="chain")
        with pytest.raises(StructureError, match="col"):
            g.validate()

    def test_vector_col_usage_rejected(self):
        weights = (WeightSpec("b", "vector", (4,)),)
        usages = (AxisUsage("b", "col", 1),)
        gammas = (GammaVar(1, 4),)
        with pytest.raises(StructureError):
            ArchGraph(weights, usages, gammas, "MFP", topology="fragment").validate()

    def test_unused_gamma_rejected(self):
        weights = (WeightSpec("b", "vector", (4,)),)
        usages = (AxisUsage("b", "row", 1),)
        gammas = (GammaVar(1, 4), GammaVar(2, 4))
        with pytest.raises(StructureError, match="never used"):
            ArchGraph(weights, usages, gammas, "MFP", topology="fragment").validate()


class TestJson:
    def test_round_trip(self):
        g = build_mlp(4, 8, with_bias=True, with_skip=True)
        assert arch_from_json(arch_to_json(g)) == g

    def test_minimal_keys_accepted(self):
        doc = {
            "parametrization": "MFP",
            "weights": [
                {"name": "u", "kind": "vector", "shape": [8]},
                {"name": "v", "kind": "vector", "shape": [8]},
            ],
            "usages": [
                {"weight": "u", "axis": "row", "gamma": 1},
                {"weight": "v", "axis": "row", "gamma": 1},
            ],
        }
        g = arch_from_json(json.dumps(doc))
        assert compute_partition(g).groups == ((1,),)

    def test_unknown_key_rejected(self):
        doc = {"parametrization": "MFP", "weights": [], "usages": [], "bogus": 1}
        with pytest.raises(StructureError, match="bogus"):
            arch_from_json(json.dumps(doc))

    def test_invalid_json_rejected(self):
        with pytest.raises(StructureError):
            arch_from_json("{not json")
