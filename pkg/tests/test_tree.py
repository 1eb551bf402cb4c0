import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nested_bandits import (
    build_tree,
    lineage,
    random_tree,
    symmetric_tree,
    tree_constants,
    tree_from_nodes,
    tree_to_dict,
)
from nested_bandits.errors import (
    EmptyClass,
    NoLeaves,
    NonNestedPartition,
    RangeNormalizationViolated,
    UnknownClass,
)
from conftest import red_blue_bus_tree


def test_symmetric_binary_three_levels():
    t = symmetric_tree([2, 2, 2], [0.5, 0.3, 0.2])
    assert t.num_levels == 3
    assert t.num_leaves == 8
    assert t.num_nodes == 15
    assert [len(t.nodes_at_level(l)) for l in range(4)] == [1, 2, 4, 8]
    # every leaf's range path sums to 1
    sums = t.range_[t.lineage_nodes].sum(axis=1)
    assert np.allclose(sums, 1.0)


def test_flat_tree_degenerate():
    t = symmetric_tree([5], [1.0])
    assert t.num_levels == 1
    assert t.num_leaves == 5
    assert t.children(0).tolist() == [1, 2, 3, 4, 5]


def test_red_blue_bus_shape():
    t = red_blue_bus_tree(2)
    assert t.num_leaves == 3
    assert t.num_levels == 2
    # bus carries two colors, car a single child
    assert len(t.children(1)) == 2
    assert len(t.children(2)) == 1
    sums = t.range_[t.lineage_nodes].sum(axis=1)
    assert np.allclose(sums, 1.0)


def test_single_arm_tree_allowed():
    t = symmetric_tree([1], [1.0])
    assert t.num_leaves == 1


def test_build_errors():
    with pytest.raises(NonNestedPartition):
        tree_from_nodes([
            {"id": 0, "level": 0, "parent": None},
            {"id": 1, "level": 2, "parent": 0, "range": 0.5},
        ])
    with pytest.raises(RangeNormalizationViolated):
        symmetric_tree([2, 2], [0.8, 0.5])
    with pytest.raises(NoLeaves):
        build_tree({})


def test_empty_class_detected():
    nodes = [
        {"id": 0, "level": 0, "parent": None},
        {"id": 1, "level": 1, "parent": 0, "range": 0.4},
        {"id": 2, "level": 1, "parent": 0, "range": 0.4},
        {"id": 3, "level": 2, "parent": 1, "range": 0.1},
    ]
    with pytest.raises(EmptyClass):
        tree_from_nodes(nodes)


def test_lineage():
    t = symmetric_tree([2, 2, 2], [0.4, 0.3, 0.2])
    leaf = t.leaf_of_arm(2)  # third leaf sits under the second level-2 class
    chain = lineage(t, leaf)
    assert len(chain) == 3
    assert chain[-1] == leaf
    for a, b in zip(chain, chain[1:]):
        assert t.parent[b] == a
    assert lineage(t, t.root) == []
    flat = symmetric_tree([5], [1.0])
    assert lineage(flat, flat.leaf_of_arm(3)) == [flat.leaf_of_arm(3)]
    with pytest.raises(UnknownClass):
        lineage(t, 99)


def test_constants_red_blue_bus():
    c = tree_constants(red_blue_bus_tree(2))
    assert c.m == (2, 3)
    assert c.r_bar[0] == pytest.approx(1.0)
    assert c.r_bar[1] == 0.0
    assert c.n_eff == 2.0  # exact
    assert c.K == (2, 2)


def test_constants_two_classes_hundred_leaves():
    nodes = [{"id": 0, "level": 0, "parent": None}]
    nid = 1
    for g in range(2):
        nodes.append({"id": nid, "level": 1, "parent": 0, "range": 1.0})
        parent = nid
        nid += 1
        for _ in range(100):
            nodes.append({"id": nid, "level": 2, "parent": parent, "range": 0.0})
            nid += 1
    t = tree_from_nodes(nodes)
    c = tree_constants(t)
    assert t.num_leaves == 200
    assert c.n_eff == pytest.approx(2.0, rel=1e-12)
    assert c.rho == pytest.approx(10.0, rel=0.01)


def test_constants_flat():
    c = tree_constants(symmetric_tree([7], [1.0]))
    assert c.n_eff == 7.0  # exact
    assert c.rho == 1.0


@given(seed=st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_n_eff_at_most_num_leaves(seed):
    t = random_tree(np.random.default_rng(seed), max_leaves=120)
    c = tree_constants(t)
    assert c.n_eff <= t.num_leaves + 1e-9
    assert c.rho >= 1.0 - 1e-12
    # lineage has one class per level and the level-l entry contains the leaf
    for pos in range(t.num_leaves):
        chain = lineage(t, int(t.node_of_leafpos[pos]))
        assert [int(t.level[v]) for v in chain] == list(range(1, t.num_levels + 1))
        for v in chain:
            assert t.leaf_lo[v] <= pos < t.leaf_hi[v]


def test_serialization_round_trip(rng):
    t = random_tree(rng, max_leaves=60)
    d = tree_to_dict(t)
    t2 = build_tree(json.loads(json.dumps(d)))
    assert t2.num_nodes == t.num_nodes
    assert np.array_equal(t2.level, t.level)
    assert np.array_equal(t2.parent, t.parent)
    assert np.array_equal(t2.range_, t.range_)
    assert np.array_equal(t2.arm_of_leafpos, t.arm_of_leafpos)


def test_symmetric_shorthand_via_build_tree():
    t = build_tree({"symmetric": {"children": [2, 3], "ranges": [0.5, 0.5]}})
    assert t.num_leaves == 6
    assert tree_constants(t).m == (2, 6)


def test_parent_indexed_ranges_translate():
    nodes = [
        {"id": 0, "level": 0, "parent": None, "range": 0.7},
        {"id": 1, "level": 1, "parent": 0, "range": 0.3},
        {"id": 2, "level": 1, "parent": 0, "range": 0.3},
        {"id": 3, "level": 2, "parent": 1},
        {"id": 4, "level": 2, "parent": 2},
    ]
    t = tree_from_nodes(nodes, range_convention="per_parent")
    # children inherit the parent's value: level-1 classes get the root's 0.7
    assert np.allclose(t.range_[t.nodes_at_level(1)], 0.7)
    assert np.allclose(t.range_[t.nodes_at_level(2)], 0.3)


def test_explicit_arm_order():
    nodes = [
        {"id": 0, "level": 0, "parent": None},
        {"id": 10, "level": 1, "parent": 0, "range": 0.5},
        {"id": 11, "level": 1, "parent": 0, "range": 0.5},
    ]
    t = tree_from_nodes(nodes, arms=[11, 10])
    assert t.leaf_of_arm(0) == 2  # id 11 maps to BFS id 2 but arm 0
    assert t.leaf_of_arm(1) == 1
    assert t.arm_of_leaf(1) == 1


def test_tree_is_immutable():
    t = symmetric_tree([2], [1.0])
    with pytest.raises(ValueError):
        t.range_[1] = 5.0
