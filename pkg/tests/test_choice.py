import numpy as np
import pytest

from nested_bandits import (
    UncertaintyParams,
    children_probs,
    class_prob_map,
    conditional_prob,
    leaf_distribution,
    propagate_scores,
    random_tree,
    sample_path,
    symmetric_tree,
    total_prob,
)
from nested_bandits.errors import NonFiniteScore, RootHasNoParent
from conftest import red_blue_bus_tree

# Arm order of the red/blue bus fixture: red=0, blue=1, car=2.
BUS_SCORES = np.array([-1.0, -1.0, -0.5])


def nested_bracket_root_score(children, mus):
    """Independent evaluation of the symmetric-tree root score at y=0:
    inner sums of ones raised to successive temperature ratios."""
    s = 1.0
    for lvl in range(len(children), 0, -1):
        expo = mus[lvl + 1] / mus[lvl] if lvl < len(children) else 1.0
        s = children[lvl - 1] * s ** expo
    return mus[1] * np.log(s)


def test_mu_validation():
    with pytest.raises(ValueError):
        UncertaintyParams((1.0, 2.0))  # increasing
    with pytest.raises(ValueError):
        UncertaintyParams((1.0, 0.0))
    UncertaintyParams((2.0, 1.0, 1.0))


def test_flat_zeros_root_is_log_n():
    t = symmetric_tree([6], [1.0])
    st = propagate_scores(t, UncertaintyParams.uniform(1.0, 1), np.zeros(6))
    assert st.class_scores[t.root] == pytest.approx(np.log(6), abs=1e-12)


def test_flat_car_bus_odds():
    t = symmetric_tree([2], [1.0])
    st = propagate_scores(t, UncertaintyParams.uniform(1.0, 1), np.array([-0.5, -1.0]))
    x = leaf_distribution(st)
    assert x[0] / x[1] == pytest.approx(np.exp(0.5), rel=1e-9)  # ~1.6487


def test_symmetric_root_score_vs_bracket_formula():
    for children, mus in [([2, 2, 2], [1.0, 1.0, 1.0]), ([3, 2], [2.0, 0.5]),
                          ([2, 3, 2], [1.5, 1.0, 0.25])]:
        t = symmetric_tree(children, [0.5 / len(children)] * len(children))
        mu = UncertaintyParams(tuple(mus))
        st = propagate_scores(t, mu, np.zeros(t.num_leaves))
        expect = nested_bracket_root_score(children, {i + 1: m for i, m in enumerate(mus)})
        assert st.class_scores[t.root] == pytest.approx(expect, abs=1e-9)


def test_propagation_invariant_on_each_class(rng):
    t = random_tree(rng, max_leaves=40)
    mu = UncertaintyParams(tuple(sorted(rng.uniform(0.2, 2.0, t.num_levels), reverse=True)))
    y = rng.normal(size=t.num_leaves) * 3
    st = propagate_scores(t, mu, y)
    for v in range(t.num_nodes):
        if t.is_leaf(v):
            continue
        kids = t.children(v)
        m = mu.of_level(int(t.level[v]) + 1)
        direct = m * np.log(np.sum(np.exp(st.class_scores[kids] / m)))
        assert st.class_scores[v] == pytest.approx(direct, rel=1e-9, abs=1e-9)


def test_non_finite_scores_rejected():
    t = symmetric_tree([3], [1.0])
    with pytest.raises(NonFiniteScore):
        propagate_scores(t, UncertaintyParams.uniform(1.0, 1), np.array([0.0, np.nan, 1.0]))


def test_conditional_binary_zero_scores():
    t = symmetric_tree([2, 2], [0.5, 0.5])
    st = propagate_scores(t, UncertaintyParams.uniform(1.0, 2), np.zeros(4))
    for child in range(1, t.num_nodes):
        assert conditional_prob(st, child) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(RootHasNoParent):
        conditional_prob(st, t.root)


def test_red_blue_bus_level1_probability():
    t = red_blue_bus_tree(2)
    st = propagate_scores(t, UncertaintyParams.uniform(1.0, 2), BUS_SCORES)
    p_car = conditional_prob(st, 2)
    expect = np.exp(-0.5) / (np.exp(-0.5) + 2 * np.exp(-1.0))
    assert p_car == pytest.approx(expect, rel=1e-9)         # ~0.4519
    odds = p_car / conditional_prob(st, 1)
    assert odds == pytest.approx(np.exp(-0.5) / (2 * np.exp(-1.0)), rel=1e-9)  # ~0.824


def test_conditionals_sum_to_one(rng):
    for _ in range(5):
        t = random_tree(rng, max_leaves=50)
        mu = UncertaintyParams(tuple(sorted(rng.uniform(0.3, 2.0, t.num_levels), reverse=True)))
        st = propagate_scores(t, mu, rng.normal(size=t.num_leaves) * 5)
        for v in range(t.num_nodes):
            if not t.is_leaf(v):
                assert children_probs(st, v).sum() == pytest.approx(1.0, abs=1e-9)


def test_total_prob_uniform_symmetric():
    t = symmetric_tree([2, 3], [0.5, 0.5])
    st = propagate_scores(t, UncertaintyParams.uniform(1.0, 2), np.zeros(6))
    for arm in range(6):
        assert total_prob(st, t.leaf_of_arm(arm)) == pytest.approx(1 / 6, abs=1e-12)


def test_equal_mu_collapses_to_flat_softmax(rng):
    for _ in range(5):
        t = random_tree(rng, min_levels=2, max_leaves=40)
        m = float(rng.uniform(0.4, 2.0))
        mu = UncertaintyParams.uniform(m, t.num_levels)
        y = rng.normal(size=t.num_leaves) * 2
        st = propagate_scores(t, mu, y)
        x = leaf_distribution(st)
        z = np.exp((y - y.max()) / m)
        assert np.allclose(x, z / z.sum(), atol=1e-9)


def test_class_total_equals_sum_of_leaf_totals(rng):
    t = random_tree(rng, min_levels=2, max_leaves=40)
    mu = UncertaintyParams(tuple(sorted(rng.uniform(0.3, 1.5, t.num_levels), reverse=True)))
    st = propagate_scores(t, mu, rng.normal(size=t.num_leaves))
    x = leaf_distribution(st)
    for v in range(1, t.num_nodes):
        leaf_sum = sum(
            x[t.arm_of_leafpos[pos]] for pos in range(t.leaf_lo[v], t.leaf_hi[v]))
        assert total_prob(st, v) == pytest.approx(leaf_sum, rel=1e-9, abs=1e-12)


def test_leaf_distribution_normalized(rng):
    for _ in range(10):
        t = random_tree(rng, max_leaves=80)
        mu = UncertaintyParams(tuple(sorted(rng.uniform(0.2, 2.0, t.num_levels), reverse=True)))
        st = propagate_scores(t, mu, rng.normal(size=t.num_leaves) * 10)
        assert leaf_distribution(st).sum() == pytest.approx(1.0, abs=1e-9)


def test_shift_invariance(rng):
    t = random_tree(rng, min_levels=2, max_leaves=30)
    mu = UncertaintyParams(tuple(sorted(rng.uniform(0.3, 1.5, t.num_levels), reverse=True)))
    y = rng.normal(size=t.num_leaves) * 4
    c = 123.456
    st, st2 = propagate_scores(t, mu, y), propagate_scores(t, mu, y + c)
    assert st2.class_scores[t.root] - st.class_scores[t.root] == pytest.approx(c, abs=1e-9)
    assert np.allclose(leaf_distribution(st), leaf_distribution(st2), atol=1e-9)
    big = propagate_scores(t, mu, y + 1e6)
    assert np.isfinite(big.class_scores).all()


def test_gradient_identity_leaf_prob_is_root_score_gradient(rng):
    t = random_tree(rng, max_leaves=25)
    mu = UncertaintyParams(tuple(sorted(rng.uniform(0.4, 1.5, t.num_levels), reverse=True)))
    y = rng.normal(size=t.num_leaves)
    st = propagate_scores(t, mu, y)
    x = leaf_distribution(st)
    h = 1e-5
    for arm in range(t.num_leaves):
        yp, ym = y.copy(), y.copy()
        yp[arm] += h
        ym[arm] -= h
        grad = (propagate_scores(t, mu, yp).class_scores[t.root]
                - propagate_scores(t, mu, ym).class_scores[t.root]) / (2 * h)
        assert grad == pytest.approx(x[arm], abs=1e-6)


def test_truncated_tree_conditional_is_gradient(rng):
    # Conditional probabilities of descendants are derivatives of the ancestor
    # score on the truncated tree whose primitives sit at the descendant level.
    t = symmetric_tree([2, 2, 2], [0.4, 0.3, 0.3])
    mu = UncertaintyParams((1.2, 0.8, 0.5))
    y = rng.normal(size=8)
    st = propagate_scores(t, mu, y)
    anc = 1  # level-1 class
    lvl_from = 3

    def score_of_anc(level3_scores):
        vals = {v: level3_scores[i] for i, v in enumerate(range(7, 15))}
        for lvl in (2, 1):
            for v in t.nodes_at_level(lvl)[::-1]:
                kids = t.children(v)
                m = mu.of_level(lvl + 1)
                vals[v] = m * np.log(sum(np.exp(vals[k] / m) for k in kids))
        return vals[anc]

    base = st.class_scores[t.node_of_leafpos].copy()  # level-3 scores in node order
    h = 1e-5
    for i, leaf in enumerate(range(7, 15)):
        if not (t.leaf_lo[anc] <= t.leaf_lo[leaf] < t.leaf_hi[anc]):
            continue
        up, dn = base.copy(), base.copy()
        up[i] += h
        dn[i] -= h
        grad = (score_of_anc(up) - score_of_anc(dn)) / (2 * h)
        cond = total_prob(st, leaf) / total_prob(st, anc)
        assert grad == pytest.approx(cond, abs=1e-6)


def test_iia_suppressed_by_nesting():
    t = red_blue_bus_tree(2)
    flat = symmetric_tree([3], [1.0])
    sc_flat = np.array([-1.0, -1.0, -0.5])
    p_flat = leaf_distribution(
        propagate_scores(flat, UncertaintyParams.uniform(1.0, 1), sc_flat))[2]
    st = propagate_scores(t, UncertaintyParams((1.0, 0.1)), BUS_SCORES)
    p_nested = total_prob(st, 2)
    assert p_nested > p_flat  # duplicate bus color hurts the nested model less


def test_sample_near_degenerate_softmax():
    t = symmetric_tree([3], [1.0])
    st = propagate_scores(t, UncertaintyParams.uniform(1.0, 1),
                          np.array([0.0, 1e6, 0.0]))
    probs = children_probs(st, t.root)
    assert probs[1] > 1 - 1e-12
    rng = np.random.default_rng(7)
    assert all(sample_path(st, rng).arm == 1 for _ in range(50))


def test_sample_frequency_red_blue_bus():
    t = red_blue_bus_tree(2)
    st = propagate_scores(t, UncertaintyParams.uniform(1.0, 2), BUS_SCORES)
    rng = np.random.default_rng(123)
    n = 100_000
    hits = sum(sample_path(st, rng).arm == 2 for _ in range(n))
    expect = np.exp(-0.5) / (np.exp(-0.5) + 2 * np.exp(-1.0))
    assert hits / n == pytest.approx(expect, abs=0.005)


def test_sample_matches_total_prob_tv(rng):
    for _ in range(3):
        t = random_tree(rng, min_levels=3, max_levels=3, max_leaves=20)
        mu = UncertaintyParams(tuple(sorted(rng.uniform(0.4, 1.5, 3), reverse=True)))
        st = propagate_scores(t, mu, rng.normal(size=t.num_leaves))
        x = leaf_distribution(st)
        n = 20_000
        counts = np.zeros(t.num_leaves)
        for _ in range(n):
            counts[sample_path(st, rng).arm] += 1
        tv = 0.5 * np.abs(counts / n - x).sum()
        assert tv < 4 * np.sqrt(t.num_leaves / n)


def test_sample_path_prefix_consistency(rng):
    t = random_tree(rng, min_levels=2, max_leaves=40)
    mu = UncertaintyParams(tuple(sorted(rng.uniform(0.3, 1.5, t.num_levels), reverse=True)))
    st = propagate_scores(t, mu, rng.normal(size=t.num_leaves))
    p = sample_path(st, rng)
    assert np.all(np.diff(p.path_prob_prefix) <= 1e-15)
    assert p.path_prob_prefix[0] == pytest.approx(p.cond_probs[0])
    assert p.path_prob_prefix[-1] == pytest.approx(np.prod(p.cond_probs), rel=1e-12)
    assert class_prob_map(st)[p.classes[-1]] == pytest.approx(
        p.path_prob_prefix[-1], rel=1e-9)
