import numpy as np
import pytest

from nested_bandits import (
    SamplePath,
    UncertaintyParams,
    expected_estimator_moments,
    iwe,
    leaf_distribution,
    niwe,
    propagate_scores,
    random_tree,
    sample_path,
    symmetric_tree,
    tree_constants,
)
from nested_bandits.errors import (
    MissingIncrement,
    PathProbabilityZero,
    TooLargeToEnumerate,
    ZeroProbabilityArm,
)
from conftest import random_strategy, red_blue_bus_tree


def random_increments(rng, tree, at_caps=False):
    delta = np.zeros(tree.num_nodes)
    for v in range(1, tree.num_nodes):
        delta[v] = tree.range_[v] if at_caps else rng.uniform(0, tree.range_[v])
    return delta


def test_iwe_uniform_example():
    out = iwe([0.1, 0.2, 0.5, 0.9], [0.25] * 4, chosen_arm=2)
    assert np.allclose(out, [0, 0, 2.0, 0])


def test_iwe_deterministic_strategy():
    out = iwe([0.7, 0.1], [1.0, 0.0], chosen_arm=0)
    assert np.allclose(out, [0.7, 0.0])
    with pytest.raises(ZeroProbabilityArm):
        iwe([0.7, 0.1], [1.0, 0.0], chosen_arm=1)


def test_iwe_unbiased_by_enumeration(rng):
    n = 6
    x = random_strategy(rng, n)
    costs = rng.random(n)
    mean = sum(x[a] * iwe(costs, x, a) for a in range(n))
    assert np.allclose(mean, costs, atol=1e-12)


def test_niwe_flat_reduces_to_iwe(rng):
    t = symmetric_tree([5], [1.0])
    mu = UncertaintyParams.uniform(1.0, 1)
    st = propagate_scores(t, mu, rng.normal(size=5))
    x = leaf_distribution(st)
    costs = rng.random(5)
    path = sample_path(st, rng)
    est = niwe(t, path, [costs[path.arm]])
    assert np.allclose(est.leaf_costs(t), iwe(costs, x, path.arm), rtol=1e-9)


def test_niwe_red_blue_bus_worked_example(bus_tree):
    # Path (bus, red) sampled with P(bus)=1/2 then P(red|bus)=1/2.
    path = SamplePath(classes=(1, 3), arm=0,
                      path_prob_prefix=np.array([0.5, 0.25]),
                      cond_probs=np.array([0.5, 0.5]))
    est = niwe(bus_tree, path, [0.3, 0.3])
    assert est.delta_hat == pytest.approx([0.6, 1.2])
    costs = est.leaf_costs(bus_tree)
    assert costs[0] == pytest.approx(0.6 + 1.2)  # red: both on-path classes
    assert costs[1] == pytest.approx(0.6)        # blue updated by a red draw
    assert costs[2] == 0.0                       # car untouched
    dense = est.dense_by_class(bus_tree)
    assert dense[1] == pytest.approx(0.6) and dense[3] == pytest.approx(1.2)
    assert dense[2] == dense[4] == dense[5] == 0.0


def test_niwe_errors(bus_tree):
    path = SamplePath(classes=(1, 3), arm=0,
                      path_prob_prefix=np.array([0.5, 0.25]),
                      cond_probs=np.array([0.5, 0.5]))
    with pytest.raises(MissingIncrement):
        niwe(bus_tree, path, [0.3])
    bad = SamplePath(classes=(1, 3), arm=0,
                     path_prob_prefix=np.array([0.5, 0.0]),
                     cond_probs=np.array([0.5, 0.0]))
    with pytest.raises(PathProbabilityZero):
        niwe(bus_tree, bad, [0.3, 0.3])


def test_oracle_flat_matches_iwe_enumeration(rng):
    t = symmetric_tree([4], [1.0])
    x = random_strategy(rng, 4)
    delta = np.zeros(t.num_nodes)
    delta[1:] = rng.random(4)
    mom = expected_estimator_moments(t, x, delta)
    leafcosts = delta[t.node_of_leafpos]
    direct = sum(x[a] * iwe(leafcosts, x, a) for a in range(4))
    for a in range(4):
        assert mom.e_delta_hat[t.leaf_of_arm(a)] == pytest.approx(direct[a], abs=1e-12)


def test_unbiasedness_random_trees(rng):
    for _ in range(20):
        t = random_tree(rng, max_leaves=40)
        x = random_strategy(rng, t.num_leaves)
        delta = random_increments(rng, t)
        mom = expected_estimator_moments(t, x, delta)
        assert np.allclose(mom.e_delta_hat[1:], delta[1:], atol=1e-12)


def test_mean_square_bounds(rng):
    for _ in range(10):
        t = random_tree(rng, max_leaves=40)
        x = random_strategy(rng, t.num_leaves)
        delta = random_increments(rng, t, at_caps=True)
        mom = expected_estimator_moments(t, x, delta)
        # per class the weighted mean square equals delta^2, bounded by R^2
        assert np.allclose(mom.e_weighted_sq[1:], delta[1:] ** 2, rtol=1e-9, atol=1e-12)
        assert np.all(mom.e_weighted_sq[1:] <= t.range_[1:] ** 2 + 1e-12)
        assert mom.e_cost_weighted_sq <= tree_constants(t).n_eff + 1e-9


def test_estimates_nonnegative_and_off_path_zero(rng):
    t = random_tree(rng, min_levels=2, max_leaves=30)
    mu = UncertaintyParams(tuple(sorted(rng.uniform(0.3, 1.5, t.num_levels), reverse=True)))
    st = propagate_scores(t, mu, rng.normal(size=t.num_leaves))
    path = sample_path(st, rng)
    obs = rng.random(t.num_levels)
    est = niwe(t, path, obs)
    assert np.all(est.delta_hat >= 0)
    dense = est.dense_by_class(t)
    off_path = [v for v in range(1, t.num_nodes) if v not in path.classes]
    assert np.all(dense[off_path] == 0.0)


def test_prefix_measurability_unsampled_subtree_irrelevant(rng):
    # Permuting scores inside a subtree the draw never enters leaves the
    # sampled path and every estimate unchanged.
    t = symmetric_tree([2, 2], [0.5, 0.5])
    mu = UncertaintyParams((1.0, 0.7))
    y = rng.normal(size=4)
    st = propagate_scores(t, mu, y)
    seed = 999
    path = sample_path(st, np.random.default_rng(seed))
    sampled_l1 = path.classes[0]
    other_l1 = 2 if sampled_l1 == 1 else 1
    lo, hi = t.leaf_lo[other_l1], t.leaf_hi[other_l1]
    y2 = y.copy()
    y2[[lo, hi - 1]] = y2[[hi - 1, lo]]  # swap the unsampled pair
    st2 = propagate_scores(t, mu, y2)
    path2 = sample_path(st2, np.random.default_rng(seed))
    assert path2.classes == path.classes
    obs = rng.random(2)
    assert np.allclose(niwe(t, path, obs).delta_hat, niwe(t, path2, obs).delta_hat)


def test_monte_carlo_agrees_with_oracle(rng):
    t = random_tree(rng, min_levels=2, max_levels=3, max_leaves=12)
    mu = UncertaintyParams(tuple(sorted(rng.uniform(0.5, 1.2, t.num_levels), reverse=True)))
    st = propagate_scores(t, mu, rng.normal(size=t.num_leaves) * 0.5)
    x = leaf_distribution(st)
    delta = random_increments(rng, t)
    mom = expected_estimator_moments(t, x, delta)
    acc = np.zeros(t.num_nodes)
    n = 40_000
    for _ in range(n):
        p = sample_path(st, rng)
        acc[list(p.classes)] += np.asarray([delta[c] for c in p.classes]) / p.path_prob_prefix
    mc = acc / n
    # loose Monte Carlo agreement; the oracle itself is exact
    assert np.allclose(mc[1:], mom.e_delta_hat[1:], atol=0.15)


def test_enumeration_guard():
    t = symmetric_tree([101, 101], [0.5, 0.5])
    with pytest.raises(TooLargeToEnumerate):
        expected_estimator_moments(
            t, np.full(t.num_leaves, 1 / t.num_leaves), np.zeros(t.num_nodes))
