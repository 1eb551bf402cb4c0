"""Numeric verification of the convex-analytic machinery behind the policies.

The nested exponential weights update is mirror descent under a level-weighted
entropy whose convex conjugate at a score profile equals the propagated root
score.  This module evaluates those objects directly — nested/conditional
entropy, the Fenchel coupling, nested power sums — and checks the identities
and inequalities the regret analysis rests on, each with its left- and
right-hand sides computed through disjoint code paths.

Everything here is desk-scale numpy; nothing is performance critical.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .choice import (
    UncertaintyParams,
    children_probs,
    class_prob_map,
    leaf_distribution,
    propagate_scores,
)
from .tree import SimilarityTree, random_tree, tree_constants

IDENTITY_TOL = 1e-8
DECOMPOSITION_TOL = 1e-9
ORACLE_TOL = 1e-6


@dataclass(frozen=True)
class StrategyVector:
    """A validated mixed strategy over arms."""

    x: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        if np.any(x < -1e-12) or abs(x.sum() - 1.0) > 1e-9:
            raise ValueError("not a probability vector")
        object.__setattr__(self, "x", x)

    def class_masses(self, tree: SimilarityTree) -> np.ndarray:
        return class_masses(tree, self.x)


def entropy_weights(mu: UncertaintyParams) -> np.ndarray:
    """Level weights theta^(l) = mu^(l) - mu^(l+1) (slot 0 unused, mu^(L+1)=0)."""
    m = np.asarray(mu.mu, dtype=np.float64)
    theta = np.zeros(len(m) + 1)
    theta[1:-1] = m[:-1] - m[1:]
    theta[-1] = m[-1]
    return np.concatenate([[0.0], theta[1:]])


def class_masses(tree: SimilarityTree, x: np.ndarray) -> np.ndarray:
    """Per-node class probabilities induced by an arm-indexed strategy."""
    x = np.asarray(x, dtype=np.float64)
    x_pos = x[tree.arm_of_leafpos]
    cum = np.concatenate([[0.0], np.cumsum(x_pos)])
    return cum[tree.leaf_hi] - cum[tree.leaf_lo]


def _xlogx(v: np.ndarray) -> np.ndarray:
    out = np.zeros_like(v)
    pos = v > 0
    out[pos] = v[pos] * np.log(v[pos])
    return out


def nested_entropy(
    tree: SimilarityTree,
    mu: UncertaintyParams,
    x: np.ndarray,
    at_class: int | None = None,
) -> float:
    """Level-weighted entropy of the masses under ``at_class`` (default: root).

    For the root this is the regularizer itself; with one level it reduces to
    the plain negative entropy sum(x log x).
    """
    C = tree.root if at_class is None else int(at_class)
    tree._check_node(C)
    theta = entropy_weights(mu)
    mass = class_masses(tree, x)
    lvl = int(tree.level[C])
    lo, hi = tree.leaf_lo[C], tree.leaf_hi[C]
    total = 0.0
    for l in range(max(lvl, 1), tree.num_levels + 1):
        ids = tree.nodes_at_level(l)
        inside = ids[(tree.leaf_lo[ids] >= lo) & (tree.leaf_hi[ids] <= hi)]
        total += theta[l] * _xlogx(mass[inside]).sum()
    return float(total)


def conditional_entropy(
    tree: SimilarityTree,
    mu: UncertaintyParams,
    x: np.ndarray,
    class_id: int,
) -> float:
    """Entropy of the child split of ``class_id``, weighted by mu^(l+1).

    Zero for childless classes and for classes of zero mass.
    """
    tree._check_node(class_id)
    lvl = int(tree.level[class_id])
    if lvl == tree.num_levels:
        return 0.0
    mass = class_masses(tree, x)
    xc = mass[class_id]
    if xc <= 0.0:
        return 0.0
    kids = tree.children(class_id)
    mk = mass[kids]
    pos = mk > 0
    return float(mu.of_level(lvl + 1) * np.sum(mk[pos] * np.log(mk[pos] / xc)))


def verify_decomposition(
    tree: SimilarityTree, mu: UncertaintyParams, x: np.ndarray
) -> float:
    """Max residual of unrolling nested entropy into conditional entropies.

    Per class C at level l >= 1:
        h_C(x) = sum_{C' under C} h(x|C') + mu^(l) x_C log x_C,
    and at the root h(x) equals the plain sum of all conditional entropies.
    """
    mass = class_masses(tree, x)
    cond = np.array([conditional_entropy(tree, mu, x, v) for v in range(tree.num_nodes)])
    worst = 0.0
    for C in range(tree.num_nodes):
        lvl = int(tree.level[C])
        lo, hi = tree.leaf_lo[C], tree.leaf_hi[C]
        inside = [v for v in range(tree.num_nodes)
                  if tree.leaf_lo[v] >= lo and tree.leaf_hi[v] <= hi
                  and tree.level[v] >= lvl]
        rhs = float(np.sum(cond[inside]))
        if lvl >= 1:
            xc = mass[C]
            rhs += mu.of_level(lvl) * (xc * np.log(xc) if xc > 0 else 0.0)
        lhs = nested_entropy(tree, mu, x, at_class=C)
        worst = max(worst, abs(lhs - rhs))
    return worst


def hstar(tree: SimilarityTree, mu: UncertaintyParams, y: np.ndarray) -> float:
    """Convex conjugate of the nested entropy at ``y``: the propagated root score."""
    return float(propagate_scores(tree, mu, y).class_scores[tree.root])


def hrange(tree: SimilarityTree, mu: UncertaintyParams) -> float:
    """Conjugate value at y = 0; the regret bound's range constant."""
    return hstar(tree, mu, np.zeros(tree.num_leaves))


def hrange_upper_bound(tree: SimilarityTree, mu: UncertaintyParams) -> float:
    """sum_l mu^(l) log K^(l); matches hrange exactly on symmetric trees."""
    K = tree_constants(tree).K
    return float(sum(mu.of_level(l) * np.log(K[l - 1]) for l in range(1, tree.num_levels + 1)))


def min_entropy(tree: SimilarityTree, mu: UncertaintyParams) -> float:
    """min_x h(x) = -h*(0)."""
    return -hrange(tree, mu)


def fenchel_coupling(
    tree: SimilarityTree, mu: UncertaintyParams, p: np.ndarray, y: np.ndarray
) -> float:
    """h(p) + h*(y) - <y, p>; nonnegative, zero exactly at p = Λ(y)."""
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return nested_entropy(tree, mu, p) + hstar(tree, mu, y) - float(np.dot(y, p))


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    rho = np.nonzero(u - css / np.arange(1, len(v) + 1) > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def entropy_gradient(
    tree: SimilarityTree, mu: UncertaintyParams, x: np.ndarray
) -> np.ndarray:
    """Arm-indexed gradient of the nested entropy (interior points)."""
    theta = entropy_weights(mu)
    mass = np.maximum(class_masses(tree, x), 1e-300)
    grad_pos = np.full(tree.num_leaves, mu.of_level(1))
    for l in range(1, tree.num_levels + 1):
        anc = tree.lineage_nodes[:, l - 1]
        grad_pos += theta[l] * np.log(mass[anc])
    out = np.empty(tree.num_leaves)
    out[tree.arm_of_leafpos] = grad_pos
    return out


def simplex_argmax_oracle(
    tree: SimilarityTree,
    mu: UncertaintyParams,
    y: np.ndarray,
    iters: int = 1000,
    step: float | None = None,
) -> tuple[np.ndarray, float]:
    """Projected gradient ascent on x -> <y,x> - h(x) over the simplex.

    Independent numeric maximizer used to cross-check the conjugate value;
    a test utility, not part of the algorithmic path.
    """
    y = np.asarray(y, dtype=np.float64)
    if step is None:
        step = 0.1 / mu.of_level(tree.num_levels)
    x = np.full(tree.num_leaves, 1.0 / tree.num_leaves)
    for _ in range(iters):
        g = y - entropy_gradient(tree, mu, x)
        x = project_simplex(x + step * g)
    value = float(np.dot(y, x)) - nested_entropy(tree, mu, x)
    return x, value


@dataclass(frozen=True)
class ConjugacyReport:
    value_residual: float       # |y_root - (<y, Λ(y)> - h(Λ(y)))|
    max_maximality_violation: float  # max over draws of <y,x> - h(x) - y_root
    recursion_residual: float   # worst relative error of the per-class exp recursion

    def ok(self, tol: float = IDENTITY_TOL) -> bool:
        return (self.value_residual < tol
                and self.max_maximality_violation < tol
                and self.recursion_residual < tol)


def conjugate_checks(
    tree: SimilarityTree,
    mu: UncertaintyParams,
    y: np.ndarray,
    draws: int = 1000,
    rng: np.random.Generator | None = None,
) -> ConjugacyReport:
    """Check that the propagated scores realize the entropy's convex conjugate."""
    rng = rng or np.random.default_rng(0)
    y = np.asarray(y, dtype=np.float64)
    st = propagate_scores(tree, mu, y)
    root_score = float(st.class_scores[tree.root])

    lam = leaf_distribution(st)
    attained = float(np.dot(y, lam)) - nested_entropy(tree, mu, lam)
    value_residual = abs(root_score - attained)

    worst = -np.inf
    for _ in range(draws):
        x = rng.dirichlet(np.ones(tree.num_leaves))
        worst = max(worst, float(np.dot(y, x)) - nested_entropy(tree, mu, x) - root_score)

    rec = 0.0
    for C in range(tree.num_nodes):
        lvl = int(tree.level[C])
        if lvl == tree.num_levels:
            continue
        m = mu.of_level(lvl + 1)
        lhs = np.exp(st.class_scores[C] / m)
        rhs = float(np.sum(np.exp(st.class_scores[tree.children(C)] / m)))
        rec = max(rec, abs(lhs - rhs) / max(abs(rhs), 1e-300))
    return ConjugacyReport(
        value_residual=value_residual,
        max_maximality_violation=float(worst),
        recursion_residual=rec,
    )


def nested_power_sum(
    tree: SimilarityTree,
    mu: UncertaintyParams,
    y: np.ndarray,
    costs: np.ndarray,
    at_class: int | None = None,
) -> float:
    """Recursive power sum expressing the conjugate's response to a cost shift.

    At a class one level above the leaves it is the conditional expectation of
    exp(-c/mu^(L)); at interior classes children's values enter raised to the
    ratio of the two temperatures below.  Defined for classes above level L.
    """
    C = tree.root if at_class is None else int(at_class)
    tree._check_node(C)
    if int(tree.level[C]) >= tree.num_levels:
        raise ValueError("power sum is defined for classes above the leaf level")
    costs = np.asarray(costs, dtype=np.float64)
    st = propagate_scores(tree, mu, np.asarray(y, dtype=np.float64))
    L = tree.num_levels
    mu_arr = mu.mu

    def rec(node: int) -> float:
        lvl = int(tree.level[node])
        cond = children_probs(st, node)
        kids = tree.children(node)
        if lvl == L - 1:
            arms = [tree.arm_of_leaf(int(k)) for k in kids]
            return float(np.sum(cond * np.exp(-costs[arms] / mu_arr[L - 1])))
        expo = mu_arr[lvl + 1] / mu_arr[lvl]  # mu^(l+2)/mu^(l+1), zero-based
        vals = np.array([rec(int(k)) for k in kids])
        return float(np.sum(cond * vals ** expo))

    return rec(C)


@dataclass(frozen=True)
class IncrementReport:
    identity_residual: float   # |h*(y-c) - h*(y) - mu^(1) log sigma|
    bound_slack: float         # RHS - LHS of the quadratic upper bound (>= 0 wanted)
    class_identity_residual: float | None  # |<Λ,c> - sum_C Λ_C δ_C| when δ given

    def ok(self, tol: float = IDENTITY_TOL) -> bool:
        fine = self.identity_residual < tol and self.bound_slack > -1e-9
        if self.class_identity_residual is not None:
            fine = fine and self.class_identity_residual < tol
        return fine


def verify_increment_machinery(
    tree: SimilarityTree,
    mu: UncertaintyParams,
    y: np.ndarray,
    costs: np.ndarray,
    increments: np.ndarray | None = None,
) -> IncrementReport:
    """Check the conjugate-increment identity and its quadratic upper bound.

    ``costs`` is the arm-indexed nonnegative cost vector; when it stems from
    per-class ``increments`` the class-weighted cost identity is checked too.
    """
    y = np.asarray(y, dtype=np.float64)
    costs = np.asarray(costs, dtype=np.float64)
    h_y = hstar(tree, mu, y)
    h_yc = hstar(tree, mu, y - costs)
    sigma = nested_power_sum(tree, mu, y, costs)
    identity = abs(h_yc - h_y - mu.of_level(1) * np.log(sigma))

    lam = leaf_distribution(propagate_scores(tree, mu, y))
    rhs = -float(np.dot(lam, costs)) + float(np.dot(lam, costs ** 2)) / (
        2.0 * mu.of_level(tree.num_levels))
    slack = rhs - (h_yc - h_y)

    class_resid = None
    if increments is not None:
        lam_class = class_prob_map(propagate_scores(tree, mu, y))
        class_resid = abs(
            float(np.dot(lam, costs))
            - float(np.dot(lam_class[1:], np.asarray(increments)[1:])))
    return IncrementReport(
        identity_residual=float(identity),
        bound_slack=float(slack),
        class_identity_residual=class_resid,
    )


@dataclass(frozen=True)
class TrajectoryStep:
    """One recorded policy step: rate, scores before the update, and the
    cost estimate applied (so Y_next = Y - c_hat)."""

    eta: float
    eta_next: float
    Y: np.ndarray
    c_hat: np.ndarray


def record_new_trajectory(
    tree: SimilarityTree,
    mu: UncertaintyParams,
    schedule: Callable[[int], float],
    increments_for_step: Callable[[int], np.ndarray],
    horizon: int,
    rng: np.random.Generator,
) -> list[TrajectoryStep]:
    """Run nested exponential weights and record what the per-step energy
    inequality needs.  ``increments_for_step(t)`` returns the per-node true
    increment vector of round t."""
    from .policies import NestedExpWeightsPolicy  # local: avoids hard coupling

    policy = NestedExpWeightsPolicy(tree, mu, schedule)
    steps: list[TrajectoryStep] = []
    for t in range(1, horizon + 1):
        y_before = policy.Y.copy()
        path = policy.choose(rng)
        delta = increments_for_step(t)
        obs = np.array([delta[c] for c in path.classes])
        policy.feedback(obs)
        steps.append(TrajectoryStep(
            eta=schedule(t),
            eta_next=schedule(t + 1),
            Y=y_before,
            c_hat=y_before - policy.Y,
        ))
    return steps


def check_template_inequality(
    tree: SimilarityTree,
    mu: UncertaintyParams,
    trajectory: Sequence[TrajectoryStep],
    comparator: np.ndarray,
) -> float:
    """Minimum slack of the per-step energy inequality along a trajectory.

    With E_t = (1/eta_t) F(p, eta_t Y_t), each step must satisfy

        E_{t+1} <= E_t + <c_hat_t, x_t - p>
                   + (1/eta_{t+1} - 1/eta_t) (h(p) - min h)
                   + (1/eta_t) F(x_t, eta_t Y_{t+1})

    deterministically, for the realized c_hat_t.  Returns min over steps of
    RHS - LHS (negative values beyond tolerance falsify the analysis).
    """
    p = np.asarray(comparator, dtype=np.float64)
    h_p = nested_entropy(tree, mu, p)
    h_min = min_entropy(tree, mu)
    worst = np.inf
    for step in trajectory:
        y_next = step.Y - step.c_hat
        x_t = leaf_distribution(propagate_scores(tree, mu, step.eta * step.Y))
        e_t = fenchel_coupling(tree, mu, p, step.eta * step.Y) / step.eta
        e_next = fenchel_coupling(tree, mu, p, step.eta_next * y_next) / step.eta_next
        rhs = (e_t
               + float(np.dot(step.c_hat, x_t - p))
               + (1.0 / step.eta_next - 1.0 / step.eta) * (h_p - h_min)
               + fenchel_coupling(tree, mu, x_t, step.eta * y_next) / step.eta)
        worst = min(worst, rhs - e_next)
    return float(worst)


def verification_report(
    rng: np.random.Generator | None = None,
    trees: int = 8,
    draws_per_tree: int = 200,
) -> tuple[list[str], bool]:
    """Battery of identity checks on random trees; returns printable lines."""
    rng = rng or np.random.default_rng(2024)
    lines: list[str] = []
    ok = True

    def emit(name: str, passed: bool, detail: str) -> None:
        nonlocal ok
        ok = ok and passed
        lines.append(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")

    worst_dec = worst_conj = worst_max = worst_rec = 0.0
    worst_id = 0.0
    worst_slack = np.inf
    worst_fench = np.inf
    worst_fench_at_map = 0.0
    for _ in range(trees):
        t = random_tree(rng, max_leaves=60)
        mus = tuple(sorted(rng.uniform(0.3, 1.5, t.num_levels), reverse=True))
        mu = UncertaintyParams(mus)
        for _ in range(max(draws_per_tree // 40, 3)):
            x = rng.dirichlet(np.ones(t.num_leaves))
            worst_dec = max(worst_dec, verify_decomposition(t, mu, x))
        y = rng.normal(size=t.num_leaves) * 2.0
        rep = conjugate_checks(t, mu, y, draws=draws_per_tree, rng=rng)
        worst_conj = max(worst_conj, rep.value_residual)
        worst_max = max(worst_max, rep.max_maximality_violation)
        worst_rec = max(worst_rec, rep.recursion_residual)
        c = rng.random(t.num_leaves)
        inc = verify_increment_machinery(t, mu, y, c)
        worst_id = max(worst_id, inc.identity_residual)
        worst_slack = min(worst_slack, inc.bound_slack)
        p = rng.dirichlet(np.ones(t.num_leaves))
        worst_fench = min(worst_fench, fenchel_coupling(t, mu, p, y))
        lam = leaf_distribution(propagate_scores(t, mu, y))
        worst_fench_at_map = max(worst_fench_at_map,
                                 fenchel_coupling(t, mu, lam, y))

    emit("entropy decomposition", worst_dec < DECOMPOSITION_TOL,
         f"max residual {worst_dec:.2e}")
    emit("conjugate value identity", worst_conj < IDENTITY_TOL,
         f"max residual {worst_conj:.2e}")
    emit("conjugate maximality", worst_max < IDENTITY_TOL,
         f"max violation {worst_max:.2e}")
    emit("conjugate exp recursion", worst_rec < IDENTITY_TOL,
         f"max rel residual {worst_rec:.2e}")
    emit("power-sum increment identity", worst_id < IDENTITY_TOL,
         f"max residual {worst_id:.2e}")
    emit("conjugate increment bound", worst_slack > -1e-9,
         f"min slack {worst_slack:.2e}")
    emit("fenchel coupling nonnegative", worst_fench > -1e-9,
         f"min value {worst_fench:.2e}")
    emit("fenchel coupling zero at choice map", worst_fench_at_map < IDENTITY_TOL,
         f"max value {worst_fench_at_map:.2e}")

    t = random_tree(rng, min_levels=2, max_leaves=30)
    mu = UncertaintyParams.uniform(float(rng.uniform(0.5, 1.5)), t.num_levels)
    H = hrange(t, mu)
    emit("equal-mu range constant", abs(H - mu.of_level(1) * np.log(t.num_leaves)) < 1e-9,
         f"H = {H:.6f} vs mu log N = {mu.of_level(1) * np.log(t.num_leaves):.6f}")

    y = rng.normal(size=t.num_leaves)
    _, val = simplex_argmax_oracle(t, mu, y)
    emit("conjugate vs numeric maximizer", abs(val - hstar(t, mu, y)) < ORACLE_TOL,
         f"gap {abs(val - hstar(t, mu, y)):.2e}")
    return lines, ok
