"""Numba-compiled implementation of the per-run simulation loops.

Argument conventions (shared with ``_kernels_numpy``):

* tree arrays are the flat breadth-first arrays from ``SimilarityTree``;
* ``mu_levels`` has the level-l temperature at index l (slot 0 unused);
* ``eta`` is the per-stage learning rate, ``uniforms`` the pre-drawn policy
  uniforms (one per level per stage);
* ``delta`` is the (T, num_nodes) increment table, ``cost_pos`` /
  ``cost_arm`` the per-stage leaf costs, ``cbar_*`` the per-stage mean cost
  vectors used for expected regret, and ``comp_*`` the comparator's
  expected/realized cost per stage.

Returns per-stage cumulative expected regret, cumulative realized regret,
average reward, chosen arms, and the final score vector.

The nested policy and EXP3 share the softmax and inverse-CDF helpers, so on
a one-level tree they follow bit-identical trajectories.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _seg_softmax(scores, k0, k1, mu, cond):
    """Softmax of scores[k0:k1]/mu into cond[k0:k1]; returns mu*logsumexp."""
    zmax = scores[k0] / mu
    for i in range(k0 + 1, k1):
        z = scores[i] / mu
        if z > zmax:
            zmax = z
    s = 0.0
    for i in range(k0, k1):
        cond[i] = math.exp(scores[i] / mu - zmax)
        s += cond[i]
    for i in range(k0, k1):
        cond[i] /= s
    return mu * (zmax + math.log(s))


@njit(cache=True)
def _pick(cond, k0, k1, u):
    acc = 0.0
    for i in range(k0, k1):
        acc += cond[i]
        if u < acc:
            return i
    return k1 - 1


@njit(cache=True)
def run_new(parent, child_ptr, level_start, leaf_lo, leaf_hi, node_of_leafpos,
            arm_of_leafpos, mu_levels, eta, uniforms, delta, cost_pos,
            cbar_pos, comp_expected, comp_realized):
    T, L = uniforms.shape
    N = node_of_leafpos.shape[0]
    n_nodes = parent.shape[0]
    Y = np.zeros(N)
    scores = np.empty(n_nodes)
    cond = np.empty(n_nodes)
    X = np.empty(n_nodes)
    arms = np.zeros(T, dtype=np.int32)
    cum_regret_exp = np.zeros(T)
    cum_regret_real = np.zeros(T)
    avg_reward = np.zeros(T)
    creg_e = 0.0
    creg_r = 0.0
    ccost = 0.0
    for ti in range(T):
        for pos in range(N):
            scores[node_of_leafpos[pos]] = eta[ti] * Y[pos]
        cond[0] = 1.0
        for lvl in range(L, 0, -1):
            for p in range(level_start[lvl - 1], level_start[lvl]):
                scores[p] = _seg_softmax(scores, child_ptr[p], child_ptr[p + 1],
                                         mu_levels[lvl], cond)
        X[0] = 1.0
        for v in range(1, n_nodes):
            X[v] = cond[v] * X[parent[v]]
        exp_cost = 0.0
        for pos in range(N):
            exp_cost += cbar_pos[ti, pos] * X[node_of_leafpos[pos]]
        creg_e += exp_cost - comp_expected[ti]

        node = 0
        prefix = 1.0
        for lvl in range(1, L + 1):
            node = _pick(cond, child_ptr[node], child_ptr[node + 1],
                         uniforms[ti, lvl - 1])
            prefix *= cond[node]
            dh = delta[ti, node] / prefix
            for pos in range(leaf_lo[node], leaf_hi[node]):
                Y[pos] -= dh
        pos = leaf_lo[node]
        c = cost_pos[ti, pos]
        ccost += c
        creg_r += c - comp_realized[ti]
        arms[ti] = arm_of_leafpos[pos]
        cum_regret_exp[ti] = creg_e
        cum_regret_real[ti] = creg_r
        avg_reward[ti] = 1.0 - ccost / (ti + 1)
    return arms, cum_regret_exp, cum_regret_real, avg_reward, Y


@njit(cache=True)
def run_exp3(eta, uniforms, temperature, cost_arm, cbar_arm,
             comp_expected, comp_realized):
    T = eta.shape[0]
    N = cost_arm.shape[1]
    Y = np.zeros(N)
    scores = np.empty(N)
    cond = np.empty(N)
    arms = np.zeros(T, dtype=np.int32)
    cum_regret_exp = np.zeros(T)
    cum_regret_real = np.zeros(T)
    avg_reward = np.zeros(T)
    creg_e = 0.0
    creg_r = 0.0
    ccost = 0.0
    for ti in range(T):
        for a in range(N):
            scores[a] = eta[ti] * Y[a]
        _seg_softmax(scores, 0, N, temperature, cond)
        exp_cost = 0.0
        for a in range(N):
            exp_cost += cbar_arm[ti, a] * cond[a]
        creg_e += exp_cost - comp_expected[ti]

        arm = _pick(cond, 0, N, uniforms[ti])
        c = cost_arm[ti, arm]
        Y[arm] -= c / cond[arm]
        ccost += c
        creg_r += c - comp_realized[ti]
        arms[ti] = arm
        cum_regret_exp[ti] = creg_e
        cum_regret_real[ti] = creg_r
        avg_reward[ti] = 1.0 - ccost / (ti + 1)
    return arms, cum_regret_exp, cum_regret_real, avg_reward, Y
