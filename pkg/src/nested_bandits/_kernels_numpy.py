"""Pure-numpy implementation of the per-run simulation loops.

Semantics match ``_kernels_numba`` operation for operation; see that module
for the shared argument conventions.  Per step: scale Y, propagate scores and
all conditional probabilities level by level, accumulate expected/realized
regret, sample one path, and apply the importance-weighted update.
"""

from __future__ import annotations

import numpy as np


def _propagate_and_conds(parent, child_ptr, level_start, node_of_leafpos,
                         mu_levels, scaled_pos, scores, cond):
    """Fill per-node scores (bottom-up log-sum-exp) and per-child conditional
    probabilities for the whole tree."""
    L = len(level_start) - 2
    scores[node_of_leafpos] = scaled_pos
    cond[0] = 1.0
    for lvl in range(L, 0, -1):
        lo, hi = level_start[lvl], level_start[lvl + 1]
        parents = np.arange(level_start[lvl - 1], level_start[lvl])
        starts = child_ptr[parents] - lo
        m = mu_levels[lvl]
        z = scores[lo:hi] / m
        zmax = np.maximum.reduceat(z, starts)
        sizes = np.diff(np.append(starts, hi - lo))
        e = np.exp(z - np.repeat(zmax, sizes))
        s = np.add.reduceat(e, starts)
        cond[lo:hi] = e / np.repeat(s, sizes)
        scores[parents] = m * (zmax + np.log(s))


def _pick(cond, k0, k1, u):
    """Inverse-CDF draw over the child block [k0, k1)."""
    idx = int(np.searchsorted(np.cumsum(cond[k0:k1]), u, side="right"))
    return k0 + min(idx, k1 - k0 - 1)


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
    creg_e = creg_r = ccost = 0.0
    for ti in range(T):
        scaled = eta[ti] * Y
        _propagate_and_conds(parent, child_ptr, level_start, node_of_leafpos,
                             mu_levels, scaled, scores, cond)
        X[0] = 1.0
        for lvl in range(1, L + 1):
            lo, hi = level_start[lvl], level_start[lvl + 1]
            X[lo:hi] = cond[lo:hi] * X[parent[lo:hi]]
        x_pos = X[node_of_leafpos]
        creg_e += float(np.dot(cbar_pos[ti], x_pos)) - comp_expected[ti]

        node = 0
        prefix = 1.0
        drow = delta[ti]
        for lvl in range(1, L + 1):
            node = _pick(cond, child_ptr[node], child_ptr[node + 1],
                         uniforms[ti, lvl - 1])
            prefix *= cond[node]
            Y[leaf_lo[node]:leaf_hi[node]] -= drow[node] / prefix
        pos = leaf_lo[node]
        c = cost_pos[ti, pos]
        ccost += c
        creg_r += c - comp_realized[ti]
        arms[ti] = arm_of_leafpos[pos]
        cum_regret_exp[ti] = creg_e
        cum_regret_real[ti] = creg_r
        avg_reward[ti] = 1.0 - ccost / (ti + 1)
    return arms, cum_regret_exp, cum_regret_real, avg_reward, Y


def run_exp3(eta, uniforms, temperature, cost_arm, cbar_arm,
             comp_expected, comp_realized):
    T = eta.shape[0]
    N = cost_arm.shape[1]
    Y = np.zeros(N)
    scores = np.empty(N)
    cond = np.empty(N)
    starts = np.zeros(1, dtype=np.int64)
    arms = np.zeros(T, dtype=np.int32)
    cum_regret_exp = np.zeros(T)
    cum_regret_real = np.zeros(T)
    avg_reward = np.zeros(T)
    creg_e = creg_r = ccost = 0.0
    for ti in range(T):
        # same arithmetic as one sibling block of the nested policy
        scores[:] = eta[ti] * Y
        z = scores / temperature
        zmax = np.maximum.reduceat(z, starts)
        e = np.exp(z - np.repeat(zmax, [N]))
        s = np.add.reduceat(e, starts)
        cond[:] = e / np.repeat(s, [N])
        creg_e += float(np.dot(cbar_arm[ti], cond)) - comp_expected[ti]

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
