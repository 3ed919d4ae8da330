"""Independent reference implementations used to check the package.

Everything here is deliberately written in a different style from the library
code (plain loops, dense solves, hardcoded nesting) so a shared bug is
unlikely.
"""

from __future__ import annotations

import itertools
import math
import random

import numpy as np


# ---------------------------------------------------------------------------
# decision-model oracles

def backup_coefficient(model, s, a):
    return (1.0 - math.exp(-model.discount * model.durations[s, a])) / model.discount


def immediate_reward(model, s, a):
    if model.reward_form == "discounted":
        return model.rewards[s, a] * backup_coefficient(model, s, a)
    return model.rewards[s, a] * model.durations[s, a]


def admissible_actions(model, s):
    if model.admissible is None:
        return list(range(model.num_actions))
    return list(model.admissible[s])


def vi_oracle(model, tol=1e-12, max_iter=1_000_000):
    """Plain-loop value iteration, no vectorization."""
    n = model.num_states
    v = [0.0] * n
    for _ in range(max_iter):
        new_v = []
        for s in range(n):
            best = -math.inf
            for a in admissible_actions(model, s):
                total = immediate_reward(model, s, a)
                coeff = backup_coefficient(model, s, a)
                for sp in range(n):
                    total += coeff * model.rates[s, a, sp] * v[sp]
                best = max(best, total)
            new_v.append(best)
        residual = max(abs(x - y) for x, y in zip(new_v, v))
        v = new_v
        if residual <= tol:
            break
    return np.array(v)


def policy_value(model, policy):
    """Exact value of a stationary policy via a dense linear solve."""
    n = model.num_states
    transition = np.zeros((n, n))
    reward = np.zeros(n)
    for s in range(n):
        a = policy[s]
        coeff = backup_coefficient(model, s, a)
        reward[s] = immediate_reward(model, s, a)
        for sp in range(n):
            transition[s, sp] = coeff * model.rates[s, a, sp]
    return np.linalg.solve(np.eye(n) - transition, reward)


def enumerate_policies(model):
    per_state = [admissible_actions(model, s) for s in range(model.num_states)]
    return [tuple(p) for p in itertools.product(*per_state)]


def best_stationary(model, tol=1e-8):
    """Elementwise-max value over all policies and the set of optimal action
    choices per state."""
    policies = enumerate_policies(model)
    values = {p: policy_value(model, p) for p in policies}
    v_star = np.max(np.stack(list(values.values())), axis=0)
    optimal = [p for p, v in values.items() if np.all(v >= v_star - tol)]
    best_actions = [set(p[s] for p in optimal) for s in range(model.num_states)]
    return v_star, best_actions


# ---------------------------------------------------------------------------
# hierarchy-game oracle: flat loops hardcoded per depth

def spe_oracle(n_contexts, action_counts, utilities):
    """Equilibrium path per context for 1-3 levels, by explicit enumeration.

    utilities[l][ci][a1][...][am] are plain nested indexables.
    """
    m = len(action_counts)
    paths = []
    for ci in range(n_contexts):
        if m == 1:
            best, best_val = 0, -math.inf
            for a1 in range(action_counts[0]):
                val = utilities[0][ci][a1]
                if val > best_val:
                    best, best_val = a1, val
            paths.append((best,))
        elif m == 2:
            # follower response table
            response = {}
            for a1 in range(action_counts[0]):
                rb, rv = 0, -math.inf
                for a2 in range(action_counts[1]):
                    val = utilities[1][ci][a1][a2]
                    if val > rv:
                        rb, rv = a2, val
                response[a1] = rb
            best, best_val = None, -math.inf
            for a1 in range(action_counts[0]):
                val = utilities[0][ci][a1][response[a1]]
                if val > best_val:
                    best, best_val = (a1, response[a1]), val
            paths.append(best)
        elif m == 3:
            bottom = {}
            for a1 in range(action_counts[0]):
                for a2 in range(action_counts[1]):
                    rb, rv = 0, -math.inf
                    for a3 in range(action_counts[2]):
                        val = utilities[2][ci][a1][a2][a3]
                        if val > rv:
                            rb, rv = a3, val
                    bottom[(a1, a2)] = rb
            middle = {}
            for a1 in range(action_counts[0]):
                rb, rv = None, -math.inf
                for a2 in range(action_counts[1]):
                    a3 = bottom[(a1, a2)]
                    val = utilities[1][ci][a1][a2][a3]
                    if val > rv:
                        rb, rv = (a2, a3), val
                middle[a1] = rb
            best, best_val = None, -math.inf
            for a1 in range(action_counts[0]):
                a2, a3 = middle[a1]
                val = utilities[0][ci][a1][a2][a3]
                if val > best_val:
                    best, best_val = (a1, a2, a3), val
            paths.append(best)
        else:
            raise ValueError("oracle handles at most 3 levels")
    return paths


# ---------------------------------------------------------------------------
# clustering oracle: simple restarts, pure python

def kmeans_restart_oracle(points, k, n_restarts=50, max_iter=200):
    """Best inertia over seeded restarts of a from-scratch Lloyd loop."""
    points = [list(map(float, p)) for p in points]
    n, dim = len(points), len(points[0])

    def dist2(a, b):
        return sum((x - y) ** 2 for x, y in zip(a, b))

    best_inertia = math.inf
    for restart in range(n_restarts):
        rnd = random.Random(restart)
        centroids = [list(points[i]) for i in rnd.sample(range(n), k)]
        labels = [0] * n
        for _ in range(max_iter):
            changed = False
            for i, p in enumerate(points):
                j_best = min(range(k), key=lambda j: dist2(p, centroids[j]))
                if labels[i] != j_best:
                    labels[i] = j_best
                    changed = True
            for j in range(k):
                members = [p for p, lab in zip(points, labels) if lab == j]
                if members:
                    centroids[j] = [sum(c) / len(members) for c in zip(*members)]
                else:
                    centroids[j] = list(points[rnd.randrange(n)])
            if not changed:
                break
        inertia = sum(dist2(p, centroids[lab]) for p, lab in zip(points, labels))
        best_inertia = min(best_inertia, inertia)
    return best_inertia


# ---------------------------------------------------------------------------
# GP oracle: dense solve, no factorization caching

def gp_predict_oracle(cfg, contexts, rewards, x):
    contexts = np.asarray(contexts, float)
    rewards = np.asarray(rewards, float)
    x = np.asarray(x, float)

    def kern(a, b):
        return cfg.signal_var * math.exp(
            -float(((a - b) ** 2).sum()) / (2.0 * cfg.length_scale**2)
        )

    n = len(rewards)
    gram = np.array([[kern(contexts[i], contexts[j]) for j in range(n)] for i in range(n)])
    gram += (cfg.obs_noise**2 + cfg.jitter) * np.eye(n)
    k_star = np.array([kern(contexts[i], x) for i in range(n)])
    alpha = np.linalg.solve(gram, rewards)
    mean = float(k_star @ alpha)
    var = float(cfg.signal_var - k_star @ np.linalg.solve(gram, k_star))
    return mean, var


# ---------------------------------------------------------------------------
# divergence oracle: fsum-based direct formula

def renyi_oracle(p, q, alpha):
    terms = []
    for pi, qi in zip(p, q):
        if pi == 0.0:
            continue
        if qi == 0.0:
            if alpha > 1.0:
                return math.inf
            continue
        terms.append(pi**alpha * qi ** (1.0 - alpha))
    return math.log2(math.fsum(terms)) / (alpha - 1.0)


def kl_oracle(p, q):
    total = []
    for pi, qi in zip(p, q):
        if pi == 0.0:
            continue
        if qi == 0.0:
            return math.inf
        total.append(pi * math.log2(pi / qi))
    return math.fsum(total)
