"""Shared test utilities: independent oracles and random instance builders.

The oracles here deliberately avoid the package's solver paths: the
textbook simplex is a separate standard-form Big-M tableau, policy
values come from vectorized Monte-Carlo rollouts or exhaustive policy
enumeration, and small MILPs are brute-forced per binary assignment.
"""

from __future__ import annotations

import itertools
import random

import numpy as np

from missionphasing.constrained import CapacitySpec
from missionphasing.mdp import InitialDistribution, Mdp, Policy


# ---------------------------------------------------------------------------
# independent textbook simplex (oracle for the engine)
# ---------------------------------------------------------------------------

def textbook_simplex_max(A_ub, b_ub, A_eq, b_eq, c, lb, ub, max_iter=50_000):
    """Dense Big-M tableau simplex on standard form.

    Returns the optimal objective, None when infeasible, or +inf when
    unbounded.  Bounded variables are shifted/split into nonnegative
    ones and upper bounds become rows, so this shares no code or
    representation with the package engine.
    """
    n = len(c)
    A_ub = [list(row) for row in A_ub]
    b_ub = list(b_ub)
    A_eq = [list(row) for row in A_eq]
    b_eq = list(b_eq)
    # shift finite lower bounds to zero
    shift = 0.0
    for j in range(n):
        if lb[j] != -np.inf and lb[j] != 0.0:
            for rows, rhs in ((A_ub, b_ub), (A_eq, b_eq)):
                for k in range(len(rows)):
                    rhs[k] -= rows[k][j] * lb[j]
            shift += c[j] * lb[j]
    # upper-bound rows in the shifted space
    for j in range(n):
        if ub[j] != np.inf:
            row = [0.0] * n
            row[j] = 1.0
            A_ub.append(row)
            b_ub.append(ub[j] - (lb[j] if lb[j] != -np.inf else 0.0))
    # split free variables
    split = [(j, 1.0) for j in range(n)]
    split += [(j, -1.0) for j in range(n) if lb[j] == -np.inf]

    def widen(row):
        return [row[j] * s for j, s in split]

    rows = [widen(r) for r in A_ub] + [widen(r) for r in A_eq]
    rhs = list(b_ub) + list(b_eq)
    kinds = ["ub"] * len(A_ub) + ["eq"] * len(A_eq)
    m = len(rows)
    for i in range(m):
        if rhs[i] < 0:
            rows[i] = [-v for v in rows[i]]
            rhs[i] = -rhs[i]
            kinds[i] = "ge" if kinds[i] == "ub" else "eq"
    nsplit = len(split)
    n_slack = sum(1 for k in kinds if k in ("ub", "ge"))
    width = nsplit + n_slack + m
    T = np.zeros((m, width))
    obj = np.zeros(width)
    for k, (j, s) in enumerate(split):
        obj[k] = c[j] * s
    big = 1e7 * (1.0 + float(np.max(np.abs(c))) if n else 1.0)
    basis = [0] * m
    si = 0
    for i in range(m):
        T[i, :nsplit] = rows[i]
        if kinds[i] in ("ub", "ge"):
            T[i, nsplit + si] = 1.0 if kinds[i] == "ub" else -1.0
            si += 1
        T[i, nsplit + n_slack + i] = 1.0
        obj[nsplit + n_slack + i] = -big
        basis[i] = nsplit + n_slack + i
    rhs = np.array(rhs, dtype=float)
    for _ in range(max_iter):
        zrow = obj - np.array([obj[b] for b in basis]) @ T
        enter = int(np.argmax(zrow))
        if zrow[enter] <= 1e-7:
            break
        col = T[:, enter]
        mask = col > 1e-11
        if not mask.any():
            return np.inf
        ratios = np.where(mask, rhs / np.where(mask, col, 1.0), np.inf)
        leave = int(np.argmin(ratios))
        piv = T[leave, enter]
        T[leave] = T[leave] / piv
        rhs[leave] = rhs[leave] / piv
        for i in range(m):
            if i != leave and T[i, enter] != 0.0:
                rhs[i] -= T[i, enter] * rhs[leave]
                T[i] -= T[i, enter] * T[leave]
        basis[leave] = enter
    artificial_mass = sum(rhs[i] for i in range(m)
                          if basis[i] >= nsplit + n_slack)
    if artificial_mass > 1e-6:
        return None
    value = shift
    for i, b in enumerate(basis):
        if b < nsplit:
            value += obj[b] * rhs[i]
    return float(value)


# ---------------------------------------------------------------------------
# random instances
# ---------------------------------------------------------------------------

def random_transient_mdp(seed, n_states=5, n_actions=2, min_leak=0.05,
                         reward_scale=10.0):
    """Seeded random MDP where every action leaks at least min_leak."""
    rng = random.Random(seed)
    actions = tuple(tuple(f"a{k}" for k in range(n_actions))
                    for _ in range(n_states))
    transitions = {}
    rewards = {}
    for i in range(n_states):
        for a in actions[i]:
            mass = 1.0 - min_leak - 0.3 * rng.random()
            targets = rng.sample(range(n_states), k=min(2, n_states))
            split = rng.random()
            for j, q in zip(targets, (split, 1.0 - split)):
                key = (i, a, j)
                transitions[key] = transitions.get(key, 0.0) + round(mass * q, 6)
            rewards[(i, a)] = round(rng.uniform(-reward_scale, reward_scale), 3)
    return Mdp(n_states=n_states, actions=actions, transitions=transitions,
               rewards=rewards), InitialDistribution.point(0)


def random_finite_horizon_mdp(seed, horizon=3, width=2, n_actions=2,
                              reward_scale=5.0):
    """Layered random MDP whose states advance a time feature 1..horizon."""
    rng = random.Random(seed)
    states = [(t, w) for t in range(1, horizon + 1) for w in range(width)]
    sid = {s: k for k, s in enumerate(states)}
    actions = tuple(tuple(f"a{k}" for k in range(n_actions)) for _ in states)
    transitions = {}
    rewards = {}
    for (t, w), i in sid.items():
        for a in actions[i]:
            rewards[(i, a)] = round(rng.uniform(0, reward_scale), 3)
            if t == horizon:
                continue
            stay = 0.4 + 0.5 * rng.random()
            nxt = rng.randrange(width)
            transitions[(i, a, sid[(t + 1, nxt)])] = round(stay, 6)
            other = (nxt + 1) % width
            spill = max(0.0, 0.95 - stay)
            if spill > 0:
                transitions[(i, a, sid[(t + 1, other)])] = round(spill, 6)
    mdp = Mdp(n_states=len(states), actions=actions, transitions=transitions,
              rewards=rewards, time_feature=tuple(t for t, _ in states))
    return mdp, InitialDistribution.point(0)


def random_capacity(seed, mdp, n_resources=2, limit=1.0):
    """Random binary requirements over the non-first actions of each state."""
    rng = random.Random(seed + 99)
    resources = tuple(f"o{k + 1}" for k in range(n_resources))
    reqs = set()
    for i in range(mdp.n_states):
        for a in mdp.actions[i][1:]:
            if rng.random() < 0.8:
                reqs.add((rng.choice(resources), a, i))
    return CapacitySpec(
        resources=resources, capacities=("cap",),
        requirements=frozenset(reqs),
        capacity_costs={(o, "cap"): 1.0 for o in resources},
        capacity_limits={"cap": float(limit)})


def assert_conservation(mdp, alpha, occ, tol=1e-7, phases=None):
    """Check the probability-conservation rows directly from the kernel."""
    if phases is None:
        for j in range(mdp.n_states):
            out = sum(occ.get((j, a)) for a in mdp.actions[j])
            inflow = sum(p * occ.get((i, a))
                         for i, a in mdp.pairs()
                         for jj, p in mdp.successors(i, a) if jj == j)
            assert abs(out - alpha.get(j) - inflow) <= tol, (
                f"conservation violated at state {j}")
    else:
        for j in range(mdp.n_states):
            out = sum(occ.get((k, j, a)) for k in phases
                      for a in mdp.actions[j])
            inflow = sum(p * occ.get((k, i, a)) for k in phases
                         for i, a in mdp.pairs()
                         for jj, p in mdp.successors(i, a) if jj == j)
            assert out - alpha.get(j) - inflow <= tol


# ---------------------------------------------------------------------------
# evaluation oracles
# ---------------------------------------------------------------------------

def enumerate_deterministic_policy_values(mdp, alpha, evaluate):
    """Values of every deterministic stationary policy (tiny MDPs only)."""
    choices = [mdp.actions[i] for i in range(mdp.n_states)]
    out = []
    for combo in itertools.product(*choices):
        policy = Policy({i: {a: 1.0} for i, a in enumerate(combo)})
        out.append(evaluate(mdp, policy, alpha))
    return out


def monte_carlo_policy_value(mdp, policy, alpha, n_traj=200_000, seed=0,
                             max_steps=4000):
    """Vectorized Monte-Carlo estimate (mean, standard error)."""
    rng = np.random.default_rng(seed)
    n = mdp.n_states
    P = np.zeros((n, n + 1))
    r = np.zeros(n)
    for i in range(n):
        for a, q in policy.action_dist.get(i, {}).items():
            r[i] += q * mdp.reward(i, a)
            for j, p in mdp.successors(i, a):
                P[i, j] += q * p
        P[i, n] = max(0.0, 1.0 - P[i, :n].sum())
    cum = np.cumsum(P, axis=1)
    support = list(alpha.support())
    p0 = np.array([alpha.get(j) for j in support])
    c0 = np.cumsum(np.append(p0, max(0.0, 1.0 - p0.sum())))
    u = rng.random(n_traj)
    idx = (c0[None, :] < u[:, None]).sum(axis=1)
    state = np.full(n_traj, n, dtype=int)
    hit = idx < len(support)
    state[hit] = np.asarray(support, dtype=int)[idx[hit]]
    total = np.zeros(n_traj)
    alive = state < n
    for _ in range(max_steps):
        if not alive.any():
            break
        cur = state[alive]
        total[alive] += r[cur]
        u = rng.random(cur.shape[0])
        nxt = (cum[cur] < u[:, None]).sum(axis=1)
        state[alive] = nxt
        alive = state < n
    mean = float(total.mean())
    se = float(total.std(ddof=1) / np.sqrt(n_traj))
    return mean, se
