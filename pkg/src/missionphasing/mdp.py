"""Finite transient MDPs, policies, occupation measures, exact evaluation.

States are integers 0..n-1, actions are strings declared per state (the
first declared action of a state is its default for policy extraction).
Transition rows may sum to less than one; the missing mass is leakage
out of the system, which is what makes total-reward objectives finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .linprog import MilpModel, solve_lp

_SUM_TOL = 1e-9


class NonTransient(Exception):
    """Some states retain probability mass indefinitely under a policy."""

    def __init__(self, states):
        self.states = sorted(states)
        super().__init__(f"non-transient states: {self.states}")


class NonConvergent(Exception):
    """An exact evaluation or iteration failed to converge."""


@dataclass(frozen=True)
class Mdp:
    """Finite MDP with sparse kernel and optional per-state time feature."""

    n_states: int
    actions: tuple[tuple[str, ...], ...]            # admissible actions per state
    transitions: dict = field(repr=False)           # (i, a, j) -> probability
    rewards: dict = field(repr=False)               # (i, a) -> reward
    time_feature: tuple[int, ...] | None = None
    state_names: tuple[str, ...] | None = None

    def __post_init__(self):
        if len(self.actions) != self.n_states:
            raise ValueError("actions must list one action set per state")
        if self.state_names is not None and len(self.state_names) != self.n_states:
            raise ValueError("state_names length mismatch")
        if self.time_feature is not None and len(self.time_feature) != self.n_states:
            raise ValueError("time_feature length mismatch")
        by_pair: dict[tuple[int, str], list[tuple[int, float]]] = {}
        for (i, a, j), p in self.transitions.items():
            if not (0 <= i < self.n_states and 0 <= j < self.n_states):
                raise ValueError(f"transition ({i},{a},{j}) out of range")
            if a not in self.actions[i]:
                raise ValueError(f"action {a!r} not admissible at state {i}")
            if not (-1e-12 <= p <= 1.0 + _SUM_TOL):
                raise ValueError(f"p({i},{a},{j}) = {p} outside [0, 1]")
            by_pair.setdefault((i, a), []).append((j, float(p)))
        for (i, a), outs in by_pair.items():
            total = sum(p for _, p in outs)
            if total > 1.0 + _SUM_TOL:
                raise ValueError(f"outgoing mass of ({i},{a}) sums to {total} > 1")
        for (i, a), r in self.rewards.items():
            if a not in self.actions[i]:
                raise ValueError(f"reward on inadmissible pair ({i},{a})")
            if not math.isfinite(r):
                raise ValueError(f"reward r({i},{a}) = {r} is not finite")
        object.__setattr__(self, "_succ", {
            pair: tuple(sorted(outs)) for pair, outs in by_pair.items()})

    # -- views ----------------------------------------------------------

    def pairs(self):
        """All (state, action) pairs in declaration order."""
        return [(i, a) for i in range(self.n_states) for a in self.actions[i]]

    def successors(self, i: int, a: str):
        """Sorted ((j, p), ...) for the pair, empty when all mass leaks."""
        return self._succ.get((i, a), ())

    def reward(self, i: int, a: str) -> float:
        return self.rewards.get((i, a), 0.0)

    def state_label(self, i: int) -> str:
        return self.state_names[i] if self.state_names else f"s{i}"

    def horizon(self) -> int | None:
        return max(self.time_feature) if self.time_feature is not None else None


@dataclass(frozen=True)
class InitialDistribution:
    """alpha_j: probability of starting in state j (mass may be < 1)."""

    alpha: dict

    def __post_init__(self):
        total = 0.0
        for j, p in self.alpha.items():
            if p < -1e-12:
                raise ValueError(f"alpha[{j}] = {p} negative")
            total += p
        if total > 1.0 + _SUM_TOL:
            raise ValueError(f"alpha mass {total} exceeds 1")

    def support(self):
        return sorted(j for j, p in self.alpha.items() if p > 0)

    def get(self, j: int) -> float:
        return self.alpha.get(j, 0.0)

    @classmethod
    def point(cls, j: int) -> "InitialDistribution":
        return cls({j: 1.0})


@dataclass(frozen=True)
class Policy:
    """Randomized stationary policy: state -> distribution over actions."""

    action_dist: dict

    def __post_init__(self):
        for i, dist in self.action_dist.items():
            total = sum(dist.values())
            if abs(total - 1.0) > _SUM_TOL:
                raise ValueError(f"policy at state {i} sums to {total}")
            if any(p < -1e-12 for p in dist.values()):
                raise ValueError(f"negative action probability at state {i}")

    def states(self):
        return sorted(self.action_dist)

    def dist(self, i: int):
        return self.action_dist[i]

    def is_deterministic(self, tol: float = 1e-9) -> bool:
        return all(any(abs(p - 1.0) <= tol for p in d.values())
                   for d in self.action_dist.values())


class OccupationMeasure:
    """Expected visit counts x[(i, a)], or x[(k, i, a)] for phased flows."""

    def __init__(self, x: dict, phased: bool = False):
        for key, v in x.items():
            if v < -1e-9:
                raise ValueError(f"occupation x[{key}] = {v} below -1e-9")
        self.phased = phased
        self.x = {key: v for key, v in x.items()}

    def get(self, key) -> float:
        return max(self.x.get(key, 0.0), 0.0)

    def items(self):
        for key, v in sorted(self.x.items()):
            yield key, max(v, 0.0)

    def total(self) -> float:
        return sum(max(v, 0.0) for v in self.x.values())

    def state_totals(self) -> dict:
        out: dict = {}
        for key, v in self.x.items():
            i = key[-2]
            out[i] = out.get(i, 0.0) + max(v, 0.0)
        return out


@dataclass
class TransienceReport:
    ok: bool
    steps: int
    residual_mass: float
    recurrent_states: list

    def raise_if_bad(self):
        if not self.ok:
            raise NonTransient(self.recurrent_states)


def validate_transient(mdp: Mdp, alpha: InitialDistribution,
                       horizon_cap: int = 500) -> TransienceReport:
    """Sufficient transience check: uniform-random-policy mass decay.

    Power-iterates the uniform-policy transition matrix from alpha and
    accepts iff the in-system mass drops below 1e-9 within horizon_cap
    steps.  This rejects a superset of truly recurrent inputs, which is
    the safe direction for the non-discounted solvers.
    """
    n = mdp.n_states
    P = np.zeros((n, n))
    for i in range(n):
        acts = mdp.actions[i]
        if not acts:
            continue
        w = 1.0 / len(acts)
        for a in acts:
            for j, p in mdp.successors(i, a):
                P[i, j] += w * p
    mass = np.zeros(n)
    for j, p in alpha.alpha.items():
        mass[j] += p
    steps = 0
    for steps in range(1, horizon_cap + 1):
        mass = mass @ P
        total = mass.sum()
        if total < 1e-9:
            return TransienceReport(True, steps, float(total), [])
    bad = [int(j) for j in np.where(mass > 1e-12 / max(n, 1))[0]]
    return TransienceReport(False, horizon_cap, float(mass.sum()), bad)


# ---------------------------------------------------------------------------
# occupation-measure LP
# ---------------------------------------------------------------------------

def flow_var(i: int, a: str) -> str:
    return f"x[{i},{a}]"


def add_flow_variables(model: MilpModel, mdp: Mdp, prefix: str = "") -> list:
    pairs = mdp.pairs()
    for i, a in pairs:
        model.add_var(prefix + flow_var(i, a), lb=0.0)
    return pairs


def add_conservation_rows(model: MilpModel, mdp: Mdp, alpha: InitialDistribution,
                          prefix: str = "", alpha_vars: dict | None = None) -> None:
    """Probability-conservation rows: out-flow of j = alpha_j + in-flow of j.

    With alpha_vars given, the per-state entry mass is a variable (the
    phased formulations), otherwise it is the constant alpha_j.
    """
    incoming: dict[int, dict[str, float]] = {j: {} for j in range(mdp.n_states)}
    for i, a in mdp.pairs():
        for j, p in mdp.successors(i, a):
            name = prefix + flow_var(i, a)
            incoming[j][name] = incoming[j].get(name, 0.0) + p
    for j in range(mdp.n_states):
        coeffs = dict(incoming[j])
        coeffs = {k: -v for k, v in coeffs.items()}
        for a in mdp.actions[j]:
            name = prefix + flow_var(j, a)
            coeffs[name] = coeffs.get(name, 0.0) + 1.0
        if alpha_vars is not None:
            coeffs[alpha_vars[j]] = coeffs.get(alpha_vars[j], 0.0) - 1.0
            rhs = 0.0
        else:
            rhs = alpha.get(j)
        model.add_constraint(coeffs, "=", rhs, name=f"{prefix}conserve[{j}]")


def build_flow_lp(mdp: Mdp, alpha: InitialDistribution,
                  objective: str = "reward") -> MilpModel:
    """The basic occupation-measure LP; objective 'reward' or 'occupancy'."""
    model = MilpModel("flow-lp")
    pairs = add_flow_variables(model, mdp)
    add_conservation_rows(model, mdp, alpha)
    if objective == "reward":
        model.set_objective({flow_var(i, a): mdp.reward(i, a) for i, a in pairs})
    elif objective == "occupancy":
        model.set_objective({flow_var(i, a): 1.0 for i, a in pairs})
    else:
        raise ValueError(objective)
    return model


def solve_unconstrained(mdp: Mdp, alpha: InitialDistribution):
    """Maximize total expected reward; returns (value, OccupationMeasure)."""
    model = build_flow_lp(mdp, alpha, "reward")
    sol = solve_lp(model)
    x = {(i, a): sol.assignment[flow_var(i, a)] for i, a in mdp.pairs()}
    return sol.objective, OccupationMeasure(x)


def extract_policy(mdp: Mdp, occ: OccupationMeasure) -> Policy:
    """Normalize visit counts into action probabilities per state.

    States with (near) zero total occupancy get the state's first
    declared action deterministically; they are never reached, so the
    choice cannot affect value.
    """
    dist = {}
    for i in range(mdp.n_states):
        if not mdp.actions[i]:
            continue
        weights = {a: occ.get((i, a)) for a in mdp.actions[i]}
        total = sum(weights.values())
        if total > 1e-9:
            dist[i] = {a: w / total for a, w in weights.items() if w / total > 0.0}
            norm = sum(dist[i].values())
            dist[i] = {a: p / norm for a, p in dist[i].items()}
        else:
            dist[i] = {mdp.actions[i][0]: 1.0}
    return Policy(dist)


# ---------------------------------------------------------------------------
# exact evaluation
# ---------------------------------------------------------------------------

_PIVOT_FLOOR = 1e-12
_ITERATIVE_THRESHOLD = 5000


def _solve_linear(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Gaussian elimination with partial pivoting and a 1e-12 pivot floor."""
    n = A.shape[0]
    M = np.hstack([A.astype(float), b.reshape(-1, 1).astype(float)])
    for k in range(n):
        piv = k + int(np.argmax(np.abs(M[k:, k])))
        if abs(M[piv, k]) < _PIVOT_FLOOR:
            raise NonConvergent("singular linear system (recurrent chain?)")
        if piv != k:
            M[[k, piv]] = M[[piv, k]]
        M[k + 1:] -= np.outer(M[k + 1:, k] / M[k, k], M[k])
    x = np.zeros(n)
    for k in range(n - 1, -1, -1):
        x[k] = (M[k, -1] - M[k, k + 1:n] @ x[k + 1:]) / M[k, k]
    return x


def _chain_value(P: np.ndarray, r: np.ndarray) -> np.ndarray:
    """v = r + P v for a substochastic chain."""
    n = P.shape[0]
    if n <= _ITERATIVE_THRESHOLD:
        return _solve_linear(np.eye(n) - P, r)
    v = np.zeros(n)
    for _ in range(1_000_000):
        nv = r + P @ v
        if np.max(np.abs(nv - v)) < 1e-12:
            return nv
        v = nv
    raise NonConvergent("value iteration did not converge")


def evaluate_policy(mdp: Mdp, policy: Policy, alpha: InitialDistribution) -> float:
    """Exact expected total reward of the chain induced by the policy."""
    reach = _reachable_states(mdp, policy, alpha)
    idx = {s: k for k, s in enumerate(reach)}
    n = len(reach)
    P = np.zeros((n, n))
    r = np.zeros(n)
    for s in reach:
        k = idx[s]
        for a, q in policy.dist(s).items():
            if q <= 0.0:
                continue
            r[k] += q * mdp.reward(s, a)
            for j, p in mdp.successors(s, a):
                P[k, idx[j]] += q * p
    v = _chain_value(P, r)
    return float(sum(alpha.get(s) * v[idx[s]] for s in reach))


def _reachable_states(mdp: Mdp, policy: Policy, alpha: InitialDistribution):
    seen = set()
    stack = list(alpha.support())
    while stack:
        s = stack.pop()
        if s in seen:
            continue
        seen.add(s)
        if s not in policy.action_dist:
            raise ValueError(f"policy undefined at reachable state {s}")
        for a, q in policy.dist(s).items():
            if q <= 0.0:
                continue
            for j, p in mdp.successors(s, a):
                if p > 0.0 and j not in seen:
                    stack.append(j)
    return sorted(seen)


def evaluate_phase_plan(mdp: Mdp, plan, alpha: InitialDistribution) -> float:
    """Exact value of a phase plan via the product chain over (phase, state).

    At a state with a phase-selection distribution the phase index is
    resampled on every arrival (including at time zero); elsewhere the
    current phase index is preserved and its policy followed.
    """
    selection = plan.phase_selection
    policies = [ph.policy for ph in plan.phases]

    def entry_pairs(s):
        if s not in selection:
            raise ValueError(f"no phase selection at switching state {s}")
        return [(k, q) for k, q in sorted(selection[s].items()) if q > 0.0]

    pairs = []
    index = {}
    stack = []
    for s in alpha.support():
        for k, _ in entry_pairs(s):
            if (k, s) not in index:
                index[(k, s)] = len(pairs)
                pairs.append((k, s))
                stack.append((k, s))
    while stack:
        k, s = stack.pop()
        pol = policies[k]
        if s not in pol.action_dist:
            raise ValueError(f"phase {k} policy undefined at state {s}")
        for a, q in pol.dist(s).items():
            if q <= 0.0:
                continue
            for j, p in mdp.successors(s, a):
                if p <= 0.0:
                    continue
                nxt = entry_pairs(j) if j in selection else [(k, 1.0)]
                for k2, _ in nxt:
                    if (k2, j) not in index:
                        index[(k2, j)] = len(pairs)
                        pairs.append((k2, j))
                        stack.append((k2, j))
    n = len(pairs)
    P = np.zeros((n, n))
    r = np.zeros(n)
    for (k, s), row in index.items():
        pol = policies[k]
        for a, q in pol.dist(s).items():
            if q <= 0.0:
                continue
            r[row] += q * mdp.reward(s, a)
            for j, p in mdp.successors(s, a):
                if p <= 0.0:
                    continue
                if j in selection:
                    for k2, w in entry_pairs(j):
                        P[row, index[(k2, j)]] += q * p * w
                else:
                    P[row, index[(k, j)]] += q * p
    v = _chain_value(P, r)
    value = 0.0
    for s in alpha.support():
        for k, w in entry_pairs(s):
            value += alpha.get(s) * w * v[index[(k, s)]]
    return float(value)
