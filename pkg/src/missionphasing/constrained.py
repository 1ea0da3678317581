"""Capacity-constrained one-shot MDPs.

A CapacitySpec couples occupation-measure flows to binary resource
holdings: an action that needs a resource can only carry flow when the
resource's binary is on, and the held set must fit the agent's capacity
budget.  The indicator coupling is linearized with the occupancy bound X
(big-M): flow-through of a resource, divided by X, never exceeds one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .linprog import BINARY, MilpModel, SolverConfig, solve_lp, solve_milp
from .mdp import (InitialDistribution, Mdp, OccupationMeasure, build_flow_lp,
                  extract_policy, flow_var, add_flow_variables,
                  add_conservation_rows)


@dataclass(frozen=True)
class CapacitySpec:
    """Resources, capacities, requirements and limits for one agent.

    requirements holds the (resource, action, state) triples with
    u = 1; requirements are binary, so a triple is either present or
    absent.  shared_limits (number of copies of each resource available
    system-wide) only matters for multiagent problems.
    """

    resources: tuple[str, ...]
    capacities: tuple[str, ...] = ()
    requirements: frozenset = frozenset()           # (o, a, i)
    capacity_costs: dict = field(default_factory=dict)   # (o, c) -> tau >= 0
    capacity_limits: dict = field(default_factory=dict)  # c -> tau_hat >= 0
    shared_limits: dict | None = None               # o -> copies (multiagent)

    def __post_init__(self):
        rs = set(self.resources)
        for (o, a, i) in self.requirements:
            if o not in rs:
                raise ValueError(f"requirement references unknown resource {o!r}")
        for (o, c), tau in self.capacity_costs.items():
            if o not in rs or c not in self.capacities:
                raise ValueError(f"capacity cost on unknown pair ({o}, {c})")
            if tau < 0:
                raise ValueError("capacity costs must be >= 0")
        for c, cap in self.capacity_limits.items():
            if c not in self.capacities:
                raise ValueError(f"capacity limit on unknown capacity {c!r}")
            if cap < 0:
                raise ValueError("capacity limits must be >= 0")
        if self.shared_limits is not None:
            for o, k in self.shared_limits.items():
                if o not in rs:
                    raise ValueError(f"shared limit on unknown resource {o!r}")
                if k < 0:
                    raise ValueError("shared limits must be >= 0")

    def needed_resources(self, a: str, i: int):
        return sorted(o for (o, aa, ii) in self.requirements
                      if aa == a and ii == i)

    def pairs_needing(self, o: str):
        return sorted((i, a) for (oo, a, i) in self.requirements if oo == o)

    def cost(self, o: str, c: str) -> float:
        return self.capacity_costs.get((o, c), 0.0)

    def limit(self, c: str) -> float:
        return self.capacity_limits.get(c, float("inf"))

    def bundle_is_feasible(self, held) -> bool:
        return all(sum(self.cost(o, c) for o in held) <= self.limit(c) + 1e-9
                   for c in self.capacities)

    def feasible_bundles(self, limit: int | None = None):
        """Capacity-feasible resource subsets, smallest first.

        With limit given, enumeration stops once more than limit bundles
        exist (callers that only need to compare the count against a
        threshold avoid the combinatorial blowup).
        """
        out = [frozenset()]
        frontier = [frozenset()]
        seen = {frozenset()}
        while frontier:
            nxt = []
            for b in frontier:
                for o in self.resources:
                    if o in b:
                        continue
                    cand = b | {o}
                    if cand in seen:
                        continue
                    seen.add(cand)
                    if self.bundle_is_feasible(cand):
                        out.append(cand)
                        nxt.append(cand)
                        if limit is not None and len(out) > limit:
                            return sorted(out, key=lambda s: (len(s), sorted(s)))
            frontier = nxt
        return sorted(out, key=lambda b: (len(b), sorted(b)))


@dataclass(frozen=True)
class ResourceBundle:
    """A concrete set of held resources (the Delta values)."""

    held: frozenset

    def __contains__(self, o: str) -> bool:
        return o in self.held

    def sorted(self):
        return sorted(self.held)


def delta_var(o: str, phase=None) -> str:
    return f"Delta[{o}]" if phase is None else f"Delta[{phase},{o}]"


def compute_x_bound(mdp: Mdp, alpha: InitialDistribution) -> float:
    """Upper bound X on total occupancy mass over the flow polytope.

    Finite-horizon MDPs (time-featured) use the horizon itself; for the
    general transient case the maximum of total occupancy over the
    conservation polytope is solved as an LP.
    """
    horizon = mdp.horizon()
    if horizon is not None:
        return float(horizon)
    model = build_flow_lp(mdp, alpha, objective="occupancy")
    return solve_lp(model).objective


def _polytope_maxima(mdp: Mdp, alpha: InitialDistribution, objectives):
    """Maxima of several linear functionals over the conservation polytope.

    Solved as a sequence of LPs on one shared model, warm-starting each
    solve from the previous optimal basis.
    """
    model = build_flow_lp(mdp, alpha, objective="occupancy")
    out = []
    basis = None
    for coeffs in objectives:
        model.set_objective(coeffs)
        sol = solve_lp(model, basis=basis)
        basis = sol._basis
        out.append(max(sol.objective, 0.0))
    return out


def compute_state_x_bounds(mdp: Mdp, alpha: InitialDistribution) -> dict:
    """Per-state occupancy maxima: X_j = max sum_a x[j, a].

    Any feasible phased flow aggregates to a point of the plain flow
    polytope, so X_j is a valid (much tighter than X) big-M for any
    per-phase entry mass or occupancy at state j.
    """
    objectives = [{flow_var(j, a): 1.0 for a in mdp.actions[j]}
                  for j in range(mdp.n_states)]
    vals = _polytope_maxima(mdp, alpha, objectives)
    return {j: vals[j] for j in range(mdp.n_states)}


def compute_resource_x_bounds(mdp: Mdp, alpha: InitialDistribution,
                              cap: CapacitySpec) -> dict:
    """Per-resource flow-through maxima over the flow polytope."""
    objectives = []
    for o in cap.resources:
        objectives.append({flow_var(i, a): 1.0 for i, a in cap.pairs_needing(o)})
    vals = _polytope_maxima(mdp, alpha, objectives)
    return {o: v for o, v in zip(cap.resources, vals)}


def add_capacity_rows(model: MilpModel, mdp: Mdp, cap: CapacitySpec, X: float,
                      flow_prefix: str = "", phase=None,
                      resource_bounds: dict | None = None) -> None:
    """Linking rows (flow through resource o) <= M_o * Delta_o plus the
    capacity budget rows over the Delta binaries.

    M_o defaults to the global occupancy bound X; when resource_bounds
    supplies tighter per-resource flow maxima those are used instead,
    which strengthens the LP relaxation without touching the integer
    feasible set.
    """
    for o in cap.resources:
        model.add_var(delta_var(o, phase), kind=BINARY)
    for o in cap.resources:
        M = X
        if resource_bounds is not None:
            M = min(M, resource_bounds.get(o, X))
        coeffs = {}
        for i, a in cap.pairs_needing(o):
            name = flow_prefix + flow_var(i, a)
            if name in model._index:
                coeffs[name] = coeffs.get(name, 0.0) + 1.0
        tag = f"link[{o}]" if phase is None else f"link[{phase},{o}]"
        if M > 1e-9:
            coeffs[delta_var(o, phase)] = -M
            model.add_constraint(coeffs, "<=", 0.0, name=tag)
        else:
            model.add_constraint(coeffs, "<=", 0.0, name=tag)
    for c in cap.capacities:
        if c not in cap.capacity_limits:
            continue
        coeffs = {delta_var(o, phase): cap.cost(o, c) for o in cap.resources}
        tag = f"capacity[{c}]" if phase is None else f"capacity[{phase},{c}]"
        model.add_constraint(coeffs, "<=", cap.limit(c), name=tag)


def build_constrained_milp(mdp: Mdp, alpha: InitialDistribution,
                           cap: CapacitySpec, X: float) -> MilpModel:
    """One-shot constrained MDP: flows + conservation + binary holdings."""
    model = MilpModel("constrained-mdp")
    pairs = add_flow_variables(model, mdp)
    add_conservation_rows(model, mdp, alpha)
    add_capacity_rows(model, mdp, cap, X)
    model.set_objective({flow_var(i, a): mdp.reward(i, a) for i, a in pairs})
    return model


def solve_constrained(mdp: Mdp, alpha: InitialDistribution, cap: CapacitySpec,
                      config: SolverConfig | None = None, X: float | None = None):
    """Returns (value, ResourceBundle, Policy, MilpSolution)."""
    if X is None:
        X = compute_x_bound(mdp, alpha)
    model = build_constrained_milp(mdp, alpha, cap, X)
    sol = solve_milp(model, config)
    held = frozenset(o for o in cap.resources
                     if round(sol.assignment[delta_var(o)]) == 1)
    x = OccupationMeasure(
        {(i, a): sol.assignment[flow_var(i, a)] for i, a in mdp.pairs()})
    policy = extract_policy(mdp, x)
    return sol.objective, ResourceBundle(held), policy, sol
