"""Single-agent resource-driven mission phasing.

The agent may exchange its whole resource bundle at phase-switching
states.  Which states those are is itself part of the optimization:
budgeted selection, cost-in-objective selection, or feature-grouped
selection.  All three compile to one MILP family with per-phase flows
x^k, free per-phase entry masses, binary per-phase holdings and binary
switching indicators.  For predetermined switching states there is also
a faster abstract policy-iteration solver with an embedded one-shot
constrained solve per phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .constrained import (CapacitySpec, ResourceBundle, add_capacity_rows,
                          build_constrained_milp, compute_resource_x_bounds,
                          compute_state_x_bounds, compute_x_bound, delta_var)
from .linprog import (BINARY, MilpModel, MilpSolution, SolverConfig,
                      solve_milp)
from .mdp import (InitialDistribution, Mdp, NonConvergent, OccupationMeasure,
                  Policy, add_conservation_rows, add_flow_variables,
                  evaluate_phase_plan, extract_policy, flow_var,
                  solve_unconstrained)

BUDGETED = "budgeted"
COST_IN_OBJECTIVE = "cost_in_objective"
GROUPED = "grouped"


@dataclass(frozen=True)
class PhaseSwitchSpec:
    """Costs and budget governing the creation of phase-switching states.

    Budgeted: per-state costs and a hard budget; a state is eligible iff
    its own cost fits the budget.  CostInObjective: per-state costs are
    subtracted from the reward instead, every state is eligible.
    Grouped: states are partitioned into feature groups that can only be
    opened jointly, at a per-group cost against the budget.
    """

    mode: str
    n_states: int
    state_costs: dict = field(default_factory=dict)     # state -> cost
    budget: float | None = None
    groups: tuple = ()                                  # partition, frozensets
    group_costs: tuple = ()

    def __post_init__(self):
        if self.mode not in (BUDGETED, COST_IN_OBJECTIVE, GROUPED):
            raise ValueError(f"unknown switching mode {self.mode!r}")
        if self.mode == GROUPED:
            if len(self.groups) != len(self.group_costs):
                raise ValueError("groups and group_costs lengths differ")
            seen: set = set()
            for g in self.groups:
                if seen & g:
                    raise ValueError("groups must be disjoint")
                seen |= g
            if seen != set(range(self.n_states)):
                raise ValueError("groups must partition the state space")
            if any(c < 0 for c in self.group_costs):
                raise ValueError("group costs must be >= 0")
        else:
            if any(c < 0 for c in self.state_costs.values()):
                raise ValueError("switching costs must be >= 0")
        if self.mode in (BUDGETED, GROUPED):
            if self.budget is None or self.budget < 0:
                raise ValueError(f"{self.mode} mode needs a budget >= 0")

    def state_cost(self, i: int) -> float:
        if self.mode == GROUPED:
            return self.group_costs[self.group_of(i)]
        return self.state_costs.get(i, 0.0)

    def group_of(self, i: int) -> int:
        for gi, g in enumerate(self.groups):
            if i in g:
                return gi
        raise KeyError(i)

    def eligible_states(self) -> list:
        """States that can possibly become phase-switching states."""
        if self.mode == COST_IN_OBJECTIVE:
            return list(range(self.n_states))
        if self.mode == GROUPED:
            out = []
            for g, cost in zip(self.groups, self.group_costs):
                if cost <= self.budget + 1e-12:
                    out.extend(g)
            return sorted(out)
        return sorted(i for i in range(self.n_states)
                      if self.state_costs.get(i, 0.0) <= self.budget + 1e-12)

    @classmethod
    def budgeted(cls, n_states, state_costs, budget):
        return cls(mode=BUDGETED, n_states=n_states,
                   state_costs=dict(state_costs), budget=float(budget))

    @classmethod
    def cost_in_objective(cls, n_states, state_costs):
        return cls(mode=COST_IN_OBJECTIVE, n_states=n_states,
                   state_costs=dict(state_costs))

    @classmethod
    def grouped(cls, n_states, groups, group_costs, budget):
        return cls(mode=GROUPED, n_states=n_states,
                   groups=tuple(frozenset(g) for g in groups),
                   group_costs=tuple(float(c) for c in group_costs),
                   budget=float(budget))


@dataclass(frozen=True)
class Phase:
    anchor_states: tuple            # states with positive entry mass
    bundle: ResourceBundle
    policy: Policy
    entry_mass: dict                # state -> net positive entry mass
    occupancy: dict                 # (state, action) -> x


@dataclass(frozen=True)
class PhasePlan:
    """Switching states, per-phase bundles/policies, phase selection."""

    switching_states: tuple
    phases: tuple                   # Phase instances
    phase_selection: dict           # state -> {phase index -> probability}
    objective: float
    reward: float
    creation_cost: float = 0.0

    def bundle_at(self, state: int) -> frozenset:
        """Bundle of the (single) phase selected at a switching state."""
        sel = self.phase_selection[state]
        best = max(sel.items(), key=lambda kv: kv[1])[0]
        return self.phases[best].bundle.held


def alpha_var(k: int, j: int) -> str:
    return f"alphav[{k},{j}]"


def lambda_var(tag) -> str:
    return f"Lambda[{tag}]"


def _phase_flow_var(k: int, i: int, a: str) -> str:
    return f"p{k}." + flow_var(i, a)


def build_srmp_milp(mdp: Mdp, alpha: InitialDistribution, cap: CapacitySpec,
                    switch: PhaseSwitchSpec, X: float,
                    n_phases: int | None = None,
                    state_bounds: dict | None = None,
                    resource_bounds: dict | None = None) -> MilpModel:
    """Phased MILP over K phase indices (default: one per eligible state).

    Per-phase flows satisfy conservation against free entry masses
    alphav[k, j]; entry masses across phases sum to the true initial
    distribution; entry mass at j can only be nonzero when the switching
    indicator of j (or of j's group) is on; per-phase holdings obey the
    capacity rows.  Budgeted/Grouped add the switching budget row;
    CostInObjective charges switching indicators in the objective.

    state_bounds / resource_bounds optionally carry per-state and
    per-resource occupancy maxima of the aggregate flow polytope; they
    replace the global X as big-M coefficients in the linking rows,
    which tightens the LP relaxation without changing the integer
    optimum (any phased flow aggregates into the plain flow polytope).
    """
    eligible = switch.eligible_states()
    for j in alpha.support():
        if j not in eligible:
            raise ValueError(
                f"initial state {mdp.state_label(j)} is not eligible for "
                "phase switching (every initial-support state must be)")
    if n_phases is None:
        # Phases holding the same bundle merge losslessly (their summed
        # flows aggregate into the plain conservation polytope, which is
        # what bounds every linking row), so one phase index per
        # capacity-feasible bundle is always enough; one per eligible
        # state bounds the count from the other side.
        K = min(len(eligible),
                len(cap.feasible_bundles(limit=len(eligible))))
    else:
        K = int(n_phases)
    if K < 1:
        raise ValueError("need at least one phase index")
    model = MilpModel("srmp")
    pairs = mdp.pairs()
    for k in range(K):
        for i, a in pairs:
            model.add_var(_phase_flow_var(k, i, a), lb=0.0)
    for k in range(K):
        for j in range(mdp.n_states):
            model.add_var(alpha_var(k, j), lb=-math.inf, ub=math.inf)
    if switch.mode == GROUPED:
        lam_tags = {}
        for gi, (g, cost) in enumerate(zip(switch.groups, switch.group_costs)):
            if cost <= switch.budget + 1e-12:
                idx = model.add_var(lambda_var(f"g{gi}"), kind=BINARY)
                model.branch_priority[idx] = 1
                for j in g:
                    lam_tags[j] = f"g{gi}"
    else:
        lam_tags = {j: str(j) for j in eligible}
        for j in eligible:
            idx = model.add_var(lambda_var(str(j)), kind=BINARY)
            model.branch_priority[idx] = 1

    for k in range(K):
        add_conservation_rows(
            model, mdp, alpha, prefix=f"p{k}.",
            alpha_vars={j: alpha_var(k, j) for j in range(mdp.n_states)})
    for j in range(mdp.n_states):
        model.add_constraint({alpha_var(k, j): 1.0 for k in range(K)},
                             "=", alpha.get(j), name=f"entry[{j}]")
    for k in range(K):
        for j in range(mdp.n_states):
            M = X
            if state_bounds is not None:
                M = min(M, state_bounds.get(j, X))
            if M > 1e-9 and j in lam_tags:
                coeffs = {alpha_var(k, j): 1.0,
                          lambda_var(lam_tags[j]): -M}
            else:
                # ineligible or unreachable state: no positive entry mass
                coeffs = {alpha_var(k, j): 1.0}
            model.add_constraint(coeffs, "<=", 0.0, name=f"open[{k},{j}]")
    for k in range(K):
        add_capacity_rows(model, mdp, cap, X, flow_prefix=f"p{k}.", phase=k,
                          resource_bounds=resource_bounds)
    # Phase indices are interchangeable; force bundle codes non-increasing
    # across k.  Any solution can be phase-permuted into this canonical
    # order, so the optimal value is untouched while branch and bound
    # stops revisiting permutations of one bundle assignment.
    if K > 1:
        weights = {o: float(2 ** t) for t, o in enumerate(cap.resources)}
        for k in range(K - 1):
            coeffs = {}
            for o in cap.resources:
                coeffs[delta_var(o, phase=k)] = weights[o]
                coeffs[delta_var(o, phase=k + 1)] = -weights[o]
            model.add_constraint(coeffs, ">=", 0.0, name=f"phase-order[{k}]")

    objective = {}
    for k in range(K):
        for i, a in pairs:
            r = mdp.reward(i, a)
            if r != 0.0:
                objective[_phase_flow_var(k, i, a)] = r
    if switch.mode == COST_IN_OBJECTIVE:
        for j in eligible:
            c = switch.state_cost(j)
            if c != 0.0:
                objective[lambda_var(lam_tags[j])] = \
                    objective.get(lambda_var(lam_tags[j]), 0.0) - c
    else:
        if switch.mode == GROUPED:
            coeffs = {}
            for gi, (g, cost) in enumerate(zip(switch.groups, switch.group_costs)):
                if cost <= switch.budget + 1e-12 and cost != 0.0:
                    coeffs[lambda_var(f"g{gi}")] = cost
        else:
            coeffs = {lambda_var(str(j)): switch.state_costs.get(j, 0.0)
                      for j in eligible if switch.state_costs.get(j, 0.0) != 0.0}
        model.add_constraint(coeffs, "<=", switch.budget, name="switch-budget")
    model.set_objective(objective)
    model._srmp_meta = {"K": K, "eligible": eligible, "lam_tags": lam_tags,
                        "switch": switch, "cap": cap}
    return model


def extract_phase_plan(mdp: Mdp, cap: CapacitySpec, switch: PhaseSwitchSpec,
                       solution: MilpSolution, K: int,
                       lam_tags: dict) -> PhasePlan:
    """Turn a phased MILP solution into an executable PhasePlan.

    Phase policies normalize per-phase visit counts; the phase adopted
    at a switching state follows the per-phase occupancy share of that
    state.  Phases with no flow are dropped.
    """
    get = solution.assignment
    live = []
    for k in range(K):
        total = sum(get[_phase_flow_var(k, i, a)] for i, a in mdp.pairs())
        if total > 1e-9:
            live.append(k)
    switching = sorted(
        j for j, tag in lam_tags.items()
        if round(get.get(lambda_var(tag), 0.0)) == 1)
    phases = []
    selection: dict = {}
    reward = 0.0
    for new_k, k in enumerate(live):
        occ = {}
        for i, a in mdp.pairs():
            v = get[_phase_flow_var(k, i, a)]
            if v > 1e-12:
                occ[(i, a)] = v
                reward += v * mdp.reward(i, a)
        x = OccupationMeasure({(i, a): get[_phase_flow_var(k, i, a)]
                               for i, a in mdp.pairs()})
        policy = extract_policy(mdp, x)
        held = frozenset(o for o in cap.resources
                         if round(get[delta_var(o, phase=k)]) == 1)
        entry = {j: get[alpha_var(k, j)] for j in range(mdp.n_states)
                 if get[alpha_var(k, j)] > 1e-9}
        phases.append(Phase(anchor_states=tuple(sorted(entry)),
                            bundle=ResourceBundle(held), policy=policy,
                            entry_mass=entry, occupancy=occ))
        for j in switching:
            mass = sum(get[_phase_flow_var(k, j, a)] for a in mdp.actions[j])
            if mass > 1e-9:
                selection.setdefault(j, {})[new_k] = mass
    for j, weights in selection.items():
        total = sum(weights.values())
        selection[j] = {k: w / total for k, w in weights.items()}
    creation = sum(switch.state_cost(j) for j in switching)
    if switch.mode == GROUPED:
        opened = {switch.group_of(j) for j in switching}
        creation = sum(switch.group_costs[g] for g in opened)
    return PhasePlan(switching_states=tuple(switching), phases=tuple(phases),
                     phase_selection=selection, objective=solution.objective,
                     reward=reward, creation_cost=creation)


def solve_srmp(mdp: Mdp, alpha: InitialDistribution, cap: CapacitySpec,
               switch: PhaseSwitchSpec, config: SolverConfig | None = None,
               X: float | None = None, n_phases: int | None = None,
               tighten: bool = True):
    """Returns (PhasePlan, MilpSolution).

    tighten=True precomputes per-state and per-resource occupancy maxima
    (a handful of cheap LPs) and uses them as big-M coefficients.
    """
    if X is None:
        X = compute_x_bound(mdp, alpha)
    state_bounds = resource_bounds = None
    if tighten:
        state_bounds = compute_state_x_bounds(mdp, alpha)
        resource_bounds = compute_resource_x_bounds(mdp, alpha, cap)
    model = build_srmp_milp(mdp, alpha, cap, switch, X, n_phases=n_phases,
                            state_bounds=state_bounds,
                            resource_bounds=resource_bounds)
    sol = solve_milp(model, config)
    if sol.values is None:  # limit hit before any incumbent
        return None, sol
    meta = model._srmp_meta
    plan = extract_phase_plan(mdp, cap, switch, sol, meta["K"], meta["lam_tags"])
    return plan, sol


# ---------------------------------------------------------------------------
# abstract policy iteration for predetermined switching states
# ---------------------------------------------------------------------------

def phase_state_space(mdp: Mdp, anchor: int, switching) -> list:
    """Forward expansion from the anchor until other switching states.

    The anchor belongs to its phase; every arrival at a switching state
    (the anchor included) ends the phase, so switching states are not
    expanded through.
    """
    seen = {anchor}
    stack = [anchor]
    while stack:
        i = stack.pop()
        for a in mdp.actions[i]:
            for j, p in mdp.successors(i, a):
                if p > 0.0 and j not in seen and j not in switching:
                    seen.add(j)
                    stack.append(j)
    return sorted(seen)


def _phase_sub_mdp(mdp: Mdp, cap: CapacitySpec, interior, switching, values):
    """Phase copy of the MDP: arcs into switching states pay the current
    abstract value of the target and leak out of the phase.  The
    capacity requirements are renumbered onto the phase state space."""
    interior = sorted(interior)
    idx = {s: k for k, s in enumerate(interior)}
    transitions = {}
    rewards = {}
    actions = []
    for s in interior:
        actions.append(mdp.actions[s])
        for a in mdp.actions[s]:
            r = mdp.reward(s, a)
            for j, p in mdp.successors(s, a):
                if p <= 0.0:
                    continue
                if j in idx and j not in switching:
                    transitions[(idx[s], a, idx[j])] = \
                        transitions.get((idx[s], a, idx[j]), 0.0) + p
                else:
                    r += p * values.get(j, 0.0)
            rewards[(idx[s], a)] = r
    sub = Mdp(n_states=len(interior), actions=tuple(actions),
              transitions=transitions, rewards=rewards,
              state_names=tuple(mdp.state_label(s) for s in interior))
    sub_cap = CapacitySpec(
        resources=cap.resources, capacities=cap.capacities,
        requirements=frozenset((o, a, idx[i]) for (o, a, i) in cap.requirements
                               if i in idx),
        capacity_costs=cap.capacity_costs,
        capacity_limits=cap.capacity_limits)
    return sub, sub_cap, idx


def solve_fixed_phases_abstract(mdp: Mdp, alpha: InitialDistribution,
                                cap: CapacitySpec, fixed_states,
                                config: SolverConfig | None = None,
                                X: float | None = None,
                                max_iterations: int = 200,
                                tol: float = 1e-9):
    """Abstract-level policy iteration over predetermined switching states.

    Each phase is the forward expansion of one switching state; policy
    improvement solves the one-shot constrained MILP of the phase with
    the abstract values of outgoing switching states injected as
    terminal rewards; policy evaluation solves the combined product
    chain exactly.  Values are nondecreasing and converge to the joint
    optimum when no constraint spans phases.

    Returns (PhasePlan, info dict with value history).
    """
    switching = sorted(set(fixed_states))
    if not switching:
        raise ValueError("need at least one switching state")
    for j in alpha.support():
        if j not in switching:
            raise ValueError(
                f"initial state {mdp.state_label(j)} must be a switching state")
    if X is None:
        X = compute_x_bound(mdp, alpha)
    interiors = {s: phase_state_space(mdp, s, switching) for s in switching}

    # informed initial values: per-phase unconstrained solves, zero terminal
    values = {s: 0.0 for s in switching}
    for s in switching:
        sub, _, idx = _phase_sub_mdp(mdp, cap, interiors[s], switching, {})
        v, _ = solve_unconstrained(sub, InitialDistribution.point(idx[s]))
        values[s] = v

    history = [dict(values)]
    bundles: dict = {}
    policies: dict = {}
    for _ in range(max_iterations):
        # policy improvement: per-phase constrained MILP against current values
        for s in switching:
            sub, sub_cap, idx = _phase_sub_mdp(mdp, cap, interiors[s],
                                               switching, values)
            model = build_constrained_milp(
                sub, InitialDistribution.point(idx[s]), sub_cap, X)
            sol = solve_milp(model, config)
            held = frozenset(o for o in cap.resources
                             if round(sol.assignment[delta_var(o)]) == 1)
            x = OccupationMeasure({(i, a): sol.assignment[flow_var(i, a)]
                                   for i, a in sub.pairs()})
            pol = extract_policy(sub, x)
            back = {s2: k for s2, k in idx.items()}
            policies[s] = Policy({s2: pol.action_dist[back[s2]]
                                  for s2 in interiors[s]})
            bundles[s] = ResourceBundle(held)
        # policy evaluation on the exact product chain
        plan = _plan_from_abstract(switching, interiors, bundles, policies,
                                   values, alpha)
        new_values = {
            s: evaluate_phase_plan(mdp, plan, InitialDistribution.point(s))
            for s in switching}
        delta = max(abs(new_values[s] - values[s]) for s in switching)
        values = new_values
        history.append(dict(values))
        if delta < tol:
            objective = sum(alpha.get(j) * values[j] for j in alpha.support())
            plan = _plan_from_abstract(switching, interiors, bundles, policies,
                                       values, alpha, objective=objective)
            return plan, {"values": values, "history": history}
    raise NonConvergent(
        "abstract policy iteration did not converge "
        "(a constraint may span multiple phases)")


def _plan_from_abstract(switching, interiors, bundles, policies, values,
                        alpha, objective=None):
    phases = []
    selection = {}
    for k, s in enumerate(switching):
        occ = {}
        phases.append(Phase(anchor_states=(s,), bundle=bundles[s],
                            policy=policies[s], entry_mass={s: 1.0},
                            occupancy=occ))
        selection[s] = {k: 1.0}
    if objective is None:
        objective = sum(alpha.get(j) * values.get(j, 0.0)
                        for j in alpha.support())
    return PhasePlan(switching_states=tuple(switching), phases=tuple(phases),
                     phase_selection=selection, objective=objective,
                     reward=objective)
