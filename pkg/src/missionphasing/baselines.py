"""Independent oracles and the expansion-based comparison solver.

brute_force enumerates every assignment of a model's binaries and
solves the remaining LP per assignment; it is the ground truth the
branch-and-bound engine is checked against in the test suite.

expand_mdp_baseline solves the single-agent mission-phasing problem the
pre-phasing way: resources are folded into the state as (state, bundle)
pairs, reconfiguration becomes explicit drop-all / pick-one actions
restricted to eligible switching states, and the switching budget rides
along as a one-shot side constraint.  The state space is exponential in
the bundle size, which is exactly the blowup the phased MILP avoids.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass

import numpy as np

from .constrained import CapacitySpec, ResourceBundle, compute_x_bound
from .linprog import (BINARY, LpInfeasible, MilpModel, SolverConfig,
                      TooManyBinaries, solve_lp, solve_milp)
from .mdp import (InitialDistribution, Mdp, OccupationMeasure, Policy,
                  add_conservation_rows, extract_policy, flow_var)
from .srmp import BUDGETED, Phase, PhasePlan, PhaseSwitchSpec


class StateSpaceTooLarge(Exception):
    """The (state, bundle) expansion exceeded the configured cap."""


@dataclass
class OracleResult:
    objective: float | None
    best_assignment: dict | None     # binary name -> 0/1
    enumerated: int
    wall_time: float
    values: np.ndarray | None = None


def brute_force(model: MilpModel, binary_cap: int = 22) -> OracleResult:
    """Exact optimum by enumerating all binary assignments.

    Assignments are scanned in lexicographic order over the binaries'
    declaration order; rows touching only binaries are pre-checked
    before paying for the LP.  The first assignment attaining the best
    objective wins, so the result is order-independent and
    deterministic.  Refuses more than binary_cap binaries.
    """
    t0 = time.perf_counter()
    binaries = model.binary_indices()
    if len(binaries) > binary_cap:
        raise TooManyBinaries(
            f"{len(binaries)} binaries exceed the cap of {binary_cap}")
    bin_set = set(binaries)
    pure_rows = [(idxs, coefs, rel, rhs) for idxs, coefs, rel, rhs, _
                 in model.rows if idxs and set(idxs) <= bin_set]
    lb0 = np.array(model.lb)
    ub0 = np.array(model.ub)
    best_obj = None
    best_assign = None
    best_values = None
    count = 0
    for bits in itertools.product((0.0, 1.0), repeat=len(binaries)):
        count += 1
        ok = True
        fixed = dict(zip(binaries, bits))
        for idxs, coefs, rel, rhs in pure_rows:
            lhs = sum(fixed[i] * cf for i, cf in zip(idxs, coefs))
            if ((rel == "<=" and lhs > rhs + 1e-9)
                    or (rel == ">=" and lhs < rhs - 1e-9)
                    or (rel == "=" and abs(lhs - rhs) > 1e-9)):
                ok = False
                break
        if not ok:
            continue
        lb, ub = lb0.copy(), ub0.copy()
        for j, v in fixed.items():
            lb[j] = ub[j] = v
        try:
            sol = solve_lp(model, bounds_override=(lb, ub))
        except LpInfeasible:
            continue
        if best_obj is None or sol.objective > best_obj + 1e-9:
            best_obj = sol.objective
            best_assign = {model.var_names[j]: int(v) for j, v in fixed.items()}
            best_values = sol.values
    return OracleResult(best_obj, best_assign, count,
                        time.perf_counter() - t0, best_values)


# ---------------------------------------------------------------------------
# (state, bundle) expansion baseline
# ---------------------------------------------------------------------------

DROP_ALL = "drop-all"


def _pick(o: str) -> str:
    return f"pick[{o}]"


def expand_mdp_baseline(mdp: Mdp, alpha: InitialDistribution,
                        cap: CapacitySpec, switch: PhaseSwitchSpec,
                        config: SolverConfig | None = None,
                        state_cap: int = 20000,
                        X: float | None = None):
    """Solve the budgeted S-RMP instance on the expanded MDP.

    Returns (value, PhasePlan, wall_time, MilpSolution).  The value
    matches solve_srmp exactly; the plan is synthesized from per-bundle
    flows of the expanded solution.
    """
    t0 = time.perf_counter()
    if switch.mode != BUDGETED:
        raise ValueError("the expansion baseline handles budgeted instances")
    eligible = set(switch.eligible_states())
    for j in alpha.support():
        if j not in eligible:
            raise ValueError("initial-support states must be eligible")
    if X is None:
        X = compute_x_bound(mdp, alpha)
    bundles = cap.feasible_bundles()
    max_bundle = max((len(b) for b in bundles), default=0)

    # reachable (state, bundle) closure from the empty-handed start
    start_states = [(j, frozenset()) for j in alpha.support()]
    index: dict = {}
    order: list = []
    stack = list(start_states)
    for st in start_states:
        index[st] = len(order)
        order.append(st)

    def sid(st):
        if st not in index:
            if len(order) >= state_cap:
                raise StateSpaceTooLarge(
                    f"expansion exceeds {state_cap} states")
            index[st] = len(order)
            order.append(st)
            stack.append(st)
        return index[st]

    feasible = set(bundles)
    transitions = {}
    rewards = {}
    actions: dict = {}
    while stack:
        st = stack.pop()
        i, held = st
        si = index[st]
        acts = []
        for a in mdp.actions[i]:
            if all(o in held for o in cap.needed_resources(a, i)):
                acts.append(a)
                rewards[(si, a)] = mdp.reward(i, a)
                for j, p in mdp.successors(i, a):
                    transitions[(si, a, sid((j, held)))] = p
        if i in eligible:
            if held:
                acts.append(DROP_ALL)
                transitions[(si, DROP_ALL, sid((i, frozenset())))] = 1.0
            for o in cap.resources:
                grown = held | {o}
                if o not in held and grown in feasible:
                    acts.append(_pick(o))
                    transitions[(si, _pick(o), sid((i, grown)))] = 1.0
        actions[si] = tuple(acts)

    n = len(order)
    names = tuple(f"{mdp.state_label(i)}+{{{','.join(sorted(b))}}}"
                  for i, b in order)
    exp = Mdp(n_states=n, actions=tuple(actions[k] for k in range(n)),
              transitions=transitions, rewards=rewards, state_names=names)
    exp_alpha = InitialDistribution(
        {index[(j, frozenset())]: alpha.get(j) for j in alpha.support()})

    model = MilpModel("expanded-srmp")
    for k in range(n):
        for a in exp.actions[k]:
            model.add_var(flow_var(k, a), lb=0.0)
    lam = {}
    for i in sorted(eligible):
        lam[i] = model.add_var(f"Lambda[{i}]", kind=BINARY)
        model.branch_priority[lam[i]] = 1
    add_conservation_rows(model, exp, exp_alpha)
    X_exp = X * (2 + max_bundle)
    reconfig_of: dict = {i: [] for i in eligible}
    for k, (i, held) in enumerate(order):
        for a in exp.actions[k]:
            if a == DROP_ALL or a.startswith("pick["):
                reconfig_of[i].append(flow_var(k, a))
    for i in sorted(eligible):
        coeffs = {name: 1.0 for name in reconfig_of[i]}
        coeffs[f"Lambda[{i}]"] = -X_exp
        model.add_constraint(coeffs, "<=", 0.0, name=f"open[{i}]")
    model.add_constraint(
        {f"Lambda[{i}]": switch.state_cost(i) for i in sorted(eligible)},
        "<=", switch.budget, name="switch-budget")
    # mirror the phased MILP, where positive initial mass forces the
    # switching indicator of the state on
    for j in alpha.support():
        model.add_constraint({f"Lambda[{j}]": 1.0}, "=", 1.0,
                             name=f"initial-open[{j}]")
    model.set_objective({flow_var(k, a): exp.reward(k, a)
                         for k in range(n) for a in exp.actions[k]
                         if exp.reward(k, a) != 0.0})
    sol = solve_milp(model, config)

    # synthesize a plan: one phase per bundle with flow, selection by
    # post-reconfiguration occupancy share at the switching states
    get = sol.assignment
    by_bundle: dict = {}
    for k, (i, held) in enumerate(order):
        for a in exp.actions[k]:
            if a == DROP_ALL or a.startswith("pick["):
                continue
            v = get[flow_var(k, a)]
            if v > 1e-9:
                by_bundle.setdefault(held, {})[(i, a)] = \
                    by_bundle.get(held, {}).get((i, a), 0.0) + v
    switching = sorted(
        i for i in eligible
        if any(get[name] > 1e-6 for name in reconfig_of[i])
        or alpha.get(i) > 0.0)
    phases = []
    selection: dict = {}
    for pk, (held, occ) in enumerate(sorted(by_bundle.items(),
                                            key=lambda kv: sorted(kv[0]))):
        x = OccupationMeasure(occ)
        policy = extract_policy(mdp, OccupationMeasure(
            {key: v for key, v in occ.items()}))
        entry = {}
        for i in switching:
            mass = sum(v for (si, a), v in occ.items() if si == i)
            if mass > 1e-9:
                selection.setdefault(i, {})[pk] = mass
                entry[i] = mass
        phases.append(Phase(anchor_states=tuple(sorted(entry)),
                            bundle=ResourceBundle(held), policy=policy,
                            entry_mass=entry, occupancy=occ))
    for i, weights in selection.items():
        total = sum(weights.values())
        selection[i] = {k: w / total for k, w in weights.items()}
    plan = PhasePlan(switching_states=tuple(switching), phases=tuple(phases),
                     phase_selection=selection, objective=sol.objective,
                     reward=sol.objective)
    return sol.objective, plan, time.perf_counter() - t0, sol
