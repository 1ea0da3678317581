"""Capacity-constrained one-shot solver: goldens, oracle, invariants."""

import itertools

import pytest

from missionphasing.constrained import (CapacitySpec, build_constrained_milp,
                                        compute_x_bound, solve_constrained)
from missionphasing.domains import load_running_example
from missionphasing.linprog import LpInfeasible, solve_lp
from missionphasing.mdp import (InitialDistribution, Mdp, Policy,
                                evaluate_policy, solve_unconstrained)

from helpers import random_capacity, random_transient_mdp


@pytest.fixture(scope="module")
def fig():
    return load_running_example()


# -- compute_x_bound -----------------------------------------------------

def test_x_bound_running_example(fig):
    mdp, alpha, _ = fig
    assert compute_x_bound(mdp, alpha) == pytest.approx(70.24, abs=0.01)


def test_x_bound_uses_horizon_for_time_featured_mdps():
    mdp = Mdp(n_states=3, actions=(("a",),) * 3,
              transitions={(0, "a", 1): 1.0, (1, "a", 2): 1.0},
              rewards={}, time_feature=(1, 2, 10))
    assert compute_x_bound(mdp, InitialDistribution.point(0)) == 10.0


def test_x_bound_three_step_chain_is_three():
    mdp = Mdp(n_states=3, actions=(("a",),) * 3,
              transitions={(0, "a", 1): 1.0, (1, "a", 2): 1.0},
              rewards={})
    assert compute_x_bound(mdp, InitialDistribution.point(0)) == pytest.approx(
        3.0, abs=1e-7)


# -- one-shot constrained solve -------------------------------------------

def test_running_example_constrained_golden(fig):
    mdp, alpha, cap = fig
    value, bundle, policy, sol = solve_constrained(mdp, alpha, cap)
    assert value == pytest.approx(65.02, abs=0.01)
    assert bundle.sorted() == ["o5"]
    assert policy.dist(4) == {"a5": 1.0}
    for i in (0, 1, 2, 3):
        assert max(policy.dist(i), key=policy.dist(i).get) == "noop"


def test_zero_capacity_budget_forces_noop_only(fig):
    mdp, alpha, cap = fig
    broke = CapacitySpec(resources=cap.resources, capacities=cap.capacities,
                         requirements=cap.requirements,
                         capacity_costs=cap.capacity_costs,
                         capacity_limits={"hold": 0.0})
    value, bundle, policy, _ = solve_constrained(mdp, alpha, broke)
    assert bundle.sorted() == []
    noop_only = Policy({i: {"noop": 1.0} for i in range(6)})
    assert value == pytest.approx(evaluate_policy(mdp, noop_only, alpha),
                                  abs=1e-6)


def _bundle_oracle(mdp, alpha, cap):
    """Independent oracle: enumerate bundles, solve an action-masked LP."""
    from missionphasing.mdp import add_conservation_rows, flow_var
    from missionphasing.linprog import MilpModel
    best = None
    for r in range(len(cap.resources) + 1):
        for combo in itertools.combinations(cap.resources, r):
            held = frozenset(combo)
            if not cap.bundle_is_feasible(held):
                continue
            model = MilpModel()
            for i, a in mdp.pairs():
                allowed = all(o in held for o in cap.needed_resources(a, i))
                model.add_var(flow_var(i, a), lb=0.0,
                              ub=float("inf") if allowed else 0.0)
            add_conservation_rows(model, mdp, alpha)
            model.set_objective({flow_var(i, a): mdp.reward(i, a)
                                 for i, a in mdp.pairs()})
            try:
                sol = solve_lp(model)
            except LpInfeasible:
                continue
            if best is None or sol.objective > best:
                best = sol.objective
    return best


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
def test_random_instances_match_bundle_enumeration_oracle(seed):
    mdp, alpha = random_transient_mdp(seed, n_states=4, n_actions=3)
    cap = random_capacity(seed, mdp, n_resources=3, limit=1.0)
    value, bundle, policy, _ = solve_constrained(mdp, alpha, cap)
    assert value == pytest.approx(_bundle_oracle(mdp, alpha, cap), abs=1e-6)


# -- invariants --------------------------------------------------------------

def test_unheld_resources_carry_no_flow(fig):
    mdp, alpha, cap = fig
    X = compute_x_bound(mdp, alpha)
    value, bundle, policy, sol = solve_constrained(mdp, alpha, cap, X=X)
    for o in cap.resources:
        if o in bundle.held:
            continue
        flow = sum(sol.assignment[f"x[{i},{a}]"]
                   for i, a in cap.pairs_needing(o))
        assert flow <= 1e-6


def test_sandwich_noop_le_constrained_le_unconstrained(fig):
    mdp, alpha, cap = fig
    value, _, _, _ = solve_constrained(mdp, alpha, cap)
    lo = evaluate_policy(mdp, Policy({i: {"noop": 1.0} for i in range(6)}),
                         alpha)
    hi, _ = solve_unconstrained(mdp, alpha)
    assert lo - 1e-9 <= value <= hi + 1e-9
    assert lo < value < hi  # strict on this fixture


def test_budget_monotonicity(fig):
    mdp, alpha, cap = fig
    values = []
    for limit in (0.0, 1.0, 2.0, 5.0):
        spec = CapacitySpec(resources=cap.resources, capacities=cap.capacities,
                            requirements=cap.requirements,
                            capacity_costs=cap.capacity_costs,
                            capacity_limits={"hold": limit})
        value, _, _, _ = solve_constrained(mdp, alpha, spec)
        values.append(value)
    for lo, hi in zip(values, values[1:]):
        assert hi >= lo - 1e-6


def test_requirement_validation():
    with pytest.raises(ValueError):
        CapacitySpec(resources=("o1",), requirements=frozenset({("o9", "a", 0)}))
    with pytest.raises(ValueError):
        CapacitySpec(resources=("o1",), capacities=("c",),
                     capacity_costs={("o1", "c"): -1.0})
