"""Brute-force oracle and expansion baseline."""

import pytest

from missionphasing.baselines import (StateSpaceTooLarge, brute_force,
                                      expand_mdp_baseline)
from missionphasing.constrained import (build_constrained_milp,
                                        compute_x_bound)
from missionphasing.domains import load_running_example
from missionphasing.linprog import MilpModel, TooManyBinaries, solve_lp, BINARY
from missionphasing.srmp import PhaseSwitchSpec, build_srmp_milp, solve_srmp

from helpers import random_capacity, random_transient_mdp


@pytest.fixture(scope="module")
def fig():
    return load_running_example()


def test_brute_force_one_shot_golden(fig):
    mdp, alpha, cap = fig
    X = compute_x_bound(mdp, alpha)
    model = build_constrained_milp(mdp, alpha, cap, X)
    res = brute_force(model)
    assert res.objective == pytest.approx(65.02, abs=0.01)
    assert res.best_assignment["Delta[o5]"] == 1
    assert sum(res.best_assignment.values()) == 1
    assert res.enumerated == 32


def test_brute_force_no_binaries_is_lp():
    m = MilpModel()
    x = m.add_var("x", ub=4.0)
    m.set_objective({x: 2.0})
    res = brute_force(m)
    assert res.objective == pytest.approx(solve_lp(m).objective, abs=1e-12)
    assert res.enumerated == 1


def test_brute_force_refuses_too_many_binaries():
    m = MilpModel()
    for k in range(23):
        m.add_var(f"z{k}", kind=BINARY)
    m.set_objective({0: 1.0})
    with pytest.raises(TooManyBinaries):
        brute_force(m)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_brute_force_matches_solve_milp_on_phased_models(seed):
    from missionphasing.linprog import solve_milp
    mdp, alpha = random_transient_mdp(seed, n_states=5, n_actions=2)
    cap = random_capacity(seed, mdp, n_resources=2, limit=1.0)
    costs = {i: (0.0 if i == 0 else 1.0) for i in range(5)}
    switch = PhaseSwitchSpec.budgeted(5, costs, 1.0)
    X = compute_x_bound(mdp, alpha)
    model = build_srmp_milp(mdp, alpha, cap, switch, X)
    mine = solve_milp(model)
    oracle = brute_force(model)
    assert mine.objective == pytest.approx(oracle.objective, abs=1e-6)


# -- expansion baseline -------------------------------------------------------

def test_expansion_golden(fig):
    mdp, alpha, cap = fig
    switch = PhaseSwitchSpec.budgeted(
        6, {0: 0.0, 1: 1.0, 2: 1.0, 3: 1.0, 4: 1.0, 5: 1.0}, 2.0)
    value, plan, wall, sol = expand_mdp_baseline(mdp, alpha, cap, switch)
    assert value == pytest.approx(173.80, abs=0.01)
    assert [mdp.state_label(s) for s in plan.switching_states] == \
        ["S1", "S3", "S5"]


def test_expansion_unbinding_limits_reach_unconstrained(fig):
    from missionphasing.constrained import CapacitySpec
    from missionphasing.mdp import solve_unconstrained
    mdp, alpha, cap = fig
    roomy = CapacitySpec(resources=cap.resources, capacities=cap.capacities,
                         requirements=cap.requirements,
                         capacity_costs=cap.capacity_costs,
                         capacity_limits={"hold": 5.0})
    switch = PhaseSwitchSpec.budgeted(6, {i: 1.0 for i in range(6)} | {0: 0.0},
                                      6.0)
    value, plan, wall, sol = expand_mdp_baseline(mdp, alpha, roomy, switch)
    want, _ = solve_unconstrained(mdp, alpha)
    assert value == pytest.approx(want, abs=1e-6)


@pytest.mark.parametrize("seed", [3, 4, 5, 6])
def test_expansion_matches_phased_milp(seed):
    mdp, alpha = random_transient_mdp(seed, n_states=5, n_actions=2)
    cap = random_capacity(seed, mdp, n_resources=3, limit=1.0)
    costs = {i: (0.0 if i == 0 else 1.0) for i in range(5)}
    switch = PhaseSwitchSpec.budgeted(5, costs, 1.0)
    plan, sol = solve_srmp(mdp, alpha, cap, switch)
    value, eplan, wall, esol = expand_mdp_baseline(mdp, alpha, cap, switch)
    assert value == pytest.approx(sol.objective, abs=1e-6)


def test_expansion_state_cap():
    mdp, alpha = random_transient_mdp(7, n_states=6, n_actions=2)
    cap = random_capacity(7, mdp, n_resources=3, limit=3.0)
    switch = PhaseSwitchSpec.budgeted(6, {i: 0.0 for i in range(6)}, 0.0)
    with pytest.raises(StateSpaceTooLarge):
        expand_mdp_baseline(mdp, alpha, cap, switch, state_cap=10)


def test_expansion_rejects_cost_mode(fig):
    mdp, alpha, cap = fig
    switch = PhaseSwitchSpec.cost_in_objective(6, {i: 1.0 for i in range(6)})
    with pytest.raises(ValueError):
        expand_mdp_baseline(mdp, alpha, cap, switch)
