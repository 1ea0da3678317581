"""Fixtures and grid-world generators: determinism, parameters, filters."""

import json

import pytest

from missionphasing.domains import (GridWorldSpec, SplitMix64, gen_gridworld,
                                    load_running_example,
                                    load_two_agent_example)
from missionphasing.files import SrmpProblem, emit_problem
from missionphasing.mdp import validate_transient


def test_running_example_shape():
    mdp, alpha, cap = load_running_example()
    assert mdp.n_states == 6
    assert mdp.state_names == ("S1", "S2", "S3", "S4", "S5", "S6")
    assert mdp.actions[5] == ("noop",)
    assert not mdp.successors(5, "noop")  # sink leaks out of the system
    assert alpha.get(0) == 1.0
    assert cap.capacity_limits == {"hold": 1.0}
    assert ("o3", "a3", 2) in cap.requirements


def test_two_agent_fixture_shape():
    problem = load_two_agent_example()
    assert problem.horizon == 10
    assert problem.shared_limits == {"o1": 1, "o2": 1}
    for name, mdp, alpha, cap in problem.agents:
        assert mdp.time_feature is not None
        assert alpha.get(0) == 1.0
        # both-resource tasks require both units on the same work action
        assert any(len(cap.needed_resources(a, i)) == 2
                   for i, a in mdp.pairs())


def test_splitmix64_reference_values():
    rng = SplitMix64(0)
    first = [rng.next_u64() for _ in range(3)]
    # reference sequence for seed 0 (SplitMix64 as published)
    assert first == [16294208416658607535, 7960286522194355700,
                     487617019471545679]


def test_generator_is_deterministic():
    spec = GridWorldSpec(n=6, n_resource_types=3, capacity_limit=1, seed=9)
    a = gen_gridworld(spec)
    b = gen_gridworld(spec)
    doc_a = emit_problem(SrmpProblem(a[0], a[1], a[2], None))
    doc_b = emit_problem(SrmpProblem(b[0], b[1], b[2], None))
    assert json.dumps(doc_a, sort_keys=True) == json.dumps(doc_b, sort_keys=True)


def test_single_agent_grid_action_parameters():
    spec = GridWorldSpec(n=5, n_resource_types=2, capacity_limit=1, seed=3)
    mdp, alpha, cap = gen_gridworld(spec)
    start = alpha.support()[0]
    assert mdp.state_label(start) == f"c{spec.n - 1}-0"  # bottom-left
    for i in range(mdp.n_states):
        outs = dict()
        for j, p in mdp.successors(i, "wait"):
            outs[j] = p
        assert outs == {i: 0.95}
        for d in ("up", "down", "left", "right"):
            total = sum(p for _, p in mdp.successors(i, d))
            assert total == pytest.approx(0.8, abs=1e-12)  # 0.2 damage leak
            safe_total = sum(p for _, p in mdp.successors(i, f"safe-{d}"))
            assert safe_total == pytest.approx(0.95, abs=1e-12)
        if "do" in mdp.actions[i]:
            assert not mdp.successors(i, "do")  # terminates the mission
            assert mdp.reward(i, "do") >= 1.0


def test_single_agent_grid_requirements():
    spec = GridWorldSpec(n=5, n_resource_types=3, capacity_limit=2, seed=11)
    mdp, alpha, cap = gen_gridworld(spec)
    by_state = {}
    for (o, a, i) in cap.requirements:
        by_state.setdefault(i, set()).add((o, a))
    for i in range(mdp.n_states):
        safe_reqs = {o for (o, a) in by_state.get(i, set())
                     if a.startswith("safe-")}
        assert len(safe_reqs) == 1  # one safe-move resource per cell
        if "do" in mdp.actions[i]:
            do_reqs = {o for (o, a) in by_state.get(i, set()) if a == "do"}
            assert len(do_reqs) == 1


def test_task_rewards_ordered_by_manhattan_distance():
    spec = GridWorldSpec(n=6, n_resource_types=3, capacity_limit=1, seed=4)
    mdp, alpha, cap = gen_gridworld(spec)
    start = alpha.support()[0]
    sr, sc = [int(v) for v in mdp.state_label(start)[1:].split("-")]
    tasks = []
    for i in range(mdp.n_states):
        if "do" in mdp.actions[i]:
            r, c = [int(v) for v in mdp.state_label(i)[1:].split("-")]
            tasks.append((abs(r - sr) + abs(c - sc), mdp.reward(i, "do")))
    rewards_by_distance = [rw for _, rw in sorted(tasks, key=lambda t: t[0])]
    assert rewards_by_distance == sorted(rewards_by_distance)
    assert sorted(rw for _, rw in tasks) == list(
        map(float, range(1, len(tasks) + 1)))


def test_wall_and_task_counts_exact():
    n = 8
    spec = GridWorldSpec(n=n, n_resource_types=9, capacity_limit=3, seed=12)
    mdp, alpha, cap = gen_gridworld(spec)
    walls = n * n - sum(1 for _ in range(1))  # walls are implicit; count cells
    # reachable cells are the states; total non-wall = n^2 - floor(0.4 n^2)
    n_walls = int(0.4 * n * n)
    n_tasks = int(0.1 * n * n)
    assert mdp.n_states <= n * n - n_walls
    assert mdp.n_states > n * n / 2  # reachability filter
    task_states = [i for i in range(mdp.n_states) if "do" in mdp.actions[i]]
    assert len(task_states) <= n_tasks


def test_single_agent_grids_are_transient():
    for seed in (1, 2, 3):
        spec = GridWorldSpec(n=4, n_resource_types=2, capacity_limit=1,
                             seed=seed)
        mdp, alpha, cap = gen_gridworld(spec)
        assert validate_transient(mdp, alpha).ok


def test_multiagent_grid_windows_and_structure():
    spec = GridWorldSpec(n=5, n_resource_types=2, capacity_limit=2, seed=21,
                         variant="multi", n_agents=2, horizon=8)
    problem = gen_gridworld(spec)
    assert problem.n_agents == 2
    assert problem.shared_limits == {"o1": 1, "o2": 1}
    for name, mdp, alpha, cap in problem.agents:
        # start at the center of the grid at time 1
        label = mdp.state_label(alpha.support()[0])
        assert label == f"t1|c{spec.n // 2}-{spec.n // 2}"
        # every task window is exactly three steps wide
        windows = {}
        for (i, a), r in mdp.rewards.items():
            if a == "do" and r > 0:
                t = mdp.time_feature[i]
                cell = mdp.state_label(i).split("|")[1]
                windows.setdefault((cell, r), []).append(t)
        assert windows
        for (cell, r), times in windows.items():
            times = sorted(times)
            assert len(times) == len([t for t in times if t <= spec.horizon])
            assert times == list(range(times[0], times[0] + len(times)))
            assert len(times) <= 3
        # do keeps the agent in place with probability 0.95
        for i in range(mdp.n_states):
            if "do" in mdp.actions[i] and mdp.time_feature[i] < spec.horizon:
                outs = dict()
                for j, p in mdp.successors(i, "do"):
                    outs[mdp.state_label(j)] = p
                t, cell = mdp.state_label(i).split("|")
                assert outs == {f"t{int(t[1:]) + 1}|{cell}": 0.95}


def test_multiagent_generator_deterministic():
    spec = GridWorldSpec(n=4, n_resource_types=2, capacity_limit=2, seed=5,
                         variant="multi", n_agents=2, horizon=6)
    a = gen_gridworld(spec)
    b = gen_gridworld(spec)
    assert [m.transitions for _, m, _, _ in a.agents] == \
        [m.transitions for _, m, _, _ in b.agents]
    assert [m.rewards for _, m, _, _ in a.agents] == \
        [m.rewards for _, m, _, _ in b.agents]


def test_spec_validation():
    with pytest.raises(ValueError):
        GridWorldSpec(n=1, n_resource_types=2, capacity_limit=1, seed=0)
    with pytest.raises(ValueError):
        GridWorldSpec(n=4, n_resource_types=0, capacity_limit=1, seed=0)
    with pytest.raises(ValueError):
        GridWorldSpec(n=4, n_resource_types=2, capacity_limit=1, seed=0,
                      variant="duo")
