"""Conservation/linking invariant checks applied to raw solver output.

These re-derive the flow rows from the MDP kernels rather than trusting
the model builders, so a builder bug cannot hide from them.
"""

from __future__ import annotations

CONS_TOL = 1e-7
LINK_TOL = 1e-7
FLOW_TOL = 1e-6


def check_flow_solution(mdp, alpha, assignment, prefix=""):
    """Plain conservation: out-flow = alpha + in-flow per state."""
    for j in range(mdp.n_states):
        out = sum(assignment[f"{prefix}x[{j},{a}]"] for a in mdp.actions[j])
        inflow = sum(p * assignment[f"{prefix}x[{i},{a}]"]
                     for i, a in mdp.pairs()
                     for jj, p in mdp.successors(i, a) if jj == j)
        residual = abs(out - alpha.get(j) - inflow)
        assert residual <= CONS_TOL, (
            f"conservation residual {residual} at state {j}")


def check_constrained_solution(mdp, alpha, cap, X, assignment):
    """One-shot model: conservation plus indicator linking rows."""
    check_flow_solution(mdp, alpha, assignment)
    for o in cap.resources:
        delta = assignment[f"Delta[{o}]"]
        flow = sum(assignment[f"x[{i},{a}]"] for i, a in cap.pairs_needing(o))
        assert flow / X <= delta + LINK_TOL
        if round(delta) == 0:
            assert flow <= FLOW_TOL
    for c in cap.capacities:
        if c in cap.capacity_limits:
            used = sum(cap.cost(o, c) * assignment[f"Delta[{o}]"]
                       for o in cap.resources)
            assert used <= cap.limit(c) + LINK_TOL


def check_srmp_solution(mdp, alpha, cap, switch, X, assignment):
    """Phased model: per-phase conservation, cross-phase entry masses,
    switching links and capacity links, all at Eq-printed form."""
    K = 1 + max(int(name.split("[")[1].split(",")[0])
                for name in assignment if name.startswith("alphav["))
    for k in range(K):
        for j in range(mdp.n_states):
            out = sum(assignment[f"p{k}.x[{j},{a}]"] for a in mdp.actions[j])
            inflow = sum(p * assignment[f"p{k}.x[{i},{a}]"]
                         for i, a in mdp.pairs()
                         for jj, p in mdp.successors(i, a) if jj == j)
            entry = assignment[f"alphav[{k},{j}]"]
            assert abs(out - entry - inflow) <= CONS_TOL
    for j in range(mdp.n_states):
        total = sum(assignment[f"alphav[{k},{j}]"] for k in range(K))
        assert abs(total - alpha.get(j)) <= CONS_TOL
    from missionphasing.srmp import GROUPED
    for k in range(K):
        for j in range(mdp.n_states):
            entry = assignment[f"alphav[{k},{j}]"]
            lam = _lambda_of(switch, j, assignment)
            assert entry / X <= lam + LINK_TOL
        for o in cap.resources:
            delta = assignment[f"Delta[{k},{o}]"]
            flow = sum(assignment[f"p{k}.x[{i},{a}]"]
                       for i, a in cap.pairs_needing(o))
            assert flow / X <= delta + LINK_TOL
            if round(delta) == 0:
                assert flow <= FLOW_TOL
        for c in cap.capacities:
            if c in cap.capacity_limits:
                used = sum(cap.cost(o, c) * assignment[f"Delta[{k},{o}]"]
                           for o in cap.resources)
                assert used <= cap.limit(c) + LINK_TOL


def _lambda_of(switch, j, assignment):
    from missionphasing.srmp import GROUPED
    if switch.mode == GROUPED:
        name = f"Lambda[g{switch.group_of(j)}]"
    else:
        name = f"Lambda[{j}]"
    return assignment.get(name, 0.0)


def check_mrmp_solution(problem, realloc, assignment):
    """Multiagent models: per-agent conservation, per-slice or per-phase
    linking, allocation equalities, reallocation rows."""
    T = problem.horizon
    for m, (name, mdp, alpha, cap) in enumerate(problem.agents):
        check_flow_solution(mdp, alpha, assignment, prefix=f"m{m}.")
    per_time = realloc.mode in ("budget", "event_cost", "transfer_cost")
    if per_time:
        tags = list(range(1, T + 1))
    else:
        times = (1,) if realloc.mode == "oneshot" else realloc.times
        marks = list(times) + [T + 1]
        tags = [f"k{k}" for k in range(len(times))]
        spans = {f"k{k}": (marks[k], marks[k + 1]) for k in range(len(times))}
    for tag in tags:
        for o in problem.resources:
            held = sum(assignment[f"Delta[m{m},{o},{tag}]"]
                       for m in range(problem.n_agents))
            held += assignment[f"dummy[{o},{tag}]"]
            assert abs(held - problem.shared_limits[o]) <= LINK_TOL
        for m, (name, mdp, alpha, cap) in enumerate(problem.agents):
            if per_time:
                in_slice = set(problem.states_at(m, tag))
                scale = 1.0
            else:
                lo, hi = spans[tag]
                in_slice = {i for i in range(mdp.n_states)
                            if lo <= mdp.time_feature[i] < hi}
                scale = float(T)
            for o in problem.resources:
                delta = assignment[f"Delta[m{m},{o},{tag}]"]
                flow = sum(assignment[f"m{m}.x[{i},{a}]"]
                           for i, a in cap.pairs_needing(o) if i in in_slice)
                assert flow / scale <= delta + LINK_TOL
                if round(delta) == 0:
                    assert flow <= FLOW_TOL
    if realloc.mode in ("budget", "event_cost"):
        assert round(assignment["Psi[1]"]) == 1
        for t in range(2, T + 1):
            psi = assignment[f"Psi[{t}]"]
            for m in range(problem.n_agents):
                for o in problem.resources:
                    diff = assignment[f"Delta[m{m},{o},{t}]"] - \
                        assignment[f"Delta[m{m},{o},{t - 1}]"]
                    assert diff <= psi + LINK_TOL
        if realloc.mode == "budget":
            spent = sum(realloc.time_costs.get(t, 0.0) * assignment[f"Psi[{t}]"]
                        for t in range(1, T + 1))
            assert spent <= realloc.budget + LINK_TOL
    if realloc.mode == "transfer_cost":
        for m in range(problem.n_agents):
            for o in problem.resources:
                eps1 = assignment[f"eps[m{m},{o},1]"]
                assert abs(eps1 - assignment[f"Delta[m{m},{o},1]"]) <= LINK_TOL
                for t in range(2, T + 1):
                    diff = assignment[f"Delta[m{m},{o},{t}]"] - \
                        assignment[f"Delta[m{m},{o},{t - 1}]"]
                    eps = assignment[f"eps[m{m},{o},{t}]"]
                    assert eps >= max(0.0, diff) - LINK_TOL
