"""Multiagent sequential resource allocation over a finite horizon.

Agents are transition- and reward-independent and couple only through
shared resource copies.  Every agent MDP carries a time feature, and
resources change hands only at reallocation times: one-shot (never),
a fixed schedule, an optimal schedule under a budget of reallocation
events, per-event costs in the objective, or per-unit transfer costs.

A dummy holder (agent index 0 in the allocation rows) absorbs
unassigned copies so the exact-allocation equalities never bind
artificially; it has no MDP and its acquisitions are free.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .constrained import CapacitySpec
from .linprog import (BINARY, MilpModel, MilpSolution, SolverConfig,
                      solve_lp, solve_milp)
from .mdp import (InitialDistribution, Mdp, OccupationMeasure, Policy,
                  add_conservation_rows, add_flow_variables, extract_policy,
                  flow_var)

ONESHOT = "oneshot"
FIXED_SCHEDULE = "fixed_schedule"
BUDGET = "budget"
EVENT_COST = "event_cost"
TRANSFER_COST = "transfer_cost"


@dataclass(frozen=True)
class MultiagentProblem:
    """Per-agent finite-horizon MDPs plus shared resource copies."""

    agents: tuple             # (name, Mdp, InitialDistribution, CapacitySpec)
    horizon: int
    resources: tuple
    shared_limits: dict       # resource -> copies available

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        for o in self.resources:
            if o not in self.shared_limits:
                raise ValueError(f"no shared limit for resource {o!r}")
        for name, mdp, alpha, cap in self.agents:
            if mdp.time_feature is None:
                raise ValueError(f"{name}: agent MDP needs a time feature")
            for i, t in enumerate(mdp.time_feature):
                if not 1 <= t <= self.horizon:
                    raise ValueError(f"{name}: state {i} time {t} outside horizon")
            for (i, a, j), p in mdp.transitions.items():
                if p > 0 and mdp.time_feature[j] != mdp.time_feature[i] + 1:
                    raise ValueError(
                        f"{name}: transition {i}->{j} does not advance time by 1")
            for o, _, _ in cap.requirements:
                if o not in self.resources:
                    raise ValueError(f"{name}: requirement on unknown resource {o!r}")

    @property
    def n_agents(self):
        return len(self.agents)

    def states_at(self, m: int, t: int):
        mdp = self.agents[m][1]
        return [i for i in range(mdp.n_states) if mdp.time_feature[i] == t]


@dataclass(frozen=True)
class ReallocSpec:
    """When and at what price resources may be redistributed."""

    mode: str
    times: tuple = ()                 # fixed schedule
    time_costs: dict = field(default_factory=dict)   # t -> cost
    budget: float | None = None
    transfer_cost: "float | dict" = 0.0  # scalar or (o, m, t) -> cost

    def __post_init__(self):
        if self.mode not in (ONESHOT, FIXED_SCHEDULE, BUDGET, EVENT_COST,
                             TRANSFER_COST):
            raise ValueError(f"unknown reallocation mode {self.mode!r}")
        if self.mode == FIXED_SCHEDULE:
            if not self.times or self.times[0] != 1:
                raise ValueError("schedule must start at time 1")
            if list(self.times) != sorted(set(self.times)):
                raise ValueError("schedule times must be strictly increasing")
        if self.mode in (BUDGET, EVENT_COST):
            if any(c < 0 for c in self.time_costs.values()):
                raise ValueError("reallocation costs must be >= 0")
        if self.mode == BUDGET and (self.budget is None or self.budget < 0):
            raise ValueError("budget mode needs a budget >= 0")

    def unit_cost(self, o, m, t) -> float:
        if isinstance(self.transfer_cost, dict):
            return self.transfer_cost.get((o, m, t), 0.0)
        return float(self.transfer_cost)

    @classmethod
    def oneshot(cls):
        return cls(mode=ONESHOT)

    @classmethod
    def fixed_schedule(cls, times):
        return cls(mode=FIXED_SCHEDULE, times=tuple(times))

    @classmethod
    def budget(cls, time_costs, budget):
        return cls(mode=BUDGET, time_costs=dict(time_costs), budget=float(budget))

    @classmethod
    def event_cost(cls, time_costs):
        return cls(mode=EVENT_COST, time_costs=dict(time_costs))

    @classmethod
    def transfer_cost(cls, cost):
        return cls(mode=TRANSFER_COST,
                   transfer_cost=cost if isinstance(cost, dict) else float(cost))


@dataclass(frozen=True)
class AllocationSchedule:
    """Reallocation times, per-time holdings, policies and value split."""

    realloc_times: tuple
    assignment: dict              # (agent index, resource, time) -> 0/1
    policies: tuple               # Policy per agent
    occupancies: tuple            # OccupationMeasure per agent
    objective: float
    reward: float
    cost: float
    utility: float

    def holdings(self, m: int, t: int):
        return frozenset(o for (mm, o, tt), v in self.assignment.items()
                         if mm == m and tt == t and v)

    def unit_transfers(self) -> int:
        """Acquisitions by real agents, the initial allocation included."""
        count = 0
        for (m, o, t), v in self.assignment.items():
            if not v:
                continue
            if not self.assignment.get((m, o, t - 1), 0):
                count += 1
        return count


def _xvar(m: int, i: int, a: str) -> str:
    return f"m{m}." + flow_var(i, a)


def _dvar(m: int, o: str, t) -> str:
    return f"Delta[m{m},{o},{t}]"


def _dummy(o: str, t) -> str:
    return f"dummy[{o},{t}]"


def _psi(t: int) -> str:
    return f"Psi[{t}]"


def _eps(m: int, o: str, t: int) -> str:
    return f"eps[m{m},{o},{t}]"


def _segments(times, horizon):
    """Half-open phase intervals [t_k, t_{k+1}) covering 1..horizon."""
    marks = list(times) + [horizon + 1]
    return [(marks[k], marks[k + 1]) for k in range(len(times))]


def build_mrmp_milp(problem: MultiagentProblem,
                    realloc: ReallocSpec) -> MilpModel:
    """Compile the multiagent problem + reallocation mode into one MILP.

    One-shot and fixed schedules index holdings by phase and divide the
    linking flow sums by the horizon (per-phase flow can reach T); the
    per-time modes index holdings by time, where slice occupancy is at
    most the initial mass and the linking rows need no scaling.
    """
    T = problem.horizon
    model = MilpModel(f"mrmp-{realloc.mode}")
    for m, (name, mdp, alpha, cap) in enumerate(problem.agents):
        for i, a in mdp.pairs():
            model.add_var(_xvar(m, i, a), lb=0.0)
    for m, (name, mdp, alpha, cap) in enumerate(problem.agents):
        add_conservation_rows(model, mdp, alpha, prefix=f"m{m}.")

    if realloc.mode in (ONESHOT, FIXED_SCHEDULE):
        times = (1,) if realloc.mode == ONESHOT else realloc.times
        segments = _segments(times, T)
        for k, _ in enumerate(segments):
            for m in range(problem.n_agents):
                for o in problem.resources:
                    model.add_var(_dvar(m, o, f"k{k}"), kind=BINARY)
            for o in problem.resources:
                model.add_var(_dummy(o, f"k{k}"), lb=0.0,
                              ub=float(problem.shared_limits[o]))
        for k, (t_lo, t_hi) in enumerate(segments):
            for m, (name, mdp, alpha, cap) in enumerate(problem.agents):
                slice_states = [i for i in range(mdp.n_states)
                                if t_lo <= mdp.time_feature[i] < t_hi]
                in_slice = set(slice_states)
                for o in problem.resources:
                    coeffs = {}
                    for i, a in cap.pairs_needing(o):
                        if i in in_slice:
                            nm = _xvar(m, i, a)
                            coeffs[nm] = coeffs.get(nm, 0.0) + 1.0
                    coeffs[_dvar(m, o, f"k{k}")] = -float(T)
                    model.add_constraint(coeffs, "<=", 0.0,
                                         name=f"link[m{m},{o},k{k}]")
            for o in problem.resources:
                coeffs = {_dvar(m, o, f"k{k}"): 1.0
                          for m in range(problem.n_agents)}
                coeffs[_dummy(o, f"k{k}")] = 1.0
                model.add_constraint(coeffs, "=", float(problem.shared_limits[o]),
                                     name=f"alloc[{o},k{k}]")
    else:
        for t in range(1, T + 1):
            for m in range(problem.n_agents):
                for o in problem.resources:
                    idx = model.add_var(_dvar(m, o, t), kind=BINARY)
                    model.branch_priority[idx] = 0
            for o in problem.resources:
                model.add_var(_dummy(o, t), lb=0.0,
                              ub=float(problem.shared_limits[o]))
        for t in range(1, T + 1):
            for m, (name, mdp, alpha, cap) in enumerate(problem.agents):
                slice_states = set(problem.states_at(m, t))
                for o in problem.resources:
                    coeffs = {}
                    for i, a in cap.pairs_needing(o):
                        if i in slice_states:
                            nm = _xvar(m, i, a)
                            coeffs[nm] = coeffs.get(nm, 0.0) + 1.0
                    coeffs[_dvar(m, o, t)] = -1.0
                    model.add_constraint(coeffs, "<=", 0.0,
                                         name=f"link[m{m},{o},t{t}]")
            for o in problem.resources:
                coeffs = {_dvar(m, o, t): 1.0 for m in range(problem.n_agents)}
                coeffs[_dummy(o, t)] = 1.0
                model.add_constraint(coeffs, "=", float(problem.shared_limits[o]),
                                     name=f"alloc[{o},t{t}]")

    # per-agent capacity rows (supported, inactive unless limits given)
    for m, (name, mdp, alpha, cap) in enumerate(problem.agents):
        for c in cap.capacities:
            if c not in cap.capacity_limits:
                continue
            if realloc.mode in (ONESHOT, FIXED_SCHEDULE):
                tags = [f"k{k}" for k in range(len(_segments(
                    (1,) if realloc.mode == ONESHOT else realloc.times, T)))]
            else:
                tags = list(range(1, T + 1))
            for tag in tags:
                coeffs = {_dvar(m, o, tag): cap.cost(o, c)
                          for o in problem.resources}
                model.add_constraint(coeffs, "<=", cap.limit(c),
                                     name=f"capacity[m{m},{c},{tag}]")

    objective = {}
    for m, (name, mdp, alpha, cap) in enumerate(problem.agents):
        for i, a in mdp.pairs():
            r = mdp.reward(i, a)
            if r != 0.0:
                objective[_xvar(m, i, a)] = r

    if realloc.mode in (BUDGET, EVENT_COST):
        for t in range(1, T + 1):
            idx = model.add_var(_psi(t), kind=BINARY)
            model.branch_priority[idx] = 1
        model.add_constraint({_psi(1): 1.0}, "=", 1.0, name="psi-start")
        for t in range(2, T + 1):
            for m in range(problem.n_agents):
                for o in problem.resources:
                    model.add_constraint(
                        {_dvar(m, o, t): 1.0, _dvar(m, o, t - 1): -1.0,
                         _psi(t): -1.0},
                        "<=", 0.0, name=f"realloc[m{m},{o},t{t}]")
        costs = {t: realloc.time_costs.get(t, 0.0) for t in range(1, T + 1)}
        if realloc.mode == BUDGET:
            model.add_constraint({_psi(t): costs[t] for t in range(1, T + 1)},
                                 "<=", realloc.budget, name="realloc-budget")
        else:
            for t in range(1, T + 1):
                if costs[t] != 0.0:
                    objective[_psi(t)] = objective.get(_psi(t), 0.0) - costs[t]
    elif realloc.mode == TRANSFER_COST:
        for t in range(1, T + 1):
            for m in range(problem.n_agents):
                for o in problem.resources:
                    model.add_var(_eps(m, o, t), lb=0.0)
        for m in range(problem.n_agents):
            for o in problem.resources:
                model.add_constraint(
                    {_eps(m, o, 1): 1.0, _dvar(m, o, 1): -1.0}, "=", 0.0,
                    name=f"transfer-start[m{m},{o}]")
                for t in range(2, T + 1):
                    model.add_constraint(
                        {_dvar(m, o, t): 1.0, _dvar(m, o, t - 1): -1.0,
                         _eps(m, o, t): -1.0},
                        "<=", 0.0, name=f"transfer[m{m},{o},t{t}]")
        for t in range(1, T + 1):
            for m in range(problem.n_agents):
                for o in problem.resources:
                    c = realloc.unit_cost(o, m, t)
                    if c != 0.0:
                        objective[_eps(m, o, t)] = -c
    model.set_objective(objective)
    return model


def _extract_schedule(problem: MultiagentProblem, realloc: ReallocSpec,
                      sol: MilpSolution) -> AllocationSchedule:
    T = problem.horizon
    get = sol.assignment
    assignment = {}
    if realloc.mode in (ONESHOT, FIXED_SCHEDULE):
        times = (1,) if realloc.mode == ONESHOT else realloc.times
        for k, (t_lo, t_hi) in enumerate(_segments(times, T)):
            for m in range(problem.n_agents):
                for o in problem.resources:
                    v = int(round(get[_dvar(m, o, f"k{k}")]))
                    for t in range(t_lo, t_hi):
                        assignment[(m, o, t)] = v
    else:
        for t in range(1, T + 1):
            for m in range(problem.n_agents):
                for o in problem.resources:
                    assignment[(m, o, t)] = int(round(get[_dvar(m, o, t)]))
    realloc_times = [1]
    for t in range(2, T + 1):
        if any(assignment[(m, o, t)] != assignment[(m, o, t - 1)]
               for m in range(problem.n_agents) for o in problem.resources):
            realloc_times.append(t)
    policies = []
    occupancies = []
    reward = 0.0
    for m, (name, mdp, alpha, cap) in enumerate(problem.agents):
        x = OccupationMeasure({(i, a): get[_xvar(m, i, a)]
                               for i, a in mdp.pairs()})
        occupancies.append(x)
        policies.append(extract_policy(mdp, x))
        reward += sum(get[_xvar(m, i, a)] * mdp.reward(i, a)
                      for i, a in mdp.pairs())
    if realloc.mode in (BUDGET,):
        cost = sum(realloc.time_costs.get(t, 0.0)
                   for t in range(1, T + 1)
                   if round(get.get(_psi(t), 0.0)) == 1)
        utility = reward
    elif realloc.mode == EVENT_COST:
        cost = sum(realloc.time_costs.get(t, 0.0)
                   for t in range(1, T + 1)
                   if round(get.get(_psi(t), 0.0)) == 1)
        utility = reward - cost
    elif realloc.mode == TRANSFER_COST:
        cost = sum(realloc.unit_cost(o, m, t) * get[_eps(m, o, t)]
                   for t in range(1, T + 1)
                   for m in range(problem.n_agents)
                   for o in problem.resources)
        utility = reward - cost
    else:
        cost = 0.0
        utility = reward
    return AllocationSchedule(
        realloc_times=tuple(realloc_times), assignment=assignment,
        policies=tuple(policies), occupancies=tuple(occupancies),
        objective=sol.objective, reward=reward, cost=cost, utility=utility)


def solve_mrmp(problem: MultiagentProblem, realloc: ReallocSpec,
               config: SolverConfig | None = None):
    """Returns (AllocationSchedule, MilpSolution); the schedule is None
    when a node/time limit struck before any incumbent was found."""
    model = build_mrmp_milp(problem, realloc)
    sol = solve_milp(model, config)
    if sol.values is None:
        return None, sol
    return _extract_schedule(problem, realloc, sol), sol


def solve_mrmp_oneshot(problem: MultiagentProblem,
                       config: SolverConfig | None = None):
    """Single allocation fixed at time 1 for the whole horizon."""
    return solve_mrmp(problem, ReallocSpec.oneshot(), config)


def score_schedule(problem: MultiagentProblem, schedule: AllocationSchedule,
                   transfer_cost: float):
    """Re-price a fixed allocation schedule under a per-unit transfer cost.

    Holdings are frozen to the schedule, the policies are re-optimized
    by a plain LP, and the utility is the re-solved reward minus
    transfer_cost per acquired unit (initial allocation included).
    Returns (transfers, utility, reward).
    """
    model = MilpModel("score-schedule")
    objective = {}
    for m, (name, mdp, alpha, cap) in enumerate(problem.agents):
        for i, a in mdp.pairs():
            t = mdp.time_feature[i]
            allowed = all(schedule.assignment.get((m, o, t), 0)
                          for o in cap.needed_resources(a, i))
            model.add_var(_xvar(m, i, a), lb=0.0,
                          ub=float("inf") if allowed else 0.0)
            r = mdp.reward(i, a)
            if r != 0.0 and allowed:
                objective[_xvar(m, i, a)] = r
    for m, (name, mdp, alpha, cap) in enumerate(problem.agents):
        add_conservation_rows(model, mdp, alpha, prefix=f"m{m}.")
    model.set_objective(objective)
    sol = solve_lp(model)
    transfers = schedule.unit_transfers()
    reward = sol.objective
    return transfers, reward - transfer_cost * transfers, reward
