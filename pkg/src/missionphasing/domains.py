"""Benchmark domains: committed fixtures and seeded grid-world generators.

The six-state running example is transcribed in data/six_state_example.json
and validated by the golden-value tests.  The two-agent task-window
fixture is constructed here from its task table.  Random grid worlds
(single-agent rover and multiagent per-agent grids) are generated from
an explicit SplitMix64 stream with a documented draw order, so a seed
reproduces the same instance bytes on any platform.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources as _resources

from .constrained import CapacitySpec
from .files import parse_problem
from .mdp import InitialDistribution, Mdp
from .mrmp import MultiagentProblem


class RetryExhausted(Exception):
    """Too many candidate worlds failed the reachability filter."""


# ---------------------------------------------------------------------------
# fixtures
# ---------------------------------------------------------------------------

def load_running_example():
    """The committed six-state fixture: (Mdp, InitialDistribution, CapacitySpec)."""
    data = _resources.files("missionphasing").joinpath(
        "data/six_state_example.json").read_text(encoding="utf-8")
    prob = parse_problem(json.loads(data))
    return prob.mdp, prob.alpha, prob.capacity


# task tables of the two-agent fixture: (reward, release, deadline, resources)
TWO_AGENT_TASKS = (
    ((10.0, 1, 4, ("o1",)), (12.0, 2, 10, ("o2",)), (28.0, 5, 8, ("o1", "o2"))),
    ((26.0, 1, 7, ("o1", "o2")), (6.0, 3, 8, ("o1",)), (12.0, 6, 10, ("o2",))),
)
TWO_AGENT_HORIZON = 10

# probability of finishing a task on its 1st / 2nd / 3rd consecutive work
# step, conditioned on not having finished earlier (unconditional law
# 0.3 / 0.4 / 0.3)
_HAZARD = (0.3, 0.4 / 0.7, 1.0)


def build_task_agent_mdp(tasks, horizon: int, resources):
    """Finite-horizon MDP for one agent of the task-window fixture.

    State: (time, set of accomplished tasks, in-progress pair).  A task
    is worked in consecutive steps; any other action aborts it (it can
    be restarted later).  Work at time t may complete at t + 1, earning
    the reward iff t + 1 is within the deadline; work steps that could
    only complete late are dropped as useless.
    """
    def work_allowed(t, done, tau):
        r, rl, dl, _ = tasks[tau]
        return tau not in done and t >= rl and t + 1 <= dl

    def canonical(t, done, prog):
        # a task whose window can no longer fit a completion is as good
        # as done, and progress on such a task is worthless
        dead = frozenset(tau for tau in range(len(tasks))
                         if t + 1 > tasks[tau][2])
        done = frozenset(done) | dead
        if prog is not None and (prog[0] in done
                                 or not work_allowed(t, done, prog[0])):
            prog = None
        return (t, done, prog)

    start = canonical(1, frozenset(), None)
    states = {start: 0}
    order = [start]
    stack = [start]
    transitions = {}
    rewards = {}
    actions = {}

    def sid(state):
        state = canonical(*state)
        if state not in states:
            states[state] = len(order)
            order.append(state)
            stack.append(state)
        return states[state]

    while stack:
        state = stack.pop()
        t, done, prog = state
        i = states[state]
        acts = ["idle"]
        for tau in range(len(tasks)):
            if work_allowed(t, done, tau):
                acts.append(f"work{tau + 1}")
        actions[i] = tuple(acts)
        if t == horizon:
            continue  # all actions leak out of the system
        nxt = t + 1
        transitions[(i, "idle", sid((nxt, done, None)))] = 1.0
        for tau in range(len(tasks)):
            a = f"work{tau + 1}"
            if a not in acts:
                continue
            step = prog[1] + 1 if prog is not None and prog[0] == tau else 1
            h = _HAZARD[step - 1]
            r = tasks[tau][0]
            rewards[(i, a)] = h * r
            transitions[(i, a, sid((nxt, done | {tau}, None)))] = h
            if h < 1.0:
                transitions[(i, a, sid((nxt, done, (tau, step))))] = 1.0 - h
    n = len(order)
    names = []
    for t, done, prog in order:
        dtag = "".join(str(tau + 1) for tau in sorted(done)) or "-"
        ptag = f"{prog[0] + 1}.{prog[1]}" if prog else "-"
        names.append(f"t{t}|done{dtag}|run{ptag}")
    reqs = set()
    for i, (t, done, prog) in enumerate(order):
        for a in actions[i]:
            if a.startswith("work"):
                tau = int(a[4:]) - 1
                for o in tasks[tau][3]:
                    reqs.add((o, a, i))
    mdp = Mdp(n_states=n,
              actions=tuple(actions[i] for i in range(n)),
              transitions=transitions, rewards=rewards,
              time_feature=tuple(t for t, _, _ in order),
              state_names=tuple(names))
    cap = CapacitySpec(resources=tuple(resources), requirements=frozenset(reqs))
    return mdp, InitialDistribution.point(0), cap


def load_two_agent_example(copies: int = 1) -> MultiagentProblem:
    """Two agents, ten steps, two shared resources (`copies` of each)."""
    resources = ("o1", "o2")
    agents = []
    for idx, tasks in enumerate(TWO_AGENT_TASKS):
        mdp, alpha, cap = build_task_agent_mdp(tasks, TWO_AGENT_HORIZON, resources)
        agents.append((f"agent{idx + 1}", mdp, alpha, cap))
    return MultiagentProblem(agents=tuple(agents), horizon=TWO_AGENT_HORIZON,
                             resources=resources,
                             shared_limits={o: copies for o in resources})


# ---------------------------------------------------------------------------
# seeded RNG
# ---------------------------------------------------------------------------

_MASK = (1 << 64) - 1


class SplitMix64:
    """Tiny portable 64-bit generator (SplitMix64), explicit draw order.

    Used for instance generation so fixtures reproduce bit-for-bit from
    a seed on any platform.  randbelow maps next() into [0, n) by
    modulo; the tiny bias is irrelevant for benchmarks and keeps the
    draw sequence trivially documentable.
    """

    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return (z ^ (z >> 31)) & _MASK

    def randbelow(self, n: int) -> int:
        return self.next_u64() % n

    def choose(self, items, k: int) -> list:
        """First k entries of a partial Fisher-Yates shuffle of items."""
        pool = list(items)
        for t in range(k):
            j = t + self.randbelow(len(pool) - t)
            pool[t], pool[j] = pool[j], pool[t]
        return pool[:k]


# ---------------------------------------------------------------------------
# grid worlds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridWorldSpec:
    """Parameters of a generated rover grid world."""

    n: int
    n_resource_types: int
    capacity_limit: float
    seed: int
    wall_fraction: float = 0.40
    task_fraction: float = 0.10
    variant: str = "single"           # "single" | "multi"
    n_agents: int = 2                 # multi only
    horizon: int = 10                 # multi only

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("grid side must be >= 2")
        if self.n_resource_types < 1:
            raise ValueError("need at least one resource type")
        if self.variant not in ("single", "multi"):
            raise ValueError(f"unknown variant {self.variant!r}")


_DIRS = (("up", -1, 0), ("down", 1, 0), ("left", 0, -1), ("right", 0, 1))


def _draw_grid(rng: SplitMix64, n: int, start, wall_fraction, task_fraction,
               n_resources, max_attempts: int = 1000):
    """One grid layout passing the reachability filter.

    Draw order per attempt: wall cells (partial shuffle of all non-start
    cells in row-major order), then task cells (partial shuffle of
    non-wall cells in row-major order), then one safe-move resource per
    non-wall cell in row-major order, then one task resource per task
    cell in row-major order.
    """
    cells = [(r, c) for r in range(n) for c in range(n)]
    n_walls = int(wall_fraction * n * n)
    n_tasks = int(task_fraction * n * n)
    for _ in range(max_attempts):
        candidates = [cell for cell in cells if cell != start]
        walls = set(rng.choose(candidates, n_walls))
        seen = {start}
        frontier = [start]
        while frontier:
            r, c = frontier.pop()
            for _, dr, dc in _DIRS:
                nb = (r + dr, c + dc)
                if (0 <= nb[0] < n and 0 <= nb[1] < n
                        and nb not in walls and nb not in seen):
                    seen.add(nb)
                    frontier.append(nb)
        if len(seen) <= n * n / 2:
            continue
        nonwall = [cell for cell in cells if cell not in walls]
        task_cells = rng.choose(nonwall, min(n_tasks, len(nonwall)))
        cell_res = {cell: rng.randbelow(n_resources) for cell in nonwall}
        task_res = {cell: rng.randbelow(n_resources) for cell in sorted(task_cells)}
        return walls, sorted(seen), sorted(task_cells), cell_res, task_res
    raise RetryExhausted(
        f"no grid with >{n * n // 2} reachable cells in {max_attempts} draws")


def _move_targets(cell, dirname, n, walls):
    r, c = cell
    for name, dr, dc in _DIRS:
        if name == dirname:
            nb = (r + dr, c + dc)
            if 0 <= nb[0] < n and 0 <= nb[1] < n and nb not in walls:
                return nb
            return cell
    raise KeyError(dirname)


def _single_agent_grid(spec: GridWorldSpec, rng: SplitMix64):
    n = spec.n
    start = (n - 1, 0)  # bottom-left corner, never a wall
    walls, reachable, task_cells, cell_res, task_res = _draw_grid(
        rng, n, start, spec.wall_fraction, spec.task_fraction,
        spec.n_resource_types)
    reachable = [cell for cell in reachable]
    sid = {cell: k for k, cell in enumerate(reachable)}
    tasks_here = {cell for cell in task_cells if cell in sid}
    # closer tasks earn less: sort by Manhattan distance from the start,
    # row-major on ties, and give the i-th task reward i
    ordered = sorted(tasks_here,
                     key=lambda cc: (abs(cc[0] - start[0]) + abs(cc[1] - start[1]),
                                     cc))
    task_reward = {cell: float(i + 1) for i, cell in enumerate(ordered)}
    resources = tuple(f"o{k + 1}" for k in range(spec.n_resource_types))

    actions = []
    transitions = {}
    rewards = {}
    reqs = set()
    for cell in reachable:
        i = sid[cell]
        acts = ["wait"] + [d for d, _, _ in _DIRS] \
            + [f"safe-{d}" for d, _, _ in _DIRS]
        if cell in tasks_here:
            acts.append("do")
        actions.append(tuple(acts))

        def put(a, target, p):
            key = (i, a, sid[target])
            transitions[key] = transitions.get(key, 0.0) + p

        put("wait", cell, 0.95)
        for d, _, _ in _DIRS:
            tgt = _move_targets(cell, d, n, walls)
            put(d, tgt, 0.4)
            for e, _, _ in _DIRS:
                if e != d:
                    put(d, _move_targets(cell, e, n, walls), 0.1)
            put(d, cell, 0.1)
            put(f"safe-{d}", tgt, 0.95)
            reqs.add((resources[cell_res[cell]], f"safe-{d}", i))
        if cell in tasks_here:
            rewards[(i, "do")] = task_reward[cell]
            reqs.add((resources[task_res[cell]], "do", i))

    mdp = Mdp(n_states=len(reachable), actions=tuple(actions),
              transitions=transitions, rewards=rewards,
              state_names=tuple(f"c{r}-{c}" for r, c in reachable))
    cap = CapacitySpec(
        resources=resources, capacities=("hold",),
        requirements=frozenset(reqs),
        capacity_costs={(o, "hold"): 1.0 for o in resources},
        capacity_limits={"hold": float(spec.capacity_limit)})
    return mdp, InitialDistribution.point(sid[start]), cap


def _multi_agent_grid(spec: GridWorldSpec, rng: SplitMix64):
    n, T = spec.n, spec.horizon
    resources = tuple(f"o{k + 1}" for k in range(spec.n_resource_types))
    agents = []
    for agent in range(spec.n_agents):
        start = (n // 2, n // 2)  # center, never a wall
        walls, reachable, task_cells, cell_res, task_res = _draw_grid(
            rng, n, start, spec.wall_fraction, spec.task_fraction,
            spec.n_resource_types)
        sid_cell = {cell: k for k, cell in enumerate(reachable)}
        tasks_here = [cell for cell in task_cells if cell in sid_cell]
        # random task order earns reward 1..K; windows are three steps
        # wide starting uniformly in [1, T-2]
        shuffled = rng.choose(sorted(tasks_here), len(tasks_here))
        task_reward = {cell: float(i + 1) for i, cell in enumerate(shuffled)}
        release = {cell: 1 + rng.randbelow(T - 2) for cell in sorted(tasks_here)}

        states = [(t, cell) for t in range(1, T + 1) for cell in reachable]
        sid = {st: k for k, st in enumerate(states)}
        actions = []
        transitions = {}
        rewards = {}
        reqs = set()
        for (t, cell) in states:
            i = sid[(t, cell)]
            acts = ["wait"] + [d for d, _, _ in _DIRS] \
                + [f"safe-{d}" for d, _, _ in _DIRS]
            if cell in task_reward:
                acts.append("do")
            actions.append(tuple(acts))
            for d, _, _ in _DIRS:
                reqs.add((resources[cell_res[cell]], f"safe-{d}", i))
            if cell in task_reward:
                reqs.add((resources[task_res[cell]], "do", i))
                if release[cell] <= t < release[cell] + 3:
                    rewards[(i, "do")] = task_reward[cell]
            if t == T:
                continue  # horizon reached: leak on every action

            def put(a, target, p):
                key = (i, a, sid[(t + 1, target)])
                transitions[key] = transitions.get(key, 0.0) + p

            put("wait", cell, 0.95)
            for d, _, _ in _DIRS:
                tgt = _move_targets(cell, d, n, walls)
                put(d, tgt, 0.4)
                for e, _, _ in _DIRS:
                    if e != d:
                        put(d, _move_targets(cell, e, n, walls), 0.1)
                put(d, cell, 0.1)
                put(f"safe-{d}", tgt, 0.95)
            if cell in task_reward:
                put("do", cell, 0.95)
        mdp = Mdp(n_states=len(states), actions=tuple(actions),
                  transitions=transitions, rewards=rewards,
                  time_feature=tuple(t for t, _ in states),
                  state_names=tuple(f"t{t}|c{r}-{c}" for t, (r, c) in states))
        cap = CapacitySpec(resources=resources, requirements=frozenset(reqs))
        agents.append((f"agent{agent + 1}", mdp,
                       InitialDistribution.point(sid[(1, start)]), cap))
    return MultiagentProblem(agents=tuple(agents), horizon=T,
                             resources=resources,
                             shared_limits={o: 1 for o in resources})


def gen_gridworld(spec: GridWorldSpec):
    """Generate a grid world; deterministic in (spec, seed).

    Single-agent variant returns (Mdp, InitialDistribution,
    CapacitySpec); multiagent returns a MultiagentProblem with one
    independent grid per agent and a single shared copy per resource.
    """
    rng = SplitMix64(spec.seed)
    if spec.variant == "single":
        return _single_agent_grid(spec, rng)
    return _multi_agent_grid(spec, rng)
