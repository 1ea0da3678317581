"""Problem and solution files (JSON, format version 1).

States are listed once with optional time features; every other section
refers to states and actions by name.  The same format is used for
committed fixtures, generator output and CLI input, and round-trips
losslessly (parse -> emit -> parse gives an identical problem).

Top-level problem layout::

    {"version": 1, "kind": "srmp" | "mrmp", ...}

srmp sections: states, actions, transitions, rewards, alpha, resources,
capacities, requirements, capacity_costs, capacity_limits, optional
switching {mode, state_costs | group_costs+groups, budget}.

mrmp sections: horizon, resources, shared_limits, agents (each with the
srmp MDP sections), realloc {mode, times | time_costs+budget |
transfer_cost}.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .constrained import CapacitySpec
from .mdp import InitialDistribution, Mdp

FORMAT_VERSION = 1


class ProblemFormatError(ValueError):
    """Malformed problem file; message carries a JSON path context."""


@dataclass
class SrmpProblem:
    mdp: Mdp
    alpha: InitialDistribution
    capacity: CapacitySpec
    switching: "object | None"          # srmp.PhaseSwitchSpec, optional
    comment: str = ""

    @property
    def kind(self):
        return "srmp"


@dataclass
class MrmpProblem:
    problem: "object"                   # mrmp.MultiagentProblem
    realloc: "object | None"            # mrmp.ReallocSpec, optional
    comment: str = ""

    @property
    def kind(self):
        return "mrmp"


def _ctx(path, msg):
    return ProblemFormatError(f"{'.'.join(map(str, path))}: {msg}")


def _require(data, key, path, kind=None):
    if key not in data:
        raise _ctx(path, f"missing required key {key!r}")
    val = data[key]
    if kind is not None and not isinstance(val, kind):
        raise _ctx(path + [key], f"expected {kind.__name__}, got {type(val).__name__}")
    return val


def _parse_mdp(data, path):
    states = _require(data, "states", path, list)
    names = []
    times = []
    for k, st in enumerate(states):
        if isinstance(st, str):
            names.append(st)
            times.append(None)
        elif isinstance(st, dict):
            names.append(_require(st, "name", path + ["states", k], str))
            times.append(st.get("time"))
        else:
            raise _ctx(path + ["states", k], "state must be a name or object")
    if len(set(names)) != len(names):
        raise _ctx(path + ["states"], "duplicate state names")
    sid = {nm: k for k, nm in enumerate(names)}
    has_time = any(t is not None for t in times)
    if has_time and any(t is None for t in times):
        raise _ctx(path + ["states"], "either all or no states carry a time feature")

    actions_raw = _require(data, "actions", path, dict)
    actions = []
    for nm in names:
        if nm not in actions_raw:
            raise _ctx(path + ["actions"], f"no action list for state {nm!r}")
        acts = actions_raw[nm]
        if not isinstance(acts, list) or not all(isinstance(a, str) for a in acts):
            raise _ctx(path + ["actions", nm], "must be a list of action names")
        actions.append(tuple(acts))

    def state_of(nm, where):
        if nm not in sid:
            raise _ctx(where, f"unknown state {nm!r}")
        return sid[nm]

    transitions = {}
    for k, row in enumerate(_require(data, "transitions", path, list)):
        where = path + ["transitions", k]
        if not (isinstance(row, list) and len(row) == 4):
            raise _ctx(where, "expected [state, action, state, probability]")
        i, a, j, p = row
        key = (state_of(i, where), a, state_of(j, where))
        if key in transitions:
            raise _ctx(where, f"duplicate transition {row[:3]}")
        transitions[key] = float(p)

    rewards = {}
    for k, row in enumerate(data.get("rewards", [])):
        where = path + ["rewards", k]
        if not (isinstance(row, list) and len(row) == 3):
            raise _ctx(where, "expected [state, action, reward]")
        i, a, r = row
        rewards[(state_of(i, where), a)] = float(r)

    alpha_raw = _require(data, "alpha", path, dict)
    alpha = {state_of(nm, path + ["alpha"]): float(p)
             for nm, p in alpha_raw.items()}
    try:
        mdp = Mdp(n_states=len(names), actions=tuple(actions),
                  transitions=transitions, rewards=rewards,
                  time_feature=tuple(times) if has_time else None,
                  state_names=tuple(names))
        dist = InitialDistribution(alpha)
    except ValueError as exc:
        raise _ctx(path, str(exc)) from exc
    return mdp, dist, sid


def _parse_capacity(data, path, sid, shared=False):
    resources = tuple(_require(data, "resources", path, list))
    capacities = tuple(data.get("capacities", []))
    reqs = set()
    for k, row in enumerate(data.get("requirements", [])):
        where = path + ["requirements", k]
        if not (isinstance(row, list) and len(row) == 3):
            raise _ctx(where, "expected [resource, action, state]")
        o, a, i = row
        if i not in sid:
            raise _ctx(where, f"unknown state {i!r}")
        reqs.add((o, a, sid[i]))
    costs = {}
    for k, row in enumerate(data.get("capacity_costs", [])):
        where = path + ["capacity_costs", k]
        if not (isinstance(row, list) and len(row) == 3):
            raise _ctx(where, "expected [resource, capacity, cost]")
        o, c, tau = row
        costs[(o, c)] = float(tau)
    limits = {c: float(v) for c, v in data.get("capacity_limits", {}).items()}
    shared_limits = None
    if shared and "shared_limits" in data:
        shared_limits = {o: int(v) for o, v in data["shared_limits"].items()}
    try:
        return CapacitySpec(resources=resources, capacities=capacities,
                            requirements=frozenset(reqs), capacity_costs=costs,
                            capacity_limits=limits, shared_limits=shared_limits)
    except ValueError as exc:
        raise _ctx(path, str(exc)) from exc


def _parse_switching(data, path, sid, n_states):
    from .srmp import BUDGETED, COST_IN_OBJECTIVE, GROUPED, PhaseSwitchSpec
    mode_raw = _require(data, "mode", path, str)
    modes = {"budgeted": BUDGETED, "cost_in_objective": COST_IN_OBJECTIVE,
             "grouped": GROUPED}
    if mode_raw not in modes:
        raise _ctx(path + ["mode"], f"unknown mode {mode_raw!r}")
    mode = modes[mode_raw]
    budget = data.get("budget")
    kwargs = {}
    if mode == GROUPED:
        groups_raw = _require(data, "groups", path, list)
        groups = []
        for k, grp in enumerate(groups_raw):
            groups.append(frozenset(sid[nm] for nm in grp))
        kwargs["groups"] = tuple(groups)
        kwargs["group_costs"] = tuple(
            float(v) for v in _require(data, "group_costs", path, list))
    else:
        costs_raw = _require(data, "state_costs", path, dict)
        kwargs["state_costs"] = {sid[nm]: float(v) for nm, v in costs_raw.items()}
    try:
        return PhaseSwitchSpec(mode=mode, budget=None if budget is None
                               else float(budget), n_states=n_states, **kwargs)
    except ValueError as exc:
        raise _ctx(path, str(exc)) from exc


def _parse_realloc(data, path, horizon):
    from .mrmp import ReallocSpec
    mode = _require(data, "mode", path, str)
    try:
        if mode == "oneshot":
            return ReallocSpec.oneshot()
        if mode == "fixed_schedule":
            times = _require(data, "times", path, list)
            return ReallocSpec.fixed_schedule(tuple(int(t) for t in times))
        if mode in ("budget", "event_cost"):
            raw = _require(data, "time_costs", path, dict)
            costs = {int(t): float(v) for t, v in raw.items()}
            if mode == "budget":
                return ReallocSpec.budget(costs, float(_require(data, "budget", path)))
            return ReallocSpec.event_cost(costs)
        if mode == "transfer_cost":
            raw = _require(data, "transfer_cost", path)
            if isinstance(raw, dict):
                cost = {(o, int(m), int(t)): float(v)
                        for o, per_o in raw.items()
                        for m, per_m in per_o.items()
                        for t, v in per_m.items()}
            else:
                cost = float(raw)
            return ReallocSpec.transfer_cost(cost)
    except ValueError as exc:
        raise _ctx(path, str(exc)) from exc
    raise _ctx(path + ["mode"], f"unknown mode {mode!r}")


def parse_problem(doc):
    """Parse a problem document (dict) into SrmpProblem or MrmpProblem."""
    if not isinstance(doc, dict):
        raise ProblemFormatError("problem document must be a JSON object")
    version = _require(doc, "version", [])
    if version != FORMAT_VERSION:
        raise ProblemFormatError(f"unsupported format version {version!r}")
    kind = _require(doc, "kind", [], str)
    comment = doc.get("comment", "")
    if kind == "srmp":
        mdp, alpha, sid = _parse_mdp(doc, [])
        capacity = _parse_capacity(doc, [], sid)
        switching = None
        if "switching" in doc:
            switching = _parse_switching(doc["switching"], ["switching"], sid,
                                         mdp.n_states)
        return SrmpProblem(mdp, alpha, capacity, switching, comment)
    if kind == "mrmp":
        from .mrmp import MultiagentProblem
        horizon = int(_require(doc, "horizon", []))
        resources = tuple(_require(doc, "resources", [], list))
        shared = {o: int(v) for o, v in _require(doc, "shared_limits", [], dict).items()}
        agents = []
        for k, ag in enumerate(_require(doc, "agents", [], list)):
            path = ["agents", k]
            mdp, alpha, sid = _parse_mdp(ag, path)
            cap = _parse_capacity({**ag, "resources": list(resources)}, path, sid)
            agents.append((ag.get("name", f"agent{k + 1}"), mdp, alpha, cap))
        problem = MultiagentProblem(
            agents=tuple(agents), horizon=horizon,
            resources=resources, shared_limits=shared)
        realloc = None
        if "realloc" in doc:
            realloc = _parse_realloc(doc["realloc"], ["realloc"], horizon)
        return MrmpProblem(problem, realloc, comment)
    raise ProblemFormatError(f"unknown problem kind {kind!r}")


def load_problem(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ProblemFormatError(
                f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: "
                f"{exc.msg}") from exc
    return parse_problem(doc)


# ---------------------------------------------------------------------------
# emission
# ---------------------------------------------------------------------------

def _emit_mdp(mdp: Mdp, alpha: InitialDistribution):
    names = [mdp.state_label(i) for i in range(mdp.n_states)]
    if mdp.time_feature is not None:
        states = [{"name": nm, "time": int(t)}
                  for nm, t in zip(names, mdp.time_feature)]
    else:
        states = list(names)
    doc = {
        "states": states,
        "actions": {names[i]: list(mdp.actions[i]) for i in range(mdp.n_states)},
        "transitions": [[names[i], a, names[j], p]
                        for (i, a, j), p in sorted(mdp.transitions.items())],
        "rewards": [[names[i], a, r] for (i, a), r in sorted(mdp.rewards.items())],
        "alpha": {names[j]: p for j, p in sorted(alpha.alpha.items())},
    }
    return doc, names


def _emit_capacity(cap: CapacitySpec, names):
    doc = {
        "resources": list(cap.resources),
        "capacities": list(cap.capacities),
        "requirements": [[o, a, names[i]]
                         for (o, a, i) in sorted(cap.requirements)],
        "capacity_costs": [[o, c, v] for (o, c), v in sorted(cap.capacity_costs.items())],
        "capacity_limits": dict(sorted(cap.capacity_limits.items())),
    }
    if cap.shared_limits is not None:
        doc["shared_limits"] = dict(sorted(cap.shared_limits.items()))
    return doc


def emit_problem(problem) -> dict:
    """Inverse of parse_problem."""
    from .srmp import BUDGETED, COST_IN_OBJECTIVE, GROUPED
    if problem.kind == "srmp":
        doc = {"version": FORMAT_VERSION, "kind": "srmp"}
        if problem.comment:
            doc["comment"] = problem.comment
        mdoc, names = _emit_mdp(problem.mdp, problem.alpha)
        doc.update(mdoc)
        doc.update(_emit_capacity(problem.capacity, names))
        sw = problem.switching
        if sw is not None:
            out = {"mode": {BUDGETED: "budgeted",
                            COST_IN_OBJECTIVE: "cost_in_objective",
                            GROUPED: "grouped"}[sw.mode]}
            if sw.mode == GROUPED:
                out["groups"] = [[names[i] for i in sorted(g)] for g in sw.groups]
                out["group_costs"] = list(sw.group_costs)
            else:
                out["state_costs"] = {names[i]: v
                                      for i, v in sorted(sw.state_costs.items())}
            if sw.budget is not None:
                out["budget"] = sw.budget
            doc["switching"] = out
        return doc
    if problem.kind == "mrmp":
        mp = problem.problem
        doc = {"version": FORMAT_VERSION, "kind": "mrmp"}
        if problem.comment:
            doc["comment"] = problem.comment
        doc["horizon"] = mp.horizon
        doc["resources"] = list(mp.resources)
        doc["shared_limits"] = dict(sorted(mp.shared_limits.items()))
        doc["agents"] = []
        for name, mdp, alpha, cap in mp.agents:
            adoc, names = _emit_mdp(mdp, alpha)
            cdoc = _emit_capacity(cap, names)
            cdoc.pop("resources", None)
            cdoc.pop("shared_limits", None)
            doc["agents"].append({"name": name, **adoc, **cdoc})
        rs = problem.realloc
        if rs is not None:
            out = {"mode": rs.mode}
            if rs.mode == "fixed_schedule":
                out["times"] = list(rs.times)
            elif rs.mode in ("budget", "event_cost"):
                out["time_costs"] = {str(t): v for t, v in sorted(rs.time_costs.items())}
                if rs.mode == "budget":
                    out["budget"] = rs.budget
            elif rs.mode == "transfer_cost":
                if isinstance(rs.transfer_cost, dict):
                    nested: dict = {}
                    for (o, m, t), v in sorted(rs.transfer_cost.items()):
                        nested.setdefault(o, {}).setdefault(str(m), {})[str(t)] = v
                    out["transfer_cost"] = nested
                else:
                    out["transfer_cost"] = rs.transfer_cost
            doc["realloc"] = out
        return doc
    raise ValueError(f"unknown problem kind {problem.kind!r}")


def dump_problem(problem, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(emit_problem(problem), fh, indent=1, sort_keys=False)
        fh.write("\n")


def dump_solution(doc: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
