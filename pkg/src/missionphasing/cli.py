"""Command-line interface: solve problem files, generate instances, bench.

Formulation names map onto the solver stack: eq1 unconstrained LP, eq4
one-shot constrained, eq5/eq6/eq7 phased MILPs (budgeted / cost in
objective / grouped), abstract = fixed-switching policy iteration,
expand = (state, bundle) expansion baseline, brute = binary enumeration
oracle, eq8 one-shot allocation, eq9 fixed schedule, eq10 budgeted
schedule, eq11 event costs, eq12 per-unit transfer costs.

Exit codes: 0 optimal, 1 usage/parse error, 2 infeasible, 3 node/time
limit hit.  RMP_SEED overrides --seed for generate/bench.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import statistics
import sys
import time

from . import files
from .baselines import brute_force, expand_mdp_baseline
from .constrained import compute_x_bound, build_constrained_milp, solve_constrained
from .domains import GridWorldSpec, RetryExhausted, gen_gridworld
from .linprog import LpInfeasible, LpUnbounded, SolverConfig, solve_lp, solve_milp
from .mdp import solve_unconstrained, extract_policy, evaluate_phase_plan
from .mrmp import (BUDGET, EVENT_COST, FIXED_SCHEDULE, ONESHOT, TRANSFER_COST,
                   ReallocSpec, solve_mrmp)
from .srmp import (BUDGETED, COST_IN_OBJECTIVE, GROUPED, PhaseSwitchSpec,
                   build_srmp_milp, solve_fixed_phases_abstract, solve_srmp)

SRMP_FORMULATIONS = ("eq1", "eq4", "eq5", "eq6", "eq7", "abstract", "expand",
                     "brute")
MRMP_FORMULATIONS = ("eq8", "eq9", "eq10", "eq11", "eq12", "brute")


class CliError(Exception):
    def __init__(self, message, code=1):
        super().__init__(message)
        self.code = code


def _policy_doc(mdp, policy):
    return {mdp.state_label(i): {a: p for a, p in sorted(dist.items())}
            for i, dist in sorted(policy.action_dist.items())}


def _occupation_doc(mdp, occ):
    return {f"{mdp.state_label(key[-2])}|{key[-1]}": v
            for key, v in occ.items() if v > 1e-12}


def _plan_doc(mdp, plan):
    return {
        "switching_states": [mdp.state_label(s) for s in plan.switching_states],
        "phase_selection": {mdp.state_label(s): {str(k): p
                                                 for k, p in sorted(sel.items())}
                            for s, sel in sorted(plan.phase_selection.items())},
        "phases": [{
            "anchors": [mdp.state_label(s) for s in ph.anchor_states],
            "bundle": sorted(ph.bundle.held),
            "policy": _policy_doc(mdp, ph.policy),
            "occupancy": {f"{mdp.state_label(i)}|{a}": v
                          for (i, a), v in sorted(ph.occupancy.items())},
        } for ph in plan.phases],
    }


def _solver_doc(sol):
    return {"status": sol.status, "bb_nodes": sol.bb_nodes,
            "lp_solves": sol.lp_solves, "bound": sol.bound}


def _solve_srmp_problem(prob, formulation, config, n_phases=None):
    mdp, alpha, cap, switch = prob.mdp, prob.alpha, prob.capacity, prob.switching
    doc = {"version": 1, "formulation": formulation}
    lines = []
    if formulation == "eq1":
        value, occ = solve_unconstrained(mdp, alpha)
        policy = extract_policy(mdp, occ)
        doc.update(objective=value,
                   breakdown={"reward": value, "cost": 0.0, "utility": value},
                   policy=_policy_doc(mdp, policy),
                   occupation=_occupation_doc(mdp, occ),
                   solver={"status": "optimal"})
        lines.append(f"objective {value:.4f} (unconstrained)")
        return doc, lines, "optimal"
    if formulation == "eq4":
        value, bundle, policy, sol = solve_constrained(mdp, alpha, cap, config)
        doc.update(objective=value,
                   breakdown={"reward": value, "cost": 0.0, "utility": value},
                   bundle=sorted(bundle.held), policy=_policy_doc(mdp, policy),
                   solver=_solver_doc(sol))
        lines.append(f"objective {value:.4f}  bundle {sorted(bundle.held)}")
        return doc, lines, sol.status
    if formulation in ("eq5", "eq6", "eq7"):
        need = {"eq5": BUDGETED, "eq6": COST_IN_OBJECTIVE, "eq7": GROUPED}[formulation]
        if switch is None or switch.mode != need:
            raise CliError(f"{formulation} needs a switching section with mode "
                           f"{need!r} in the problem file")
        plan, sol = solve_srmp(mdp, alpha, cap, switch, config,
                               n_phases=n_phases)
        if plan is None:
            doc.update(objective=None, solver=_solver_doc(sol))
            return doc, [f"limit hit with no incumbent (bound {sol.bound:.4f})"], sol.status
        doc.update(objective=sol.objective,
                   breakdown={"reward": plan.reward,
                              "cost": plan.creation_cost,
                              "utility": plan.reward - plan.creation_cost},
                   plan=_plan_doc(mdp, plan), solver=_solver_doc(sol))
        lines.append(f"objective {sol.objective:.4f}")
        lines.append("switching states: "
                     + ", ".join(mdp.state_label(s)
                                 for s in plan.switching_states))
        for ph in plan.phases:
            lines.append(f"  phase at {[mdp.state_label(s) for s in ph.anchor_states]}"
                         f" holds {sorted(ph.bundle.held)}")
        return doc, lines, sol.status
    if formulation == "abstract":
        if switch is None:
            raise CliError("abstract needs a switching section (its zero-cost "
                           "states are the predetermined switching states)")
        fixed = [i for i in switch.eligible_states()
                 if switch.state_cost(i) == 0.0]
        plan, info = solve_fixed_phases_abstract(mdp, alpha, cap, fixed, config)
        doc.update(objective=plan.objective,
                   breakdown={"reward": plan.objective, "cost": 0.0,
                              "utility": plan.objective},
                   values={mdp.state_label(s): v
                           for s, v in sorted(info["values"].items())},
                   plan=_plan_doc(mdp, plan), solver={"status": "optimal"})
        lines.append(f"objective {plan.objective:.4f} (abstract, fixed "
                     f"{[mdp.state_label(s) for s in fixed]})")
        return doc, lines, "optimal"
    if formulation == "expand":
        if switch is None or switch.mode != BUDGETED:
            raise CliError("expand needs a budgeted switching section")
        value, plan, wall, sol = expand_mdp_baseline(mdp, alpha, cap, switch,
                                                     config)
        doc.update(objective=value,
                   breakdown={"reward": value, "cost": 0.0, "utility": value},
                   plan=_plan_doc(mdp, plan), solver=_solver_doc(sol))
        lines.append(f"objective {value:.4f} (expansion baseline)")
        return doc, lines, sol.status
    if formulation == "brute":
        X = compute_x_bound(mdp, alpha)
        if switch is not None and switch.mode == BUDGETED:
            model = build_srmp_milp(mdp, alpha, cap, switch, X)
        else:
            model = build_constrained_milp(mdp, alpha, cap, X)
        res = brute_force(model)
        doc.update(objective=res.objective,
                   enumerated=res.enumerated,
                   best_assignment=res.best_assignment,
                   solver={"status": "optimal"})
        lines.append(f"objective {res.objective:.4f} "
                     f"({res.enumerated} assignments enumerated)")
        return doc, lines, "optimal"
    raise CliError(f"formulation {formulation!r} does not apply to srmp problems")


def _realloc_for(formulation, prob):
    realloc = prob.realloc
    need = {"eq8": ONESHOT, "eq9": FIXED_SCHEDULE, "eq10": BUDGET,
            "eq11": EVENT_COST, "eq12": TRANSFER_COST}[formulation]
    if formulation == "eq8":
        return ReallocSpec.oneshot()
    if realloc is None or realloc.mode != need:
        raise CliError(f"{formulation} needs a realloc section with mode "
                       f"{need!r} in the problem file")
    return realloc


def _solve_mrmp_problem(prob, formulation, config):
    problem = prob.problem
    doc = {"version": 1, "formulation": formulation}
    lines = []
    if formulation == "brute":
        from .mrmp import build_mrmp_milp
        realloc = prob.realloc or ReallocSpec.oneshot()
        model = build_mrmp_milp(problem, realloc)
        res = brute_force(model)
        doc.update(objective=res.objective, enumerated=res.enumerated,
                   best_assignment=res.best_assignment,
                   solver={"status": "optimal"})
        lines.append(f"objective {res.objective:.4f} "
                     f"({res.enumerated} assignments enumerated)")
        return doc, lines, "optimal"
    realloc = _realloc_for(formulation, prob)
    schedule, sol = solve_mrmp(problem, realloc, config)
    if schedule is None:
        doc.update(objective=None, solver=_solver_doc(sol))
        return doc, [f"limit hit with no incumbent (bound {sol.bound:.4f})"], sol.status
    doc.update(
        objective=sol.objective,
        breakdown={"reward": schedule.reward, "cost": schedule.cost,
                   "utility": schedule.utility},
        realloc_times=list(schedule.realloc_times),
        unit_transfers=schedule.unit_transfers(),
        assignment={f"{problem.agents[m][0]}|{o}|t{t}": v
                    for (m, o, t), v in sorted(schedule.assignment.items())
                    if v},
        policies=[_policy_doc(problem.agents[m][1], pol)
                  for m, pol in enumerate(schedule.policies)],
        solver=_solver_doc(sol))
    lines.append(f"objective {sol.objective:.4f}  reward {schedule.reward:.4f}"
                 f"  cost {schedule.cost:.4f}")
    lines.append(f"reallocation times: {list(schedule.realloc_times)}")
    for m, (name, mdp, _, _) in enumerate(problem.agents):
        held = {t: sorted(schedule.holdings(m, t))
                for t in range(1, problem.horizon + 1)}
        changes = {t: h for t, h in held.items()
                   if t == 1 or h != held[t - 1]}
        lines.append(f"  {name}: " + "  ".join(f"t{t}:{h}" for t, h in
                                               changes.items()))
    return doc, lines, sol.status


def cmd_solve(args) -> int:
    try:
        prob = files.load_problem(args.problem)
    except files.ProblemFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    config = SolverConfig(node_limit=args.node_limit,
                          time_limit=args.time_limit,
                          optimality_gap=args.gap)
    formulation = args.formulation
    ok = SRMP_FORMULATIONS if prob.kind == "srmp" else MRMP_FORMULATIONS
    if formulation not in ok:
        print(f"error: formulation {formulation!r} is not valid for "
              f"{prob.kind} problems (choose from {', '.join(ok)})",
              file=sys.stderr)
        return 1
    if args.dump_model:
        _dump_model(prob, formulation, args.dump_model)
        print(f"model written to {args.dump_model}")
    t0 = time.perf_counter()
    try:
        if prob.kind == "srmp":
            doc, lines, status = _solve_srmp_problem(prob, formulation, config,
                                                     n_phases=args.phases)
        else:
            doc, lines, status = _solve_mrmp_problem(prob, formulation, config)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except LpInfeasible:
        print("infeasible", file=sys.stderr)
        return 2
    except LpUnbounded:
        print("unbounded (check transience of the inputs)", file=sys.stderr)
        return 2
    doc["problem"] = os.path.basename(args.problem)
    doc["runtime"] = {"wall_time": time.perf_counter() - t0}
    out = args.out or (os.path.splitext(args.problem)[0] + ".solution.json")
    files.dump_solution(doc, out)
    for line in lines:
        print(line)
    print(f"solution written to {out}")
    if status == "gap_limit":
        return 3
    return 0


def _dump_model(prob, formulation, path):
    if prob.kind == "srmp":
        mdp, alpha, cap = prob.mdp, prob.alpha, prob.capacity
        X = compute_x_bound(mdp, alpha)
        if formulation in ("eq5", "eq6", "eq7") and prob.switching is not None:
            model = build_srmp_milp(mdp, alpha, cap, prob.switching, X)
        elif formulation == "eq1":
            from .mdp import build_flow_lp
            model = build_flow_lp(mdp, alpha)
        else:
            model = build_constrained_milp(mdp, alpha, cap, X)
    else:
        from .mrmp import build_mrmp_milp
        realloc = (ReallocSpec.oneshot() if formulation == "eq8"
                   else prob.realloc or ReallocSpec.oneshot())
        model = build_mrmp_milp(prob.problem, realloc)
    model.write_lp(path)


def cmd_generate(args) -> int:
    seed = int(os.environ.get("RMP_SEED", args.seed))
    variant = "multi" if args.agents else "single"
    spec = GridWorldSpec(n=args.grid, n_resource_types=args.resources,
                         capacity_limit=args.capacity, seed=seed,
                         variant=variant, n_agents=args.agents or 2,
                         horizon=args.horizon)
    try:
        generated = gen_gridworld(spec)
    except RetryExhausted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if variant == "single":
        mdp, alpha, cap = generated
        switching = None
        if args.switch_budget is not None:
            start = alpha.support()[0]
            costs = {i: (0.0 if i == start else 1.0)
                     for i in range(mdp.n_states)}
            switching = PhaseSwitchSpec.budgeted(mdp.n_states, costs,
                                                 args.switch_budget)
        prob = files.SrmpProblem(mdp, alpha, cap, switching,
                                 comment=f"grid {args.grid}x{args.grid} seed {seed}")
    else:
        realloc = None
        if args.realloc_budget is not None:
            costs = {t: (0.0 if t == 1 else 1.0)
                     for t in range(1, args.horizon + 1)}
            realloc = ReallocSpec.budget(costs, args.realloc_budget)
        prob = files.MrmpProblem(generated, realloc,
                                 comment=f"multi grid {args.grid}x{args.grid} "
                                         f"seed {seed}")
    files.dump_problem(prob, args.out)
    print(f"problem written to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# benchmark suites
# ---------------------------------------------------------------------------

CSV_HEADER = ["suite", "param", "trial", "seed", "formulation", "status",
              "objective", "wall_time_s", "bb_nodes"]


def _bench_solve(fn):
    t0 = time.perf_counter()
    try:
        obj, status, nodes = fn()
    except (LpInfeasible, LpUnbounded):
        return {"status": "infeasible", "objective": "",
                "wall_time_s": time.perf_counter() - t0, "bb_nodes": 0}
    return {"status": status, "objective": obj,
            "wall_time_s": time.perf_counter() - t0, "bb_nodes": nodes}


def _grid_instance(n, resources, capacity, seed):
    spec = GridWorldSpec(n=n, n_resource_types=resources,
                         capacity_limit=capacity, seed=seed)
    return gen_gridworld(spec)


def _switch_spec(mdp, alpha, budget):
    start = alpha.support()[0]
    costs = {i: (0.0 if i == start else 1.0) for i in range(mdp.n_states)}
    return PhaseSwitchSpec.budgeted(mdp.n_states, costs, float(budget))


def run_bench(args) -> list:
    seed0 = int(os.environ.get("RMP_SEED", args.seed))
    config = SolverConfig(time_limit=args.time_limit)
    rows = []

    def record(param, trial, seed, formulation, result):
        rows.append({"suite": args.suite, "param": param, "trial": trial,
                     "seed": seed, "formulation": formulation, **result})

    if args.suite == "phases":
        budgets = list(range(args.max_budget + 1))
        for trial in range(args.trials):
            seed = seed0 + trial
            mdp, alpha, cap = _grid_instance(args.grid, args.resources,
                                             args.capacity, seed)
            result = _bench_solve(lambda: _run_eq4(mdp, alpha, cap, config))
            record(0, trial, seed, "eq4", result)
            for budget in budgets:
                sw = _switch_spec(mdp, alpha, budget)
                result = _bench_solve(
                    lambda: _run_eq5(mdp, alpha, cap, sw, config))
                record(budget, trial, seed, "eq5", result)
    elif args.suite in ("resources", "gridsize"):
        if args.suite == "resources":
            sweep = [(args.grid, k) for k in range(1, args.resources + 1)]
        else:
            sweep = [(n, args.resources) for n in range(3, args.grid + 1)]
        for trial in range(args.trials):
            seed = seed0 + trial
            for param, (n, k) in enumerate(sweep):
                mdp, alpha, cap = _grid_instance(n, k, args.capacity, seed)
                sw = _switch_spec(mdp, alpha, args.max_budget)
                record((n, k), trial, seed, "eq5", _bench_solve(
                    lambda: _run_eq5(mdp, alpha, cap, sw, config)))
                record((n, k), trial, seed, "expand", _bench_solve(
                    lambda: _run_expand(mdp, alpha, cap, sw, config)))
    elif args.suite in ("horizon", "agents"):
        if args.suite == "horizon":
            sweep = [("T", t, args.agents or 2) for t in range(4, args.horizon + 1)]
        else:
            sweep = [("m", args.horizon, m) for m in range(2, (args.agents or 4) + 1)]
        for trial in range(args.trials):
            seed = seed0 + trial
            for tag, T, m in sweep:
                spec = GridWorldSpec(n=args.grid, n_resource_types=args.resources,
                                     capacity_limit=args.capacity, seed=seed,
                                     variant="multi", n_agents=m, horizon=T)
                problem = gen_gridworld(spec)
                costs = {t: (0.0 if t == 1 else 1.0) for t in range(1, T + 1)}
                realloc = ReallocSpec.budget(costs, float(args.max_budget))
                param = T if tag == "T" else m
                record(param, trial, seed, "eq10", _bench_solve(
                    lambda: _run_mrmp(problem, realloc, config)))
                record(param, trial, seed, "eq8", _bench_solve(
                    lambda: _run_mrmp(problem, ReallocSpec.oneshot(), config)))
    else:
        raise CliError(f"unknown suite {args.suite!r}")
    return rows


def _run_eq4(mdp, alpha, cap, config):
    value, bundle, policy, sol = solve_constrained(mdp, alpha, cap, config)
    return value, sol.status, sol.bb_nodes


def _run_eq5(mdp, alpha, cap, sw, config):
    plan, sol = solve_srmp(mdp, alpha, cap, sw, config)
    return sol.objective, sol.status, sol.bb_nodes


def _run_expand(mdp, alpha, cap, sw, config):
    value, plan, wall, sol = expand_mdp_baseline(mdp, alpha, cap, sw, config)
    return value, sol.status, sol.bb_nodes


def _run_mrmp(problem, realloc, config):
    schedule, sol = solve_mrmp(problem, realloc, config)
    return sol.objective, sol.status, sol.bb_nodes


def cmd_bench(args) -> int:
    rows = run_bench(args)
    groups = {}
    for row in rows:
        groups.setdefault((row["param"], row["formulation"]), []).append(row)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_HEADER)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
        for (param, formulation), grp in sorted(groups.items(),
                                                key=lambda kv: (str(kv[0]))):
            objs = [r["objective"] for r in grp if r["objective"] != ""]
            walls = [r["wall_time_s"] for r in grp]
            writer.writerow({
                "suite": args.suite, "param": param, "trial": "mean",
                "seed": "", "formulation": formulation,
                "status": "", "objective": statistics.mean(objs) if objs else "",
                "wall_time_s": statistics.mean(walls),
                "bb_nodes": statistics.mean(r["bb_nodes"] for r in grp)})
            writer.writerow({
                "suite": args.suite, "param": param, "trial": "std",
                "seed": "", "formulation": formulation,
                "status": "",
                "objective": statistics.pstdev(objs) if len(objs) > 1 else 0.0,
                "wall_time_s": statistics.pstdev(walls) if len(walls) > 1 else 0.0,
                "bb_nodes": 0})
    print(f"{len(rows)} result rows written to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mphase",
        description="resource-driven mission phasing toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a problem file")
    p.add_argument("problem")
    p.add_argument("--formulation", required=True,
                   choices=sorted(set(SRMP_FORMULATIONS + MRMP_FORMULATIONS)))
    p.add_argument("--out", help="solution file path (default: alongside input)")
    p.add_argument("--dump-model", help="write the compiled model in LP format")
    p.add_argument("--time-limit", type=float, default=600.0)
    p.add_argument("--node-limit", type=int, default=50_000_000)
    p.add_argument("--gap", type=float, default=0.0)
    p.add_argument("--phases", type=int, default=None,
                   help="override the number of phase indices (default: "
                        "one per eligible switching state)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("generate", help="generate a random grid-world problem")
    p.add_argument("--grid", type=int, required=True)
    p.add_argument("--resources", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--capacity", type=float, default=1.0)
    p.add_argument("--agents", type=int, default=None,
                   help="generate a multiagent problem with this many agents")
    p.add_argument("--horizon", type=int, default=10)
    p.add_argument("--switch-budget", type=float, default=None)
    p.add_argument("--realloc-budget", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("bench", help="run a benchmark suite, emit CSV")
    p.add_argument("--suite", required=True,
                   choices=["phases", "resources", "gridsize", "horizon",
                            "agents"])
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=1000)
    p.add_argument("--grid", type=int, default=5)
    p.add_argument("--resources", type=int, default=2)
    p.add_argument("--capacity", type=float, default=1.0)
    p.add_argument("--max-budget", type=int, default=2)
    p.add_argument("--agents", type=int, default=None)
    p.add_argument("--horizon", type=int, default=8)
    p.add_argument("--time-limit", type=float, default=600.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
