"""Self-contained LP/MILP engine.

LPs are solved with a dense bounded-variable primal simplex (two phases,
Dantzig pricing with a Bland fallback under sustained degeneracy).  MILPs
over binary variables are solved by best-bound branch and bound on top of
the LP relaxation.  Everything is deterministic: identical model and
config always yield the identical solution vector.

The model container is deliberately dumb: variables with bounds, sparse
rows, a linear objective, sense fixed to maximize.  All formulation
builders in this package compile down to it.
"""

from __future__ import annotations

import heapq
import math
import re
import time
from dataclasses import dataclass

import numpy as np

CONTINUOUS = "continuous"
BINARY = "binary"

LESS = "<="
EQUAL = "="
GREATER = ">="

_RELATIONS = (LESS, EQUAL, GREATER)

INF = math.inf


class SolverError(Exception):
    """Numerical breakdown or iteration-limit blowout inside the engine."""


class LpInfeasible(SolverError):
    """The constraint system admits no feasible point."""


class LpUnbounded(SolverError):
    """The objective is unbounded over the feasible region."""


class TooManyBinaries(SolverError):
    """Brute-force enumeration refused (see baselines.brute_force)."""


@dataclass
class SolverConfig:
    """Knobs for solve_milp.  Defaults give exact, deterministic solves."""

    integrality_tol: float = 1e-6
    feasibility_tol: float = 1e-7
    optimality_gap: float = 0.0
    node_limit: int = 50_000_000
    time_limit: float = INF

    def __post_init__(self):
        if self.integrality_tol <= 0 or self.feasibility_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.optimality_gap < 0:
            raise ValueError("optimality_gap must be >= 0")


class MilpModel:
    """Variables + sparse linear rows + maximize objective."""

    def __init__(self, name: str = "model"):
        self.name = name
        self.var_names: list[str] = []
        self.var_kinds: list[str] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self._index: dict[str, int] = {}
        # each row: (idx tuple, coef tuple, relation, rhs, name)
        self.rows: list[tuple[tuple[int, ...], tuple[float, ...], str, float, str]] = []
        self.objective: dict[int, float] = {}
        # branch-and-bound picks fractional binaries from the highest
        # priority class present (structural indicators before flows)
        self.branch_priority: dict[int, int] = {}

    # -- construction -------------------------------------------------

    def add_var(self, name: str, kind: str = CONTINUOUS,
                lb: float = 0.0, ub: float = INF) -> int:
        if name in self._index:
            raise ValueError(f"duplicate variable {name!r}")
        if kind == BINARY:
            lb, ub = 0.0, 1.0
        elif kind != CONTINUOUS:
            raise ValueError(f"unknown variable kind {kind!r}")
        if lb > ub:
            raise ValueError(f"bounds crossed for {name!r}: [{lb}, {ub}]")
        idx = len(self.var_names)
        self.var_names.append(name)
        self.var_kinds.append(kind)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self._index[name] = idx
        return idx

    def var_index(self, name: str) -> int:
        return self._index[name]

    def _resolve(self, key) -> int:
        if isinstance(key, str):
            return self._index[key]
        idx = int(key)
        if not 0 <= idx < len(self.var_names):
            raise IndexError(f"no variable with index {key}")
        return idx

    def add_constraint(self, coeffs, relation: str, rhs: float,
                       name: str = "") -> int:
        if relation not in _RELATIONS:
            raise ValueError(f"relation must be one of {_RELATIONS}")
        items = coeffs.items() if isinstance(coeffs, dict) else coeffs
        acc: dict[int, float] = {}
        for key, coef in items:
            coef = float(coef)
            if coef == 0.0:
                continue
            idx = self._resolve(key)
            acc[idx] = acc.get(idx, 0.0) + coef
        idxs = tuple(sorted(acc))
        row = (idxs, tuple(acc[i] for i in idxs), relation, float(rhs),
               name or f"c{len(self.rows)}")
        self.rows.append(row)
        return len(self.rows) - 1

    def set_objective(self, coeffs) -> None:
        items = coeffs.items() if isinstance(coeffs, dict) else coeffs
        self.objective = {}
        for key, coef in items:
            coef = float(coef)
            if coef == 0.0:
                continue
            idx = self._resolve(key)
            self.objective[idx] = self.objective.get(idx, 0.0) + coef

    def add_objective_term(self, key, coef: float) -> None:
        idx = self._resolve(key)
        self.objective[idx] = self.objective.get(idx, 0.0) + float(coef)

    # -- inspection ---------------------------------------------------

    @property
    def n_vars(self) -> int:
        return len(self.var_names)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    @property
    def n_nonzeros(self) -> int:
        return sum(len(r[0]) for r in self.rows)

    def binary_indices(self) -> list[int]:
        return [i for i, k in enumerate(self.var_kinds) if k == BINARY]

    # -- dense view ---------------------------------------------------

    def dense(self):
        """(A, rel codes, b, c, lb, ub) with empty rows dropped."""
        n = self.n_vars
        keep = [r for r in self.rows if r[0]]
        m = len(keep)
        A = np.zeros((m, n))
        rel = np.zeros(m, dtype=np.int8)  # -1 <=, 0 =, +1 >=
        b = np.zeros(m)
        codes = {LESS: -1, EQUAL: 0, GREATER: 1}
        for i, (idxs, coefs, relation, rhs, _) in enumerate(keep):
            A[i, list(idxs)] = coefs
            rel[i] = codes[relation]
            b[i] = rhs
        c = np.zeros(n)
        for j, coef in self.objective.items():
            c[j] = coef
        return A, rel, b, c, np.array(self.lb), np.array(self.ub)

    # -- LP text export -----------------------------------------------

    def write_lp(self, target) -> None:
        """Write the model in the industry-standard LP text format.

        Layout (documented for cross-checking with external solvers):
        a Maximize section with the objective named obj, a Subject To
        section with one named row per constraint, a Bounds section
        giving every non-default bound (free variables are declared
        free), a Binary section listing binary variables, and End.
        """
        close = False
        if isinstance(target, (str, bytes)):
            fh = open(target, "w", encoding="utf-8")
            close = True
        else:
            fh = target
        try:
            names = [_lp_safe(n) for n in self.var_names]
            seen: dict[str, int] = {}
            for i, n in enumerate(names):
                if n in seen:
                    names[i] = f"{n}__{i}"
                seen[names[i]] = i
            fh.write(f"\\ {self.name}\n")
            fh.write("Maximize\n obj:")
            terms = _lp_terms(sorted(self.objective.items()), names)
            fh.write(terms if terms else " 0 " + (names[0] if names else "x"))
            fh.write("\nSubject To\n")
            for idxs, coefs, relation, rhs, rname in self.rows:
                if not idxs:
                    continue
                fh.write(f" {_lp_safe(rname)}:")
                fh.write(_lp_terms(zip(idxs, coefs), names))
                fh.write(f" {relation if relation != EQUAL else '='} {_lp_num(rhs)}\n")
            fh.write("Bounds\n")
            for j, name in enumerate(names):
                lo, hi = self.lb[j], self.ub[j]
                if self.var_kinds[j] == BINARY:
                    continue
                if lo == -INF and hi == INF:
                    fh.write(f" {name} free\n")
                elif lo == -INF:
                    fh.write(f" -inf <= {name} <= {_lp_num(hi)}\n")
                elif hi == INF:
                    if lo != 0.0:
                        fh.write(f" {name} >= {_lp_num(lo)}\n")
                else:
                    fh.write(f" {_lp_num(lo)} <= {name} <= {_lp_num(hi)}\n")
            bins = self.binary_indices()
            if bins:
                fh.write("Binary\n")
                for j in bins:
                    fh.write(f" {names[j]}\n")
            fh.write("End\n")
        finally:
            if close:
                fh.close()


def _lp_safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.]", "_", name) or "v"


def _lp_num(x: float) -> str:
    return repr(float(x))


def _lp_terms(items, names) -> str:
    out = []
    for idx, coef in items:
        sign = "+" if coef >= 0 else "-"
        out.append(f" {sign} {_lp_num(abs(coef))} {names[idx]}")
    return "".join(out)


@dataclass
class MilpSolution:
    status: str                      # optimal | infeasible | unbounded | gap_limit
    objective: float
    assignment: dict[str, float]
    values: np.ndarray | None = None
    bound: float = INF
    bb_nodes: int = 0
    lp_solves: int = 0
    wall_time: float = 0.0

    def __getitem__(self, name: str) -> float:
        return self.assignment[name]


# ---------------------------------------------------------------------------
# bounded-variable primal simplex
# ---------------------------------------------------------------------------

_AT_LOWER = 0
_AT_UPPER = 1
_FREE_ZERO = 2

_FEAS_EPS = 1e-9
_PIVOT_EPS = 1e-9
_COST_EPS = 1e-9
_TIE_EPS = 1e-12


class _Simplex:
    """Dense two-phase primal simplex with general variable bounds.

    Rows are scaled by their max-abs coefficient.  Each row gets one
    slack column whose bounds encode the relation; the slack basis is
    the cold start.  Phase 1 minimizes total bound violation of the
    basic variables with dynamically re-derived costs, so it can start
    from any basis (that is how branch-and-bound warm starts land).
    """

    def __init__(self, A, rel, b, c, lb, ub):
        m, n = A.shape
        if m:
            scale = np.maximum(np.abs(A).max(axis=1), 1e-12)
            A = A / scale[:, None]
            b = b / scale
        self.m, self.n = m, n
        self.N = n + m
        self.T = np.hstack([A, np.eye(m)]) if m else np.zeros((0, n))
        self.b = b.astype(float)
        self.c = np.concatenate([c, np.zeros(m)])
        slack_lb = np.where(rel == 1, -INF, 0.0)
        slack_ub = np.where(rel == -1, INF, 0.0)
        self.lb = np.concatenate([lb, slack_lb])
        self.ub = np.concatenate([ub, slack_ub])
        self.degenerate_streak = 0
        self.bland = False
        self.iterations = 0
        self.max_iter = 200 * (self.m + self.N) + 20_000

    # -- basis handling -----------------------------------------------

    def _default_status(self):
        return np.where(
            np.isfinite(self.lb), _AT_LOWER,
            np.where(np.isfinite(self.ub), _AT_UPPER, _FREE_ZERO)).astype(np.int8)

    def _nonbasic_values(self):
        v = np.where(np.isfinite(self.lb), self.lb,
                     np.where(np.isfinite(self.ub), self.ub, 0.0))
        up = self.status == _AT_UPPER
        v[up] = self.ub[up]
        v[self.in_basis] = 0.0
        return v

    def _cold_start(self):
        self.basic = np.arange(self.n, self.N)
        self.in_basis = np.zeros(self.N, dtype=bool)
        self.in_basis[self.basic] = True
        self.status = self._default_status()
        vals = self._nonbasic_values()
        self.beta = (self.b - self.T[:, :self.n] @ vals[:self.n]
                     if self.m else np.zeros(0))

    def _warm_start(self, basic, at_upper) -> bool:
        basic = np.asarray(basic, dtype=int)
        if basic.shape != (self.m,) or len(np.unique(basic)) != self.m:
            return False
        full = self.T  # cold tableau [A | I]
        B = full[:, basic]
        try:
            Tn = np.linalg.solve(B, full)
            binv_b = np.linalg.solve(B, self.b)
        except np.linalg.LinAlgError:
            return False
        if not (np.all(np.isfinite(Tn)) and np.all(np.isfinite(binv_b))):
            return False
        self.T = Tn
        self.basic = basic.copy()
        self.in_basis = np.zeros(self.N, dtype=bool)
        self.in_basis[basic] = True
        self.status = self._default_status()
        up = np.asarray(at_upper, dtype=bool) & np.isfinite(self.ub) & ~self.in_basis
        self.status[up] = _AT_UPPER
        vals = self._nonbasic_values()
        nb = ~self.in_basis
        self.beta = binv_b - self.T[:, nb] @ vals[nb]
        return True

    # -- pivot machinery ------------------------------------------------

    def _count_degenerate(self, t):
        if t <= 1e-10:
            self.degenerate_streak += 1
            if self.degenerate_streak > 2 * (self.m + self.N):
                self.bland = True
        else:
            self.degenerate_streak = 0
            self.bland = False

    def _ratio_test(self, q, d, mask_lo, mask_hi):
        """First-breakpoint ratio test.

        Returns (t, row, hit): row -1 means the entering variable hits
        its opposite bound (a bound flip); otherwise hit names the bound
        the blocking basic variable lands on.  Infeasible basics
        (phase 1 masks) block at the bound they currently violate.
        """
        t_own = INF
        if np.isfinite(self.lb[q]) and np.isfinite(self.ub[q]):
            t_own = self.ub[q] - self.lb[q]
        if self.m == 0:
            return t_own, -1, "own"
        col = self.T[:, q]
        rate = -d * col  # d(beta_i)/dt
        lo_b = self.lb[self.basic]
        hi_b = self.ub[self.basic]
        target = np.full(self.m, INF)
        normal = ~(mask_lo | mask_hi)
        up = normal & (rate > _PIVOT_EPS)
        dn = normal & (rate < -_PIVOT_EPS)
        target[up] = hi_b[up] - self.beta[up]
        target[dn] = self.beta[dn] - lo_b[dn]
        rl = mask_lo & (rate > _PIVOT_EPS)
        rh = mask_hi & (rate < -_PIVOT_EPS)
        target[rl] = lo_b[rl] - self.beta[rl]
        target[rh] = self.beta[rh] - hi_b[rh]
        finite = np.isfinite(target)
        if not finite.any():
            return t_own, -1, "own"
        t_rows = np.full(self.m, INF)
        t_rows[finite] = np.maximum(target[finite], 0.0) / np.abs(rate[finite])
        t_min = t_rows.min()
        if t_own <= t_min + _TIE_EPS:
            return t_own, -1, "own"
        cand = np.where(t_rows <= t_min + _TIE_EPS)[0]
        piv = np.abs(col[cand])
        cand = cand[piv >= piv.max() - _TIE_EPS]
        row = int(cand[np.argmin(self.basic[cand])])
        if mask_lo[row]:
            hit = "lo"
        elif mask_hi[row]:
            hit = "hi"
        else:
            hit = "hi" if rate[row] > 0 else "lo"
        return t_rows[row], row, hit

    def _apply_step(self, q, d, t, row, hit):
        col = self.T[:, q] if self.m else np.zeros(0)
        enter_val = self._var_value(q) + d * t
        if self.m:
            self.beta -= d * t * col
        if row < 0:
            self.status[q] = _AT_UPPER if d > 0 else _AT_LOWER
            return
        leave = self.basic[row]
        if np.isfinite(self.lb[leave]) or np.isfinite(self.ub[leave]):
            self.status[leave] = _AT_LOWER if hit == "lo" else _AT_UPPER
        else:
            self.status[leave] = _FREE_ZERO
        self.in_basis[leave] = False
        self.in_basis[q] = True
        self.basic[row] = q
        piv = self.T[row, q]
        self.T[row] /= piv
        colv = self.T[:, q].copy()
        colv[row] = 0.0
        self.T -= np.outer(colv, self.T[row])
        self.T[:, q] = 0.0
        self.T[row, q] = 1.0
        self.beta[row] = enter_val

    def _var_value(self, j):
        if self.in_basis[j]:
            row = int(np.where(self.basic == j)[0][0])
            return self.beta[row]
        if self.status[j] == _AT_UPPER:
            return self.ub[j]
        if self.status[j] == _FREE_ZERO:
            return 0.0
        return self.lb[j] if np.isfinite(self.lb[j]) else 0.0

    def _pick_entering(self, grad):
        """Pick a nonbasic column whose allowed move decreases grad'x.

        Dantzig rule (largest usable |grad|), lowest index on ties;
        Bland's rule (lowest eligible index) under the degeneracy
        counter.  Returns (column, direction) or (-1, 0).
        """
        nb = ~self.in_basis
        can_inc = nb & (self.status != _AT_UPPER)
        can_dec = nb & (self.status != _AT_LOWER)
        inc_ok = can_inc & (grad < -_COST_EPS)
        dec_ok = can_dec & (grad > _COST_EPS)
        elig = inc_ok | dec_ok
        if not elig.any():
            return -1, 0
        idxs = np.where(elig)[0]
        if self.bland:
            j = int(idxs[0])
        else:
            j = int(idxs[np.argmax(np.abs(grad[idxs]))])
        return j, (1 if inc_ok[j] else -1)

    # -- phases ----------------------------------------------------------

    def _infeasibility(self):
        if self.m == 0:
            z = np.zeros(0, dtype=bool)
            return z, z, 0.0
        lo_b = self.lb[self.basic]
        hi_b = self.ub[self.basic]
        below = self.beta < lo_b - _FEAS_EPS
        above = self.beta > hi_b + _FEAS_EPS
        total = float(np.sum(np.where(below, lo_b - self.beta, 0.0)) +
                      np.sum(np.where(above, self.beta - hi_b, 0.0)))
        return below, above, total

    def _phase1_step(self, q, d, below, above):
        """Long-step phase-1 ratio test: minimize the piecewise-linear
        infeasibility along the entering ray, passing breakpoints while
        the slope stays negative.  Returns (t, row, hit)."""
        t_own = INF
        if np.isfinite(self.lb[q]) and np.isfinite(self.ub[q]):
            t_own = self.ub[q] - self.lb[q]
        col = self.T[:, q]
        rate = -d * col
        lo_b = self.lb[self.basic]
        hi_b = self.ub[self.basic]
        slope = float(np.sum(-rate[below]) + np.sum(rate[above]))
        events = []  # (t, slope increment, row, bound hit)
        for i in np.where(np.abs(rate) > _PIVOT_EPS)[0]:
            r = rate[i]
            beta = self.beta[i]
            lo, hi = lo_b[i], hi_b[i]
            if r > 0:
                if below[i] and np.isfinite(lo):
                    events.append(((lo - beta) / r, r, i, "lo"))
                    if np.isfinite(hi):
                        events.append(((hi - beta) / r, r, i, "hi"))
                elif not above[i] and np.isfinite(hi):
                    events.append((max(hi - beta, 0.0) / r, r, i, "hi"))
            else:
                if above[i] and np.isfinite(hi):
                    events.append(((beta - hi) / (-r), -r, i, "hi"))
                    if np.isfinite(lo):
                        events.append(((beta - lo) / (-r), -r, i, "lo"))
                elif not below[i] and np.isfinite(lo):
                    events.append((max(beta - lo, 0.0) / (-r), -r, i, "lo"))
        events.sort(key=lambda ev: (ev[0], -abs(col[ev[2]]), self.basic[ev[2]]))
        for t_k, dslope, row, hit in events:
            if t_k > t_own:
                break
            slope += dslope
            if slope >= -_COST_EPS:
                return t_k, int(row), hit
        if np.isfinite(t_own):
            return t_own, -1, "own"
        raise SolverError("phase 1 found an unbounded improving ray")

    def _phase1(self):
        while True:
            below, above, total = self._infeasibility()
            if total <= _FEAS_EPS * (1.0 + abs(self.b).sum() if self.m else 1.0):
                return
            self.iterations += 1
            if self.iterations > self.max_iter:
                raise SolverError("simplex iteration limit exceeded (phase 1)")
            w = np.zeros(self.m)
            w[below] = 1.0
            w[above] = -1.0
            grad = w @ self.T
            q, d = self._pick_entering(grad)
            if q < 0:
                raise LpInfeasible("no feasible point")
            t, row, hit = self._phase1_step(q, d, below, above)
            self._count_degenerate(t)
            self._apply_step(q, d, t, row, hit)

    def _phase2(self):
        none_mask = np.zeros(self.m, dtype=bool)
        while True:
            self.iterations += 1
            if self.iterations > self.max_iter:
                raise SolverError("simplex iteration limit exceeded (phase 2)")
            z = self.c - (self.c[self.basic] @ self.T if self.m else 0.0)
            q, d = self._pick_entering(-z)  # maximize: move against -c
            if q < 0:
                return
            t, row, hit = self._ratio_test(q, d, none_mask, none_mask)
            if not np.isfinite(t):
                raise LpUnbounded("objective unbounded above")
            self._count_degenerate(t)
            self._apply_step(q, d, t, row, hit)

    def solve(self, basis=None):
        started = False
        if basis is not None:
            started = self._warm_start(*basis)
        if not started:
            self._cold_start()
        self._phase1()
        self._phase2()
        x = self._nonbasic_values()
        x[self.basic] = self.beta
        obj = float(self.c[:self.n] @ x[:self.n])
        snapshot = (self.basic.copy(), (self.status == _AT_UPPER).copy())
        self.reduced_costs = (self.c - (self.c[self.basic] @ self.T
                                        if self.m else 0.0))[:self.n]
        self.reduced_costs[self.in_basis[:self.n]] = 0.0
        return x[:self.n], obj, snapshot


def solve_lp(model: MilpModel, config: SolverConfig | None = None,
             bounds_override=None, basis=None) -> MilpSolution:
    """Solve the LP relaxation (binaries relaxed to [0, 1]).

    Raises LpInfeasible / LpUnbounded.  bounds_override is an optional
    (lb, ub) array pair replacing the model bounds; basis is an optional
    warm-start snapshot from a previous solve of the same row system.
    """
    t0 = time.perf_counter()
    A, rel, b, c, lb, ub = model.dense()
    if bounds_override is not None:
        lb, ub = np.array(bounds_override[0]), np.array(bounds_override[1])
    sx = _Simplex(A, rel, b, c, lb, ub)
    x, obj, snapshot = sx.solve(basis=basis)
    sol = MilpSolution(
        status="optimal", objective=obj,
        assignment=dict(zip(model.var_names, map(float, x))),
        values=x, bound=obj, bb_nodes=0, lp_solves=1,
        wall_time=time.perf_counter() - t0)
    sol._basis = snapshot  # internal warm-start hook
    return sol


def check_assignment(model: MilpModel, values, tol: float) -> list[str]:
    """Names of constraints/bounds violated beyond tol (empty when clean)."""
    bad = []
    v = np.asarray(values, dtype=float)
    for j in range(model.n_vars):
        if v[j] < model.lb[j] - tol or v[j] > model.ub[j] + tol:
            bad.append(f"bound:{model.var_names[j]}")
    for idxs, coefs, relation, rhs, name in model.rows:
        lhs = sum(v[i] * cf for i, cf in zip(idxs, coefs))
        if relation == LESS and lhs > rhs + tol:
            bad.append(name)
        elif relation == GREATER and lhs < rhs - tol:
            bad.append(name)
        elif relation == EQUAL and abs(lhs - rhs) > tol:
            bad.append(name)
    return bad


# ---------------------------------------------------------------------------
# branch and bound
# ---------------------------------------------------------------------------

def _round_binaries(x, binaries):
    out = x.copy()
    for j in binaries:
        out[j] = float(round(out[j]))
    return out


def solve_milp(model: MilpModel, config: SolverConfig | None = None) -> MilpSolution:
    """Exact branch and bound over the model's binary variables.

    Best-bound node selection with FIFO tie-breaks, branching on the
    most fractional binary (lowest index on ties), down-branch pushed
    first.  With optimality_gap 0 the incumbent is provably optimal;
    hitting node/time limits yields status gap_limit carrying the
    incumbent and the best remaining bound.
    """
    config = config or SolverConfig()
    t0 = time.perf_counter()
    binaries = model.binary_indices()
    A, rel, b, c, lb0, ub0 = model.dense()

    counters = {"lp": 0, "nodes": 0}

    def run_lp(lbv, ubv, basis):
        counters["lp"] += 1
        sx = _Simplex(A, rel, b, c, lbv, ubv)
        x, obj, snap = sx.solve(basis=basis)
        return x, obj, snap, sx.reduced_costs

    priority = model.branch_priority

    def most_fractional(x):
        best_prio = None
        worst, pick = config.integrality_tol, -1
        for j in binaries:
            dist = 0.5 - abs(x[j] - math.floor(x[j]) - 0.5)
            if dist <= config.integrality_tol:
                continue
            prio = priority.get(j, 0)
            if best_prio is None or prio > best_prio:
                best_prio, worst, pick = prio, dist, j
            elif prio == best_prio and dist > worst + 1e-15:
                worst, pick = dist, j
        return pick

    def finish(status, best, bound):
        wall = time.perf_counter() - t0
        if best is None:
            return MilpSolution(status=status, objective=-INF, assignment={},
                                values=None, bound=bound,
                                bb_nodes=counters["nodes"],
                                lp_solves=counters["lp"], wall_time=wall)
        x, obj = best
        x = x.copy()
        for j in binaries:
            x[j] = float(round(x[j]))
        bad = check_assignment(model, x, config.feasibility_tol)
        if bad:
            raise SolverError(f"incumbent fails feasibility re-check: {bad[:5]}")
        return MilpSolution(
            status=status, objective=obj,
            assignment=dict(zip(model.var_names, map(float, x))),
            values=x, bound=bound, bb_nodes=counters["nodes"],
            lp_solves=counters["lp"], wall_time=wall)

    x, obj, snap, rc = run_lp(lb0.copy(), ub0.copy(), None)
    counters["nodes"] += 1
    pick = most_fractional(x)
    if pick < 0:
        return finish("optimal", (x, obj), obj)

    def tol_for(v):
        return max(1e-9, 1e-9 * abs(v))

    incumbent = None
    inc_obj = -INF

    def rounding_dive(x0, snap0):
        """Deterministic dive: repeatedly fix the most fractional binary
        to its nearest value; returns an integral incumbent or None."""
        fixings: dict[int, float] = {}
        xd, snapd = x0, snap0
        for _ in range(len(binaries) + 1):
            j = most_fractional(xd)
            if j < 0:
                return (xd, float(c @ xd)), fixings
            fixings[j] = float(round(xd[j]))
            lbv, ubv = lb0.copy(), ub0.copy()
            for jj, v in fixings.items():
                lbv[jj] = ubv[jj] = v
            counters["nodes"] += 1
            try:
                xd, _, snapd, _ = run_lp(lbv, ubv, snapd)
            except LpInfeasible:
                return None, fixings
        return None, fixings

    dived, _ = rounding_dive(x, snap)
    if dived is not None:
        bad = check_assignment(model, _round_binaries(dived[0], binaries),
                               config.feasibility_tol)
        if not bad:
            incumbent, inc_obj = dived, dived[1]

    def fixable_by_reduced_cost(xv, objv, rcv, fixings):
        """Binaries whose opposite value provably cannot beat the
        incumbent under this node's relaxation bound."""
        if incumbent is None:
            return {}
        slack = objv - (inc_obj + tol_for(inc_obj))
        out = {}
        for j in binaries:
            if j in fixings:
                continue
            d = rcv[j]
            if xv[j] < 0.5 and d < 0 and -d >= slack:
                out[j] = 0.0
            elif xv[j] > 0.5 and d > 0 and d >= slack:
                out[j] = 1.0
        return out

    heap: list = [(-obj, 0, {}, snap, pick)]
    fifo = 0
    limit_hit = False
    final_bound = obj

    while heap:
        neg_bound, _, fixings, parent_basis, branch_var = heapq.heappop(heap)
        bound = -neg_bound
        final_bound = bound
        if incumbent is not None and bound <= inc_obj + max(
                config.optimality_gap * max(1.0, abs(inc_obj)), tol_for(inc_obj)):
            final_bound = inc_obj
            break
        if (counters["nodes"] >= config.node_limit
                or (time.perf_counter() - t0) > config.time_limit):
            limit_hit = True
            break
        for val in (0, 1):
            child = dict(fixings)
            child[branch_var] = float(val)
            lbv, ubv = lb0.copy(), ub0.copy()
            for j, v in child.items():
                lbv[j] = ubv[j] = float(v)
            counters["nodes"] += 1
            try:
                cx, cobj, csnap, crc = run_lp(lbv, ubv, parent_basis)
            except LpInfeasible:
                continue
            if incumbent is not None and cobj <= inc_obj + tol_for(inc_obj):
                continue
            cpick = most_fractional(cx)
            if cpick < 0:
                incumbent, inc_obj = (cx, cobj), cobj
                continue
            child.update(fixable_by_reduced_cost(cx, cobj, crc, child))
            fifo += 1
            heapq.heappush(heap, (-cobj, fifo, child, csnap, cpick))

    if limit_hit:
        open_bounds = [-h[0] for h in heap] + [final_bound]
        remaining = max(open_bounds + [inc_obj])
        return finish("gap_limit", incumbent, remaining)
    if incumbent is None:
        raise LpInfeasible("no integer-feasible point")
    return finish("optimal", incumbent, max(final_bound, inc_obj))
