"""Generic mixed-integer linear programs and a small exact solver.

A :class:`MILPProblem` is a plain container: variables with bounds and an
optional binary marker, sparse constraint rows, and a sparse minimisation
objective.  ``solve_lp`` runs the bounded-variable primal simplex on the
continuous relaxation; ``solve_milp`` wraps it in a deterministic
best-bound branch-and-bound with most-fractional branching and optional
warm starts.  ``export_mps`` writes fixed-format MPS for external solvers.

All reported solve times are deterministic work estimates ("nominal
seconds"), not wall clock, so that pipeline outputs are byte-reproducible.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .simplex import NumericalInstabilityError, SimplexEngine

LE, EQ, GE = "<=", "=", ">="
_RELATIONS = (LE, EQ, GE)

NODE_WORK = 1e-5  # nominal seconds of branch-and-bound overhead per node


class MILPError(ValueError):
    """Malformed problem or invalid operation on one."""


@dataclass(frozen=True)
class Variable:
    name: str
    lb: float = 0.0
    ub: float = np.inf
    binary: bool = False


@dataclass(frozen=True)
class Constraint:
    coeffs: tuple[tuple[int, float], ...]
    relation: str
    rhs: float
    name: str = ""


@dataclass
class MILPProblem:
    variables: list[Variable]
    constraints: list[Constraint]
    objective: tuple[tuple[int, float], ...]
    objective_constant: float = 0.0
    name: str = "problem"

    @property
    def n_variables(self) -> int:
        return len(self.variables)

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)

    @property
    def binary_indices(self) -> list[int]:
        return [i for i, v in enumerate(self.variables) if v.binary]

    def free_binary_indices(self) -> list[int]:
        """Binary variables whose bounds still allow both values."""
        return [i for i, v in enumerate(self.variables)
                if v.binary and v.ub - v.lb > 0]

    def validate(self) -> None:
        n = self.n_variables
        for i, v in enumerate(self.variables):
            if v.lb > v.ub:
                raise MILPError(f"variable {v.name or i}: lb > ub")
            if v.binary and (v.lb < -1e-9 or v.ub > 1 + 1e-9):
                raise MILPError(
                    f"binary variable {v.name or i}: bounds outside [0, 1]")
        for k, con in enumerate(self.constraints):
            if con.relation not in _RELATIONS:
                raise MILPError(f"constraint {con.name or k}: bad relation")
            for j, _ in con.coeffs:
                if not 0 <= j < n:
                    raise MILPError(
                        f"constraint {con.name or k}: unknown variable {j}")
        for j, _ in self.objective:
            if not 0 <= j < n:
                raise MILPError(f"objective references unknown variable {j}")


@dataclass
class SolveOptions:
    mip_gap: float = 1e-4
    feasibility_tolerance: float = 1e-6
    integrality_tolerance: float = 1e-6
    time_limit: float | None = None  # nominal seconds of solver work
    node_limit: int | None = None
    warm_start: dict[int, int] | None = None
    seed: int = 0  # reserved; the solver is deterministic regardless
    # optional performance hint: a (basis, vstat) snapshot from a related
    # solve (see lp_root_state); affects the search path, never the result
    basis_hint: tuple | None = None

    def validate(self) -> None:
        if self.mip_gap <= 0 or self.feasibility_tolerance <= 0 \
                or self.integrality_tolerance <= 0:
            raise MILPError("tolerances must be positive")


@dataclass
class MILPSolution:
    status: str  # optimal | feasible-gap-met | infeasible | unbounded | limit-reached
    values: np.ndarray | None
    objective: float | None
    bound: float | None
    gap: float | None
    nodes_explored: int
    solve_time: float
    incumbent_history: list[float] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.status in ("optimal", "feasible-gap-met")


def _relative_gap(objective: float, bound: float) -> float:
    return abs(objective - bound) / max(abs(objective), 1e-10)


# ----------------------------------------------------------------------
# standard form


def _standard_form(problem: MILPProblem):
    """Return (engine, lb, ub) with one slack column appended per row."""
    n = problem.n_variables
    m = problem.n_constraints
    rows, cols, vals = [], [], []
    b = np.zeros(m)
    lb = np.empty(n + m)
    ub = np.empty(n + m)
    for j, v in enumerate(problem.variables):
        lb[j] = v.lb
        ub[j] = v.ub
    for i, con in enumerate(problem.constraints):
        merged: dict[int, float] = {}
        for j, a in con.coeffs:
            merged[j] = merged.get(j, 0.0) + a
        for j, a in merged.items():
            if a != 0.0:
                rows.append(i)
                cols.append(j)
                vals.append(a)
        rows.append(i)
        cols.append(n + i)
        vals.append(1.0)
        b[i] = con.rhs
        if con.relation == LE:
            lb[n + i], ub[n + i] = 0.0, np.inf
        elif con.relation == GE:
            lb[n + i], ub[n + i] = -np.inf, 0.0
        else:
            lb[n + i], ub[n + i] = 0.0, 0.0
    A = sp.csc_matrix((vals, (rows, cols)), shape=(m, n + m))
    c = np.zeros(n + m)
    for j, a in problem.objective:
        c[j] += a
    engine = SimplexEngine(A, b, c)
    return engine, lb, ub


# ----------------------------------------------------------------------
# LP interface


def solve_lp(problem: MILPProblem, *, engine=None, lb=None, ub=None,
             warm: bool = False) -> MILPSolution:
    """Solve the continuous relaxation (binary markers ignored)."""
    problem.validate()
    if engine is None:
        engine, lb, ub = _standard_form(problem)
    out = engine.solve(lb, ub, warm=warm)
    n = problem.n_variables
    if out.status != "optimal":
        return MILPSolution(status=out.status, values=None, objective=None,
                            bound=None, gap=None, nodes_explored=0,
                            solve_time=out.work)
    obj = out.objective + problem.objective_constant
    return MILPSolution(status="optimal", values=out.x[:n].copy(),
                        objective=obj, bound=obj, gap=0.0, nodes_explored=0,
                        solve_time=out.work)


def lp_root_state(problem: MILPProblem) -> tuple:
    """Optimal basis snapshot of the continuous relaxation.

    Feed the result to ``SolveOptions.basis_hint`` when solving many
    structurally identical problems (for example the same system under
    perturbed load profiles): warm-started roots converge in a handful of
    repair pivots instead of a full cold solve.
    """
    engine, lb, ub = _standard_form(problem)
    out = engine.solve(lb, ub)
    return out.basis, out.vstat


# ----------------------------------------------------------------------
# variable fixing


def fix_variables(problem: MILPProblem,
                  fixings: dict[int, float]) -> MILPProblem:
    """Return a copy with equal lower/upper bounds on the fixed variables."""
    problem.validate()
    new_vars = list(problem.variables)
    for j, val in fixings.items():
        if not 0 <= j < len(new_vars):
            raise MILPError(f"fixing references unknown variable {j}")
        v = new_vars[j]
        if val < v.lb - 1e-9 or val > v.ub + 1e-9:
            raise MILPError(
                f"fixing {v.name or j}={val} outside bounds [{v.lb}, {v.ub}]")
        if v.binary and abs(val - round(val)) > 1e-9:
            raise MILPError(f"fixing {v.name or j}={val} is not integral")
        new_vars[j] = replace(v, lb=float(val), ub=float(val))
    return MILPProblem(variables=new_vars,
                       constraints=problem.constraints,
                       objective=problem.objective,
                       objective_constant=problem.objective_constant,
                       name=problem.name)


# ----------------------------------------------------------------------
# branch and bound


def _check_feasible(problem: MILPProblem, x: np.ndarray, tol: float) -> bool:
    for con in problem.constraints:
        lhs = sum(a * x[j] for j, a in con.coeffs)
        if con.relation == LE and lhs > con.rhs + tol:
            return False
        if con.relation == GE and lhs < con.rhs - tol:
            return False
        if con.relation == EQ and abs(lhs - con.rhs) > tol:
            return False
    return True


def solve_milp(problem: MILPProblem,
               options: SolveOptions | None = None) -> MILPSolution:
    """Best-bound branch-and-bound over the binary variables.

    Deterministic: most-fractional branching (ties to the lowest index),
    node selection by best bound with insertion order as tie-break.  A
    ``warm_start`` assignment is evaluated first and, if feasible, installed
    as the initial incumbent; the search can only improve on it.

    Child relaxations are solved eagerly at creation, warm-started from the
    parent basis (one bound change away), and every open node carries its
    own basis snapshot so expansion never pays a cold solve.
    """
    options = options or SolveOptions()
    options.validate()
    problem.validate()
    engine, lb0, ub0 = _standard_form(problem)
    nvar = problem.n_variables
    bins = np.array(problem.binary_indices, dtype=np.int64)
    int_tol = options.integrality_tolerance
    total_work = 0.0
    nodes_explored = 0
    inc_obj = np.inf
    inc_x: np.ndarray | None = None
    history: list[float] = []

    def lp(lbv, ubv, warm):
        nonlocal total_work
        try:
            out = engine.solve(lbv, ubv, warm=warm)
        except NumericalInstabilityError:
            if not warm:
                raise
            out = engine.solve(lbv, ubv, warm=False)
        total_work += out.work + NODE_WORK
        return out

    # evaluate the warm schedule first
    if options.warm_start is not None:
        wl, wu = lb0.copy(), ub0.copy()
        for j in bins:
            if int(j) not in options.warm_start:
                raise MILPError("warm_start must assign every binary variable")
        for j, val in options.warm_start.items():
            v = problem.variables[j]
            if not v.binary:
                raise MILPError(f"warm_start assigns non-binary variable {j}")
            if val not in (0, 1) or val < v.lb - 1e-9 or val > v.ub + 1e-9:
                raise MILPError(f"warm_start value for {v.name or j} invalid")
            wl[j] = wu[j] = float(val)
        out = lp(wl, wu, warm=False)
        if out.status == "optimal":
            inc_obj = out.objective
            inc_x = out.x[:nvar].copy()
            history.append(inc_obj + problem.objective_constant)

    warm_root = inc_x is not None
    if options.basis_hint is not None:
        total_work += engine.load_state(*options.basis_hint)
        warm_root = True
    root = lp(lb0, ub0, warm=warm_root)
    root_serial = engine.state_serial
    nodes_explored += 1
    if root.status in ("unbounded", "infeasible"):
        return MILPSolution(status=root.status, values=None, objective=None,
                            bound=None, gap=None,
                            nodes_explored=nodes_explored,
                            solve_time=total_work)

    if inc_x is None and len(bins) \
            and np.abs(root.x[bins] - np.round(root.x[bins])).max() > int_tol:
        # incumbent heuristic: best-bound search alone is very slow to find
        # a first integral solution, so fix-and-dive from the root — pin the
        # most nearly integral binary to its round, re-solve warm, repeat;
        # when a fixing turns the relaxation infeasible, try the flip once
        dl, du = lb0.copy(), ub0.copy()
        cur = root
        done = np.zeros(len(bins), dtype=bool)
        while True:
            xb = cur.x[bins]
            frac = np.abs(xb - np.round(xb))
            if frac.max() <= int_tol:
                inc_obj = cur.objective
                inc_x = cur.x[:nvar].copy()
                history.append(inc_obj + problem.objective_constant)
                break
            score = np.where(done, np.inf, np.minimum(frac, 1.0 - frac))
            k = int(np.argmin(score))
            if not np.isfinite(score[k]):
                break
            done[k] = True
            j = int(bins[k])
            val = float(np.clip(np.round(xb[k]), lb0[j], ub0[j]))
            dl[j] = du[j] = val
            nxt = lp(dl, du, warm=True)
            if nxt.status != "optimal":
                dl[j] = du[j] = 1.0 - val  # flip once, then give up
                nxt = lp(dl, du, warm=True)
                if nxt.status != "optimal":
                    break
            cur = nxt

    prune_eps = 1e-9

    def prune(bound: float) -> bool:
        return bound >= inc_obj - prune_eps * max(1.0, abs(inc_obj))

    # heap entries: (own LP bound, counter, {var: (lb, ub)}, basis, vstat,
    #                engine serial, fractional binary values)
    counter = 0
    heap: list[tuple] = []
    status = "optimal"
    best_bound = root.objective

    def absorb(out, delta, serial) -> None:
        """Classify a solved node: incumbent update, prune, or open node."""
        nonlocal inc_obj, inc_x, counter
        if out.status != "optimal" or prune(out.objective):
            return
        xb = out.x[bins] if len(bins) else np.empty(0)
        frac = np.abs(xb - np.round(xb))
        if not len(bins) or frac.max() <= int_tol:
            inc_obj = out.objective
            inc_x = out.x[:nvar].copy()
            history.append(inc_obj + problem.objective_constant)
            return
        heapq.heappush(heap, (out.objective, counter, delta, out.basis,
                              out.vstat, serial, xb))
        counter += 1

    absorb(root, {}, root_serial)

    while heap:
        node_bound, _, delta, basis, vstat, serial, xb = heapq.heappop(heap)
        best_bound = min(node_bound, inc_obj)
        if prune(node_bound):
            best_bound = inc_obj
            break
        if np.isfinite(inc_obj) and \
                _relative_gap(inc_obj, node_bound) <= options.mip_gap:
            status = "feasible-gap-met"
            break
        if options.node_limit is not None \
                and nodes_explored >= options.node_limit:
            status = "limit-reached"
            break
        if options.time_limit is not None \
                and total_work >= options.time_limit:
            status = "limit-reached"
            break

        if engine.state_serial != serial:
            total_work += engine.load_state(basis, vstat)
        frac = np.abs(xb - np.round(xb))
        k = int(np.argmax(np.minimum(frac, 1.0 - frac)))
        j = int(bins[k])
        for lo, hi in ((lb0[j], 0.0), (1.0, ub0[j])):
            child = dict(delta)
            child[j] = (lo, hi)
            lbv, ubv = lb0.copy(), ub0.copy()
            for jj, (l2, h2) in child.items():
                lbv[jj], ubv[jj] = l2, h2
            out = lp(lbv, ubv, warm=True)
            nodes_explored += 1
            absorb(out, child, engine.state_serial)
    else:
        best_bound = inc_obj

    if inc_x is None:
        return MILPSolution(status="infeasible", values=None, objective=None,
                            bound=None, gap=None,
                            nodes_explored=nodes_explored,
                            solve_time=total_work)

    const = problem.objective_constant
    objective = inc_obj + const
    bound = min(best_bound, inc_obj) + const
    gap = _relative_gap(objective, bound)
    if status == "optimal" and gap > options.mip_gap:
        status = "feasible-gap-met"  # pruned-slack corner case
    if not _check_feasible(problem, inc_x, options.feasibility_tolerance):
        raise MILPError("incumbent fails feasibility check")
    return MILPSolution(status=status, values=inc_x, objective=objective,
                        bound=bound, gap=gap, nodes_explored=nodes_explored,
                        solve_time=total_work, incumbent_history=history)


# ----------------------------------------------------------------------
# MPS export


def _mps_num(x: float) -> str:
    return f"{x:.12G}"


def export_mps(problem: MILPProblem, path) -> None:
    """Write the problem in fixed-format MPS.

    Row/column names are generated (R0000001, X0000001) so that arbitrary
    internal names never break the fixed-width format.  Binary variables are
    wrapped in INTORG/INTEND markers and additionally declared BV in BOUNDS.
    """
    problem.validate()
    rname = [f"R{i + 1:07d}" for i in range(problem.n_constraints)]
    cname = [f"X{j + 1:07d}" for j in range(problem.n_variables)]
    sense = {LE: "L", GE: "G", EQ: "E"}

    cols: list[list[tuple[str, float]]] = [[] for _ in problem.variables]
    for j, a in problem.objective:
        cols[j].append(("COST", a))
    for i, con in enumerate(problem.constraints):
        merged: dict[int, float] = {}
        for j, a in con.coeffs:
            merged[j] = merged.get(j, 0.0) + a
        for j in sorted(merged):
            if merged[j] != 0.0:
                cols[j].append((rname[i], merged[j]))

    lines = [f"NAME          {problem.name[:8].upper() or 'PROBLEM'}"]
    lines.append("ROWS")
    lines.append(" N  COST")
    for i, con in enumerate(problem.constraints):
        lines.append(f" {sense[con.relation]}  {rname[i]}")
    lines.append("COLUMNS")
    marker = 0
    in_int = False
    for j, v in enumerate(problem.variables):
        if v.binary != in_int:
            marker += 1
            tag = "'INTORG'" if v.binary else "'INTEND'"
            lines.append(f"    MARKER{marker:02d}  'MARKER'"
                         f"                 {tag}")
            in_int = v.binary
        entries = cols[j] or [("COST", 0.0)]
        for row, a in entries:
            lines.append(f"    {cname[j]:<8}  {row:<8}  {_mps_num(a):>12}")
    if in_int:
        marker += 1
        lines.append(f"    MARKER{marker:02d}  'MARKER'"
                     f"                 'INTEND'")
    lines.append("RHS")
    for i, con in enumerate(problem.constraints):
        if con.rhs != 0.0:
            lines.append(f"    RHS       {rname[i]:<8}  "
                         f"{_mps_num(con.rhs):>12}")
    if problem.objective_constant != 0.0:
        lines.append(f"    RHS       {'COST':<8}  "
                     f"{_mps_num(-problem.objective_constant):>12}")
    lines.append("BOUNDS")
    for j, v in enumerate(problem.variables):
        if v.binary:
            lines.append(f" BV BND       {cname[j]}")
            continue
        lo_f, hi_f = np.isfinite(v.lb), np.isfinite(v.ub)
        if lo_f and hi_f and v.lb == v.ub:
            lines.append(f" FX BND       {cname[j]:<8}  "
                         f"{_mps_num(v.lb):>12}")
            continue
        if not lo_f and not hi_f:
            lines.append(f" FR BND       {cname[j]}")
            continue
        if lo_f:
            if v.lb != 0.0:
                lines.append(f" LO BND       {cname[j]:<8}  "
                             f"{_mps_num(v.lb):>12}")
        else:
            lines.append(f" MI BND       {cname[j]}")
        if hi_f:
            lines.append(f" UP BND       {cname[j]:<8}  "
                         f"{_mps_num(v.ub):>12}")
    lines.append("ENDATA")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
