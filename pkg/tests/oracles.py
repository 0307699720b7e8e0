"""Independent oracles for the test suite.

These deliberately avoid the production solver paths: LPs are solved with
scipy's HiGHS backend, MILPs by exhaustive enumeration over the binaries,
minimum up/down logic by run-length rules, and full unit-commitment
instances by enumerating every commitment schedule.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import linprog

from ucreduce.milp import EQ, GE, LE, MILPProblem
from ucreduce.scuc import startup_matrix


def scipy_lp(problem: MILPProblem, fixing: dict[int, float] | None = None):
    """Continuous solve via scipy; returns (status, objective)."""
    n = problem.n_variables
    a_ub, b_ub, a_eq, b_eq = [], [], [], []
    for con in problem.constraints:
        row = np.zeros(n)
        for j, a in con.coeffs:
            row[j] += a
        if con.relation == LE:
            a_ub.append(row)
            b_ub.append(con.rhs)
        elif con.relation == GE:
            a_ub.append(-row)
            b_ub.append(-con.rhs)
        else:
            a_eq.append(row)
            b_eq.append(con.rhs)
    c = np.zeros(n)
    for j, a in problem.objective:
        c[j] += a
    bounds = []
    for j, v in enumerate(problem.variables):
        if fixing and j in fixing:
            bounds.append((fixing[j], fixing[j]))
        else:
            bounds.append((v.lb if np.isfinite(v.lb) else None,
                           v.ub if np.isfinite(v.ub) else None))
    res = linprog(c, A_ub=np.array(a_ub) if a_ub else None,
                  b_ub=np.array(b_ub) if b_ub else None,
                  A_eq=np.array(a_eq) if a_eq else None,
                  b_eq=np.array(b_eq) if b_eq else None,
                  bounds=bounds, method="highs")
    if res.status == 0:
        return "optimal", res.fun + problem.objective_constant
    if res.status == 2:
        return "infeasible", None
    if res.status == 3:
        return "unbounded", None
    raise RuntimeError(f"scipy linprog status {res.status}")


def enumerate_milp(problem: MILPProblem):
    """Brute force: scipy LP for every binary assignment.

    Returns (status, best objective).
    """
    bins = problem.binary_indices
    best = np.inf
    unbounded = False
    for assign in itertools.product((0.0, 1.0), repeat=len(bins)):
        status, obj = scipy_lp(problem, dict(zip(bins, assign)))
        if status == "unbounded":
            unbounded = True
        elif status == "optimal" and obj < best:
            best = obj
    if unbounded:
        return "unbounded", None
    if not np.isfinite(best):
        return "infeasible", None
    return "optimal", best


def updown_ok(u, min_up: int, min_down: int, initial_on: bool = False) -> bool:
    """Naive literal evaluation of the up/down window inequalities on the
    minimal start-up indicators (plain Python loops, shared with no
    production code).  Note the windows are exactly as printed: the up-time
    family only exists for 1-based t >= min_up and the down-time family for
    t <= T - min_down, which deliberately leaves runs touching the horizon
    edges under-constrained.
    """
    u = [int(x) for x in u]
    horizon = len(u)
    prev = 1 if initial_on else 0
    v = []
    for val in u:
        v.append(1 if val == 1 and prev == 0 else 0)
        prev = val
    for t in range(min_up - 1, horizon):
        if sum(v[q] for q in range(t - min_up + 1, t + 1)) > u[t]:
            return False
    for t in range(0, horizon - min_down):
        if sum(v[q] for q in range(t + 1, t + min_down + 1)) > 1 - u[t]:
            return False
    return True


def scuc_bruteforce(system, demand: np.ndarray, tol_infeas: float = 1e-9):
    """Minimum over all commitment schedules of commitment cost plus the
    scipy-LP dispatch cost; schedules failing the up/down rules or with an
    infeasible dispatch are skipped.  Assumes the default initial state
    (all off, zero output).  Returns (best objective, best u) or (inf, None).
    """
    gens = system.generators
    n_gens = len(gens)
    horizon = system.horizon
    best, best_u = np.inf, None
    for bits in itertools.product((0, 1), repeat=n_gens * horizon):
        u = np.array(bits, dtype=np.int8).reshape(n_gens, horizon)
        if not all(updown_ok(u[g], gens[g].min_up, gens[g].min_down)
                   for g in range(n_gens)):
            continue
        v = startup_matrix(u, np.zeros(n_gens, dtype=bool))
        commit = sum(gens[g].cost_no_load * u[g].sum()
                     + gens[g].cost_startup * v[g].sum()
                     for g in range(n_gens))
        if commit >= best:
            # dispatch cost is bounded below by cheapest-unit energy
            cheapest = min(g.cost_linear for g in gens)
            if commit + cheapest * demand.sum() >= best:
                continue
        disp = dispatch_lp(system, demand, u, v)
        if disp is None:
            continue
        total = commit + disp
        if total < best - tol_infeas:
            best, best_u = total, u
    return best, best_u


def dispatch_lp(system, demand, u, v):
    """scipy LP over dispatch, reserve, flow and angles for fixed (u, v)."""
    gens = system.generators
    n_gens = len(gens)
    n_lines = len(system.lines)
    n_buses = system.n_buses
    horizon = system.horizon

    def ip(g, t):
        return g * horizon + t

    def ir(g, t):
        return n_gens * horizon + g * horizon + t

    def iflow(k, t):
        return 2 * n_gens * horizon + k * horizon + t

    def ith(n, t):
        return 2 * n_gens * horizon + n_lines * horizon + n * horizon + t

    nv = (2 * n_gens + n_lines + n_buses) * horizon
    lb = np.zeros(nv)
    ub = np.full(nv, np.inf)
    a_ub, b_ub, a_eq, b_eq = [], [], [], []
    for g, gen in enumerate(gens):
        for t in range(horizon):
            ub[ip(g, t)] = gen.p_max * u[g, t]
            lb[ip(g, t)] = gen.p_min * u[g, t]
            ub[ir(g, t)] = gen.ramp_10min * u[g, t]
            row = np.zeros(nv)
            row[ip(g, t)] = 1
            row[ir(g, t)] = 1
            a_ub.append(row)
            b_ub.append(gen.p_max * u[g, t])
            row = np.zeros(nv)  # reserve covers this unit
            for q in range(n_gens):
                row[ir(q, t)] -= 1
            row[ip(g, t)] += 1
            row[ir(g, t)] += 1
            a_ub.append(row)
            b_ub.append(0.0)
            row = np.zeros(nv)  # ramp up
            row[ip(g, t)] = 1
            if t > 0:
                row[ip(g, t - 1)] = -1
            a_ub.append(row)
            b_ub.append(gen.ramp_hourly * (u[g, t - 1] if t else 0)
                        + gen.ramp_startup * v[g, t])
            row = np.zeros(nv)  # ramp down
            row[ip(g, t)] = -1
            if t > 0:
                row[ip(g, t - 1)] = 1
            a_ub.append(row)
            b_ub.append(gen.ramp_hourly * u[g, t]
                        + gen.ramp_shutdown
                        * (v[g, t] - u[g, t] + (u[g, t - 1] if t else 0)))
    for k, line in enumerate(system.lines):
        for t in range(horizon):
            lb[iflow(k, t)] = -line.flow_limit
            ub[iflow(k, t)] = line.flow_limit
            row = np.zeros(nv)
            row[iflow(k, t)] = 1
            row[ith(line.from_bus, t)] = -line.susceptance
            row[ith(line.to_bus, t)] = line.susceptance
            a_eq.append(row)
            b_eq.append(0.0)
    for n in range(n_buses):
        for t in range(horizon):
            lb[ith(n, t)] = -np.inf
            row = np.zeros(nv)
            for g in system.gens_at_bus[n]:
                row[ip(g, t)] = 1
            for k in system.lines_in[n]:
                row[iflow(k, t)] = 1
            for k in system.lines_out[n]:
                row[iflow(k, t)] = -1
            a_eq.append(row)
            b_eq.append(demand[n, t])
    for t in range(horizon):
        lb[ith(system.reference_bus, t)] = 0.0
        ub[ith(system.reference_bus, t)] = 0.0
    c = np.zeros(nv)
    for g, gen in enumerate(gens):
        for t in range(horizon):
            c[ip(g, t)] = gen.cost_linear
    res = linprog(c, A_ub=np.array(a_ub), b_ub=np.array(b_ub),
                  A_eq=np.array(a_eq), b_eq=np.array(b_eq),
                  bounds=list(zip(lb, ub)), method="highs")
    return res.fun if res.status == 0 else None


# ----------------------------------------------------------------------
# minimal fixed-format MPS reader (dimension oracle for the exporter)


def read_mps(path):
    """Parse our fixed-format MPS output; returns a dict with rows, columns,
    rhs, bounds and the set of integer column names."""
    section = None
    rows: dict[str, str] = {}
    cols: dict[str, dict[str, float]] = {}
    rhs: dict[str, float] = {}
    bounds: list[tuple[str, str, float | None]] = []
    integers: set[str] = set()
    in_int = False
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip() or line.startswith("*"):
                continue
            if not line.startswith(" ") and not line.startswith("\t"):
                section = line.split()[0]
                continue
            parts = line.split()
            if section == "ROWS":
                rows[parts[1]] = parts[0]
            elif section == "COLUMNS":
                if len(parts) >= 3 and parts[1] == "'MARKER'":
                    in_int = parts[2] == "'INTORG'"
                    continue
                name = parts[0]
                if in_int:
                    integers.add(name)
                entries = cols.setdefault(name, {})
                for k in range(1, len(parts) - 1, 2):
                    entries[parts[k]] = float(parts[k + 1])
            elif section == "RHS":
                for k in range(1, len(parts) - 1, 2):
                    rhs[parts[k]] = float(parts[k + 1])
            elif section == "BOUNDS":
                kind, _, name = parts[0], parts[1], parts[2]
                val = float(parts[3]) if len(parts) > 3 else None
                bounds.append((kind, name, val))
                if kind == "BV":
                    integers.add(name)
    return {"rows": rows, "cols": cols, "rhs": rhs, "bounds": bounds,
            "integers": integers}
