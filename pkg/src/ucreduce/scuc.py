"""Unit-commitment MILP builder and schedule utilities.

``build_scuc`` translates a power system plus nodal load profile into a
:class:`~ucreduce.milp.MILPProblem`.  The model minimises no-load, start-up
and energy cost subject to generation limits, 10-minute reserve coverage of
the largest dispatched unit, hourly ramping, minimum up/down time logic, a
DC network flow and nodal balance.  Deterministic mode uses a single
scenario with renewables switched off; stochastic mode shares one
commitment schedule across all renewable scenarios.

Line thermal limits and the reference-bus angle are enforced through
variable bounds; everything else is a constraint row tagged with a family
name (pmin, pmax, resv10, resvreq, rampup, rampdn, minup, mindn, startup,
flowdef, balance) so structure tests can count instantiations per family.

Time is 0-based internally; period t of the formulation is index t-1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import LoadProfile, PowerSystem, ValidationError
from .milp import (Constraint, EQ, GE, LE, MILPError, MILPProblem,
                   MILPSolution, Variable, fix_variables)


@dataclass
class ScucOptions:
    initial_on: np.ndarray | None = None        # bool [G]; default all OFF
    initial_dispatch: np.ndarray | None = None  # MW at t=0 [G]; default 0
    initial_duration: np.ndarray | None = None  # periods already in the
    # initial state [G]; None means long enough that no carry-over binds
    stochastic: bool = False
    n_scenarios: int | None = None

    def resolve(self, system: PowerSystem):
        g = len(system.generators)
        on = (np.zeros(g, dtype=bool) if self.initial_on is None
              else np.asarray(self.initial_on, dtype=bool))
        disp = (np.zeros(g) if self.initial_dispatch is None
                else np.asarray(self.initial_dispatch, dtype=float))
        if on.shape != (g,) or disp.shape != (g,):
            raise ValidationError("initial state dimensions do not match "
                                  "the generator count")
        dur = None
        if self.initial_duration is not None:
            dur = np.asarray(self.initial_duration, dtype=int)
            if dur.shape != (g,):
                raise ValidationError("initial_duration dimensions do not "
                                      "match the generator count")
        if self.stochastic:
            s = system.n_scenarios
            if self.n_scenarios is not None and self.n_scenarios != s:
                raise ValidationError(
                    f"options request {self.n_scenarios} scenarios but the "
                    f"system defines {s}")
        else:
            s = 1
        return on, disp, dur, s


@dataclass
class VariableIndex:
    """Maps (g,t), (g,t,s), (k,t,s), (n,t,s) tuples to variable ids."""
    u: np.ndarray      # [G, T]
    v: np.ndarray      # [G, T]
    p: np.ndarray      # [G, T, S]
    r: np.ndarray      # [G, T, S]
    flow: np.ndarray   # [K, T, S]
    theta: np.ndarray  # [N, T, S]
    initial_on: np.ndarray
    n_variables: int


def startup_matrix(u: np.ndarray, initial_on: np.ndarray) -> np.ndarray:
    """Minimal start-up indicators: v_t = max(0, u_t - u_{t-1})."""
    u = np.asarray(u, dtype=np.int8)
    prev = np.empty_like(u)
    prev[:, 0] = np.asarray(initial_on, dtype=np.int8)
    prev[:, 1:] = u[:, :-1]
    return np.maximum(u - prev, 0).astype(np.int8)


@dataclass
class CommitmentSchedule:
    u: np.ndarray                      # int [G, T]
    initial_on: np.ndarray             # bool [G]
    v: np.ndarray = field(init=False)  # derived start-ups

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.int8)
        self.initial_on = np.asarray(self.initial_on, dtype=bool)
        self.v = startup_matrix(self.u, self.initial_on)


@dataclass(frozen=True)
class Violation:
    gen: int
    period: int  # 0-based
    kind: str    # 'min_up' | 'min_down'


@dataclass
class SolvedSchedule:
    schedule: CommitmentSchedule
    v_solver: np.ndarray   # start-up variables as solved [G, T]
    dispatch: np.ndarray   # [G, T, S]
    reserve: np.ndarray    # [G, T, S]
    flow: np.ndarray       # [K, T, S]
    theta: np.ndarray      # [N, T, S]
    objective: float


# ----------------------------------------------------------------------


def build_scuc(system: PowerSystem, profile: LoadProfile,
               options: ScucOptions | None = None
               ) -> tuple[MILPProblem, VariableIndex]:
    options = options or ScucOptions()
    init_on, init_disp, init_dur, S = options.resolve(system)
    G = len(system.generators)
    K = len(system.lines)
    N = system.n_buses
    T = system.horizon
    if profile.demand.shape != (N, T):
        raise ValidationError("profile does not match the system")

    pi = (system.scenario_probabilities if options.stochastic
          else np.array([1.0]))
    if options.stochastic:
        renew = system.renewable_bus_output()  # [N, T, S]
    else:
        renew = np.zeros((N, T, 1))

    variables: list[Variable] = []

    def add_block(shape, maker) -> np.ndarray:
        start = len(variables)
        idx = np.arange(start, start + int(np.prod(shape))).reshape(shape)
        for flat in idx.flat:
            variables.append(maker(flat - start))
        return idx

    gens = system.generators
    iu = add_block((G, T), lambda f: Variable(
        f"u[{f // T},{f % T}]", 0.0, 1.0, binary=True))
    iv = add_block((G, T), lambda f: Variable(
        f"v[{f // T},{f % T}]", 0.0, 1.0, binary=True))
    ip = add_block((G, T, S), lambda f: Variable(
        f"P[{f // (T * S)},{(f // S) % T},{f % S}]",
        0.0, gens[f // (T * S)].p_max))
    ir = add_block((G, T, S), lambda f: Variable(
        f"r[{f // (T * S)},{(f // S) % T},{f % S}]",
        0.0, gens[f // (T * S)].ramp_10min))
    iflow = add_block((K, T, S), lambda f: Variable(
        f"f[{f // (T * S)},{(f // S) % T},{f % S}]",
        -system.lines[f // (T * S)].flow_limit,
        system.lines[f // (T * S)].flow_limit))
    itheta = add_block((N, T, S), lambda f: Variable(
        f"th[{f // (T * S)},{(f // S) % T},{f % S}]", -np.inf, np.inf))

    # reference phase angle fixed to zero via bounds
    ref = system.reference_bus
    for t in range(T):
        for s in range(S):
            j = int(itheta[ref, t, s])
            variables[j] = Variable(variables[j].name, 0.0, 0.0)

    # carry-over of the initial state when a prior duration is given
    if init_dur is not None:
        for g, gen in enumerate(gens):
            if init_on[g]:
                hold = max(0, gen.min_up - int(init_dur[g]))
                val = 1.0
            else:
                hold = max(0, gen.min_down - int(init_dur[g]))
                val = 0.0
            for t in range(min(hold, T)):
                j = int(iu[g, t])
                variables[j] = Variable(variables[j].name, val, val,
                                        binary=True)

    cons: list[Constraint] = []

    # generation limits (min/max) and the 10-minute reserve cap
    for g, gen in enumerate(gens):
        for t in range(T):
            for s in range(S):
                cons.append(Constraint(
                    ((int(ip[g, t, s]), 1.0), (int(iu[g, t]), -gen.p_min)),
                    GE, 0.0, f"pmin[{g},{t},{s}]"))
    for g, gen in enumerate(gens):
        for t in range(T):
            for s in range(S):
                cons.append(Constraint(
                    ((int(ip[g, t, s]), 1.0), (int(ir[g, t, s]), 1.0),
                     (int(iu[g, t]), -gen.p_max)),
                    LE, 0.0, f"pmax[{g},{t},{s}]"))
    for g, gen in enumerate(gens):
        for t in range(T):
            for s in range(S):
                cons.append(Constraint(
                    ((int(ir[g, t, s]), 1.0),
                     (int(iu[g, t]), -gen.ramp_10min)),
                    LE, 0.0, f"resv10[{g},{t},{s}]"))

    # total reserve covers each unit's dispatch plus its own reserve
    for g in range(G):
        for t in range(T):
            for s in range(S):
                coeffs = [(int(ir[q, t, s]), 1.0) for q in range(G)]
                coeffs.append((int(ip[g, t, s]), -1.0))
                coeffs.append((int(ir[g, t, s]), -1.0))
                cons.append(Constraint(tuple(coeffs), GE, 0.0,
                                       f"resvreq[{g},{t},{s}]"))

    # hourly ramping (start-up / shutdown rates at the commitment edges)
    for g, gen in enumerate(gens):
        for t in range(T):
            for s in range(S):
                if t == 0:
                    cons.append(Constraint(
                        ((int(ip[g, 0, s]), 1.0),
                         (int(iv[g, 0]), -gen.ramp_startup)),
                        LE,
                        float(init_disp[g]
                              + gen.ramp_hourly * float(init_on[g])),
                        f"rampup[{g},{t},{s}]"))
                else:
                    cons.append(Constraint(
                        ((int(ip[g, t, s]), 1.0), (int(ip[g, t - 1, s]), -1.0),
                         (int(iu[g, t - 1]), -gen.ramp_hourly),
                         (int(iv[g, t]), -gen.ramp_startup)),
                        LE, 0.0, f"rampup[{g},{t},{s}]"))
    for g, gen in enumerate(gens):
        for t in range(T):
            for s in range(S):
                if t == 0:
                    cons.append(Constraint(
                        ((int(ip[g, 0, s]), -1.0),
                         (int(iu[g, 0]), gen.ramp_shutdown - gen.ramp_hourly),
                         (int(iv[g, 0]), -gen.ramp_shutdown)),
                        LE,
                        float(gen.ramp_shutdown * float(init_on[g])
                              - init_disp[g]),
                        f"rampdn[{g},{t},{s}]"))
                else:
                    cons.append(Constraint(
                        ((int(ip[g, t - 1, s]), 1.0), (int(ip[g, t, s]), -1.0),
                         (int(iu[g, t]), gen.ramp_shutdown - gen.ramp_hourly),
                         (int(iv[g, t]), -gen.ramp_shutdown),
                         (int(iu[g, t - 1]), -gen.ramp_shutdown)),
                        LE, 0.0, f"rampdn[{g},{t},{s}]"))

    # minimum up time: startups within the trailing window imply ON
    for g, gen in enumerate(gens):
        ut = gen.min_up
        for t in range(ut - 1, T):
            coeffs = [(int(iv[g, q]), 1.0) for q in range(t - ut + 1, t + 1)]
            coeffs.append((int(iu[g, t]), -1.0))
            cons.append(Constraint(tuple(coeffs), LE, 0.0,
                                   f"minup[{g},{t}]"))
    # minimum down time: no restart within DT periods of an ON period
    for g, gen in enumerate(gens):
        dt = gen.min_down
        for t in range(0, T - dt):
            coeffs = [(int(iv[g, q]), 1.0) for q in range(t + 1, t + dt + 1)]
            coeffs.append((int(iu[g, t]), 1.0))
            cons.append(Constraint(tuple(coeffs), LE, 1.0,
                                   f"mindn[{g},{t}]"))
    # start-up indicator definition
    for g in range(G):
        for t in range(T):
            if t == 0:
                cons.append(Constraint(
                    ((int(iv[g, 0]), 1.0), (int(iu[g, 0]), -1.0)),
                    GE, -float(init_on[g]), f"startup[{g},{t}]"))
            else:
                cons.append(Constraint(
                    ((int(iv[g, t]), 1.0), (int(iu[g, t]), -1.0),
                     (int(iu[g, t - 1]), 1.0)),
                    GE, 0.0, f"startup[{g},{t}]"))

    # DC power flow definition
    for k, line in enumerate(system.lines):
        for t in range(T):
            for s in range(S):
                cons.append(Constraint(
                    ((int(iflow[k, t, s]), 1.0),
                     (int(itheta[line.from_bus, t, s]), -line.susceptance),
                     (int(itheta[line.to_bus, t, s]), line.susceptance)),
                    EQ, 0.0, f"flowdef[{k},{t},{s}]"))

    # nodal balance; renewables enter as negative load
    for n in range(N):
        for t in range(T):
            for s in range(S):
                coeffs = [(int(ip[g, t, s]), 1.0)
                          for g in system.gens_at_bus[n]]
                coeffs += [(int(iflow[k, t, s]), 1.0)
                           for k in system.lines_in[n]]
                coeffs += [(int(iflow[k, t, s]), -1.0)
                           for k in system.lines_out[n]]
                rhs = float(profile.demand[n, t] - renew[n, t, s])
                cons.append(Constraint(tuple(coeffs), EQ, rhs,
                                       f"balance[{n},{t},{s}]"))

    objective = []
    for g, gen in enumerate(gens):
        for t in range(T):
            if gen.cost_no_load:
                objective.append((int(iu[g, t]), gen.cost_no_load))
            if gen.cost_startup:
                objective.append((int(iv[g, t]), gen.cost_startup))
            for s in range(S):
                objective.append((int(ip[g, t, s]),
                                  float(pi[s]) * gen.cost_linear))

    problem = MILPProblem(variables=variables, constraints=cons,
                          objective=tuple(objective),
                          name=system.name or "scuc")
    index = VariableIndex(u=iu, v=iv, p=ip, r=ir, flow=iflow, theta=itheta,
                          initial_on=init_on, n_variables=len(variables))
    return problem, index


# ----------------------------------------------------------------------


def apply_reduction(problem: MILPProblem, index: VariableIndex, plan
                    ) -> tuple[MILPProblem, dict[int, int]]:
    """Fix the planned (g,t) commitment variables; return the reduced
    problem plus a full warm-start assignment for all binaries (start-up
    variables are warm-started at their minimal values implied by u)."""
    fixed_mask = np.asarray(plan.fixed_mask, dtype=bool)
    if fixed_mask.shape != index.u.shape:
        raise MILPError(
            f"plan shape {fixed_mask.shape} does not match the commitment "
            f"variables {index.u.shape}")
    fixed_values = np.asarray(plan.fixed_values)
    warm_u = np.where(fixed_mask, fixed_values, np.asarray(plan.warm))
    if not np.isin(warm_u, (0, 1)).all():
        raise MILPError("plan values must be binary")

    fixings = {int(index.u[g, t]): float(fixed_values[g, t])
               for g, t in np.argwhere(fixed_mask)}
    reduced = fix_variables(problem, fixings) if fixings else problem

    warm_v = startup_matrix(warm_u, index.initial_on)
    warm = {}
    G, T = index.u.shape
    for g in range(G):
        for t in range(T):
            warm[int(index.u[g, t])] = int(warm_u[g, t])
            warm[int(index.v[g, t])] = int(warm_v[g, t])
    return reduced, warm


def extract_schedule(solution: MILPSolution,
                     index: VariableIndex) -> SolvedSchedule:
    if not solution.feasible:
        raise MILPError(f"cannot extract a schedule from a "
                        f"'{solution.status}' solution")
    x = solution.values
    u_raw = x[index.u]
    v_raw = x[index.v]
    if np.abs(u_raw - np.round(u_raw)).max(initial=0.0) > 1e-4:
        raise MILPError("commitment variables are not integral")
    u = np.round(u_raw).astype(np.int8)
    v = np.round(v_raw).astype(np.int8)
    schedule = CommitmentSchedule(u=u, initial_on=index.initial_on)
    return SolvedSchedule(schedule=schedule, v_solver=v,
                          dispatch=x[index.p].copy(),
                          reserve=x[index.r].copy(),
                          flow=x[index.flow].copy(),
                          theta=x[index.theta].copy(),
                          objective=float(solution.objective))


def check_min_updown(schedule, system: PowerSystem,
                     options: ScucOptions | None = None) -> list[Violation]:
    """Independent validator of the minimum up/down time logic.

    Evaluates the up/down window inequalities on u with the minimal
    start-up indicators; returns every violating (g, t).  Empty list iff
    the schedule is feasible for that constraint family.
    """
    if isinstance(schedule, CommitmentSchedule):
        u = schedule.u
        init_on = schedule.initial_on
    else:
        u = np.asarray(schedule, dtype=np.int8)
        init_on, _, _, _ = (options or ScucOptions()).resolve(system)
    G, T = u.shape
    v = startup_matrix(u, init_on)
    out: list[Violation] = []
    for g, gen in enumerate(system.generators):
        ut, dt = gen.min_up, gen.min_down
        cv = np.concatenate(([0], np.cumsum(v[g])))
        for t in range(ut - 1, T):
            if cv[t + 1] - cv[t - ut + 1] > u[g, t]:
                out.append(Violation(g, t, "min_up"))
        for t in range(0, T - dt):
            if cv[t + dt + 1] - cv[t + 1] > 1 - u[g, t]:
                out.append(Violation(g, t, "min_down"))
    return out
