"""Feasibility layer: minimal repair of predicted commitment rows.

A predicted ON/OFF row for one generator may violate minimum up/down time
logic.  ``repair_row`` solves a small MILP that flips as few periods as
possible so the up/down window constraints hold, with explicit turn-on and
turn-off indicator variables limiting each period to at most one flip.
The all-ON and all-OFF rows are always feasible, so the repair MILP always
has an optimum.

Repairs are independent per (sample, generator); ``repair_batch`` skips
rows that are already constantly ON or OFF, which are feasible by
construction, and aggregates per-sample solve times for reporting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .milp import (Constraint, EQ, GE, LE, MILPProblem, SolveOptions,
                   Variable, solve_milp)
from .scuc import startup_matrix


@dataclass
class FLInstance:
    min_up: int
    min_down: int
    predicted: np.ndarray  # binary row, length T
    initial_on: bool = False
    generator: int = -1

    def __post_init__(self):
        self.predicted = np.asarray(self.predicted, dtype=np.int8)
        if self.predicted.ndim != 1:
            raise ValueError("predicted row must be one-dimensional")
        if not np.isin(self.predicted, (0, 1)).all():
            raise ValueError("predicted row must be binary")
        if self.min_up < 1 or self.min_down < 1:
            raise ValueError("min_up and min_down must be >= 1")


@dataclass
class FLResult:
    repaired: np.ndarray  # u^MF
    startup: np.ndarray   # v^MF (minimal startups of the repaired row)
    flips_up: int
    flips_down: int
    solve_time: float
    skipped: bool = False

    @property
    def flips(self) -> int:
        return self.flips_up + self.flips_down


def build_repair_milp(inst: FLInstance) -> MILPProblem:
    T = len(inst.predicted)
    ut, dt = inst.min_up, inst.min_down
    u0 = int(inst.initial_on)
    iu = np.arange(0, T)          # repaired state
    iv = np.arange(T, 2 * T)      # startup
    iup = np.arange(2 * T, 3 * T)
    idn = np.arange(3 * T, 4 * T)
    variables = (
        [Variable(f"uMF[{t}]", 0, 1, binary=True) for t in range(T)]
        + [Variable(f"vMF[{t}]", 0, 1, binary=True) for t in range(T)]
        + [Variable(f"up[{t}]", 0, 1, binary=True) for t in range(T)]
        + [Variable(f"dn[{t}]", 0, 1, binary=True) for t in range(T)]
    )
    cons = []
    for t in range(T):
        cons.append(Constraint(
            ((int(iu[t]), 1.0), (int(iup[t]), -1.0), (int(idn[t]), 1.0)),
            EQ, float(inst.predicted[t]), f"link[{t}]"))
    for t in range(0, T - dt):
        coeffs = [(int(iv[q]), 1.0) for q in range(t + 1, t + dt + 1)]
        coeffs.append((int(iu[t]), 1.0))
        cons.append(Constraint(tuple(coeffs), LE, 1.0, f"mindn[{t}]"))
    for t in range(ut - 1, T):
        coeffs = [(int(iv[q]), 1.0) for q in range(t - ut + 1, t + 1)]
        coeffs.append((int(iu[t]), -1.0))
        cons.append(Constraint(tuple(coeffs), LE, 0.0, f"minup[{t}]"))
    for t in range(T):
        if t == 0:
            cons.append(Constraint(
                ((int(iv[0]), 1.0), (int(iu[0]), -1.0)),
                GE, -float(u0), "startup[0]"))
        else:
            cons.append(Constraint(
                ((int(iv[t]), 1.0), (int(iu[t]), -1.0),
                 (int(iu[t - 1]), 1.0)),
                GE, 0.0, f"startup[{t}]"))
    for t in range(T):
        cons.append(Constraint(
            ((int(iup[t]), 1.0), (int(idn[t]), 1.0)),
            LE, 1.0, f"oneflip[{t}]"))
    objective = tuple([(int(iup[t]), 1.0) for t in range(T)]
                      + [(int(idn[t]), 1.0) for t in range(T)])
    return MILPProblem(variables=variables, constraints=cons,
                       objective=objective, name="flrepair")


def repair_row(inst: FLInstance) -> FLResult:
    """Minimal-flip repair of one predicted row.

    The flip count is exact (the repair MILP is solved to a tight gap) and
    the selection among equal-flip repairs is reproducible because the
    underlying branch-and-bound is deterministic.
    """
    T = len(inst.predicted)
    problem = build_repair_milp(inst)
    sol = solve_milp(problem, SolveOptions(mip_gap=1e-9))
    if not sol.feasible:  # cannot happen: all-ON / all-OFF are feasible
        raise RuntimeError("feasibility-layer MILP reported infeasible")
    x = np.round(sol.values).astype(np.int8)
    repaired = x[0:T]
    flips_up = int(x[2 * T:3 * T].sum())
    flips_down = int(x[3 * T:4 * T].sum())
    startup = startup_matrix(repaired[None, :],
                             np.array([inst.initial_on]))[0]
    return FLResult(repaired=repaired, startup=startup, flips_up=flips_up,
                    flips_down=flips_down, solve_time=sol.solve_time)


def repair_batch(predictions, system, initial_on: np.ndarray | None = None,
                 skip_always_on_off: bool = True
                 ) -> dict[tuple[int, int], FLResult]:
    """Repair every generator row of every sample.

    ``predictions`` is an int array [samples, generators, periods] of hard
    labels (a PredictionSet's ``labels`` works).  Rows that are constantly
    ON or OFF are already feasible and are passed through unmodified when
    the skip rule is active, with zero solve time.
    """
    labels = getattr(predictions, "labels", predictions)
    labels = np.asarray(labels, dtype=np.int8)
    if labels.ndim == 2:
        labels = labels[None, :, :]
    n_samples, n_gens, horizon = labels.shape
    if n_gens != len(system.generators) or horizon != system.horizon:
        raise ValueError("prediction shape does not match the system")
    if initial_on is None:
        initial_on = np.zeros(n_gens, dtype=bool)
    out: dict[tuple[int, int], FLResult] = {}
    for m in range(n_samples):
        for g, gen in enumerate(system.generators):
            row = labels[m, g]
            if skip_always_on_off and (row.all() or not row.any()):
                out[(m, g)] = FLResult(
                    repaired=row.copy(),
                    startup=startup_matrix(row[None, :],
                                           initial_on[g:g + 1])[0],
                    flips_up=0, flips_down=0, solve_time=0.0, skipped=True)
                continue
            inst = FLInstance(min_up=gen.min_up, min_down=gen.min_down,
                              predicted=row, initial_on=bool(initial_on[g]),
                              generator=g)
            out[(m, g)] = repair_row(inst)
    return out


def sample_fl_times(results: dict[tuple[int, int], FLResult]
                    ) -> dict[int, float]:
    """Aggregate feasibility-layer solve time per sample."""
    times: dict[int, float] = {}
    for (m, _), res in results.items():
        times[m] = times.get(m, 0.0) + res.solve_time
    return times
