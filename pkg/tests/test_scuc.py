import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ucreduce.grid import Bus, Generator, Line, LoadProfile, PowerSystem, \
    validate_system
from ucreduce.milp import MILPError, SolveOptions, solve_lp, solve_milp
from ucreduce.pipeline import ReductionPlan
from ucreduce.scuc import (CommitmentSchedule, ScucOptions, apply_reduction,
                           build_scuc, check_min_updown, extract_schedule,
                           startup_matrix)

from conftest import (make_stochastic_profile, make_stochastic_system,
                      make_two_bus_profile, make_two_bus_system)
from oracles import scuc_bruteforce, updown_ok

TIGHT = SolveOptions(mip_gap=1e-9)


def single_bus_pair(demand=100.0):
    """Two identical generators on one bus, one period."""
    gens = tuple(
        Generator(i, 0, p_min=0, p_max=100, cost_linear=1.0,
                  cost_no_load=0.0, cost_startup=0.0, ramp_hourly=100,
                  ramp_startup=100, ramp_shutdown=100, ramp_10min=100,
                  min_up=1, min_down=1)
        for i in range(2))
    system = validate_system(PowerSystem(
        buses=(Bus(0),), generators=gens, lines=(), renewables=(),
        reference_bus=0, horizon=1,
        scenario_probabilities=np.array([1.0])))
    return system, LoadProfile(demand=np.array([[demand]]))


def family_counts(problem):
    counts = {}
    for con in problem.constraints:
        counts[con.name.split("[")[0]] = \
            counts.get(con.name.split("[")[0], 0) + 1
    return counts


def test_structure_single_bus():
    system, profile = single_bus_pair()
    problem, index = build_scuc(system, profile)
    # 2 u + 2 v binaries, 2 P + 2 r continuous, 1 theta
    kinds = [v.name.split("[")[0] for v in problem.variables]
    assert kinds.count("u") == 2 and kinds.count("v") == 2
    assert kinds.count("P") == 2 and kinds.count("r") == 2
    assert kinds.count("th") == 1 and kinds.count("f") == 0
    assert len(problem.binary_indices) == 4
    # hand-derived family counts for G=2, T=1, S=1, K=0, N=1, UT=DT=1
    assert family_counts(problem) == {
        "pmin": 2, "pmax": 2, "resv10": 2, "resvreq": 2,
        "rampup": 2, "rampdn": 2, "minup": 2, "startup": 2, "balance": 1}
    assert index.n_variables == problem.n_variables


def test_structure_counts_general(two_bus_system, two_bus_profile):
    system, profile = two_bus_system, two_bus_profile
    problem, _ = build_scuc(system, profile)
    n_gens, horizon, n_lines, n_buses = 3, 4, 1, 2
    counts = family_counts(problem)
    per_gts = n_gens * horizon
    assert counts["pmin"] == counts["pmax"] == counts["resv10"] == per_gts
    assert counts["resvreq"] == per_gts
    assert counts["rampup"] == counts["rampdn"] == per_gts
    assert counts["startup"] == per_gts
    assert counts["minup"] == sum(
        max(0, horizon - g.min_up + 1) for g in system.generators)
    assert counts["mindn"] == sum(
        max(0, horizon - g.min_down) for g in system.generators)
    assert counts["flowdef"] == n_lines * horizon
    assert counts["balance"] == n_buses * horizon
    # line limits and the reference angle are enforced through bounds
    for k, line in enumerate(system.lines):
        for t in range(horizon):
            v = problem.variables[int(_flow_id(problem, k, t))]
            assert (v.lb, v.ub) == (-line.flow_limit, line.flow_limit)


def _flow_id(problem, k, t):
    for j, v in enumerate(problem.variables):
        if v.name == f"f[{k},{t},0]":
            return j
    raise KeyError


def test_reference_angle_fixed(two_bus_system, two_bus_profile):
    problem, index = build_scuc(two_bus_system, two_bus_profile)
    for t in range(two_bus_system.horizon):
        v = problem.variables[int(index.theta[0, t, 0])]
        assert v.lb == v.ub == 0.0


def test_two_identical_generators_objective():
    system, profile = single_bus_pair(demand=100.0)
    problem, _ = build_scuc(system, profile)
    sol = solve_milp(problem, TIGHT)
    assert sol.feasible
    assert sol.objective == pytest.approx(100.0, abs=1e-6)


def test_single_committed_unit_cannot_cover_reserve():
    # the reserve family sums over every unit including the covered one,
    # so a lone committed generator with positive output is infeasible
    gens = (Generator(0, 0, 0, 100, 1.0, 0.0, 0.0, 100, 100, 100, 100, 1, 1),)
    system = validate_system(PowerSystem(
        buses=(Bus(0),), generators=gens, lines=(), renewables=(),
        reference_bus=0, horizon=1,
        scenario_probabilities=np.array([1.0])))
    problem, _ = build_scuc(system, LoadProfile(demand=np.array([[50.0]])))
    assert solve_milp(problem, TIGHT).status == "infeasible"


def test_full_scuc_matches_bruteforce(two_bus_system):
    system = two_bus_system
    rng = np.random.default_rng(123)
    for _ in range(4):
        shares = rng.uniform(0.3, 0.7)
        total = rng.uniform(60, 170, size=4)
        demand = np.vstack([shares * total, (1 - shares) * total])
        problem, _ = build_scuc(system, LoadProfile(demand=demand))
        sol = solve_milp(problem, TIGHT)
        best, _ = scuc_bruteforce(system, demand)
        if not np.isfinite(best):
            assert sol.status == "infeasible"
        else:
            assert sol.feasible
            assert sol.objective == pytest.approx(best, abs=1e-6)


def test_extract_schedule(two_bus_system, two_bus_profile):
    problem, index = build_scuc(two_bus_system, two_bus_profile)
    sol = solve_milp(problem, TIGHT)
    solved = extract_schedule(sol, index)
    assert solved.schedule.u.shape == (3, 4)
    assert set(np.unique(solved.schedule.u)) <= {0, 1}
    # the startup relation holds on the extracted schedule
    assert (solved.v_solver >=
            solved.schedule.u - np.column_stack(
                [index.initial_on.astype(np.int8),
                 solved.schedule.u[:, :-1]])).all()
    assert solved.objective == pytest.approx(sol.objective)


def test_extract_schedule_rounds_near_integral(two_bus_system,
                                               two_bus_profile):
    problem, index = build_scuc(two_bus_system, two_bus_profile)
    sol = solve_milp(problem, TIGHT)
    sol.values[index.u[0, 0]] = 0.9999999
    solved = extract_schedule(sol, index)
    assert solved.schedule.u[0, 0] == 1


def test_extract_infeasible_raises(two_bus_system, two_bus_profile):
    problem, index = build_scuc(two_bus_system, two_bus_profile)
    from ucreduce.milp import MILPSolution
    bad = MILPSolution(status="infeasible", values=None, objective=None,
                       bound=None, gap=None, nodes_explored=1, solve_time=0)
    with pytest.raises(MILPError, match="infeasible"):
        extract_schedule(bad, index)


def test_balance_and_flow_residuals(two_bus_system, two_bus_profile):
    system, profile = two_bus_system, two_bus_profile
    problem, index = build_scuc(system, profile)
    sol = solve_milp(problem, TIGHT)
    solved = extract_schedule(sol, index)
    for n in range(system.n_buses):
        for t in range(system.horizon):
            lhs = solved.dispatch[system.gens_at_bus[n], t, 0].sum()
            lhs += solved.flow[system.lines_in[n], t, 0].sum()
            lhs -= solved.flow[system.lines_out[n], t, 0].sum()
            assert abs(lhs - profile.demand[n, t]) <= 1e-5
    for k, line in enumerate(system.lines):
        for t in range(system.horizon):
            want = line.susceptance * (
                solved.theta[line.from_bus, t, 0]
                - solved.theta[line.to_bus, t, 0])
            assert abs(solved.flow[k, t, 0] - want) <= 1e-5


def test_reserve_adequacy(two_bus_system, two_bus_profile):
    problem, index = build_scuc(two_bus_system, two_bus_profile)
    sol = solve_milp(problem, TIGHT)
    solved = extract_schedule(sol, index)
    total = solved.reserve[:, :, 0].sum(axis=0)
    need = solved.dispatch[:, :, 0] + solved.reserve[:, :, 0]
    assert (total[None, :] >= need - 1e-6).all()


# ----------------------------------------------------------------------
# stochastic structure


def test_stochastic_counts(stoch_system, stoch_profile):
    det, _ = build_scuc(stoch_system, stoch_profile)
    sto, index = build_scuc(stoch_system, stoch_profile,
                            ScucOptions(stochastic=True))
    kinds_det = [v.name.split("[")[0] for v in det.variables]
    kinds_sto = [v.name.split("[")[0] for v in sto.variables]
    for kind in ("u", "v"):
        assert kinds_det.count(kind) == kinds_sto.count(kind)
    for kind in ("P", "r", "f", "th"):
        assert kinds_sto.count(kind) == 3 * kinds_det.count(kind)
    assert index.p.shape == (3, 6, 3)


def test_stochastic_shared_commitment(stoch_system, stoch_profile):
    problem, index = build_scuc(stoch_system, stoch_profile,
                                ScucOptions(stochastic=True))
    sol = solve_milp(problem, SolveOptions(mip_gap=1e-6))
    assert sol.feasible
    # one u per (g, t): dispatch varies by scenario, commitment cannot
    assert index.u.ndim == 2
    solved = extract_schedule(sol, index)
    assert solved.dispatch.shape == (3, 6, 3)


def test_renewables_enter_balance(stoch_system, stoch_profile):
    problem, index = build_scuc(stoch_system, stoch_profile,
                                ScucOptions(stochastic=True))
    sol = solve_milp(problem, SolveOptions(mip_gap=1e-6))
    solved = extract_schedule(sol, index)
    renew = stoch_system.renewable_bus_output()
    for n in range(stoch_system.n_buses):
        for t in range(stoch_system.horizon):
            for s in range(3):
                lhs = solved.dispatch[stoch_system.gens_at_bus[n], t, s].sum()
                lhs += solved.flow[stoch_system.lines_in[n], t, s].sum()
                lhs -= solved.flow[stoch_system.lines_out[n], t, s].sum()
                want = stoch_profile.demand[n, t] - renew[n, t, s]
                assert abs(lhs - want) <= 1e-5


# ----------------------------------------------------------------------
# check_min_updown


def test_check_all_off_is_feasible(two_bus_system):
    u = np.zeros((3, 4), dtype=np.int8)
    assert check_min_updown(u, two_bus_system) == []


def test_check_flags_short_run(two_bus_system):
    u = np.zeros((3, 4), dtype=np.int8)
    u[0] = [0, 1, 0, 0]  # UT=2 for generator 0
    violations = check_min_updown(u, two_bus_system)
    assert violations and all(v.gen == 0 for v in violations)
    assert any(v.kind == "min_up" for v in violations)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=12, max_size=12),
       st.booleans())
def test_check_matches_window_oracle(bits, initial):
    system = make_two_bus_system()
    u = np.array(bits, dtype=np.int8).reshape(3, 4)
    init = np.array([initial, False, initial])
    schedule = CommitmentSchedule(u=u, initial_on=init)
    ok = check_min_updown(schedule, system) == []
    want = all(updown_ok(u[g], system.generators[g].min_up,
                         system.generators[g].min_down, init[g])
               for g in range(3))
    assert ok == want


def test_initial_state_carry_over(two_bus_system, two_bus_profile):
    # generator 0 has been ON for one period of its two-period minimum,
    # so it must stay ON in the first period
    options = ScucOptions(initial_on=np.array([True, False, False]),
                          initial_dispatch=np.array([40.0, 0.0, 0.0]),
                          initial_duration=np.array([1, 99, 99]))
    problem, index = build_scuc(two_bus_system, two_bus_profile, options)
    v = problem.variables[int(index.u[0, 0])]
    assert v.lb == v.ub == 1.0
    v1 = problem.variables[int(index.u[0, 1])]
    assert v1.lb == 0.0 and v1.ub == 1.0


# ----------------------------------------------------------------------
# apply_reduction


def _plan(fixed_mask, fixed_values, warm):
    return ReductionPlan(fixed_mask=np.asarray(fixed_mask, dtype=bool),
                         fixed_values=np.asarray(fixed_values,
                                                 dtype=np.int8),
                         warm=np.asarray(warm, dtype=np.int8))


def test_apply_reduction_empty_plan(two_bus_system, two_bus_profile):
    problem, index = build_scuc(two_bus_system, two_bus_profile)
    zeros = np.zeros((3, 4), dtype=np.int8)
    plan = _plan(np.zeros((3, 4)), zeros, zeros)
    reduced, warm = apply_reduction(problem, index, plan)
    assert reduced is problem  # nothing fixed
    sol_full = solve_milp(problem, TIGHT)
    sol_red = solve_milp(reduced, SolveOptions(mip_gap=1e-9,
                                               warm_start=warm))
    assert sol_red.objective == pytest.approx(sol_full.objective, abs=1e-5)


def test_apply_reduction_fix_optimum(two_bus_system, two_bus_profile):
    problem, index = build_scuc(two_bus_system, two_bus_profile)
    sol = solve_milp(problem, TIGHT)
    solved = extract_schedule(sol, index)
    plan = _plan(np.ones((3, 4)), solved.schedule.u, solved.schedule.u)
    reduced, warm = apply_reduction(problem, index, plan)
    free = reduced.free_binary_indices()
    assert len(free) == len(problem.free_binary_indices()) - 12
    red_sol = solve_milp(reduced, SolveOptions(mip_gap=1e-9,
                                               warm_start=warm))
    assert red_sol.objective == pytest.approx(sol.objective, abs=1e-6)
    # fully fixed commitment: the reduced solve is the LP dispatch
    lp_equiv = solve_lp(
        __import__("ucreduce.milp", fromlist=["fix_variables"])
        .fix_variables(reduced, warm))
    assert lp_equiv.objective == pytest.approx(red_sol.objective, abs=1e-6)


def test_apply_reduction_bad_shape(two_bus_system, two_bus_profile):
    problem, index = build_scuc(two_bus_system, two_bus_profile)
    zeros = np.zeros((2, 4), dtype=np.int8)
    plan = _plan(np.zeros((2, 4)), zeros, zeros)
    with pytest.raises(MILPError, match="plan shape"):
        apply_reduction(problem, index, plan)


def test_startup_matrix():
    u = np.array([[0, 1, 1, 0], [1, 1, 0, 1]], dtype=np.int8)
    v = startup_matrix(u, np.array([False, True]))
    np.testing.assert_array_equal(v, [[0, 1, 0, 0], [0, 0, 0, 1]])
