import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ucreduce.grid import (Bus, Generator, Line, LoadProfile, ParseError,
                           PowerSystem, RenewableUnit, ValidationError,
                           load_profile, load_system, save_profile,
                           save_system, validate_system)

from conftest import make_stochastic_system, make_two_bus_system

MINIMAL = """
[meta]
horizon = 2

[[buses]]
id = 1

[[generators]]
id = 0
bus = 1
p_min = 0.0
p_max = 50.0
cost_linear = 10.0
cost_no_load = 1.0
cost_startup = 2.0
ramp_hourly = 50.0
ramp_startup = 50.0
ramp_shutdown = 50.0
ramp_10min = 25.0
min_up = 1
min_down = 1
"""


def test_minimal_system(tmp_path):
    path = tmp_path / "mini.toml"
    path.write_text(MINIMAL)
    system = load_system(path)
    assert system.n_buses == 1
    assert len(system.generators) == 1
    assert len(system.lines) == 0
    assert system.reference_bus == 0  # defaults to the first bus
    assert system.buses[0].id == 0  # reindexed to 0..N-1


def test_dangling_line_reference(tmp_path):
    text = MINIMAL + """
[[lines]]
id = 7
from_bus = 1
to_bus = 99
susceptance = 5.0
flow_limit = 10.0
"""
    path = tmp_path / "bad.toml"
    path.write_text(text)
    with pytest.raises(ValidationError, match="lines\\[0\\].*99"):
        load_system(path)


def test_parse_error_location(tmp_path):
    path = tmp_path / "broken.toml"
    path.write_text("[meta\nhorizon = 2\n")
    with pytest.raises(ParseError):
        load_system(path)


def test_missing_field_named(tmp_path):
    path = tmp_path / "missing.toml"
    path.write_text(MINIMAL.replace("p_max = 50.0\n", ""))
    with pytest.raises(ParseError, match="p_max"):
        load_system(path)


def test_generator_invariants():
    system = make_two_bus_system()
    bad = Generator(9, 0, p_min=10, p_max=5, cost_linear=1, cost_no_load=1,
                    cost_startup=1, ramp_hourly=1, ramp_startup=1,
                    ramp_shutdown=1, ramp_10min=1, min_up=1, min_down=1)
    broken = PowerSystem(buses=system.buses,
                         generators=system.generators + (bad,),
                         lines=system.lines, renewables=(),
                         reference_bus=0, horizon=4,
                         scenario_probabilities=np.array([1.0]))
    with pytest.raises(ValidationError, match="p_min <= p_max"):
        validate_system(broken)


def test_probabilities_must_sum_to_one():
    system = make_two_bus_system()
    broken = PowerSystem(buses=system.buses, generators=system.generators,
                         lines=system.lines, renewables=(),
                         reference_bus=0, horizon=4,
                         scenario_probabilities=np.array([0.5, 0.4]))
    with pytest.raises(ValidationError, match="sum to 1"):
        validate_system(broken)


def test_roundtrip_two_bus(tmp_path):
    system = make_two_bus_system()
    path = tmp_path / "sys.toml"
    save_system(system, path)
    back = load_system(path)
    assert back.buses == system.buses
    assert back.generators == system.generators
    assert back.lines == system.lines
    assert back.horizon == system.horizon
    assert back.reference_bus == system.reference_bus
    np.testing.assert_array_equal(back.scenario_probabilities,
                                  system.scenario_probabilities)


def test_roundtrip_stochastic(tmp_path):
    system = make_stochastic_system()
    path = tmp_path / "sys.toml"
    save_system(system, path)
    back = load_system(path)
    assert len(back.renewables) == 2
    for a, b in zip(back.renewables, system.renewables):
        assert a.id == b.id and a.bus == b.bus
        np.testing.assert_array_equal(a.output, b.output)


def test_topology_closure():
    # incoming and outgoing sets partition the lines incident to each bus
    system = make_stochastic_system()
    for b in range(system.n_buses):
        incident = {i for i, k in enumerate(system.lines)
                    if b in (k.from_bus, k.to_bus)}
        inc = set(system.lines_in[b])
        out = set(system.lines_out[b])
        assert inc | out == incident
        assert not inc & out


def test_load_profile_roundtrip(tmp_path):
    system = make_two_bus_system()
    demand = np.array([[10.0, 20.5, 30.25, 5.125],
                       [1.0, 2.0, 3.0, 4.0]])
    save_profile(LoadProfile(demand=demand), tmp_path / "p.csv")
    prof = load_profile(tmp_path / "p.csv", system)
    np.testing.assert_array_equal(prof.demand, demand)


def test_load_profile_missing_bus(tmp_path):
    system = make_two_bus_system()
    (tmp_path / "p.csv").write_text("bus,t1,t2,t3,t4\n0,1,2,3,4\n")
    with pytest.raises(ValidationError, match="missing demand rows"):
        load_profile(tmp_path / "p.csv", system)


def test_load_profile_dimension_mismatch(tmp_path):
    system = make_two_bus_system()
    (tmp_path / "p.csv").write_text("bus,t1,t2\n0,1,2\n1,3,4\n")
    with pytest.raises(ParseError, match="header"):
        load_profile(tmp_path / "p.csv", system)


def test_load_profile_negative_demand(tmp_path):
    system = make_two_bus_system()
    (tmp_path / "p.csv").write_text(
        "bus,t1,t2,t3,t4\n0,1,2,3,4\n1,1,-5.0,3,4\n")
    with pytest.raises(ValidationError, match="negative demand"):
        load_profile(tmp_path / "p.csv", system)


def test_net_load_subtracts_renewables():
    system = make_stochastic_system()
    demand = np.full((2, 6), 50.0)
    net = LoadProfile(demand=demand).net_load(system)
    assert net.shape == (2, 6, 3)
    expected = demand[:, :, None] - system.renewable_bus_output()
    np.testing.assert_allclose(net, expected)


@settings(max_examples=25, deadline=None)
@given(st.floats(min_value=0.0, max_value=1e6,
                 allow_nan=False).map(lambda x: round(x, 6)),
       st.integers(min_value=1, max_value=6))
def test_profile_roundtrip_values(tmp_path_factory, value, horizon):
    system = make_two_bus_system(horizon=horizon)
    demand = np.full((2, horizon), value)
    path = tmp_path_factory.mktemp("prof") / "p.csv"
    save_profile(LoadProfile(demand=demand), path)
    prof = load_profile(path, system)
    np.testing.assert_array_equal(prof.demand, demand)
