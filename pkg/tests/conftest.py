import numpy as np
import pytest

from ucreduce.grid import (Bus, Generator, Line, LoadProfile, PowerSystem,
                           RenewableUnit, validate_system)

# Hourly ramp equals p_max on every fixture generator so the hourly-ramp
# rows only bind at startup/shutdown; the enumeration oracles rely on that
# (minimal start-up indicators are then always optimal).


def _gen(i, bus, pmin, pmax, c, nl, su, rsu, rsd, r10, ut, dt):
    return Generator(i, bus, pmin, pmax, c, nl, su, pmax, rsu, rsd, r10,
                     ut, dt)


def make_two_bus_system(horizon=4):
    """Desk-scale system: 2 buses, 3 generators, 1 line."""
    buses = (Bus(0, "north"), Bus(1, "south"))
    gens = (
        _gen(0, 0, 0, 100, 16.3, 5.1, 8.3, 80, 80, 55, 2, 2),
        _gen(1, 0, 0, 80, 27.9, 3.7, 6.1, 60, 60, 45, 2, 1),
        _gen(2, 1, 0, 60, 43.1, 1.9, 2.9, 60, 60, 60, 1, 1),
    )
    lines = (Line(0, 0, 1, susceptance=10.0, flow_limit=90.0),)
    system = PowerSystem(buses=buses, generators=gens, lines=lines,
                         renewables=(), reference_bus=0, horizon=horizon,
                         scenario_probabilities=np.array([1.0]),
                         name="twobus")
    return validate_system(system)


def make_two_bus_profile(horizon=4, peak=115.0):
    shape = np.array([0.65, 0.85, 1.0, 0.75])[:horizon]
    return LoadProfile(demand=np.outer(np.array([0.6, 0.4]), shape) * peak)


def make_desk12_system():
    """Criterion-5 scale: two-bus topology, 5 generators, 12 periods."""
    buses = (Bus(0, "north"), Bus(1, "south"))
    gens = (
        _gen(0, 0, 0, 120, 16.3, 7.1, 11.3, 95, 95, 60, 3, 3),
        _gen(1, 0, 0, 90, 24.7, 5.9, 9.1, 75, 75, 55, 2, 2),
        _gen(2, 1, 0, 70, 33.9, 4.7, 7.3, 60, 60, 50, 2, 2),
        _gen(3, 1, 0, 55, 45.1, 2.9, 4.1, 55, 55, 55, 1, 1),
        _gen(4, 0, 0, 45, 56.3, 2.3, 3.1, 45, 45, 45, 1, 1),
    )
    lines = (Line(0, 0, 1, susceptance=12.0, flow_limit=150.0),)
    system = PowerSystem(buses=buses, generators=gens, lines=lines,
                         renewables=(), reference_bus=0, horizon=12,
                         scenario_probabilities=np.array([1.0]),
                         name="desk12")
    return validate_system(system)


def make_desk12_profile(peak=250.0):
    shape = np.array([0.62, 0.60, 0.63, 0.72, 0.84, 0.94,
                      1.00, 0.97, 0.90, 0.84, 0.74, 0.66])
    return LoadProfile(demand=np.outer(np.array([0.58, 0.42]), shape) * peak)


def make_stochastic_system(horizon=6, scenarios=3, identical=False):
    """Two renewable units, three scenarios, short horizon."""
    buses = (Bus(0, "north"), Bus(1, "south"))
    gens = (
        _gen(0, 0, 0, 110, 16.3, 6.1, 9.7, 90, 90, 55, 2, 2),
        _gen(1, 0, 0, 80, 26.9, 4.3, 6.7, 65, 65, 45, 2, 2),
        _gen(2, 1, 0, 60, 41.3, 2.1, 3.1, 60, 60, 60, 1, 1),
    )
    lines = (Line(0, 0, 1, susceptance=12.0, flow_limit=120.0),)
    rng = np.random.default_rng(11)
    outputs = []
    for w in range(2):
        shape = 14.0 + 10.0 * rng.random(horizon)
        if identical:
            out = np.repeat(shape[:, None], scenarios, axis=1)
        else:
            out = shape[:, None] * (0.55 + 0.9 * rng.random((1, scenarios)))
        outputs.append(np.round(out, 3))
    renewables = (RenewableUnit(0, 0, outputs[0]),
                  RenewableUnit(1, 1, outputs[1]))
    system = PowerSystem(buses=buses, generators=gens, lines=lines,
                         renewables=renewables, reference_bus=0,
                         horizon=horizon,
                         scenario_probabilities=np.full(scenarios,
                                                        1.0 / scenarios),
                         name="stoch")
    return validate_system(system)


def make_stochastic_profile(horizon=6, peak=125.0):
    shape = np.array([0.66, 0.78, 0.94, 1.0, 0.88, 0.72])[:horizon]
    return LoadProfile(demand=np.outer(np.array([0.55, 0.45]), shape) * peak)


@pytest.fixture(scope="session")
def two_bus_system():
    return make_two_bus_system()


@pytest.fixture(scope="session")
def two_bus_profile():
    return make_two_bus_profile()


@pytest.fixture(scope="session")
def desk12_system():
    return make_desk12_system()


@pytest.fixture(scope="session")
def desk12_profile():
    return make_desk12_profile()


@pytest.fixture(scope="session")
def stoch_system():
    return make_stochastic_system()


@pytest.fixture(scope="session")
def stoch_profile():
    return make_stochastic_profile()
