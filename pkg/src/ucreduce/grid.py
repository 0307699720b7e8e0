"""Power-system data model and file ingestion.

Systems are described in a TOML file with top-level sections ``buses``,
``generators``, ``lines``, ``renewables`` and ``meta`` (see
docs/file_formats.md for the schema).  Bus ids in the file may be arbitrary
unique integers; after ingestion buses carry contiguous internal indices
0..N-1 and every cross-reference is resolved to those indices.  Load
profiles are CSV tables ``bus,t1,...,tT`` in MW.

All objects are immutable after construction (arrays are marked read-only),
so they can be shared freely across threads and worker processes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib


class ParseError(ValueError):
    """File could not be parsed; message carries the location."""


class ValidationError(ValueError):
    """Parsed data violates a model invariant."""


@dataclass(frozen=True)
class Bus:
    id: int
    name: str = ""


@dataclass(frozen=True)
class Generator:
    id: int
    bus: int
    p_min: float
    p_max: float
    cost_linear: float
    cost_no_load: float
    cost_startup: float
    ramp_hourly: float
    ramp_startup: float
    ramp_shutdown: float
    ramp_10min: float
    min_up: int
    min_down: int


@dataclass(frozen=True)
class Line:
    id: int
    from_bus: int  # sending
    to_bus: int    # receiving
    susceptance: float
    flow_limit: float


@dataclass(frozen=True, eq=False)
class RenewableUnit:
    id: int
    bus: int
    output: np.ndarray  # [period, scenario] MW


@dataclass(eq=False)
class PowerSystem:
    buses: tuple[Bus, ...]
    generators: tuple[Generator, ...]
    lines: tuple[Line, ...]
    renewables: tuple[RenewableUnit, ...]
    reference_bus: int
    horizon: int
    scenario_probabilities: np.ndarray
    name: str = ""
    # derived topology, filled by validate()
    gens_at_bus: tuple[tuple[int, ...], ...] = field(default=(), repr=False)
    lines_in: tuple[tuple[int, ...], ...] = field(default=(), repr=False)
    lines_out: tuple[tuple[int, ...], ...] = field(default=(), repr=False)
    renew_at_bus: tuple[tuple[int, ...], ...] = field(default=(), repr=False)

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def n_scenarios(self) -> int:
        return len(self.scenario_probabilities)

    def renewable_bus_output(self) -> np.ndarray:
        """Total renewable output aggregated per bus, [bus, period, scenario]."""
        out = np.zeros((self.n_buses, self.horizon, self.n_scenarios))
        for w in self.renewables:
            out[w.bus] += w.output
        return out


@dataclass(eq=False)
class LoadProfile:
    demand: np.ndarray  # [bus, period] MW
    scenario_demand: np.ndarray | None = None  # optional [bus, period, scenario]

    def net_load(self, system: PowerSystem) -> np.ndarray:
        """Nodal net load per scenario: demand minus renewable output."""
        if self.scenario_demand is not None:
            return self.scenario_demand
        return self.demand[:, :, None] - system.renewable_bus_output()


# ----------------------------------------------------------------------
# validation


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    a.flags.writeable = False
    return a


def validate_system(system: PowerSystem) -> PowerSystem:
    """Check every invariant and fill in the derived topology sets."""
    n = system.n_buses
    if n == 0:
        raise ValidationError("system has no buses")
    ids = [b.id for b in system.buses]
    if ids != list(range(n)):
        raise ValidationError("bus ids are not contiguous 0..N-1")
    if system.horizon < 1:
        raise ValidationError("horizon must be >= 1")
    if not 0 <= system.reference_bus < n:
        raise ValidationError(
            f"reference_bus {system.reference_bus} is not a bus")
    pi = np.asarray(system.scenario_probabilities, dtype=float)
    if pi.ndim != 1 or len(pi) < 1:
        raise ValidationError("scenario_probabilities must be a sequence")
    if abs(float(pi.sum()) - 1.0) > 1e-9:
        raise ValidationError("scenario probabilities must sum to 1")
    for g in system.generators:
        tag = f"generator {g.id}"
        if not 0 <= g.bus < n:
            raise ValidationError(f"{tag}: bus {g.bus} is not a declared bus")
        if not 0 <= g.p_min <= g.p_max:
            raise ValidationError(f"{tag}: requires 0 <= p_min <= p_max")
        for fname in ("ramp_hourly", "ramp_startup", "ramp_shutdown",
                      "ramp_10min"):
            if getattr(g, fname) < 0:
                raise ValidationError(f"{tag}: {fname} must be >= 0")
        for fname in ("cost_linear", "cost_no_load", "cost_startup"):
            if getattr(g, fname) < 0:
                raise ValidationError(f"{tag}: {fname} must be >= 0")
        if g.min_up < 1 or g.min_down < 1:
            raise ValidationError(f"{tag}: min_up and min_down must be >= 1")
    for k in system.lines:
        tag = f"line {k.id}"
        for end, val in (("from_bus", k.from_bus), ("to_bus", k.to_bus)):
            if not 0 <= val < n:
                raise ValidationError(
                    f"{tag}: {end} {val} is not a declared bus")
        if k.from_bus == k.to_bus:
            raise ValidationError(f"{tag}: from_bus equals to_bus")
        if k.flow_limit <= 0:
            raise ValidationError(f"{tag}: flow_limit must be > 0")
        if k.susceptance == 0:
            raise ValidationError(f"{tag}: susceptance must be nonzero")
    for w in system.renewables:
        tag = f"renewable {w.id}"
        if not 0 <= w.bus < n:
            raise ValidationError(f"{tag}: bus {w.bus} is not a declared bus")
        if w.output.shape != (system.horizon, system.n_scenarios):
            raise ValidationError(
                f"{tag}: output shape {w.output.shape} does not match "
                f"(horizon, scenarios) = ({system.horizon}, "
                f"{system.n_scenarios})")
        if (w.output < 0).any():
            raise ValidationError(f"{tag}: outputs must be >= 0")

    system.gens_at_bus = tuple(
        tuple(i for i, g in enumerate(system.generators) if g.bus == b)
        for b in range(n))
    system.lines_in = tuple(
        tuple(i for i, k in enumerate(system.lines) if k.to_bus == b)
        for b in range(n))
    system.lines_out = tuple(
        tuple(i for i, k in enumerate(system.lines) if k.from_bus == b)
        for b in range(n))
    system.renew_at_bus = tuple(
        tuple(i for i, w in enumerate(system.renewables) if w.bus == b)
        for b in range(n))
    return system


def validate_profile(profile: LoadProfile, system: PowerSystem) -> LoadProfile:
    d = profile.demand
    if d.shape != (system.n_buses, system.horizon):
        raise ValidationError(
            f"demand shape {d.shape} does not match (buses, horizon) = "
            f"({system.n_buses}, {system.horizon})")
    if (d < 0).any():
        b, t = np.argwhere(d < 0)[0]
        raise ValidationError(f"negative demand at bus {b}, period {t + 1}")
    if profile.scenario_demand is not None:
        sd = profile.scenario_demand
        want = (system.n_buses, system.horizon, system.n_scenarios)
        if sd.shape != want:
            raise ValidationError(
                f"scenario demand shape {sd.shape} does not match {want}")
    return profile


# ----------------------------------------------------------------------
# system file IO


def _get(table: dict, key: str, where: str, cast=None):
    if key not in table:
        raise ParseError(f"{where}: missing field '{key}'")
    val = table[key]
    if cast is not None:
        try:
            return cast(val)
        except (TypeError, ValueError) as exc:
            raise ParseError(f"{where}: field '{key}': {exc}") from exc
    return val


def load_system(path) -> PowerSystem:
    """Parse and validate a system description file."""
    with open(path, "rb") as fh:
        try:
            doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from exc

    meta = doc.get("meta", {})
    horizon = _get(meta, "horizon", "meta", int)
    raw_buses = doc.get("buses", [])
    if not raw_buses:
        raise ParseError(f"{path}: no [[buses]] section")
    bus_map: dict[int, int] = {}
    buses = []
    for pos, tb in enumerate(raw_buses):
        bid = _get(tb, "id", f"buses[{pos}]", int)
        if bid in bus_map:
            raise ValidationError(f"duplicate bus id {bid}")
        bus_map[bid] = pos
        buses.append(Bus(id=pos, name=str(tb.get("name", ""))))

    def resolve(bid: int, where: str) -> int:
        if bid not in bus_map:
            raise ValidationError(f"{where}: bus {bid} is not a declared bus")
        return bus_map[bid]

    generators = []
    for pos, tg in enumerate(doc.get("generators", [])):
        where = f"generators[{pos}]"
        generators.append(Generator(
            id=_get(tg, "id", where, int),
            bus=resolve(_get(tg, "bus", where, int), where),
            p_min=_get(tg, "p_min", where, float),
            p_max=_get(tg, "p_max", where, float),
            cost_linear=_get(tg, "cost_linear", where, float),
            cost_no_load=_get(tg, "cost_no_load", where, float),
            cost_startup=_get(tg, "cost_startup", where, float),
            ramp_hourly=_get(tg, "ramp_hourly", where, float),
            ramp_startup=_get(tg, "ramp_startup", where, float),
            ramp_shutdown=_get(tg, "ramp_shutdown", where, float),
            ramp_10min=_get(tg, "ramp_10min", where, float),
            min_up=_get(tg, "min_up", where, int),
            min_down=_get(tg, "min_down", where, int),
        ))
    lines = []
    for pos, tl in enumerate(doc.get("lines", [])):
        where = f"lines[{pos}]"
        lines.append(Line(
            id=_get(tl, "id", where, int),
            from_bus=resolve(_get(tl, "from_bus", where, int), where),
            to_bus=resolve(_get(tl, "to_bus", where, int), where),
            susceptance=_get(tl, "susceptance", where, float),
            flow_limit=_get(tl, "flow_limit", where, float),
        ))
    renewables = []
    for pos, tw in enumerate(doc.get("renewables", [])):
        where = f"renewables[{pos}]"
        out = np.asarray(_get(tw, "output", where), dtype=float)
        if out.ndim == 1:
            out = out[:, None]
        renewables.append(RenewableUnit(
            id=_get(tw, "id", where, int),
            bus=resolve(_get(tw, "bus", where, int), where),
            output=_freeze(out),
        ))

    if "scenario_probabilities" in meta:
        pi = np.asarray(meta["scenario_probabilities"], dtype=float)
    elif renewables:
        s = renewables[0].output.shape[1]
        pi = np.full(s, 1.0 / s)
    else:
        pi = np.array([1.0])

    ref = meta.get("reference_bus")
    ref_idx = 0 if ref is None else resolve(int(ref), "meta.reference_bus")
    system = PowerSystem(
        buses=tuple(buses),
        generators=tuple(generators),
        lines=tuple(lines),
        renewables=tuple(renewables),
        reference_bus=ref_idx,
        horizon=horizon,
        scenario_probabilities=_freeze(pi),
        name=str(meta.get("name", "")),
    )
    return validate_system(system)


def _toml_val(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        r = repr(float(v))
        return r if any(c in r for c in ".einf") else r + ".0"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_toml_val(e) for e in v) + "]"
    raise TypeError(f"cannot serialise {type(v)}")


def save_system(system: PowerSystem, path) -> None:
    """Write a system file that load_system round-trips exactly."""
    out = ["[meta]",
           f"horizon = {system.horizon}",
           f"reference_bus = {system.reference_bus}",
           "scenario_probabilities = "
           + _toml_val(system.scenario_probabilities)]
    if system.name:
        out.append(f"name = {_toml_val(system.name)}")
    for b in system.buses:
        out += ["", "[[buses]]", f"id = {b.id}"]
        if b.name:
            out.append(f"name = {_toml_val(b.name)}")
    for g in system.generators:
        out += ["", "[[generators]]"]
        for fname in ("id", "bus", "p_min", "p_max", "cost_linear",
                      "cost_no_load", "cost_startup", "ramp_hourly",
                      "ramp_startup", "ramp_shutdown", "ramp_10min",
                      "min_up", "min_down"):
            out.append(f"{fname} = {_toml_val(getattr(g, fname))}")
    for k in system.lines:
        out += ["", "[[lines]]"]
        for fname in ("id", "from_bus", "to_bus", "susceptance",
                      "flow_limit"):
            out.append(f"{fname} = {_toml_val(getattr(k, fname))}")
    for w in system.renewables:
        out += ["", "[[renewables]]", f"id = {w.id}", f"bus = {w.bus}",
                f"output = {_toml_val([list(row) for row in w.output])}"]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(out) + "\n")


# ----------------------------------------------------------------------
# load profile IO


def load_profile(path, system: PowerSystem) -> LoadProfile:
    """Read a nodal demand CSV; every bus must appear exactly once."""
    horizon = system.horizon
    demand = np.full((system.n_buses, horizon), np.nan)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        expected = ["bus"] + [f"t{t + 1}" for t in range(horizon)]
        if [h.strip() for h in header] != expected:
            raise ParseError(
                f"{path}: header {header!r} does not match "
                f"'bus,t1,...,t{horizon}'")
        for ln, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != horizon + 1:
                raise ParseError(
                    f"{path}:{ln}: expected {horizon + 1} fields, "
                    f"got {len(row)}")
            try:
                bus = int(row[0])
                vals = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise ParseError(f"{path}:{ln}: {exc}") from exc
            if not 0 <= bus < system.n_buses:
                raise ValidationError(
                    f"{path}:{ln}: bus {bus} is not a declared bus")
            if not np.isnan(demand[bus]).all():
                raise ValidationError(f"{path}:{ln}: duplicate row for "
                                      f"bus {bus}")
            demand[bus] = vals
    missing = np.flatnonzero(np.isnan(demand).any(axis=1))
    if len(missing):
        raise ValidationError(
            f"{path}: missing demand rows for buses {missing.tolist()}")
    profile = LoadProfile(demand=_freeze(demand))
    return validate_profile(profile, system)


def save_profile(profile: LoadProfile, path) -> None:
    n, horizon = profile.demand.shape
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("bus," + ",".join(f"t{t + 1}" for t in range(horizon)) + "\n")
        for b in range(n):
            fh.write(str(b) + ","
                     + ",".join(repr(float(v)) for v in profile.demand[b])
                     + "\n")
