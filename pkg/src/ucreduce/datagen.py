"""Bus-correlated randomized profile generation and dataset assembly.

Each sample m perturbs the base profile with one system-wide factor
(1 + alpha_m) and per-bus-per-period factors (1 + beta_{n,t,m}), both drawn
uniformly from symmetric ranges.  The perturbed profile is solved as a full
unit-commitment MILP; only feasible samples are stored, then the collection
is shuffled and split 80/20 into training and test ids.

Random streams are derived per sample from (seed, m), so generation is
reproducible and embarrassingly parallel: the content of a dataset does not
depend on worker scheduling.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .grid import LoadProfile, PowerSystem
from .milp import SolveOptions, solve_milp
from .scuc import CommitmentSchedule, ScucOptions, build_scuc, extract_schedule

SCHEMA_VERSION = 1


class GenerationAborted(RuntimeError):
    """Too many consecutive infeasible draws."""


class DatasetFormatError(ValueError):
    """Persisted dataset is malformed or inconsistent with the system."""


@dataclass
class RandomConfig:
    alpha_range: float = 0.10  # system-wide shift, +/- fraction
    beta_range: float = 0.04   # per-bus-per-period composition, +/- fraction
    distribution: str = "uniform"
    seed: int = 0

    def __post_init__(self):
        if self.alpha_range < 0 or self.beta_range < 0:
            raise ValueError("perturbation ranges must be >= 0")
        if self.distribution != "uniform":
            raise ValueError("only the uniform distribution is supported")


@dataclass
class Sample:
    id: int
    demand: np.ndarray  # [bus, period]
    schedule: CommitmentSchedule
    objective: float
    solve_time: float
    feasible: bool = True


@dataclass
class Dataset:
    samples: list[Sample]
    split: tuple[tuple[int, ...], tuple[int, ...]]  # (train ids, test ids)
    base_profile: LoadProfile
    config: RandomConfig
    stochastic: bool = False
    initial_on: np.ndarray | None = None
    discarded: int = 0

    _by_id: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._by_id = {s.id: s for s in self.samples}

    def sample(self, sid: int) -> Sample:
        return self._by_id[sid]

    @property
    def train_samples(self) -> list[Sample]:
        return [self._by_id[i] for i in self.split[0]]

    @property
    def test_samples(self) -> list[Sample]:
        return [self._by_id[i] for i in self.split[1]]


# ----------------------------------------------------------------------


def perturb_profile(base: LoadProfile, config: RandomConfig,
                    m: int) -> LoadProfile:
    """Sample m of the perturbation: d * (1 + beta_{n,t}) * (1 + alpha)."""
    rng = np.random.default_rng([config.seed, 1, m])
    alpha = rng.uniform(-config.alpha_range, config.alpha_range)
    beta = rng.uniform(-config.beta_range, config.beta_range,
                       size=base.demand.shape)
    demand = base.demand * (1.0 + beta) * (1.0 + alpha)
    np.clip(demand, 0.0, None, out=demand)
    return LoadProfile(demand=demand)


def _solve_draw(args):
    (system, base, config, scuc_options, solve_options, warm, m) = args
    profile = perturb_profile(base, config, m)
    problem, index = build_scuc(system, profile, scuc_options)
    opts = SolveOptions(**{**solve_options.__dict__, "warm_start": warm})
    sol = solve_milp(problem, opts)
    if not sol.feasible:
        return m, None
    solved = extract_schedule(sol, index)
    return m, Sample(id=m, demand=profile.demand,
                     schedule=solved.schedule,
                     objective=solved.objective,
                     solve_time=sol.solve_time)


def generate_dataset(system: PowerSystem, base: LoadProfile,
                     config: RandomConfig, target_count: int,
                     scuc_options: ScucOptions | None = None,
                     solve_options: SolveOptions | None = None,
                     jobs: int = 1) -> Dataset:
    """Draw perturbed profiles and keep the first ``target_count`` feasible
    ones (by draw index).  Aborts if more than 10x the target of
    consecutive draws come back infeasible."""
    scuc_options = scuc_options or ScucOptions()
    solve_options = solve_options or SolveOptions()
    if target_count < 1:
        raise ValueError("target_count must be >= 1")

    # the base profile must be solvable; its schedule warm-starts every draw
    problem, index = build_scuc(system, base, scuc_options)
    base_sol = solve_milp(problem, solve_options)
    if not base_sol.feasible:
        raise GenerationAborted("the base profile is SCUC-infeasible")
    base_sched = extract_schedule(base_sol, index)
    warm = {}
    G, T = index.u.shape
    for g in range(G):
        for t in range(T):
            warm[int(index.u[g, t])] = int(base_sched.schedule.u[g, t])
            warm[int(index.v[g, t])] = int(base_sched.schedule.v[g, t])

    samples: list[Sample] = []
    discarded = 0
    consecutive = 0
    limit = 10 * target_count
    next_m = 0
    chunk = max(4 * jobs, 8)
    pool = ProcessPoolExecutor(max_workers=jobs) if jobs > 1 else None
    try:
        while len(samples) < target_count:
            ms = range(next_m, next_m + chunk)
            next_m += chunk
            args = [(system, base, config, scuc_options, solve_options,
                     warm, m) for m in ms]
            results = (pool.map(_solve_draw, args) if pool
                       else map(_solve_draw, args))
            for m, sample in results:
                if len(samples) >= target_count:
                    break
                if sample is None:
                    discarded += 1
                    consecutive += 1
                    if consecutive > limit:
                        raise GenerationAborted(
                            f"{consecutive} consecutive infeasible draws "
                            f"(limit {limit}); check the base profile and "
                            f"perturbation ranges")
                    continue
                consecutive = 0
                samples.append(sample)
    finally:
        if pool is not None:
            pool.shutdown()

    ids = [s.id for s in samples]
    rng = np.random.default_rng([config.seed, 2])
    perm = rng.permutation(len(ids))
    n_train = round(0.8 * len(ids))
    train = tuple(ids[i] for i in perm[:n_train])
    test = tuple(ids[i] for i in perm[n_train:])
    init_on, _, _, _ = scuc_options.resolve(system)
    return Dataset(samples=samples, split=(train, test), base_profile=base,
                   config=config, stochastic=scuc_options.stochastic,
                   initial_on=init_on, discarded=discarded)


# ----------------------------------------------------------------------
# persistence


def _write_matrix_csv(path, tag: str, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        first = rows[0][2]
        fh.write(f"sample_id,{tag},"
                 + ",".join(f"t{t + 1}" for t in range(len(first))) + "\n")
        for sid, unit, vals in rows:
            fh.write(f"{sid},{unit}," + ",".join(vals) + "\n")


def save_dataset(dataset: Dataset, outdir) -> None:
    from pathlib import Path
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)

    drows = []
    srows = []
    for s in dataset.samples:
        for b in range(s.demand.shape[0]):
            drows.append((s.id, b, [repr(float(v)) for v in s.demand[b]]))
        for g in range(s.schedule.u.shape[0]):
            srows.append((s.id, g, [str(int(v)) for v in s.schedule.u[g]]))
    _write_matrix_csv(out / "demands.csv", "bus", drows)
    _write_matrix_csv(out / "schedules.csv", "gen", srows)

    from .grid import save_profile
    save_profile(dataset.base_profile, out / "base_profile.csv")

    manifest = {
        "schema_version": SCHEMA_VERSION,
        "seed": dataset.config.seed,
        "alpha_range": dataset.config.alpha_range,
        "beta_range": dataset.config.beta_range,
        "distribution": dataset.config.distribution,
        "counts": {"feasible": len(dataset.samples),
                   "discarded": dataset.discarded},
        "split": {"train": list(dataset.split[0]),
                  "test": list(dataset.split[1])},
        "objectives": {str(s.id): s.objective for s in dataset.samples},
        "solve_times": {str(s.id): s.solve_time for s in dataset.samples},
        "stochastic": dataset.stochastic,
        "initial_on": ([] if dataset.initial_on is None
                       else [int(v) for v in dataset.initial_on]),
    }
    with open(out / "manifest.json", "w", encoding="utf-8",
              newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_matrix_csv(path, tag: str, horizon: int):
    out: dict[int, dict[int, list[float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        want = ["sample_id", tag] + [f"t{t + 1}" for t in range(horizon)]
        if header != want:
            raise DatasetFormatError(f"{path}: unexpected header {header!r}")
        for ln, row in enumerate(reader, start=2):
            if not row:
                continue
            sid = row[0]
            try:
                sid_i = int(sid)
                unit = int(row[1])
                vals = [float(v) for v in row[2:]]
                if len(vals) != horizon:
                    raise ValueError(f"expected {horizon} periods")
            except ValueError as exc:
                raise DatasetFormatError(
                    f"{path}:{ln}: sample {sid}: {exc}") from exc
            out.setdefault(sid_i, {})[unit] = vals
    return out


def load_dataset(path, system: PowerSystem) -> Dataset:
    from pathlib import Path
    from .grid import load_profile
    p = Path(path)
    try:
        with open(p / "manifest.json", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetFormatError(f"{p}: cannot read manifest: {exc}") from exc
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise DatasetFormatError(
            f"dataset schema version {manifest.get('schema_version')} "
            f"does not match {SCHEMA_VERSION}")

    demands = _read_matrix_csv(p / "demands.csv", "bus", system.horizon)
    schedules = _read_matrix_csv(p / "schedules.csv", "gen", system.horizon)
    init_list = manifest.get("initial_on") or []
    init_on = (np.array(init_list, dtype=bool) if init_list
               else np.zeros(len(system.generators), dtype=bool))

    n_gens = len(system.generators)
    samples = []
    for sid in sorted(demands):
        drow = demands[sid]
        if sorted(drow) != list(range(system.n_buses)):
            raise DatasetFormatError(
                f"sample {sid}: demand rows do not cover every bus "
                f"(expected {system.n_buses} buses)")
        srow = schedules.get(sid)
        if srow is None or sorted(srow) != list(range(n_gens)):
            raise DatasetFormatError(
                f"sample {sid}: schedule rows do not cover every generator")
        demand = np.array([drow[b] for b in range(system.n_buses)])
        u = np.array([srow[g] for g in range(n_gens)])
        if not np.isin(u, (0.0, 1.0)).all():
            raise DatasetFormatError(f"sample {sid}: non-binary schedule")
        try:
            objective = float(manifest["objectives"][str(sid)])
            solve_time = float(manifest["solve_times"][str(sid)])
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetFormatError(
                f"sample {sid}: missing manifest entry: {exc}") from exc
        samples.append(Sample(
            id=sid, demand=demand,
            schedule=CommitmentSchedule(u=u.astype(np.int8),
                                        initial_on=init_on),
            objective=objective, solve_time=solve_time))

    split = (tuple(manifest["split"]["train"]),
             tuple(manifest["split"]["test"]))
    known = {s.id for s in samples}
    for sid in split[0] + split[1]:
        if sid not in known:
            raise DatasetFormatError(f"split references unknown sample {sid}")
    config = RandomConfig(alpha_range=manifest["alpha_range"],
                          beta_range=manifest["beta_range"],
                          distribution=manifest["distribution"],
                          seed=manifest["seed"])
    base = load_profile(p / "base_profile.csv", system)
    return Dataset(samples=samples, split=split, base_profile=base,
                   config=config, stochastic=bool(manifest["stochastic"]),
                   initial_on=init_on,
                   discarded=int(manifest["counts"]["discarded"]))
