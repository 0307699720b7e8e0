"""Post-processing of predictions into reduction plans, and experiment runs.

A plan classifies every (generator, period) as fixed or flexible.  With the
feasibility layer active: generators whose ON probability is extreme in
every period are fixed outright; remaining rows are repaired, and
individual periods are fixed where an extreme probability agrees with the
repaired value; everything else stays flexible with the repaired value as a
warm start.  The no-repair variant fixes on probability alone.

``run_experiment`` solves the full model fresh per test sample (the
baseline), solves the reduced model, and aggregates base-normalized cost
and time plus infeasible counts.  Reduced-solve time includes the repair
time; infeasible reduced models are counted but excluded from the cost and
time averages.  All times are the solver's deterministic work estimate, so
report files are byte-reproducible.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .datagen import Dataset, RandomConfig, Sample, perturb_profile
from .feaslayer import FLInstance, repair_row
from .grid import LoadProfile, PowerSystem
from .milp import SolveOptions, solve_milp
from .predictors import PredictionSet, predict
from .scuc import ScucOptions, apply_reduction, build_scuc


@dataclass
class PipelineConfig:
    p_threshold: float = 0.5
    always_on_threshold: float = 0.95
    always_off_threshold: float = 0.05
    fix_on_threshold: float = 0.90
    fix_off_threshold: float = 0.10
    use_fl: bool = True

    def __post_init__(self):
        if not (0.5 <= self.fix_on_threshold
                <= self.always_on_threshold <= 1.0):
            raise ValueError("need 0.5 <= fix_on <= always_on <= 1")
        if not (0.0 <= self.always_off_threshold
                <= self.fix_off_threshold <= 0.5):
            raise ValueError("need 0 <= always_off <= fix_off <= 0.5")

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "p_threshold", "always_on_threshold", "always_off_threshold",
            "fix_on_threshold", "fix_off_threshold", "use_fl")}


@dataclass
class ReductionPlan:
    fixed_mask: np.ndarray    # [G, T] True where the commitment is fixed
    fixed_values: np.ndarray  # [G, T] value where fixed
    warm: np.ndarray          # [G, T] warm-start value (defined everywhere)
    fl_time: float = 0.0

    @property
    def n_fixed(self) -> int:
        return int(self.fixed_mask.sum())

    @property
    def n_flexible(self) -> int:
        return int(self.fixed_mask.size - self.fixed_mask.sum())


def postprocess(probabilities: np.ndarray, system: PowerSystem,
                config: PipelineConfig | None = None,
                initial_on: np.ndarray | None = None) -> ReductionPlan:
    """Three-step plan with the feasibility layer.

    Step 1 fixes generators that are confidently ON (or OFF) in every
    period.  Step 2 repairs the remaining rows and fixes the periods whose
    extreme probability agrees with the repair.  Step 3 leaves the rest
    flexible, warm-started at the repaired value.
    """
    config = config or PipelineConfig()
    probs = np.asarray(probabilities)
    n_gens, horizon = probs.shape
    if initial_on is None:
        initial_on = np.zeros(n_gens, dtype=bool)
    labels = (probs >= config.p_threshold).astype(np.int8)

    fixed_mask = np.zeros_like(probs, dtype=bool)
    fixed_values = np.zeros_like(labels)
    warm = labels.copy()
    fl_time = 0.0
    for g, gen in enumerate(system.generators):
        if np.all(probs[g] >= config.always_on_threshold):
            fixed_mask[g] = True
            fixed_values[g] = 1
            warm[g] = 1
            continue
        if np.all(probs[g] <= config.always_off_threshold):
            fixed_mask[g] = True
            fixed_values[g] = 0
            warm[g] = 0
            continue
        row = labels[g]
        if row.all() or not row.any():
            repaired = row  # constant rows are feasible; repair excluded
        else:
            res = repair_row(FLInstance(gen.min_up, gen.min_down, row,
                                        initial_on=bool(initial_on[g]),
                                        generator=g))
            repaired = res.repaired
            fl_time += res.solve_time
        extreme = ((probs[g] >= config.fix_on_threshold)
                   | (probs[g] <= config.fix_off_threshold))
        agree = row == repaired
        fix = extreme & agree
        fixed_mask[g] = fix
        fixed_values[g][fix] = repaired[fix]
        warm[g] = repaired
    return ReductionPlan(fixed_mask=fixed_mask, fixed_values=fixed_values,
                         warm=warm, fl_time=fl_time)


def postprocess_no_fl(probabilities: np.ndarray,
                      config: PipelineConfig | None = None) -> ReductionPlan:
    """Probability-only plan: fix extreme periods, warm-start the rest."""
    config = config or PipelineConfig(use_fl=False)
    probs = np.asarray(probabilities)
    labels = (probs >= config.p_threshold).astype(np.int8)
    fixed_mask = np.zeros_like(probs, dtype=bool)
    fixed_values = np.zeros_like(labels)
    for g in range(probs.shape[0]):
        if np.all(probs[g] >= config.always_on_threshold):
            fixed_mask[g] = True
            fixed_values[g] = 1
            continue
        if np.all(probs[g] <= config.always_off_threshold):
            fixed_mask[g] = True
            fixed_values[g] = 0
            continue
        on = probs[g] >= config.fix_on_threshold
        off = probs[g] <= config.fix_off_threshold
        fixed_mask[g] = on | off
        fixed_values[g][on] = 1
    return ReductionPlan(fixed_mask=fixed_mask, fixed_values=fixed_values,
                         warm=labels, fl_time=0.0)


def plan_for_sample(probs: np.ndarray, system: PowerSystem,
                    config: PipelineConfig,
                    initial_on: np.ndarray | None = None) -> ReductionPlan:
    if config.use_fl:
        return postprocess(probs, system, config, initial_on)
    return postprocess_no_fl(probs, config)


# ----------------------------------------------------------------------


@dataclass
class SampleRecord:
    sample_id: int
    full_obj: float | None
    full_time: float
    red_obj: float | None
    red_time: float
    fl_time: float
    status: str
    full_free_binaries: int = 0
    red_free_binaries: int = 0


@dataclass
class ExperimentReport:
    variant: str
    records: list[SampleRecord]
    config: dict = field(default_factory=dict)

    @property
    def infeasible_count(self) -> int:
        return sum(1 for r in self.records
                   if r.status not in ("optimal", "feasible-gap-met"))

    def _feasible(self) -> list[SampleRecord]:
        return [r for r in self.records
                if r.status in ("optimal", "feasible-gap-met")
                and r.full_obj is not None]

    @property
    def bn_cost(self) -> float | None:
        feas = self._feasible()
        if not feas:
            return None
        return float(np.mean([r.red_obj / r.full_obj for r in feas]))

    @property
    def bn_time(self) -> float | None:
        feas = self._feasible()
        if not feas:
            return None
        return float(np.mean([(r.red_time + r.fl_time) / r.full_time
                              for r in feas]))

    @property
    def speedup(self) -> float | None:
        bn = self.bn_time
        return None if not bn else 1.0 / bn

    def summary(self) -> dict:
        return {"variant": self.variant,
                "samples": len(self.records),
                "infeasible_count": self.infeasible_count,
                "bn_cost": self.bn_cost,
                "bn_time": self.bn_time,
                "speedup": self.speedup,
                "config": self.config}


def verify_sample(system: PowerSystem, sample: Sample, plan: ReductionPlan,
                  scuc_options: ScucOptions | None = None,
                  solve_options: SolveOptions | None = None) -> SampleRecord:
    """Build and solve the reduced model for one sample; infeasibility is
    recorded in the status, never raised."""
    scuc_options = scuc_options or ScucOptions()
    solve_options = solve_options or SolveOptions()
    profile = LoadProfile(demand=sample.demand)
    problem, index = build_scuc(system, profile, scuc_options)
    reduced, warm = apply_reduction(problem, index, plan)
    sol = solve_milp(reduced, replace(solve_options, warm_start=warm))
    return SampleRecord(
        sample_id=sample.id,
        full_obj=None, full_time=0.0,
        red_obj=sol.objective if sol.feasible else None,
        red_time=sol.solve_time,
        fl_time=plan.fl_time,
        status=sol.status,
        full_free_binaries=len(problem.free_binary_indices()),
        red_free_binaries=len(reduced.free_binary_indices()))


def _evaluate_sample(args):
    (system, sample, probs, variants, config, scuc_options,
     solve_options) = args
    profile = LoadProfile(demand=sample.demand)
    problem, _ = build_scuc(system, profile, scuc_options)
    base = solve_milp(problem, solve_options)
    if not base.feasible:
        raise RuntimeError(f"stored sample {sample.id} is infeasible as a "
                           f"full model; dataset and system disagree")
    init_on, _, _, _ = scuc_options.resolve(system)
    out = {}
    for use_fl in variants:
        cfg = replace(config, use_fl=use_fl)
        plan = plan_for_sample(probs, system, cfg, init_on)
        rec = verify_sample(system, sample, plan, scuc_options,
                            solve_options)
        rec.full_obj = base.objective
        rec.full_time = base.solve_time
        out[use_fl] = rec
    return sample.id, out


def _variant_name(use_fl: bool, stochastic: bool) -> str:
    core = "R-SSCUC" if stochastic else "R-SCUC"
    return f"{core}-FL" if use_fl else core


def _run_variants(system, samples, prediction_set: PredictionSet, variants,
                  config, scuc_options, solve_options,
                  jobs: int = 1) -> dict[bool, ExperimentReport]:
    tasks = [(system, s, prediction_set.probabilities[i], variants, config,
              scuc_options, solve_options)
             for i, s in enumerate(samples)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            raw = list(pool.map(_evaluate_sample, tasks))
    else:
        raw = [_evaluate_sample(t) for t in tasks]
    raw.sort(key=lambda pair: pair[0])
    reports = {}
    for use_fl in variants:
        recs = [recs_by_variant[use_fl] for _, recs_by_variant in raw]
        reports[use_fl] = ExperimentReport(
            variant=_variant_name(use_fl, scuc_options.stochastic),
            records=recs, config=config.as_dict())
    return reports


def run_experiment(system: PowerSystem, dataset: Dataset, model,
                   config: PipelineConfig | None = None,
                   scuc_options: ScucOptions | None = None,
                   solve_options: SolveOptions | None = None,
                   jobs: int = 1) -> ExperimentReport:
    """Verify the reduced model on the dataset's test split."""
    config = config or PipelineConfig()
    scuc_options = scuc_options or ScucOptions(stochastic=dataset.stochastic)
    solve_options = solve_options or SolveOptions()
    samples = dataset.test_samples
    preds = predict(model, np.stack([s.demand for s in samples]),
                    threshold=config.p_threshold)
    reports = _run_variants(system, samples, preds, (config.use_fl,),
                            config, scuc_options, solve_options, jobs)
    return reports[config.use_fl]


def run_experiment_pair(system, dataset, model,
                        config: PipelineConfig | None = None,
                        scuc_options: ScucOptions | None = None,
                        solve_options: SolveOptions | None = None,
                        jobs: int = 1
                        ) -> tuple[ExperimentReport, ExperimentReport]:
    """Both variants over one shared set of baseline solves."""
    config = config or PipelineConfig()
    scuc_options = scuc_options or ScucOptions(stochastic=dataset.stochastic)
    solve_options = solve_options or SolveOptions()
    samples = dataset.test_samples
    preds = predict(model, np.stack([s.demand for s in samples]),
                    threshold=config.p_threshold)
    reports = _run_variants(system, samples, preds, (True, False),
                            config, scuc_options, solve_options, jobs)
    return reports[True], reports[False]


def run_stochastic_experiment(system, dataset, model,
                              config: PipelineConfig | None = None,
                              solve_options: SolveOptions | None = None,
                              jobs: int = 1) -> ExperimentReport:
    """In-sample verification against the full stochastic baseline."""
    if not dataset.stochastic:
        raise ValueError("dataset was not generated in stochastic mode")
    if system.n_scenarios < 2:
        raise ValueError("stochastic experiments need >= 2 scenarios")
    return run_experiment(system, dataset, model, config,
                          ScucOptions(stochastic=True), solve_options, jobs)


def out_of_sample(system: PowerSystem, base: LoadProfile, model,
                  config: PipelineConfig | None = None, count: int = 100,
                  random_config: RandomConfig | None = None,
                  scuc_options: ScucOptions | None = None,
                  solve_options: SolveOptions | None = None,
                  jobs: int = 1) -> tuple[ExperimentReport, ExperimentReport]:
    """Fresh wider-variability samples; reports for both variants.

    Draws are screened with a full solve (feasible samples only); that
    solve doubles as the per-sample baseline.
    """
    config = config or PipelineConfig()
    scuc_options = scuc_options or ScucOptions()
    solve_options = solve_options or SolveOptions()
    random_config = random_config or RandomConfig(alpha_range=0.25,
                                                  beta_range=0.10, seed=1)
    samples: list[Sample] = []
    m = 0
    consecutive = 0
    limit = 10 * max(count, 1)
    while len(samples) < count:
        profile = perturb_profile(base, random_config, m)
        problem, _ = build_scuc(system, profile, scuc_options)
        sol = solve_milp(problem, solve_options)
        if sol.feasible:
            consecutive = 0
            s = Sample(id=m, demand=profile.demand, schedule=None,
                       objective=sol.objective, solve_time=sol.solve_time)
            samples.append(s)
        else:
            consecutive += 1
            if consecutive > limit:
                raise RuntimeError(
                    f"{consecutive} consecutive infeasible out-of-sample "
                    f"draws; widen the system margins")
        m += 1

    init_on, _, _, _ = scuc_options.resolve(system)
    recs: dict[bool, list[SampleRecord]] = {True: [], False: []}
    for s in samples:
        probs = predict(model, s.demand,
                        threshold=config.p_threshold).probabilities[0]
        for use_fl in (True, False):
            cfg = replace(config, use_fl=use_fl)
            plan = plan_for_sample(probs, system, cfg, init_on)
            rec = verify_sample(system, s, plan, scuc_options, solve_options)
            rec.full_obj = s.objective
            rec.full_time = s.solve_time
            recs[use_fl].append(rec)
    rep_fl = ExperimentReport(
        variant=_variant_name(True, scuc_options.stochastic),
        records=recs[True], config=config.as_dict())
    rep_nofl = ExperimentReport(
        variant=_variant_name(False, scuc_options.stochastic),
        records=recs[False], config=config.as_dict())
    return rep_fl, rep_nofl


# ----------------------------------------------------------------------
# report files


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_report(reports, outdir, prefix: str = "report") -> list[Path]:
    """Per-sample CSVs, an aggregate summary, and plot-data CSVs."""
    if isinstance(reports, ExperimentReport):
        reports = [reports]
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for rep in reports:
        tag = rep.variant.lower().replace("-", "_")
        path = out / f"{prefix}_{tag}_samples.csv"
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("sample_id,full_obj,full_time,red_obj,red_time,"
                     "fl_time,status\n")
            for r in rep.records:
                fh.write(",".join([str(r.sample_id), _fmt(r.full_obj),
                                   _fmt(r.full_time), _fmt(r.red_obj),
                                   _fmt(r.red_time), _fmt(r.fl_time),
                                   r.status]) + "\n")
        written.append(path)
    spath = out / f"{prefix}_summary.json"
    with open(spath, "w", encoding="utf-8", newline="\n") as fh:
        json.dump({r.variant: r.summary() for r in reports}, fh,
                  indent=2, sort_keys=True)
        fh.write("\n")
    written.append(spath)
    for metric in ("cost", "time"):
        ppath = out / f"{prefix}_plot_{metric}.csv"
        with open(ppath, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"variant,bn_{metric}_pct\n")
            for rep in reports:
                val = rep.bn_cost if metric == "cost" else rep.bn_time
                fh.write(f"{rep.variant},"
                         f"{_fmt(None if val is None else 100.0 * val)}\n")
        written.append(ppath)
    return written
