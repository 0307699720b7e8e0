"""ML-assisted model reduction for security-constrained unit commitment.

The package generates solved unit-commitment datasets under perturbed load
profiles, trains probabilistic commitment predictors, repairs predictions
with a per-generator feasibility MILP, and verifies the resulting reduced
models against the full model.
"""

from .datagen import Dataset, RandomConfig, Sample, generate_dataset, \
    load_dataset, perturb_profile, save_dataset
from .feaslayer import FLInstance, FLResult, repair_batch, repair_row
from .grid import Bus, Generator, Line, LoadProfile, PowerSystem, \
    RenewableUnit, load_profile, load_system, save_profile, save_system
from .milp import Constraint, MILPProblem, MILPSolution, SolveOptions, \
    Variable, export_mps, fix_variables, solve_lp, solve_milp
from .pipeline import ExperimentReport, PipelineConfig, ReductionPlan, \
    out_of_sample, postprocess, postprocess_no_fl, run_experiment, \
    run_experiment_pair, run_stochastic_experiment, verify_sample, \
    write_report
from .predictors import MLPModel, MTLRModel, PredictionSet, TrainConfig, \
    accuracy, confusion, load_model, predict, save_model, train_mlp, \
    train_mtlr, tune
from .scuc import CommitmentSchedule, ScucOptions, VariableIndex, \
    apply_reduction, build_scuc, check_min_updown, extract_schedule

__version__ = "0.1.0"
