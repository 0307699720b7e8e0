"""Command-line front end: generate / train / verify / export.

All randomness flows from one root seed; every command echoes its full
effective configuration into a manifest next to its outputs, so a run can
be reproduced from the manifest alone.  Options may come from a JSON config
file (--config), with explicit flags taking precedence.

Exit codes: 0 success, 1 computation-level failure (divergent training,
aborted generation, solver instability), 2 usage or input errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .datagen import (Dataset, DatasetFormatError, GenerationAborted,
                      RandomConfig, generate_dataset, load_dataset,
                      save_dataset)
from .grid import (LoadProfile, ParseError, ValidationError, load_profile,
                   load_system)
from .milp import MILPError, SolveOptions, export_mps, lp_root_state
from .pipeline import (PipelineConfig, out_of_sample, run_experiment,
                       run_experiment_pair, run_stochastic_experiment,
                       write_report)
from .predictors import (TrainConfig, TrainingDivergedError, accuracy,
                         confusion, load_model, predict, save_model, tune,
                         train_mlp, train_mtlr)
from .scuc import ScucOptions, build_scuc
from .simplex import NumericalInstabilityError

INPUT_ERRORS = (ParseError, ValidationError, DatasetFormatError, MILPError,
                FileNotFoundError, NotADirectoryError, ValueError)
COMPUTE_ERRORS = (TrainingDivergedError, GenerationAborted,
                  NumericalInstabilityError)


def _write_manifest(outdir: Path, command: str, config: dict) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    doc = {"command": command, "config": config}
    name = "run_manifest.json" if command == "generate" else "manifest.json"
    with open(outdir / name, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _effective(args: argparse.Namespace, defaults: dict) -> dict:
    """defaults < config file < explicit flags."""
    cfg = dict(defaults)
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            cfg.update(json.load(fh))
    for key in defaults:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _solve_options(cfg: dict) -> SolveOptions:
    return SolveOptions(mip_gap=cfg["mip_gap"])


# ----------------------------------------------------------------------


def cmd_generate(args) -> int:
    cfg = _effective(args, {
        "system": None, "profile": None, "out": None, "samples": 100,
        "alpha": 0.10, "beta": 0.04, "seed": 0, "stochastic": False,
        "jobs": 1, "mip_gap": 1e-3,
    })
    system = load_system(cfg["system"])
    base = load_profile(cfg["profile"], system)
    rc = RandomConfig(alpha_range=cfg["alpha"], beta_range=cfg["beta"],
                      seed=cfg["seed"])
    ds = generate_dataset(system, base, rc, cfg["samples"],
                          ScucOptions(stochastic=cfg["stochastic"]),
                          _solve_options(cfg), jobs=cfg["jobs"])
    out = Path(cfg["out"])
    save_dataset(ds, out)
    _write_manifest(out, "generate", cfg)
    print(f"kept {len(ds.samples)} feasible samples "
          f"({ds.discarded} infeasible draws discarded); "
          f"split {len(ds.split[0])}/{len(ds.split[1])} -> {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _effective(args, {
        "system": None, "dataset": None, "out": None, "model": "mtlr",
        "sweep": None, "learning_rate": None, "iterations": 500,
        "hidden": None, "seed": 0,
    })
    system = load_system(cfg["system"])
    ds = load_dataset(cfg["dataset"], system)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    tc = TrainConfig(learning_rate=cfg["learning_rate"] or 0.01,
                     iterations=cfg["iterations"], seed=cfg["seed"],
                     hidden=cfg["hidden"])

    if cfg["learning_rate"] is None:
        sweep = ([float(s) for s in str(cfg["sweep"]).split(",")]
                 if cfg["sweep"] else None)
        result = tune(ds, sweep, tc, model=cfg["model"], system=system)
        tc.learning_rate = result.best_delta
        with open(out / "sweep_curves.csv", "w", encoding="utf-8",
                  newline="\n") as fh:
            fh.write("delta,iteration,loss\n")
            for delta, curve in sorted(result.curves.items()):
                for i, loss in enumerate(curve):
                    fh.write(f"{delta},{i},{repr(float(loss))}\n")
        print(f"selected learning rate {tc.learning_rate} "
              f"(rejected: {sorted(result.rejected)})")

    trainer = train_mtlr if cfg["model"] == "mtlr" else train_mlp
    model = trainer(ds, tc, system=system)
    save_model(model, out / "model.json")
    with open(out / "loss_curve.csv", "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write("iteration,loss\n")
        for i, loss in enumerate(model.loss_curve):
            fh.write(f"{i},{repr(float(loss))}\n")

    metrics = {}
    probs_paths = {}
    for split, samples in (("train", ds.train_samples),
                           ("test", ds.test_samples)):
        demands = np.stack([s.demand for s in samples])
        labels = np.stack([s.schedule.u for s in samples])
        preds = predict(model, demands)
        conf = confusion(preds, labels)
        metrics[split] = {"accuracy": accuracy(preds, labels),
                          "confusion": {"tp": conf.tp, "tn": conf.tn,
                                        "fp": conf.fp, "fn": conf.fn}}
        path = out / f"{split}_probabilities.csv"
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            horizon = preds.probabilities.shape[2]
            fh.write("sample_id,gen,"
                     + ",".join(f"t{t+1}" for t in range(horizon)) + "\n")
            for i, s in enumerate(samples):
                for g in range(preds.probabilities.shape[1]):
                    row = ",".join(repr(float(v))
                                   for v in preds.probabilities[i, g])
                    fh.write(f"{s.id},{g},{row}\n")
        probs_paths[split] = str(path.name)
    metrics["learning_rate"] = tc.learning_rate
    with open(out / "metrics.json", "w", encoding="utf-8",
              newline="\n") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(out, "train",
                    {**cfg, "learning_rate": tc.learning_rate})
    print(f"{cfg['model']} trained: train acc "
          f"{metrics['train']['accuracy']:.4f}, "
          f"test acc {metrics['test']['accuracy']:.4f} -> {out}")
    return 0


def cmd_verify(args) -> int:
    cfg = _effective(args, {
        "system": None, "dataset": None, "model": None, "out": None,
        "mode": "in-sample", "fl": "both", "samples": 100,
        "alpha": 0.25, "beta": 0.10, "seed": 1, "jobs": 1, "mip_gap": 1e-3,
        "p_threshold": 0.5, "always_on": 0.95, "always_off": 0.05,
        "fix_on": 0.90, "fix_off": 0.10,
    })
    system = load_system(cfg["system"])
    ds = load_dataset(cfg["dataset"], system)
    model = load_model(cfg["model"])
    out = Path(cfg["out"])
    pc = PipelineConfig(p_threshold=cfg["p_threshold"],
                        always_on_threshold=cfg["always_on"],
                        always_off_threshold=cfg["always_off"],
                        fix_on_threshold=cfg["fix_on"],
                        fix_off_threshold=cfg["fix_off"],
                        use_fl=cfg["fl"] != "off")
    so = _solve_options(cfg)

    if cfg["mode"] == "oos":
        rc = RandomConfig(alpha_range=cfg["alpha"], beta_range=cfg["beta"],
                          seed=cfg["seed"])
        reports = list(out_of_sample(system, ds.base_profile, model, pc,
                                     count=cfg["samples"], random_config=rc,
                                     solve_options=so, jobs=cfg["jobs"]))
    elif cfg["mode"] == "stochastic":
        reports = [run_stochastic_experiment(system, ds, model, pc,
                                             solve_options=so,
                                             jobs=cfg["jobs"])]
    elif cfg["fl"] == "both":
        reports = list(run_experiment_pair(system, ds, model, pc,
                                           solve_options=so,
                                           jobs=cfg["jobs"]))
    else:
        reports = [run_experiment(system, ds, model, pc, solve_options=so,
                                  jobs=cfg["jobs"])]
    write_report(reports, out, prefix=cfg["mode"].replace("-", "_"))
    _write_manifest(out, "verify", cfg)
    for rep in reports:
        bn = "n/a" if rep.bn_cost is None else f"{100 * rep.bn_cost:.2f}%"
        print(f"{rep.variant}: {len(rep.records)} samples, "
              f"{rep.infeasible_count} infeasible, BN cost {bn}")
    return 0


def cmd_export(args) -> int:
    cfg = _effective(args, {
        "system": None, "profile": None, "out": None, "stochastic": False,
    })
    system = load_system(cfg["system"])
    base = load_profile(cfg["profile"], system)
    problem, _ = build_scuc(system, base,
                            ScucOptions(stochastic=cfg["stochastic"]))
    out = Path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    export_mps(problem, out)
    _write_manifest(out.parent, "export", cfg)
    print(f"wrote {problem.n_variables} variables / "
          f"{problem.n_constraints} constraints -> {out}")
    return 0


# ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="ucreduce",
        description="ML-assisted reduction of unit-commitment models")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory or file")

    g = sub.add_parser("generate", help="generate a solved dataset")
    common(g)
    g.add_argument("--system")
    g.add_argument("--profile")
    g.add_argument("--samples", type=int)
    g.add_argument("--alpha", type=float)
    g.add_argument("--beta", type=float)
    g.add_argument("--stochastic", action="store_const", const=True)
    g.add_argument("--jobs", type=int)
    g.add_argument("--mip-gap", dest="mip_gap", type=float)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train a commitment predictor")
    common(t)
    t.add_argument("--system")
    t.add_argument("--dataset")
    t.add_argument("--model", choices=("mtlr", "mlp"))
    t.add_argument("--sweep", help="comma-separated learning rates")
    t.add_argument("--learning-rate", dest="learning_rate", type=float)
    t.add_argument("--iterations", type=int)
    t.add_argument("--hidden", type=int)
    t.set_defaults(func=cmd_train)

    v = sub.add_parser("verify", help="verify reduced models on test data")
    common(v)
    v.add_argument("--system")
    v.add_argument("--dataset")
    v.add_argument("--model")
    v.add_argument("--mode", choices=("in-sample", "oos", "stochastic"))
    v.add_argument("--fl", choices=("on", "off", "both"))
    v.add_argument("--samples", type=int)
    v.add_argument("--alpha", type=float)
    v.add_argument("--beta", type=float)
    v.add_argument("--jobs", type=int)
    v.add_argument("--mip-gap", dest="mip_gap", type=float)
    v.add_argument("--p-threshold", dest="p_threshold", type=float)
    v.add_argument("--always-on", dest="always_on", type=float)
    v.add_argument("--always-off", dest="always_off", type=float)
    v.add_argument("--fix-on", dest="fix_on", type=float)
    v.add_argument("--fix-off", dest="fix_off", type=float)
    v.set_defaults(func=cmd_verify)

    e = sub.add_parser("export", help="write the full model as fixed MPS")
    common(e)
    e.add_argument("--system")
    e.add_argument("--profile")
    e.add_argument("--stochastic", action="store_const", const=True)
    e.set_defaults(func=cmd_export)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except COMPUTE_ERRORS as exc:
        print(f"computation failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
