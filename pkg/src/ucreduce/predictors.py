"""Probabilistic commitment predictors.

Two models map normalized nodal demand to per-(generator, period) ON
probabilities: a multi-target logistic regression trained jointly for all
targets with one weight matrix and per-target bias, and a one-hidden-layer
perceptron (tanh hidden, sigmoid outputs).  Both minimise the summed
per-target cross-entropy with plain full-batch gradient descent at a fixed
learning rate; the loss is recorded every iteration so a sweep can reject
rates whose curve is not non-increasing.

Features are the flattened [bus x period] demand matrix; in stochastic mode
the per-scenario net loads (demand minus renewable output) are concatenated.
Min-max normalization is fitted on the training split only and reused
verbatim for every prediction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

_PROB_EPS = 1e-12


class TrainingDivergedError(RuntimeError):
    def __init__(self, learning_rate: float, message: str | None = None):
        self.learning_rate = learning_rate
        super().__init__(message or
                         f"training diverged at learning rate "
                         f"{learning_rate}")


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    iterations: int = 500
    sweep: tuple[float, ...] = (0.001, 0.003, 0.005, 0.01, 0.03, 0.05)
    seed: int = 0
    hidden: int | None = None  # MLP width; default 2x targets, capped

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")


@dataclass
class FeatureSpec:
    mins: np.ndarray   # per retained feature
    maxs: np.ndarray
    keep: np.ndarray   # retained indices into the raw feature vector
    n_raw: int
    layout: dict       # mode, n_buses, horizon, n_scenarios, renewable

    def transform(self, raw: np.ndarray) -> np.ndarray:
        if raw.shape[1] != self.n_raw:
            raise ValueError(f"expected {self.n_raw} raw features, "
                             f"got {raw.shape[1]}")
        kept = raw[:, self.keep]
        return (kept - self.mins) / (self.maxs - self.mins)


def raw_features(demands: np.ndarray, layout: dict) -> np.ndarray:
    """Flatten demand matrices into feature rows per the stored layout."""
    demands = np.asarray(demands, dtype=float)
    if demands.ndim == 2:
        demands = demands[None]
    m = demands.shape[0]
    if layout["mode"] == "stochastic":
        renew = np.asarray(layout["renewable"])  # [bus, period, scenario]
        net = demands[:, :, :, None] - renew[None]
        return np.concatenate(
            [net[:, :, :, s].reshape(m, -1)
             for s in range(net.shape[3])], axis=1)
    return demands.reshape(m, -1)


def make_layout(system, stochastic: bool) -> dict:
    layout = {"mode": "stochastic" if stochastic else "deterministic",
              "n_buses": system.n_buses, "horizon": system.horizon,
              "n_scenarios": system.n_scenarios if stochastic else 1,
              "renewable": None}
    if stochastic:
        layout["renewable"] = system.renewable_bus_output().tolist()
    return layout


def fit_feature_spec(raw: np.ndarray, layout: dict) -> FeatureSpec:
    mins = raw.min(axis=0)
    maxs = raw.max(axis=0)
    keep = np.flatnonzero(maxs - mins > 0)
    if len(keep) == 0:
        raise ValueError("every feature is constant on the training split")
    return FeatureSpec(mins=mins[keep], maxs=maxs[keep], keep=keep,
                       n_raw=raw.shape[1], layout=layout)


# ----------------------------------------------------------------------
# losses and gradients (shared by training and the gradient-check tests)


def mtlr_loss_grad(w: np.ndarray, b: np.ndarray, x: np.ndarray,
                   y: np.ndarray):
    m = x.shape[0]
    p = expit(x @ w.T + b)
    pc = np.clip(p, _PROB_EPS, 1.0 - _PROB_EPS)
    loss = float(-(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc)).sum() / m)
    dz = (p - y) / m
    return loss, dz.T @ x, dz.sum(axis=0)


def mlp_loss_grad(w1, b1, w2, b2, x, y):
    m = x.shape[0]
    h = np.tanh(x @ w1.T + b1)
    p = expit(h @ w2.T + b2)
    pc = np.clip(p, _PROB_EPS, 1.0 - _PROB_EPS)
    loss = float(-(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc)).sum() / m)
    dz2 = (p - y) / m
    dw2 = dz2.T @ h
    db2 = dz2.sum(axis=0)
    dh = dz2 @ w2
    dz1 = dh * (1.0 - h * h)
    dw1 = dz1.T @ x
    db1 = dz1.sum(axis=0)
    return loss, dw1, db1, dw2, db2


# ----------------------------------------------------------------------
# models


@dataclass
class MTLRModel:
    weights: np.ndarray   # [targets, features]
    bias: np.ndarray      # per-target offset
    spec: FeatureSpec
    loss_curve: np.ndarray
    target_shape: tuple[int, int]
    learning_rate: float
    iterations: int
    kind: str = "mtlr"

    def probabilities(self, raw: np.ndarray) -> np.ndarray:
        x = self.spec.transform(raw)
        return expit(x @ self.weights.T + self.bias)


@dataclass
class MLPModel:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    spec: FeatureSpec
    loss_curve: np.ndarray
    target_shape: tuple[int, int]
    learning_rate: float
    iterations: int
    kind: str = "mlp"

    def probabilities(self, raw: np.ndarray) -> np.ndarray:
        x = self.spec.transform(raw)
        return expit(np.tanh(x @ self.w1.T + self.b1) @ self.w2.T + self.b2)


@dataclass
class PredictionSet:
    probabilities: np.ndarray  # [samples, generators, periods]
    threshold: float = 0.5

    @property
    def labels(self) -> np.ndarray:
        return (self.probabilities >= self.threshold).astype(np.int8)


def _training_arrays(dataset, system):
    samples = dataset.train_samples
    if len(samples) < 2:
        raise ValueError("need at least 2 training samples")
    if dataset.stochastic and system is None:
        raise ValueError("stochastic features need the system")
    layout = (make_layout(system, True) if dataset.stochastic
              else {"mode": "deterministic", "renewable": None})
    demands = np.stack([s.demand for s in samples])
    raw = raw_features(demands, layout)
    y = np.stack([s.schedule.u.reshape(-1) for s in samples]).astype(float)
    shape = samples[0].schedule.u.shape
    return raw, y, layout, shape


def train_mtlr(dataset, config: TrainConfig | None = None,
               system=None) -> MTLRModel:
    """Full-batch gradient descent from zero weights (convex objective)."""
    config = config or TrainConfig()
    raw, y, layout, shape = _training_arrays(dataset, system)
    spec = fit_feature_spec(raw, layout)
    x = spec.transform(raw)
    k, f = y.shape[1], x.shape[1]
    w = np.zeros((k, f))
    b = np.zeros(k)
    curve = np.empty(config.iterations + 1)
    delta = config.learning_rate
    for it in range(config.iterations):
        loss, dw, db = mtlr_loss_grad(w, b, x, y)
        curve[it] = loss
        if not np.isfinite(loss):
            raise TrainingDivergedError(delta)
        w -= delta * dw
        b -= delta * db
    curve[-1], _, _ = mtlr_loss_grad(w, b, x, y)
    if not np.isfinite(curve[-1]):
        raise TrainingDivergedError(delta)
    return MTLRModel(weights=w, bias=b, spec=spec, loss_curve=curve,
                     target_shape=shape, learning_rate=delta,
                     iterations=config.iterations)


def train_mlp(dataset, config: TrainConfig | None = None,
              hidden: int | None = None, system=None) -> MLPModel:
    config = config or TrainConfig()
    raw, y, layout, shape = _training_arrays(dataset, system)
    spec = fit_feature_spec(raw, layout)
    x = spec.transform(raw)
    k, f = y.shape[1], x.shape[1]
    h = hidden or config.hidden or min(2 * k, 128)
    rng = np.random.default_rng([config.seed, 3])
    w1 = rng.uniform(-1.0, 1.0, size=(h, f)) / np.sqrt(f)
    b1 = np.zeros(h)
    w2 = rng.uniform(-1.0, 1.0, size=(k, h)) / np.sqrt(h)
    b2 = np.zeros(k)
    curve = np.empty(config.iterations + 1)
    delta = config.learning_rate
    for it in range(config.iterations):
        loss, dw1, db1, dw2, db2 = mlp_loss_grad(w1, b1, w2, b2, x, y)
        curve[it] = loss
        if not np.isfinite(loss):
            raise TrainingDivergedError(delta)
        w1 -= delta * dw1
        b1 -= delta * db1
        w2 -= delta * dw2
        b2 -= delta * db2
    curve[-1] = mlp_loss_grad(w1, b1, w2, b2, x, y)[0]
    if not np.isfinite(curve[-1]):
        raise TrainingDivergedError(delta)
    return MLPModel(w1=w1, b1=b1, w2=w2, b2=b2, spec=spec, loss_curve=curve,
                    target_shape=shape, learning_rate=delta,
                    iterations=config.iterations)


def predict(model, demands: np.ndarray,
            threshold: float = 0.5) -> PredictionSet:
    """ON probabilities for one demand matrix or a batch of them."""
    raw = raw_features(demands, model.spec.layout)
    probs = model.probabilities(raw)
    g, t = model.target_shape
    return PredictionSet(probabilities=probs.reshape(-1, g, t),
                         threshold=threshold)


def _label_array(predictions) -> np.ndarray:
    labels = getattr(predictions, "labels", predictions)
    return np.asarray(labels)


def accuracy(predictions, labels) -> float:
    """Fraction of correctly classified (sample, generator, period) cells."""
    pred = _label_array(predictions)
    ref = np.asarray(labels)
    if pred.shape != ref.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {ref.shape}")
    return 1.0 - float(np.abs(pred.astype(float) - ref).sum()) / pred.size


@dataclass(frozen=True)
class Confusion:
    tp: float
    tn: float
    fp: float
    fn: float  # predicted OFF, actually ON


def confusion(predictions, labels) -> Confusion:
    pred = _label_array(predictions).astype(bool)
    ref = np.asarray(labels).astype(bool)
    if pred.shape != ref.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {ref.shape}")
    n = pred.size
    return Confusion(tp=float((pred & ref).sum()) / n,
                     tn=float((~pred & ~ref).sum()) / n,
                     fp=float((pred & ~ref).sum()) / n,
                     fn=float((~pred & ref).sum()) / n)


# ----------------------------------------------------------------------
# hyper-parameter sweep


def curve_is_nonincreasing(curve: np.ndarray) -> bool:
    c = np.asarray(curve)
    return bool(np.all(np.diff(c) <= 1e-9 * np.maximum(1.0, np.abs(c[:-1]))))


@dataclass
class TuneResult:
    best_delta: float
    curves: dict[float, np.ndarray]
    train_accuracy: dict[float, float]
    rejected: tuple[float, ...]  # diverged or non-monotone curve


def tune(dataset, sweep=None, config: TrainConfig | None = None,
         model: str = "mtlr", system=None) -> TuneResult:
    """Train once per candidate rate; keep the best-accuracy candidate whose
    loss curve is monotonically non-increasing."""
    config = config or TrainConfig()
    sweep = tuple(sweep) if sweep is not None else config.sweep
    if not sweep:
        raise ValueError("sweep must be non-empty")
    trainer = train_mtlr if model == "mtlr" else train_mlp
    labels = np.stack([s.schedule.u for s in dataset.train_samples])
    demands = np.stack([s.demand for s in dataset.train_samples])
    curves: dict[float, np.ndarray] = {}
    accs: dict[float, float] = {}
    rejected: list[float] = []
    for delta in sorted(sweep):
        cfg = TrainConfig(learning_rate=delta, iterations=config.iterations,
                          sweep=config.sweep, seed=config.seed,
                          hidden=config.hidden)
        try:
            fitted = trainer(dataset, cfg, system=system)
        except TrainingDivergedError:
            rejected.append(delta)
            continue
        curves[delta] = fitted.loss_curve
        if not curve_is_nonincreasing(fitted.loss_curve):
            rejected.append(delta)
            continue
        accs[delta] = accuracy(predict(fitted, demands), labels)
    if not accs:
        raise TrainingDivergedError(
            max(sweep), "every learning rate in the sweep diverged or "
                        "failed the monotone-loss check")
    best = max(accs, key=lambda d: (accs[d], d))
    return TuneResult(best_delta=best, curves=curves, train_accuracy=accs,
                      rejected=tuple(rejected))


# ----------------------------------------------------------------------
# persistence


def save_model(model, path) -> None:
    doc = {"kind": model.kind,
           "target_shape": list(model.target_shape),
           "learning_rate": model.learning_rate,
           "iterations": model.iterations,
           "loss_curve": model.loss_curve.tolist(),
           "feature_spec": {
               "mins": model.spec.mins.tolist(),
               "maxs": model.spec.maxs.tolist(),
               "keep": model.spec.keep.tolist(),
               "n_raw": model.spec.n_raw,
               "layout": model.spec.layout,
           }}
    if model.kind == "mtlr":
        doc["weights"] = model.weights.tolist()
        doc["bias"] = model.bias.tolist()
    else:
        for name in ("w1", "b1", "w2", "b2"):
            doc[name] = getattr(model, name).tolist()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    spec = FeatureSpec(mins=np.array(doc["feature_spec"]["mins"]),
                       maxs=np.array(doc["feature_spec"]["maxs"]),
                       keep=np.array(doc["feature_spec"]["keep"], dtype=int),
                       n_raw=int(doc["feature_spec"]["n_raw"]),
                       layout=doc["feature_spec"]["layout"])
    common = dict(spec=spec, loss_curve=np.array(doc["loss_curve"]),
                  target_shape=tuple(doc["target_shape"]),
                  learning_rate=doc["learning_rate"],
                  iterations=doc["iterations"])
    if doc["kind"] == "mtlr":
        return MTLRModel(weights=np.array(doc["weights"]),
                         bias=np.array(doc["bias"]), **common)
    if doc["kind"] == "mlp":
        return MLPModel(w1=np.array(doc["w1"]), b1=np.array(doc["b1"]),
                        w2=np.array(doc["w2"]), b2=np.array(doc["b2"]),
                        **common)
    raise ValueError(f"unknown model kind {doc['kind']!r}")
