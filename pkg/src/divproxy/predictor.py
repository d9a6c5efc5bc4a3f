"""Supervised failure prediction from diversity features.

Feature extraction masks any subset of (entropy, gini, centroid_distance);
class balancing oversamples the smaller class; the classifier is a plain
NumPy feed-forward network (relu hiddens, sigmoid output) trained with
mini-batch gradient descent on binary cross-entropy. Evaluation is by
precision-recall curves with step-wise average precision.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import TrainingDivergenceError, UsageError
from .measures import SampleBatch, diversity_report

FEATURE_NAMES = ("entropy", "gini", "centroid_distance")

BALANCE_MODES = ("oversample_minority", "undersample_majority")


@dataclass(frozen=True)
class FeatureVector:
    """Masked diversity features; excluded features are absent, not zeroed."""

    names: tuple[str, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.names) != len(self.values):
            raise UsageError("feature names and values must align")
        if not self.names:
            raise UsageError("a feature vector needs at least one feature")


def extract_features(
    batch: SampleBatch,
    embedder=None,
    mask: Sequence[str] = FEATURE_NAMES,
) -> FeatureVector:
    """Diversity measures of the batch restricted to the masked features."""
    mask = tuple(mask)
    for name in mask:
        if name not in FEATURE_NAMES:
            raise UsageError(f"unknown feature {name!r}, expected a subset of {FEATURE_NAMES}")
    if not mask:
        raise UsageError("mask must keep at least one feature")
    if "centroid_distance" in mask and embedder is None:
        raise UsageError("centroid_distance feature requires an embedder")
    need_embedder = embedder if "centroid_distance" in mask else None
    report = diversity_report(batch, embedder=need_embedder)
    all_values = report.measure_values()
    ordered = tuple(name for name in FEATURE_NAMES if name in mask)
    return FeatureVector(names=ordered, values=tuple(all_values[name] for name in ordered))


def project_features(measures: dict[str, float], mask: Sequence[str]) -> FeatureVector:
    """Masked FeatureVector from a name -> value map (e.g. a measure row)."""
    ordered = tuple(name for name in FEATURE_NAMES if name in mask)
    if not ordered:
        raise UsageError("mask must keep at least one feature")
    missing = [name for name in ordered if name not in measures]
    if missing:
        raise UsageError(f"rows lack masked feature(s): {missing}")
    return FeatureVector(names=ordered, values=tuple(float(measures[name]) for name in ordered))


def balance(
    train: Sequence[tuple[FeatureVector, bool]],
    seed: int = 0,
    mode: str = "oversample_minority",
) -> list[tuple[FeatureVector, bool]]:
    """Equalize class counts, by default duplicating random minority samples.

    ``undersample_majority`` instead drops random majority samples. Either
    way every output sample appears in the input; results are seeded.
    """
    if mode not in BALANCE_MODES:
        raise UsageError(f"unknown balance mode {mode!r}, expected one of {BALANCE_MODES}")
    pos = [i for i, (_, failed) in enumerate(train) if failed]
    neg = [i for i, (_, failed) in enumerate(train) if not failed]
    if not pos or not neg:
        raise UsageError("balancing needs both classes present")
    rng = random.Random(seed)
    if mode == "oversample_minority":
        smaller, larger = (pos, neg) if len(pos) < len(neg) else (neg, pos)
        extras = [rng.choice(smaller) for _ in range(len(larger) - len(smaller))]
        return list(train) + [train[i] for i in extras]
    smaller, larger = (pos, neg) if len(pos) < len(neg) else (neg, pos)
    kept = set(smaller) | set(rng.sample(larger, len(smaller)))
    return [train[i] for i in range(len(train)) if i in kept]


@dataclass(frozen=True)
class MlpConfig:
    """Network and training hyperparameters; depth follows the 5/10/15 idiom."""

    hidden_layers: int = 10
    hidden_width: int = 32
    epochs: int = 200
    learning_rate: float = 1e-3
    batch_size: int = 32
    momentum: float = 0.0
    seed: int = 0
    activation: str = "relu"
    output: str = "sigmoid"

    def __post_init__(self):
        if self.hidden_layers < 1 or self.hidden_width < 1 or self.epochs < 1:
            raise UsageError("hidden_layers, hidden_width, and epochs must be positive")
        if self.learning_rate <= 0 or self.batch_size < 1:
            raise UsageError("learning_rate and batch_size must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise UsageError("momentum must be in [0, 1)")
        if self.activation != "relu" or self.output != "sigmoid":
            raise UsageError("only relu hiddens with a sigmoid output are supported")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class Mlp:
    """Dense feed-forward binary classifier with explicit backprop.

    Inputs are standardized with statistics frozen at fit time, so serialized
    models are self-contained.
    """

    def __init__(self, feature_names: Sequence[str], config: MlpConfig):
        self.feature_names = tuple(feature_names)
        self.config = config
        n_in = len(self.feature_names)
        dims = [n_in] + [config.hidden_width] * config.hidden_layers + [1]
        rng = np.random.default_rng(config.seed)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            scale = math.sqrt(2.0 / fan_in)
            self.weights.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))
        self.layer_dims = dims
        self.scaler_mean = np.zeros(n_in)
        self.scaler_std = np.ones(n_in)

    # -- numerics -----------------------------------------------------------

    def _standardize(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.scaler_mean) / self.scaler_std

    def _forward(self, X: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
        activations = [X]
        pre_activations = []
        a = X
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ W + b
            pre_activations.append(z)
            a = _sigmoid(z) if i == last else np.maximum(z, 0.0)
            activations.append(a)
        return pre_activations, activations

    def predict_proba(self, X) -> np.ndarray:
        """Failure probability per row of X (raw, unstandardized features)."""
        Xs = self._standardize(np.atleast_2d(np.asarray(X, dtype=float)))
        _, activations = self._forward(Xs)
        return activations[-1][:, 0]

    def loss(self, X, y) -> float:
        """Mean binary cross-entropy on raw features X against labels y."""
        p = self.predict_proba(X)
        p = np.clip(p, 1e-12, 1.0 - 1e-12)
        y = np.asarray(y, dtype=float)
        return float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))))

    def gradients(self, X, y) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
        """(loss, dWs, dbs) via backprop, for training and gradient checks."""
        Xs = self._standardize(np.atleast_2d(np.asarray(X, dtype=float)))
        return self._step_gradients(Xs, np.asarray(y, dtype=float))

    # -- training -----------------------------------------------------------

    def fit(self, X, y) -> list[float]:
        """Train in place; returns the per-epoch mean loss trace."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float)
        if X.shape[0] != y.shape[0] or X.shape[0] == 0:
            raise UsageError("X and y must be nonempty and aligned")
        if X.shape[1] != len(self.feature_names):
            raise UsageError(f"expected {len(self.feature_names)} features, got {X.shape[1]}")
        self.scaler_mean = X.mean(axis=0)
        std = X.std(axis=0)
        self.scaler_std = np.where(std > 0.0, std, 1.0)
        Xs = self._standardize(X)

        cfg = self.config
        rng = np.random.default_rng(cfg.seed + 1)
        velocity_w = [np.zeros_like(W) for W in self.weights]
        velocity_b = [np.zeros_like(b) for b in self.biases]
        trace = []
        n = Xs.shape[0]
        for epoch in range(cfg.epochs):
            order = rng.permutation(n)
            epoch_losses = []
            for start in range(0, n, cfg.batch_size):
                idx = order[start : start + cfg.batch_size]
                loss, dWs, dbs = self._step_gradients(Xs[idx], y[idx])
                if not math.isfinite(loss):
                    raise TrainingDivergenceError(epoch)
                epoch_losses.append(loss)
                for layer in range(len(self.weights)):
                    velocity_w[layer] = cfg.momentum * velocity_w[layer] - cfg.learning_rate * dWs[layer]
                    velocity_b[layer] = cfg.momentum * velocity_b[layer] - cfg.learning_rate * dbs[layer]
                    self.weights[layer] += velocity_w[layer]
                    self.biases[layer] += velocity_b[layer]
            trace.append(float(np.mean(epoch_losses)))
        return trace

    def _step_gradients(self, Xs: np.ndarray, y: np.ndarray) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
        # Backprop on already-standardized inputs.
        y = y.reshape(-1, 1)
        pre_activations, activations = self._forward(Xs)
        p = np.clip(activations[-1], 1e-12, 1.0 - 1e-12)
        loss = float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))))
        batch = Xs.shape[0]
        dWs = [np.empty(0)] * len(self.weights)
        dbs = [np.empty(0)] * len(self.biases)
        delta = (activations[-1] - y) / batch
        for layer in range(len(self.weights) - 1, -1, -1):
            dWs[layer] = activations[layer].T @ delta
            dbs[layer] = delta.sum(axis=0)
            if layer > 0:
                delta = (delta @ self.weights[layer].T) * (pre_activations[layer - 1] > 0.0)
        return loss, dWs, dbs

    # -- persistence ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "layer_dims": list(self.layer_dims),
            "activations": ["relu"] * self.config.hidden_layers + ["sigmoid"],
            "weights": [W.flatten().tolist() for W in self.weights],  # row-major
            "biases": [b.tolist() for b in self.biases],
            "scaler": {"mean": self.scaler_mean.tolist(), "std": self.scaler_std.tolist()},
            "config": {
                "hidden_layers": self.config.hidden_layers,
                "hidden_width": self.config.hidden_width,
                "epochs": self.config.epochs,
                "learning_rate": self.config.learning_rate,
                "batch_size": self.config.batch_size,
                "momentum": self.config.momentum,
                "seed": self.config.seed,
                "activation": self.config.activation,
                "output": self.config.output,
            },
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "Mlp":
        config = MlpConfig(**payload["config"])
        model = cls(payload["feature_names"], config)
        dims = payload["layer_dims"]
        if dims != model.layer_dims:
            raise UsageError(f"layer dims {dims} do not match config-derived {model.layer_dims}")
        model.weights = [
            np.asarray(flat, dtype=float).reshape(fan_in, fan_out)
            for flat, fan_in, fan_out in zip(payload["weights"], dims[:-1], dims[1:])
        ]
        model.biases = [np.asarray(b, dtype=float) for b in payload["biases"]]
        model.scaler_mean = np.asarray(payload["scaler"]["mean"], dtype=float)
        model.scaler_std = np.asarray(payload["scaler"]["std"], dtype=float)
        return model

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str) -> "Mlp":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def train_mlp(
    balanced: Sequence[tuple[FeatureVector, bool]],
    cfg: MlpConfig,
) -> Mlp:
    """Train a fresh network on (FeatureVector, failed) pairs."""
    if not balanced:
        raise UsageError("training data is empty")
    names = balanced[0][0].names
    if any(fv.names != names for fv, _ in balanced):
        raise UsageError("all feature vectors must share one mask")
    X = np.asarray([fv.values for fv, _ in balanced], dtype=float)
    y = np.asarray([1.0 if failed else 0.0 for _, failed in balanced])
    model = Mlp(names, cfg)
    model.fit(X, y)
    return model


# -- precision/recall ---------------------------------------------------------


@dataclass(frozen=True)
class PrPoint:
    recall: float
    precision: float
    threshold: float


@dataclass(frozen=True)
class PrCurve:
    points: tuple[PrPoint, ...]
    auprc: float
    baseline: float  # positive prevalence; the knowledgeless precision


def pr_curve_from_scores(labels: Sequence[bool], scores: Sequence[float]) -> PrCurve:
    """Precision/recall at every distinct score threshold, descending.

    AUPRC is the step-wise average precision: sum over points of
    (recall gain) * precision. The baseline is the positive prevalence.
    """
    labels = [bool(l) for l in labels]
    scores = [float(s) for s in scores]
    if len(labels) != len(scores) or not labels:
        raise UsageError("labels and scores must be nonempty and aligned")
    total_pos = sum(labels)
    if total_pos == 0:
        raise UsageError("PR curve needs at least one positive example")

    order = sorted(range(len(scores)), key=lambda i: -scores[i])
    points = []
    tp = 0
    fp = 0
    i = 0
    n = len(order)
    while i < n:
        threshold = scores[order[i]]
        while i < n and scores[order[i]] == threshold:
            if labels[order[i]]:
                tp += 1
            else:
                fp += 1
            i += 1
        points.append(PrPoint(recall=tp / total_pos, precision=tp / (tp + fp), threshold=threshold))

    terms = []
    previous_recall = 0.0
    for point in points:
        terms.append((point.recall - previous_recall) * point.precision)
        previous_recall = point.recall
    return PrCurve(points=tuple(points), auprc=math.fsum(terms), baseline=total_pos / len(labels))


def pr_curve(model: Mlp, features: Sequence[FeatureVector], labels: Sequence[bool]) -> PrCurve:
    """PR curve of a trained model on a labeled test set."""
    if not features:
        raise UsageError("test set is empty")
    X = np.asarray([fv.values for fv in features], dtype=float)
    scores = model.predict_proba(X)
    return pr_curve_from_scores(list(labels), scores.tolist())


def precision_at_recall(curve: PrCurve, recall_level: float) -> float:
    """Precision at the highest threshold whose recall reaches the level."""
    for point in curve.points:
        if point.recall >= recall_level:
            return point.precision
    return curve.points[-1].precision


# -- evaluation and ablation ---------------------------------------------------


@dataclass(frozen=True)
class EvalMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    auprc: float


def evaluate(model: Mlp, features: Sequence[FeatureVector], labels: Sequence[bool]) -> EvalMetrics:
    """Threshold-0.5 classification metrics plus AUPRC, failure as positive."""
    X = np.asarray([fv.values for fv in features], dtype=float)
    y = np.asarray([bool(l) for l in labels])
    scores = model.predict_proba(X)
    predicted = scores >= 0.5
    tp = int(np.sum(predicted & y))
    fp = int(np.sum(predicted & ~y))
    fn = int(np.sum(~predicted & y))
    accuracy = float(np.mean(predicted == y))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    auprc = pr_curve_from_scores(y.tolist(), scores.tolist()).auprc
    return EvalMetrics(accuracy=accuracy, precision=precision, recall=recall, f1=f1, auprc=auprc)


def train_test_split(
    rows: Sequence,
    test_fraction: float = 0.3,
    seed: int = 0,
) -> tuple[list, list]:
    """Seeded shuffle split; test gets round(n * test_fraction) rows."""
    if not 0.0 < test_fraction < 1.0:
        raise UsageError("test_fraction must be in (0, 1)")
    rng = random.Random(seed)
    indices = list(range(len(rows)))
    rng.shuffle(indices)
    n_test = round(len(rows) * test_fraction)
    test_idx = set(indices[:n_test])
    train = [rows[i] for i in indices[n_test:]]
    test = [rows[i] for i in sorted(test_idx)]
    return train, test


@dataclass(frozen=True)
class AblationRow:
    mask: tuple[str, ...]
    metrics: EvalMetrics


def ablation_study(
    rows: Sequence[tuple[dict[str, float], bool]],
    masks: Sequence[Sequence[str]],
    cfg: MlpConfig,
    test_fraction: float = 0.3,
    split_seed: int = 0,
    balance_mode: str = "oversample_minority",
) -> list[AblationRow]:
    """One trained-and-evaluated row per mask on a single shared split."""
    if not masks:
        raise UsageError("need at least one mask")
    train_rows, test_rows = train_test_split(list(rows), test_fraction=test_fraction, seed=split_seed)
    results = []
    for mask in masks:
        mask = tuple(mask)
        train = [(project_features(measures, mask), failed) for measures, failed in train_rows]
        test_x = [project_features(measures, mask) for measures, _ in test_rows]
        test_y = [failed for _, failed in test_rows]
        balanced = balance(train, seed=cfg.seed, mode=balance_mode)
        model = train_mlp(balanced, cfg)
        results.append(AblationRow(mask=mask, metrics=evaluate(model, test_x, test_y)))
    return results
