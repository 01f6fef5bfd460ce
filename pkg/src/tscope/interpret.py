"""Permutation-based model interpretability.

Three related procedures, all reporting score drops so that larger always means
more important:

* vanilla permutation importance over 2-D feature matrices (per-column shuffle
  of a trained model's test inputs);
* its 3-D generalization for windowed tensors: one permutation map over window
  indices moves the whole per-window series of one channel between windows,
  leaving within-series temporal order intact;
* time-series importance: destroy temporal order *within* every window for the
  top channels, retrain from scratch, and measure the drop against the
  unpermuted baseline - order-independent aggregates are untouched, so the
  drop isolates the value of the dynamics.

Partial dependence sweeps one or two features over a grid (substituting a
constant series for tensor channels) and averages the positive-class
probability.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .characterize import FeatureMatrix
from .evaluate import score_metric

LOSS_METRICS = ("log_loss",)  # lower is better: importance flips sign


@dataclass(eq=False)
class ImportanceReport:
    feature_names: list[str]
    scores: np.ndarray  # (n_features, runs)
    metric: str
    runs: int
    baseline_score: float
    seed: int

    def mean(self) -> np.ndarray:
        return self.scores.mean(axis=1)

    def sd(self) -> np.ndarray:
        return self.scores.std(axis=1, ddof=1) if self.runs > 1 else np.zeros(len(self.feature_names))

    def ranking(self) -> list[str]:
        order = np.argsort(-self.mean(), kind="stable")
        return [self.feature_names[i] for i in order]

    def write_csv(self, path: str | Path, comment: str = "") -> None:
        with open(path, "w", newline="") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            writer = csv.writer(fh)
            writer.writerow(["feature", "run", "score"])
            for i, name in enumerate(self.feature_names):
                for r in range(self.scores.shape[1]):
                    writer.writerow([name, r, repr(float(self.scores[i, r]))])

    def write_summary(self, path: str | Path, extra: dict | None = None) -> None:
        mean = self.mean()
        sd = self.sd()
        rank_of = {name: k + 1 for k, name in enumerate(self.ranking())}
        payload = {
            "metric": self.metric,
            "runs": self.runs,
            "seed": self.seed,
            "baseline_score": self.baseline_score,
            "features": [
                {
                    "feature": name,
                    "mean": float(mean[i]),
                    "sd": float(sd[i]),
                    "rank": rank_of[name],
                }
                for i, name in enumerate(self.feature_names)
            ],
        }
        if extra:
            payload.update(extra)
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")


def _signed(baseline: float, permuted: float, metric: str) -> float:
    if metric in LOSS_METRICS:
        return permuted - baseline
    return baseline - permuted


def _unit_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


# ---------------------------------------------------------------------------
# Vanilla MDA over 2-D matrices
# ---------------------------------------------------------------------------

def mda_2d(
    model,
    matrix,
    labels: np.ndarray | None = None,
    metric: str = "accuracy",
    runs: int = 50,
    seed: int = 0,
    threshold: float = 0.5,
) -> ImportanceReport:
    """Per-feature score drop after shuffling that column across rows."""
    if isinstance(matrix, FeatureMatrix):
        X = matrix.values
        names = list(matrix.column_names)
        if labels is None:
            labels = matrix.labels
    else:
        X = np.asarray(matrix, dtype=np.float64)
        names = list(getattr(model, "feature_names", [f"f{j}" for j in range(X.shape[1])]))
    y = np.asarray(labels)
    baseline = score_metric(metric, y, model.predict_proba(X)[:, 1], threshold)
    n, n_features = X.shape
    scores = np.empty((n_features, runs), dtype=np.float64)
    for f in range(n_features):
        for r in range(runs):
            perm = _unit_rng(seed, f, r).permutation(n)
            Xp = X.copy()
            Xp[:, f] = X[perm, f]
            permuted = score_metric(metric, y, model.predict_proba(Xp)[:, 1], threshold)
            scores[f, r] = _signed(baseline, permuted, metric)
    return ImportanceReport(
        feature_names=names,
        scores=scores,
        metric=metric,
        runs=runs,
        baseline_score=baseline,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# 3-D permutation importance (windowed tensors + statics)
# ---------------------------------------------------------------------------

def permute_channel(tensor: np.ndarray, channel: int, mapping: np.ndarray) -> np.ndarray:
    """Install window i's series of one channel at window mapping[i]; copy, no mutation."""
    out = tensor.copy()
    out[mapping, :, channel] = tensor[np.arange(tensor.shape[0]), :, channel]
    return out


def perm_importance_3d(
    model,
    tensor: np.ndarray,
    statics: np.ndarray | None,
    labels,
    metric: str = "auc",
    runs: int = 50,
    seed: int = 0,
    threshold: float = 0.5,
) -> ImportanceReport:
    """Permutation importance for (windows x timesteps x channels) inputs.

    Channel features move whole per-window series between windows via a fresh
    permutation map per (feature, run); static columns are shuffled as scalars.
    The temporal order inside every series is never touched.
    """
    tensor = np.asarray(tensor, dtype=np.float64)
    n = tensor.shape[0]
    y = np.asarray(labels)
    channel_names = list(getattr(model, "channel_names", [f"ch{j}" for j in range(tensor.shape[2])]))
    static_names = list(getattr(model, "static_names", []))
    if statics is None:
        statics = np.zeros((n, 0), dtype=np.float64)
    statics = np.asarray(statics, dtype=np.float64)

    baseline = score_metric(metric, y, model.predict_proba(tensor, statics)[:, 1], threshold)
    names = channel_names + static_names
    scores = np.empty((len(names), runs), dtype=np.float64)
    for f, name in enumerate(names):
        for r in range(runs):
            mapping = _unit_rng(seed, f, r).permutation(n)
            if f < len(channel_names):
                xp = permute_channel(tensor, f, mapping)
                sp = statics
            else:
                k = f - len(channel_names)
                xp = tensor
                sp = statics.copy()
                sp[mapping, k] = statics[np.arange(n), k]
            permuted = score_metric(metric, y, model.predict_proba(xp, sp)[:, 1], threshold)
            scores[f, r] = _signed(baseline, permuted, metric)
    return ImportanceReport(
        feature_names=names,
        scores=scores,
        metric=metric,
        runs=runs,
        baseline_score=baseline,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Time-series importance (Algorithm-2 style shuffle + retrain)
# ---------------------------------------------------------------------------

def shuffle_time(
    tensor: np.ndarray, channels: list[int], rng: np.random.Generator
) -> np.ndarray:
    """Independently permute the listed channels along time within every window."""
    out = tensor.copy()
    n, t, _ = tensor.shape
    for c in channels:
        perm = np.argsort(rng.random((n, t)), axis=1)
        out[:, :, c] = np.take_along_axis(out[:, :, c], perm, axis=1)
    return out


@dataclass(eq=False)
class TimeSeriesImportance:
    channels: list[str]
    baseline_score: float
    permuted_scores: np.ndarray  # (iterations,)
    metric: str
    seed: int

    def drops(self) -> np.ndarray:
        if self.metric in LOSS_METRICS:
            return self.permuted_scores - self.baseline_score
        return self.baseline_score - self.permuted_scores

    def mean_drop(self) -> float:
        return float(self.drops().mean())

    def write_csv(self, path: str | Path, comment: str = "") -> None:
        with open(path, "w", newline="") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            writer = csv.writer(fh)
            writer.writerow(["iteration", "baseline_score", "permuted_score", "drop"])
            drops = self.drops()
            for i in range(self.permuted_scores.size):
                writer.writerow(
                    [
                        i,
                        repr(float(self.baseline_score)),
                        repr(float(self.permuted_scores[i])),
                        repr(float(drops[i])),
                    ]
                )


def time_series_importance(
    evaluator,
    tensor: np.ndarray,
    statics: np.ndarray | None,
    top_channels: list[int],
    channel_names: list[str] | None = None,
    iterations: int = 20,
    seed: int = 0,
    metric: str = "auc",
    baseline_score: float | None = None,
) -> TimeSeriesImportance:
    """Shuffle the top channels along time, retrain via ``evaluator``, score the drop.

    ``evaluator(tensor, statics) -> float`` must train a fresh model (under the
    caller's CV protocol) and return the metric on the data it was given; the
    baseline comes from the same evaluator on unpermuted data unless supplied.
    """
    tensor = np.asarray(tensor, dtype=np.float64)
    if baseline_score is None:
        baseline_score = float(evaluator(tensor, statics))
    permuted = np.empty(iterations, dtype=np.float64)
    for it in range(iterations):
        rng = _unit_rng(seed, it)
        xp = shuffle_time(tensor, top_channels, rng)
        permuted[it] = float(evaluator(xp, statics))
    names = channel_names or [f"ch{c}" for c in top_channels]
    return TimeSeriesImportance(
        channels=list(names),
        baseline_score=baseline_score,
        permuted_scores=permuted,
        metric=metric,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Partial dependence
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class PartialDependence:
    feature_names: list[str]
    grids: list[np.ndarray]
    values: np.ndarray  # (g1,) or (g1, g2)

    def write_csv(self, path: str | Path, comment: str = "") -> None:
        with open(path, "w", newline="") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            writer = csv.writer(fh)
            if len(self.feature_names) == 1:
                writer.writerow(["grid_value", "mean_probability"])
                for g, v in zip(self.grids[0], self.values):
                    writer.writerow([repr(float(g)), repr(float(v))])
            else:
                writer.writerow(["grid_value", "grid_value2", "mean_probability"])
                for i, g1 in enumerate(self.grids[0]):
                    for j, g2 in enumerate(self.grids[1]):
                        writer.writerow(
                            [repr(float(g1)), repr(float(g2)), repr(float(self.values[i, j]))]
                        )


def _default_grid(column: np.ndarray, grid_points: int) -> np.ndarray:
    lo, hi = float(np.min(column)), float(np.max(column))
    return np.linspace(lo, hi, grid_points)


def _resolve_features(features, names: list[str]) -> list[int]:
    resolved = []
    for f in features:
        if isinstance(f, str):
            if f not in names:
                raise ValueError(f"unknown feature '{f}'")
            resolved.append(names.index(f))
        else:
            resolved.append(int(f))
    return resolved


def partial_dependence(
    model,
    data,
    features,
    grids: list[np.ndarray] | None = None,
    grid_points: int = 20,
    statics: np.ndarray | None = None,
) -> PartialDependence:
    """Mean positive-class probability as 1 or 2 features sweep a grid.

    2-D inputs substitute scalar column values; 3-D inputs substitute a constant
    series into the channel. Grids default to 20 equally spaced points between
    the observed min and max.
    """
    if len(features) not in (1, 2):
        raise ValueError("partial dependence supports 1 or 2 features")
    if isinstance(data, FeatureMatrix):
        X = data.values
        names = list(data.column_names)
        tensor_mode = False
    else:
        X = np.asarray(data, dtype=np.float64)
        tensor_mode = X.ndim == 3
        if tensor_mode:
            names = list(getattr(model, "channel_names", [f"ch{j}" for j in range(X.shape[2])]))
        else:
            names = list(getattr(model, "feature_names", [f"f{j}" for j in range(X.shape[1])]))
    idx = _resolve_features(features, names)
    if grids is None:
        if tensor_mode:
            grids = [_default_grid(X[:, :, c].ravel(), grid_points) for c in idx]
        else:
            grids = [_default_grid(X[:, c], grid_points) for c in idx]
    grids = [np.asarray(g, dtype=np.float64) for g in grids]

    def predict_mean(values: list[float]) -> float:
        Xp = X.copy()
        for c, v in zip(idx, values):
            if tensor_mode:
                Xp[:, :, c] = v
            else:
                Xp[:, c] = v
        if tensor_mode:
            probs = model.predict_proba(Xp, statics)
        else:
            probs = model.predict_proba(Xp)
        return float(probs[:, 1].mean())

    if len(idx) == 1:
        values = np.array([predict_mean([g]) for g in grids[0]])
    else:
        values = np.array(
            [[predict_mean([g1, g2]) for g2 in grids[1]] for g1 in grids[0]]
        )
    return PartialDependence(
        feature_names=[names[c] for c in idx], grids=grids, values=values
    )
