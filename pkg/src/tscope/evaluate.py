"""Cross-validation protocols (LOSO, LOEO, random stratified) and per-class metrics.

LOSO groups by the listener subject (the owner of the prediction target);
grouping by speaker is available via ``group_by``. Fold metrics aggregate by
unweighted mean across folds; folds whose test split contains a single class
have no AUC and are skipped in the AUC mean rather than counted as zero.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def auc_score(labels, scores) -> float | None:
    """Rank-statistic AUC with tie correction (average ranks); None if one class."""
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=np.float64)
    n_pos = int(np.count_nonzero(labels == 1))
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(labels.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < labels.size:
        j = i
        while j + 1 < labels.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0  # average rank, 1-based
        i = j + 1
    rank_sum = float(np.sum(ranks[labels == 1]))
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def accuracy_score(labels, scores, threshold: float = 0.5) -> float:
    labels = np.asarray(labels)
    pred = (np.asarray(scores) >= threshold).astype(np.int64)
    return float(np.mean(pred == labels))


def log_loss_score(labels, scores, eps: float = 1e-12) -> float:
    labels = np.asarray(labels, dtype=np.float64)
    p = np.clip(np.asarray(scores, dtype=np.float64), eps, 1.0 - eps)
    return float(-np.mean(labels * np.log(p) + (1.0 - labels) * np.log(1.0 - p)))


def score_metric(metric: str, labels, scores, threshold: float = 0.5) -> float:
    if metric == "accuracy":
        return accuracy_score(labels, scores, threshold)
    if metric == "auc":
        value = auc_score(labels, scores)
        if value is None:
            raise ValueError("metric undefined: single-class labels")
        return value
    if metric == "log_loss":
        return log_loss_score(labels, scores)
    raise ValueError(f"unknown metric '{metric}'")


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float


@dataclass
class MetricsReport:
    per_class: dict[str, ClassMetrics]
    auc: float | None
    n: int
    positive_class: str
    threshold: float = 0.5

    def for_class(self, name: str) -> ClassMetrics:
        return self.per_class[name]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "threshold": self.threshold,
            "positive_class": self.positive_class,
            "auc": self.auc,
            "per_class": {
                name: {"precision": m.precision, "recall": m.recall, "f1": m.f1}
                for name, m in self.per_class.items()
            },
        }


def _prf(tp: int, fp: int, fn: int) -> ClassMetrics:
    precision = tp / (tp + fp) if (tp + fp) > 0 else 0.0
    recall = tp / (tp + fn) if (tp + fn) > 0 else 0.0
    f1 = (
        2.0 * precision * recall / (precision + recall)
        if (precision + recall) > 0
        else 0.0
    )
    return ClassMetrics(precision=precision, recall=recall, f1=f1)


def compute_metrics(
    labels,
    scores,
    threshold: float = 0.5,
    class_names: tuple[str, str] = ("negative", "positive"),
) -> MetricsReport:
    """Per-class precision/recall/F1 at the threshold plus rank-statistic AUC.

    ``scores`` are positive-class probabilities; a window is predicted positive
    when its score >= threshold.
    """
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=np.float64)
    if labels.size == 0:
        raise ValueError("need at least one instance")
    pred = (scores >= threshold).astype(np.int64)
    per_class = {}
    for cls, name in enumerate(class_names):
        tp = int(np.count_nonzero((pred == cls) & (labels == cls)))
        fp = int(np.count_nonzero((pred == cls) & (labels != cls)))
        fn = int(np.count_nonzero((pred != cls) & (labels == cls)))
        per_class[name] = _prf(tp, fp, fn)
    return MetricsReport(
        per_class=per_class,
        auc=auc_score(labels, scores),
        n=labels.size,
        positive_class=class_names[1],
        threshold=threshold,
    )


# ---------------------------------------------------------------------------
# Fold planning
# ---------------------------------------------------------------------------

@dataclass
class FoldPlan:
    scheme: str
    folds: list[tuple[np.ndarray, np.ndarray]]  # (train rows, test rows)
    group_keys: list[str]

    def __len__(self) -> int:
        return len(self.folds)


def _extract(data, name: str) -> list:
    attr = getattr(data, name)
    return attr() if callable(attr) else list(attr)


def _extract_labels(data) -> np.ndarray:
    attr = getattr(data, "labels")
    return np.asarray(attr() if callable(attr) else attr)


def plan_folds(
    data,
    scheme: str,
    seed: int = 0,
    k: int = 5,
    group_by: str = "listener",
) -> FoldPlan:
    """Deterministic fold plan; test sets partition the data set.

    ``data`` is any object exposing listener_ids / speaker_ids / episode_ids
    and labels (WindowSet or FeatureMatrix).
    """
    scheme = scheme.lower()
    labels = _extract_labels(data)
    n = labels.size
    if scheme in ("loso", "loeo"):
        if scheme == "loso":
            key = "listener_ids" if group_by == "listener" else "speaker_ids"
        else:
            key = "episode_ids"
        groups = np.asarray(_extract(data, key), dtype=object)
        unique = sorted(set(groups.tolist()))
        if len(unique) < 2:
            raise ValueError(f"{scheme.upper()} needs >= 2 groups, found {len(unique)}")
        folds = []
        for g in unique:
            test = np.nonzero(groups == g)[0]
            train = np.nonzero(groups != g)[0]
            folds.append((train, test))
        return FoldPlan(scheme=scheme, folds=folds, group_keys=[str(g) for g in unique])
    if scheme == "stratified":
        counts = np.bincount(labels, minlength=2)
        if k > int(counts[counts > 0].min()):
            raise ValueError(
                f"stratified k={k} exceeds the smallest class count {int(counts.min())}"
            )
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        assignment = np.empty(n, dtype=np.int64)
        for cls in np.unique(labels):
            rows = np.nonzero(labels == cls)[0]
            rows = rows[rng.permutation(rows.size)]
            assignment[rows] = np.arange(rows.size) % k
        folds = []
        for f in range(k):
            test = np.nonzero(assignment == f)[0]
            train = np.nonzero(assignment != f)[0]
            folds.append((train, test))
        return FoldPlan(
            scheme=scheme, folds=folds, group_keys=[f"fold{f}" for f in range(k)]
        )
    raise ValueError(f"unknown CV scheme '{scheme}'")


# ---------------------------------------------------------------------------
# CV driver
# ---------------------------------------------------------------------------

@dataclass
class CvResult:
    plan: FoldPlan
    per_fold: list[MetricsReport]
    class_names: tuple[str, str]

    def mean_auc(self) -> float | None:
        values = [m.auc for m in self.per_fold if m.auc is not None]
        return float(np.mean(values)) if values else None

    def mean_class(self, name: str) -> ClassMetrics:
        ps = [m.per_class[name].precision for m in self.per_fold]
        rs = [m.per_class[name].recall for m in self.per_fold]
        fs = [m.per_class[name].f1 for m in self.per_fold]
        return ClassMetrics(float(np.mean(ps)), float(np.mean(rs)), float(np.mean(fs)))

    def to_dict(self) -> dict:
        return {
            "scheme": self.plan.scheme,
            "n_folds": len(self.plan),
            "class_names": list(self.class_names),
            "summary": {
                "auc": self.mean_auc(),
                "per_class": {
                    name: {
                        "precision": self.mean_class(name).precision,
                        "recall": self.mean_class(name).recall,
                        "f1": self.mean_class(name).f1,
                    }
                    for name in self.class_names
                },
            },
            "folds": [
                dict(group=self.plan.group_keys[i], **m.to_dict())
                for i, m in enumerate(self.per_fold)
            ],
        }


def fold_seed(seed: int, fold_index: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(fold_index,)).generate_state(1)[0])


def run_cv(
    trainer,
    data,
    plan: FoldPlan,
    seed: int = 0,
    threshold: float = 0.5,
) -> CvResult:
    """Train per fold, score the held-out fold, aggregate across folds.

    ``trainer`` exposes fit(train_data, seed) -> model and
    predict(model, test_data) -> positive-class probabilities. All preprocessing
    statistics the trainer needs (standardization, relevance selection) must be
    fitted inside fit(), so test folds stay untouched.
    """
    labels = _extract_labels(data)
    class_names = getattr(data, "class_names", ("negative", "positive"))
    if callable(class_names):
        class_names = class_names()
    per_fold = []
    for i, (train_rows, test_rows) in enumerate(plan.folds):
        try:
            model = trainer.fit(data.take(train_rows), fold_seed(seed, i))
            scores = trainer.predict(model, data.take(test_rows))
        except Exception as exc:
            raise RuntimeError(
                f"fold {plan.group_keys[i]} ({i + 1}/{len(plan)}): {exc}"
            ) from exc
        per_fold.append(
            compute_metrics(labels[test_rows], scores, threshold, tuple(class_names))
        )
    return CvResult(plan=plan, per_fold=per_fold, class_names=tuple(class_names))


def save_metrics(result: CvResult, basepath: str | Path, extra: dict | None = None) -> list[Path]:
    """JSON with per-fold detail plus a one-row CSV summary for tabulation."""
    base = Path(basepath)
    payload = result.to_dict()
    if extra:
        payload.update(extra)
    json_path = base.with_suffix(".json")
    with open(json_path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    csv_path = base.with_suffix(".csv")
    positive = result.class_names[1]
    summary = result.mean_class(positive)
    auc = result.mean_auc()
    with open(csv_path, "w", newline="") as fh:
        if extra and "config_hash" in extra:
            fh.write(f"# config={extra['config_hash']}\n")
        fh.write("reported_class,precision,recall,f1,auc\n")
        fh.write(
            f"{positive},{summary.precision:.6f},{summary.recall:.6f},"
            f"{summary.f1:.6f},{'' if auc is None else format(auc, '.6f')}\n"
        )
    return [json_path, csv_path]
