"""End-to-end run assembly: ablation groups, trainers, and CV wiring.

A RunConfig pins one (task, threshold, feature groups, aggregate set, model,
CV scheme, seed) combination; its canonical hash is embedded in every output
so results trace back to the exact configuration that produced them.

Feature groups mirror the ablation structure of the study design:
``prosodic`` / ``visual`` select channels by their manifest tags, ``annotated``
adds the window's dummy-variable proportions, ``demographic`` adds one-hot
subject factors for both dyad members.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace, asdict
from pathlib import Path

import numpy as np

from .characterize import (
    FeatureMatrix,
    aggregate_set,
    characterize,
    demographic_features,
    select_relevant,
)
from .core import Corpus
from .evaluate import CvResult, FoldPlan, plan_folds, run_cv, score_metric
from .forest import ForestModel, ForestParams, train_forest
from .preprocess import LabelConfig, WindowSet, build_windowset
from .resnet import ResnetConfig, ResnetModel, train_resnet_arrays

FEATURE_GROUPS = ("annotated", "prosodic", "visual", "demographic")


@dataclass
class RunConfig:
    task: str = "bep"                       # "ldp" | "bep"
    tau: float = 0.25
    agg: str = "mean"                       # forest aggregate set
    features: tuple[str, ...] = ("prosodic", "visual")
    model: str = "forest"                   # "forest" | "resnet"
    cv: str = "loso"                        # "loso" | "loeo" | "stratified"
    k: int = 5
    group_by: str = "listener"              # LOSO grouping key
    seed: int = 0
    select_fdr: float | None = None         # relevance filter inside train folds
    forest: ForestParams = field(default_factory=ForestParams)
    resnet: ResnetConfig = field(default_factory=ResnetConfig)
    label_config: LabelConfig = field(default_factory=LabelConfig)

    def __post_init__(self):
        self.task = self.task.lower()
        if self.task not in ("ldp", "bep"):
            raise ValueError(f"unknown task '{self.task}'")
        if self.model not in ("forest", "resnet"):
            raise ValueError(f"unknown model '{self.model}'")
        unknown = set(self.features) - set(FEATURE_GROUPS)
        if unknown:
            raise ValueError(f"unknown feature groups {sorted(unknown)}")
        self.features = tuple(f for f in FEATURE_GROUPS if f in self.features)
        self.label_config.tau = self.tau

    def canonical(self) -> dict:
        payload = asdict(self)
        payload["features"] = list(self.features)
        return payload

    def config_hash(self) -> str:
        text = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        raw = dict(raw)
        forest = ForestParams(**raw.pop("forest", {}))
        resnet = ResnetConfig(**raw.pop("resnet", {}))
        label_raw = raw.pop("label_config", {})
        label = LabelConfig(
            tau=float(label_raw.get("tau", raw.get("tau", 0.25))),
            w_steps=int(label_raw.get("w_steps", 90)),
            engagement_track=label_raw.get("engagement_track", "engagement"),
            engagement_map=dict(
                label_raw.get(
                    "engagement_map",
                    {"attentive": "listening", "not-listening": "not-listening"},
                )
            ),
            bc_tracks={
                k: list(v)
                for k, v in label_raw.get(
                    "bc_tracks", {"nod": ["nod"], "smile": ["smile"]}
                ).items()
            },
        )
        if "features" in raw:
            raw["features"] = tuple(raw["features"])
        return cls(forest=forest, resnet=resnet, label_config=label, **raw)


# ---------------------------------------------------------------------------
# Task data bundles
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class TensorData:
    """Raw tensors plus static features, in run_cv's dataset shape."""

    tensor: np.ndarray                  # (n, t, c)
    statics: np.ndarray                 # (n, s); s may be 0
    labels: np.ndarray
    window_ids: list[str]
    episode_ids: list[str]
    listener_ids: list[str]
    speaker_ids: list[str]
    channel_names: list[str]
    static_names: list[str]
    class_names: tuple[str, str]

    def __len__(self) -> int:
        return self.tensor.shape[0]

    def take(self, rows) -> "TensorData":
        rows = np.asarray(rows)
        return TensorData(
            tensor=self.tensor[rows],
            statics=self.statics[rows],
            labels=self.labels[rows],
            window_ids=[self.window_ids[i] for i in rows],
            episode_ids=[self.episode_ids[i] for i in rows],
            listener_ids=[self.listener_ids[i] for i in rows],
            speaker_ids=[self.speaker_ids[i] for i in rows],
            channel_names=self.channel_names,
            static_names=self.static_names,
            class_names=self.class_names,
        )


def select_channels(corpus: Corpus, groups: tuple[str, ...]) -> list[str]:
    wanted = {g for g in groups if g in ("prosodic", "visual")}
    return [
        c for c in corpus.channel_names if corpus.channel_tags.get(c, "visual") in wanted
    ]


def build_task_windows(corpus: Corpus, config: RunConfig) -> WindowSet:
    channels = select_channels(corpus, config.features)
    if not channels:
        raise ValueError("feature groups select no channels; add 'prosodic' or 'visual'")
    return build_windowset(
        corpus,
        config.task,
        config.label_config,
        channels=channels,
        include_annotations="annotated" in config.features,
    )


def build_tensor_data(corpus: Corpus, config: RunConfig, ws: WindowSet | None = None) -> TensorData:
    ws = ws or build_task_windows(corpus, config)
    statics = ws.aggregates()
    static_names = list(ws.dummy_names)
    if "demographic" in config.features:
        names, demo, _ = demographic_features(corpus, ws)
        statics = np.hstack([statics, demo])
        static_names += names
    return TensorData(
        tensor=ws.tensor(),
        statics=statics,
        labels=ws.labels(),
        window_ids=ws.window_ids(),
        episode_ids=ws.episode_ids(),
        listener_ids=ws.listener_ids(),
        speaker_ids=ws.speaker_ids(),
        channel_names=list(ws.channel_names),
        static_names=static_names,
        class_names=ws.class_names(),
    )


def build_feature_matrix(corpus: Corpus, config: RunConfig, ws: WindowSet | None = None) -> FeatureMatrix:
    ws = ws or build_task_windows(corpus, config)
    matrix = characterize(
        ws, aggregate_set(config.agg), include_annotations="annotated" in config.features
    )
    if "demographic" in config.features:
        names, demo, prov = demographic_features(corpus, ws)
        matrix = matrix.with_columns(names, demo, prov)
    return matrix


# ---------------------------------------------------------------------------
# Trainers (run_cv protocol: fit(train, seed) -> model, predict(model, test))
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class FittedForest:
    model: ForestModel
    columns: list[int] | None  # relevance-selected column indices, if any


class ForestTrainer:
    """CART forest over a FeatureMatrix, with optional per-fold relevance selection.

    When selection keeps nothing at the requested FDR, the single smallest-p
    column is used so the fold can still train.
    """

    def __init__(self, params: ForestParams | None = None, select_fdr: float | None = None,
                 jobs: int = 1):
        self.params = params or ForestParams()
        self.select_fdr = select_fdr
        self.jobs = jobs

    def fit(self, train: FeatureMatrix, seed: int) -> FittedForest:
        columns = None
        matrix = train
        if self.select_fdr is not None:
            filtered, report = select_relevant(train, fdr=self.select_fdr)
            if filtered.n_features == 0:
                best = int(np.argmin([r["p_value"] for r in report]))
                columns = [best]
            else:
                kept = {r["feature"] for r in report if r["kept"]}
                columns = [j for j, n in enumerate(train.column_names) if n in kept]
            matrix = train.select_columns(columns)
        model = train_forest(matrix, params=replace(self.params, seed=seed), jobs=self.jobs)
        return FittedForest(model=model, columns=columns)

    def predict(self, fitted: FittedForest, test: FeatureMatrix) -> np.ndarray:
        matrix = test if fitted.columns is None else test.select_columns(fitted.columns)
        return fitted.model.predict_proba(matrix)[:, 1]


class ResnetTrainer:
    def __init__(self, config: ResnetConfig | None = None):
        self.config = config or ResnetConfig()

    def fit(self, train: TensorData, seed: int) -> ResnetModel:
        return train_resnet_arrays(
            train.tensor,
            train.statics if train.statics.shape[1] else None,
            train.labels,
            config=self.config,
            seed=seed,
            channel_names=train.channel_names,
            static_names=train.static_names,
            class_names=train.class_names,
        )

    def predict(self, model: ResnetModel, test: TensorData) -> np.ndarray:
        statics = test.statics if test.statics.shape[1] else None
        return model.predict_proba(test.tensor, statics)[:, 1]


def make_trainer(config: RunConfig, jobs: int = 1):
    if config.model == "forest":
        return ForestTrainer(config.forest, select_fdr=config.select_fdr, jobs=jobs)
    return ResnetTrainer(config.resnet)


def make_dataset(corpus: Corpus, config: RunConfig):
    ws = build_task_windows(corpus, config)
    if config.model == "forest":
        return build_feature_matrix(corpus, config, ws)
    return build_tensor_data(corpus, config, ws)


def evaluate_run(corpus: Corpus, config: RunConfig, jobs: int = 1) -> CvResult:
    """Train/evaluate one configuration under its CV scheme."""
    data = make_dataset(corpus, config)
    plan = plan_folds(data, config.cv, seed=config.seed, k=config.k, group_by=config.group_by)
    trainer = make_trainer(config, jobs=jobs)
    return run_cv(trainer, data, plan, seed=config.seed)


def cv_evaluator(data: TensorData, config: RunConfig, plan: FoldPlan, metric: str = "auc"):
    """Callable(tensor, statics) -> mean fold metric, retraining fresh models.

    This is the Train+Score procedure handed to the temporal-shuffle study: the
    fold plan and seeds stay fixed while the tensors vary.
    """
    trainer = ResnetTrainer(config.resnet)

    def evaluate(tensor: np.ndarray, statics: np.ndarray | None) -> float:
        bundle = TensorData(
            tensor=np.asarray(tensor, dtype=np.float64),
            statics=(
                np.asarray(statics, dtype=np.float64)
                if statics is not None
                else np.zeros((len(data), 0))
            ),
            labels=data.labels,
            window_ids=data.window_ids,
            episode_ids=data.episode_ids,
            listener_ids=data.listener_ids,
            speaker_ids=data.speaker_ids,
            channel_names=data.channel_names,
            static_names=data.static_names if statics is not None else [],
            class_names=data.class_names,
        )
        result = run_cv(trainer, bundle, plan, seed=config.seed)
        if metric == "auc":
            value = result.mean_auc()
            if value is None:
                raise ValueError("AUC undefined on every fold")
            return float(value)
        if metric == "f1":
            return result.mean_class(bundle.class_names[1]).f1
        values = []
        for (train_rows, test_rows), report in zip(plan.folds, result.per_fold):
            del train_rows
            values.append(report.auc)
        raise ValueError(f"unsupported CV metric '{metric}'")

    return evaluate


def holdout_split(data, fraction: float = 0.3, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Listener-grouped train/test split; returns (train rows, test rows)."""
    listeners = data.listener_ids() if callable(getattr(data, "listener_ids", None)) else data.listener_ids
    listeners = np.asarray(list(listeners), dtype=object)
    unique = sorted(set(listeners.tolist()))
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(7,)))
    order = [unique[i] for i in rng.permutation(len(unique))]
    n_test = max(1, int(round(fraction * len(unique))))
    test_subjects = set(order[:n_test])
    test_mask = np.array([l in test_subjects for l in listeners])
    if test_mask.all() or not test_mask.any():
        raise ValueError("degenerate holdout split; adjust fraction")
    return np.nonzero(~test_mask)[0], np.nonzero(test_mask)[0]
