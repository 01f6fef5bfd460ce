"""tscope: windowed behavioral time-series classification with interpretability.

Pipeline: corpus ingestion -> derivative features and disjoint windowing ->
engagement / backchanneling-extent labels -> scalar characterization or raw
tensors -> forest / residual-conv models -> grouped cross-validation,
permutation importance (2-D and 3-D), temporal-shuffle importance, partial
dependence, and a socio-demographic K-S screen. A seeded synthetic corpus
generator with known ground truth backs the verification suite.

The heavyweight model backends (``tscope.resnet``) import torch lazily via
their own module; importing ``tscope`` itself stays light.
"""

from .core import (
    Corpus,
    CorpusError,
    EpisodeTable,
    SubjectProfile,
    load_corpus,
    validate_corpus,
    write_corpus,
)
from .preprocess import (
    LabelConfig,
    Window,
    WindowSet,
    aggregate_annotations,
    bc_proportion,
    build_windowset,
    derivative,
    derive_channels,
    episode_proportions,
    label_bep,
    label_ldp,
    make_windows,
)
from .characterize import (
    AggregateSet,
    FeatureMatrix,
    aggregate_set,
    basic_set,
    characterize,
    mean_set,
    mean_stdev_set,
    select_relevant,
    tsfresh_subset_catalog,
)
from .evaluate import (
    FoldPlan,
    MetricsReport,
    auc_score,
    compute_metrics,
    plan_folds,
    run_cv,
)
from .forest import ForestModel, ForestParams, mdi_importance, predict_proba_forest, train_forest
from .stats import (
    EcdfCurve,
    KsResult,
    bin_factor,
    demographic_screen,
    ecdf,
    ks_two_sample,
    randomization_test,
)
from .synth import ChannelSpec, FactorEffect, GroundTruth, SynthConfig, generate

__version__ = "0.1.0"

__all__ = [
    "AggregateSet",
    "ChannelSpec",
    "Corpus",
    "CorpusError",
    "EcdfCurve",
    "EpisodeTable",
    "FactorEffect",
    "FeatureMatrix",
    "FoldPlan",
    "ForestModel",
    "ForestParams",
    "GroundTruth",
    "KsResult",
    "LabelConfig",
    "MetricsReport",
    "SubjectProfile",
    "SynthConfig",
    "Window",
    "WindowSet",
    "aggregate_annotations",
    "aggregate_set",
    "auc_score",
    "basic_set",
    "bc_proportion",
    "bin_factor",
    "build_windowset",
    "characterize",
    "compute_metrics",
    "demographic_screen",
    "derivative",
    "derive_channels",
    "ecdf",
    "episode_proportions",
    "generate",
    "ks_two_sample",
    "label_bep",
    "label_ldp",
    "load_corpus",
    "make_windows",
    "mdi_importance",
    "mean_set",
    "mean_stdev_set",
    "plan_folds",
    "predict_proba_forest",
    "randomization_test",
    "run_cv",
    "select_relevant",
    "train_forest",
    "tsfresh_subset_catalog",
    "validate_corpus",
    "write_corpus",
]
