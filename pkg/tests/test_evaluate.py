import numpy as np
import pytest

from tscope.characterize import FeatureMatrix, characterize, mean_set
from tscope.evaluate import (
    auc_score,
    compute_metrics,
    plan_folds,
    run_cv,
)
from tscope.forest import ForestParams
from tscope.pipeline import ForestTrainer
from tscope.preprocess import LabelConfig, build_windowset
from tscope.synth import ChannelSpec, SynthConfig, generate


# -- metrics ---------------------------------------------------------------------

def test_metrics_formula_example():
    # TP=2, FP=1, FN=0 for the positive class.
    labels = np.array([1, 1, 0])
    scores = np.array([0.9, 0.8, 0.7])
    report = compute_metrics(labels, scores, class_names=("neg", "pos"))
    pos = report.for_class("pos")
    assert pos.precision == pytest.approx(2 / 3)
    assert pos.recall == 1.0
    assert pos.f1 == pytest.approx(0.8)


def test_auc_perfect_ranking():
    assert auc_score([1, 1, 0, 0], [0.9, 0.8, 0.3, 0.1]) == 1.0


def test_auc_all_ties_is_half():
    assert auc_score([1, 0, 1, 0], [0.5, 0.5, 0.5, 0.5]) == 0.5


def test_auc_single_class_absent():
    assert auc_score([1, 1, 1], [0.2, 0.3, 0.4]) is None
    report = compute_metrics([1, 1], [0.9, 0.8])
    assert report.auc is None


def test_f1_defined_when_precision_recall_zero():
    # No predicted positives and no true positives among predictions.
    report = compute_metrics([1, 0], [0.1, 0.9], class_names=("neg", "pos"))
    pos = report.for_class("pos")
    assert (pos.precision, pos.recall, pos.f1) == (0.0, 0.0, 0.0)


def test_auc_invariant_under_monotone_transform():
    rng = np.random.default_rng(3)
    labels = rng.integers(0, 2, 50)
    scores = rng.random(50)
    base = auc_score(labels, scores)
    assert auc_score(labels, np.exp(4 * scores)) == pytest.approx(base, abs=1e-12)


def test_metrics_class_swap_symmetry():
    # Relabeling 1-y with complemented scores 1-s swaps which class is marked
    # positive; every metric must carry over to the renamed class unchanged.
    rng = np.random.default_rng(4)
    labels = rng.integers(0, 2, 60)
    scores = rng.random(60)
    a = compute_metrics(labels, scores, class_names=("neg", "pos"))
    b = compute_metrics(1 - labels, 1 - scores, class_names=("pos", "neg"))
    assert a.for_class("pos").recall == pytest.approx(b.for_class("pos").recall)
    assert a.for_class("neg").f1 == pytest.approx(b.for_class("neg").f1)
    assert a.auc == pytest.approx(b.auc, abs=1e-12)


# -- fold planning ----------------------------------------------------------------

def _tiny_matrix(listeners, episodes, labels):
    n = len(labels)
    return FeatureMatrix(
        values=np.zeros((n, 1)),
        column_names=["x"],
        provenance=[{}],
        window_ids=[str(i) for i in range(n)],
        episode_ids=list(episodes),
        listener_ids=list(listeners),
        speaker_ids=["sp"] * n,
        labels=np.asarray(labels),
    )


def test_loso_three_subjects():
    listeners = ["A"] * 3 + ["B"] * 4 + ["C"] * 2
    matrix = _tiny_matrix(listeners, ["e"] * 9, [0, 1] * 4 + [0])
    plan = plan_folds(matrix, "loso")
    assert len(plan) == 3
    for (train, test), key in zip(plan.folds, plan.group_keys):
        tested = {listeners[i] for i in test}
        assert tested == {key}
        assert not set(train) & set(test)
    all_test = sorted(i for _, test in plan.folds for i in test)
    assert all_test == list(range(9))


def test_loeo_58_episodes():
    cfg = SynthConfig(
        n_subjects=29,
        episodes_per_subject=2,
        episode_length_s=6.0,
        channels=[ChannelSpec("x", kind="noise")],
        seed=1,
    )
    corpus, _ = generate(cfg)
    assert len(corpus.episodes) == 58
    ws = build_windowset(corpus, "ldp", LabelConfig())
    plan = plan_folds(ws, "loeo")
    assert len(plan) == 58


def test_stratified_allocation():
    rng = np.random.default_rng(0)
    labels = np.array([1] * 40 + [0] * 60)
    labels = labels[rng.permutation(100)]
    matrix = _tiny_matrix(["s"] * 100, ["e"] * 100, labels)
    plan = plan_folds(matrix, "stratified", seed=5, k=5)
    for _, test in plan.folds:
        positives = int(labels[test].sum())
        assert abs(positives - 8) <= 1
    all_test = sorted(i for _, test in plan.folds for i in test)
    assert all_test == list(range(100))


def test_plan_insufficient_groups():
    matrix = _tiny_matrix(["A"] * 4, ["e"] * 4, [0, 1, 0, 1])
    with pytest.raises(ValueError, match="needs >= 2 groups"):
        plan_folds(matrix, "loso")


def test_stratified_k_exceeds_class_count():
    matrix = _tiny_matrix(["s"] * 6, ["e"] * 6, [0, 0, 0, 0, 1, 1])
    with pytest.raises(ValueError, match="exceeds"):
        plan_folds(matrix, "stratified", k=5)


# -- CV driver ---------------------------------------------------------------------

class PriorTrainer:
    """Constant classifier predicting the training prior."""

    def fit(self, train, seed):
        return float(np.mean(train.labels))

    def predict(self, prior, test):
        return np.full(len(test), prior)


def test_constant_classifier_accuracy_matches_prior():
    rng = np.random.default_rng(6)
    labels = (rng.random(90) < 0.7).astype(int)
    matrix = _tiny_matrix([f"s{i % 3}" for i in range(90)], ["e"] * 90, labels)
    plan = plan_folds(matrix, "loso")
    result = run_cv(PriorTrainer(), matrix, plan)
    # Prior > 0.5 in every fold, so the constant classifier always predicts 1.
    for report, (_, test) in zip(result.per_fold, plan.folds):
        share = labels[test].mean()
        assert report.for_class("positive").recall == 1.0
        assert report.for_class("positive").precision == pytest.approx(share)


def test_loso_forest_on_mean_coded_synth(mean_coded_corpus):
    corpus, _, synth_cfg = mean_coded_corpus
    ws = build_windowset(corpus, "bep", LabelConfig(tau=synth_cfg.tau))
    matrix = characterize(ws, mean_set(), include_annotations=False)
    plan = plan_folds(matrix, "loso")
    trainer = ForestTrainer(ForestParams(n_trees=100))
    result = run_cv(trainer, matrix, plan, seed=0)
    assert result.mean_auc() >= 0.9


def test_leakage_tripwire_fold_membership_feature():
    # Labels are pure noise; a feature marking each row's own test fold must
    # not let a correctly isolated CV harness beat chance.
    rng = np.random.default_rng(11)
    n_subjects, per = 6, 20
    listeners = [f"s{i}" for i in range(n_subjects) for _ in range(per)]
    labels = rng.integers(0, 2, n_subjects * per)
    fold_of = np.array([int(l[1:]) for l in listeners], dtype=float)
    matrix = _tiny_matrix(listeners, ["e"] * len(labels), labels)
    matrix = FeatureMatrix(
        values=np.column_stack([fold_of, rng.normal(size=len(labels))]),
        column_names=["leak", "noise"],
        provenance=[{}, {}],
        window_ids=matrix.window_ids,
        episode_ids=matrix.episode_ids,
        listener_ids=matrix.listener_ids,
        speaker_ids=matrix.speaker_ids,
        labels=matrix.labels,
    )
    plan = plan_folds(matrix, "loso")
    trainer = ForestTrainer(ForestParams(n_trees=50))
    result = run_cv(trainer, matrix, plan, seed=1)
    assert abs(result.mean_auc() - 0.5) <= 0.2


def test_run_cv_annotates_fold_errors():
    class Exploder:
        def fit(self, train, seed):
            raise ValueError("boom")

        def predict(self, model, test):  # pragma: no cover
            return np.zeros(len(test))

    matrix = _tiny_matrix(["A", "A", "B", "B"], ["e"] * 4, [0, 1, 0, 1])
    plan = plan_folds(matrix, "loso")
    with pytest.raises(RuntimeError, match="fold A"):
        run_cv(Exploder(), matrix, plan)
