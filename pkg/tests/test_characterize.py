import numpy as np
import pytest

from tscope.characterize import (
    CHARACTERISTICS,
    aggregate_set,
    basic_set,
    benjamini_yekutieli,
    characterize,
    ch_approximate_entropy,
    ch_autocorrelation,
    demographic_features,
    load_feature_matrix,
    mean_set,
    save_feature_matrix,
    select_relevant,
    tsfresh_subset_catalog,
)
from tscope.preprocess import LabelConfig, build_windowset
from tscope.synth import ChannelSpec, SynthConfig, generate


def _windowset(seed=0, n_subjects=3, length_s=15.0):
    cfg = SynthConfig(
        n_subjects=n_subjects,
        episodes_per_subject=1,
        episode_length_s=length_s,
        channels=[ChannelSpec("a", kind="noise"), ChannelSpec("b", kind="noise")],
        seed=seed,
    )
    corpus, _ = generate(cfg)
    return corpus, build_windowset(corpus, "bep", LabelConfig())


# -- characteristic goldens ----------------------------------------------------

def test_basic_set_hand_computed():
    # Hand oracle on [1,2,3,4]: sample sd = sqrt(5/3); quantiles by linear
    # interpolation between order statistics.
    series = np.array([1.0, 2.0, 3.0, 4.0])
    values = dict(zip(basic_set().labels(), basic_set().apply(series)))
    assert values["mean"] == pytest.approx(2.5)
    assert values["stdev"] == pytest.approx(1.2909944, abs=1e-7)
    assert values["min"] == 1.0 and values["max"] == 4.0
    assert values["median"] == pytest.approx(2.5)
    assert values["q1"] == pytest.approx(1.75)
    assert values["q3"] == pytest.approx(3.25)


def test_mean_set_constant_channel():
    series = np.full(90, 7.25)
    assert mean_set().apply(series) == [pytest.approx(7.25)]


def test_approximate_entropy_constant_is_zero():
    assert ch_approximate_entropy(np.full(90, 1.3), m=2, r=0.2) == 0.0


def test_approximate_entropy_matches_naive_reference():
    # Independent oracle: textbook O(n^2) implementation with explicit loops.
    def naive_apen(x, m, r_mult):
        n = x.size
        r = r_mult * np.std(x, ddof=1)

        def phi(mm):
            templates = [x[i : i + mm] for i in range(n - mm + 1)]
            total = 0.0
            for ti in templates:
                count = sum(
                    1 for tj in templates if np.max(np.abs(ti - tj)) <= r
                )
                total += np.log(count / len(templates))
            return total / len(templates)

        return phi(m) - phi(m + 1)

    rng = np.random.default_rng(5)
    x = rng.normal(size=60)
    assert ch_approximate_entropy(x, m=2, r=0.2) == pytest.approx(
        naive_apen(x, 2, 0.2), abs=1e-12
    )


def test_autocorrelation_alternating_series():
    # Direct formula oracle: alternating +-1 has lag-1 autocorrelation -1.
    x = np.tile([1.0, -1.0], 45)
    assert ch_autocorrelation(x, lag=1) == pytest.approx(-1.0, abs=1e-12)
    mu = x.mean()
    direct = np.mean((x[:-1] - mu) * (x[1:] - mu)) / np.mean((x - mu) ** 2)
    assert ch_autocorrelation(x, lag=1) == pytest.approx(direct, abs=1e-15)


def test_linear_trend_slope_exact_on_line():
    t = np.arange(90, dtype=np.float64)
    a, b = 0.37, -4.0
    values = dict(
        zip(
            [lbl for lbl, _, _ in tsfresh_subset_catalog().characteristics],
            tsfresh_subset_catalog().apply(a * t + b),
        )
    )
    assert values["linear_trend_slope"] == pytest.approx(a, abs=1e-9)
    assert values["linear_trend_intercept"] == pytest.approx(b, abs=1e-7)


def test_catalog_size():
    catalog = tsfresh_subset_catalog()
    distinct = {char for _, char, _ in catalog.characteristics}
    assert len(distinct) >= 25
    assert len(catalog.characteristics) >= 40


def test_catalog_degenerate_series_never_raises():
    catalog = tsfresh_subset_catalog()
    for series in (np.zeros(90), np.full(90, 5.0), np.zeros(3)):
        values = catalog.apply(series)
        assert np.isfinite(values).all()


# -- order (in)dependence ------------------------------------------------------

ORDER_FREE = [
    "mean", "median", "minimum", "maximum", "variance", "standard_deviation",
    "skewness", "kurtosis", "abs_energy", "count_above_mean", "count_below_mean",
    "quantile",
]
ORDER_BOUND = [
    "autocorrelation", "linear_trend_slope", "approximate_entropy",
    "longest_strike_above_mean", "first_location_of_maximum", "number_peaks",
    "cid_ce",
]


def test_order_independent_characteristics_shuffle_invariant():
    rng = np.random.default_rng(17)
    x = rng.normal(size=90)
    shuffled = x[rng.permutation(90)]
    for name in ORDER_FREE:
        fn = CHARACTERISTICS[name]
        kwargs = {"q": 0.3} if name == "quantile" else {}
        assert fn(x, **kwargs) == pytest.approx(fn(shuffled, **kwargs), rel=1e-12)


def test_order_dependent_characteristics_change_under_shuffle():
    rng = np.random.default_rng(23)
    x = rng.normal(size=90)
    shuffled = x[rng.permutation(90)]
    kwargs = {
        "autocorrelation": {"lag": 1},
        "approximate_entropy": {"m": 2, "r": 0.2},
        "number_peaks": {"n": 3},
        "cid_ce": {"normalize": True},
    }
    for name in ORDER_BOUND:
        fn = CHARACTERISTICS[name]
        assert fn(x, **kwargs.get(name, {})) != pytest.approx(
            fn(shuffled, **kwargs.get(name, {})), rel=1e-9
        )


def test_trend_and_extrema_locations_flip_under_reversal():
    rng = np.random.default_rng(29)
    x = rng.normal(size=90) + 0.05 * np.arange(90)
    rev = x[::-1]
    assert CHARACTERISTICS["linear_trend_slope"](x) == pytest.approx(
        -CHARACTERISTICS["linear_trend_slope"](rev), rel=1e-9
    )
    assert CHARACTERISTICS["first_location_of_maximum"](x) != pytest.approx(
        CHARACTERISTICS["first_location_of_maximum"](rev)
    )


# -- characterize over windowsets ----------------------------------------------

def test_characterize_shapes_and_columns():
    _, ws = _windowset()
    matrix = characterize(ws, basic_set())
    n_agg = 2 * 7  # 2 channels x 7 Basic characteristics
    assert matrix.values.shape == (len(ws), n_agg + len(ws.dummy_names))
    assert matrix.column_names[0] == "a__mean"
    assert matrix.column_names[n_agg:] == list(ws.dummy_names)
    assert len(set(matrix.column_names)) == matrix.n_features
    assert np.isfinite(matrix.values).all()


def test_characterize_deterministic_and_row_equivariant():
    _, ws = _windowset()
    first = characterize(ws, basic_set())
    second = characterize(ws, basic_set())
    assert np.array_equal(first.values, second.values)

    perm = np.random.default_rng(1).permutation(len(ws.windows))
    import copy

    ws2 = copy.copy(ws)
    ws2.windows = [ws.windows[i] for i in perm]
    permuted = characterize(ws2, basic_set())
    assert np.array_equal(permuted.values, first.values[perm])


def test_demographic_features_one_hot_both_roles():
    corpus, ws = _windowset()
    names, matrix, prov = demographic_features(corpus, ws)
    assert matrix.shape == (len(ws), len(names))
    assert any(n.startswith("demo_listener_gender_") for n in names)
    assert any(n.startswith("demo_speaker_income_") for n in names)
    # numeric factor passes through as one column per role
    assert "demo_listener_asq_score" in names
    one_hot = [j for j, n in enumerate(names) if "gender" in n]
    assert set(np.unique(matrix[:, one_hot])) <= {0.0, 1.0}


def test_feature_matrix_csv_round_trip(tmp_path):
    _, ws = _windowset()
    matrix = characterize(ws, mean_set())
    save_feature_matrix(matrix, tmp_path / "m", header_comment="config=abc")
    loaded = load_feature_matrix(tmp_path / "m")
    assert loaded.column_names == matrix.column_names
    assert np.array_equal(loaded.values, matrix.values)
    assert np.array_equal(loaded.labels, matrix.labels)
    assert loaded.window_ids == matrix.window_ids
    assert loaded.class_names == matrix.class_names


# -- relevance selection ---------------------------------------------------------

def test_select_relevant_keeps_label_column():
    rng = np.random.default_rng(2)
    n = 40
    labels = np.array([0, 1] * (n // 2))
    from tscope.characterize import FeatureMatrix

    values = np.column_stack([labels.astype(float), rng.normal(size=n)])
    matrix = FeatureMatrix(
        values=values,
        column_names=["leak", "noise"],
        provenance=[{}, {}],
        window_ids=[str(i) for i in range(n)],
        episode_ids=["e"] * n,
        listener_ids=["l"] * n,
        speaker_ids=["s"] * n,
        labels=labels,
    )
    kept, report = select_relevant(matrix, fdr=0.05)
    by_name = {r["feature"]: r for r in report}
    assert by_name["leak"]["kept"] is True
    assert by_name["leak"]["p_value"] < 1e-6
    assert "leak" in kept.column_names


def test_select_relevant_rejects_noise_in_most_trials():
    # Monte-Carlo oracle: a pure-noise column under BY at 0.05 survives rarely.
    from tscope.characterize import FeatureMatrix

    n = 500
    rejected = 0
    trials = 40
    for trial in range(trials):
        rng = np.random.default_rng(100 + trial)
        labels = rng.integers(0, 2, size=n)
        while len(np.unique(labels)) < 2:
            labels = rng.integers(0, 2, size=n)
        matrix = FeatureMatrix(
            values=rng.normal(size=(n, 1)),
            column_names=["noise"],
            provenance=[{}],
            window_ids=[str(i) for i in range(n)],
            episode_ids=["e"] * n,
            listener_ids=["l"] * n,
            speaker_ids=["s"] * n,
            labels=labels,
        )
        _, report = select_relevant(matrix, fdr=0.05)
        if not report[0]["kept"]:
            rejected += 1
    assert rejected >= 0.9 * trials


def test_select_relevant_degenerate_target():
    from tscope.characterize import FeatureMatrix

    matrix = FeatureMatrix(
        values=np.zeros((10, 1)),
        column_names=["x"],
        provenance=[{}],
        window_ids=[str(i) for i in range(10)],
        episode_ids=["e"] * 10,
        listener_ids=["l"] * 10,
        speaker_ids=["s"] * 10,
        labels=np.zeros(10, dtype=int),
    )
    with pytest.raises(ValueError, match="degenerate target"):
        select_relevant(matrix)


def test_select_relevant_never_keeps_p_above_fdr():
    rng = np.random.default_rng(8)
    n = 200
    labels = np.array([0, 1] * (n // 2))
    from tscope.characterize import FeatureMatrix

    cols = [labels + rng.normal(0, 0.5, size=n) for _ in range(3)]
    cols += [rng.normal(size=n) for _ in range(5)]
    matrix = FeatureMatrix(
        values=np.column_stack(cols),
        column_names=[f"c{j}" for j in range(8)],
        provenance=[{} for _ in range(8)],
        window_ids=[str(i) for i in range(n)],
        episode_ids=["e"] * n,
        listener_ids=["l"] * n,
        speaker_ids=["s"] * n,
        labels=labels,
    )
    _, report = select_relevant(matrix, fdr=0.05)
    for row in report:
        if row["kept"]:
            assert row["p_value"] <= 0.05


def test_benjamini_yekutieli_monotone():
    p = np.array([1e-8, 1e-7, 0.2, 0.9])
    keep = benjamini_yekutieli(p, 0.05)
    assert keep.tolist() == [True, True, False, False]


def test_aggregate_set_lookup():
    assert aggregate_set("tsfresh").name == "TsfreshSubset"
    with pytest.raises(ValueError, match="unknown aggregate set"):
        aggregate_set("everything")
