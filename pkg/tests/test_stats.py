import numpy as np
import pytest
from scipy.special import kolmogorov as scipy_kolmogorov

from tscope.preprocess import LabelConfig
from tscope.stats import (
    bin_factor,
    default_screen_factors,
    demographic_screen,
    ecdf,
    kolmogorov_sf,
    ks_two_sample,
    randomization_test,
    write_screen_csv,
)
from tscope.synth import ChannelSpec, FactorEffect, SynthConfig, generate


# -- ECDF ------------------------------------------------------------------------

def test_ecdf_single_point():
    curve = ecdf([1.0])
    assert curve.evaluate(0.999)[0] == 0.0
    assert curve.evaluate(1.0)[0] == 1.0


def test_ecdf_with_ties():
    curve = ecdf([1.0, 1.0, 2.0])
    assert curve.evaluate(1.0)[0] == pytest.approx(2 / 3)
    assert curve.evaluate(1.5)[0] == pytest.approx(2 / 3)
    assert curve.evaluate(2.0)[0] == 1.0


def test_ecdf_at_infinity():
    rng = np.random.default_rng(0)
    curve = ecdf(rng.normal(size=37))
    assert curve.evaluate(np.inf)[0] == 1.0


def test_ecdf_empty_sample():
    with pytest.raises(ValueError, match="empty sample"):
        ecdf([])


# -- K-S -------------------------------------------------------------------------

def test_ks_identical_samples():
    x = [0.3, 0.7, 1.1]
    assert ks_two_sample(x, x).d == 0.0


def test_ks_disjoint_samples():
    assert ks_two_sample([0, 0, 0], [1, 1, 1]).d == 1.0


def test_ks_third_example_grid_oracle():
    a = np.array([1.0, 2.0, 3.0])
    b = np.array([1.5, 2.5, 3.5])
    # Independent oracle: evaluate both ECDFs on a dense grid of breakpoints.
    grid = np.unique(np.concatenate([a, b]))
    fa = ecdf(a).evaluate(grid)
    fb = ecdf(b).evaluate(grid)
    expected = np.max(np.abs(fa - fb))
    result = ks_two_sample(a, b)
    assert expected == pytest.approx(1 / 3)
    assert result.d == pytest.approx(1 / 3, abs=1e-15)


def test_ks_invariant_under_increasing_transform():
    rng = np.random.default_rng(5)
    a = rng.normal(size=23)
    b = rng.normal(0.4, 1.3, size=31)
    base = ks_two_sample(a, b)
    warped = ks_two_sample(np.exp(a), np.exp(b))
    assert warped.d == pytest.approx(base.d, abs=1e-15)
    assert warped.p_value == pytest.approx(base.p_value, abs=1e-12)


def test_ks_symmetric_in_samples():
    rng = np.random.default_rng(6)
    a = rng.normal(size=20)
    b = rng.normal(0.5, 1.0, size=25)
    ab = ks_two_sample(a, b, n_perm=200, seed=3)
    ba = ks_two_sample(b, a, n_perm=200, seed=3)
    assert ab.d == ba.d
    assert ab.p_value == ba.p_value
    assert ab.p_randomization == ba.p_randomization


def test_ks_disjoint_supports_always_one():
    rng = np.random.default_rng(7)
    for _ in range(10):
        a = rng.uniform(0, 1, size=rng.integers(2, 12))
        b = rng.uniform(2, 3, size=rng.integers(2, 12))
        assert ks_two_sample(a, b).d == 1.0


def test_kolmogorov_series_matches_scipy():
    for lam in (0.3, 0.7, 1.0, 1.36, 2.0):
        assert kolmogorov_sf(lam) == pytest.approx(float(scipy_kolmogorov(lam)), abs=1e-10)


def test_ks_empty_sample_error():
    with pytest.raises(ValueError, match="empty sample"):
        ks_two_sample([], [1.0])


# -- randomization test ------------------------------------------------------------

def test_randomization_identical_multisets_p_one():
    a = [0.1, 0.5, 0.9]
    assert randomization_test(a, list(a), n_perm=300, seed=0) == 1.0


def test_randomization_exhaustive_disjoint_3v3():
    # Exhaustive oracle: of the C(6,3)=20 splits only the two pure splits
    # reach D=1, so p = 2/20 exactly.
    p = randomization_test([0, 0, 0], [1, 1, 1], exhaustive=True)
    assert p == pytest.approx(0.1, abs=1e-15)


def test_randomization_null_rejection_rate():
    # Monte-Carlo oracle: under H0 the p-value is approximately uniform.
    # Unequal sample sizes keep the null D distribution on a fine grid.
    rejections = 0
    trials = 600
    for trial in range(trials):
        rng = np.random.default_rng(10_000 + trial)
        pooled = rng.normal(size=90)
        p = randomization_test(pooled[:40], pooled[40:], n_perm=200, seed=trial)
        rejections += p < 0.05
    assert 0.03 <= rejections / trials <= 0.07


# -- binning -------------------------------------------------------------------------

def test_bin_factor_asq_thresholds():
    codes20, groups = bin_factor([25.0], {"kind": "threshold", "t": 20})
    assert codes20[0] == 1 and groups == ("Low", "High")  # 25 >= 20 -> High
    codes30, _ = bin_factor([25.0], {"kind": "threshold", "t": 30})
    assert codes30[0] == 0  # 25 < 30 -> Low


def test_bin_factor_income_bands():
    rule = {
        "kind": "bands",
        "high": ["Over $100,000"],
        "low": ["$30,000-$49,999", "$50,000-$75,000"],
    }
    codes, _ = bin_factor(
        ["Over $100,000", "$50,000-$75,000", "$80,000-$99,999"], rule
    )
    assert codes.tolist() == [1, 0, -1]  # out-of-band value excluded, not an error


def test_bin_factor_top2():
    values = ["College", "College", "Graduate", "Graduate", "Graduate", "HighSchool"]
    codes, groups = bin_factor(values, {"kind": "top2"})
    assert set(groups) == {"College", "Graduate"}
    assert codes.tolist()[:2] == [codes[0]] * 2
    assert codes[-1] == -1  # rare category dropped


def test_bin_factor_missing_values_excluded():
    codes, _ = bin_factor([None, 25.0], {"kind": "threshold", "t": 20})
    assert codes.tolist() == [-1, 1]


# -- demographic screen ----------------------------------------------------------------

def _screen_config(seed, effect_shift=None):
    effects = []
    if effect_shift is not None:
        effects = [
            FactorEffect(
                factor="gender",
                role="listener",
                on="backchanneling",
                shifts={"F": +effect_shift / 2, "M": -effect_shift / 2},
            )
        ]
    return SynthConfig(
        n_subjects=10,
        episodes_per_subject=3,
        episode_length_s=12.0,
        channels=[ChannelSpec("x", kind="noise")],
        bc_base=0.4,
        bc_level_sd=0.08,
        listen_level_sd=0.08,
        factor_effects=effects,
        seed=seed,
    )


GENDER_ROW = [{"label": "gender", "factor": "gender", "rule": {"kind": "top2"}}]


def _screen_cell(corpus, n_perm, seed):
    cells = demographic_screen(
        corpus, GENDER_ROW, LabelConfig(), n_perm=n_perm, seed=seed
    )
    for cell in cells:
        if cell.proportion == "backchanneling" and cell.role == "listener":
            return cell
    raise AssertionError("cell missing")


def test_screen_null_factor_rarely_significant():
    significant = 0
    trials = 20
    testable = 0
    for trial in range(trials):
        corpus, _ = generate(_screen_config(seed=500 + trial))
        cell = _screen_cell(corpus, n_perm=300, seed=trial)
        if cell.testable:
            testable += 1
            significant += cell.result.significant_at_5pct
    assert testable >= trials - 2
    assert significant <= 0.1 * testable + 1


def test_screen_shifted_factor_significant():
    significant = 0
    trials = 20
    for trial in range(trials):
        corpus, _ = generate(_screen_config(seed=900 + trial, effect_shift=0.3))
        cell = _screen_cell(corpus, n_perm=300, seed=trial)
        assert cell.testable
        significant += cell.result.significant_at_5pct
    assert significant >= 0.95 * trials


def test_screen_untestable_cell_reported():
    corpus, _ = generate(_screen_config(seed=77))
    rows = [{"label": "asq", "factor": "asq_score", "rule": {"kind": "threshold", "t": 5}}]
    cells = demographic_screen(corpus, rows, LabelConfig(), n_perm=50, seed=0)
    assert all(not c.testable for c in cells)
    assert all(c.reason for c in cells)


def test_screen_csv_layout(tmp_path):
    corpus, _ = generate(_screen_config(seed=3))
    cells = demographic_screen(
        corpus, default_screen_factors(), LabelConfig(), n_perm=50, seed=0
    )
    path = tmp_path / "screen.csv"
    write_screen_csv(cells, path, comment="config=xyz")
    lines = path.read_text().splitlines()
    assert lines[0] == "# config=xyz"
    header = lines[1].split(",")
    assert header[0] == "factor"
    assert "bc_storyteller_D" in header and "listen_listener_significant" in header
    assert len(lines) >= 2 + len(default_screen_factors())
