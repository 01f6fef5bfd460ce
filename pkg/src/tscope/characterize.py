"""Scalar characterization of window tensors.

Each aggregate set maps every (window, channel) series to one or more scalar
features; the resulting design matrix is concatenated with the window's
annotation dummies and, optionally, one-hot socio-demographic columns for both
dyad members. Conventions declared once and asserted in goldens:

* standard deviation and variance use the sample (n-1) form;
* quantiles interpolate linearly between order statistics;
* degenerate series (zero variance) map to 0 for skewness, kurtosis,
  autocorrelation, approximate entropy and normalized complexity - never NaN.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats as _sps

from .core import Corpus
from .preprocess import WindowSet

CATALOG_VERSION = 1


# ---------------------------------------------------------------------------
# Characteristic functions (pure, univariate)
# ---------------------------------------------------------------------------

def _std(x: np.ndarray) -> float:
    return float(np.std(x, ddof=1)) if x.size > 1 else 0.0


def ch_mean(x):
    return float(np.mean(x))


def ch_median(x):
    return float(np.median(x))


def ch_minimum(x):
    return float(np.min(x))


def ch_maximum(x):
    return float(np.max(x))


def ch_variance(x):
    return float(np.var(x, ddof=1)) if x.size > 1 else 0.0


def ch_standard_deviation(x):
    return _std(x)


def ch_skewness(x):
    m2 = np.mean((x - np.mean(x)) ** 2)
    if m2 == 0.0:
        return 0.0
    m3 = np.mean((x - np.mean(x)) ** 3)
    return float(m3 / m2**1.5)


def ch_kurtosis(x):
    # Excess kurtosis; 0 for zero-variance series.
    m2 = np.mean((x - np.mean(x)) ** 2)
    if m2 == 0.0:
        return 0.0
    m4 = np.mean((x - np.mean(x)) ** 4)
    return float(m4 / m2**2 - 3.0)


def ch_abs_energy(x):
    return float(np.dot(x, x))


def ch_mean_abs_change(x):
    return float(np.mean(np.abs(np.diff(x)))) if x.size > 1 else 0.0


def ch_mean_change(x):
    return float((x[-1] - x[0]) / (x.size - 1)) if x.size > 1 else 0.0


def ch_abs_sum_of_changes(x):
    return float(np.sum(np.abs(np.diff(x))))


def ch_count_above_mean(x):
    return float(np.count_nonzero(x > np.mean(x)))


def ch_count_below_mean(x):
    return float(np.count_nonzero(x < np.mean(x)))


def _longest_run(mask: np.ndarray) -> int:
    best = run = 0
    for hit in mask:
        run = run + 1 if hit else 0
        best = max(best, run)
    return best


def ch_longest_strike_above_mean(x):
    return float(_longest_run(x > np.mean(x)))


def ch_longest_strike_below_mean(x):
    return float(_longest_run(x < np.mean(x)))


def ch_number_peaks(x, n):
    count = 0
    for i in range(n, x.size - n):
        if all(x[i] > x[i - k] and x[i] > x[i + k] for k in range(1, n + 1)):
            count += 1
    return float(count)


def ch_autocorrelation(x, lag):
    if lag >= x.size:
        return 0.0
    mu = np.mean(x)
    var = np.mean((x - mu) ** 2)
    if var == 0.0:
        return 0.0
    cov = np.mean((x[:-lag] - mu) * (x[lag:] - mu)) if lag > 0 else var
    return float(cov / var)


def ch_quantile(x, q):
    return float(np.quantile(x, q))


def ch_approximate_entropy(x, m, r):
    """ApEn(m, r*std); 0 for constant series (no information)."""
    n = x.size
    sd = _std(x)
    if sd == 0.0 or n <= m + 1:
        return 0.0
    tol = r * sd

    def phi(mm):
        k = n - mm + 1
        emb = np.lib.stride_tricks.sliding_window_view(x, mm)
        dist = np.max(np.abs(emb[:, None, :] - emb[None, :, :]), axis=2)
        counts = np.count_nonzero(dist <= tol, axis=1)
        return np.mean(np.log(counts / k))

    return float(phi(m) - phi(m + 1))


def _trend(x):
    t = np.arange(x.size, dtype=np.float64)
    if x.size < 2:
        return 0.0, float(x[0]) if x.size else 0.0
    slope, intercept = np.polyfit(t, x, 1)
    return float(slope), float(intercept)


def ch_linear_trend_slope(x):
    return _trend(x)[0]


def ch_linear_trend_intercept(x):
    return _trend(x)[1]


def ch_cid_ce(x, normalize):
    if normalize:
        sd = _std(x)
        if sd == 0.0:
            return 0.0
        x = (x - np.mean(x)) / sd
    return float(np.sqrt(np.sum(np.diff(x) ** 2)))


def ch_first_location_of_maximum(x):
    return float(np.argmax(x)) / x.size


def ch_last_location_of_maximum(x):
    return 1.0 - float(np.argmax(x[::-1])) / x.size


def ch_first_location_of_minimum(x):
    return float(np.argmin(x)) / x.size


def ch_last_location_of_minimum(x):
    return 1.0 - float(np.argmin(x[::-1])) / x.size


CHARACTERISTICS = {
    "mean": ch_mean,
    "median": ch_median,
    "minimum": ch_minimum,
    "maximum": ch_maximum,
    "variance": ch_variance,
    "standard_deviation": ch_standard_deviation,
    "skewness": ch_skewness,
    "kurtosis": ch_kurtosis,
    "abs_energy": ch_abs_energy,
    "mean_abs_change": ch_mean_abs_change,
    "mean_change": ch_mean_change,
    "abs_sum_of_changes": ch_abs_sum_of_changes,
    "count_above_mean": ch_count_above_mean,
    "count_below_mean": ch_count_below_mean,
    "longest_strike_above_mean": ch_longest_strike_above_mean,
    "longest_strike_below_mean": ch_longest_strike_below_mean,
    "number_peaks": ch_number_peaks,
    "autocorrelation": ch_autocorrelation,
    "quantile": ch_quantile,
    "approximate_entropy": ch_approximate_entropy,
    "linear_trend_slope": ch_linear_trend_slope,
    "linear_trend_intercept": ch_linear_trend_intercept,
    "cid_ce": ch_cid_ce,
    "first_location_of_maximum": ch_first_location_of_maximum,
    "last_location_of_maximum": ch_last_location_of_maximum,
    "first_location_of_minimum": ch_first_location_of_minimum,
    "last_location_of_minimum": ch_last_location_of_minimum,
}


@dataclass(frozen=True)
class AggregateSet:
    """Named list of (label, characteristic, parameter bindings)."""

    name: str
    characteristics: tuple[tuple[str, str, tuple], ...]  # (label, char name, sorted params)

    def labels(self) -> list[str]:
        return [label for label, _, _ in self.characteristics]

    def apply(self, series: np.ndarray) -> list[float]:
        out = []
        for _, char, params in self.characteristics:
            out.append(CHARACTERISTICS[char](series, **dict(params)))
        return out


def _binding(label, char, **params):
    return (label, char, tuple(sorted(params.items())))


def mean_set() -> AggregateSet:
    return AggregateSet("Mean", (_binding("mean", "mean"),))


def mean_stdev_set() -> AggregateSet:
    return AggregateSet(
        "MeanStdev",
        (_binding("mean", "mean"), _binding("stdev", "standard_deviation")),
    )


def basic_set() -> AggregateSet:
    return AggregateSet(
        "Basic",
        (
            _binding("mean", "mean"),
            _binding("stdev", "standard_deviation"),
            _binding("min", "minimum"),
            _binding("max", "maximum"),
            _binding("median", "median"),
            _binding("q1", "quantile", q=0.25),
            _binding("q3", "quantile", q=0.75),
        ),
    )


def tsfresh_subset_catalog() -> AggregateSet:
    """Versioned catalog of time-series characteristics with parameter expansions."""
    bindings = [
        _binding("mean", "mean"),
        _binding("median", "median"),
        _binding("minimum", "minimum"),
        _binding("maximum", "maximum"),
        _binding("variance", "variance"),
        _binding("standard_deviation", "standard_deviation"),
        _binding("skewness", "skewness"),
        _binding("kurtosis", "kurtosis"),
        _binding("abs_energy", "abs_energy"),
        _binding("mean_abs_change", "mean_abs_change"),
        _binding("mean_change", "mean_change"),
        _binding("abs_sum_of_changes", "abs_sum_of_changes"),
        _binding("count_above_mean", "count_above_mean"),
        _binding("count_below_mean", "count_below_mean"),
        _binding("longest_strike_above_mean", "longest_strike_above_mean"),
        _binding("longest_strike_below_mean", "longest_strike_below_mean"),
    ]
    for n in (1, 3, 5):
        bindings.append(_binding(f"number_peaks_n{n}", "number_peaks", n=n))
    for lag in range(1, 6):
        bindings.append(_binding(f"autocorrelation_lag{lag}", "autocorrelation", lag=lag))
    for q in (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9):
        bindings.append(_binding(f"quantile_q{q:.1f}", "quantile", q=q))
    bindings.append(
        _binding("approximate_entropy_m2_r0.2", "approximate_entropy", m=2, r=0.2)
    )
    bindings.append(_binding("linear_trend_slope", "linear_trend_slope"))
    bindings.append(_binding("linear_trend_intercept", "linear_trend_intercept"))
    bindings.append(_binding("cid_ce_normalized", "cid_ce", normalize=True))
    bindings.append(_binding("cid_ce_raw", "cid_ce", normalize=False))
    bindings.append(_binding("first_location_of_maximum", "first_location_of_maximum"))
    bindings.append(_binding("last_location_of_maximum", "last_location_of_maximum"))
    bindings.append(_binding("first_location_of_minimum", "first_location_of_minimum"))
    bindings.append(_binding("last_location_of_minimum", "last_location_of_minimum"))
    return AggregateSet("TsfreshSubset", tuple(bindings))


AGGREGATE_SETS = {
    "mean": mean_set,
    "meanstdev": mean_stdev_set,
    "basic": basic_set,
    "tsfresh": tsfresh_subset_catalog,
}


def aggregate_set(name: str) -> AggregateSet:
    key = name.lower()
    if key not in AGGREGATE_SETS:
        raise ValueError(f"unknown aggregate set '{name}'")
    return AGGREGATE_SETS[key]()


# ---------------------------------------------------------------------------
# Feature matrix
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class FeatureMatrix:
    values: np.ndarray                 # (n_windows, n_features)
    column_names: list[str]
    provenance: list[dict]
    window_ids: list[str]
    episode_ids: list[str]
    listener_ids: list[str]
    speaker_ids: list[str]
    labels: np.ndarray | None = None
    class_names: tuple[str, str] = ("negative", "positive")

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def take(self, rows) -> "FeatureMatrix":
        rows = np.asarray(rows)
        return FeatureMatrix(
            values=self.values[rows],
            column_names=self.column_names,
            provenance=self.provenance,
            window_ids=[self.window_ids[i] for i in rows],
            episode_ids=[self.episode_ids[i] for i in rows],
            listener_ids=[self.listener_ids[i] for i in rows],
            speaker_ids=[self.speaker_ids[i] for i in rows],
            labels=None if self.labels is None else self.labels[rows],
            class_names=self.class_names,
        )

    def select_columns(self, idx) -> "FeatureMatrix":
        idx = list(idx)
        return FeatureMatrix(
            values=self.values[:, idx],
            column_names=[self.column_names[j] for j in idx],
            provenance=[self.provenance[j] for j in idx],
            window_ids=self.window_ids,
            episode_ids=self.episode_ids,
            listener_ids=self.listener_ids,
            speaker_ids=self.speaker_ids,
            labels=self.labels,
            class_names=self.class_names,
        )

    def with_columns(self, names, values, provenance=None) -> "FeatureMatrix":
        values = np.asarray(values, dtype=np.float64)
        prov = provenance or [
            {"column": n, "channel": None, "characteristic": "external", "params": {}}
            for n in names
        ]
        return FeatureMatrix(
            values=np.hstack([self.values, values]),
            column_names=self.column_names + list(names),
            provenance=self.provenance + prov,
            window_ids=self.window_ids,
            episode_ids=self.episode_ids,
            listener_ids=self.listener_ids,
            speaker_ids=self.speaker_ids,
            labels=self.labels,
            class_names=self.class_names,
        )


def characterize(
    windowset: WindowSet,
    aggset: AggregateSet,
    include_annotations: bool = True,
) -> FeatureMatrix:
    """One row per window: channel aggregates then annotation dummy proportions."""
    if len(windowset) == 0:
        raise ValueError("empty windowset")
    tensor = windowset.tensor()
    n, _, n_channels = tensor.shape

    column_names: list[str] = []
    provenance: list[dict] = []
    for channel in windowset.channel_names:
        for label, char, params in aggset.characteristics:
            column_names.append(f"{channel}__{label}")
            provenance.append(
                {
                    "column": column_names[-1],
                    "channel": channel,
                    "characteristic": char,
                    "params": dict(params),
                }
            )
    blocks = np.empty((n, n_channels * len(aggset.characteristics)), dtype=np.float64)
    for i in range(n):
        col = 0
        for c in range(n_channels):
            for value in aggset.apply(tensor[i, :, c]):
                blocks[i, col] = value
                col += 1

    if include_annotations and windowset.dummy_names:
        dummies = windowset.aggregates()
        column_names += list(windowset.dummy_names)
        provenance += [
            {
                "column": name,
                "channel": None,
                "characteristic": "annotation_proportion",
                "params": {},
            }
            for name in windowset.dummy_names
        ]
        blocks = np.hstack([blocks, dummies])

    labels = windowset.labels() if all(
        (w.label_ldp if windowset.task == "LDP" else w.label_bep) is not None
        for w in windowset.windows
    ) else None
    return FeatureMatrix(
        values=blocks,
        column_names=column_names,
        provenance=provenance,
        window_ids=windowset.window_ids(),
        episode_ids=windowset.episode_ids(),
        listener_ids=windowset.listener_ids(),
        speaker_ids=windowset.speaker_ids(),
        labels=labels,
        class_names=windowset.class_names(),
    )


def demographic_features(
    corpus: Corpus, windowset: WindowSet
) -> tuple[list[str], np.ndarray, list[dict]]:
    """One-hot (categorical) or numeric columns for both dyad members per window.

    Missing numeric values are imputed with the mean over observed subjects;
    missing categoricals simply activate no dummy.
    """
    factor_names = corpus.factor_names or sorted(
        {name for prof in corpus.subjects.values() for name in prof.factors}
    )
    numeric: dict[str, bool] = {}
    categories: dict[str, list[str]] = {}
    means: dict[str, float] = {}
    for name in factor_names:
        observed = [
            prof.get(name) for prof in corpus.subjects.values() if prof.get(name) is not None
        ]
        numeric[name] = bool(observed) and all(isinstance(v, float) for v in observed)
        if numeric[name]:
            means[name] = float(np.mean(observed)) if observed else 0.0
        else:
            categories[name] = sorted({str(v) for v in observed})

    names: list[str] = []
    columns: list[np.ndarray] = []
    roles = (("speaker", windowset.speaker_ids()), ("listener", windowset.listener_ids()))
    for role, sids in roles:
        profiles = [corpus.subjects[s] for s in sids]
        for factor in factor_names:
            if numeric[factor]:
                names.append(f"demo_{role}_{factor}")
                columns.append(
                    np.array(
                        [
                            p.get(factor) if p.get(factor) is not None else means[factor]
                            for p in profiles
                        ],
                        dtype=np.float64,
                    )
                )
            else:
                for value in categories[factor]:
                    names.append(f"demo_{role}_{factor}_{value}")
                    columns.append(
                        np.array(
                            [1.0 if str(p.get(factor)) == value else 0.0 for p in profiles]
                        )
                    )
    matrix = np.column_stack(columns) if columns else np.zeros((len(windowset), 0))
    provenance = [
        {"column": n, "channel": None, "characteristic": "demographic", "params": {}}
        for n in names
    ]
    return names, matrix, provenance


# ---------------------------------------------------------------------------
# Relevance filtering (two-sample tests + Benjamini-Yekutieli)
# ---------------------------------------------------------------------------

def _column_p_value(column: np.ndarray, labels: np.ndarray) -> float:
    a = column[labels == 1]
    b = column[labels == 0]
    uniq = np.unique(column)
    if uniq.size <= 1:
        return 1.0
    if np.isin(uniq, (0.0, 1.0)).all():
        table = [
            [int(np.sum(a == 1.0)), int(np.sum(a == 0.0))],
            [int(np.sum(b == 1.0)), int(np.sum(b == 0.0))],
        ]
        return float(_sps.fisher_exact(table)[1])
    return float(_sps.mannwhitneyu(a, b, alternative="two-sided").pvalue)


def benjamini_yekutieli(p_values: np.ndarray, fdr: float) -> np.ndarray:
    """Boolean keep-mask under BY control at level fdr (dependence-robust)."""
    p = np.asarray(p_values, dtype=np.float64)
    m = p.size
    if m == 0:
        return np.zeros(0, dtype=bool)
    c_m = np.sum(1.0 / np.arange(1, m + 1))
    order = np.argsort(p, kind="stable")
    thresholds = (np.arange(1, m + 1) * fdr) / (m * c_m)
    passed = p[order] <= thresholds
    keep = np.zeros(m, dtype=bool)
    if passed.any():
        k_max = int(np.max(np.nonzero(passed)[0]))
        keep[order[: k_max + 1]] = True
    return keep


def select_relevant(
    matrix: FeatureMatrix, labels: np.ndarray | None = None, fdr: float = 0.05
) -> tuple[FeatureMatrix, list[dict]]:
    """Keep columns whose two-sample test against the label survives BY at ``fdr``.

    Real-valued columns use the Mann-Whitney U test, binary columns Fisher's
    exact test. Returns the filtered matrix plus a per-column report.
    """
    if labels is None:
        labels = matrix.labels
    labels = np.asarray(labels)
    classes, counts = np.unique(labels, return_counts=True)
    if classes.size < 2:
        raise ValueError("degenerate target: labels contain a single class")
    if counts.min() < 2:
        raise ValueError("degenerate target: need at least 2 windows per class")
    p_values = np.array(
        [_column_p_value(matrix.values[:, j], labels) for j in range(matrix.n_features)]
    )
    keep = benjamini_yekutieli(p_values, fdr)
    report = [
        {"feature": matrix.column_names[j], "p_value": float(p_values[j]), "kept": bool(keep[j])}
        for j in range(matrix.n_features)
    ]
    return matrix.select_columns(np.nonzero(keep)[0]), report


def write_relevance_report(report: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature", "p_value", "kept"])
        for row in report:
            writer.writerow([row["feature"], repr(row["p_value"]), int(row["kept"])])


# ---------------------------------------------------------------------------
# Serialization: CSV (window_id, features..., label) + JSON provenance sidecar
# ---------------------------------------------------------------------------

def save_feature_matrix(matrix: FeatureMatrix, basepath: str | Path, header_comment: str = "") -> list[Path]:
    base = Path(basepath)
    csv_path = base.with_suffix(".csv")
    with open(csv_path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["window_id"] + matrix.column_names + ["label"])
        for i in range(len(matrix)):
            label = "" if matrix.labels is None else int(matrix.labels[i])
            writer.writerow(
                [matrix.window_ids[i]]
                + [repr(float(v)) for v in matrix.values[i]]
                + [label]
            )
    sidecar = {
        "format": "tscope-features",
        "version": 1,
        "catalog_version": CATALOG_VERSION,
        "class_names": list(matrix.class_names),
        "provenance": matrix.provenance,
        "episode_ids": matrix.episode_ids,
        "listener_ids": matrix.listener_ids,
        "speaker_ids": matrix.speaker_ids,
    }
    json_path = base.with_suffix(".provenance.json")
    with open(json_path, "w") as fh:
        json.dump(sidecar, fh, indent=2)
        fh.write("\n")
    return [csv_path, json_path]


def load_feature_matrix(basepath: str | Path) -> FeatureMatrix:
    base = Path(basepath)
    with open(base.with_suffix(".provenance.json")) as fh:
        sidecar = json.load(fh)
    with open(base.with_suffix(".csv")) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    column_names = header[1:-1]
    window_ids, rows, labels = [], [], []
    has_labels = True
    for row in reader:
        window_ids.append(row[0])
        rows.append([float(v) for v in row[1:-1]])
        if row[-1] == "":
            has_labels = False
        else:
            labels.append(int(row[-1]))
    return FeatureMatrix(
        values=np.asarray(rows, dtype=np.float64),
        column_names=column_names,
        provenance=sidecar["provenance"],
        window_ids=window_ids,
        episode_ids=sidecar["episode_ids"],
        listener_ids=sidecar["listener_ids"],
        speaker_ids=sidecar["speaker_ids"],
        labels=np.asarray(labels, dtype=np.int64) if has_labels else None,
        class_names=tuple(sidecar["class_names"]),
    )
