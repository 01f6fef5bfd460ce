"""Socio-demographic analysis: ECDFs, two-sample K-S tests, randomization tests.

The K-S statistic D is the sup-norm distance between the two empirical CDFs.
Asymptotic p-values come from the Kolmogorov series with effective sample size
n1*n2/(n1+n2); because that approximation is rough at the corpus sizes involved,
the randomization p-value (pooled-shuffle resampling) is the primary decision
value and both are always reported.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Corpus
from .preprocess import LabelConfig, episode_proportions

KOLMOGOROV_SERIES_TERMS = 100


@dataclass(frozen=True, eq=False)
class EcdfCurve:
    """Right-continuous step function; heights k/n at the sorted sample values."""

    values: np.ndarray   # sorted, unique
    heights: np.ndarray  # nondecreasing, ends at 1

    def evaluate(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        idx = np.searchsorted(self.values, x, side="right")
        out = np.where(idx > 0, self.heights[np.maximum(idx - 1, 0)], 0.0)
        return out

    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.values.tolist(), self.heights.tolist()))


@dataclass(frozen=True)
class KsResult:
    d: float
    p_value: float                    # asymptotic
    p_randomization: float | None
    n1: int
    n2: int

    @property
    def significant_at_5pct(self) -> bool:
        p = self.p_randomization if self.p_randomization is not None else self.p_value
        return p < 0.05


def ecdf(sample) -> EcdfCurve:
    sample = np.asarray(sample, dtype=np.float64)
    if sample.size == 0:
        raise ValueError("empty sample")
    values, counts = np.unique(sample, return_counts=True)
    heights = np.cumsum(counts) / sample.size
    return EcdfCurve(values=values, heights=heights)


def _ks_d(a: np.ndarray, b: np.ndarray) -> float:
    # Evaluate both ECDFs at every pooled breakpoint.
    grid = np.unique(np.concatenate([a, b]))
    fa = np.searchsorted(np.sort(a), grid, side="right") / a.size
    fb = np.searchsorted(np.sort(b), grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def kolmogorov_sf(lam: float) -> float:
    """Two-sided Kolmogorov survival function, series truncated at 100 terms."""
    if lam <= 0.0:
        return 1.0
    total = 0.0
    for k in range(1, KOLMOGOROV_SERIES_TERMS + 1):
        total += (-1.0) ** (k - 1) * math.exp(-2.0 * k * k * lam * lam)
    return float(min(1.0, max(0.0, 2.0 * total)))


def ks_two_sample(a, b, n_perm: int | None = None, seed: int = 0) -> KsResult:
    """Two-sample K-S test; pass ``n_perm`` to also run the randomization test."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("empty sample")
    d = _ks_d(a, b)
    n_eff = a.size * b.size / (a.size + b.size)
    p_asym = kolmogorov_sf(math.sqrt(n_eff) * d)
    p_rand = None
    if n_perm is not None:
        p_rand = randomization_test(a, b, n_perm=n_perm, seed=seed)
    return KsResult(d=d, p_value=p_asym, p_randomization=p_rand, n1=a.size, n2=b.size)


def _ks_d_batch(pooled: np.ndarray, assignments: np.ndarray, n1: int) -> np.ndarray:
    """D statistics for many label assignments over one pooled sample.

    ``assignments``: (n_perm, n) boolean, True marks membership in sample 1.
    Evaluates |F1 - F2| at pooled order positions, masking duplicate values so
    ties are handled exactly as in the two-ECDF definition.
    """
    order = np.argsort(pooled, kind="stable")
    sorted_vals = pooled[order]
    n = pooled.size
    n2 = n - n1
    # A position is a valid evaluation point if the next value differs.
    valid = np.ones(n, dtype=bool)
    valid[:-1] = sorted_vals[1:] != sorted_vals[:-1]
    in_a = assignments[:, order]
    f1 = np.cumsum(in_a, axis=1) / n1
    f2 = np.cumsum(~in_a, axis=1) / n2
    diff = np.abs(f1 - f2)
    diff[:, ~valid] = 0.0
    return diff.max(axis=1)


def randomization_test(
    a,
    b,
    n_perm: int = 1000,
    seed: int = 0,
    exhaustive: bool = False,
) -> float:
    """Pooled-shuffle randomization p-value for the K-S statistic.

    Monte-Carlo mode uses the add-one estimate (#{D* >= D} + 1) / (n_perm + 1);
    exhaustive mode enumerates every split of the pooled sample exactly.
    Splits re-divide the shuffled pool at min(|a|, |b|): the statistic is
    symmetric in the two groups, so this leaves its distribution unchanged
    while making the p-value exactly invariant under swapping a and b.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    pooled = np.concatenate([a, b])
    if pooled.size < 2:
        raise ValueError("combined size must be >= 2")
    d_obs = _ks_d(a, b)
    n = pooled.size
    k = min(a.size, b.size)
    pooled = np.sort(pooled)  # canonical pool order: swap-invariant draws
    if exhaustive:
        combos = list(itertools.combinations(range(n), k))
        assignments = np.zeros((len(combos), n), dtype=bool)
        for i, combo in enumerate(combos):
            assignments[i, list(combo)] = True
        d_star = _ks_d_batch(pooled, assignments, k)
        return float(np.count_nonzero(d_star >= d_obs - 1e-12) / len(combos))
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    base = np.zeros(n, dtype=bool)
    base[:k] = True
    assignments = np.empty((n_perm, n), dtype=bool)
    for i in range(n_perm):
        assignments[i] = base[rng.permutation(n)]
    d_star = _ks_d_batch(pooled, assignments, k)
    exceed = int(np.count_nonzero(d_star >= d_obs - 1e-12))
    return float((exceed + 1) / (n_perm + 1))


# ---------------------------------------------------------------------------
# Factor binning
# ---------------------------------------------------------------------------

EXCLUDED = -1


def bin_factor(values, rule: dict) -> tuple[np.ndarray, tuple[str, str]]:
    """Map raw factor values to two groups (codes 0/1); -1 marks excluded values.

    Rules: {"kind": "threshold", "t": x}   numeric, < t -> Low(0), >= t -> High(1)
           {"kind": "bands", "low": [...], "high": [...]}   declared categories
           {"kind": "top2"}                two most frequent categories
    """
    kind = rule.get("kind")
    codes = np.full(len(values), EXCLUDED, dtype=np.int64)
    if kind == "threshold":
        t = float(rule["t"])
        for i, v in enumerate(values):
            if v is None:
                continue
            codes[i] = 0 if float(v) < t else 1
        return codes, ("Low", "High")
    if kind == "bands":
        low = {str(v) for v in rule.get("low", [])}
        high = {str(v) for v in rule.get("high", [])}
        for i, v in enumerate(values):
            if v is None:
                continue
            text = str(v)
            if text in low:
                codes[i] = 0
            elif text in high:
                codes[i] = 1
        return codes, ("Low", "High")
    if kind == "top2":
        observed = [str(v) for v in values if v is not None]
        if not observed:
            return codes, ("", "")
        uniq, counts = np.unique(np.array(observed, dtype=object), return_counts=True)
        # Most frequent first; ties broken alphabetically for determinism.
        order = np.lexsort((uniq.astype(str), -counts))
        top = [str(uniq[j]) for j in order[:2]]
        top_sorted = sorted(top)
        for i, v in enumerate(values):
            if v is not None and str(v) in top_sorted:
                codes[i] = top_sorted.index(str(v))
        return codes, tuple(top_sorted) if len(top_sorted) == 2 else (top_sorted[0], "")
    raise ValueError(f"unknown binning rule '{kind}'")


# ---------------------------------------------------------------------------
# Demographic screen
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScreenCell:
    label: str       # table row name, e.g. "ASQ Score (Thresh = 20)"
    factor: str
    role: str        # "storyteller" | "listener"
    proportion: str  # "backchanneling" | "listening"
    result: KsResult | None
    groups: tuple[str, str]
    samples: tuple[np.ndarray, np.ndarray] | None = None
    reason: str = ""  # non-empty when untestable

    @property
    def testable(self) -> bool:
        return self.result is not None


def default_screen_factors() -> list[dict]:
    """Screen rows mirroring the paper-style table: binned factors per dyad role."""
    return [
        {"label": "gender", "factor": "gender", "rule": {"kind": "top2"}},
        {"label": "asq_score_t20", "factor": "asq_score", "rule": {"kind": "threshold", "t": 20}},
        {"label": "asq_score_t30", "factor": "asq_score", "rule": {"kind": "threshold", "t": 30}},
        {
            "label": "income",
            "factor": "income",
            "rule": {
                "kind": "bands",
                "high": ["Over $100,000"],
                "low": ["$30,000-$49,999", "$50,000-$75,000"],
            },
        },
        {"label": "mother_education", "factor": "mother_education", "rule": {"kind": "top2"}},
        {"label": "has_siblings", "factor": "has_siblings", "rule": {"kind": "top2"}},
        {
            "label": "uses_words_for_feelings",
            "factor": "uses_words_for_feelings",
            "rule": {"kind": "top2"},
        },
        {"label": "looks_at_parent", "factor": "looks_at_parent", "rule": {"kind": "top2"}},
    ]


def demographic_screen(
    corpus: Corpus,
    factors: list[dict],
    cfg: LabelConfig,
    n_perm: int = 1000,
    seed: int = 0,
) -> list[ScreenCell]:
    """Per screen row and dyad role, K-S + randomization tests on episode proportions.

    Each row in ``factors`` is {"label", "factor", "rule"}; episodes whose factor
    value is excluded by the binning rule drop out of that comparison.
    """
    props = {
        ep.episode_id: episode_proportions(ep, cfg) for ep in corpus.episodes
    }
    cells: list[ScreenCell] = []
    for prop_idx, prop_name in ((0, "backchanneling"), (1, "listening")):
        for row in factors:
            label, factor, rule = row["label"], row["factor"], row["rule"]
            for role in ("storyteller", "listener"):
                values = []
                sample = []
                for ep in corpus.episodes:
                    sid = ep.speaker_id if role == "storyteller" else ep.listener_id
                    values.append(corpus.subjects[sid].get(factor))
                    sample.append(props[ep.episode_id][prop_idx])
                codes, groups = bin_factor(values, rule)
                sample = np.asarray(sample)
                a = sample[codes == 0]
                b = sample[codes == 1]
                if a.size == 0 or b.size == 0:
                    cells.append(
                        ScreenCell(
                            label=label,
                            factor=factor,
                            role=role,
                            proportion=prop_name,
                            result=None,
                            groups=groups,
                            reason="empty group after binning",
                        )
                    )
                    continue
                cell_seed = _screen_seed(seed, prop_idx, label, role)
                result = ks_two_sample(a, b, n_perm=n_perm, seed=cell_seed)
                cells.append(
                    ScreenCell(
                        label=label,
                        factor=factor,
                        role=role,
                        proportion=prop_name,
                        result=result,
                        groups=groups,
                        samples=(a, b),
                    )
                )
    return cells


def _screen_seed(seed: int, prop_idx: int, factor: str, role: str) -> int:
    h = 0
    for ch in f"{prop_idx}|{factor}|{role}":
        h = (h * 131 + ord(ch)) % (2**31)
    return (seed * 1000003 + h) % (2**31)


def write_screen_csv(cells: list[ScreenCell], path: str | Path, comment: str = "") -> None:
    """Wide CSV: one row per screen label, paper-style column groups with star flags."""
    columns = [
        ("backchanneling", "storyteller"),
        ("backchanneling", "listener"),
        ("listening", "storyteller"),
        ("listening", "listener"),
    ]
    by_key = {(c.label, c.proportion, c.role): c for c in cells}
    labels = []
    for c in cells:
        if c.label not in labels:
            labels.append(c.label)
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        header = ["factor"]
        for prop, role in columns:
            prefix = f"{'bc' if prop == 'backchanneling' else 'listen'}_{role}"
            header += [f"{prefix}_D", f"{prefix}_p_asymptotic", f"{prefix}_p_randomization", f"{prefix}_significant"]
        writer.writerow(header)
        for label in labels:
            row = [label]
            for prop, role in columns:
                cell = by_key.get((label, prop, role))
                if cell is None or cell.result is None:
                    row += ["", "", "", ""]
                else:
                    r = cell.result
                    row += [
                        "%.6f" % r.d,
                        "%.6g" % r.p_value,
                        "" if r.p_randomization is None else "%.6g" % r.p_randomization,
                        "*" if r.significant_at_5pct else "",
                    ]
            writer.writerow(row)


def write_ecdf_points(sample, path: str | Path, comment: str = "") -> None:
    curve = ecdf(sample)
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["value", "ecdf"])
        for v, h in curve.points():
            writer.writerow([repr(v), repr(h)])
