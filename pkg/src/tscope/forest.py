"""From-scratch random forest: CART trees, Gini impurity, bootstrap bagging, MDI.

Determinism contract: split candidates are midpoints between consecutive sorted
unique values; ties in impurity decrease break toward the lowest feature index,
then the lowest threshold; per-tree RNG streams derive from (seed, tree index).
The same seed and data always produce a bit-identical serialized model.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .characterize import FeatureMatrix

FOREST_FORMAT = "tscope-forest"
FOREST_VERSION = 1


@dataclass
class ForestParams:
    n_trees: int = 200
    max_depth: int | None = None
    min_samples_leaf: int = 2
    features_per_split: int | None = None  # None -> ceil(sqrt(F))
    bootstrap: bool = True
    seed: int = 0


@dataclass(eq=False)
class DecisionTree:
    """Flat node arrays; leaves have feature == -1 and a class distribution."""

    feature: np.ndarray            # int, -1 for leaves
    threshold: np.ndarray          # float
    left: np.ndarray               # int child index, -1 for leaves
    right: np.ndarray
    impurity_decrease: np.ndarray  # weighted by left/right share, >= 0 internally
    sample_fraction: np.ndarray    # node samples / root samples
    dist: np.ndarray               # (n_nodes, 2); meaningful at leaves

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        idx = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[idx] >= 0
        while active.any():
            rows = np.nonzero(active)[0]
            node = idx[rows]
            go_left = X[rows, self.feature[node]] <= self.threshold[node]
            idx[rows] = np.where(go_left, self.left[node], self.right[node])
            active = self.feature[idx] >= 0
        return self.dist[idx]


def _gini(n_pos: float, n: float) -> float:
    p = n_pos / n
    return 1.0 - p * p - (1.0 - p) * (1.0 - p)


def _grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    params: ForestParams,
    rng: np.random.Generator,
    k_features: int,
) -> DecisionTree:
    n_total = y.size
    nodes: list[dict] = []

    def leaf(y_node: np.ndarray) -> int:
        n = y_node.size
        nodes.append(
            {
                "feature": -1,
                "threshold": 0.0,
                "left": -1,
                "right": -1,
                "decrease": 0.0,
                "fraction": n / n_total,
                "dist": (np.count_nonzero(y_node == 0) / n, np.count_nonzero(y_node == 1) / n),
            }
        )
        return len(nodes) - 1

    def grow(rows: np.ndarray, depth: int) -> int:
        y_node = y[rows]
        n = y_node.size
        n_pos = int(np.count_nonzero(y_node == 1))
        if (
            n_pos in (0, n)
            or n < 2 * params.min_samples_leaf
            or (params.max_depth is not None and depth >= params.max_depth)
        ):
            return leaf(y_node)

        candidates = np.sort(rng.choice(X.shape[1], size=k_features, replace=False))
        parent = _gini(n_pos, n)
        best_decrease = -1.0
        best_feature = -1
        best_threshold = 0.0
        positions = np.arange(1, n, dtype=np.float64)
        for f in candidates:
            x = X[rows, f]
            order = np.argsort(x, kind="stable")
            xs = x[order]
            ys = y_node[order]
            valid = xs[1:] != xs[:-1]
            n_left = positions
            n_right = n - n_left
            valid &= (n_left >= params.min_samples_leaf) & (
                n_right >= params.min_samples_leaf
            )
            if not valid.any():
                continue
            pos_left = np.cumsum(ys)[:-1].astype(np.float64)
            pos_right = n_pos - pos_left
            p_l = pos_left / n_left
            p_r = pos_right / n_right
            gini_l = 1.0 - p_l * p_l - (1.0 - p_l) * (1.0 - p_l)
            gini_r = 1.0 - p_r * p_r - (1.0 - p_r) * (1.0 - p_r)
            decrease = parent - (n_left / n) * gini_l - (n_right / n) * gini_r
            decrease[~valid] = -np.inf
            j = int(np.argmax(decrease))  # first max: lowest threshold wins ties
            if decrease[j] > best_decrease:
                best_decrease = float(decrease[j])
                best_feature = int(f)
                best_threshold = float((xs[j] + xs[j + 1]) / 2.0)

        if best_feature < 0 or best_decrease < 0.0:
            return leaf(y_node)

        nodes.append(
            {
                "feature": best_feature,
                "threshold": best_threshold,
                "left": -1,
                "right": -1,
                "decrease": max(best_decrease, 0.0),
                "fraction": n / n_total,
                "dist": (0.0, 0.0),
            }
        )
        node_id = len(nodes) - 1
        go_left = X[rows, best_feature] <= best_threshold
        nodes[node_id]["left"] = grow(rows[go_left], depth + 1)
        nodes[node_id]["right"] = grow(rows[~go_left], depth + 1)
        return node_id

    grow(np.arange(n_total), 0)
    return DecisionTree(
        feature=np.array([nd["feature"] for nd in nodes], dtype=np.int64),
        threshold=np.array([nd["threshold"] for nd in nodes], dtype=np.float64),
        left=np.array([nd["left"] for nd in nodes], dtype=np.int64),
        right=np.array([nd["right"] for nd in nodes], dtype=np.int64),
        impurity_decrease=np.array([nd["decrease"] for nd in nodes], dtype=np.float64),
        sample_fraction=np.array([nd["fraction"] for nd in nodes], dtype=np.float64),
        dist=np.array([nd["dist"] for nd in nodes], dtype=np.float64),
    )


@dataclass(eq=False)
class ForestModel:
    trees: list[DecisionTree]
    params: ForestParams
    feature_names: list[str]
    class_names: tuple[str, str]

    def predict_proba(self, X) -> np.ndarray:
        X = _matrix_values(X, self.feature_names)
        out = np.zeros((X.shape[0], 2), dtype=np.float64)
        for tree in self.trees:
            out += tree.predict_proba(X)
        out /= len(self.trees)
        return out

    def save(self, path: str | Path) -> None:
        payload = {
            "format": FOREST_FORMAT,
            "version": FOREST_VERSION,
            "params": {
                "n_trees": self.params.n_trees,
                "max_depth": self.params.max_depth,
                "min_samples_leaf": self.params.min_samples_leaf,
                "features_per_split": self.params.features_per_split,
                "bootstrap": self.params.bootstrap,
                "seed": self.params.seed,
            },
            "feature_names": self.feature_names,
            "class_names": list(self.class_names),
            "trees": [
                {
                    "feature": t.feature.tolist(),
                    "threshold": t.threshold.tolist(),
                    "left": t.left.tolist(),
                    "right": t.right.tolist(),
                    "impurity_decrease": t.impurity_decrease.tolist(),
                    "sample_fraction": t.sample_fraction.tolist(),
                    "dist": t.dist.tolist(),
                }
                for t in self.trees
            ],
        }
        with open(path, "w") as fh:
            json.dump(payload, fh)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "ForestModel":
        with open(path) as fh:
            payload = json.load(fh)
        if payload.get("format") != FOREST_FORMAT:
            raise ValueError(f"{path}: not a {FOREST_FORMAT} file")
        params = ForestParams(**payload["params"])
        trees = [
            DecisionTree(
                feature=np.asarray(t["feature"], dtype=np.int64),
                threshold=np.asarray(t["threshold"], dtype=np.float64),
                left=np.asarray(t["left"], dtype=np.int64),
                right=np.asarray(t["right"], dtype=np.int64),
                impurity_decrease=np.asarray(t["impurity_decrease"], dtype=np.float64),
                sample_fraction=np.asarray(t["sample_fraction"], dtype=np.float64),
                dist=np.asarray(t["dist"], dtype=np.float64),
            )
            for t in payload["trees"]
        ]
        return cls(
            trees=trees,
            params=params,
            feature_names=list(payload["feature_names"]),
            class_names=tuple(payload["class_names"]),
        )


def _matrix_values(X, feature_names: list[str] | None = None) -> np.ndarray:
    if isinstance(X, FeatureMatrix):
        if feature_names is not None and X.column_names != feature_names:
            raise ValueError("column mismatch between model and feature matrix")
        return X.values
    X = np.asarray(X, dtype=np.float64)
    if feature_names is not None and X.shape[1] != len(feature_names):
        raise ValueError(
            f"column mismatch: model expects {len(feature_names)} features, got {X.shape[1]}"
        )
    return X


def train_forest(
    matrix, labels=None, params: ForestParams | None = None, jobs: int = 1
) -> ForestModel:
    """Grow a seeded bagged CART forest over a FeatureMatrix or plain 2-D array."""
    params = params or ForestParams()
    if isinstance(matrix, FeatureMatrix):
        feature_names = list(matrix.column_names)
        class_names = matrix.class_names
        if labels is None:
            labels = matrix.labels
        X = matrix.values
    else:
        X = np.asarray(matrix, dtype=np.float64)
        feature_names = [f"f{j}" for j in range(X.shape[1])]
        class_names = ("negative", "positive")
    y = np.asarray(labels, dtype=np.int64)
    if np.unique(y).size < 2:
        raise ValueError("degenerate single-class input")
    if params.n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    n_features = X.shape[1]
    k = params.features_per_split or int(np.ceil(np.sqrt(n_features)))
    if not 1 <= k <= n_features:
        raise ValueError(f"features_per_split must be in [1, {n_features}], got {k}")

    streams = [
        np.random.Generator(np.random.PCG64(np.random.SeedSequence(params.seed, spawn_key=(t,))))
        for t in range(params.n_trees)
    ]

    def build(t: int) -> DecisionTree:
        rng = streams[t]
        if params.bootstrap:
            rows = rng.integers(0, y.size, size=y.size)
        else:
            rows = np.arange(y.size)
        return _grow_tree(X[rows], y[rows], params, rng, k)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            trees = list(pool.map(build, range(params.n_trees)))
    else:
        trees = [build(t) for t in range(params.n_trees)]
    return ForestModel(
        trees=trees, params=params, feature_names=feature_names, class_names=class_names
    )


def predict_proba_forest(model: ForestModel, matrix) -> np.ndarray:
    return model.predict_proba(matrix)


def mdi_importance(model: ForestModel):
    """Impurity-decrease importance, averaged over trees, normalized to sum to 1."""
    from .interpret import ImportanceReport

    n_features = len(model.feature_names)
    totals = np.zeros(n_features, dtype=np.float64)
    for tree in model.trees:
        internal = tree.feature >= 0
        contrib = tree.impurity_decrease[internal] * tree.sample_fraction[internal]
        np.add.at(totals, tree.feature[internal], contrib)
    totals /= len(model.trees)
    total = totals.sum()
    if total > 0:
        totals = totals / total
    return ImportanceReport(
        feature_names=list(model.feature_names),
        scores=totals.reshape(-1, 1),
        metric="mdi",
        runs=1,
        baseline_score=0.0,
        seed=model.params.seed,
    )
