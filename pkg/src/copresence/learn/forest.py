"""Random forest built from :mod:`copresence.learn.tree`."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from ..features import SchemaMismatch
from .tree import DecisionTree, EmptyDataset, TreeParams, encode_labels, train_tree, training_arrays


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 25
    # "sqrt" -> ceil(sqrt(d)) candidate features per split; a float is a fraction of d
    feature_subsample: float | str = "sqrt"
    bootstrap: bool = True
    seed: int = 0
    max_depth: int = 10
    min_leaf: int = 2

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("a forest needs at least one tree")
        fs = self.feature_subsample
        if isinstance(fs, str) and fs != "sqrt":
            raise ValueError(f"feature_subsample must be 'sqrt' or a fraction, got {fs!r}")
        if not isinstance(fs, str) and not 0 < fs <= 1:
            raise ValueError(f"feature_subsample fraction must be in (0, 1], got {fs}")

    def features_per_split(self, d: int) -> int:
        if self.feature_subsample == "sqrt":
            return max(1, math.ceil(math.sqrt(d)))
        return max(1, min(d, math.ceil(self.feature_subsample * d)))

    @property
    def tree_params(self) -> TreeParams:
        return TreeParams(max_depth=self.max_depth, min_leaf=self.min_leaf)


class ForestModel:
    kind = "forest"

    def __init__(self, trees: list[DecisionTree], n_features: int, schema_id: str | None, params: ForestParams):
        if not trees:
            raise ValueError("a forest needs at least one tree")
        self.trees = trees
        self.n_features = n_features
        self.schema_id = schema_id
        self.params = params

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        """Mean of the trees' leaf posteriors."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise SchemaMismatch(f"expected {self.n_features} features, got {X.shape[1]}")
        return np.mean([t.predict_proba(X) for t in self.trees], axis=0)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self.predict_proba(X) >= 0.5).astype(np.int64)

    def to_json(self) -> dict:
        params = asdict(self.params)
        return {
            "kind": self.kind,
            "n_features": self.n_features,
            "schema_id": self.schema_id,
            "params": params,
            "trees": [t.root.to_json() for t in self.trees],
        }

    @classmethod
    def from_json(cls, d: dict) -> "ForestModel":
        from .tree import TreeNode

        params = ForestParams(**d["params"])
        trees = [
            DecisionTree(TreeNode.from_json(t), int(d["n_features"]), d["schema_id"], params.tree_params)
            for t in d["trees"]
        ]
        return cls(trees, int(d["n_features"]), d["schema_id"], params)


def _fit_one(X, y, params: ForestParams, index: int, schema_id):
    # per-tree stream keyed on (seed, index): independent of scheduling
    rng = np.random.default_rng([params.seed, index])
    n, d = X.shape
    if params.bootstrap:
        rows = rng.integers(0, n, size=n)
        Xb, yb = X[rows], y[rows]
    else:
        Xb, yb = X, y
    k = params.features_per_split(d)
    return train_tree(Xb, yb, params.tree_params, schema_id, rng=rng, max_features=None if k >= d else k)


def train_forest(X, y=None, params: ForestParams | None = None, schema_id: str | None = None,
                 threads: int = 1) -> ForestModel:
    """Bagged trees with per-split feature subsampling.

    Reproducible from ``(X, y, params)``; ``threads`` changes only how fast
    the trees are built, never which trees come out.
    """
    if y is None:
        X, y, schema_id = training_arrays(X)
    X = np.asarray(X, dtype=np.float64)
    y = encode_labels(y) if not isinstance(y, np.ndarray) or y.dtype.kind not in "iub" else y.astype(np.int64)
    if X.ndim != 2 or len(X) == 0:
        raise EmptyDataset("no training samples")
    params = params or ForestParams()
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            trees = list(pool.map(lambda i: _fit_one(X, y, params, i, schema_id), range(params.n_trees)))
    else:
        trees = [_fit_one(X, y, params, i, schema_id) for i in range(params.n_trees)]
    return ForestModel(trees, X.shape[1], schema_id, params)
