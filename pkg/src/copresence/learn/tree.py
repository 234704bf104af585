"""Binary CART decision tree (Gini impurity) for co-presence labels."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from ..context import CO_PRESENT, NON_CO_PRESENT
from ..features import FeatureVector, SchemaMismatch


class EmptyDataset(ValueError):
    pass


@dataclass(frozen=True)
class TreeParams:
    max_depth: int = 10
    min_leaf: int = 2
    split_criterion: str = "gini"

    def __post_init__(self):
        if self.split_criterion != "gini":
            raise ValueError(f"unsupported split criterion {self.split_criterion!r}")
        if self.max_depth < 0 or self.min_leaf < 1:
            raise ValueError("max_depth must be >= 0 and min_leaf >= 1")


@dataclass
class TreeNode:
    """Internal node when ``feature >= 0``; leaf otherwise.

    ``posterior`` is the fraction of co-present training samples that
    reached the node.  Samples with ``x[feature] <= threshold`` go left.
    """

    posterior: float
    n_samples: int
    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0

    def depth(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(self.left.depth(), self.right.depth())

    def n_leaves(self) -> int:
        if self.is_leaf:
            return 1
        return self.left.n_leaves() + self.right.n_leaves()

    def to_json(self) -> dict:
        if self.is_leaf:
            return {"posterior": self.posterior, "n": self.n_samples}
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "posterior": self.posterior,
            "n": self.n_samples,
            "left": self.left.to_json(),
            "right": self.right.to_json(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "TreeNode":
        if "feature" not in d:
            return cls(float(d["posterior"]), int(d["n"]))
        return cls(
            float(d["posterior"]),
            int(d["n"]),
            int(d["feature"]),
            float(d["threshold"]),
            cls.from_json(d["left"]),
            cls.from_json(d["right"]),
        )


def gini(pos: float, n: float) -> float:
    if n == 0:
        return 0.0
    p = pos / n
    return 2.0 * p * (1.0 - p)


def encode_labels(labels) -> np.ndarray:
    """Map labels (strings, bools or 0/1) to an int array with 1 = co-present."""
    out = []
    for lab in labels:
        if isinstance(lab, str):
            if lab not in (CO_PRESENT, NON_CO_PRESENT):
                raise ValueError(f"unknown label {lab!r}")
            out.append(1 if lab == CO_PRESENT else 0)
        else:
            out.append(1 if lab else 0)
    return np.asarray(out, dtype=np.int64)


def training_arrays(data: Sequence[tuple[FeatureVector, object]]) -> tuple[np.ndarray, np.ndarray, str]:
    """Turn ``[(FeatureVector, label), ...]`` into ``(X, y, schema_id)``."""
    if len(data) == 0:
        raise EmptyDataset("no training samples")
    sid = data[0][0].schema_id
    for fv, _ in data:
        if fv.schema_id != sid:
            raise SchemaMismatch(f"mixed schemas {sid} and {fv.schema_id} in training data")
    X = np.stack([fv.values for fv, _ in data])
    y = encode_labels([lab for _, lab in data])
    return X, y, sid


def best_split(X, y, idx, features, min_leaf):
    """Exhaustive search for the impurity-minimizing axis split.

    Returns ``(impurity, feature, threshold)`` or ``None`` when no split
    leaves ``min_leaf`` samples on both sides.
    """
    n = len(idx)
    yy = y[idx].astype(np.float64)
    total_pos = yy.sum()
    nl = np.arange(1, n, dtype=np.float64)
    nr = n - nl
    best = None
    for f in features:
        xs = X[idx, f]
        order = np.argsort(xs, kind="stable")
        xs_s = xs[order]
        pos_l = np.cumsum(yy[order])[:-1]
        pl = pos_l / nl
        pr = (total_pos - pos_l) / nr
        imp = (nl * 2.0 * pl * (1.0 - pl) + nr * 2.0 * pr * (1.0 - pr)) / n
        valid = (xs_s[:-1] < xs_s[1:]) & (nl >= min_leaf) & (nr >= min_leaf)
        if not valid.any():
            continue
        imp = np.where(valid, imp, np.inf)
        i = int(np.argmin(imp))
        if best is None or imp[i] < best[0]:
            lo, hi = xs_s[i], xs_s[i + 1]
            thr = lo + (hi - lo) / 2.0
            if not lo <= thr < hi:
                thr = lo
            best = (float(imp[i]), int(f), float(thr))
    return best


def _grow(X, y, idx, depth, params, rng, max_features):
    n = len(idx)
    pos = float(y[idx].sum())
    node = TreeNode(pos / n, n)
    parent_imp = gini(pos, n)
    if depth >= params.max_depth or parent_imp == 0.0 or n < 2 * params.min_leaf:
        return node
    d = X.shape[1]
    if max_features is None or max_features >= d:
        features = range(d)
    else:
        features = np.sort(rng.choice(d, size=max_features, replace=False))
    split = best_split(X, y, idx, features, params.min_leaf)
    if split is None or not split[0] < parent_imp - 1e-12:
        return node
    _, f, thr = split
    go_left = X[idx, f] <= thr
    node.feature, node.threshold = f, thr
    node.left = _grow(X, y, idx[go_left], depth + 1, params, rng, max_features)
    node.right = _grow(X, y, idx[~go_left], depth + 1, params, rng, max_features)
    return node


class DecisionTree:
    """A trained tree plus the schema id of the features it was trained on."""

    kind = "tree"

    def __init__(self, root: TreeNode, n_features: int, schema_id: str | None, params: TreeParams):
        self.root = root
        self.n_features = n_features
        self.schema_id = schema_id
        self.params = params
        self._arrays = None

    def _compile(self):
        feats, thrs, lefts, rights, post = [], [], [], [], []

        def visit(node):
            i = len(feats)
            feats.append(node.feature)
            thrs.append(node.threshold)
            lefts.append(-1)
            rights.append(-1)
            post.append(node.posterior)
            if not node.is_leaf:
                lefts[i] = visit(node.left)
                rights[i] = visit(node.right)
            return i

        visit(self.root)
        self._arrays = (
            np.array(feats, dtype=np.int64),
            np.array(thrs),
            np.array(lefts, dtype=np.int64),
            np.array(rights, dtype=np.int64),
            np.array(post),
        )
        return self._arrays

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        """Leaf posterior P(co-present) for each row of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise SchemaMismatch(f"expected {self.n_features} features, got {X.shape[1]}")
        feats, thrs, lefts, rights, post = self._arrays or self._compile()
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            f = feats[node]
            active = f >= 0
            if not active.any():
                return post[node]
            a = rows[active]
            go_left = X[a, f[active]] <= thrs[node[active]]
            node[a] = np.where(go_left, lefts[node[a]], rights[node[a]])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self.predict_proba(X) >= 0.5).astype(np.int64)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "n_features": self.n_features,
            "schema_id": self.schema_id,
            "params": asdict(self.params),
            "root": self.root.to_json(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "DecisionTree":
        return cls(TreeNode.from_json(d["root"]), int(d["n_features"]), d["schema_id"], TreeParams(**d["params"]))


def train_tree(X, y=None, params: TreeParams | None = None, schema_id: str | None = None, *,
               rng: np.random.Generator | None = None, max_features: int | None = None) -> DecisionTree:
    """Greedy top-down induction minimizing weighted Gini impurity.

    ``X`` is an (n, d) array with labels ``y`` (1 = co-present), or a list
    of ``(FeatureVector, label)`` pairs with ``y`` omitted.  Induction is
    deterministic given the data order and params; ``rng`` and
    ``max_features`` are only used for per-split feature subsampling.
    """
    if y is None:
        X, y, schema_id = training_arrays(X)
    X = np.asarray(X, dtype=np.float64)
    y = encode_labels(y) if not isinstance(y, np.ndarray) or y.dtype.kind not in "iub" else y.astype(np.int64)
    if X.ndim != 2 or len(X) == 0:
        raise EmptyDataset("no training samples")
    if len(X) != len(y):
        raise ValueError(f"{len(X)} samples but {len(y)} labels")
    params = params or TreeParams()
    if max_features is not None and rng is None:
        rng = np.random.default_rng(0)
    root = _grow(X, y, np.arange(len(X)), 0, params, rng, max_features)
    return DecisionTree(root, X.shape[1], schema_id, params)
