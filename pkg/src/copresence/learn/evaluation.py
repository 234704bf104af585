"""Cross-validation plans, under-sampling rounds and confusion metrics."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..context import CO_PRESENT, ContextPair
from .tree import encode_labels


class TooFewSamples(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


def _ratio(num: int, den: int) -> float | None:
    return num / den if den > 0 else None


@dataclass(frozen=True)
class Metrics:
    """Confusion counts with co-present as the positive class.

    Rates whose denominator is zero are ``None`` rather than 0.
    """

    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def fpr(self) -> float | None:
        return _ratio(self.fp, self.fp + self.tn)

    @property
    def fnr(self) -> float | None:
        return _ratio(self.fn, self.fn + self.tp)

    @property
    def precision(self) -> float | None:
        return _ratio(self.tp, self.tp + self.fp)

    @property
    def recall(self) -> float | None:
        return _ratio(self.tp, self.tp + self.fn)

    @property
    def f1(self) -> float | None:
        p, r = self.precision, self.recall
        if p is None or r is None:
            return None
        if p + r == 0:
            return 0.0
        return 2 * p * r / (p + r)

    @property
    def accuracy(self) -> float | None:
        return _ratio(self.tp + self.tn, self.total)

    def __add__(self, other: "Metrics") -> "Metrics":
        return Metrics(self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn)


def compute_metrics(predictions, labels) -> Metrics:
    """Confusion counts of ``predictions`` against ground-truth ``labels``.

    Both accept label strings, booleans or 0/1 with co-present positive.
    """
    pred = encode_labels(predictions)
    true = encode_labels(labels)
    if len(pred) != len(true):
        raise LengthMismatch(f"{len(pred)} predictions for {len(true)} labels")
    return Metrics(
        tp=int(np.sum((pred == 1) & (true == 1))),
        fp=int(np.sum((pred == 1) & (true == 0))),
        tn=int(np.sum((pred == 0) & (true == 0))),
        fn=int(np.sum((pred == 0) & (true == 1))),
    )


@dataclass(frozen=True)
class FoldPlan:
    folds: tuple[np.ndarray, ...]  # test indices per fold
    pair_ids: tuple[tuple[str, ...], ...]
    stratified: bool
    seed: int

    @property
    def k(self) -> int:
        return len(self.folds)

    def train_test(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        test = self.folds[i]
        train = np.sort(np.concatenate([f for j, f in enumerate(self.folds) if j != i]))
        return train, test


def _as_labels(pairs_or_labels) -> tuple[np.ndarray, tuple[str, ...]]:
    items = list(pairs_or_labels)
    if items and isinstance(items[0], ContextPair):
        return encode_labels([p.label for p in items]), tuple(p.pair_id for p in items)
    return encode_labels(items), tuple(str(i) for i in range(len(items)))


def stratified_kfold(pairs_or_labels, k: int = 10, seed: int = 0) -> FoldPlan:
    """Partition into ``k`` folds preserving the class ratio.

    Each class is shuffled and dealt round-robin; the second class starts
    dealing where the first stopped, so fold sizes differ by at most one.
    """
    y, ids = _as_labels(pairs_or_labels)
    counts = [int(np.sum(y == c)) for c in (0, 1)]
    if k < 2 or min(counts) < k:
        raise TooFewSamples(f"cannot build {k} stratified folds from class counts {counts}")
    rng = np.random.default_rng(seed)
    buckets: list[list[int]] = [[] for _ in range(k)]
    offset = 0
    for c in (1, 0):
        members = np.flatnonzero(y == c)
        rng.shuffle(members)
        for j, idx in enumerate(members):
            buckets[(offset + j) % k].append(int(idx))
        offset = (offset + len(members)) % k
    folds = tuple(np.array(sorted(b), dtype=np.int64) for b in buckets)
    return FoldPlan(folds, tuple(tuple(ids[i] for i in f) for f in folds), True, seed)


def undersample_rounds(non_co: Sequence, co: Sequence, n_subsets: int = 19, per_round: int = 10,
                       seed: int | None = None) -> list[list]:
    """Rotate windows of ``per_round`` non-co-present subsets.

    The non-co-present items are split into ``n_subsets`` near-equal
    subsets (after an optional seeded shuffle); round ``r`` holds subsets
    ``r, ..., r + per_round - 1`` (mod ``n_subsets``) plus every
    co-present item.  Each non-co-present item therefore appears in
    exactly ``per_round`` rounds.
    """
    if len(non_co) < n_subsets:
        raise TooFewSamples(f"{len(non_co)} non-co-present samples cannot fill {n_subsets} subsets")
    if not 0 < per_round <= n_subsets:
        raise ValueError("per_round must be in 1..n_subsets")
    order = np.arange(len(non_co))
    if seed is not None:
        np.random.default_rng(seed).shuffle(order)
    subsets = np.array_split(order, n_subsets)
    rounds = []
    for r in range(n_subsets):
        picked = np.concatenate([subsets[(r + j) % n_subsets] for j in range(per_round)])
        rounds.append([non_co[i] for i in picked] + list(co))
    return rounds


def label_counts(pairs: Sequence[ContextPair]) -> tuple[int, int]:
    co = sum(1 for p in pairs if p.label == CO_PRESENT)
    return co, len(pairs) - co
