"""Combining modalities into one co-presence decision.

Three strategies:

* ``features`` - one classifier on the concatenated feature vector;
* ``decisions-single`` - one classifier per modality, majority vote;
* ``decisions-subsets`` - one classifier per modality subset (features
  fused inside each subset), majority vote.

Votes are hard labels.  A tied vote is resolved as non-co-present.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .context import (
    CO_PRESENT,
    NON_CO_PRESENT,
    PHYSICAL,
    ContextPair,
    Modality,
    format_modalities,
    parse_modalities,
    sorted_modalities,
)
from .features import FeatureSchema, SchemaMismatch, assemble, feature_matrix, labels_of
from .learn import load_model, save_model, train_classifier

FEATURES = "features"
DECISIONS_SINGLE = "decisions-single"
DECISIONS_SUBSETS = "decisions-subsets"
FUSION_KINDS = (FEATURES, DECISIONS_SINGLE, DECISIONS_SUBSETS)
FAIL_SECURE = "fail-secure"

DEFAULT_SUBSETS = (
    frozenset({Modality.AUDIO}),
    frozenset({Modality.BLUETOOTH, Modality.WIFI}),
    PHYSICAL,
)

# short names used in reports
FUSION_LABEL = {FEATURES: "Fuse-F", DECISIONS_SINGLE: "Fuse-D-S", DECISIONS_SUBSETS: "Fuse-D-M"}


@dataclass(frozen=True)
class FusionStrategy:
    kind: str = FEATURES
    subsets: tuple[frozenset, ...] = DEFAULT_SUBSETS
    tie_policy: str = FAIL_SECURE

    def __post_init__(self):
        if self.kind not in FUSION_KINDS:
            raise ValueError(f"unknown fusion kind {self.kind!r}; expected one of {FUSION_KINDS}")
        if self.tie_policy != FAIL_SECURE:
            raise ValueError(f"unsupported tie policy {self.tie_policy!r}")
        object.__setattr__(self, "subsets", tuple(frozenset(parse_modalities(s)) for s in self.subsets))

    def units(self, modalities: Iterable[Modality]) -> list[frozenset]:
        """Modality groups that each get their own classifier."""
        mods = frozenset(modalities)
        if not mods:
            raise ValueError("at least one modality is required")
        if self.kind == FEATURES:
            return [mods]
        if self.kind == DECISIONS_SINGLE:
            return [frozenset({m}) for m in sorted_modalities(mods)]
        units = [s & mods for s in self.subsets]
        units = [u for u in units if u]
        seen: set = set()
        for u in units:
            if u & seen:
                raise ValueError("fusion subsets must be disjoint")
            seen |= u
        if seen != mods:
            missing = mods - seen
            raise ValueError(f"fusion subsets do not cover {format_modalities(missing)}")
        return units

    @property
    def label(self) -> str:
        return FUSION_LABEL[self.kind]


def majority_vote(votes: Sequence, tie_policy: str = FAIL_SECURE) -> str:
    """Strict majority of co-present votes wins; anything else is a rejection."""
    if len(votes) == 0:
        raise ValueError("majority_vote needs at least one vote")
    if tie_policy != FAIL_SECURE:
        raise ValueError(f"unsupported tie policy {tie_policy!r}")
    co = sum(1 for v in votes if v == CO_PRESENT or v is True or (isinstance(v, (int, np.integer)) and v == 1))
    return CO_PRESENT if 2 * co > len(votes) else NON_CO_PRESENT


@dataclass
class FusedUnit:
    modalities: frozenset
    schema: FeatureSchema
    model: object


@dataclass
class FusedModel:
    strategy: FusionStrategy
    modalities: frozenset
    units: list[FusedUnit] = field(default_factory=list)
    classifier: str = "rf"

    @property
    def schema(self) -> FeatureSchema:
        return FeatureSchema.for_modalities(self.modalities)

    def unit_votes(self, X: np.ndarray, schema: FeatureSchema) -> np.ndarray:
        """(n, n_units) 0/1 votes for feature rows laid out per ``schema``."""
        X = np.atleast_2d(X)
        index = {n: i for i, n in enumerate(schema.names)}
        votes = np.empty((len(X), len(self.units)), dtype=np.int64)
        for j, unit in enumerate(self.units):
            try:
                cols = [index[n] for n in unit.schema.names]
            except KeyError as e:
                raise SchemaMismatch(f"feature {e.args[0]} missing from schema {schema.schema_id}") from None
            votes[:, j] = unit.model.predict(X[:, cols])
        return votes

    def predict_matrix(self, X: np.ndarray, schema: FeatureSchema) -> np.ndarray:
        """Fused 0/1 decisions for feature rows laid out per ``schema``."""
        votes = self.unit_votes(X, schema)
        if self.strategy.kind == FEATURES:
            return votes[:, 0]
        return (2 * votes.sum(axis=1) > votes.shape[1]).astype(np.int64)


def fit_fused(X: np.ndarray, y: np.ndarray, schema: FeatureSchema, modalities: Iterable[Modality],
              strategy: FusionStrategy, classifier: str = "rf", params=None, seed: int = 0,
              threads: int = 1) -> FusedModel:
    """Train every unit of ``strategy`` from a precomputed feature matrix."""
    mods = frozenset(modalities)
    fused = FusedModel(strategy, mods, classifier=classifier)
    for unit_mods in strategy.units(mods):
        sub = FeatureSchema.for_modalities(unit_mods)
        cols = schema.columns(unit_mods)
        model = train_classifier(classifier, X[:, cols], y, sub.schema_id, params, seed=seed, threads=threads)
        fused.units.append(FusedUnit(frozenset(unit_mods), sub, model))
    return fused


def train_fused(pairs: Sequence[ContextPair], modalities: Iterable[Modality], strategy: FusionStrategy,
                classifier: str = "rf", params=None, seed: int = 0, threads: int = 1) -> FusedModel:
    mods = frozenset(modalities)
    schema = FeatureSchema.for_modalities(mods)
    X = feature_matrix(pairs, schema)
    return fit_fused(X, labels_of(pairs), schema, mods, strategy, classifier, params, seed, threads)


def fused_predict(model: FusedModel, pair: ContextPair) -> tuple[str, tuple[str, ...]]:
    """Decide one pair; returns the fused label and the per-unit votes."""
    fv = assemble(pair, model.modalities)
    votes = model.unit_votes(fv.values[None, :], fv.schema)[0]
    labels = tuple(CO_PRESENT if v else NON_CO_PRESENT for v in votes)
    if model.strategy.kind == FEATURES:
        return labels[0], labels
    return majority_vote(labels, model.strategy.tie_policy), labels


def save_fused(model: FusedModel, directory) -> Path:
    """Write a manifest plus one model file and schema file per unit."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    units = []
    for i, unit in enumerate(model.units):
        name = f"unit{i}_{''.join(m.value for m in sorted_modalities(unit.modalities))}"
        save_model(unit.model, directory / f"{name}.model.json")
        (directory / f"{name}.schema.json").write_text(json.dumps(unit.schema.to_json()))
        units.append({"modalities": [m.value for m in sorted_modalities(unit.modalities)],
                      "model": f"{name}.model.json", "schema": f"{name}.schema.json"})
    manifest = {
        "format": "copresence-fused",
        "version": 1,
        "strategy": {
            "kind": model.strategy.kind,
            "subsets": [[m.value for m in sorted_modalities(s)] for s in model.strategy.subsets],
            "tie_policy": model.strategy.tie_policy,
        },
        "modalities": [m.value for m in sorted_modalities(model.modalities)],
        "classifier": model.classifier,
        "units": units,
    }
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path


def load_fused(directory) -> FusedModel:
    directory = Path(directory)
    if directory.is_file():
        directory = directory.parent
    m = json.loads((directory / "manifest.json").read_text())
    if m.get("format") != "copresence-fused":
        raise ValueError(f"{directory} does not hold a fused model manifest")
    s = m["strategy"]
    strategy = FusionStrategy(s["kind"], tuple(s["subsets"]), s["tie_policy"])
    fused = FusedModel(strategy, parse_modalities(m["modalities"]), classifier=m["classifier"])
    for u in m["units"]:
        schema = FeatureSchema.from_json(json.loads((directory / u["schema"]).read_text()))
        model = load_model(directory / u["model"])
        if model.schema_id != schema.schema_id:
            raise SchemaMismatch(f"unit model {u['model']} was trained on schema {model.schema_id}")
        fused.units.append(FusedUnit(parse_modalities(u["modalities"]), schema, model))
    return fused
