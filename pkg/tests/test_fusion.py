import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from copresence.context import CO_PRESENT, NON_CO_PRESENT, Modality, parse_modalities
from copresence.features import FeatureSchema, feature_matrix, labels_of
from copresence.fusion import (
    DECISIONS_SINGLE,
    DECISIONS_SUBSETS,
    FEATURES,
    FusedModel,
    FusedUnit,
    FusionStrategy,
    fused_predict,
    load_fused,
    majority_vote,
    save_fused,
    train_fused,
)
from copresence.learn import DecisionTree, TreeNode, TreeParams

CO, NON = CO_PRESENT, NON_CO_PRESENT


@pytest.mark.parametrize("votes,expected", [
    ((CO,), CO),
    ((NON, NON, CO), NON),
    ((CO, CO, NON), CO),
    ((CO, NON, CO, NON), NON),
    ((CO, NON), NON),
    ((CO,) * 4 + (NON,) * 3, CO),
])
def test_majority_vote(votes, expected):
    assert majority_vote(votes) == expected


def test_majority_vote_rejects_empty_and_unknown_policy():
    with pytest.raises(ValueError):
        majority_vote([])
    with pytest.raises(ValueError):
        majority_vote([CO], "fail-open")


votes = st.lists(st.sampled_from([CO, NON]), min_size=1, max_size=9)


@settings(max_examples=200, deadline=None)
@given(v=votes, seed=st.integers(0, 1000))
def test_vote_permutation_invariance(v, seed):
    w = list(v)
    np.random.default_rng(seed).shuffle(w)
    assert majority_vote(v) == majority_vote(w)


@settings(max_examples=200, deadline=None)
@given(v=votes, i=st.integers(0, 8))
def test_single_flip_needs_small_margin(v, i):
    i %= len(v)
    flipped = list(v)
    flipped[i] = CO if v[i] == NON else NON
    co = v.count(CO)
    margin = abs(co - (len(v) - co))
    if majority_vote(v) != majority_vote(flipped):
        assert margin <= 1 or (margin == 2 and len(v) % 2 == 0)


@settings(max_examples=50, deadline=None)
@given(attacked=st.integers(0, 2))
def test_one_subset_cannot_force_acceptance(attacked):
    v = [NON, NON, NON]
    v[attacked] = CO
    assert majority_vote(v) == NON


def test_units_per_strategy():
    full = set(Modality)
    assert len(FusionStrategy(FEATURES).units(full)) == 1
    assert len(FusionStrategy(DECISIONS_SINGLE).units(parse_modalities("Al,G,H,T"))) == 4
    assert FusionStrategy(DECISIONS_SUBSETS).units(full) == [
        parse_modalities("Au"), parse_modalities("B,W"), parse_modalities("Al,G,H,T")]
    assert FusionStrategy(DECISIONS_SUBSETS).units(parse_modalities("Au,B,W")) == [
        parse_modalities("Au"), parse_modalities("B,W")]


def test_bad_subsets():
    with pytest.raises(ValueError):
        FusionStrategy(DECISIONS_SUBSETS, subsets=("Au,B", "B,W")).units(parse_modalities("Au,B,W"))
    with pytest.raises(ValueError):
        FusionStrategy(DECISIONS_SUBSETS, subsets=("Au",)).units(parse_modalities("Au,W"))
    with pytest.raises(ValueError):
        FusionStrategy("stacking")


def test_train_fused_arity(small_pairs):
    m = train_fused(small_pairs, parse_modalities("Au,B,W"), FusionStrategy(FEATURES), "dt")
    assert len(m.units) == 1 and len(m.units[0].schema) == 14
    m = train_fused(small_pairs, parse_modalities("Al,G,H,T"), FusionStrategy(DECISIONS_SINGLE), "dt")
    assert len(m.units) == 4
    m = train_fused(small_pairs, set(Modality), FusionStrategy(DECISIONS_SUBSETS), "dt")
    assert len(m.units) == 3


def constant_unit(mod, vote):
    schema = FeatureSchema.for_modalities({mod})
    tree = DecisionTree(TreeNode(float(vote), 1), len(schema), schema.schema_id, TreeParams())
    return FusedUnit(frozenset({mod}), schema, tree)


@pytest.mark.parametrize("unit_votes,expected", [
    ((1, 1, 0), CO),
    ((1, 0), NON),
    ((1, 1, 1, 1, 0, 0, 0), CO),
])
def test_fused_predict_votes(small_pairs, unit_votes, expected):
    mods = list(Modality)[:len(unit_votes)]
    model = FusedModel(FusionStrategy(DECISIONS_SINGLE), frozenset(mods),
                       [constant_unit(m, v) for m, v in zip(mods, unit_votes)], "dt")
    label, v = fused_predict(model, small_pairs[0])
    assert label == expected
    assert v == tuple(CO if x else NON for x in unit_votes)


def test_predict_matrix_agrees_with_fused_predict(small_pairs):
    mods = parse_modalities("Au,B,W,T")
    for kind in (FEATURES, DECISIONS_SINGLE):
        model = train_fused(small_pairs[:80], mods, FusionStrategy(kind, subsets=("Au", "B,W", "T")), "rf")
        schema = model.schema
        batch = model.predict_matrix(feature_matrix(small_pairs[80:], schema), schema)
        single = [fused_predict(model, p)[0] == CO for p in small_pairs[80:]]
        assert batch.tolist() == [int(s) for s in single]


def test_fused_model_round_trip(tmp_path, small_pairs):
    mods = set(Modality)
    model = train_fused(small_pairs, mods, FusionStrategy(DECISIONS_SUBSETS), "rf")
    save_fused(model, tmp_path / "m")
    loaded = load_fused(tmp_path / "m")
    schema = model.schema
    X = feature_matrix(small_pairs, schema)
    assert np.array_equal(model.predict_matrix(X, schema), loaded.predict_matrix(X, schema))
    assert loaded.strategy == model.strategy
