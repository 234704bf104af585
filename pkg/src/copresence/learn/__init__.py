"""Tree classifiers and the evaluation mechanics around them."""
import json
from pathlib import Path

from ..context import CO_PRESENT, NON_CO_PRESENT
from ..features import FeatureVector, SchemaMismatch
from .evaluation import (
    FoldPlan,
    LengthMismatch,
    Metrics,
    TooFewSamples,
    compute_metrics,
    stratified_kfold,
    undersample_rounds,
)
from .forest import ForestModel, ForestParams, train_forest
from .tree import DecisionTree, EmptyDataset, TreeNode, TreeParams, encode_labels, train_tree

MODEL_FORMAT = "copresence-model"
MODEL_VERSION = 1

CLASSIFIERS = ("dt", "rf")


def predict(model, fv: FeatureVector) -> tuple[str, float]:
    """Classify one feature vector; a score of exactly 0.5 counts as co-present."""
    if model.schema_id is not None and fv.schema_id != model.schema_id:
        raise SchemaMismatch(f"model expects schema {model.schema_id}, got {fv.schema_id}")
    score = float(model.predict_proba(fv.values[None, :])[0])
    return (CO_PRESENT if score >= 0.5 else NON_CO_PRESENT), score


def train_classifier(kind: str, X, y, schema_id=None, params=None, seed: int = 0, threads: int = 1):
    """``kind`` is ``"dt"`` (single tree) or ``"rf"`` (forest)."""
    if kind == "dt":
        return train_tree(X, y, params or TreeParams(), schema_id)
    if kind == "rf":
        if params is None:
            params = ForestParams(seed=seed)
        return train_forest(X, y, params, schema_id, threads=threads)
    raise ValueError(f"unknown classifier {kind!r}; expected one of {CLASSIFIERS}")


def model_to_json(model) -> dict:
    return {"format": MODEL_FORMAT, "version": MODEL_VERSION, **model.to_json()}


def model_from_json(d: dict):
    if d.get("format") != MODEL_FORMAT or d.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model file (format={d.get('format')}, version={d.get('version')})")
    if d["kind"] == "tree":
        return DecisionTree.from_json(d)
    if d["kind"] == "forest":
        return ForestModel.from_json(d)
    raise ValueError(f"unknown model kind {d['kind']!r}")


def save_model(model, path) -> None:
    Path(path).write_text(json.dumps(model_to_json(model)))


def load_model(path):
    return model_from_json(json.loads(Path(path).read_text()))


__all__ = [
    "CLASSIFIERS", "DecisionTree", "EmptyDataset", "FoldPlan", "ForestModel", "ForestParams",
    "LengthMismatch", "Metrics", "TooFewSamples", "TreeNode", "TreeParams", "compute_metrics",
    "encode_labels", "load_model", "model_from_json", "model_to_json", "predict", "save_model",
    "stratified_kfold", "train_classifier", "train_forest", "train_tree", "undersample_rounds",
]
