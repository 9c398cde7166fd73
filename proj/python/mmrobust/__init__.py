"""Robustness evaluation of multi-modal fake news detectors.

Configuration arguments are plain dicts with the same keys as the command-line
tool's JSON files; omitted keys keep their defaults.
"""

import json
import os

from ._core import (
    Dataset,
    Detector,
    IoError,
    MetricUndefinedError,
    Model,
    ResizeDefendedModel,
    ValidationError,
    load_dataset,
    project,
    remove_ids,
)

__all__ = [
    "Dataset",
    "Detector",
    "IoError",
    "MetricUndefinedError",
    "Model",
    "ResizeDefendedModel",
    "ValidationError",
    "activation_clustering",
    "attack_image",
    "attack_text",
    "evaluate",
    "evaluate_backdoor",
    "evaluate_condition",
    "generate",
    "load_dataset",
    "modality_swap",
    "poison",
    "project",
    "remove_ids",
    "resize_defended",
    "run_matrix",
    "split",
    "train",
]

from . import _core


def _dump(config):
    return json.dumps(config if config is not None else {})


def generate(config=None):
    """Synthetic corpus from a generator config."""
    return _core._generate(_dump(config))


def split(dataset, ratios=None):
    """Event-disjoint (train, val, test) split."""
    return _core._split(dataset, _dump(ratios))


def train(train_set, val_set, config=None):
    """Trains a detector; returns (detector, per-epoch history)."""
    model, history = _core._train(_dump(config), train_set, val_set)
    return model, json.loads(history)


def evaluate(model, dataset):
    return json.loads(model._evaluate(dataset))


def attack_image(model, text, image, label, config=None):
    return _core._attack_image(model, text, image, label, _dump(config))


def attack_text(model, text, image, label, config=None):
    return _core._attack_text(model, text, image, label, _dump(config))


def evaluate_condition(model, dataset, kind, settings=None, seed=0, workers=1):
    """One report row for an attack, defense or bias condition."""
    return json.loads(
        _core._evaluate_condition(model, dataset, kind, _dump(settings), seed, workers)
    )


def poison(dataset, spec=None):
    """Returns (poisoned dataset, poisoned ids)."""
    return _core._poison(dataset, _dump(spec))


def evaluate_backdoor(clean_model, backdoored_model, dataset, trigger=None):
    return json.loads(
        _core._evaluate_backdoor(clean_model, backdoored_model, dataset, _dump(trigger))
    )


def activation_clustering(model, dataset, config=None, poisoned_ids=()):
    return json.loads(
        _core._activation_clustering(model, dataset, _dump(config), list(poisoned_ids))
    )


def resize_defended(model, spec=None):
    return ResizeDefendedModel(model, _dump(spec))


def modality_swap(model, dataset, seed=0):
    return json.loads(_core._modality_swap(model, dataset, seed))


def run_matrix(matrix, base_dir="."):
    """Rows of the model x dataset x condition matrix."""
    return json.loads(_core._run_matrix(json.dumps(matrix), os.fspath(base_dir)))
