"""Accuracy measurement on the base and new class splits.

Evaluation classifies fresh test samples against the text features of
every class in one split: base classes measure what training saw, new
classes measure generalization to held-out classes.  Test draws come
from streams derived with an "eval" label, so they never collide with
training data, and the zero-context baseline (all context vectors zero)
is available as the untrained reference point.
"""

from dataclasses import dataclass

import numpy as np

from fedprompt import autograd as ag
from fedprompt.autograd import ParameterSet
from fedprompt.errors import ConfigError, ContractError
from fedprompt.seeding import rng_for
from fedprompt.translator import TranslatorConfig, translate_one
from fedprompt.world import SyntheticWorld, sample_image, text_feature

SPLITS = ("base", "new")


@dataclass(frozen=True)
class EvalResult:
    """Accuracies of one evaluated run, in percent."""

    dataset_name: str
    base_acc: float
    new_acc: float
    gap: float


def generalization_gap(base_acc: float, new_acc: float) -> float:
    """Percentage points by which new-class accuracy beats base accuracy."""
    return new_acc - base_acc


def split_class_ids(world: SyntheticWorld, split: str) -> list[int]:
    if split not in SPLITS:
        raise ConfigError(f"split must be one of {SPLITS}, got {split!r}")
    ids = list(world.base_ids if split == "base" else world.new_ids)
    if not ids:
        raise ContractError(f"split {split!r} has no classes")
    return ids


def class_features(
    params: ParameterSet | None,
    world: SyntheticWorld,
    trans_cfg: TranslatorConfig,
    class_ids,
) -> np.ndarray:
    """Unit text features for the given classes, one row per class.

    With params None the context is all zeros, which reduces every
    feature to the raw class-name embedding: the zero-context baseline.
    """
    rows = []
    for class_id in class_ids:
        emb = world.class_embedding(class_id)
        if params is None:
            ctx = ag.constant(np.zeros((trans_cfg.n_ctx, trans_cfg.d_model)))
        else:
            kv = np.repeat(emb, trans_cfg.kv_len, axis=0)
            ctx = translate_one(params, trans_cfg, ag.constant(kv))
        rows.append(text_feature(world.head, emb, ctx).value.data[0])
    return np.stack(rows)


def evaluate(
    params: ParameterSet | None,
    world: SyntheticWorld,
    trans_cfg: TranslatorConfig,
    split: str,
    n_test: int,
    temperature: float,
    seed: int,
) -> float:
    """Accuracy percent over the chosen split.

    The label space is exactly the split's classes.  Text features are
    computed once per class; each of the n_test samples per class is
    assigned to the feature with the highest cosine/temperature score.
    """
    if n_test < 1:
        raise ConfigError(f"n_test must be positive, got {n_test}")
    if temperature <= 0:
        raise ConfigError(f"temperature must be positive, got {temperature}")
    class_ids = split_class_ids(world, split)
    feats = class_features(params, world, trans_cfg, class_ids)
    correct = 0
    for local, class_id in enumerate(class_ids):
        rng = rng_for(seed, "eval", split, class_id)
        images = np.stack([sample_image(world, class_id, rng) for _ in range(n_test)])
        logits = images @ feats.T / temperature
        correct += int((logits.argmax(axis=1) == local).sum())
    return 100.0 * correct / (n_test * len(class_ids))


def evaluate_both_splits(
    params: ParameterSet | None,
    world: SyntheticWorld,
    trans_cfg: TranslatorConfig,
    n_test: int,
    temperature: float,
    seed: int,
    dataset_name: str = "synthetic",
) -> EvalResult:
    base = evaluate(params, world, trans_cfg, "base", n_test, temperature, seed)
    new = evaluate(params, world, trans_cfg, "new", n_test, temperature, seed)
    return EvalResult(dataset_name, base, new, generalization_gap(base, new))
