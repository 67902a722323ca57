"""Membership inference against a trained model.

The attacker trains shadow models that imitate the target (same
architecture, same training configuration) on halves of a data pool the
target never saw. Each shadow then labels its own records: the half it
trained on is "member", the other half "non-member". A random forest
learns to tell the two apart from the shape of the probability vector,
and is finally pointed at the real target through a black-box predict
function.

Attack records are the probability vector sorted in descending order
concatenated with a one-hot of the true label, so the forest sees
confidence shape plus which class the record belongs to, but never raw
class ordering.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import learners
from .errors import ParameterError, ShapeError
from .forest import RandomForest
from .learners import Model, ModelArch, TrainConfig, cap_batch
from .numkit import derive_rng, derive_seed

PredictFn = Callable[[np.ndarray], np.ndarray]

N_SHADOWS = 10
FOREST_TREES = 50
FOREST_DEPTH = 10


@dataclass(frozen=True)
class ShadowSplit:
    """Index split of the shadow pool for one shadow model."""

    member_idx: np.ndarray
    outsider_idx: np.ndarray


@dataclass
class ShadowEnsemble:
    models: list[Model]
    splits: list[ShadowSplit]
    class_count: int


def train_shadows(
    arch: ModelArch,
    pool_features: np.ndarray,
    pool_labels: np.ndarray,
    config: TrainConfig,
    seed: int,
    n_shadows: int = N_SHADOWS,
) -> ShadowEnsemble:
    """Train n_shadows copies of the target's architecture on fresh halves
    of the pool. Each shadow gets its own derived permutation and its own
    derived training seed."""
    X = np.asarray(pool_features, dtype=np.float64)
    y = np.asarray(pool_labels, dtype=np.int64)
    m = X.shape[0]
    if m < 2:
        raise ParameterError(f"shadow pool needs at least 2 records, got {m}")
    if n_shadows < 1:
        raise ParameterError("need at least one shadow model")
    models = []
    splits = []
    for k in range(n_shadows):
        perm = derive_rng(seed, f"attack.shadow/{k}.split").permutation(m)
        half = m // 2
        member_idx = perm[:half]
        outsider_idx = perm[half:]
        cfg = replace(
            cap_batch(config, half),
            seed=derive_seed(seed, f"attack.shadow/{k}.train"),
        )
        models.append(learners.train(arch, X[member_idx], y[member_idx], cfg))
        splits.append(ShadowSplit(member_idx=member_idx, outsider_idx=outsider_idx))
    return ShadowEnsemble(models=models, splits=splits, class_count=int(arch.class_count))


def attack_features(
    prob_rows: np.ndarray, true_labels: np.ndarray, class_count: int
) -> np.ndarray:
    """Sorted-descending probabilities next to a one-hot true label,
    shape (n, 2 * class_count)."""
    probs = np.asarray(prob_rows, dtype=np.float64)
    labels = np.asarray(true_labels, dtype=np.int64)
    if probs.ndim != 2 or probs.shape[1] != class_count:
        raise ShapeError(
            f"expected (n, {class_count}) probability rows, got {probs.shape}"
        )
    if labels.shape != (probs.shape[0],):
        raise ShapeError(
            f"expected {probs.shape[0]} labels, got shape {labels.shape}"
        )
    if labels.size and (labels.min() < 0 or labels.max() >= class_count):
        raise ParameterError("true labels out of range for one-hot encoding")
    ranked = np.sort(probs, axis=1)[:, ::-1]
    onehot = np.eye(class_count, dtype=np.float64)[labels]
    return np.concatenate([ranked, onehot], axis=1)


def build_attack_set(
    ensemble: ShadowEnsemble,
    pool_features: np.ndarray,
    pool_labels: np.ndarray,
    seed: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Query every shadow on both halves of its split and stack the labelled
    records (member=1, non-member=0). The majority side is down-sampled with
    a derived permutation so the classes come out exactly balanced."""
    X = np.asarray(pool_features, dtype=np.float64)
    y = np.asarray(pool_labels, dtype=np.int64)
    c = ensemble.class_count
    record_chunks = []
    label_chunks = []
    for model, split in zip(ensemble.models, ensemble.splits):
        for idx, flag in ((split.member_idx, 1), (split.outsider_idx, 0)):
            probs = learners.predict_proba(model, X[idx])
            record_chunks.append(attack_features(probs, y[idx], c))
            label_chunks.append(np.full(len(idx), flag, dtype=np.int64))
    records = np.concatenate(record_chunks, axis=0)
    member = np.concatenate(label_chunks)
    n_pos = int(member.sum())
    n_neg = member.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ParameterError("attack set must contain both members and non-members")
    if n_pos != n_neg:
        rng = derive_rng(seed, "attack.balance")
        majority = 1 if n_pos > n_neg else 0
        keep_count = min(n_pos, n_neg)
        major_idx = np.flatnonzero(member == majority)
        kept = np.sort(major_idx[rng.permutation(major_idx.size)][:keep_count])
        chosen = np.sort(np.concatenate([np.flatnonzero(member != majority), kept]))
        records = records[chosen]
        member = member[chosen]
    return records, member


def fit_attack_forest(
    records: np.ndarray, member_labels: np.ndarray, seed: int
) -> RandomForest:
    forest = RandomForest(
        n_trees=FOREST_TREES,
        max_depth=FOREST_DEPTH,
        seed=derive_seed(seed, "attack.forest"),
    )
    return forest.fit(records, member_labels)


@dataclass(frozen=True)
class AttackOutcome:
    """Confusion counts of one membership attack. Positives are members."""

    true_positives: int
    false_positives: int
    true_negatives: int
    false_negatives: int

    @property
    def n_members(self) -> int:
        return self.true_positives + self.false_negatives

    @property
    def n_outsiders(self) -> int:
        return self.false_positives + self.true_negatives

    @property
    def tpr(self) -> float:
        return self.true_positives / self.n_members

    @property
    def fpr(self) -> float:
        return self.false_positives / self.n_outsiders


def evaluate_attack(
    attack_model: RandomForest,
    predict_fn: PredictFn,
    member_features: np.ndarray,
    member_labels: np.ndarray,
    outsider_features: np.ndarray,
    outsider_labels: np.ndarray,
    class_count: int,
) -> AttackOutcome:
    """Run the fitted attack against a black-box target.

    predict_fn is the only access to the target: it maps a feature matrix to
    probability rows. Member and outsider sets must be the same size so the
    confusion counts are comparable across mechanisms.
    """
    mx = np.asarray(member_features, dtype=np.float64)
    ox = np.asarray(outsider_features, dtype=np.float64)
    if mx.shape[0] != ox.shape[0]:
        raise ParameterError(
            f"member and outsider sets must match in size, got {mx.shape[0]} and {ox.shape[0]}"
        )
    if mx.shape[0] == 0:
        raise ParameterError("attack evaluation needs at least one record per side")
    member_records = attack_features(predict_fn(mx), member_labels, class_count)
    outsider_records = attack_features(predict_fn(ox), outsider_labels, class_count)
    member_pred = attack_model.predict(member_records)
    outsider_pred = attack_model.predict(outsider_records)
    tp = int(member_pred.sum())
    fp = int(outsider_pred.sum())
    return AttackOutcome(
        true_positives=tp,
        false_positives=fp,
        true_negatives=int(outsider_pred.size - fp),
        false_negatives=int(member_pred.size - tp),
    )
