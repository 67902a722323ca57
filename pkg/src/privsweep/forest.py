"""A small deterministic random forest for binary decisions.

Written in-tree rather than pulled from a library because the membership
attack needs exact, stable tie behaviour (equal votes resolve to class 0)
and bit-reproducible training from a derived seed. Bagging only: every
tree sees a bootstrap resample but all features; splits minimize Gini
impurity over midpoint thresholds, scanning features left to right so
equal-quality splits resolve the same way on every run.

Labels are 0/1. In the attack 1 means "member".
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError
from .numkit import derive_rng


@dataclass
class _Node:
    feature: int = -1
    threshold: float = 0.0
    left: "_Node | None" = None
    right: "_Node | None" = None
    clazz: int = -1  # >= 0 marks a leaf

    @property
    def is_leaf(self) -> bool:
        return self.clazz >= 0


def _leaf(y: np.ndarray) -> _Node:
    counts = np.bincount(y, minlength=2)
    # argmax breaks ties at the lowest index, i.e. towards "non-member"
    return _Node(clazz=int(np.argmax(counts)))


def _best_split(X: np.ndarray, y: np.ndarray) -> tuple[int, float, float] | None:
    """Return (feature, threshold, weighted_gini) of the best split, or None
    when no feature admits one. Strictly-better comparisons keep the first
    candidate on ties."""
    n = y.shape[0]
    total_pos = int(y.sum())
    best: tuple[int, float, float] | None = None
    for f in range(X.shape[1]):
        vals = X[:, f]
        order = np.argsort(vals, kind="stable")
        sv = vals[order]
        sy = y[order]
        cut = np.flatnonzero(sv[1:] > sv[:-1])  # boundaries between runs
        if cut.size == 0:
            continue
        left_n = cut + 1
        right_n = n - left_n
        left_pos = np.cumsum(sy)[cut]
        right_pos = total_pos - left_pos
        pl = left_pos / left_n
        pr = right_pos / right_n
        gini = (left_n * 2 * pl * (1 - pl) + right_n * 2 * pr * (1 - pr)) / n
        k = int(np.argmin(gini))
        score = float(gini[k])
        if best is None or score < best[2]:
            threshold = float((sv[cut[k]] + sv[cut[k] + 1]) / 2.0)
            best = (f, threshold, score)
    return best


def _grow(X: np.ndarray, y: np.ndarray, depth: int, max_depth: int) -> _Node:
    if depth >= max_depth or y.shape[0] < 2 or y.min() == y.max():
        return _leaf(y)
    split = _best_split(X, y)
    if split is None:
        return _leaf(y)
    f, threshold, _ = split
    go_left = X[:, f] <= threshold
    node = _Node(feature=f, threshold=threshold)
    node.left = _grow(X[go_left], y[go_left], depth + 1, max_depth)
    node.right = _grow(X[~go_left], y[~go_left], depth + 1, max_depth)
    return node


def _tree_predict(root: _Node, X: np.ndarray) -> np.ndarray:
    out = np.empty(X.shape[0], dtype=np.int64)

    def walk(node: _Node, idx: np.ndarray) -> None:
        if idx.size == 0:
            return
        if node.is_leaf:
            out[idx] = node.clazz
            return
        go_left = X[idx, node.feature] <= node.threshold
        walk(node.left, idx[go_left])
        walk(node.right, idx[~go_left])

    walk(root, np.arange(X.shape[0]))
    return out


class RandomForest:
    """Bagged Gini trees with majority vote; ties vote class 0."""

    def __init__(self, n_trees: int = 50, max_depth: int = 10, seed: int = 0):
        if n_trees < 1:
            raise ParameterError("need at least one tree")
        if max_depth < 1:
            raise ParameterError("max_depth must be at least 1")
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.seed = int(seed)
        self.roots: list[_Node] = []

    def fit(self, features: np.ndarray, labels: np.ndarray) -> "RandomForest":
        X = np.asarray(features, dtype=np.float64)
        y = np.asarray(labels, dtype=np.int64)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ShapeError(
                f"expected (n, d) features with n labels, got {X.shape} and {y.shape}"
            )
        if X.shape[0] == 0:
            raise ParameterError("cannot fit a forest on an empty set")
        if y.min() < 0 or y.max() > 1:
            raise ParameterError("forest labels must be 0 or 1")
        n = X.shape[0]
        self.roots = []
        for t in range(self.n_trees):
            rng = derive_rng(self.seed, f"forest.tree/{t}")
            boot = rng.integers(0, n, size=n)
            self.roots.append(_grow(X[boot], y[boot], 0, self.max_depth))
        return self

    def _votes(self, features: np.ndarray) -> np.ndarray:
        if not self.roots:
            raise ParameterError("forest is not fitted")
        X = np.asarray(features, dtype=np.float64)
        votes = np.zeros(X.shape[0], dtype=np.int64)
        for root in self.roots:
            votes += _tree_predict(root, X)
        return votes

    def predict(self, features: np.ndarray) -> np.ndarray:
        """Majority vote; an exact tie returns 0."""
        votes = self._votes(features)
        return (votes * 2 > self.n_trees).astype(np.int64)

    def vote_share(self, features: np.ndarray) -> np.ndarray:
        """Fraction of trees voting 1, useful for diagnostics."""
        return self._votes(features) / float(self.n_trees)
