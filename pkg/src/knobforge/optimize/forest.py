"""Random forest surrogate built on the compiled (or fallback) tree kernels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .._backend import forest_kernels


@dataclass(frozen=True)
class RegressionTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    count: np.ndarray

    def predict(self, X) -> np.ndarray:
        return forest_kernels.predict_tree(self.feature, self.threshold, self.left, self.right, self.value, X)

    def leaf_counts(self) -> np.ndarray:
        return self.count[self.feature < 0]


@dataclass(frozen=True)
class ForestModel:
    trees: tuple[RegressionTree, ...]
    trees_count: int
    min_leaf: int
    feature_subsample: float

    def predict_all(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.vstack([t.predict(X) for t in self.trees])

    def predict(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Across-tree mean and variance."""
        per_tree = self.predict_all(X)
        return per_tree.mean(0), per_tree.var(0)


def forest_fit(
    X,
    y,
    trees_count: int = 10,
    min_leaf: int = 3,
    feature_subsample: float = 5 / 6,
    seed: int | np.random.Generator = 0,
    bootstrap: bool = True,
) -> ForestModel:
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=float)))
    y = np.ascontiguousarray(np.asarray(y, dtype=float).ravel())
    if X.shape[0] != y.shape[0] or X.shape[0] < 1:
        raise ValueError("need matching, non-empty X and y")
    if trees_count < 1 or min_leaf < 1 or not 0 < feature_subsample <= 1:
        raise ValueError("invalid forest parameters")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n, d = X.shape
    max_features = max(1, int(np.ceil(feature_subsample * d)))
    trees = []
    for _ in range(trees_count):
        rows = rng.integers(0, n, n) if bootstrap else np.arange(n)
        tree_seed = int(rng.integers(1, 2**63 - 1))
        arrays = forest_kernels.build_tree(X[rows], y[rows], min_leaf, max_features, tree_seed)
        trees.append(RegressionTree(*arrays))
    return ForestModel(tuple(trees), trees_count, min_leaf, feature_subsample)
