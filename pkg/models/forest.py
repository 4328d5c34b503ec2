"""Random forest over the CART trees in tree.py."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import List

import numpy as np

from exceptions import InputError
from .base import Classifier, ModelKind, StopReason
from .tree import TreeArrays, build_tree

logger = logging.getLogger(__name__)


def resolve_max_features(setting, n_features: int) -> int:
    if setting == "sqrt":
        return max(1, int(math.isqrt(n_features)))
    if setting == "all":
        return n_features
    if isinstance(setting, int) and setting >= 1:
        return min(setting, n_features)
    raise InputError(f"max_features must be 'sqrt', 'all' or a positive integer, got {setting!r}")


class RandomForestClassifier(Classifier):
    """
    Bagged trees with per-split feature subsampling.

    Tree i draws its bootstrap sample and feature subsets from the i-th child of
    SeedSequence(seed), so the forest is identical for any n_jobs.
    """

    kind = ModelKind.RANDOM_FOREST

    def fit(self, X, y):
        y = np.asarray(y, dtype=np.int64)
        n_rows, n_features = X.shape
        max_features = resolve_max_features(self.cfg.max_features, n_features)
        seeds = np.random.SeedSequence(self.cfg.seed).spawn(self.cfg.n_trees)

        def grow(seed_seq) -> TreeArrays:
            rng = np.random.default_rng(seed_seq)
            rows = rng.integers(0, n_rows, size=n_rows) if self.cfg.bootstrap else np.arange(n_rows)
            return build_tree(X[rows], y[rows], self.class_count, rng=rng,
                              max_features=max_features, max_depth=self.cfg.max_depth)

        if self.cfg.n_jobs > 1:
            with ThreadPoolExecutor(max_workers=self.cfg.n_jobs) as executor:
                self.trees: List[TreeArrays] = list(executor.map(grow, seeds))
        else:
            self.trees = [grow(s) for s in seeds]
        logger.debug("forest grown: %d trees, %d features per split", len(self.trees), max_features)
        return 1, StopReason.NONITERATIVE, []

    def predict(self, X):
        votes = np.zeros((X.shape[0], self.class_count), dtype=np.int64)
        rows = np.arange(X.shape[0])
        for tree in self.trees:
            np.add.at(votes, (rows, tree.predict(X)), 1)
        return np.argmax(votes, axis=1).astype(np.int64)

    def get_params(self):
        return {"trees": [tree.to_params() for tree in self.trees]}

    def set_params(self, params):
        self.trees = [TreeArrays.from_params(p) for p in params["trees"]]
