"""
stochrank/trees.py - feature binarization, oblivious regression trees and the
tree ensemble, with a json model format

Copyright (C) 2025 the stochrank developers

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
"""

import json
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
import structlog

import stochrank

logger = structlog.get_logger(logger_name=__name__)

MODEL_FORMAT = "stochrank-model"
MODEL_VERSION = 1
DEFAULT_MAX_BORDERS = 254


def _as_matrix(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise stochrank.InputError("expected a 2-d feature matrix, got %s-d" % x.ndim)
    return x


@dataclass(frozen=True, eq=False)
class FeatureBinarization:
    """Strictly increasing borders per feature."""

    borders: Tuple[np.ndarray, ...]

    @property
    def feature_count(self):
        return len(self.borders)

    def transform(self, x):
        """
        Bucket index of every value: the number of borders strictly below
        it, so `bucket > b` is the split `x > borders[b]`.
        """
        x = _as_matrix(x)
        if x.shape[1] != self.feature_count:
            raise stochrank.InputError(
                "%s features, binarization has %s" % (x.shape[1], self.feature_count)
            )
        buckets = np.empty(x.shape, dtype=np.int32)
        for f, borders in enumerate(self.borders):
            buckets[:, f] = np.searchsorted(borders, x[:, f], side="left")
        return buckets


def _feature_borders(values, max_borders):
    values = np.sort(values)
    distinct = np.unique(values)
    if distinct.size <= 1:
        return np.empty(0)
    if distinct.size <= max_borders + 1:
        borders = (distinct[:-1] + distinct[1:]) / 2.0
    else:
        m = values.size
        ranks = (np.arange(1, max_borders + 1) * m) // (max_borders + 1)
        ranks = ranks[ranks > 0]
        borders = np.unique((values[ranks - 1] + values[ranks]) / 2.0)
    return borders[(borders > distinct[0]) & (borders < distinct[-1])]


def compute_borders(features, max_borders=DEFAULT_MAX_BORDERS):
    features = _as_matrix(features)
    if features.shape[0] < 1:
        raise stochrank.InputError("cannot binarize an empty feature matrix")
    if max_borders < 1:
        raise stochrank.InputError("max_borders must be positive, got %r" % max_borders)
    return FeatureBinarization(
        borders=tuple(
            _feature_borders(features[:, f], max_borders)
            for f in range(features.shape[1])
        )
    )


@dataclass(frozen=True)
class Split:
    feature: int
    border: float


@dataclass(frozen=True, eq=False)
class ObliviousTree:
    """
    Every level applies the same split to all nodes, so the leaf of a
    document is the integer whose bit l is the outcome of split l.
    """

    splits: Tuple[Split, ...]
    leaf_values: np.ndarray

    @property
    def depth(self):
        return len(self.splits)

    def leaf_index(self, x):
        x = _as_matrix(x)
        index = np.zeros(x.shape[0], dtype=np.int64)
        for level, split in enumerate(self.splits):
            index |= (x[:, split.feature] > split.border).astype(np.int64) << level
        return index

    def predict(self, x):
        return self.leaf_values[self.leaf_index(x)]


def fit_oblivious_tree(binarization, buckets, targets, depth):
    """
    Greedy level-by-level fit minimizing the squared error of leaf means.
    A split already in the tree is never reused, and the tree stops early
    once no split is left. Ties in gain go to the lowest feature, then the
    lowest border.
    """
    buckets = np.asarray(buckets)
    targets = np.asarray(targets, dtype=np.float64)
    if buckets.ndim != 2 or buckets.shape[0] != targets.size or targets.size < 1:
        raise stochrank.InputError(
            "%s bucket rows for %s targets" % (buckets.shape[0], targets.size)
        )
    if depth < 0:
        raise stochrank.InputError("depth must be non-negative, got %r" % depth)

    leaf = np.zeros(targets.size, dtype=np.int64)
    splits = []
    used = set()
    for level in range(depth):
        leaves = 1 << level
        best = None
        best_score = -np.inf
        for f, borders in enumerate(binarization.borders):
            width = borders.size + 1
            if width == 1:
                continue
            cells = leaf * width + buckets[:, f]
            sums = np.bincount(cells, weights=targets, minlength=leaves * width)
            counts = np.bincount(cells, minlength=leaves * width)
            sums = sums.reshape(leaves, width)
            counts = counts.reshape(leaves, width)
            # left side of split b holds buckets 0..b
            left_sum = np.cumsum(sums, axis=1)[:, :-1]
            left_count = np.cumsum(counts, axis=1)[:, :-1]
            right_sum = sums.sum(axis=1, keepdims=True) - left_sum
            right_count = counts.sum(axis=1, keepdims=True) - left_count
            score = np.sum(
                np.divide(
                    left_sum * left_sum,
                    left_count,
                    out=np.zeros_like(left_sum),
                    where=left_count > 0,
                )
                + np.divide(
                    right_sum * right_sum,
                    right_count,
                    out=np.zeros_like(right_sum),
                    where=right_count > 0,
                ),
                axis=0,
            )
            for used_f, used_b in used:
                if used_f == f:
                    score[used_b] = -np.inf
            b = int(np.argmax(score))
            if score[b] > best_score:
                best, best_score = (f, b), score[b]
        if best is None:
            logger.debug("no split left", level=level, depth=depth)
            break
        f, b = best
        used.add(best)
        splits.append(Split(feature=f, border=float(binarization.borders[f][b])))
        leaf |= (buckets[:, f] > b).astype(np.int64) << level

    leaves = 1 << len(splits)
    sums = np.bincount(leaf, weights=targets, minlength=leaves)
    counts = np.bincount(leaf, minlength=leaves)
    values = np.divide(sums, counts, out=np.zeros(leaves), where=counts > 0)
    return ObliviousTree(splits=tuple(splits), leaf_values=values)


@dataclass(eq=False)
class Ensemble:
    """
    Prediction replays F_t = shrinks[t] * F_{t-1} + steps[t] * tree_t(x)
    from F_0 = 0, the same floating point operations the booster performs,
    so re-prediction of the training rows is bit-exact.
    """

    binarization: FeatureBinarization
    trees: List[ObliviousTree] = field(default_factory=list)
    steps: List[float] = field(default_factory=list)
    shrinks: List[float] = field(default_factory=list)

    @property
    def feature_count(self):
        return self.binarization.feature_count

    def __len__(self):
        return len(self.trees)

    def append(self, tree, step, shrink=1.0):
        self.trees.append(tree)
        self.steps.append(float(step))
        self.shrinks.append(float(shrink))

    def truncate(self, count):
        return Ensemble(
            binarization=self.binarization,
            trees=self.trees[:count],
            steps=self.steps[:count],
            shrinks=self.shrinks[:count],
        )

    def scales(self):
        """Effective weight of every tree in the plain sum of tree outputs."""
        scales = np.array(self.steps)
        tail = 1.0
        for t in range(len(self.trees) - 1, -1, -1):
            scales[t] *= tail
            tail *= self.shrinks[t]
        return scales

    def predict(self, x):
        x = _as_matrix(x)
        if x.shape[1] != self.feature_count:
            raise stochrank.InputError(
                "%s features, model was trained on %s"
                % (x.shape[1], self.feature_count)
            )
        f = np.zeros(x.shape[0])
        for tree, step, shrink in zip(self.trees, self.steps, self.shrinks):
            f = shrink * f + step * tree.predict(x)
        return f


def predict(ensemble, features):
    return ensemble.predict(features)


def model_to_dict(ensemble):
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "borders": [[float(v) for v in b] for b in ensemble.binarization.borders],
        "trees": [
            {
                "splits": [[s.feature, s.border] for s in tree.splits],
                "leaf_values": [float(v) for v in tree.leaf_values],
                "step": step,
                "shrink": shrink,
            }
            for tree, step, shrink in zip(
                ensemble.trees, ensemble.steps, ensemble.shrinks
            )
        ],
    }


def model_from_dict(doc):
    if doc.get("format") != MODEL_FORMAT:
        raise stochrank.ModelFormatError("not a stochrank model: %r" % doc.get("format"))
    if doc.get("version") != MODEL_VERSION:
        raise stochrank.ModelFormatError(
            "unsupported model version %r" % doc.get("version")
        )
    ensemble = Ensemble(
        binarization=FeatureBinarization(
            borders=tuple(np.array(b, dtype=np.float64) for b in doc["borders"])
        )
    )
    for t in doc["trees"]:
        tree = ObliviousTree(
            splits=tuple(Split(feature=int(f), border=float(b)) for f, b in t["splits"]),
            leaf_values=np.array(t["leaf_values"], dtype=np.float64),
        )
        ensemble.append(tree, t["step"], t["shrink"])
    return ensemble


def save_model(ensemble, path):
    # json writes floats with their shortest round-trip repr
    with open(path, "w") as f:
        json.dump(model_to_dict(ensemble), f, indent=1)


def load_model(path):
    with open(path) as f:
        try:
            doc = json.load(f)
        except ValueError as e:
            raise stochrank.ModelFormatError("%s: %s" % (path, e))
    return model_from_dict(doc)
