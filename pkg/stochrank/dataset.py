"""
stochrank/dataset.py - ranking datasets: svmlight/letor parsing and writing,
the two-query synthetic dataset, label binarization and summary statistics

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

import collections
import functools
import gzip
import math
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np
import structlog

import stochrank
from stochrank.ranking import QueryInstance

logger = structlog.get_logger(logger_name=__name__)

GZIP_MAGIC = b"\x1f\x8b"


@dataclass(frozen=True, eq=False)
class RankingDataset:
    queries: Tuple[QueryInstance, ...]
    feature_count: int
    provenance: str = ""

    def __post_init__(self):
        object.__setattr__(self, "queries", tuple(self.queries))
        if not self.queries:
            raise stochrank.InputError("dataset %r has no queries" % self.provenance)
        for q in self.queries:
            if q.features is None or q.features.shape[1] != self.feature_count:
                raise stochrank.InputError(
                    "query %r does not have %s feature columns"
                    % (q.qid, self.feature_count)
                )

    def __len__(self):
        return len(self.queries)

    @functools.cached_property
    def features(self):
        return np.vstack([q.features for q in self.queries])

    @functools.cached_property
    def relevance(self):
        return np.concatenate([q.relevance for q in self.queries])

    @functools.cached_property
    def offsets(self):
        """Row offsets, query q owns rows offsets[q]:offsets[q + 1]."""
        offsets = np.zeros(len(self.queries) + 1, dtype=np.int64)
        np.cumsum([q.n for q in self.queries], out=offsets[1:])
        return offsets

    @property
    def document_count(self):
        return int(self.offsets[-1])

    def query_slices(self):
        return [slice(a, b) for a, b in zip(self.offsets[:-1], self.offsets[1:])]


@dataclass(frozen=True)
class DatasetStats:
    query_count: int
    document_count: int
    feature_count: int
    label_histogram: Dict[float, int]


def parse_svmlight(stream, provenance="<stream>", feature_count=None):
    """
    Parses `label qid:<id> <index>:<value> ...` lines, bytes or str, with
    optional `#` comments. Feature indices are 1-based and absent features
    are 0. Documents keep their file order within a query; a qid seen again
    later is merged into its first group.
    """
    groups = collections.OrderedDict()
    max_index = 0
    for line_number, raw in enumerate(stream, 1):
        if isinstance(raw, bytes):
            try:
                raw = raw.decode("utf-8")
            except UnicodeDecodeError as e:
                raise stochrank.DatasetParseError(line_number, str(e))
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            label = float(tokens[0])
        except ValueError:
            raise stochrank.DatasetParseError(line_number, "bad label %r" % tokens[0])
        if not math.isfinite(label):
            raise stochrank.DatasetParseError(line_number, "non-finite label")
        if len(tokens) < 2 or not tokens[1].startswith("qid:") or tokens[1] == "qid:":
            raise stochrank.DatasetParseError(line_number, "missing qid")
        qid = tokens[1][4:]

        row = {}
        for token in tokens[2:]:
            index, sep, value = token.partition(":")
            try:
                if not sep:
                    raise ValueError(token)
                index = int(index)
                value = float(value)
            except ValueError:
                raise stochrank.DatasetParseError(
                    line_number, "malformed feature %r" % token
                )
            if index < 1:
                raise stochrank.DatasetParseError(
                    line_number, "feature index %s is not 1-based" % index
                )
            if not math.isfinite(value):
                raise stochrank.DatasetParseError(
                    line_number, "non-finite value for feature %s" % index
                )
            if feature_count is not None and index > feature_count:
                raise stochrank.DatasetParseError(
                    line_number,
                    "feature index %s exceeds feature count %s" % (index, feature_count),
                )
            row[index] = value
            max_index = max(max_index, index)
        groups.setdefault(qid, []).append((label, row))

    if not groups:
        raise stochrank.InputError("%s has no documents" % provenance)
    if feature_count is None:
        feature_count = max_index

    queries = []
    for qid, docs in groups.items():
        features = np.zeros((len(docs), feature_count))
        for d, (_, row) in enumerate(docs):
            for index, value in row.items():
                features[d, index - 1] = value
        queries.append(
            QueryInstance(
                relevance=np.array([label for label, _ in docs]),
                features=features,
                qid=qid,
            )
        )
    dataset = RankingDataset(
        queries=queries, feature_count=feature_count, provenance=provenance
    )
    logger.info(
        "parsed dataset",
        provenance=provenance,
        queries=len(dataset),
        documents=dataset.document_count,
        features=feature_count,
    )
    return dataset


def load_svmlight(path, feature_count=None):
    """Reads a plain or gzip-compressed svmlight file."""
    with open(path, "rb") as f:
        magic = f.read(len(GZIP_MAGIC))
    opener = gzip.open if magic == GZIP_MAGIC else open
    with opener(path, "rb") as f:
        return parse_svmlight(f, provenance=str(path), feature_count=feature_count)


def write_svmlight(dataset, stream):
    """Writes every feature explicitly so the feature count survives."""
    for q in dataset.queries:
        for label, row in zip(q.relevance, q.features):
            features = " ".join(
                "%s:%r" % (i + 1, float(v)) for i, v in enumerate(row)
            )
            stream.write(("%r qid:%s %s" % (float(label), q.qid, features)).rstrip())
            stream.write("\n")


def synthetic_dataset():
    """
    Two queries over three one-hot documents x1, x2, x3. The first query
    ranks x1, x2, x3 with labels 3, 2, 1; the second holds x3 then x1 with
    labels 3, 2. The best mean NDCG@3 is about 0.917, and ranking
    x1 > x3 > x2 is a local optimum at about 0.903.
    """
    x1, x2, x3 = np.eye(3)
    return RankingDataset(
        queries=(
            QueryInstance(
                relevance=np.array([3.0, 2.0, 1.0]),
                features=np.vstack([x1, x2, x3]),
                qid="1",
            ),
            QueryInstance(
                relevance=np.array([3.0, 2.0]), features=np.vstack([x3, x1]), qid="2"
            ),
        ),
        feature_count=3,
        provenance="synthetic",
    )


def binarize_labels(dataset):
    return RankingDataset(
        queries=tuple(
            QueryInstance(
                relevance=(q.relevance > 0).astype(np.float64),
                features=q.features,
                qid=q.qid,
            )
            for q in dataset.queries
        ),
        feature_count=dataset.feature_count,
        provenance=dataset.provenance,
    )


def dataset_stats(dataset):
    labels, counts = np.unique(dataset.relevance, return_counts=True)
    return DatasetStats(
        query_count=len(dataset),
        document_count=dataset.document_count,
        feature_count=dataset.feature_count,
        label_histogram={float(v): int(c) for v, c in zip(labels, counts)},
    )


def split_scores(dataset, scores):
    """Per-query views of a flat score vector."""
    return [scores[s] for s in dataset.query_slices()]


def random_dataset(rng, queries, max_docs, feature_count, max_label=4):
    """Random graded dataset, handy for tests and benchmarks."""
    out = []
    for q in range(queries):
        n = int(rng.integers(1, max_docs + 1))
        out.append(
            QueryInstance(
                relevance=rng.integers(0, max_label + 1, size=n).astype(np.float64),
                features=np.round(rng.normal(size=(n, feature_count)), 6),
                qid=str(q + 1),
            )
        )
    return RankingDataset(queries=out, feature_count=feature_count, provenance="random")
