"""
stochrank/ranking.py - discrete ranking metrics with worst-permutation ties,
and the cumulative statistics used to re-evaluate a ranking in constant time
after one document is rescored

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

import dataclasses
import enum
import re
from dataclasses import dataclass
from typing import Optional

import numpy as np
import structlog

import stochrank

logger = structlog.get_logger(logger_name=__name__)

# exponential gain is (2**r - 1) / 2**4, so the top grade of the five-grade
# scale maps to 15/16
GAIN_SCALE = 16.0
MAX_GRADE = 4.0


class MetricKind(enum.Enum):
    DCG = "dcg"
    NDCG = "ndcg"
    ERR = "err"
    MRR = "mrr"
    DCG_RR = "dcg_rr"


class TiePolicy(enum.Enum):
    WORST = "worst"
    FIXED = "fixed"


class Gain(enum.Enum):
    AUTO = "auto"
    LINEAR = "linear"
    EXPONENTIAL = "exponential"


_METRIC_RE = re.compile(
    r"^(?P<kind>ndcg|dcg_rr|dcg|err|mrr)(@(?P<k>\d+))?(:(?P<ties>worst|fixed))?$"
)


@dataclass(frozen=True)
class MetricSpec:
    """
    Identity of a ranking metric: kind, truncation (None means no
    truncation), tie policy and gain mapping.

    MRR is ERR over binary labels without truncation, and DCG-RR ignores
    truncation, so `k` is dropped for both.
    """

    kind: MetricKind
    k: Optional[int] = None
    tie_policy: TiePolicy = TiePolicy.WORST
    gain: Gain = Gain.AUTO

    def __post_init__(self):
        if self.k is not None and self.k < 1:
            raise stochrank.InputError("truncation must be positive, got %r" % self.k)
        if self.kind in (MetricKind.MRR, MetricKind.DCG_RR) and self.k is not None:
            object.__setattr__(self, "k", None)
        if self.kind is MetricKind.MRR and self.gain is Gain.EXPONENTIAL:
            raise stochrank.InputError("mrr is defined with the linear gain only")

    @classmethod
    def parse(cls, text):
        """Parses names like `ndcg@5`, `err@3`, `mrr`, `dcg_rr`, `ndcg@10:fixed`."""
        m = _METRIC_RE.match(text.strip().lower())
        if not m:
            raise stochrank.InputError("unrecognized metric %r" % text)
        kind = MetricKind(m.group("kind"))
        k = int(m.group("k")) if m.group("k") else None
        if k is not None and kind in (MetricKind.MRR, MetricKind.DCG_RR):
            raise stochrank.InputError("metric %r takes no truncation" % text)
        ties = TiePolicy(m.group("ties")) if m.group("ties") else TiePolicy.WORST
        return cls(kind=kind, k=k, tie_policy=ties)

    def __str__(self):
        name = self.kind.value
        if self.k is not None:
            name += "@%s" % self.k
        if self.tie_policy is not TiePolicy.WORST:
            name += ":%s" % self.tie_policy.value
        return name

    def cutoff(self, n):
        return n if self.k is None else min(self.k, n)

    def for_labels(self, labels):
        """
        Pins an automatic ERR gain for a whole label set, so a query holding
        only grades 0 and 1 of a graded dataset is not read as linear.
        """
        if self.kind is not MetricKind.ERR or self.gain is not Gain.AUTO:
            return self
        gain = Gain.LINEAR if np.max(labels) <= 1 else Gain.EXPONENTIAL
        return dataclasses.replace(self, gain=gain)

    @property
    def translation_invariant(self):
        return self.kind is not MetricKind.DCG_RR


@dataclass(frozen=True, eq=False)
class QueryInstance:
    relevance: np.ndarray
    features: Optional[np.ndarray] = None
    qid: str = ""

    def __post_init__(self):
        relevance = np.asarray(self.relevance, dtype=np.float64).reshape(-1)
        if relevance.size == 0:
            raise stochrank.InputError("query %r has no documents" % self.qid)
        if not np.all(np.isfinite(relevance)):
            raise stochrank.InputError("query %r has non-finite labels" % self.qid)
        object.__setattr__(self, "relevance", relevance)
        if self.features is not None:
            features = np.asarray(self.features, dtype=np.float64)
            if features.ndim != 2 or features.shape[0] != relevance.size:
                raise stochrank.InputError(
                    "query %r: %s feature rows for %s labels"
                    % (self.qid, features.shape[0], relevance.size)
                )
            object.__setattr__(self, "features", features)

    @property
    def n(self):
        return self.relevance.size


@dataclass(frozen=True, eq=False)
class GainDiscount:
    """
    Cascade form of a metric: quality = baseline + sum over positions m of
    weights[m] * gain(doc at m) * product of discounts of the documents
    ranked above m. `gains` and `discounts` are indexed by document,
    `weights` by position.
    """

    weights: np.ndarray
    gains: np.ndarray
    discounts: np.ndarray
    baseline: float
    cutoff: int


def _check_scores(z, n=None):
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    if z.size == 0:
        raise stochrank.InputError("empty score vector")
    if n is not None and z.size != n:
        raise stochrank.InputError("%s scores for %s labels" % (z.size, n))
    if not np.all(np.isfinite(z)):
        raise stochrank.InputError("non-finite scores")
    return z


def _check_labels(r):
    r = np.asarray(r, dtype=np.float64).reshape(-1)
    if r.size == 0:
        raise stochrank.InputError("empty relevance vector")
    if not np.all(np.isfinite(r)):
        raise stochrank.InputError("non-finite relevance labels")
    return r


def check_pair(z, r):
    r = _check_labels(r)
    return _check_scores(z, r.size), r


def _resolve_gain(spec, r):
    if spec.kind is MetricKind.MRR:
        if not np.all((r == 0) | (r == 1)):
            raise stochrank.InputError(
                "mrr requires binary labels, binarize the dataset first"
            )
        return Gain.LINEAR
    if np.any(r < 0):
        raise stochrank.InputError("relevance labels must be non-negative")
    gain = spec.gain
    if gain is Gain.AUTO:
        if spec.kind is MetricKind.ERR and r.max() <= 1:
            gain = Gain.LINEAR
        else:
            gain = Gain.EXPONENTIAL
    if spec.kind is MetricKind.ERR:
        if gain is Gain.LINEAR and r.max() > 1:
            raise stochrank.InputError("linear err gain needs labels in [0, 1]")
        if gain is Gain.EXPONENTIAL and r.max() > MAX_GRADE:
            raise stochrank.InputError(
                "err grades above %s give negative stopping probabilities" % MAX_GRADE
            )
    return gain


def gain_values(r, gain):
    if gain is Gain.LINEAR:
        return np.array(r, dtype=np.float64)
    return (np.exp2(r) - 1.0) / GAIN_SCALE


def worst_argsort(z, r):
    """
    Returns the permutation sorting `z` descending. Among exactly equal
    scores the less relevant document comes first, then the lower original
    index.
    """
    z, r = check_pair(z, r)
    return np.lexsort((np.arange(z.size), r, -z))


def _ranking(z, r, tie_policy):
    if tie_policy is TiePolicy.WORST:
        return worst_argsort(z, r)
    return np.lexsort((np.arange(z.size), -z))


def gmc_params(spec, r):
    r = _check_labels(r)
    if spec.kind is MetricKind.DCG_RR:
        raise stochrank.InputError("dcg_rr has no cascade gain/discount form")
    n = r.size
    gains = gain_values(r, _resolve_gain(spec, r))
    cutoff = spec.cutoff(n)
    positions = np.arange(n)
    baseline = 0.0
    if spec.kind in (MetricKind.DCG, MetricKind.NDCG):
        weights = np.where(positions < cutoff, 1.0 / np.log2(positions + 2.0), 0.0)
        discounts = np.ones(n)
        if spec.kind is MetricKind.NDCG:
            ideal = float(np.sum(np.sort(gains)[::-1][:cutoff] * weights[:cutoff]))
            if ideal == 0.0:
                # every ranking is ideal, the metric is the constant 1
                weights = np.zeros(n)
                baseline = 1.0
            else:
                weights = weights / ideal
    else:
        weights = np.where(positions < cutoff, 1.0 / (positions + 1.0), 0.0)
        discounts = 1.0 - gains
    return GainDiscount(
        weights=weights,
        gains=gains,
        discounts=discounts,
        baseline=baseline,
        cutoff=cutoff,
    )


def dcg_rr_eval(z, r):
    z, r = check_pair(z, r)
    included = z > 0
    ranks = np.cumsum(included)
    return float(np.sum(r[included] / ranks[included]))


def eval_metric(z, r, spec):
    """Quality of ranking the documents by `z` (higher is better)."""
    z, r = check_pair(z, r)
    if spec.kind is MetricKind.DCG_RR:
        return dcg_rr_eval(z, r)
    gd = gmc_params(spec, r)
    order = _ranking(z, r, spec.tie_policy)
    discounts = gd.discounts[order]
    p = np.ones(z.size)
    p[1:] = np.cumprod(discounts[:-1])
    return gd.baseline + float(np.sum(gd.weights * gd.gains[order] * p))


def eval_metric_batch(scores, r, spec):
    """
    Evaluates every row of a (samples, n) score matrix, same semantics as
    eval_metric.
    """
    r = _check_labels(r)
    scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    if scores.shape[-1] != r.size:
        raise stochrank.InputError("%s scores for %s labels" % (scores.shape[-1], r.size))
    if spec.kind is MetricKind.DCG_RR:
        included = scores > 0
        ranks = np.maximum(np.cumsum(included, axis=-1), 1)
        return np.sum(np.where(included, r / ranks, 0.0), axis=-1)
    gd = gmc_params(spec, r)
    index = np.broadcast_to(np.arange(r.size), scores.shape)
    if spec.tie_policy is TiePolicy.WORST:
        order = np.lexsort((index, np.broadcast_to(r, scores.shape), -scores), axis=-1)
    else:
        order = np.lexsort((index, -scores), axis=-1)
    p = np.ones(scores.shape)
    p[:, 1:] = np.cumprod(gd.discounts[order][:, :-1], axis=-1)
    return gd.baseline + (gd.gains[order] * p) @ gd.weights


def _prefix(values):
    out = np.zeros(values.size + 1, dtype=values.dtype)
    np.cumsum(values, out=out[1:])
    return out


def _separate_ties(scores):
    tied = np.flatnonzero(scores[1:] >= scores[:-1])
    if tied.size == 0:
        return scores
    logger.warning(
        "exact score ties after noise, separating by one ulp", count=int(tied.size)
    )
    scores = scores.copy()
    for m in range(tied[0] + 1, scores.size):
        if scores[m] >= scores[m - 1]:
            scores[m] = np.nextafter(scores[m - 1], -np.inf)
    return scores


@dataclass(frozen=True, eq=False)
class RankedState:
    """
    A ranking of noisy scores plus prefix statistics. Every prefix array has
    length n + 1 and entry m sums (or multiplies) over the first m ranked
    positions, so `s_mid[n]` is the metric value without the baseline.

    p[m]            product of the discounts above position m
    s_mid[m]        sum of w[u] g[u] p[u] over u < m
    s_up[m]         sum of w[u + 1] g[u] p[u] over u < m (w past the end is 0)
    s_low[m]        sum of w[u - 1] g[u] p[u] over u < m (w[-1] is 0)
    zero_count[m]   number of zero discounts above position m
    nonzero_prod[m] product of the non-zero discounts above position m
    s_low_single[m] s_low restricted to positions with exactly one zero
                    discount above them, using nonzero_prod for p
    """

    order: np.ndarray
    positions: np.ndarray
    scores: np.ndarray
    weights: np.ndarray
    gains: np.ndarray
    discounts: np.ndarray
    baseline: float
    cutoff: int
    p: np.ndarray
    s_up: np.ndarray
    s_mid: np.ndarray
    s_low: np.ndarray
    zero_count: np.ndarray
    nonzero_prod: np.ndarray
    s_low_single: np.ndarray

    @property
    def n(self):
        return self.order.size

    @property
    def value(self):
        return self.baseline + float(self.s_mid[-1])

    def move_value(self, i, t):
        """
        Metric value after moving the document at position `i` to position
        `t`, everything else keeping its relative order. Vectorized over
        `i` and `t`.
        """
        i = np.asarray(i)
        t = np.asarray(t)
        q = self.s_mid[-1]
        w_t = self.weights[t]
        g_x = self.gains[i]
        d_x = self.discounts[i]

        up = (
            q
            - (self.s_mid[i + 1] - self.s_mid[t])
            + w_t * g_x * self.p[t]
            + d_x * (self.s_up[i] - self.s_up[t])
        )

        zero = d_x == 0.0
        safe = np.where(zero, 1.0, d_x)
        removed = q - (self.s_mid[t + 1] - self.s_mid[i])
        down = (
            removed
            + (self.s_low[t + 1] - self.s_low[i + 1]) / safe
            + w_t * g_x * self.p[t + 1] / safe
        )
        # a zero discount cannot be divided out, rebuild from the counts
        own_prod = np.where(self.zero_count[t + 1] == 1, self.nonzero_prod[t + 1], 0.0)
        down_zero = np.where(
            self.zero_count[i] > 0,
            q,
            removed
            + (self.s_low_single[t + 1] - self.s_low_single[i + 1])
            + w_t * g_x * own_prod,
        )
        down = np.where(zero, down_zero, down)

        value = self.baseline + np.where(t < i, up, np.where(t > i, down, q))
        return float(value) if value.ndim == 0 else value


def build_ranked_state(z_noisy, r, spec):
    z, r = check_pair(z_noisy, r)
    if spec.kind is MetricKind.DCG_RR:
        raise stochrank.InputError("dcg_rr rankings have no cascade state")
    gd = gmc_params(spec, r)
    order = worst_argsort(z, r)
    positions = np.empty_like(order)
    positions[order] = np.arange(order.size)
    scores = _separate_ties(z[order])

    w = gd.weights
    g = gd.gains[order]
    d = gd.discounts[order]
    p = np.empty(order.size + 1)
    p[0] = 1.0
    np.cumprod(d, out=p[1:])
    w_next = np.append(w[1:], 0.0)
    w_prev = np.concatenate(([0.0], w[:-1]))
    term = g * p[:-1]

    zero = d == 0.0
    zero_count = _prefix(zero.astype(np.int64))
    nonzero_prod = np.empty(order.size + 1)
    nonzero_prod[0] = 1.0
    np.cumprod(np.where(zero, 1.0, d), out=nonzero_prod[1:])
    single = zero_count[:-1] == 1

    return RankedState(
        order=order,
        positions=positions,
        scores=scores,
        weights=w,
        gains=g,
        discounts=d,
        baseline=gd.baseline,
        cutoff=gd.cutoff,
        p=p,
        s_up=_prefix(w_next * term),
        s_mid=_prefix(w * term),
        s_low=_prefix(w_prev * term),
        zero_count=zero_count,
        nonzero_prod=nonzero_prod,
        s_low_single=_prefix(np.where(single, w_prev * g * nonzero_prod[:-1], 0.0)),
    )


def delta_eval(state, i, z_new):
    """
    Metric value after rescoring the document at position `i` (0-based) to
    `z_new`. Raises TieError if `z_new` equals another document's score.
    """
    if not 0 <= i < state.n:
        raise stochrank.InputError("position %s out of range for n=%s" % (i, state.n))
    descending = state.scores
    # scores are distinct and descending, so -scores is strictly ascending
    above = int(np.searchsorted(-descending, -z_new, "left"))
    equal = int(np.searchsorted(-descending, -z_new, "right")) - above
    if equal > int(descending[i] == z_new):
        raise stochrank.TieError(z_new, above if above != i else above + 1)
    t = above - int(descending[i] > z_new)
    return state.move_value(i, t)


def jump(state, j, s):
    """
    Jump of the metric as document `j` crosses the score at position `s`
    from below: value just above it minus value just below it. Zero when
    `s` is the document's own position. Vectorized over `j` and `s`.
    """
    i = state.positions[np.asarray(j)]
    s = np.asarray(s)
    t_above = s - (i < s)
    t_below = np.minimum(t_above + 1, state.n - 1)
    value = np.where(
        s == i, 0.0, state.move_value(i, t_above) - state.move_value(i, t_below)
    )
    return float(value) if value.ndim == 0 else value


def dcg_rr_jumps(y, r):
    """
    Jump of DCG-RR for every document as its score crosses 0 from below,
    the other documents keeping their inclusion. O(n) via suffix sums over
    the inclusion ranks.
    """
    y, r = check_pair(y, r)
    included = y > 0
    # 1 + included documents strictly before i
    rank = np.cumsum(included) - included + 1.0
    rank_prev = np.maximum(rank - 1.0, 1.0)
    # i after an included j loses one rank when j is dropped
    with_j = np.where(included & (rank >= 2), r * (1.0 / rank - 1.0 / rank_prev), 0.0)
    # i after an excluded j gains one rank when j is added
    without_j = np.where(included, r * (1.0 / (rank + 1.0) - 1.0 / rank), 0.0)
    after_with = np.cumsum(with_j[::-1])[::-1] - with_j
    after_without = np.cumsum(without_j[::-1])[::-1] - without_j
    return r / rank + np.where(included, after_with, after_without)
