"""
stochrank/booster.py - the boosting loop: per-query gradient estimation,
langevin noise and model shrinkage, one oblivious tree per iteration

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

import concurrent.futures
import enum
import math
import os
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import structlog

import stochrank
from stochrank import gradients, metrics, ranking, trees
from stochrank.smoothing import (
    SmoothingFamily,
    SmoothingSpec,
    langevin_rng,
    query_rng,
)

logger = structlog.get_logger(logger_name=__name__)

DEFAULT_MU = 1.0


class Mode(enum.Enum):
    SGB = "sgb"
    SGLB = "sglb"


def _default_metric():
    return ranking.MetricSpec.parse("ndcg@5")


@dataclass(frozen=True)
class TrainConfig:
    """
    Training hyperparameters. SGB mode ignores `model_shrink_rate` and
    `diffusion_temperature`: no shrinkage, no noise. An infinite diffusion
    temperature means no noise in SGLB mode too. `strict=False` lets SGLB
    run with a zero shrink rate. Unset `mu` takes the smoothing family's
    value: 1 for the relevance-shifted family, 0 for the centered one.
    """

    iterations: int = 1000
    learning_rate: float = 0.1
    depth: int = 6
    sigma: float = 1.0
    model_shrink_rate: float = 1e-3
    diffusion_temperature: float = 1e9
    mu: Optional[float] = None
    nu: float = 1e-2
    estimator: gradients.EstimatorKind = gradients.EstimatorKind.CCS_SFA
    smoothing: SmoothingFamily = SmoothingFamily.RELEVANCE_SHIFTED_GAUSSIAN
    mode: Mode = Mode.SGLB
    seed: int = 0
    metric: ranking.MetricSpec = field(default_factory=_default_metric)
    samples_per_estimate: int = 1
    max_borders: int = trees.DEFAULT_MAX_BORDERS
    use_best_model: bool = False
    threads: Optional[int] = None
    strict: bool = True

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise stochrank.InputError(
                "learning_rate must be positive, got %r" % self.learning_rate
            )
        if self.iterations < 0:
            raise stochrank.InputError(
                "iterations must be non-negative, got %r" % self.iterations
            )
        if self.depth < 0:
            raise stochrank.InputError("depth must be non-negative, got %r" % self.depth)
        if self.mode is Mode.SGLB:
            if not self.diffusion_temperature > 0:
                raise stochrank.InputError(
                    "sglb needs a positive diffusion_temperature, got %r"
                    % self.diffusion_temperature
                )
            if self.model_shrink_rate < 0 or (
                self.strict and not self.model_shrink_rate > 0
            ):
                raise stochrank.InputError(
                    "sglb needs a positive model_shrink_rate, got %r"
                    % self.model_shrink_rate
                )
        # raises on inconsistent smoothing and estimator settings
        self.smoothing_spec()
        self.estimator_config()

    def smoothing_spec(self):
        if self.smoothing is SmoothingFamily.CENTERED_GAUSSIAN:
            if self.mu:
                raise stochrank.InputError(
                    "centered smoothing takes no mu, got %r" % self.mu
                )
            return SmoothingSpec.centered(self.sigma)
        return SmoothingSpec.shifted(
            DEFAULT_MU if self.mu is None else self.mu, self.sigma
        )

    def estimator_config(self):
        return gradients.EstimatorConfig(
            kind=self.estimator,
            sigma=self.sigma,
            nu=self.nu,
            samples_per_estimate=self.samples_per_estimate,
        )

    @property
    def shrink(self):
        if self.mode is Mode.SGB:
            return 1.0
        return 1.0 - self.model_shrink_rate * self.learning_rate

    @property
    def langevin_sd(self):
        """Standard deviation of the noise added to every regression target."""
        if self.mode is Mode.SGB or math.isinf(self.diffusion_temperature):
            return 0.0
        return math.sqrt(2.0 / (self.diffusion_temperature * self.learning_rate))


@dataclass(frozen=True)
class IterationLog:
    iteration: int
    train_metric: float
    valid_metric: Optional[float]
    wall_ms: float


@dataclass(eq=False)
class TrainState:
    F: np.ndarray
    ensemble: trees.Ensemble
    seed: int
    iteration: int = 0
    logs: List[IterationLog] = field(default_factory=list)
    valid_F: Optional[np.ndarray] = None


@dataclass(eq=False)
class TrainResult:
    ensemble: trees.Ensemble
    logs: List[IterationLog]
    best_iteration: int


def thread_count(requested=None):
    """
    Worker threads for gradient estimation: `requested`, else the cpu count,
    capped by STOCHRANK_THREADS when it is set.
    """
    count = requested or os.cpu_count() or 1
    cap = os.environ.get("STOCHRANK_THREADS")
    if cap:
        try:
            cap = int(cap)
        except ValueError:
            raise stochrank.InputError(
                "STOCHRANK_THREADS must be an integer, got %r" % cap
            )
        count = min(count, max(1, cap))
    return max(1, count)


def query_metrics(dataset, scores, spec):
    spec = spec.for_labels(dataset.relevance)
    return np.array(
        [
            ranking.eval_metric(scores[s], q.relevance, spec)
            for s, q in zip(dataset.query_slices(), dataset.queries)
        ]
    )


def evaluate(ensemble, dataset, metric_specs):
    """Mean over queries of every metric, keyed by metric name."""
    scores = ensemble.predict(dataset.features)
    return {
        str(spec): float(np.mean(query_metrics(dataset, scores, spec)))
        for spec in metric_specs
    }


class Booster:
    logger = structlog.get_logger(logger_name=__module__ + "." + __qualname__)

    def __init__(self, dataset, config, eval_dataset=None, binarization=None):
        self.dataset = dataset
        self.config = config
        self.eval_dataset = eval_dataset
        if eval_dataset is not None and eval_dataset.feature_count != dataset.feature_count:
            raise stochrank.InputError(
                "validation set has %s features, train set has %s"
                % (eval_dataset.feature_count, dataset.feature_count)
            )
        self.binarization = binarization or trees.compute_borders(
            dataset.features, config.max_borders
        )
        self.buckets = self.binarization.transform(dataset.features)
        self.slices = dataset.query_slices()
        self.metric = config.metric.for_labels(dataset.relevance)
        self.smoothing_spec = config.smoothing_spec()
        self.estimator_config = config.estimator_config()
        self.executor = None

        constant = sum(
            gradients.constant_loss(q.relevance, self.metric) for q in dataset.queries
        )
        if constant:
            self.logger.debug("queries with constant loss get zero gradients", count=constant)

    def initial_state(self):
        valid_F = None
        if self.eval_dataset is not None:
            valid_F = np.zeros(self.eval_dataset.document_count)
        return TrainState(
            F=np.zeros(self.dataset.document_count),
            ensemble=trees.Ensemble(binarization=self.binarization),
            seed=self.config.seed,
            valid_F=valid_F,
        )

    def _query_gradient(self, F, iteration, q):
        z = F[self.slices[q]]
        if self.metric.translation_invariant:
            z = gradients.center_scores(z)
        estimate = gradients.estimate_gradient(
            z,
            self.dataset.queries[q].relevance,
            self.metric,
            self.smoothing_spec,
            self.estimator_config,
            query_rng(self.config.seed, iteration, q),
        )
        return estimate.g

    @metrics.stochrank_gradient_duration_seconds.time()
    def targets(self, state):
        """Regression targets of the next tree: descent direction plus noise."""
        indices = range(len(self.dataset))

        def work(q):
            return self._query_gradient(state.F, state.iteration, q)

        if self.executor is None:
            grads = list(map(work, indices))
        else:
            grads = list(self.executor.map(work, indices))
        targets = -np.concatenate(grads)

        bad = int(np.count_nonzero(~np.isfinite(targets)))
        if bad:
            self.logger.error(
                "non-finite regression targets", iteration=state.iteration, count=bad
            )
            raise stochrank.NonFiniteTargetsError(state.iteration, bad)

        sd = self.config.langevin_sd
        if sd > 0:
            rng = langevin_rng(self.config.seed, state.iteration)
            targets = targets + sd * rng.standard_normal(targets.size)
        return targets

    @metrics.stochrank_iteration_duration_seconds.time()
    def boost_iteration(self, state):
        start = time.perf_counter()
        targets = self.targets(state)
        tree = trees.fit_oblivious_tree(
            self.binarization, self.buckets, targets, self.config.depth
        )
        shrink = self.config.shrink
        step = self.config.learning_rate
        state.ensemble.append(tree, step, shrink)
        state.F = shrink * state.F + step * tree.predict(self.dataset.features)
        if state.valid_F is not None:
            state.valid_F = shrink * state.valid_F + step * tree.predict(
                self.eval_dataset.features
            )
        state.iteration += 1
        state.logs.append(self._log(state, (time.perf_counter() - start) * 1000.0))
        metrics.stochrank_iterations.inc()
        return state

    def _log(self, state, wall_ms):
        spec = self.metric
        train_metric = float(np.mean(query_metrics(self.dataset, state.F, spec)))
        metrics.stochrank_train_metric.set(train_metric)
        valid_metric = None
        if state.valid_F is not None:
            valid_metric = float(
                np.mean(query_metrics(self.eval_dataset, state.valid_F, spec))
            )
            metrics.stochrank_valid_metric.set(valid_metric)
        self.logger.debug(
            "iteration finished",
            iteration=state.iteration,
            train_metric=train_metric,
            valid_metric=valid_metric,
        )
        return IterationLog(
            iteration=state.iteration,
            train_metric=train_metric,
            valid_metric=valid_metric,
            wall_ms=wall_ms,
        )

    def best_iteration(self, logs):
        if self.eval_dataset is not None:
            values = [log.valid_metric for log in logs]
        else:
            values = [log.train_metric for log in logs]
        return logs[int(np.argmax(values))].iteration

    def train(self):
        state = self.initial_state()
        state.logs.append(self._log(state, 0.0))
        threads = thread_count(self.config.threads)
        self.logger.info(
            "training",
            provenance=self.dataset.provenance,
            queries=len(self.dataset),
            documents=self.dataset.document_count,
            iterations=self.config.iterations,
            metric=str(self.config.metric),
            mode=self.config.mode.value,
            estimator=self.config.estimator.value,
            threads=threads,
        )
        executor = None
        if threads > 1 and len(self.dataset) > 1:
            executor = concurrent.futures.ThreadPoolExecutor(
                max_workers=threads, thread_name_prefix="stochrank-gradient"
            )
        self.executor = executor
        try:
            for _ in range(self.config.iterations):
                self.boost_iteration(state)
        finally:
            self.executor = None
            if executor is not None:
                executor.shutdown()

        best = state.iteration
        ensemble = state.ensemble
        if self.config.use_best_model:
            best = self.best_iteration(state.logs)
            ensemble = ensemble.truncate(best)
        last = state.logs[-1]
        self.logger.info(
            "training finished",
            train_metric=last.train_metric,
            valid_metric=last.valid_metric,
            best_iteration=best,
        )
        return TrainResult(ensemble=ensemble, logs=state.logs, best_iteration=best)


def boost_iteration(state, dataset, config, eval_dataset=None):
    booster = Booster(
        dataset, config, eval_dataset, binarization=state.ensemble.binarization
    )
    return booster.boost_iteration(state)


def train(dataset, config, eval_dataset=None):
    return Booster(dataset, config, eval_dataset).train()
