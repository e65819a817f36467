"""
stochrank/diagnostics.py - gradient checks against finite differences of the
smoothed loss, and timing of the jump computation against a naive path

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

import math
import time
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import structlog

from stochrank import gradients, ranking, smoothing

logger = structlog.get_logger(logger_name=__name__)

PASS_SE = 4.0

# spawn keys of the diagnostic streams, disjoint from the training streams
CCS_STREAM = 2
REINFORCE_STREAM = 3
FD_STREAM = 4


def _stream(seed, key):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(key,)))


class _Moments:
    """Running mean and variance per column, fed in chunks."""

    def __init__(self, n):
        self.count = 0
        self.total = np.zeros(n)
        self.total_sq = np.zeros(n)

    def add(self, rows):
        self.count += rows.shape[0]
        self.total += rows.sum(axis=0)
        self.total_sq += (rows * rows).sum(axis=0)

    @property
    def mean(self):
        return self.total / self.count

    @property
    def var(self):
        if self.count < 2:
            return np.zeros_like(self.total)
        mean = self.mean
        return np.maximum(self.total_sq - self.count * mean * mean, 0.0) / (
            self.count - 1
        )

    @property
    def stderr(self):
        return np.sqrt(self.var / self.count)


@dataclass(frozen=True)
class CoordinateCheck:
    coordinate: int
    ccs_mean: float
    ccs_se: float
    reinforce_mean: float
    reinforce_se: float
    fd_mean: float
    fd_se: float
    passed: bool


@dataclass(frozen=True)
class GradcheckReport:
    coordinates: List[CoordinateCheck]
    reinforce_to_ccs_variance: Optional[float]
    sfa_to_ccs_variance: Optional[float]

    @property
    def passed(self):
        return all(c.passed for c in self.coordinates)


def _ratio(a, b):
    return float(a / b) if b > 0 else None


def finite_difference_gradient(z, r, metric_spec, smoothing_spec, samples, h, rng):
    """
    Central differences of the monte carlo smoothed loss with common random
    numbers. Returns per-coordinate mean and standard error.
    """
    n = z.size
    moments = _Moments(n)
    for start in range(0, samples, smoothing.MC_CHUNK_ROWS):
        rows = min(smoothing.MC_CHUNK_ROWS, samples - start)
        noisy = z + smoothing_spec.sigma * smoothing.draw_noise(
            smoothing_spec, r, rng, size=rows
        )
        diffs = np.empty((rows, n))
        for j in range(n):
            plus = noisy.copy()
            plus[:, j] += h
            minus = noisy.copy()
            minus[:, j] -= h
            diffs[:, j] = (
                ranking.eval_metric_batch(minus, r, metric_spec)
                - ranking.eval_metric_batch(plus, r, metric_spec)
            ) / (2.0 * h)
        moments.add(diffs)
    return moments.mean, moments.stderr


def gradcheck(
    z,
    r,
    metric_spec,
    smoothing_spec,
    samples=200_000,
    fd_samples=10_000_000,
    h=1e-2,
    nu=1e-2,
    seed=0,
):
    """
    Compares the mean of `samples` CCS draws and REINFORCE draws with a
    finite-difference reference of the smoothed loss. A coordinate passes
    when CCS is within 4 combined standard errors of the reference.
    """
    z, r = ranking.check_pair(z, r)
    n = z.size
    sigma = smoothing_spec.sigma

    rng = _stream(seed, CCS_STREAM)
    plain = _Moments(n)
    projected = _Moments(n)
    for _ in range(samples):
        eps = smoothing.draw_noise(smoothing_spec, r, rng)
        g = gradients.ccs_from_noise(z, r, metric_spec, smoothing_spec, eps)[None, :]
        plain.add(g)
        if np.any(z != 0) or nu > 0:
            projected.add(gradients.sfa_project(g[0], z, nu)[None, :])

    rng = _stream(seed, REINFORCE_STREAM)
    reinforce = _Moments(n)
    base = -ranking.eval_metric(z, r, metric_spec)
    for start in range(0, samples, smoothing.MC_CHUNK_ROWS):
        rows = min(smoothing.MC_CHUNK_ROWS, samples - start)
        eps = smoothing.draw_noise(smoothing_spec, r, rng, size=rows)
        noisy = -ranking.eval_metric_batch(z + sigma * eps, r, metric_spec)
        reinforce.add(
            (noisy - base)[:, None] * (eps - smoothing_spec.mean(r)) / sigma
        )

    fd_mean, fd_se = finite_difference_gradient(
        z, r, metric_spec, smoothing_spec, fd_samples, h, _stream(seed, FD_STREAM)
    )

    checks = []
    for j in range(n):
        tolerance = PASS_SE * math.hypot(plain.stderr[j], fd_se[j])
        checks.append(
            CoordinateCheck(
                coordinate=j,
                ccs_mean=float(plain.mean[j]),
                ccs_se=float(plain.stderr[j]),
                reinforce_mean=float(reinforce.mean[j]),
                reinforce_se=float(reinforce.stderr[j]),
                fd_mean=float(fd_mean[j]),
                fd_se=float(fd_se[j]),
                passed=bool(abs(plain.mean[j] - fd_mean[j]) <= tolerance),
            )
        )
    ccs_var = float(plain.var.sum())
    report = GradcheckReport(
        coordinates=checks,
        reinforce_to_ccs_variance=_ratio(float(reinforce.var.sum()), ccs_var),
        sfa_to_ccs_variance=(
            _ratio(float(projected.var.sum()), ccs_var) if projected.count else None
        ),
    )
    logger.info(
        "gradient check finished",
        n=n,
        metric=str(metric_spec),
        passed=report.passed,
        reinforce_to_ccs_variance=report.reinforce_to_ccs_variance,
        sfa_to_ccs_variance=report.sfa_to_ccs_variance,
    )
    return report


def _moved_value(gd, order, i, t):
    moved = np.insert(np.delete(order, i), t, order[i])
    p = np.ones(moved.size)
    p[1:] = np.cumprod(gd.discounts[moved][:-1])
    return gd.baseline + float(np.sum(gd.weights * gd.gains[moved] * p))


def naive_ccs_coordinate(z, r, metric_spec, smoothing_spec, eps, j):
    """
    One coordinate of the CCS estimate with every jump recomputed from a
    fully reordered ranking, O(n^2).
    """
    sigma = smoothing_spec.sigma
    y = z + sigma * eps
    gd = ranking.gmc_params(metric_spec, r)
    state = ranking.build_ranked_state(y, r, metric_spec)
    i = int(state.positions[j])
    total = 0.0
    for p in range(state.n):
        if p == i:
            continue
        t = p - int(i < p)
        jump = _moved_value(gd, state.order, i, t) - _moved_value(
            gd, state.order, i, t + 1
        )
        density = smoothing.conditional_density(
            smoothing_spec, r, j, (state.scores[p] - z[j]) / sigma
        )
        total += jump * float(density)
    return -total / sigma


def naive_ccs_gradient(z, r, metric_spec, smoothing_spec, eps):
    z, r = ranking.check_pair(z, r)
    if gradients.constant_loss(r, metric_spec):
        return np.zeros(z.size)
    return np.array(
        [
            naive_ccs_coordinate(z, r, metric_spec, smoothing_spec, eps, j)
            for j in range(z.size)
        ]
    )


@dataclass(frozen=True)
class BenchRow:
    n: int
    k: int
    ccs_seconds: float
    normalized_cost: float
    naive_seconds: Optional[float]
    speedup: Optional[float]


def bench_delta(
    ns, metric_spec, seed=0, repeats=3, naive_max_n=1 << 12, naive_sample=4
):
    """
    Times full CCS passes on random instances of every size in `ns`. The
    naive path is timed on `naive_sample` coordinates and extrapolated to
    all n.
    """
    smoothing_spec = smoothing.SmoothingSpec.shifted(1.0)
    rows = []
    for n in ns:
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(n,)))
        r = rng.integers(0, 5, size=n).astype(np.float64)
        if metric_spec.kind is ranking.MetricKind.MRR:
            r = (r > 2).astype(np.float64)
        z = rng.normal(size=n)
        eps = smoothing.draw_noise(smoothing_spec, r, rng)

        elapsed = []
        for _ in range(repeats):
            start = time.perf_counter()
            gradients.ccs_from_noise(z, r, metric_spec, smoothing_spec, eps)
            elapsed.append(time.perf_counter() - start)
        ccs_seconds = min(elapsed)
        k = metric_spec.cutoff(n)

        naive_seconds = None
        if n <= naive_max_n and metric_spec.kind is not ranking.MetricKind.DCG_RR:
            sample = rng.choice(n, size=min(naive_sample, n), replace=False)
            start = time.perf_counter()
            for j in sample:
                naive_ccs_coordinate(z, r, metric_spec, smoothing_spec, eps, int(j))
            naive_seconds = (time.perf_counter() - start) * n / sample.size

        row = BenchRow(
            n=n,
            k=k,
            ccs_seconds=ccs_seconds,
            normalized_cost=ccs_seconds / (n * (k + math.log2(n))),
            naive_seconds=naive_seconds,
            speedup=(
                naive_seconds / ccs_seconds
                if naive_seconds is not None and ccs_seconds > 0
                else None
            ),
        )
        logger.info("bench", **row.__dict__)
        rows.append(row)
    return rows
