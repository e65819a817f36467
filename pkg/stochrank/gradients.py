"""
stochrank/gradients.py - stochastic gradient estimators of the smoothed
ranking loss

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

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np
import structlog

import stochrank
from stochrank import ranking, smoothing

logger = structlog.get_logger(logger_name=__name__)

# upper bound on (documents x candidate positions) evaluated per jump batch
JUMP_CHUNK_CELLS = 1 << 20


class EstimatorKind(enum.Enum):
    CCS = "ccs"
    CCS_SFA = "ccs_sfa"
    REINFORCE = "reinforce"


@dataclass(frozen=True)
class EstimatorConfig:
    kind: EstimatorKind = EstimatorKind.CCS_SFA
    sigma: float = 1.0
    nu: float = 1e-2
    samples_per_estimate: int = 1

    def __post_init__(self):
        if not self.sigma > 0:
            raise stochrank.InputError("sigma must be positive, got %r" % self.sigma)
        if self.nu < 0:
            raise stochrank.InputError("nu must be non-negative, got %r" % self.nu)
        if self.samples_per_estimate < 1:
            raise stochrank.InputError(
                "samples_per_estimate must be positive, got %r"
                % self.samples_per_estimate
            )


@dataclass(frozen=True, eq=False)
class GradientEstimate:
    """
    `g` estimates the gradient of the smoothed loss (negated quality) with
    respect to the scores. `seed` is set when the estimator was handed an
    integer seed rather than a generator.
    """

    g: np.ndarray
    kind: EstimatorKind
    seed: Optional[int] = None


def _generator(rng):
    if isinstance(rng, np.random.Generator):
        return rng, None
    return np.random.default_rng(rng), rng


def center_scores(z):
    z = np.asarray(z, dtype=np.float64)
    return z - z.mean()


def constant_loss(r, metric_spec):
    r = np.asarray(r, dtype=np.float64)
    if metric_spec.kind is ranking.MetricKind.DCG_RR:
        return bool(np.all(r == 0))
    # equal labels make every ranking score the same
    return bool(np.all(r == r[0]))


def ccs_from_noise(z, r, metric_spec, smoothing_spec, eps):
    n = z.size
    if constant_loss(r, metric_spec):
        return np.zeros(n)
    sigma = smoothing_spec.sigma
    y = z + sigma * eps

    if metric_spec.kind is ranking.MetricKind.DCG_RR:
        # the only breaking point of each coordinate is 0
        jumps = ranking.dcg_rr_jumps(y, r)
        density = smoothing.conditional_density(smoothing_spec, r, np.arange(n), -z / sigma)
        return -jumps * density / sigma

    state = ranking.build_ranked_state(y, r, metric_spec)
    # crossing a score ranked below the cutoff changes nothing
    last = min(state.cutoff, n - 1)
    zeros = np.flatnonzero(state.discounts == 0.0)
    if zeros.size > 1:
        # below the second zero discount every cascade term is 0
        last = min(last, int(zeros[1]))
    candidates = np.arange(last + 1)
    breaks = state.scores[candidates][None, :]
    g = np.empty(n)
    rows = max(1, JUMP_CHUNK_CELLS // candidates.size)
    for start in range(0, n, rows):
        docs = state.order[start : start + rows][:, None]
        jumps = ranking.jump(state, docs, candidates[None, :])
        density = smoothing.conditional_density(
            smoothing_spec, r, docs, (breaks - z[docs]) / sigma
        )
        g[docs[:, 0]] = -np.sum(jumps * density, axis=1) / sigma
    return g


def ccs_gradient(z, r, metric_spec, smoothing_spec, rng):
    """
    Conditional coordinate sampling: one shared noise vector, one sort, and
    for every coordinate the sum over the other documents' noisy scores of
    the metric jump there weighted by the coordinate's conditional density.
    """
    z, r = ranking.check_pair(z, r)
    rng, seed = _generator(rng)
    eps = smoothing.draw_noise(smoothing_spec, r, rng)
    g = ccs_from_noise(z, r, metric_spec, smoothing_spec, eps)
    return GradientEstimate(g=g, kind=EstimatorKind.CCS, seed=seed)


def sfa_project(g, z, nu):
    g = np.asarray(g, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if nu < 0:
        raise stochrank.InputError("nu must be non-negative, got %r" % nu)
    norm = float(np.linalg.norm(z))
    if norm == 0.0:
        if nu == 0:
            raise stochrank.InputError("cannot project against z = 0 with nu = 0")
        return g.copy()
    u = z / (norm + nu)
    return g - np.dot(g, u) * u


def reinforce_gradient(z, r, metric_spec, sigma, rng, smoothing_spec=None):
    """
    Score-function estimate sigma^-1 (L(z + sigma eps) - L(z)) (eps - m)
    where m is the noise mean (zero for the centered family).
    """
    z, r = ranking.check_pair(z, r)
    rng, seed = _generator(rng)
    if smoothing_spec is None:
        smoothing_spec = smoothing.SmoothingSpec.centered(sigma)
    elif smoothing_spec.sigma != sigma:
        raise stochrank.InputError(
            "sigma %r does not match the smoothing sigma %r"
            % (sigma, smoothing_spec.sigma)
        )
    eps = smoothing.draw_noise(smoothing_spec, r, rng)
    base = ranking.eval_metric(z, r, metric_spec)
    noisy = ranking.eval_metric(z + sigma * eps, r, metric_spec)
    g = (base - noisy) * (eps - smoothing_spec.mean(r)) / sigma
    return GradientEstimate(g=g, kind=EstimatorKind.REINFORCE, seed=seed)


def estimate_gradient(z, r, metric_spec, smoothing_spec, config, rng):
    """Averages `config.samples_per_estimate` draws, projecting for CCS_SFA."""
    z, r = ranking.check_pair(z, r)
    rng, seed = _generator(rng)
    if config.sigma != smoothing_spec.sigma:
        raise stochrank.InputError(
            "estimator sigma %r does not match the smoothing sigma %r"
            % (config.sigma, smoothing_spec.sigma)
        )
    total = np.zeros(z.size)
    for _ in range(config.samples_per_estimate):
        if config.kind is EstimatorKind.REINFORCE:
            total += reinforce_gradient(
                z, r, metric_spec, config.sigma, rng, smoothing_spec
            ).g
        else:
            eps = smoothing.draw_noise(smoothing_spec, r, rng)
            total += ccs_from_noise(z, r, metric_spec, smoothing_spec, eps)
    g = total / config.samples_per_estimate
    if config.kind is EstimatorKind.CCS_SFA:
        g = sfa_project(g, z, config.nu)
    return GradientEstimate(g=g, kind=config.kind, seed=seed)
