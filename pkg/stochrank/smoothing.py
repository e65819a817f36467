"""
stochrank/smoothing.py - gaussian score smoothing, its conditional densities
and a monte carlo estimate of the smoothed loss

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
import math
from dataclasses import dataclass

import numpy as np
import scipy.stats
import structlog

import stochrank
from stochrank import ranking

logger = structlog.get_logger(logger_name=__name__)

# rows per batch when evaluating many noisy rankings at once
MC_CHUNK_ROWS = 1 << 16

# spawn keys separating the independent random streams of a run
QUERY_STREAM = 0
LANGEVIN_STREAM = 1


class SmoothingFamily(enum.Enum):
    CENTERED_GAUSSIAN = "centered_gaussian"
    RELEVANCE_SHIFTED_GAUSSIAN = "relevance_shifted_gaussian"


@dataclass(frozen=True)
class SmoothingSpec:
    """
    Noise eps ~ N(-mu * r, I) added to the scores as z + sigma * eps. The
    shift pushes more relevant documents down, which makes the smoothed
    loss converge to the worst-permutation loss as sigma goes to 0.
    """

    family: SmoothingFamily = SmoothingFamily.RELEVANCE_SHIFTED_GAUSSIAN
    mu: float = 1.0
    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise stochrank.InputError("sigma must be positive, got %r" % self.sigma)
        if self.mu < 0:
            raise stochrank.InputError("mu must be non-negative, got %r" % self.mu)
        centered = self.family is SmoothingFamily.CENTERED_GAUSSIAN
        if centered != (self.mu == 0):
            raise stochrank.InputError(
                "%s smoothing with mu=%r" % (self.family.value, self.mu)
            )

    @classmethod
    def centered(cls, sigma=1.0):
        return cls(SmoothingFamily.CENTERED_GAUSSIAN, mu=0.0, sigma=sigma)

    @classmethod
    def shifted(cls, mu, sigma=1.0):
        return cls(SmoothingFamily.RELEVANCE_SHIFTED_GAUSSIAN, mu=mu, sigma=sigma)

    def mean(self, r):
        return -self.mu * np.asarray(r, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class NoiseSample:
    eps: np.ndarray


@dataclass(frozen=True)
class SmoothedEstimate:
    value: float
    stderr: float
    samples: int


def query_rng(seed, iteration, query_index):
    return np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(QUERY_STREAM, iteration, query_index))
    )


def langevin_rng(seed, iteration):
    return np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(LANGEVIN_STREAM, iteration))
    )


def draw_noise(spec, r, rng, size=None):
    """Standard normal draws shifted by the family mean, shape (n,) or (size, n)."""
    mean = spec.mean(r)
    shape = mean.shape if size is None else (size,) + mean.shape
    return rng.standard_normal(shape) + mean


def sample_noise(spec, r, n, rng):
    r = np.asarray(r, dtype=np.float64).reshape(-1)
    if n < 1 or r.size != n:
        raise stochrank.InputError("%s labels for n=%s" % (r.size, n))
    return NoiseSample(eps=draw_noise(spec, r, rng))


def conditional_density(spec, r, j, t):
    """
    Density of coordinate j of the noise at t. Coordinates are independent,
    so this is the marginal N(-mu * r[j], 1) density. Vectorized over j, t.
    """
    loc = -spec.mu * np.asarray(r, dtype=np.float64)[j]
    return scipy.stats.norm.pdf(t, loc=loc)


def mc_smoothed_loss(z, r, spec, metric_spec, samples, rng, noise=None):
    """
    Monte carlo estimate of E[-quality(z + sigma * eps)]. Pass `noise` (a
    (samples, n) matrix) to reuse common random numbers across calls.
    """
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    r = np.asarray(r, dtype=np.float64).reshape(-1)
    if samples < 1:
        raise stochrank.InputError("need at least one sample, got %s" % samples)
    if noise is not None and noise.shape != (samples, z.size):
        raise stochrank.InputError(
            "noise matrix %s does not match (%s, %s)" % (noise.shape, samples, z.size)
        )
    total = 0.0
    total_sq = 0.0
    for start in range(0, samples, MC_CHUNK_ROWS):
        rows = min(MC_CHUNK_ROWS, samples - start)
        if noise is None:
            eps = draw_noise(spec, r, rng, size=rows)
        else:
            eps = noise[start : start + rows]
        losses = -ranking.eval_metric_batch(z + spec.sigma * eps, r, metric_spec)
        total += float(np.sum(losses))
        total_sq += float(np.sum(losses * losses))
    mean = total / samples
    if samples > 1:
        var = max(total_sq - samples * mean * mean, 0.0) / (samples - 1)
        stderr = math.sqrt(var / samples)
    else:
        stderr = math.inf
    return SmoothedEstimate(value=mean, stderr=stderr, samples=samples)
