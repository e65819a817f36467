#!/usr/bin/env python
"""
test_gradients.py - tests of the CCS, SFA and REINFORCE gradient estimators

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

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import stochrank
from stochrank import diagnostics, gradients, ranking, smoothing
from stochrank.gradients import EstimatorConfig, EstimatorKind
from stochrank.ranking import MetricKind, MetricSpec
from stochrank.smoothing import SmoothingSpec


def instance(rng, spec, n):
    if spec.kind is MetricKind.MRR:
        r = rng.integers(0, 2, size=n).astype(np.float64)
    else:
        r = rng.integers(0, 5, size=n).astype(np.float64)
    return rng.normal(size=n), r


@pytest.mark.parametrize("name", ["ndcg@3", "dcg@5", "err", "err@2", "mrr"])
@pytest.mark.parametrize("mu", [0.0, 1.0])
def test_ccs_matches_naive_recompute(name, mu):
    spec = MetricSpec.parse(name)
    smoothing_spec = SmoothingSpec.shifted(mu) if mu else SmoothingSpec.centered()
    rng = np.random.default_rng(17)
    for _ in range(10):
        n = int(rng.integers(1, 9))
        z, r = instance(rng, spec, n)
        eps = smoothing.draw_noise(smoothing_spec, r, rng)
        fast = gradients.ccs_from_noise(z, r, spec, smoothing_spec, eps)
        naive = diagnostics.naive_ccs_gradient(z, r, spec, smoothing_spec, eps)
        np.testing.assert_allclose(fast, naive, rtol=0, atol=1e-12)


@pytest.mark.parametrize(
    "name,grades", [("mrr", [0.0, 1.0]), ("err", [0.0, 0.5, 1.0])]
)
def test_zero_discount_candidates(name, grades, monkeypatch):
    spec = MetricSpec.parse(name)
    smoothing_spec = SmoothingSpec.shifted(1.0)
    rng = np.random.default_rng(8)
    z = rng.normal(size=40)
    r = rng.choice(grades, size=40)
    eps = smoothing.draw_noise(smoothing_spec, r, rng)
    np.testing.assert_allclose(
        gradients.ccs_from_noise(z, r, spec, smoothing_spec, eps),
        diagnostics.naive_ccs_gradient(z, r, spec, smoothing_spec, eps),
        rtol=0,
        atol=1e-12,
    )

    # two relevant documents far on top: only positions 0 and 1 can jump
    r = np.zeros(400)
    r[[5, 17]] = 1.0
    z = rng.normal(size=400)
    z[[5, 17]] = 50.0
    eps = smoothing.draw_noise(smoothing_spec, r, rng)
    widths = []
    jump = ranking.jump

    def recording_jump(state, j, s):
        widths.append(np.shape(s)[-1])
        return jump(state, j, s)

    monkeypatch.setattr(ranking, "jump", recording_jump)
    g = gradients.ccs_from_noise(z, r, spec, smoothing_spec, eps)
    assert max(widths) == 2
    assert np.all(np.isfinite(g))


def test_ccs_small_chunks(monkeypatch):
    spec = MetricSpec.parse("ndcg@4")
    smoothing_spec = SmoothingSpec.shifted(1.0)
    rng = np.random.default_rng(2)
    z, r = instance(rng, spec, 30)
    eps = smoothing.draw_noise(smoothing_spec, r, rng)
    whole = gradients.ccs_from_noise(z, r, spec, smoothing_spec, eps)
    monkeypatch.setattr(gradients, "JUMP_CHUNK_CELLS", 7)
    np.testing.assert_allclose(
        gradients.ccs_from_noise(z, r, spec, smoothing_spec, eps),
        whole,
        rtol=1e-14,
        atol=1e-15,
    )


def test_ccs_dcg_rr():
    spec = MetricSpec.parse("dcg_rr")
    smoothing_spec = SmoothingSpec.shifted(0.5)
    rng = np.random.default_rng(9)
    r = rng.uniform(size=5)
    z = rng.normal(size=5)
    eps = smoothing.draw_noise(smoothing_spec, r, rng)
    g = gradients.ccs_from_noise(z, r, spec, smoothing_spec, eps)
    y = z + eps
    for j in range(5):
        hi, lo = y.copy(), y.copy()
        hi[j], lo[j] = 1.0, -1.0
        jump = stochrank.eval_metric(hi, r, spec) - stochrank.eval_metric(lo, r, spec)
        density = smoothing.conditional_density(smoothing_spec, r, j, -z[j])
        assert g[j] == pytest.approx(-jump * density, abs=1e-12)


def test_constant_loss_gives_zero_gradient():
    spec = MetricSpec.parse("ndcg@3")
    smoothing_spec = SmoothingSpec.shifted(1.0)
    for r in ([2.0, 2.0, 2.0], [0.0, 0.0], [3.0]):
        estimate = gradients.ccs_gradient(
            np.arange(len(r), dtype=np.float64), r, spec, smoothing_spec, 0
        )
        np.testing.assert_array_equal(estimate.g, 0.0)
    assert gradients.constant_loss([0.0, 0.0], MetricSpec.parse("dcg_rr"))
    assert not gradients.constant_loss([1.0, 1.0], MetricSpec.parse("dcg_rr"))


def test_ccs_is_translation_invariant():
    spec = MetricSpec.parse("ndcg@5")
    smoothing_spec = SmoothingSpec.shifted(1.0)
    rng = np.random.default_rng(21)
    z, r = instance(rng, spec, 8)
    eps = smoothing.draw_noise(smoothing_spec, r, rng)
    g = gradients.ccs_from_noise(z, r, spec, smoothing_spec, eps)
    shifted = gradients.ccs_from_noise(z + 3.0, r, spec, smoothing_spec, eps)
    np.testing.assert_allclose(shifted, g, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(gradients.center_scores(z + 3.0).mean(), 0.0, atol=1e-12)


def check_uniform_bound(name, rng, instances, draws=10):
    spec = MetricSpec.parse(name)
    for _ in range(instances):
        n = int(rng.integers(2, 10))
        sigma = float(rng.choice([0.3, 1.0, 2.0]))
        smoothing_spec = SmoothingSpec.shifted(float(rng.uniform(0.1, 3.0)), sigma)
        z, r = instance(rng, spec, n)
        bound = 2 * n / (sigma * math.sqrt(2 * math.pi))
        for _ in range(draws):
            eps = smoothing.draw_noise(smoothing_spec, r, rng)
            g = gradients.ccs_from_noise(z, r, spec, smoothing_spec, eps)
            assert np.all(np.abs(g) <= bound)


@pytest.mark.parametrize("name", ["ndcg@3", "err@3"])
def test_ccs_uniform_bound(name):
    check_uniform_bound(name, np.random.default_rng(33), 200)


@pytest.mark.slow
@pytest.mark.parametrize("name", ["ndcg@3", "err@3", "mrr"])
def test_ccs_uniform_bound_many_draws(name):
    check_uniform_bound(name, np.random.default_rng(34), 10000)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), nu=st.sampled_from([0.0, 1e-2, 1.0]))
def test_sfa_properties(seed, nu):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 10))
    g = rng.normal(size=n)
    z = rng.normal(size=n)
    projected = gradients.sfa_project(g, z, nu)
    assert np.linalg.norm(projected) <= np.linalg.norm(g) * (1 + 1e-12)
    if nu == 0.0:
        scale = np.linalg.norm(g) * np.linalg.norm(z)
        assert abs(np.dot(projected, z)) <= 1e-10 * scale


def test_sfa_guard_limit():
    rng = np.random.default_rng(12)
    g = rng.normal(size=6)
    z = rng.normal(size=6)
    distances = [
        np.linalg.norm(gradients.sfa_project(g, z, nu) - g)
        for nu in (0.0, 1e-2, 1.0, 1e6)
    ]
    assert distances == sorted(distances, reverse=True)
    assert distances[0] > distances[-1]
    # a large guard leaves the estimate untouched
    np.testing.assert_allclose(
        gradients.sfa_project(g, z, 1e6), g, rtol=1e-9, atol=1e-9
    )


def test_sfa_at_zero_scores():
    g = np.array([1.0, -2.0])
    np.testing.assert_array_equal(gradients.sfa_project(g, np.zeros(2), 1e-2), g)
    with pytest.raises(stochrank.InputError):
        gradients.sfa_project(g, np.zeros(2), 0.0)
    with pytest.raises(stochrank.InputError):
        gradients.sfa_project(g, np.ones(2), -1.0)


def test_reinforce_formula():
    spec = MetricSpec.parse("ndcg")
    smoothing_spec = SmoothingSpec.shifted(1.0, 0.5)
    z = np.array([0.3, -0.2, 0.1])
    r = np.array([2.0, 0.0, 1.0])
    estimate = gradients.reinforce_gradient(z, r, spec, 0.5, 5, smoothing_spec)
    eps = smoothing.draw_noise(smoothing_spec, r, np.random.default_rng(5))
    loss = -stochrank.eval_metric(z + 0.5 * eps, r, spec)
    base = -stochrank.eval_metric(z, r, spec)
    np.testing.assert_allclose(estimate.g, (loss - base) * (eps + r) / 0.5)
    assert estimate.kind is EstimatorKind.REINFORCE
    assert estimate.seed == 5
    with pytest.raises(stochrank.InputError):
        gradients.reinforce_gradient(z, r, spec, 1.0, 5, smoothing_spec)


def test_ccs_reuses_one_noise_draw():
    spec = MetricSpec.parse("ndcg@3")
    smoothing_spec = SmoothingSpec.shifted(1.0)
    z, r = instance(np.random.default_rng(3), spec, 7)
    g = gradients.ccs_gradient(z, r, spec, smoothing_spec, 7).g
    eps = smoothing.draw_noise(smoothing_spec, r, np.random.default_rng(7))
    np.testing.assert_array_equal(
        g, gradients.ccs_from_noise(z, r, spec, smoothing_spec, eps)
    )
    np.testing.assert_array_equal(
        gradients.ccs_gradient(z, r, spec, smoothing_spec, 7).g, g
    )
    assert not np.array_equal(
        gradients.ccs_gradient(z, r, spec, smoothing_spec, 8).g, g
    )


def test_reinforce_variance_dominates_ccs():
    spec = MetricSpec.parse("ndcg@3")
    smoothing_spec = SmoothingSpec.shifted(1.0)
    z = np.zeros(5)
    r = np.array([3.0, 2.0, 1.0, 0.0, 0.0])
    rng = np.random.default_rng(10)
    ccs = np.array(
        [
            gradients.ccs_gradient(z, r, spec, smoothing_spec, rng).g
            for _ in range(4000)
        ]
    )
    reinforce = np.array(
        [
            gradients.reinforce_gradient(z, r, spec, 1.0, rng, smoothing_spec).g
            for _ in range(4000)
        ]
    )
    # same mean, and conditioning on the other coordinates only removes variance
    assert np.all(reinforce.var(axis=0) >= ccs.var(axis=0))


def test_estimate_gradient_dispatch():
    spec = MetricSpec.parse("ndcg@3")
    smoothing_spec = SmoothingSpec.shifted(1.0)
    rng = np.random.default_rng(6)
    z, r = instance(rng, spec, 6)

    plain = gradients.estimate_gradient(
        z, r, spec, smoothing_spec, EstimatorConfig(kind=EstimatorKind.CCS), 42
    )
    again = gradients.ccs_gradient(z, r, spec, smoothing_spec, 42)
    np.testing.assert_array_equal(plain.g, again.g)
    assert plain.seed == 42

    projected = gradients.estimate_gradient(
        z, r, spec, smoothing_spec, EstimatorConfig(kind=EstimatorKind.CCS_SFA), 42
    )
    np.testing.assert_allclose(
        projected.g, gradients.sfa_project(plain.g, z, 1e-2), rtol=0, atol=1e-15
    )

    averaged = gradients.estimate_gradient(
        z,
        r,
        spec,
        smoothing_spec,
        EstimatorConfig(kind=EstimatorKind.CCS, samples_per_estimate=3),
        np.random.default_rng(1),
    )
    draws = np.random.default_rng(1)
    expected = sum(
        gradients.ccs_from_noise(
            z, r, spec, smoothing_spec, smoothing.draw_noise(smoothing_spec, r, draws)
        )
        for _ in range(3)
    )
    np.testing.assert_allclose(averaged.g, expected / 3, rtol=0, atol=1e-15)

    with pytest.raises(stochrank.InputError):
        gradients.estimate_gradient(
            z, r, spec, smoothing_spec, EstimatorConfig(sigma=2.0), 0
        )
    with pytest.raises(stochrank.InputError):
        EstimatorConfig(samples_per_estimate=0)
