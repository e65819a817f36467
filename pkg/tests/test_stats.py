#!/usr/bin/env python
"""
test_stats.py - tests of the paired t-test

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
import scipy.stats

import stochrank
from stochrank import stats


def test_one_tailed_against_student():
    b = np.array([0.5, 0.25, 0.75, 0.125, 0.0])
    a = b + np.array([1.0, 2.0, 3.0, 4.0, 5.0])
    result = stats.paired_t_test(a, b)
    # mean 3, standard error sqrt(1/2): t = 3 sqrt(2). With 4 degrees of
    # freedom the Student cdf is closed form,
    # 1/2 + 3/8 x (1 - t^2 / (12 (1 + t^2 / 4))) with x = t / sqrt(1 + t^2 / 4)
    t = 3 * math.sqrt(2)
    assert result.t == pytest.approx(4.242640687)
    assert result.p == pytest.approx(0.0066177998, abs=1e-9)
    assert result.p == pytest.approx(scipy.stats.t.sf(t, df=4))
    assert result.df == 4
    assert result.degenerate is None

    reverse = stats.paired_t_test(b, a)
    assert reverse.t == pytest.approx(-t)
    assert reverse.p == pytest.approx(1.0 - result.p)


def test_degenerate_differences():
    zero = stats.paired_t_test([0.5, 0.5], [0.5, 0.5])
    assert zero.degenerate == stats.ZERO_DIFFERENCES
    assert zero.p is None
    assert math.isnan(zero.t)

    up = stats.paired_t_test([1.5, 2.5, 3.5], [1.0, 2.0, 3.0])
    assert up.degenerate == stats.DEGENERATE_POSITIVE
    assert up.t == math.inf and up.p == 0.0

    down = stats.paired_t_test([1.0, 2.0], [1.5, 2.5])
    assert down.degenerate == stats.DEGENERATE_NEGATIVE
    assert down.p == 1.0


def test_input_errors():
    with pytest.raises(stochrank.InputError):
        stats.paired_t_test([1.0, 2.0], [1.0])
    with pytest.raises(stochrank.InputError):
        stats.paired_t_test([1.0], [0.0])


def test_shift_with_rounding_is_degenerate():
    b = np.random.default_rng(0).uniform(size=20)
    # b + 1 - b is not exactly 1 for most b
    result = stats.paired_t_test(b + 1.0, b)
    assert result.degenerate == stats.DEGENERATE_POSITIVE
    assert result.t == math.inf
    assert result.p == 0.0

    result = stats.paired_t_test(b, b + 0.5)
    assert result.degenerate == stats.DEGENERATE_NEGATIVE
    assert result.p == 1.0
