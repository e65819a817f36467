"""
stochrank/stats.py - paired significance test for comparing per-query
metric values of two models

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
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.stats

import stochrank

# values of PairedTTest.degenerate
ZERO_DIFFERENCES = "zero"
DEGENERATE_POSITIVE = "positive"
DEGENERATE_NEGATIVE = "negative"


@dataclass(frozen=True)
class PairedTTest:
    t: float
    p: Optional[float]
    df: int
    degenerate: Optional[str] = None


def paired_t_test(a, b):
    """
    One-tailed paired t-test of mean(a - b) > 0. Differences with zero
    variance are flagged as degenerate instead of being fed to the Student
    distribution: all zero gives no p-value, a constant shift gives an
    infinite t.
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.size != b.size:
        raise stochrank.InputError("%s values paired with %s" % (a.size, b.size))
    if a.size < 2:
        raise stochrank.InputError("a paired t-test needs at least 2 pairs")
    diff = a - b
    df = diff.size - 1
    if np.all(diff == 0):
        return PairedTTest(t=math.nan, p=None, df=df, degenerate=ZERO_DIFFERENCES)
    # a constant shift computed in floating point may differ in the last bits
    if np.ptp(diff) <= 8 * np.finfo(np.float64).eps * np.max(np.abs(diff)):
        if diff.mean() > 0:
            return PairedTTest(t=math.inf, p=0.0, df=df, degenerate=DEGENERATE_POSITIVE)
        return PairedTTest(t=-math.inf, p=1.0, df=df, degenerate=DEGENERATE_NEGATIVE)
    result = scipy.stats.ttest_rel(a, b, alternative="greater")
    return PairedTTest(t=float(result.statistic), p=float(result.pvalue), df=df)
