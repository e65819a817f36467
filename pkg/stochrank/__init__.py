"""
stochrank/__init__.py - __init__.py for stochrank package, contains the
exception hierarchy and the public api

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

from importlib.metadata import version as _version

__version__ = _version("stochrank")


class StochRankError(Exception):
    pass


class InputError(StochRankError, ValueError):
    pass


class TieError(InputError):
    """Raised when a moved score lands exactly on another document's score."""

    def __init__(self, score, position):
        self.score = score
        self.position = position
        super().__init__(
            "score %r ties with the document at position %s" % (score, position)
        )


class DatasetParseError(StochRankError):
    def __init__(self, line_number, message):
        self.line_number = line_number
        super().__init__("line %s: %s" % (line_number, message))


class NonFiniteTargetsError(StochRankError):
    def __init__(self, iteration, count):
        self.iteration = iteration
        self.count = count
        super().__init__(
            "%s non-finite regression targets at iteration %s" % (count, iteration)
        )


class ModelFormatError(StochRankError):
    pass


class InvalidRunConfig(StochRankError):
    def __init__(self, validator):
        self.errors = dict(validator.errors)
        super().__init__("invalid run configuration: %r" % (self.errors,))


# Imported after the exceptions, the submodules import them from here.
from stochrank.ranking import (  # noqa: E402
    GainDiscount,
    MetricKind,
    MetricSpec,
    QueryInstance,
    RankedState,
    TiePolicy,
    build_ranked_state,
    dcg_rr_eval,
    delta_eval,
    eval_metric,
    gmc_params,
    jump,
    worst_argsort,
)
from stochrank.smoothing import (  # noqa: E402
    NoiseSample,
    SmoothingFamily,
    SmoothingSpec,
    conditional_density,
    mc_smoothed_loss,
    sample_noise,
)
from stochrank.gradients import (  # noqa: E402
    EstimatorConfig,
    EstimatorKind,
    GradientEstimate,
    ccs_gradient,
    center_scores,
    estimate_gradient,
    reinforce_gradient,
    sfa_project,
)
from stochrank.trees import (  # noqa: E402
    Ensemble,
    FeatureBinarization,
    ObliviousTree,
    compute_borders,
    fit_oblivious_tree,
    load_model,
    predict,
    save_model,
)
from stochrank.dataset import (  # noqa: E402
    RankingDataset,
    binarize_labels,
    dataset_stats,
    load_svmlight,
    parse_svmlight,
    synthetic_dataset,
    write_svmlight,
)
from stochrank.booster import (  # noqa: E402
    Booster,
    Mode,
    TrainConfig,
    TrainResult,
    TrainState,
    boost_iteration,
    evaluate,
    train,
)
from stochrank.stats import PairedTTest, paired_t_test  # noqa: E402

__all__ = [
    "Booster",
    "DatasetParseError",
    "Ensemble",
    "EstimatorConfig",
    "EstimatorKind",
    "FeatureBinarization",
    "GainDiscount",
    "GradientEstimate",
    "InputError",
    "InvalidRunConfig",
    "MetricKind",
    "MetricSpec",
    "Mode",
    "ModelFormatError",
    "NoiseSample",
    "NonFiniteTargetsError",
    "ObliviousTree",
    "PairedTTest",
    "QueryInstance",
    "RankedState",
    "RankingDataset",
    "SmoothingFamily",
    "SmoothingSpec",
    "StochRankError",
    "TieError",
    "TiePolicy",
    "TrainConfig",
    "TrainResult",
    "TrainState",
    "binarize_labels",
    "boost_iteration",
    "build_ranked_state",
    "ccs_gradient",
    "center_scores",
    "compute_borders",
    "conditional_density",
    "dataset_stats",
    "dcg_rr_eval",
    "delta_eval",
    "estimate_gradient",
    "eval_metric",
    "evaluate",
    "fit_oblivious_tree",
    "gmc_params",
    "jump",
    "load_model",
    "load_svmlight",
    "mc_smoothed_loss",
    "paired_t_test",
    "parse_svmlight",
    "predict",
    "reinforce_gradient",
    "sample_noise",
    "save_model",
    "sfa_project",
    "synthetic_dataset",
    "train",
    "worst_argsort",
    "write_svmlight",
]
