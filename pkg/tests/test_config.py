#!/usr/bin/env python
"""
test_config.py - tests of run configuration files and their validation

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

import pytest

import stochrank
from stochrank import config
from stochrank.booster import Mode
from stochrank.gradients import EstimatorKind
from stochrank.ranking import MetricSpec
from stochrank.smoothing import SmoothingFamily

RUN_CONF = """\
# stochastic ranking on a letor fold
iterations = 200
learning-rate = 0.05   # dashes read as underscores
depth = 4
mode = sglb
estimator = ccs_sfa
smoothing = relevance_shifted_gaussian
metric = err@3
eval_metrics = ndcg@5, err@3, mrr
use_best_model = yes
train = 2024
"""


@pytest.fixture
def conf_file(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text(RUN_CONF)
    return path


def test_read_config_file(conf_file):
    conf = config.read_config_file(conf_file)
    assert conf["iterations"] == 200
    assert conf["learning_rate"] == 0.05
    assert conf["use_best_model"] is True
    assert conf["eval_metrics"] == "ndcg@5, err@3, mrr"


def test_bad_config_line(tmp_path):
    path = tmp_path / "bad.conf"
    path.write_text("iterations = 3\njust some words\n")
    with pytest.raises(stochrank.InputError):
        config.read_config_file(path)


def test_load_and_coerce(conf_file):
    conf = config.load_run_config(conf_file, {"seed": "7", "depth": None})
    assert conf["seed"] == 7
    assert conf["depth"] == 4
    assert conf["eval_metrics"] == ["ndcg@5", "err@3", "mrr"]
    assert conf["train"] == "2024"

    train_config = config.train_config(conf)
    assert train_config.iterations == 200
    assert train_config.learning_rate == 0.05
    assert train_config.mode is Mode.SGLB
    assert train_config.estimator is EstimatorKind.CCS_SFA
    assert train_config.smoothing is SmoothingFamily.RELEVANCE_SHIFTED_GAUSSIAN
    assert train_config.metric == MetricSpec.parse("err@3")
    assert train_config.use_best_model
    assert train_config.strict

    assert config.train_config(conf, seed=99).seed == 99


def test_overrides_win(conf_file):
    conf = config.load_run_config(conf_file, {"iterations": "5", "metric": "ndcg@10"})
    assert conf["iterations"] == 5
    assert conf["metric"] == "ndcg@10"


def test_defaults_come_last():
    train_config = config.train_config(config.load_run_config())
    assert train_config.iterations == 1000
    assert train_config.metric == MetricSpec.parse("ndcg@5")


@pytest.mark.parametrize(
    "overrides,field",
    [
        ({"learning_rate": "2"}, "learning_rate"),
        ({"iterations": "1.5"}, "iterations"),
        ({"metric": "map@5"}, "metric"),
        ({"eval_metrics": "ndcg@5,bogus"}, "eval_metrics"),
        ({"mode": "adam"}, "mode"),
        ({"seed": "-1"}, "seed"),
        ({"no_such_setting": "1"}, "no_such_setting"),
        ({"diffusion_temperature": "inf"}, "diffusion_temperature"),
        ({"diffusion_temperature": "5e12"}, "diffusion_temperature"),
        ({"nu": "1e9"}, "nu"),
    ],
)
def test_invalid(overrides, field):
    with pytest.raises(stochrank.InvalidRunConfig) as excinfo:
        config.load_run_config(None, overrides)
    assert field in excinfo.value.errors


def test_unsafe_skips_ranges():
    conf = config.load_run_config(
        None,
        {"learning_rate": "2", "diffusion_temperature": "inf", "model_shrink_rate": "0"},
        unsafe=True,
    )
    assert conf["learning_rate"] == 2.0
    assert math.isinf(conf["diffusion_temperature"])
    relaxed = config.train_config(conf, unsafe=True)
    assert not relaxed.strict
    assert relaxed.langevin_sd == 0.0

    # types and allowed values still apply
    with pytest.raises(stochrank.InvalidRunConfig):
        config.load_run_config(None, {"mode": "adam"}, unsafe=True)


def test_schema_bounds_are_numbers():
    # yaml reads 1.0e12 without an exponent sign as a string
    for key, rules in config.load_schema().items():
        for bound in ("min", "max"):
            if bound in rules:
                assert isinstance(rules[bound], (int, float)), (key, bound, rules[bound])
    schema = config.load_schema()
    assert schema["diffusion_temperature"]["max"] == 1e12
    assert schema["nu"]["max"] == 1e6
