"""
stochrank/config.py - run configuration: flat key = value files, command
line overrides, validation against run_schema.yaml

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

import copy
import os

import cerberus
import structlog
import yaml

import stochrank
from stochrank import booster, gradients, ranking, smoothing

logger = structlog.get_logger(logger_name=__name__)

TRAIN_CONFIG_KEYS = (
    "iterations",
    "learning_rate",
    "depth",
    "sigma",
    "model_shrink_rate",
    "diffusion_temperature",
    "mu",
    "nu",
    "samples_per_estimate",
    "max_borders",
    "seed",
    "threads",
    "use_best_model",
)


def load_schema(unsafe=False):
    schema_file = os.path.join(os.path.dirname(__file__), "run_schema.yaml")
    with open(schema_file) as f:
        schema = yaml.safe_load(f)
    if unsafe:
        schema = copy.deepcopy(schema)
        for rules in schema.values():
            rules.pop("min", None)
            rules.pop("max", None)
    return schema


class RunConfigValidator(cerberus.Validator):
    def _normalize_coerce_int(self, value):
        if value is None or isinstance(value, bool):
            return value
        if isinstance(value, float) and not value.is_integer():
            raise ValueError("%r is not an integer" % value)
        return int(value)

    def _normalize_coerce_float(self, value):
        if value is None or isinstance(value, bool):
            return value
        return float(value)

    def _normalize_coerce_bool(self, value):
        if isinstance(value, str):
            value = yaml.safe_load(value)
        return value

    def _normalize_coerce_str(self, value):
        # a file named 2024 must not read as an integer
        if value is None or isinstance(value, str):
            return value
        return str(value)

    def _normalize_coerce_csv(self, value):
        if isinstance(value, str):
            return [v.strip() for v in value.split(",") if v.strip()]
        return value

    def _check_with_metric(self, field, value):
        try:
            ranking.MetricSpec.parse(value)
        except stochrank.InputError as e:
            self._error(field, str(e))


def parse_value(text):
    """Types a raw value the way yaml reads a scalar: 3 -> int, true -> bool."""
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError:
        return text


def read_config_file(path):
    """
    Reads `key = value` lines. `#` starts a comment, blank lines are
    skipped, keys use underscores or dashes.
    """
    conf = {}
    with open(path) as f:
        for line_number, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep or not key.strip():
                raise stochrank.InputError(
                    "%s line %s: expected key = value" % (path, line_number)
                )
            conf[key.strip().replace("-", "_")] = parse_value(value.strip())
    return conf


def validate_run_config(conf, unsafe=False):
    """Returns the coerced configuration or raises InvalidRunConfig."""
    v = RunConfigValidator(load_schema(unsafe))
    if not v.validate(conf):
        raise stochrank.InvalidRunConfig(v)
    return v.document


def load_run_config(path=None, overrides=None, unsafe=False):
    """File values, then non-None overrides on top, validated together."""
    conf = read_config_file(path) if path else {}
    for key, value in (overrides or {}).items():
        if value is not None:
            conf[key] = parse_value(value) if isinstance(value, str) else value
    conf = validate_run_config(conf, unsafe)
    logger.debug("run configuration", path=path, **conf)
    return conf


def train_config(conf, unsafe=False, **fixed):
    """
    Builds a TrainConfig from a validated run configuration. Keys missing
    from `conf` keep the TrainConfig defaults; `fixed` wins over both.
    """
    kwargs = {k: conf[k] for k in TRAIN_CONFIG_KEYS if k in conf}
    if "estimator" in conf:
        kwargs["estimator"] = gradients.EstimatorKind(conf["estimator"])
    if "smoothing" in conf:
        kwargs["smoothing"] = smoothing.SmoothingFamily(conf["smoothing"])
    if "mode" in conf:
        kwargs["mode"] = booster.Mode(conf["mode"])
    if "metric" in conf:
        kwargs["metric"] = ranking.MetricSpec.parse(conf["metric"])
    kwargs.update(fixed)
    kwargs["strict"] = not unsafe
    return booster.TrainConfig(**kwargs)
