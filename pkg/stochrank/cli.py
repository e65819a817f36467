#!/usr/bin/env python
"""
stochrank/cli.py - stochrank command line executables

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

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys

import numpy as np
import structlog
import yaml

import stochrank
from stochrank import (
    booster,
    config,
    dataset,
    diagnostics,
    metrics,
    ranking,
    smoothing,
    stats,
    trees,
)

logger = structlog.get_logger(logger_name=__name__)

# flags shared by every command that reads a run configuration, with the
# run configuration key each one overrides
RUN_OPTIONS = (
    ("--iterations", "number of boosting iterations"),
    ("--learning-rate", "learning rate"),
    ("--depth", "depth of the oblivious trees"),
    ("--sigma", "smoothing noise scale"),
    ("--model-shrink-rate", "model shrink rate (sglb)"),
    ("--diffusion-temperature", "diffusion temperature (sglb), inf with --unsafe"),
    ("--mu", "relevance shift of the smoothing noise"),
    ("--nu", "scale-free acceleration guard"),
    ("--estimator", "gradient estimator: ccs, ccs_sfa or reinforce"),
    ("--smoothing", "centered_gaussian or relevance_shifted_gaussian"),
    ("--mode", "sgb or sglb"),
    ("--metric", "metric to optimize, e.g. ndcg@5, err@3, mrr, dcg_rr"),
    ("--samples-per-estimate", "noise samples averaged per gradient estimate"),
    ("--max-borders", "maximum borders per feature"),
    ("--threads", "gradient worker threads (capped by STOCHRANK_THREADS)"),
)

SYNTHETIC_PRESET = {
    "iterations": 1000,
    "learning_rate": 0.1,
    "depth": 3,
    "diffusion_temperature": 1.0e3,
    "model_shrink_rate": 1.0e-3,
    "estimator": "ccs_sfa",
    "smoothing": "relevance_shifted_gaussian",
    "mode": "sglb",
    "metric": "ndcg@3",
}
SYNTHETIC_CONTRAST = {
    "mode": "sgb",
    "estimator": "ccs",
    "smoothing": "centered_gaussian",
    "mu": 0.0,
}
SYNTHETIC_GLOBAL_OPTIMUM = 0.917
SYNTHETIC_LOCAL_OPTIMUM = 0.903


def add_common_options(arg_parser, argv=None):
    argv = argv or sys.argv
    arg_parser.add_argument(
        "-q",
        "--quiet",
        dest="log_level",
        action="store_const",
        default=logging.INFO,
        const=logging.WARN,
        help="quiet logging",
    )
    arg_parser.add_argument(
        "-v",
        "--verbose",
        dest="log_level",
        action="store_const",
        default=logging.INFO,
        const=logging.DEBUG,
        help=("verbose logging"),
    )
    arg_parser.add_argument(
        "--trace",
        dest="log_level",
        action="store_const",
        default=logging.INFO,
        const=logging.DEBUG,
        help=("very verbose logging"),
    )
    arg_parser.add_argument(
        "--run-id",
        dest="run_id",
        help="ID for this run, displayed in logs if provided",
    )
    arg_parser.add_argument(
        "--version",
        action="version",
        version="stochrank %s - %s" % (stochrank.__version__, os.path.basename(argv[0])),
    )


def add_run_options(arg_parser, defaults_help=True):
    arg_parser.add_argument(
        "--config",
        dest="config",
        default=None,
        help="run configuration file of key = value lines",
    )
    arg_parser.add_argument(
        "--seed", dest="seed", default=None, help="random seed (default 0)"
    )
    arg_parser.add_argument(
        "--unsafe",
        dest="unsafe",
        action="store_true",
        help="skip the sanity ranges of numeric settings",
    )
    for flag, help in RUN_OPTIONS:
        arg_parser.add_argument(
            flag, dest=flag[2:].replace("-", "_"), default=None, help=help
        )


def decorate_logger_name(a, b, event_dict):
    """Decorates the logger name with call location, if provided"""

    old_name = event_dict.get("logger_name")
    if old_name is None:
        return event_dict

    try:
        filename = event_dict.pop("filename")
        func_name = event_dict.pop("func_name")
        lineno = event_dict.pop("lineno")
    except KeyError:
        return event_dict
    new_name = f"{old_name}.{func_name}({filename}:{lineno})"
    event_dict["logger_name"] = new_name

    return event_dict


def stderr_logger_factory(*args):
    # looked up per log call, sys.stderr may have been swapped since configuration
    return structlog.PrintLogger(file=sys.stderr)


def configure_logging(args):
    # reports go to stdout, so logs go to stderr
    processors = [
        structlog.contextvars.merge_contextvars,
        structlog.processors.add_log_level,
        structlog.processors.StackInfoRenderer(),
        structlog.dev.set_exc_info,
        structlog.processors.TimeStamper(fmt="%Y-%m-%d %H:%M:%S", utc=True),
        structlog.processors.CallsiteParameterAdder(
            [
                structlog.processors.CallsiteParameter.FILENAME,
                structlog.processors.CallsiteParameter.FUNC_NAME,
                structlog.processors.CallsiteParameter.LINENO,
                structlog.processors.CallsiteParameter.THREAD_NAME,
            ],
        ),
        decorate_logger_name,
        structlog.dev.ConsoleRenderer(),
    ]

    structlog.configure(
        processors=processors,
        wrapper_class=structlog.make_filtering_bound_logger(args.log_level),
        context_class=dict,
        logger_factory=stderr_logger_factory,
        cache_logger_on_first_use=False,
    )

    # Adds the run ID to the global binding, if supplied
    structlog.contextvars.clear_contextvars()
    if args.run_id is not None:
        structlog.contextvars.bind_contextvars(run_id=args.run_id)

    logging.basicConfig(
        stream=sys.stderr,
        level=args.log_level,
        format=(
            "%(asctime)s %(process)d %(levelname)s %(threadName)s "
            "%(name)s.%(funcName)s(%(filename)s:%(lineno)d) %(message)s"
        ),
    )


class BetterArgumentDefaultsHelpFormatter(argparse.ArgumentDefaultsHelpFormatter):
    """
    Like argparse.ArgumentDefaultsHelpFormatter but omits the default value
    for arguments with action='store_const'.
    """

    def _get_help_string(self, action):
        if isinstance(action, argparse._StoreConstAction):
            return action.help
        else:
            return super()._get_help_string(action)


def _arg_parser(argv, description):
    return argparse.ArgumentParser(
        prog=os.path.basename(argv[0]),
        description=description,
        formatter_class=BetterArgumentDefaultsHelpFormatter,
    )


def _run_overrides(args):
    keys = ["seed"] + [flag[2:].replace("-", "_") for flag, _ in RUN_OPTIONS]
    keys += [
        k
        for k in (
            "train",
            "valid",
            "test",
            "eval_metrics",
            "model_out",
            "log_out",
            "metrics_port",
            "use_best_model",
            "binarize_labels",
        )
        if hasattr(args, k)
    ]
    return {k: getattr(args, k) for k in keys}


def load_run_config(arg_parser, args, overrides=None):
    """Validated run configuration; usage errors exit with status 2."""
    try:
        return config.load_run_config(
            args.config, {**_run_overrides(args), **(overrides or {})}, args.unsafe
        )
    except OSError as e:
        arg_parser.error("--config: %s" % e)
    except stochrank.InvalidRunConfig as e:
        print(
            "%s: invalid run configuration" % arg_parser.prog,
            file=sys.stderr,
        )
        print(
            "  " + yaml.dump(e.errors).rstrip().replace("\n", "\n  "), file=sys.stderr
        )
        sys.exit(2)
    except stochrank.InputError as e:
        arg_parser.error(str(e))


def _train_config(arg_parser, conf, args, **fixed):
    try:
        return config.train_config(conf, args.unsafe, **fixed)
    except stochrank.InputError as e:
        arg_parser.error(str(e))


def _require_file(arg_parser, conf, key, flag):
    path = conf.get(key)
    if not path:
        arg_parser.error("%s is required" % flag)
    if not os.path.isfile(path):
        arg_parser.error("%s: no such file %r" % (flag, path))
    return path


def write_iteration_log(logs, stream, wall_time=True):
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["iteration", "train_metric", "valid_metric", "wall_ms"])
    for log in logs:
        writer.writerow(
            [
                log.iteration,
                repr(log.train_metric),
                "" if log.valid_metric is None else repr(log.valid_metric),
                "%.3f" % log.wall_ms if wall_time else "",
            ]
        )


def _json_number(x):
    # json has no inf or nan
    if x is None or np.isfinite(x):
        return x
    return str(x)


def stochrank_train(argv=None):
    """
    Command line utility entry point for training a ranking model. Reads an
    svmlight training set (and optionally validation and test sets), writes
    the model file and the per-iteration metric log as csv, and logs the
    final model's --eval-metrics on every set.
    """
    argv = argv or sys.argv
    arg_parser = _arg_parser(argv, "stochrank-train - train a ranking model")
    arg_parser.add_argument(
        "--train", dest="train", default=None, help="svmlight training set"
    )
    arg_parser.add_argument(
        "--valid", dest="valid", default=None, help="svmlight validation set"
    )
    arg_parser.add_argument(
        "--test",
        dest="test",
        default=None,
        help="svmlight test set, evaluated after training",
    )
    arg_parser.add_argument(
        "--eval-metrics",
        dest="eval_metrics",
        default=None,
        help="comma separated metrics for the final evaluation (default --metric)",
    )
    arg_parser.add_argument(
        "--model-out", dest="model_out", default=None, help="write the model here"
    )
    arg_parser.add_argument(
        "--log-out",
        dest="log_out",
        default=None,
        help="write the iteration log csv here instead of stdout",
    )
    arg_parser.add_argument(
        "--use-best-model",
        dest="use_best_model",
        action="store_const",
        const=True,
        default=None,
        help="keep the iteration with the best validation (else train) metric",
    )
    arg_parser.add_argument(
        "--binarize-labels",
        dest="binarize_labels",
        action="store_const",
        const=True,
        default=None,
        help="map labels to 1{label > 0}, needed for mrr",
    )
    arg_parser.add_argument(
        "--no-wall-time",
        dest="wall_time",
        action="store_false",
        help="leave the wall_ms column empty so reruns give identical logs",
    )
    arg_parser.add_argument(
        "--metrics-port",
        dest="metrics_port",
        default=None,
        help="port for the prometheus scrape endpoint, 0 to disable",
    )
    add_run_options(arg_parser)
    add_common_options(arg_parser, argv)

    args = arg_parser.parse_args(args=argv[1:])
    configure_logging(args)

    conf = load_run_config(arg_parser, args)
    train_path = _require_file(arg_parser, conf, "train", "--train")
    valid_path = conf.get("valid")
    if valid_path:
        _require_file(arg_parser, conf, "valid", "--valid")
    test_path = conf.get("test")
    if test_path:
        _require_file(arg_parser, conf, "test", "--test")
    train_config = _train_config(arg_parser, conf, args)
    eval_specs = [
        ranking.MetricSpec.parse(m) for m in conf.get("eval_metrics") or ()
    ] or [train_config.metric]

    if conf.get("metrics_port"):
        metrics.register_prom_metrics(conf["metrics_port"])
    else:
        logger.warning(
            "not starting prometheus scrape endpoint: metrics_port is undefined"
        )

    try:
        train_set = dataset.load_svmlight(train_path)
        valid_set = None
        if valid_path:
            valid_set = dataset.load_svmlight(
                valid_path, feature_count=train_set.feature_count
            )
        test_set = None
        if test_path:
            test_set = dataset.load_svmlight(
                test_path, feature_count=train_set.feature_count
            )
        if conf.get("binarize_labels"):
            train_set = dataset.binarize_labels(train_set)
            valid_set = valid_set and dataset.binarize_labels(valid_set)
            test_set = test_set and dataset.binarize_labels(test_set)
        result = booster.train(train_set, train_config, valid_set)
        evaluated = (("train", train_set), ("valid", valid_set), ("test", test_set))
        for name, data in evaluated:
            if data is not None:
                logger.info(
                    "final evaluation",
                    dataset=name,
                    **booster.evaluate(result.ensemble, data, eval_specs),
                )
        if conf.get("model_out"):
            trees.save_model(result.ensemble, conf["model_out"])
            logger.info("wrote model", path=conf["model_out"], trees=len(result.ensemble))
        if conf.get("log_out"):
            with open(conf["log_out"], "w", newline="") as f:
                write_iteration_log(result.logs, f, args.wall_time)
        else:
            write_iteration_log(result.logs, sys.stdout, args.wall_time)
    except (stochrank.StochRankError, OSError) as e:
        logger.exception("training failed", error=str(e))
        sys.exit(1)


def stochrank_eval(argv=None):
    """
    Command line utility entry point for evaluating a model. Prints a json
    report of mean metrics, and with --baseline-model the baseline's means
    and a paired one-tailed t-test of model against baseline per metric.
    """
    argv = argv or sys.argv
    arg_parser = _arg_parser(argv, "stochrank-eval - evaluate a ranking model")
    arg_parser.add_argument("--model", dest="model", required=True, help="model file")
    arg_parser.add_argument(
        "--data", dest="data", required=True, help="svmlight dataset"
    )
    arg_parser.add_argument(
        "--metrics",
        dest="metrics",
        default="ndcg@5",
        help="comma separated metrics, e.g. ndcg@5,err@3",
    )
    arg_parser.add_argument(
        "--baseline-model",
        dest="baseline_model",
        default=None,
        help="model to compare against",
    )
    arg_parser.add_argument(
        "--binarize-labels",
        dest="binarize_labels",
        action="store_true",
        help="map labels to 1{label > 0}, needed for mrr",
    )
    add_common_options(arg_parser, argv)

    args = arg_parser.parse_args(args=argv[1:])
    configure_logging(args)

    try:
        specs = [ranking.MetricSpec.parse(m) for m in args.metrics.split(",") if m]
    except stochrank.InputError as e:
        arg_parser.error("--metrics: %s" % e)
    for flag, path in (("--model", args.model), ("--data", args.data)):
        if not os.path.isfile(path):
            arg_parser.error("%s: no such file %r" % (flag, path))
    if args.baseline_model and not os.path.isfile(args.baseline_model):
        arg_parser.error("--baseline-model: no such file %r" % args.baseline_model)

    try:
        model = trees.load_model(args.model)
        data = dataset.load_svmlight(args.data, feature_count=model.feature_count)
        if args.binarize_labels:
            data = dataset.binarize_labels(data)
        scores = model.predict(data.features)
        per_query = {
            str(s): booster.query_metrics(data, scores, s) for s in specs
        }
        report = {
            "data": args.data,
            "queries": len(data),
            "metrics": {k: float(np.mean(v)) for k, v in per_query.items()},
        }
        if args.baseline_model:
            baseline = trees.load_model(args.baseline_model)
            baseline_scores = baseline.predict(data.features)
            report["baseline"] = {}
            report["t_tests"] = {}
            for s in specs:
                values = booster.query_metrics(data, baseline_scores, s)
                report["baseline"][str(s)] = float(np.mean(values))
                if len(data) < 2:
                    continue
                test = stats.paired_t_test(per_query[str(s)], values)
                report["t_tests"][str(s)] = {
                    "t": _json_number(test.t),
                    "p": test.p,
                    "df": test.df,
                    "degenerate": test.degenerate,
                }
    except (stochrank.StochRankError, OSError) as e:
        logger.exception("evaluation failed", error=str(e))
        sys.exit(1)
    print(json.dumps(report, indent=2))


def random_instance(n, metric_spec, seed):
    """Random scores and labels suited to the metric."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(5,)))
    if metric_spec.kind is ranking.MetricKind.MRR:
        r = rng.integers(0, 2, size=n).astype(np.float64)
    elif metric_spec.kind is ranking.MetricKind.DCG_RR:
        r = rng.uniform(size=n)
    else:
        r = rng.integers(0, 5, size=n).astype(np.float64)
    return rng.normal(size=n), r


def stochrank_gradcheck(argv=None):
    """
    Command line utility entry point for checking the gradient estimators on
    a small random instance against finite differences of the monte carlo
    smoothed loss. Exits 1 if a coordinate fails.
    """
    argv = argv or sys.argv
    arg_parser = _arg_parser(
        argv, "stochrank-gradcheck - check gradient estimators on a small instance"
    )
    arg_parser.add_argument("--n", dest="n", type=int, default=4, help="documents")
    arg_parser.add_argument(
        "--samples", dest="samples", type=int, default=200_000, help="estimator draws"
    )
    arg_parser.add_argument(
        "--fd-samples",
        dest="fd_samples",
        type=int,
        default=10_000_000,
        help="monte carlo samples of the finite-difference reference",
    )
    arg_parser.add_argument(
        "--h", dest="h", type=float, default=1e-2, help="finite-difference step"
    )
    arg_parser.add_argument(
        "--format", dest="format", choices=("json", "csv"), default="json"
    )
    add_run_options(arg_parser)
    add_common_options(arg_parser, argv)

    args = arg_parser.parse_args(args=argv[1:])
    configure_logging(args)

    if not 1 <= args.n <= 6:
        arg_parser.error("--n must be between 1 and 6, got %s" % args.n)
    if args.samples < 2 or args.fd_samples < 2:
        arg_parser.error("--samples and --fd-samples need at least 2 draws")
    conf = load_run_config(arg_parser, args)
    conf.setdefault("metric", "ndcg@3")
    train_config = _train_config(arg_parser, conf, args)

    z, r = random_instance(args.n, train_config.metric, train_config.seed)
    report = diagnostics.gradcheck(
        z,
        r,
        train_config.metric,
        train_config.smoothing_spec(),
        samples=args.samples,
        fd_samples=args.fd_samples,
        h=args.h,
        nu=train_config.nu,
        seed=train_config.seed,
    )
    rows = [dataclasses.asdict(c) for c in report.coordinates]
    if args.format == "csv":
        writer = csv.DictWriter(
            sys.stdout, fieldnames=list(rows[0]), lineterminator="\n"
        )
        writer.writeheader()
        writer.writerows(rows)
    else:
        print(
            json.dumps(
                {
                    "metric": str(train_config.metric),
                    "scores": z.tolist(),
                    "labels": r.tolist(),
                    "coordinates": rows,
                    "reinforce_to_ccs_variance": report.reinforce_to_ccs_variance,
                    "sfa_to_ccs_variance": report.sfa_to_ccs_variance,
                    "passed": report.passed,
                },
                indent=2,
            )
        )
    if not report.passed:
        sys.exit(1)


def stochrank_synthetic(argv=None):
    """
    Command line utility entry point for the two-query synthetic experiment.
    Trains the stochastic ranking configuration on several seeds and, with
    --contrast, plain SGB with centered smoothing, and reports how many
    runs reach the global optimum or stall at the local one.
    """
    argv = argv or sys.argv
    arg_parser = _arg_parser(
        argv, "stochrank-synthetic - reproduce the synthetic multimodal experiment"
    )
    arg_parser.add_argument(
        "--seeds", dest="seeds", type=int, default=10, help="number of seeds"
    )
    arg_parser.add_argument(
        "--contrast",
        dest="contrast",
        action="store_true",
        help="also run plain SGB with centered smoothing",
    )
    add_run_options(arg_parser)
    add_common_options(arg_parser, argv)

    args = arg_parser.parse_args(args=argv[1:])
    configure_logging(args)
    if args.seeds < 1:
        arg_parser.error("--seeds must be positive, got %s" % args.seeds)

    user_conf = load_run_config(arg_parser, args)
    data = dataset.synthetic_dataset()
    runs = [("stochasticrank", {**SYNTHETIC_PRESET, **user_conf})]
    if args.contrast:
        runs.append(("contrast", {**SYNTHETIC_PRESET, **user_conf, **SYNTHETIC_CONTRAST}))

    report = {
        "global_optimum": SYNTHETIC_GLOBAL_OPTIMUM,
        "local_optimum": SYNTHETIC_LOCAL_OPTIMUM,
    }
    base_seed = user_conf.get("seed", 0)
    try:
        for name, conf in runs:
            finals = []
            for s in range(args.seeds):
                train_config = _train_config(
                    arg_parser, conf, args, seed=base_seed + s
                )
                result = booster.train(data, train_config)
                finals.append(result.logs[-1].train_metric)
            rounded = [round(v, 3) for v in finals]
            report[name] = {
                "final_metric": finals,
                "reached_global": rounded.count(SYNTHETIC_GLOBAL_OPTIMUM),
                "stalled_local": rounded.count(SYNTHETIC_LOCAL_OPTIMUM),
            }
            logger.info("synthetic runs finished", configuration=name, **report[name])
    except stochrank.StochRankError as e:
        logger.exception("synthetic experiment failed", error=str(e))
        sys.exit(1)
    print(json.dumps(report, indent=2))


def stochrank_bench(argv=None):
    """
    Command line utility entry point for timing full CCS gradient passes
    over growing n against the naive recompute path.
    """
    argv = argv or sys.argv
    arg_parser = _arg_parser(
        argv, "stochrank-bench - time the constant-time jump evaluation"
    )
    arg_parser.add_argument("--min-log2", dest="min_log2", type=int, default=8)
    arg_parser.add_argument("--max-log2", dest="max_log2", type=int, default=14)
    arg_parser.add_argument(
        "--naive-max-log2",
        dest="naive_max_log2",
        type=int,
        default=12,
        help="largest n (as log2) to time the naive path on",
    )
    arg_parser.add_argument(
        "--naive-sample",
        dest="naive_sample",
        type=int,
        default=4,
        help="coordinates timed on the naive path, extrapolated to n",
    )
    arg_parser.add_argument("--repeats", dest="repeats", type=int, default=3)
    arg_parser.add_argument(
        "--metric", dest="metric", default="ndcg@10", help="metric to time"
    )
    arg_parser.add_argument("--seed", dest="seed", type=int, default=0)
    add_common_options(arg_parser, argv)

    args = arg_parser.parse_args(args=argv[1:])
    configure_logging(args)
    if not 1 <= args.min_log2 <= args.max_log2:
        arg_parser.error("need 1 <= --min-log2 <= --max-log2")
    try:
        spec = ranking.MetricSpec.parse(args.metric)
    except stochrank.InputError as e:
        arg_parser.error("--metric: %s" % e)

    rows = diagnostics.bench_delta(
        [1 << e for e in range(args.min_log2, args.max_log2 + 1)],
        spec,
        seed=args.seed,
        repeats=args.repeats,
        naive_max_n=1 << args.naive_max_log2,
        naive_sample=args.naive_sample,
    )
    print(
        json.dumps(
            {"metric": str(spec), "rows": [dataclasses.asdict(r) for r in rows]},
            indent=2,
        )
    )


COMMANDS = {
    "train": stochrank_train,
    "eval": stochrank_eval,
    "gradcheck": stochrank_gradcheck,
    "synthetic": stochrank_synthetic,
    "bench": stochrank_bench,
}


def main(argv=None):
    """
    Command line utility entry point dispatching `stochrank <command> ...`
    to the stochrank-<command> executables.
    """
    argv = argv or sys.argv
    arg_parser = _arg_parser(argv, "stochrank - stochastic learning to rank")
    arg_parser.add_argument("command", choices=sorted(COMMANDS))
    arg_parser.add_argument("args", nargs=argparse.REMAINDER)
    arg_parser.add_argument(
        "--version",
        action="version",
        version="stochrank %s - %s" % (stochrank.__version__, os.path.basename(argv[0])),
    )
    args = arg_parser.parse_args(args=argv[1:])
    prog = "%s-%s" % (os.path.basename(argv[0]), args.command)
    COMMANDS[args.command]([prog] + args.args)
