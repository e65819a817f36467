"""
stochrank/metrics.py - prometheus metrics for training runs

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

from prometheus_client import Counter, Gauge, Histogram, start_http_server

# fmt: off
stochrank_iteration_duration_seconds = Histogram("stochrank_iteration_duration_seconds", "time spent on one boosting iteration")
stochrank_gradient_duration_seconds = Histogram("stochrank_gradient_duration_seconds", "time spent estimating the gradients of all queries in one iteration")
stochrank_iterations = Counter("stochrank_iterations", "number of boosting iterations completed")
stochrank_train_metric = Gauge("stochrank_train_metric", "mean train metric after the last iteration")
stochrank_valid_metric = Gauge("stochrank_valid_metric", "mean validation metric after the last iteration")
# fmt: on


def register_prom_metrics(metrics_port: int = 8888):
    # Start metrics endpoint for scraping
    start_http_server(metrics_port)
