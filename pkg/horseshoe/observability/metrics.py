"""
Prometheus Metrics

This module defines and manages Prometheus metrics for observability.
Metrics track compositions, Newton solves, class construction and
dimension solves, plus HTTP requests when the API is served.
"""

from pathlib import Path

from prometheus_client import REGISTRY, Counter, Gauge, Histogram, write_to_textfile

# Request Metrics
request_count = Counter(
    'http_requests_total',
    'Total number of HTTP requests',
    ['method', 'endpoint', 'status_code']
)

request_duration = Histogram(
    'http_request_duration_seconds',
    'HTTP request duration in seconds',
    ['method', 'endpoint'],
    buckets=[0.001, 0.005, 0.01, 0.025, 0.05, 0.1, 0.25, 0.5, 1.0, 2.5, 5.0, 10.0]
)

# Composition Metrics
compositions = Counter(
    'compositions_total',
    'Total number of map compositions',
    ['kind', 'outcome']
)

composition_duration = Histogram(
    'composition_duration_seconds',
    'Composition duration in seconds',
    ['kind'],
    buckets=[0.0005, 0.001, 0.005, 0.01, 0.025, 0.05, 0.1, 0.25, 0.5, 1.0]
)

# Newton Metrics
newton_nodes = Counter(
    'newton_nodes_total',
    'Total number of nodes solved by Newton iterations',
    ['solver']
)

newton_failures = Counter(
    'newton_failures_total',
    'Total number of nodes where Newton failed',
    ['solver']
)

# Class Metrics
class_sweeps = Counter(
    'class_sweeps_total',
    'Total number of class extension sweeps'
)

class_elements = Gauge(
    'class_elements',
    'Number of elements stored in the most recently extended class',
    ['kind']
)

transversality_evaluations = Counter(
    'transversality_evaluations_total',
    'Base transversality evaluations by outcome',
    ['relation']
)

# Dimension Metrics
dimension_solves = Histogram(
    'dimension_solve_duration_seconds',
    'Transfer-operator dimension solve duration in seconds',
    buckets=[0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 10.0, 30.0]
)

# Error Metrics
errors = Counter(
    'horseshoe_errors_total',
    'Total number of reported errors',
    ['error_type']
)


class MetricsCollector:
    """
    Helper class for collecting metrics.
    Provides convenient methods to track metrics.
    """

    @staticmethod
    def record_request(method: str, endpoint: str, status_code: int, duration: float):
        """
        Record HTTP request metrics.

        Args:
            method: HTTP method (GET, POST, etc.)
            endpoint: API endpoint path
            status_code: HTTP status code
            duration: Request duration in seconds
        """
        request_count.labels(method=method, endpoint=endpoint, status_code=status_code).inc()
        request_duration.labels(method=method, endpoint=endpoint).observe(duration)

    @staticmethod
    def record_composition(kind: str, outcome: str, duration: float):
        """
        Record a simple or parabolic composition.

        Args:
            kind: "simple" or "parabolic"
            outcome: "ok" or the error class name
            duration: Wall time in seconds
        """
        compositions.labels(kind=kind, outcome=outcome).inc()
        composition_duration.labels(kind=kind).observe(duration)

    @staticmethod
    def record_newton(solver: str, nodes: int, failures: int):
        newton_nodes.labels(solver=solver).inc(nodes)
        if failures:
            newton_failures.labels(solver=solver).inc(failures)

    @staticmethod
    def record_sweep():
        class_sweeps.inc()

    @staticmethod
    def set_class_size(simple: int, parabolic: int):
        class_elements.labels(kind="simple").set(simple)
        class_elements.labels(kind="parabolic").set(parabolic)

    @staticmethod
    def record_relation(relation: str):
        transversality_evaluations.labels(relation=relation).inc()

    @staticmethod
    def record_dimension_solve(duration: float):
        dimension_solves.observe(duration)

    @staticmethod
    def record_error(error_type: str):
        """Record a reported error."""
        errors.labels(error_type=error_type).inc()


def write_metrics(path: Path):
    """Write the default registry in text exposition format (batch runs)."""
    write_to_textfile(str(path), REGISTRY)


# Create a global metrics collector instance
metrics = MetricsCollector()
