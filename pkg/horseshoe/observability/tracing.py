"""
OpenTelemetry Tracing

Class extension sweeps, compositions, verification checks and dimension
solves open spans, so a long batch run can be inspected stage by stage.
Spans go to an OTLP collector when one is configured, or to stderr when
`otel_console_export` is set for desk runs without a collector.
"""

import logging

from opentelemetry import trace
from opentelemetry.exporter.otlp.proto.http.trace_exporter import OTLPSpanExporter
from opentelemetry.sdk.resources import Resource
from opentelemetry.sdk.trace import TracerProvider
from opentelemetry.sdk.trace.export import BatchSpanProcessor, ConsoleSpanExporter, SimpleSpanProcessor

from horseshoe.core.config import settings

logger = logging.getLogger(__name__)

_provider = None


def setup_tracing():
    """
    Install the tracer provider once per process.

    Both the HTTP app and every CLI invocation call this; later calls
    return immediately.
    """
    global _provider
    if not settings.otel_enabled:
        logger.info("OpenTelemetry tracing is disabled")
        return
    if _provider is not None:
        return

    try:
        provider = TracerProvider(resource=Resource.create({
            "service.name": settings.otel_service_name,
            "service.version": settings.service_version,
            "service.namespace": settings.environment,
            "horseshoe.threads": settings.workers,
        }))
        exporters = []
        if settings.otel_exporter_otlp_endpoint:
            provider.add_span_processor(BatchSpanProcessor(
                OTLPSpanExporter(endpoint=settings.otel_exporter_otlp_endpoint)
            ))
            exporters.append(f"otlp {settings.otel_exporter_otlp_endpoint}")
        if settings.otel_console_export:
            provider.add_span_processor(SimpleSpanProcessor(ConsoleSpanExporter()))
            exporters.append("console")
        trace.set_tracer_provider(provider)
        _provider = provider
        logger.info(f"OpenTelemetry tracing enabled, exporters: {exporters or 'none'}")
    except Exception as e:
        logger.warning(f"Failed to set up OpenTelemetry tracing: {e}. Tracing disabled.")


def flush_tracing():
    """Flush pending spans; the CLI calls this before exiting."""
    if _provider is not None:
        _provider.force_flush()


def get_tracer(name: str = None):
    """
    Tracer for a service module.

    Returns:
        A no-op tracer when tracing is disabled, so call sites never branch
    """
    if not settings.otel_enabled:
        return trace.NoOpTracer()
    return trace.get_tracer(name or __name__)


def mark_error(span, e: Exception):
    """Set ERROR status on a span and attach the exception."""
    span.set_status(trace.Status(trace.StatusCode.ERROR, f"{type(e).__name__}: {e}"))
    span.record_exception(e)
