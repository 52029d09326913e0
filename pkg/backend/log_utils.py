# backend/log_utils.py
import logging
import sys

import structlog

_CONFIGURED = False


def configure_logging(level="INFO", stream=None):
    """Route structlog events to stderr (stdout is reserved for CSV output)."""
    global _CONFIGURED
    stream = stream or sys.stderr
    structlog.configure(
        processors=[
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="%H:%M:%S"),
            structlog.dev.ConsoleRenderer(colors=False),
        ],
        wrapper_class=structlog.make_filtering_bound_logger(
            logging.getLevelName(str(level).upper())
        ),
        logger_factory=structlog.PrintLoggerFactory(file=stream),
        cache_logger_on_first_use=False,
    )
    _CONFIGURED = True


def get_logger(name=None):
    if not _CONFIGURED:
        configure_logging()
    # lazy proxy: picks up a later configure_logging call
    return structlog.get_logger(module=name) if name else structlog.get_logger()
