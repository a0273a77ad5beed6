"""
Logging configuration for FlattenQuant
Structured logging through structlog, JSON formatting and optional file rotation
"""

import logging
import logging.handlers
import sys
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional

import structlog
from pythonjsonlogger import jsonlogger

from flattenquant.core.config import Settings, get_settings


class CustomJsonFormatter(jsonlogger.JsonFormatter):
    """JSON formatter that stamps every record with service fields"""

    def __init__(self, *args: Any, settings: Optional[Settings] = None, **kwargs: Any) -> None:
        super().__init__(*args, **kwargs)
        self._settings = settings or get_settings()

    def add_fields(self, log_record: Dict[str, Any], record: logging.LogRecord, message_dict: Dict[str, Any]) -> None:
        """Add custom fields to the log record"""
        super().add_fields(log_record, record, message_dict)

        if not log_record.get("timestamp"):
            log_record["timestamp"] = datetime.now().isoformat()

        if not log_record.get("level"):
            log_record["level"] = record.levelname

        log_record["service"] = self._settings.app_name
        log_record["version"] = self._settings.app_version
        log_record["process_id"] = record.process

        if record.module:
            log_record["module"] = record.module


def setup_logging(level: Optional[str] = None, log_format: Optional[str] = None) -> None:
    """
    Configure the root logger and structlog

    Args:
        level: Overrides the settings log level (CLI --log-level)
        log_format: Overrides the settings log format (CLI --log-format)
    """
    settings = get_settings()
    level_name = (level or settings.log_level).upper()
    fmt = (log_format or settings.log_format).lower()

    root_logger = logging.getLogger()
    root_logger.setLevel(getattr(logging, level_name))
    root_logger.handlers.clear()

    # stderr keeps stdout free for artifacts
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(getattr(logging, level_name))
    if fmt == "json":
        console_handler.setFormatter(CustomJsonFormatter("%(timestamp)s %(level)s %(name)s %(message)s"))
    else:
        console_handler.setFormatter(logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s"))
    root_logger.addHandler(console_handler)

    if settings.log_file_path:
        Path(settings.log_file_path).parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.handlers.RotatingFileHandler(
            settings.log_file_path,
            maxBytes=50 * 1024 * 1024,
            backupCount=3,
            encoding="utf-8",
        )
        file_handler.setLevel(getattr(logging, level_name))
        file_handler.setFormatter(CustomJsonFormatter("%(timestamp)s %(levelname)s %(name)s %(message)s"))
        root_logger.addHandler(file_handler)

    renderer = structlog.processors.JSONRenderer() if fmt == "json" else structlog.dev.ConsoleRenderer(colors=False)
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            renderer,
        ],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )


def get_logger(name: str) -> structlog.stdlib.BoundLogger:
    """Get a structured logger instance"""
    return structlog.get_logger(name)


def log_stage(stage: str, layer: str, duration: float, **details: Any) -> None:
    """Log completion of one pipeline stage for one layer"""
    logger = get_logger("pipeline")
    logger.debug(
        "Stage completed",
        stage=stage,
        layer=layer,
        duration_ms=round(duration * 1000, 2),
        **details,
    )


def log_layer_summary(layer: str, mode: str, bits: int, details: Dict[str, Any]) -> None:
    """Log the decisions taken for a quantized layer"""
    logger = get_logger("pipeline")
    logger.info("Layer quantized", layer=layer, mode=mode, bits=bits, **details)


def log_saturation(layer: str, events: int, capacity_channels: int) -> None:
    """Log live activations that exceeded the calibrated flatten capacity"""
    if events == 0:
        return
    logger = get_logger("inference")
    logger.warning(
        "Activation saturation",
        layer=layer,
        events=events,
        channels=capacity_channels,
    )
