import json
import logging
import logging.config
from typing import Any, Dict, Optional

from infrastructure.config.harness import harness_config

TEXT_FORMAT = "%(asctime)s %(levelname)-8s %(name)s: %(message)s"


class JsonFormatter(logging.Formatter):
    """One JSON object per line."""

    def format(self, record: logging.LogRecord) -> str:
        payload: Dict[str, Any] = {
            "time": self.formatTime(record),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }
        if record.exc_info:
            payload["exception"] = self.formatException(record.exc_info)
        return json.dumps(payload)


def logging_config(level: str, fmt: str) -> Dict[str, Any]:
    if fmt not in ("text", "json"):
        raise ValueError(f"Unknown log format {fmt!r}; expected text or json")
    formatter: Dict[str, Any] = (
        {"()": JsonFormatter} if fmt == "json" else {"format": TEXT_FORMAT}
    )
    return {
        "version": 1,
        "disable_existing_loggers": False,
        "formatters": {"default": formatter},
        "handlers": {
            "stderr": {
                "class": "logging.StreamHandler",
                "formatter": "default",
                "stream": "ext://sys.stderr",
            }
        },
        "root": {"level": level.upper(), "handlers": ["stderr"]},
    }


def configure_logging(level: Optional[str] = None, fmt: Optional[str] = None) -> None:
    logging.config.dictConfig(
        logging_config(
            level or harness_config.log_level, fmt or harness_config.log_format
        )
    )
