import logging
import sys
from typing import TextIO

from app.errors import ConfigError

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s %(message)s"


def configure_logging(level: str = "INFO", stream: TextIO | None = None) -> None:
    """
    Root logger setup shared by the results service (stdout) and the CLI,
    which passes stderr because its stdout carries JSON.
    """
    numeric = logging.getLevelName(level.upper())
    if not isinstance(numeric, int):
        raise ConfigError(f"unknown log level {level!r}")
    logging.basicConfig(
        level=numeric,
        format=LOG_FORMAT,
        datefmt="%Y-%m-%d %H:%M:%S",
        stream=sys.stdout if stream is None else stream,
    )
