"""Configuration definition."""

import logging
import os
from typing import Any

import structlog
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict
from structlog import get_logger

__all__ = ["Configuration", "config", "nlkg_logger", "configure_logging"]


def available_parallelism() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


class Configuration(BaseSettings):
    """Process-level settings for nlkg, read from ``NLKG_*`` variables."""

    name: str = Field(
        default="nlkg",
        json_schema_extra={"title": "Name of application"},
    )

    threads: int = Field(
        default_factory=available_parallelism,
        ge=1,
        validation_alias="NLKG_THREADS",
        json_schema_extra={"title": "Cap on concurrently running workers"},
    )

    log_level: str = Field(
        default="INFO",
        validation_alias="NLKG_LOG_LEVEL",
        json_schema_extra={"title": "Minimum level of emitted log events"},
    )

    log_json: bool = Field(
        default=False,
        validation_alias="NLKG_LOG_JSON",
        json_schema_extra={"title": "Render log events as JSON lines"},
    )

    output_dir: str = Field(
        default="runs",
        validation_alias="NLKG_OUTPUT_DIR",
        json_schema_extra={"title": "Default directory for run outputs"},
    )

    model_config = SettingsConfigDict(env_prefix="NLKG_", case_sensitive=False)


config = Configuration()
"""Configuration for nlkg."""


def nlkg_logger() -> Any:
    logger = get_logger()
    return logger


def configure_logging(level: str | None = None, json: bool | None = None) -> None:
    """Install the structlog processor chain used by the command line.

    Parameters
    ----------
    level : `str`, optional
        Level name, defaults to ``config.log_level``.
    json : `bool`, optional
        Use the JSON renderer, defaults to ``config.log_json``.
    """
    level_name = (level or config.log_level).upper()
    numeric_level = logging.getLevelName(level_name)
    if not isinstance(numeric_level, int):
        numeric_level = logging.INFO
    use_json = config.log_json if json is None else json
    renderer: Any = (
        structlog.processors.JSONRenderer(sort_keys=True)
        if use_json
        else structlog.dev.ConsoleRenderer(colors=False)
    )
    structlog.configure(
        processors=[
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            renderer,
        ],
        wrapper_class=structlog.make_filtering_bound_logger(numeric_level),
        cache_logger_on_first_use=False,
    )
