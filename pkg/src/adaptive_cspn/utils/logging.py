"""Logging utilities for the package."""

from __future__ import annotations

import logging
import os
from typing import Optional

LOG_LEVEL_ENV = "ADAPTIVE_CSPN_LOG_LEVEL"
LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s - %(message)s"


def setup_logging(level: str = "INFO", log_file: Optional[str] = None) -> None:
    """配置根日志记录器；环境变量 ADAPTIVE_CSPN_LOG_LEVEL 优先于参数。"""
    level = os.getenv(LOG_LEVEL_ENV) or level
    handlers = [logging.StreamHandler()]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format=LOG_FORMAT,
        handlers=handlers,
    )
