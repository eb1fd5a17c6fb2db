"""Configuration management for hyperflow."""

import logging
from pathlib import Path
from typing import Optional

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict
from rich.console import Console
from rich.logging import RichHandler

LOG_FORMAT = "%(asctime)s | %(levelname)-8s | %(message)s"
LOG_DATEFMT = "%Y-%m-%d %H:%M:%S"


class HyperflowSettings(BaseSettings):
    """Tolerances and runtime settings with environment variable support."""

    model_config = SettingsConfigDict(
        env_prefix="HYPERFLOW_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # Logging
    log: str = Field(default="WARNING", description="Log level (env: HYPERFLOW_LOG)")

    # Tolerances
    tol: float = Field(default=1e-10, description="Default residual tolerance")
    orientation_tol: float = Field(
        default=1e-9, description="Minimum |Pfaffian| for an orientation"
    )
    rank_tol: float = Field(default=1e-8, description="Relative singular value cutoff for ranks")
    null_space_tol: float = Field(
        default=1e-10, description="Relative singular value cutoff for the invariance null space"
    )
    fd_step: float = Field(default=1e-6, description="Central finite-difference step")

    # Integration
    dt: float = Field(default=1e-3, description="Default RK4 step")

    # Batch execution
    workers: int = Field(default=4, description="Threads used for batches of initial conditions")
    seed: int = Field(default=0, description="Seed for randomized sample points")
    detect_samples: int = Field(default=8, description="Sample points per radius group in detect")

    @property
    def log_level(self) -> int:
        """Numeric level for `log`, falling back to WARNING on unknown names."""
        level = logging.getLevelName(self.log.upper())
        return level if isinstance(level, int) else logging.WARNING

    @classmethod
    def load(cls, env_file: Optional[Path] = None) -> "HyperflowSettings":
        """Load settings from the environment and an optional .env file."""
        if env_file is not None and env_file.exists():
            return cls(_env_file=str(env_file))
        return cls()


def setup_logging(
    level: int = logging.WARNING, console: Optional[Console] = None
) -> logging.Logger:
    """Attach a rich stderr handler to the package logger.

    Safe to call repeatedly; an existing handler is reused and only its level changes.
    """
    logger = logging.getLogger("hyperflow")
    logger.setLevel(level)

    handler = next((h for h in logger.handlers if isinstance(h, RichHandler)), None)
    if handler is None:
        handler = RichHandler(
            console=console or Console(stderr=True),
            show_time=False,
            show_level=False,
            show_path=False,
        )
        handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=LOG_DATEFMT))
        logger.addHandler(handler)
    handler.setLevel(level)
    logger.propagate = False

    return logger
