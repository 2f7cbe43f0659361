# utils/logger.py
"""
Centralized logger utility for ThermalSR.
Provides a standardized logging setup accessible across modules.
"""

import logging
import os

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def log_file() -> str:
    """Log file path from LOG_FILE (default thermalsr.log); parent dirs are created."""
    path = os.getenv("LOG_FILE", "thermalsr.log")
    if os.path.dirname(path):
        os.makedirs(os.path.dirname(path), exist_ok=True)
    return path


def log_level(verbose: bool = False) -> int:
    """DEBUG when verbose, else THERMALSR_LOG_LEVEL (default INFO)."""
    if verbose:
        return logging.DEBUG
    name = os.getenv("THERMALSR_LOG_LEVEL", "INFO").upper()
    return getattr(logging, name, logging.INFO)


def configure_logging(verbose: bool = False) -> None:
    """Root configuration used by the CLI: file + console, shared format."""
    logging.basicConfig(
        level=log_level(verbose),
        format=LOG_FORMAT,
        handlers=[logging.FileHandler(log_file()), logging.StreamHandler()],
        force=True,
    )

