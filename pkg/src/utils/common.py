"""
Common utilities - logging setup, output directories, CSV artifacts and
stage timing shared by the pipeline and the CLI.
"""

import functools
import logging
import os
import time
from typing import Callable, Iterable, Optional, Union

import pandas as pd

# ----------------------
# Logging and Directories
# ----------------------

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
PACKAGE_LOGGER = 'src'
CSV_FLOAT_FORMAT = '%.17g'


def setup_logging(log_file: Optional[str] = None, level: Union[int, str] = logging.INFO,
                  logger_name: str = PACKAGE_LOGGER) -> logging.Logger:
    """
    Configure the package logger: one stderr handler plus an optional file.

    Calling it again replaces the handlers, so repeated CLI invocations in
    one process do not duplicate output.

    Args:
        log_file: Optional log file; its directory is created on demand
        level: Level as a number or a name such as "DEBUG"
        logger_name: Logger to configure

    Returns:
        The configured logger
    """
    if isinstance(level, str):
        level = logging.getLevelName(level.upper())
    package_logger = logging.getLogger(logger_name)
    package_logger.setLevel(level)
    for handler in list(package_logger.handlers):
        package_logger.removeHandler(handler)
        handler.close()

    formatter = logging.Formatter(LOG_FORMAT)
    handlers = [logging.StreamHandler()]
    if log_file:
        create_directories([os.path.dirname(log_file)])
        handlers.append(logging.FileHandler(log_file, encoding='utf-8'))
    for handler in handlers:
        handler.setFormatter(formatter)
        package_logger.addHandler(handler)
    return package_logger


def create_directories(directories: Iterable[str]) -> None:
    """Create each directory (and parents); empty paths mean the working directory."""
    for directory in directories:
        if directory:
            os.makedirs(directory, exist_ok=True)


# ----------------------
# Artifacts
# ----------------------

def save_data(df: pd.DataFrame, output_path: str, **kwargs) -> str:
    """
    Write a run artifact as CSV without the index.

    Floats use 17 significant digits: values read back with
    ``float_precision='round_trip'`` are bit-identical and reruns produce
    byte-identical files.

    Args:
        df: Table to write
        output_path: CSV path; the parent directory is created
        **kwargs: Overrides for ``DataFrame.to_csv``

    Returns:
        The output path
    """
    create_directories([os.path.dirname(output_path)])
    kwargs.setdefault('index', False)
    kwargs.setdefault('float_format', CSV_FLOAT_FORMAT)
    df.to_csv(output_path, **kwargs)
    logging.getLogger(PACKAGE_LOGGER).info(f"Wrote {len(df)} rows to {output_path}")
    return output_path


# ----------------------
# Timing
# ----------------------

def timed(func: Callable) -> Callable:
    """Log the wall-clock duration of a pipeline stage on its module's logger."""
    stage_logger = logging.getLogger(func.__module__)

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        started = time.perf_counter()
        try:
            return func(*args, **kwargs)
        finally:
            stage_logger.info(f"{func.__name__} finished in {time.perf_counter() - started:.2f}s")
    return wrapper
