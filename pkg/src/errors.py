"""
Exception hierarchy shared by every stage, plus the stage-labelling helper.

Each error class carries the process exit code the CLI reports for it.
"""

import contextlib
import functools
import logging
import traceback
from typing import Any, Callable, Dict, Iterator, Optional

logger = logging.getLogger(__name__)


class CarolError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1

    def __init__(self, message: str, stage: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.stage = stage

    def to_dict(self) -> Dict[str, Any]:
        return {
            'error': self.__class__.__name__,
            'message': self.message,
            'stage': self.stage,
            'exit_code': self.exit_code,
        }


class ConfigError(CarolError, ValueError):
    """Invalid configuration value or command-line usage."""

    exit_code = 2


class DataError(CarolError, ValueError):
    """Corpus, dataset or input-vector problem."""

    exit_code = 3


class DimensionMismatchError(DataError):
    """Two operands (or an input and a layer) disagree on dimension."""


class ZeroNormError(DataError):
    """Cosine distance requested for a zero-norm vector."""


class CacheMismatchError(CarolError, ValueError):
    """Backward pass called with a cache from a different state or network."""


class DivergenceError(CarolError, ArithmeticError):
    """A loss value or gradient became NaN or infinite."""

    exit_code = 4

    def __init__(self, message: str, component: Optional[str] = None,
                 breakdown: Optional[Any] = None, stage: Optional[str] = None):
        super().__init__(message, stage=stage)
        self.component = component
        self.breakdown = breakdown

    def to_dict(self) -> Dict[str, Any]:
        result = super().to_dict()
        result['component'] = self.component
        if self.breakdown is not None and hasattr(self.breakdown, 'to_dict'):
            result['breakdown'] = self.breakdown.to_dict()
        return result


@contextlib.contextmanager
def stage_errors(stage: str) -> Iterator[None]:
    """
    Attach a stage label to any error raised inside the block.

    Package errors keep their type and gain ``stage`` if they have none yet;
    OS-level IO failures are converted into DataError with the path included.

    Args:
        stage: Human-readable stage name (e.g. "train_encoder")
    """
    try:
        yield
    except CarolError as e:
        if e.stage is None:
            e.stage = stage
        logger.error(f"Error in stage {stage}: {e.message}")
        logger.debug(f"Traceback: {traceback.format_exc()}")
        raise
    except OSError as e:
        path = getattr(e, 'filename', None)
        logger.error(f"IO error in stage {stage}: {e}")
        raise DataError(f"{e.strerror or e} (path: {path})", stage=stage) from e


def error_handler(stage: str) -> Callable:
    """
    Decorator form of :func:`stage_errors`.

    Args:
        stage: Stage label attached to errors raised by the wrapped function

    Returns:
        Decorator
    """
    def decorator(func: Callable) -> Callable:
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            with stage_errors(stage):
                return func(*args, **kwargs)
        return wrapper
    return decorator
