"""
Run configuration - the RunConfig dataclass and its flat JSON config file.

A config file is a flat JSON object whose keys are RunConfig field names.
Missing keys take the values in DEFAULT_CONFIG; unknown keys are rejected.
"""

import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

from dotenv import load_dotenv

from src.analysis.distances import DistanceKind
from src.errors import ConfigError

logger = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = 'CAROL_OUTPUT_ROOT'
DEFAULT_OUTPUT_ROOT = 'data/runs'


@dataclass(frozen=True)
class RunConfig:
    """
    Every knob of one experiment run.

    Defaults follow the published setup where it states one: n=3 per-class
    contrastive sample, reconstruction batch of 3, five encoder epochs, k=5
    neighbours for kDN and a {16, 64, 128} hidden-width grid chosen by
    5-fold cross-validation.
    """
    c: float = 0.5
    distance: str = 'euclidean'
    n: int = 3
    recon_batch: int = 3
    epochs: int = 5
    lr: float = 1e-3
    deletion_ratio: float = 0.6
    feat_dim: int = 1024
    emb_dim: int = 64
    seed: int = 0
    train_path: Optional[str] = None
    test_path: Optional[str] = None
    test_frac: float = 0.2
    k: int = 5
    overlap_distance: str = 'euclidean'
    hidden_grid: Tuple[int, ...] = (16, 64, 128)
    cv_folds: int = 5
    clf_epochs: int = 60
    clf_lr: float = 5e-3
    clf_batch: int = 32
    output_dir: Optional[str] = None

    def __post_init__(self):
        # lists arriving from JSON
        object.__setattr__(self, 'hidden_grid', tuple(int(h) for h in self.hidden_grid))
        validate_run_config(self)

    @property
    def distance_kind(self) -> DistanceKind:
        return DistanceKind.from_name(self.distance)

    @property
    def overlap_distance_kind(self) -> DistanceKind:
        return DistanceKind.from_name(self.overlap_distance)

    def replace(self, **changes) -> 'RunConfig':
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        result = dataclasses.asdict(self)
        result['hidden_grid'] = list(self.hidden_grid)
        return result

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> 'RunConfig':
        unknown = sorted(set(values) - set(field_names()))
        if unknown:
            raise ConfigError(f"Unknown configuration keys: {unknown}")
        try:
            return cls(**values)
        except TypeError as e:
            raise ConfigError(f"Invalid configuration: {e}") from e


def field_names() -> Tuple[str, ...]:
    return tuple(f.name for f in dataclasses.fields(RunConfig))


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


def validate_run_config(cfg: RunConfig) -> None:
    """
    Validate every field of a RunConfig.

    Args:
        cfg: Configuration to validate

    Raises:
        ConfigError: On the first invalid field
    """
    for name in ('n', 'recon_batch', 'epochs', 'feat_dim', 'emb_dim', 'k',
                 'cv_folds', 'clf_epochs', 'clf_batch', 'seed'):
        value = getattr(cfg, name)
        _require(isinstance(value, int) and not isinstance(value, bool),
                 f"{name} must be an integer, got {value!r}")

    _require(isinstance(cfg.c, (int, float)) and 0.0 <= cfg.c <= 1.0,
             f"c must lie in [0, 1], got {cfg.c!r}")
    _require(cfg.n >= 1, f"n must be >= 1, got {cfg.n}")
    _require(cfg.recon_batch >= 1, f"recon_batch must be >= 1, got {cfg.recon_batch}")
    _require(cfg.epochs >= 1, f"epochs must be >= 1, got {cfg.epochs}")
    _require(cfg.lr > 0, f"lr must be > 0, got {cfg.lr}")
    _require(0.0 <= cfg.deletion_ratio < 1.0,
             f"deletion_ratio must lie in [0, 1), got {cfg.deletion_ratio}")
    _require(cfg.feat_dim > 0 and cfg.emb_dim > 0, "feat_dim and emb_dim must be > 0")
    _require(cfg.seed >= 0, f"seed must be >= 0, got {cfg.seed}")
    _require(0.0 < cfg.test_frac < 1.0, f"test_frac must lie in (0, 1), got {cfg.test_frac}")
    _require(cfg.k >= 1, f"k must be >= 1, got {cfg.k}")
    _require(len(cfg.hidden_grid) > 0 and all(h > 0 for h in cfg.hidden_grid),
             f"hidden_grid must hold positive widths, got {cfg.hidden_grid}")
    _require(cfg.cv_folds >= 2, f"cv_folds must be >= 2, got {cfg.cv_folds}")
    _require(cfg.clf_epochs >= 1 and cfg.clf_batch >= 1, "classifier epochs/batch must be >= 1")
    _require(cfg.clf_lr > 0, f"clf_lr must be > 0, got {cfg.clf_lr}")

    # raises ConfigError for unknown names
    DistanceKind.from_name(cfg.distance)
    DistanceKind.from_name(cfg.overlap_distance)


DEFAULT_CONFIG: Dict[str, Any] = RunConfig().to_dict()


def load_config(config_path: str, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Load and validate a configuration file.

    Args:
        config_path: Path to the JSON configuration file
        overrides: Values (e.g. from CLI flags) applied over the file

    Returns:
        Validated RunConfig

    Raises:
        ConfigError: If the file is missing, not valid JSON or holds invalid values
    """
    if not os.path.exists(config_path):
        logger.error(f"Configuration file not found: {config_path}")
        raise ConfigError(f"Configuration file not found: {config_path}")

    try:
        with open(config_path, 'r', encoding='utf-8') as f:
            raw = json.load(f)
    except json.JSONDecodeError as e:
        logger.error(f"Invalid JSON in configuration file: {e}")
        raise ConfigError(f"Invalid JSON in configuration file {config_path}: {e}") from e

    if not isinstance(raw, dict):
        raise ConfigError(f"Configuration file {config_path} must hold a JSON object")

    cfg = resolve_config(raw, overrides)
    logger.info(f"Loaded and validated configuration from {config_path}")
    return cfg


def resolve_config(values: Optional[Dict[str, Any]] = None,
                   overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Merge values over the defaults and build a validated RunConfig.

    Args:
        values: Base values (e.g. parsed config file)
        overrides: Values applied last (e.g. CLI flags); None entries are ignored

    Returns:
        Validated RunConfig
    """
    merged = dict(DEFAULT_CONFIG)
    for source in (values or {}, overrides or {}):
        unknown = sorted(set(source) - set(merged))
        if unknown:
            raise ConfigError(f"Unknown configuration keys: {unknown}")
        merged.update({k: v for k, v in source.items() if v is not None})

    if merged.get('output_dir') is None:
        merged['output_dir'] = default_output_root()
    return RunConfig.from_dict(merged)


def save_config(cfg: RunConfig, output_path: str) -> str:
    """
    Save a configuration as sorted, indented JSON.

    Args:
        cfg: Configuration to save
        output_path: Destination path

    Returns:
        The output path
    """
    output_dir = os.path.dirname(output_path)
    if output_dir:
        os.makedirs(output_dir, exist_ok=True)
    with open(output_path, 'w', encoding='utf-8') as f:
        json.dump(cfg.to_dict(), f, indent=2, sort_keys=True)
        f.write('\n')
    logger.info(f"Saved configuration file to {output_path}")
    return output_path


def default_output_root() -> str:
    """Output root from CAROL_OUTPUT_ROOT (a .env file is honoured), else data/runs."""
    load_dotenv()
    return os.getenv(OUTPUT_ROOT_ENV, DEFAULT_OUTPUT_ROOT)


def format_config(cfg: RunConfig) -> str:
    """Resolved config as stable ``key=value`` lines, one per field."""
    lines = []
    for name, value in cfg.to_dict().items():
        if isinstance(value, list):
            value = ','.join(str(v) for v in value)
        lines.append(f"{name}={value}")
    return '\n'.join(lines)
