"""Configuration loader for leebounds runs."""

import json
import os
from dataclasses import dataclass, fields
from typing import Any, Dict, Optional, Tuple
import logging

from errors import BadDimension, BadLambda, ConfigError

# Set up logging
logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

SPACES = (
    "compositional",
    "compositional-zeros",
    "distribution",
    "interval",
    "network",
    "spd",
    "scalar",
)
SCHEMES = ("auto", "equal-angle", "fibonacci", "gaussian")
VARIANCE_MODES = ("bootstrap", "analytic-plugin")
DESIGNS = ("atus-like", "sleep-like", "custom")

# 0.10, 0.15, ..., 0.90
DEFAULT_EVAL_GRID = tuple(round(0.10 + 0.05 * j, 2) for j in range(17))


@dataclass(frozen=True)
class RunConfig:
    """Validated settings of one estimation or simulation run."""

    space: str = "compositional"
    eval_grid: Tuple[float, ...] = DEFAULT_EVAL_GRID
    alpha: float = 0.05
    bootstrap: int = 300
    variance_bootstrap: int = 200
    variance_mode: str = "bootstrap"
    directions: Optional[int] = None
    scheme: str = "auto"
    seed: int = 0
    method: str = "fractional"
    covariate: Optional[str] = None
    lam: Optional[float] = None
    sphere_mu: Optional[Tuple[float, ...]] = None
    spd_mode: str = "log"
    spd_power: float = 0.5
    max_weight: Optional[float] = None
    threads: int = 1
    geodesic_samples: int = 50
    t_grid: Tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    share_samples: int = 2000
    design: str = "atus-like"
    n: int = 1397
    retention: Optional[Tuple[float, float]] = None
    effect: float = 0.0
    n_large: int = 1_000_000

    def __post_init__(self):
        for name in ("eval_grid", "t_grid", "sphere_mu", "retention"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, tuple(float(v) for v in value))
        if self.space not in SPACES:
            raise ConfigError(f"unknown space {self.space!r}; choose from {SPACES}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown direction scheme {self.scheme!r}")
        if self.variance_mode not in VARIANCE_MODES:
            raise ConfigError(f"unknown variance mode {self.variance_mode!r}")
        if self.design not in DESIGNS:
            raise ConfigError(f"unknown design {self.design!r}")
        if self.method not in ("fractional", "indicator"):
            raise ConfigError(f"unknown trimming method {self.method!r}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.bootstrap < 1:
            raise ConfigError("bootstrap must be at least 1")
        if self.variance_bootstrap < 2:
            raise ConfigError("variance_bootstrap must be at least 2")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if self.n < 2 or self.n_large < 2:
            raise ConfigError("sample sizes must be at least 2")
        if self.directions is not None and self.directions < 2:
            raise BadDimension(f"directions must be at least 2, got {self.directions}")
        if self.lam is not None and not 0.0 <= self.lam < 1.0:
            raise BadLambda(f"contamination share {self.lam} outside [0, 1)")
        if self.space == "distribution" and len(self.eval_grid) < 2:
            raise ConfigError("distribution space needs at least two evaluation points")
        if self.retention is not None:
            if len(self.retention) != 2 or not all(0.0 < r <= 1.0 for r in self.retention):
                raise ConfigError("retention must be two probabilities in (0, 1]")
        if any(not 0.0 <= t <= 1.0 for t in self.t_grid):
            raise ConfigError("t_grid values must lie in [0, 1]")


class ConfigLoader:
    """Load and manage run configuration."""

    def __init__(self, config_path: str = "config/config.json"):
        """
        Initialize config loader.

        Args:
            config_path: Path to configuration JSON file
        """
        self.config_path = config_path
        self.config = self.load_config()

    def load_config(self) -> Dict[str, Any]:
        """
        Load configuration from JSON file.

        Returns:
            Dictionary with configuration, defaults when the file is missing

        Raises:
            ConfigError: If the file exists but cannot be read or parsed
        """
        if not os.path.exists(self.config_path):
            return self.get_default_config()

        try:
            with open(self.config_path, "r", encoding="utf-8") as f:
                config = json.load(f)
        except (json.JSONDecodeError, IOError) as e:
            logger.error(f"Error loading config: {e}")
            raise ConfigError(f"cannot read {self.config_path}: {e}") from e
        if not isinstance(config, dict):
            raise ConfigError(f"{self.config_path} must hold a JSON object")
        return {**self.get_default_config(), **config}

    def get_default_config(self) -> Dict[str, Any]:
        """
        Get default configuration.

        Returns:
            Default configuration dictionary
        """
        return {
            "space": "compositional",
            "alpha": 0.05,
            "bootstrap": 300,
            "variance_bootstrap": 200,
            "variance_mode": "bootstrap",
            "scheme": "auto",
            "seed": 0,
            "threads": 1,
        }

    def get(self, key: str, default: Any = None) -> Any:
        """
        Get configuration value.

        Args:
            key: Configuration key
            default: Default value if key not found

        Returns:
            Configuration value
        """
        return self.config.get(key, default)

    def reload(self) -> None:
        """Reload configuration from file."""
        self.config = self.load_config()

    def run_config(self, **overrides: Any) -> RunConfig:
        """
        Build a validated RunConfig; non-None overrides win over file values.

        Raises:
            ConfigError: On unknown keys or invalid values
        """
        known = {f.name for f in fields(RunConfig)}
        merged = {k: v for k, v in self.config.items() if not k.startswith("_")}
        merged.update({k: v for k, v in overrides.items() if v is not None})
        unknown = sorted(set(merged) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        try:
            return RunConfig(**merged)
        except ConfigError:
            raise
        except (TypeError, ValueError) as e:
            raise ConfigError(f"malformed configuration value: {e}") from e
