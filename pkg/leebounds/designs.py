"""Synthetic selection designs used by simulations and tests."""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.special import softmax

from config_loader import RunConfig
from data_io import RawDataset
from errors import ConfigError
from selection_core import TrimFraction, random_stream

logger = logging.getLogger(__name__)

OUTCOME_STREAM = 11
ASSIGN_STREAM = 12
SELECT_STREAM = 13

DEFAULT_RETENTION = {
    "atus-like": (0.90, 0.85),
    "sleep-like": (0.893, 0.875),
    "custom": (0.90, 0.85),
}
DESIGN_SPACES = {
    "atus-like": "compositional",
    "sleep-like": "distribution",
    "custom": "scalar",
}


@dataclass(frozen=True)
class DesignSpec:
    """
    A randomized experiment with arm-specific outcome retention.

    ``retention`` is (P(S=1 | D=1), P(S=1 | D=0)). ``effect`` shifts treated
    outcomes: the first log-ratio for atus-like, the location for sleep-like
    and custom designs.
    """

    name: str = "atus-like"
    n: int = 1397
    retention: Optional[Tuple[float, float]] = None
    effect: float = 0.0
    monotone: bool = True
    composition_center: Tuple[float, ...] = (0.63, 0.295, 0.075)
    composition_scale: float = 0.35
    draws: int = 20
    sleep_mean: float = 7.0
    sleep_between_sd: float = 0.8
    sleep_within_sd: float = 1.0
    scalar_mean: float = 0.0
    scalar_sd: float = 1.0

    def __post_init__(self):
        if self.name not in DESIGN_SPACES:
            raise ConfigError(f"unknown design {self.name!r}")
        if self.retention is None:
            object.__setattr__(self, "retention", DEFAULT_RETENTION[self.name])
        treated, control = self.retention
        if not (0.0 < treated <= 1.0 and 0.0 < control <= 1.0):
            raise ConfigError(f"retentions {self.retention} must lie in (0, 1]")
        if self.monotone and treated < control:
            raise ConfigError("treated retention must be at least the control retention")
        if self.n < 2 or self.draws < 1:
            raise ConfigError("design needs n >= 2 units and at least one draw")

    @property
    def space(self) -> str:
        return DESIGN_SPACES[self.name]

    @property
    def true_p(self) -> TrimFraction:
        treated, control = self.retention
        return TrimFraction(min(1.0, control / treated))

    @classmethod
    def from_config(cls, config: RunConfig, n: Optional[int] = None) -> "DesignSpec":
        return cls(
            name=config.design,
            n=config.n if n is None else n,
            retention=config.retention,
            effect=config.effect,
        )


def _compositions(spec: DesignSpec, treated: np.ndarray, rng) -> np.ndarray:
    center = np.log(np.asarray(spec.composition_center, dtype=float))
    logits = center + spec.composition_scale * rng.standard_normal((spec.n, center.size))
    logits[:, 0] += spec.effect * treated
    return softmax(logits, axis=1)


def _nightly_draws(spec: DesignSpec, treated: np.ndarray, rng) -> np.ndarray:
    means = spec.sleep_mean + spec.effect * treated
    means = means + spec.sleep_between_sd * rng.standard_normal(spec.n)
    return means[:, None] + spec.sleep_within_sd * rng.standard_normal((spec.n, spec.draws))


def generate_design(spec: DesignSpec, seed: int) -> RawDataset:
    """
    Draw one dataset from a design.

    Outcomes, assignment and selection come from separate Philox substreams,
    so two specs that differ only in retention share outcomes and assignment
    under the same seed, and units kept at the lower retention are also kept
    at the higher one.
    """
    assign_rng = random_stream(seed, ASSIGN_STREAM)
    treated = assign_rng.random(spec.n) < 0.5
    outcome_rng = random_stream(seed, OUTCOME_STREAM)
    if spec.name == "atus-like":
        values = _compositions(spec, treated, outcome_rng)
    elif spec.name == "sleep-like":
        values = _nightly_draws(spec, treated, outcome_rng)
    else:
        values = (
            spec.scalar_mean
            + spec.effect * treated
            + spec.scalar_sd * outcome_rng.standard_normal(spec.n)
        )[:, None]
    uniforms = random_stream(seed, SELECT_STREAM).random(spec.n)
    selected = uniforms < np.where(treated, spec.retention[0], spec.retention[1])

    logger.debug(
        f"Generated {spec.name} design: n={spec.n}, "
        f"{int(selected.sum())} selected, seed={seed}"
    )
    return RawDataset(
        tuple(f"u{i + 1}" for i in range(spec.n)),
        treated,
        selected,
        tuple(values[i].copy() if selected[i] else None for i in range(spec.n)),
    )
