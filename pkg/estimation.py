"""
Fit model parameters to a measured statistic curve by exhaustive grid search.

Every grid point is simulated with the same seed list, so the error surface is
deterministic and a target generated by the model itself is matched exactly
at its generating point.
"""

import itertools
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from channel import run_ensemble
from scenarios import ConfigError, ScenarioConfig
from stats import StatisticKind, StatisticSettings, statistic_curve

logger = logging.getLogger(__name__)

# Parameter name -> (ScenarioConfig section, field)
ESTIMABLE_PARAMETERS: Dict[str, Tuple[str, str]] = {
    "aoa_azimuth_std": ("angles", "aoa_azimuth_std"),
    "aoa_elevation_std": ("angles", "aoa_elevation_std"),
    "aod_azimuth_std": ("angles", "aod_azimuth_std"),
    "aod_elevation_std": ("angles", "aod_elevation_std"),
    "array_coherence_distance": ("evolution", "array_coherence_distance"),
    "space_coherence_distance": ("evolution", "space_coherence_distance"),
    "virtual_link_coherence": ("evolution", "virtual_link_coherence"),
}

_UNIT_RANGE = (
    StatisticKind.SPACE_CCF,
    StatisticKind.STATIONARY_INTERVAL_CCDF,
    StatisticKind.COHERENCE_BANDWIDTH_CDF,
    StatisticKind.RMS_DELAY_CCDF,
)


class TargetCurve(BaseModel):
    """Sampled reference curve of one statistic."""

    model_config = ConfigDict(frozen=True)

    kind: StatisticKind
    x: List[float] = Field(min_length=1)
    y: List[float] = Field(min_length=1)
    source: str = ""

    @model_validator(mode="after")
    def _check_points(self) -> "TargetCurve":
        if len(self.x) != len(self.y):
            raise ValueError("x and y must have the same length")
        if any(b <= a for a, b in zip(self.x, self.x[1:])):
            raise ValueError("x must be strictly increasing")
        if self.kind in _UNIT_RANGE and any(not 0.0 <= v <= 1.0 for v in self.y):
            raise ValueError(f"{self.kind.value} values must lie in [0, 1]")
        if any(v < 0 for v in self.y):
            raise ValueError("Correlation magnitudes must be non-negative")
        return self


class ParameterGrid(BaseModel):
    """Candidate values per parameter, the fixed base scenario and the seed list."""

    model_config = ConfigDict(frozen=True)

    base: ScenarioConfig
    candidates: Dict[str, List[float]]
    seeds: List[int] = Field(min_length=1)
    threshold: float = Field(gt=0, description="Stop as soon as the error reaches this level")
    duration: Optional[float] = Field(None, gt=0)
    time_step: Optional[float] = Field(None, gt=0)
    settings: Optional[StatisticSettings] = Field(
        None, description="Statistic settings, the base scenario's delay grid when unset"
    )

    @field_validator("candidates")
    @classmethod
    def _check_candidates(cls, value: Dict[str, List[float]]) -> Dict[str, List[float]]:
        if not value:
            raise ValueError("The grid needs at least one parameter")
        for name, options in value.items():
            if name not in ESTIMABLE_PARAMETERS:
                raise ValueError(
                    f"'{name}' is not estimable, choose from {', '.join(ESTIMABLE_PARAMETERS)}"
                )
            if not options:
                raise ValueError(f"No candidate values for '{name}'")
        return value

    @property
    def size(self) -> int:
        return int(np.prod([len(options) for options in self.candidates.values()]))

    def points(self) -> List[Dict[str, float]]:
        names = list(self.candidates)
        return [
            dict(zip(names, values))
            for values in itertools.product(*(self.candidates[name] for name in names))
        ]


@dataclass
class GridSearchResult:
    best_params: Dict[str, float]
    best_error: float
    table: List[Tuple[Dict[str, float], float]]
    threshold_met: bool

    @property
    def evaluated(self) -> int:
        return len(self.table)


def apply_parameters(base: ScenarioConfig, params: Dict[str, float]) -> ScenarioConfig:
    """
    Copy of base with the named parameters replaced and validated.

    Raises:
        ConfigError: If a name is not estimable
    """
    updates: Dict[str, Dict[str, float]] = {}
    for name, value in params.items():
        if name not in ESTIMABLE_PARAMETERS:
            raise ConfigError(f"Unknown parameter '{name}'")
        section, field = ESTIMABLE_PARAMETERS[name]
        updates.setdefault(section, {})[field] = value

    data = base.model_dump()
    for section, fields in updates.items():
        data[section] = {**data[section], **fields}
    return ScenarioConfig.model_validate(data)


def objective(
    params: Dict[str, float],
    target: TargetCurve,
    base: ScenarioConfig,
    seeds: Sequence[int],
    duration: Optional[float] = None,
    time_step: Optional[float] = None,
    settings: Optional[StatisticSettings] = None,
    workers: int = 1,
) -> float:
    """Mean squared difference between the simulated statistic and the target."""
    config = apply_parameters(base, params)
    settings = settings or StatisticSettings.for_scenario(config)
    ensemble = run_ensemble(config, seeds, duration, time_step, workers)
    curve = statistic_curve(target.kind, ensemble, target.x, settings)
    return float(np.mean((curve.y - np.asarray(target.y)) ** 2))


def grid_search(grid: ParameterGrid, target: TargetCurve, workers: int = 1) -> GridSearchResult:
    """
    Evaluate the objective over the grid in order.

    The search stops at the first point whose error is at or below the grid's
    threshold. Ties keep the earlier point.
    """
    table: List[Tuple[Dict[str, float], float]] = []
    best_params: Dict[str, float] = {}
    best_error = float("inf")
    points = grid.points()

    for index, params in enumerate(points, start=1):
        error = objective(
            params,
            target,
            grid.base,
            grid.seeds,
            grid.duration,
            grid.time_step,
            grid.settings,
            workers,
        )
        table.append((params, error))
        logger.info(f"Grid point {index}/{len(points)} {params}: error {error:.6g}")
        if error < best_error:
            best_params, best_error = params, error
        if error <= grid.threshold:
            logger.info(f"Threshold {grid.threshold:g} reached; stopping early")
            break

    threshold_met = best_error <= grid.threshold
    if not threshold_met:
        logger.warning(
            f"Best error {best_error:.6g} is above the threshold {grid.threshold:g}"
        )
    return GridSearchResult(best_params, best_error, table, threshold_met)
