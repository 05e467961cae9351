"""
Scenario configuration, presets and model simplification switches.

Configurations are frozen pydantic models stored as JSON files. Presets hold the
parameterizations of the massive MIMO, HST, V2V and mmWave channel models.
"""

import logging
import math
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from clusters import AngleParams, EvolutionParams
from geometry import (
    DEFAULT_ROTATION,
    SPEED_OF_LIGHT,
    AntennaArray,
    Vector3,
    cube_layout,
    linear_layout,
    optional_pattern,
    planar_layout,
)

logger = logging.getLogger(__name__)

_DEFAULT_ROTATIONS = (DEFAULT_ROTATION, DEFAULT_ROTATION, DEFAULT_ROTATION)

# Log10 delay spread statistics and delay scaling of the virtual links
URBAN_DELAYS = {"log_delay_spread_mean": -6.63, "log_delay_spread_std": 0.32, "delay_scaling": 2.3}
INDOOR_OFFICE_DELAYS = {
    "log_delay_spread_mean": -7.60,
    "log_delay_spread_std": 0.19,
    "delay_scaling": 2.4,
}

# Mean cluster delays the virtual-delay scale is calibrated to
URBAN_MEAN_DELAY = 930e-9
INDOOR_MEAN_DELAY = 305e-9


class ConfigError(ValueError):
    """Raised for unknown preset, switch or statistic names."""


class ArrayConfig(BaseModel):
    """Layout, orientation, motion and element pattern of one antenna array."""

    model_config = ConfigDict(frozen=True)

    num_elements: int = Field(2, ge=1)
    layout: Literal["linear", "planar", "cube"] = "linear"
    spacing_wavelengths: float = Field(0.5, gt=0, description="element spacing in wavelengths")
    broadside_azimuth: float = 0.0
    broadside_elevation: float = 0.0
    rotation_angles: Tuple[float, float, float] = _DEFAULT_ROTATIONS
    velocity: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    pattern: str = Field(
        "omnidirectional",
        description="omnidirectional, half_wave_dipole or a path to a pattern table",
    )

    @model_validator(mode="after")
    def _check_layout(self) -> "ArrayConfig":
        if self.layout == "cube" and round(self.num_elements ** (1 / 3)) ** 3 != self.num_elements:
            raise ValueError(f"A cube layout needs a cubic element count, got {self.num_elements}")
        return self

    @property
    def speed(self) -> float:
        return math.sqrt(sum(v * v for v in self.velocity))

    def build(self, center: Vector3, wavelength: float) -> AntennaArray:
        spacing = self.spacing_wavelengths * wavelength
        if self.layout == "linear":
            positions = linear_layout(self.num_elements, spacing)
        elif self.layout == "planar":
            rows = _largest_divisor_up_to_root(self.num_elements)
            positions = planar_layout(rows, self.num_elements // rows, spacing)
        else:
            positions = cube_layout(round(self.num_elements ** (1 / 3)), spacing)

        return AntennaArray(
            element_positions=positions,
            center=center,
            broadside_azimuth=self.broadside_azimuth,
            broadside_elevation=self.broadside_elevation,
            rotation_angles=self.rotation_angles,
            velocity=Vector3(*self.velocity),
            element_pattern=optional_pattern(self.pattern),
        )


def _largest_divisor_up_to_root(count: int) -> int:
    return max(d for d in range(1, math.isqrt(count) + 1) if count % d == 0)


class ModelSwitches(BaseModel):
    """Evolution features that can be disabled to obtain reduced models."""

    model_config = ConfigDict(frozen=True)

    array_evolution: bool = True
    time_evolution: bool = True
    power_evolution: bool = True
    power_exponent: float = Field(2.0, gt=1, description="eta of the inverse power law")


class ScenarioConfig(BaseModel):
    """Complete parameterization of one channel scenario."""

    model_config = ConfigDict(frozen=True)

    name: str
    description: str = ""
    carrier_frequency: float = Field(gt=0, description="Hz")
    distance: float = Field(gt=0, description="initial Tx-Rx array center distance D, meters")
    rx: ArrayConfig = ArrayConfig()
    tx: ArrayConfig = ArrayConfig()
    evolution: EvolutionParams = EvolutionParams()
    angles: AngleParams = AngleParams()
    rician_factor: float = Field(0.0, ge=0, description="K, linear")
    cross_polarization_ratio: float = Field(0.0, ge=0, description="kappa, linear")
    planar: bool = Field(False, description="2D model: every vector stays in the x-y plane")
    duration: float = Field(1.0, gt=0, description="seconds")
    time_step: float = Field(1e-3, gt=0, description="seconds")
    delay_resolution: float = Field(
        5e-9, gt=0, description="PDP delay grid of the stationarity statistic, seconds"
    )
    seed: int = 0
    switches: ModelSwitches = ModelSwitches()

    @model_validator(mode="after")
    def _check_planar(self) -> "ScenarioConfig":
        if not self.planar:
            return self
        elevations = [
            self.angles.aoa_elevation_mean or 0.0,
            self.angles.aoa_elevation_std,
            self.angles.aod_elevation_mean or 0.0,
            self.angles.aod_elevation_std,
            self.rx.broadside_elevation,
            self.tx.broadside_elevation,
            self.rx.velocity[2],
            self.tx.velocity[2],
        ]
        if any(value != 0.0 for value in elevations):
            raise ValueError("A planar scenario needs zero elevations and horizontal velocities")
        if self.rx.layout != "linear" or self.tx.layout != "linear":
            raise ValueError("A planar scenario needs linear arrays")
        return self

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency

    def build_arrays(self) -> Tuple[AntennaArray, AntennaArray]:
        """(receive array, transmit array); the transmit center is the GCS origin."""
        rx = self.rx.build(Vector3(self.distance, 0.0, 0.0), self.wavelength)
        tx = self.tx.build(Vector3.zero(), self.wavelength)
        return rx, tx


class Simplification(str, Enum):
    CONVENTIONAL_MIMO = "conventional_mimo"
    F2M = "f2m"
    SCM_LIKE = "scm_like"
    PLANAR_2D = "planar_2d"


# Antenna count above which array-axis evolution is no longer negligible
CONVENTIONAL_MAX_ELEMENTS = 2


def apply_simplification(
    config: ScenarioConfig, switch: Union[Simplification, str]
) -> ScenarioConfig:
    """
    Reduce a configuration to one of the simplified models.

    Raises:
        ConfigError: If the switch name is unknown
    """
    try:
        switch = Simplification(switch)
    except ValueError as exc:
        raise ConfigError(f"Unknown simplification: {switch}") from exc

    if switch == Simplification.CONVENTIONAL_MIMO:
        return config.model_copy(
            update={
                "rx": _capped(config.rx),
                "tx": _capped(config.tx),
            }
        )

    if switch == Simplification.F2M:
        tx = config.tx.model_copy(update={"velocity": (0.0, 0.0, 0.0)})
        return config.model_copy(update={"tx": tx})

    if switch == Simplification.SCM_LIKE:
        return config.model_copy(
            update={"evolution": config.evolution.model_copy(update={"mean_ray_delay": 0.0})}
        )

    angles = config.angles.model_copy(
        update={
            "aoa_elevation_mean": 0.0,
            "aoa_elevation_std": 0.0,
            "aod_elevation_mean": 0.0,
            "aod_elevation_std": 0.0,
        }
    )
    return config.model_copy(
        update={
            "planar": True,
            "angles": angles,
            "rx": _flattened(config.rx),
            "tx": _flattened(config.tx),
        }
    )


def _capped(array: ArrayConfig) -> ArrayConfig:
    return array.model_copy(
        update={
            "num_elements": min(array.num_elements, CONVENTIONAL_MAX_ELEMENTS),
            "layout": "linear",
        }
    )


def _flattened(array: ArrayConfig) -> ArrayConfig:
    vx, vy, _ = array.velocity
    return array.model_copy(
        update={"broadside_elevation": 0.0, "velocity": (vx, vy, 0.0), "layout": "linear"}
    )


def baseline(config: ScenarioConfig) -> ScenarioConfig:
    """The same scenario without array-axis, time-axis and power evolution."""
    return config.model_copy(
        update={
            "name": f"{config.name}-baseline",
            "switches": config.switches.model_copy(
                update={"array_evolution": False, "time_evolution": False, "power_evolution": False}
            ),
        }
    )


def _geometric_delay(params: EvolutionParams) -> float:
    return (params.mean_distance_rx + params.mean_distance_tx) / SPEED_OF_LIGHT


def _unscaled_virtual_delay(params: EvolutionParams) -> float:
    """r_tau * E[sigma_tau] of the log-normal delay spread."""
    ln10 = math.log(10.0)
    mean_spread = 10.0 ** params.log_delay_spread_mean * math.exp(
        0.5 * (params.log_delay_spread_std * ln10) ** 2
    )
    return params.delay_scaling * mean_spread


def mean_cluster_delay(config: ScenarioConfig) -> float:
    """
    Expected cluster delay of freshly generated clusters.

    Geometric two-hop delay at the mean distances plus the mean virtual delay
    scale * r_tau * E[sigma_tau].
    """
    params = config.evolution
    return _geometric_delay(params) + params.virtual_delay_scale * _unscaled_virtual_delay(params)


def virtual_delay_scale_for(params: EvolutionParams, mean_delay: float) -> float:
    """
    Virtual-delay scale that puts the mean cluster delay at mean_delay.

    Raises:
        ConfigError: If mean_delay does not exceed the geometric two-hop delay
    """
    geometric = _geometric_delay(params)
    if mean_delay <= geometric:
        raise ConfigError(
            f"Mean cluster delay {mean_delay:g} s must exceed the geometric {geometric:g} s"
        )
    return (mean_delay - geometric) / _unscaled_virtual_delay(params)


def calibrated(params: EvolutionParams, mean_delay: float) -> EvolutionParams:
    """Copy of params whose virtual-delay scale hits the given mean cluster delay."""
    return params.model_copy(
        update={"virtual_delay_scale": virtual_delay_scale_for(params, mean_delay)}
    )


def _massive_mimo_3d() -> ScenarioConfig:
    return ScenarioConfig(
        name="massive_mimo_3d",
        description="3D wideband massive MIMO, 2.6 GHz, 32x32 arrays, static ends",
        carrier_frequency=2.6e9,
        distance=200.0,
        rx=ArrayConfig(
            num_elements=32, broadside_azimuth=math.pi / 4, broadside_elevation=math.pi / 4
        ),
        tx=ArrayConfig(
            num_elements=32,
            broadside_azimuth=math.pi / 3,
            broadside_elevation=math.pi / 4,
            pattern="half_wave_dipole",
        ),
        evolution=calibrated(
            EvolutionParams(
                array_coherence_distance=30.0,
                space_coherence_distance=100.0,
                virtual_link_coherence=30.0,
                mean_rays=20.0,
                fixed_ray_count=True,
                **URBAN_DELAYS,
            ),
            URBAN_MEAN_DELAY,
        ),
        angles=AngleParams(
            aoa_azimuth_mean=0.78,
            aoa_azimuth_std=1.15,
            aoa_elevation_mean=0.78,
            aoa_elevation_std=0.18,
            aod_azimuth_mean=1.05,
            aod_azimuth_std=0.54,
            aod_elevation_mean=0.78,
            aod_elevation_std=0.11,
        ),
        cross_polarization_ratio=10.0 ** (-8.0 / 10.0),
        duration=1e-3,
    )


def _hst_3d() -> ScenarioConfig:
    return ScenarioConfig(
        name="hst_3d",
        description="3D wideband HST conventional MIMO, 932 MHz, receiver at 60 m/s",
        carrier_frequency=932e6,
        distance=200.0,
        rx=ArrayConfig(
            num_elements=2,
            broadside_azimuth=math.pi / 4,
            broadside_elevation=math.pi / 4,
            velocity=(0.0, 60.0, 0.0),
        ),
        tx=ArrayConfig(
            num_elements=2,
            broadside_azimuth=math.pi / 3,
            broadside_elevation=math.pi / 4,
            pattern="half_wave_dipole",
        ),
        evolution=calibrated(
            EvolutionParams(
                mean_speed_rx=0.5,
                mean_speed_tx=0.5,
                array_coherence_distance=50.0,
                space_coherence_distance=100.0,
                virtual_link_coherence=7.0,
                mean_rays=20.0,
                fixed_ray_count=True,
                **URBAN_DELAYS,
            ),
            URBAN_MEAN_DELAY,
        ),
        angles=AngleParams(
            aoa_azimuth_mean=0.78,
            aoa_azimuth_std=0.90,
            aoa_elevation_mean=0.78,
            aoa_elevation_std=0.18,
            aod_azimuth_mean=1.05,
            aod_azimuth_std=0.54,
            aod_elevation_mean=0.78,
            aod_elevation_std=0.11,
        ),
        duration=1.0,
        # Delay grid of a 50 MHz channel sounder
        delay_resolution=20e-9,
    )


def _v2v_2d() -> ScenarioConfig:
    return ScenarioConfig(
        name="v2v_2d",
        description="2D wideband V2V conventional MIMO, 5.9 GHz, both ends at 25 m/s",
        carrier_frequency=5.9e9,
        distance=400.0,
        rx=ArrayConfig(num_elements=2, broadside_azimuth=math.pi / 4, velocity=(0.0, 25.0, 0.0)),
        tx=ArrayConfig(num_elements=2, broadside_azimuth=math.pi / 3, velocity=(0.0, 25.0, 0.0)),
        evolution=calibrated(
            EvolutionParams(
                mean_speed_rx=0.5,
                mean_speed_tx=0.5,
                array_coherence_distance=30.0,
                space_coherence_distance=10.0,
                virtual_link_coherence=5.0,
                mean_rays=20.0,
                fixed_ray_count=True,
                **URBAN_DELAYS,
            ),
            URBAN_MEAN_DELAY,
        ),
        angles=AngleParams(
            aoa_azimuth_mean=0.78,
            aoa_azimuth_std=0.91,
            aoa_elevation_mean=0.0,
            aoa_elevation_std=0.0,
            aod_azimuth_mean=1.04,
            aod_azimuth_std=0.53,
            aod_elevation_mean=0.0,
            aod_elevation_std=0.0,
        ),
        planar=True,
        duration=1.0,
    )


_MMWAVE_EVOLUTION = dict(
    array_coherence_distance=30.0,
    space_coherence_distance=100.0,
    virtual_link_coherence=7.0,
    mean_rays=15.0,
    mean_ray_delay=3e-9,
    mean_distance_rx=5.0,
    std_distance_rx=3.0,
    mean_distance_tx=5.0,
    std_distance_tx=3.0,
    **INDOOR_OFFICE_DELAYS,
)


def _mmwave_3d() -> ScenarioConfig:
    return ScenarioConfig(
        name="mmwave_3d",
        description="3D mmWave conventional MIMO, 58 GHz indoor, static ends",
        carrier_frequency=58e9,
        distance=6.0,
        rx=ArrayConfig(
            num_elements=2, broadside_azimuth=math.pi / 4, broadside_elevation=math.pi / 4
        ),
        tx=ArrayConfig(
            num_elements=2, broadside_azimuth=math.pi / 3, broadside_elevation=math.pi / 4
        ),
        evolution=calibrated(EvolutionParams(**_MMWAVE_EVOLUTION), INDOOR_MEAN_DELAY),
        angles=AngleParams(
            aoa_azimuth_mean=0.78,
            aoa_azimuth_std=0.91,
            aoa_elevation_mean=0.78,
            aoa_elevation_std=0.18,
            aod_azimuth_mean=1.04,
            aod_azimuth_std=0.53,
            aod_elevation_mean=0.78,
            aod_elevation_std=0.11,
        ),
        duration=0.01,
    )


def _mmwave_massive_2d() -> ScenarioConfig:
    return ScenarioConfig(
        name="mmwave_massive_2d",
        description="2D mmWave massive MIMO, 58 GHz, 32-element receive array",
        carrier_frequency=58e9,
        distance=6.0,
        rx=ArrayConfig(num_elements=32, broadside_azimuth=math.pi / 4),
        tx=ArrayConfig(num_elements=2, broadside_azimuth=math.pi / 3),
        evolution=calibrated(EvolutionParams(**_MMWAVE_EVOLUTION), INDOOR_MEAN_DELAY),
        angles=AngleParams(
            aoa_azimuth_mean=0.78,
            aoa_azimuth_std=0.91,
            aoa_elevation_mean=0.0,
            aoa_elevation_std=0.0,
            aod_azimuth_mean=1.04,
            aod_azimuth_std=0.53,
            aod_elevation_mean=0.0,
            aod_elevation_std=0.0,
        ),
        planar=True,
        duration=1e-3,
    )


def _wideband_mimo_3d() -> ScenarioConfig:
    return ScenarioConfig(
        name="wideband_mimo_3d",
        description="3D wideband conventional MIMO, 2 GHz, receiver at 5 m/s, 81 rays per cluster",
        carrier_frequency=2e9,
        distance=200.0,
        rx=ArrayConfig(
            num_elements=2,
            broadside_azimuth=math.pi / 4,
            broadside_elevation=math.pi / 4,
            velocity=(0.0, 5.0, 0.0),
        ),
        tx=ArrayConfig(
            num_elements=2, broadside_azimuth=math.pi / 3, broadside_elevation=math.pi / 4
        ),
        evolution=calibrated(
            EvolutionParams(
                array_coherence_distance=50.0,
                space_coherence_distance=100.0,
                virtual_link_coherence=7.0,
                mean_rays=81.0,
                fixed_ray_count=True,
                **URBAN_DELAYS,
            ),
            URBAN_MEAN_DELAY,
        ),
        angles=AngleParams(
            aoa_azimuth_mean=0.78,
            aoa_azimuth_std=0.90,
            aoa_elevation_mean=0.78,
            aoa_elevation_std=0.18,
            aod_azimuth_mean=1.05,
            aod_azimuth_std=0.54,
            aod_elevation_mean=0.78,
            aod_elevation_std=0.11,
        ),
        duration=0.1,
    )


PRESETS: Dict[str, Callable[[], ScenarioConfig]] = {
    "massive_mimo_3d": _massive_mimo_3d,
    "hst_3d": _hst_3d,
    "v2v_2d": _v2v_2d,
    "mmwave_3d": _mmwave_3d,
    "mmwave_massive_2d": _mmwave_massive_2d,
    "wideband_mimo_3d": _wideband_mimo_3d,
}


def preset(name: str) -> ScenarioConfig:
    """
    Build a named preset.

    Raises:
        ConfigError: If the name is not a known preset
    """
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ConfigError(f"Unknown preset '{name}', choose from {', '.join(PRESETS)}") from None
    return factory()


def list_presets() -> Dict[str, str]:
    return {name: factory().description for name, factory in PRESETS.items()}


def save_config(config: ScenarioConfig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(config.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return path


def load_config(path: Union[str, Path]) -> ScenarioConfig:
    return ScenarioConfig.model_validate_json(Path(path).read_text(encoding="utf-8"))


def load_scenario(
    name_or_path: str, overrides: Optional[Dict[str, float]] = None
) -> ScenarioConfig:
    """Resolve a preset name or a JSON config path, then apply top-level overrides."""
    if name_or_path in PRESETS:
        config = preset(name_or_path)
    else:
        config = load_config(name_or_path)
        logger.info(f"Loaded scenario '{config.name}' from {name_or_path}")
    if overrides:
        config = ScenarioConfig.model_validate({**config.model_dump(), **overrides})
    return config
