"""
Clusters, rays and their evolution along the array and time axes.

New clusters are drawn by the generation procedure below and made visible to a
random ball of antennas on each side. Every time step the surviving clusters
move, their virtual delays follow a first-order autoregression and their ray
powers follow the inverse power law of the travel distance.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, List, Optional, Set, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from geometry import SPEED_OF_LIGHT, Vector3, spherical_direction, wrap_angle

if TYPE_CHECKING:
    from channel import ChannelState

logger = logging.getLogger(__name__)

# Length of the linear power ramp for appearing and disappearing clusters
FADE_DURATION = 1e-3

_FADE_TOLERANCE = 1e-12


class EvolutionParams(BaseModel):
    """Birth-death, delay and ray statistics of the cluster process."""

    model_config = ConfigDict(frozen=True)

    generation_rate: float = Field(80.0, gt=0, description="lambda_G, clusters per meter")
    recombination_rate: float = Field(4.0, gt=0, description="lambda_R, clusters per meter")
    moving_fraction: float = Field(0.3, ge=0, le=1, description="P_F, share of moving clusters")
    mean_speed_rx: float = Field(0.0, ge=0, description="Delta v^R, m/s")
    mean_speed_tx: float = Field(0.0, ge=0, description="Delta v^T, m/s")
    array_coherence_distance: float = Field(30.0, gt=0, description="D_c^a, meters")
    space_coherence_distance: float = Field(100.0, gt=0, description="D_c^s, meters")
    virtual_link_coherence: Optional[float] = Field(
        7.0, gt=0, description="varsigma in seconds; null freezes virtual delays"
    )
    delay_scaling: float = Field(2.3, gt=0, description="r_tau")
    virtual_delay_scale: float = Field(
        1.0, gt=0, description="stretch of the exponential virtual-delay mean r_tau sigma_tau"
    )
    log_delay_spread_mean: float = Field(-6.63, description="E[log10 sigma_tau]")
    log_delay_spread_std: float = Field(0.32, ge=0, description="std[log10 sigma_tau]")
    mean_rays: float = Field(20.0, gt=0, description="lambda tilde, mean rays per cluster")
    fixed_ray_count: bool = Field(False, description="round(mean_rays) rays, no Poisson draw")
    mean_ray_delay: float = Field(0.0, ge=0, description="E[tau_m], seconds")
    ray_offset_std: float = Field(0.017, ge=0, description="Laplacian ray angle offset std, rad")
    shadowing_std_db: float = Field(3.0, ge=0, description="per-cluster and per-ray shadowing, dB")
    mean_distance_rx: float = Field(25.0, gt=0, description="E[D_n^R], meters")
    std_distance_rx: float = Field(15.0, ge=0, description="std[D_n^R], meters")
    mean_distance_tx: float = Field(30.0, gt=0, description="E[D_n^T], meters")
    std_distance_tx: float = Field(10.0, ge=0, description="std[D_n^T], meters")

    @property
    def mean_cluster_count(self) -> float:
        return self.generation_rate / self.recombination_rate


class AngleParams(BaseModel):
    """
    Wrapped-Gaussian location and spread of the four cluster angles, radians.

    A location left as None falls back to the broadside angle of the array on
    that side.
    """

    model_config = ConfigDict(frozen=True)

    aoa_azimuth_mean: Optional[float] = None
    aoa_azimuth_std: float = Field(1.15, ge=0)
    aoa_elevation_mean: Optional[float] = None
    aoa_elevation_std: float = Field(0.18, ge=0)
    aod_azimuth_mean: Optional[float] = None
    aod_azimuth_std: float = Field(0.54, ge=0)
    aod_elevation_mean: Optional[float] = None
    aod_elevation_std: float = Field(0.11, ge=0)


class Lifecycle(str, Enum):
    ACTIVE = "active"
    FADING_IN = "fading_in"
    FADING_OUT = "fading_out"


@dataclass(frozen=True)
class Ray:
    relative_delay: float
    mean_power_unnormalized: float
    angle_offsets: Tuple[float, float, float, float]
    phases: Tuple[float, float, float, float]


@dataclass
class Cluster:
    """
    One effective scatterer pair and its rays.

    Bounce points are stored in global coordinates and move with the cluster
    velocities. Ray quantities are kept as arrays indexed by ray. Accumulated
    Doppler phases and the spherical-wavefront phases fixed at birth are indexed
    (antenna, ray).
    """

    id: int
    aoa_azimuth: float
    aoa_elevation: float
    aod_azimuth: float
    aod_elevation: float
    distance_rx: float
    distance_tx: float
    virtual_delay: float
    delay_spread: float
    last_bounce_velocity: Vector3
    first_bounce_velocity: Vector3
    ray_delays: np.ndarray
    ray_powers: np.ndarray
    ray_offsets: np.ndarray
    ray_phases: np.ndarray
    last_bounce: np.ndarray
    first_bounce: np.ndarray
    ray_last_bounce: np.ndarray
    ray_first_bounce: np.ndarray
    rx_phase: np.ndarray
    tx_phase: np.ndarray
    rx_wavefront_phase: np.ndarray
    tx_wavefront_phase: np.ndarray
    lifecycle: Lifecycle = Lifecycle.ACTIVE
    lifecycle_since: float = 0.0

    @property
    def num_rays(self) -> int:
        return int(self.ray_delays.size)

    @property
    def rays(self) -> List[Ray]:
        return [
            Ray(
                relative_delay=float(self.ray_delays[m]),
                mean_power_unnormalized=float(self.ray_powers[m]),
                angle_offsets=tuple(self.ray_offsets[m].tolist()),  # type: ignore[arg-type]
                phases=tuple(self.ray_phases[m].tolist()),  # type: ignore[arg-type]
            )
            for m in range(self.num_rays)
        ]

    @property
    def is_alive(self) -> bool:
        return self.lifecycle != Lifecycle.FADING_OUT

    def fade_weight(self, t: float) -> float:
        """Linear power ramp factor at time t."""
        if self.lifecycle == Lifecycle.ACTIVE:
            return 1.0
        elapsed = (t - self.lifecycle_since) / FADE_DURATION
        if self.lifecycle == Lifecycle.FADING_IN:
            return float(min(max(elapsed, 0.0), 1.0))
        return float(min(max(1.0 - elapsed, 0.0), 1.0))


@dataclass
class VisibilitySet:
    """Cluster ids observable by each receive antenna and each transmit antenna."""

    rx: List[Set[int]]
    tx: List[Set[int]]

    @classmethod
    def empty(cls, num_rx: int, num_tx: int) -> "VisibilitySet":
        return cls(rx=[set() for _ in range(num_rx)], tx=[set() for _ in range(num_tx)])

    def shared(self, q: int, p: int) -> Set[int]:
        """S_qp: clusters seen by both receive antenna q and transmit antenna p."""
        return self.rx[q] & self.tx[p]

    def observable(self) -> Set[int]:
        # The union of all S_qp equals (union of rx sets) & (union of tx sets)
        return set().union(*self.rx) & set().union(*self.tx)

    def cardinality(self) -> int:
        return len(self.observable())

    def rx_mask(self, cluster_id: int) -> np.ndarray:
        return np.array([cluster_id in seen for seen in self.rx], dtype=bool)

    def tx_mask(self, cluster_id: int) -> np.ndarray:
        return np.array([cluster_id in seen for seen in self.tx], dtype=bool)

    def remove(self, cluster_id: int) -> None:
        for seen in self.rx:
            seen.discard(cluster_id)
        for seen in self.tx:
            seen.discard(cluster_id)


def survival_probability(params: EvolutionParams, dt: float) -> float:
    """
    Probability that a cluster survives a time step of dt seconds.

    Raises:
        ValueError: If dt is negative
    """
    if dt < 0:
        raise ValueError(f"Time step must be non-negative, got {dt}")
    drift = params.moving_fraction * (params.mean_speed_rx + params.mean_speed_tx) * dt
    return math.exp(-params.recombination_rate * drift / params.space_coherence_distance)


def survival_probability_between(
    params: EvolutionParams, array_shift_rx: float, array_shift_tx: float, dt: float
) -> float:
    """Survival probability over a joint array-axis and time-axis displacement."""
    if dt < 0 or array_shift_rx < 0 or array_shift_tx < 0:
        raise ValueError("Displacements must be non-negative")
    array_term = (array_shift_rx + array_shift_tx) / params.array_coherence_distance
    drift = params.moving_fraction * (params.mean_speed_rx + params.mean_speed_tx) * dt
    time_term = drift / params.space_coherence_distance
    return math.exp(-params.recombination_rate * (array_term + time_term))


def expected_new_clusters(params: EvolutionParams, dt: float) -> float:
    """Mean of the Poisson number of clusters born during dt."""
    return params.mean_cluster_count * (1.0 - survival_probability(params, dt))


def generate_virtual_delay(r_tau: float, sigma_tau: float, rng: np.random.Generator) -> float:
    """Exponential virtual delay with mean r_tau * sigma_tau."""
    if r_tau <= 0 or sigma_tau <= 0:
        raise ValueError("Delay scaling and delay spread must be positive")
    u = 1.0 - rng.random()  # in (0, 1]
    return -r_tau * sigma_tau * math.log(u)


def generate_cluster_power(
    virtual_delay: float,
    r_tau: float,
    sigma_tau: float,
    rng: np.random.Generator,
    shadowing_std_db: float = 3.0,
) -> float:
    """Unnormalized cluster power from its virtual delay and log-normal shadowing."""
    if virtual_delay < 0:
        raise ValueError(f"Virtual delay must be non-negative, got {virtual_delay}")
    shadowing = rng.normal(0.0, shadowing_std_db) if shadowing_std_db > 0 else 0.0
    profile = math.exp(-virtual_delay * (r_tau - 1.0) / (r_tau * sigma_tau))
    return profile * 10.0 ** (-shadowing / 10.0)


def generate_cluster_angles(
    angles: AngleParams,
    rng: np.random.Generator,
    rx_broadside: Tuple[float, float] = (0.0, 0.0),
    tx_broadside: Tuple[float, float] = (0.0, 0.0),
) -> Tuple[Tuple[float, float], Tuple[float, float]]:
    """
    Draw ((AoA azimuth, AoA elevation), (AoD azimuth, AoD elevation)).

    Each angle is std * N(0, 1) + location wrapped to (-pi, pi]. The location is
    the configured mean, or the (azimuth, elevation) broadside of that side.
    """
    locations = [
        (angles.aoa_azimuth_mean, rx_broadside[0]),
        (angles.aoa_elevation_mean, rx_broadside[1]),
        (angles.aod_azimuth_mean, tx_broadside[0]),
        (angles.aod_elevation_mean, tx_broadside[1]),
    ]
    means = np.array([fallback if mean is None else mean for mean, fallback in locations])
    stds = np.array(
        [
            angles.aoa_azimuth_std,
            angles.aoa_elevation_std,
            angles.aod_azimuth_std,
            angles.aod_elevation_std,
        ]
    )
    raw = stds * rng.standard_normal(4) + means
    in_range = (raw > -np.pi) & (raw <= np.pi)
    drawn = np.where(in_range, raw, wrap_angle(raw))
    return (float(drawn[0]), float(drawn[1])), (float(drawn[2]), float(drawn[3]))


def generate_ray_set(
    lambda_tilde: float,
    mean_ray_delay: float,
    r_tau: float,
    offset_std: float,
    rng: np.random.Generator,
    shadowing_std_db: float = 3.0,
    fixed_count: bool = False,
) -> List[Ray]:
    """
    Draw the rays of one cluster.

    Args:
        lambda_tilde: Mean ray count
        mean_ray_delay: Mean relative ray delay in seconds; 0 puts every ray at the cluster delay
        r_tau: Delay scaling of the exponential power profile
        offset_std: Standard deviation of the Laplacian angle offsets
        rng: Random generator
        shadowing_std_db: Per-ray shadowing standard deviation
        fixed_count: Use round(lambda_tilde) rays instead of a Poisson draw

    Returns:
        At least one Ray
    """
    if lambda_tilde <= 0 or mean_ray_delay < 0:
        raise ValueError("Ray statistics out of range")

    if fixed_count:
        count = max(int(round(lambda_tilde)), 1)
    else:
        count = max(int(rng.poisson(lambda_tilde)), 1)

    if mean_ray_delay > 0:
        delays = rng.exponential(mean_ray_delay, count)
        profile = np.exp(-delays * (r_tau - 1.0) / mean_ray_delay)
    else:
        delays = np.zeros(count)
        profile = np.ones(count)

    if shadowing_std_db > 0:
        profile = profile * 10.0 ** (-rng.normal(0.0, shadowing_std_db, count) / 10.0)

    # Laplace scale b gives standard deviation b * sqrt(2)
    if offset_std > 0:
        offsets = rng.laplace(0.0, offset_std / math.sqrt(2.0), (count, 4))
    else:
        offsets = np.zeros((count, 4))
    phases = 2.0 * np.pi * (1.0 - rng.random((count, 4)))

    return [
        Ray(
            relative_delay=float(delays[m]),
            mean_power_unnormalized=float(profile[m]),
            angle_offsets=tuple(float(v) for v in offsets[m]),  # type: ignore[arg-type]
            phases=tuple(float(v) for v in phases[m]),  # type: ignore[arg-type]
        )
        for m in range(count)
    ]


def scale_ray_powers(cluster_power: float, ray_powers) -> np.ndarray:
    """Distribute the cluster power over its rays in proportion to the ray powers."""
    powers = np.asarray(ray_powers, dtype=float)
    total = powers.sum()
    if total <= 0:
        raise ValueError("Ray powers must not all be zero")
    return cluster_power * powers / total


def draw_cluster_distance(mean: float, std: float, rng: np.random.Generator) -> float:
    """Gamma-distributed cluster distance with the given mean and std."""
    if std == 0:
        return mean
    shape = (mean / std) ** 2
    return float(rng.gamma(shape, std * std / mean))


def draw_cluster_velocity(
    mean_speed: float, moving_fraction: float, planar: bool, rng: np.random.Generator
) -> Vector3:
    """
    Velocity of one bounce point.

    A share moving_fraction of clusters moves with speed mean_speed / moving_fraction
    in a uniform direction, the rest are static, so the mean speed is mean_speed.
    """
    if rng.random() >= moving_fraction or mean_speed == 0:
        return Vector3.zero()
    speed = mean_speed / moving_fraction
    if planar:
        heading = rng.uniform(-np.pi, np.pi)
        return Vector3(speed * math.cos(heading), speed * math.sin(heading), 0.0)
    direction = rng.standard_normal(3)
    direction /= np.linalg.norm(direction)
    return Vector3.from_array(speed * direction)


def assign_visibility(
    visibility: VisibilitySet,
    cluster_id: int,
    rx_positions: np.ndarray,
    tx_positions: np.ndarray,
    params: EvolutionParams,
    rng: np.random.Generator,
    array_evolution: bool = True,
) -> VisibilitySet:
    """
    Make a cluster visible to a ball of antennas on each side.

    Each side picks a uniform anchor antenna and an exponential radius with rate
    lambda_R / D_c^a; every antenna within that radius of the anchor sees the cluster.
    """
    for positions, seen in ((rx_positions, visibility.rx), (tx_positions, visibility.tx)):
        if len(positions) < 1:
            raise ValueError("Array has no elements")
        if array_evolution:
            anchor = int(rng.integers(len(positions)))
            radius = rng.exponential(params.array_coherence_distance / params.recombination_rate)
            distances = np.linalg.norm(positions - positions[anchor], axis=1)
            visible = np.flatnonzero(distances <= radius)
        else:
            visible = np.arange(len(positions))
        for index in visible:
            seen[int(index)].add(cluster_id)
    return visibility


def power_evolution(p_prev, tau_n_prev, tau_n_next, tau_ray, eta: float = 2.0):
    """
    Ray power after the cluster delay moves from tau_n_prev to tau_n_next.

    Linearized inverse eta-th power law of the travel distance; negative results
    are clamped to 0. Works elementwise on arrays.

    Raises:
        ValueError: If eta <= 1 or tau_n_prev + tau_ray is zero
    """
    if eta <= 1:
        raise ValueError(f"Power exponent must exceed 1, got {eta}")
    denominator = np.asarray(tau_n_prev + tau_ray, dtype=float)
    if np.any(denominator <= 0):
        raise ValueError("Power evolution needs tau_n + tau_m > 0")
    factor = ((eta + 1.0) * tau_n_prev - eta * tau_n_next + tau_ray) / denominator
    return np.maximum(p_prev * factor, 0.0)


def cluster_delay(cluster: Cluster, rx_center: np.ndarray, tx_center: np.ndarray) -> float:
    """Geometric two-hop delay from the array centers plus the virtual delay."""
    path = np.linalg.norm(cluster.last_bounce - rx_center) + np.linalg.norm(
        cluster.first_bounce - tx_center
    )
    return float(path / SPEED_OF_LIGHT + cluster.virtual_delay)


def wavefront_phase(points: np.ndarray, antennas: np.ndarray, wavelength: float) -> np.ndarray:
    """Propagation phase -2 pi |point - antenna| / wavelength, shape (antenna, point)."""
    distances = np.linalg.norm(points[None, :, :] - antennas[:, None, :], axis=-1)
    return -2.0 * np.pi * distances / wavelength


def build_cluster(
    cluster_id: int,
    params: EvolutionParams,
    angles: AngleParams,
    rx_positions: np.ndarray,
    tx_positions: np.ndarray,
    rx_center: np.ndarray,
    tx_center: np.ndarray,
    wavelength: float,
    planar: bool,
    rng: np.random.Generator,
    lifecycle: Lifecycle = Lifecycle.ACTIVE,
    since: float = 0.0,
    rx_broadside: Tuple[float, float] = (0.0, 0.0),
    tx_broadside: Tuple[float, float] = (0.0, 0.0),
) -> Cluster:
    """Generate a new cluster placed relative to the current array centers."""
    sigma_tau = 10.0 ** rng.normal(params.log_delay_spread_mean, params.log_delay_spread_std)
    virtual_delay = params.virtual_delay_scale * generate_virtual_delay(
        params.delay_scaling, sigma_tau, rng
    )
    power = generate_cluster_power(
        virtual_delay, params.delay_scaling, sigma_tau, rng, params.shadowing_std_db
    )
    (aoa_az, aoa_el), (aod_az, aod_el) = generate_cluster_angles(
        angles, rng, rx_broadside, tx_broadside
    )
    distance_rx = draw_cluster_distance(params.mean_distance_rx, params.std_distance_rx, rng)
    distance_tx = draw_cluster_distance(params.mean_distance_tx, params.std_distance_tx, rng)

    rays = generate_ray_set(
        params.mean_rays,
        params.mean_ray_delay,
        params.delay_scaling,
        params.ray_offset_std,
        rng,
        params.shadowing_std_db,
        params.fixed_ray_count,
    )
    ray_delays = np.array([ray.relative_delay for ray in rays])
    ray_powers = scale_ray_powers(power, [ray.mean_power_unnormalized for ray in rays])
    offsets = np.array([ray.angle_offsets for ray in rays])
    phases = np.array([ray.phases for ray in rays])
    if planar:
        offsets[:, 1] = 0.0
        offsets[:, 3] = 0.0

    last_bounce = rx_center + distance_rx * spherical_direction(aoa_az, aoa_el)
    first_bounce = tx_center + distance_tx * spherical_direction(aod_az, aod_el)
    ray_last_bounce = rx_center + distance_rx * spherical_direction(
        aoa_az + offsets[:, 0], aoa_el + offsets[:, 1]
    )
    ray_first_bounce = tx_center + distance_tx * spherical_direction(
        aod_az + offsets[:, 2], aod_el + offsets[:, 3]
    )

    return Cluster(
        id=cluster_id,
        aoa_azimuth=aoa_az,
        aoa_elevation=aoa_el,
        aod_azimuth=aod_az,
        aod_elevation=aod_el,
        distance_rx=distance_rx,
        distance_tx=distance_tx,
        virtual_delay=virtual_delay,
        delay_spread=sigma_tau,
        last_bounce_velocity=draw_cluster_velocity(
            params.mean_speed_rx, params.moving_fraction, planar, rng
        ),
        first_bounce_velocity=draw_cluster_velocity(
            params.mean_speed_tx, params.moving_fraction, planar, rng
        ),
        ray_delays=ray_delays,
        ray_powers=ray_powers,
        ray_offsets=offsets,
        ray_phases=phases,
        last_bounce=last_bounce,
        first_bounce=first_bounce,
        ray_last_bounce=ray_last_bounce,
        ray_first_bounce=ray_first_bounce,
        rx_phase=np.zeros((len(rx_positions), len(rays))),
        tx_phase=np.zeros((len(tx_positions), len(rays))),
        rx_wavefront_phase=wavefront_phase(ray_last_bounce, rx_positions, wavelength),
        tx_wavefront_phase=wavefront_phase(ray_first_bounce, tx_positions, wavelength),
        lifecycle=lifecycle,
        lifecycle_since=since,
    )


def spawn_cluster(
    state: "ChannelState", lifecycle: Lifecycle = Lifecycle.ACTIVE
) -> Cluster:
    """Generate a cluster at the state's current time and register its visibility."""
    config = state.config
    cluster = build_cluster(
        state.next_cluster_id,
        config.evolution,
        config.angles,
        state.rx_array.positions_at(state.time),
        state.tx_array.positions_at(state.time),
        state.rx_array.center_at(state.time),
        state.tx_array.center_at(state.time),
        config.wavelength,
        config.planar,
        state.rng,
        lifecycle=lifecycle,
        since=state.time,
        rx_broadside=(state.rx_array.broadside_azimuth, state.rx_array.broadside_elevation),
        tx_broadside=(state.tx_array.broadside_azimuth, state.tx_array.broadside_elevation),
    )
    state.next_cluster_id += 1
    assign_visibility(
        state.visibility,
        cluster.id,
        state.rx_array.positions_at(state.time),
        state.tx_array.positions_at(state.time),
        config.evolution,
        state.rng,
        array_evolution=config.switches.array_evolution,
    )
    state.clusters.append(cluster)
    return cluster


def evolve_time_step(
    state: "ChannelState", dt: float, rng: Optional[np.random.Generator] = None
) -> "ChannelState":
    """
    Advance the cluster set of a realization by dt seconds.

    Survivors are moved, their virtual delays and ray powers updated; deaths enter
    their fade-out ramp and Poisson-many new clusters enter their fade-in ramp.
    Accumulated Doppler phases are handled by channel.step.

    Raises:
        ValueError: If dt is not positive
    """
    if dt <= 0:
        raise ValueError(f"Time step must be positive, got {dt}")
    if rng is not None:
        state.rng = rng

    config = state.config
    params = config.evolution
    switches = config.switches
    t_next = state.time + dt

    rx_now, tx_now = state.rx_array.center_at(state.time), state.tx_array.center_at(state.time)
    rx_next, tx_next = state.rx_array.center_at(t_next), state.tx_array.center_at(t_next)
    if params.virtual_link_coherence is None:
        decay = 1.0
    else:
        decay = math.exp(-dt / params.virtual_link_coherence)

    for cluster in state.clusters:
        tau_prev = cluster_delay(cluster, rx_now, tx_now)

        shift_rx = cluster.last_bounce_velocity.to_array() * dt
        shift_tx = cluster.first_bounce_velocity.to_array() * dt
        cluster.last_bounce = cluster.last_bounce + shift_rx
        cluster.ray_last_bounce = cluster.ray_last_bounce + shift_rx
        cluster.first_bounce = cluster.first_bounce + shift_tx
        cluster.ray_first_bounce = cluster.ray_first_bounce + shift_tx

        if decay < 1.0:
            fresh = params.virtual_delay_scale * generate_virtual_delay(
                params.delay_scaling, cluster.delay_spread, state.rng
            )
            cluster.virtual_delay = decay * cluster.virtual_delay + (1.0 - decay) * fresh

        if switches.power_evolution:
            tau_next = cluster_delay(cluster, rx_next, tx_next)
            evolved = power_evolution(
                cluster.ray_powers, tau_prev, tau_next, cluster.ray_delays, switches.power_exponent
            )
            if cluster.is_alive and np.any(evolved[cluster.ray_powers > 0] == 0):
                logger.warning(
                    f"Cluster {cluster.id} power clamped at t={t_next:.6f}s, fading out"
                )
                cluster.lifecycle = Lifecycle.FADING_OUT
                cluster.lifecycle_since = t_next
            cluster.ray_powers = evolved

    # Ramps that completed during this step
    remaining = []
    for cluster in state.clusters:
        done = t_next - cluster.lifecycle_since >= FADE_DURATION - _FADE_TOLERANCE
        if cluster.lifecycle == Lifecycle.FADING_OUT and done:
            state.visibility.remove(cluster.id)
            continue
        if cluster.lifecycle == Lifecycle.FADING_IN and done:
            cluster.lifecycle = Lifecycle.ACTIVE
        remaining.append(cluster)
    state.clusters = remaining
    state.time = t_next

    if switches.time_evolution:
        p_survive = survival_probability(params, dt)
        for cluster in state.clusters:
            if cluster.is_alive and state.rng.random() >= p_survive:
                cluster.lifecycle = Lifecycle.FADING_OUT
                cluster.lifecycle_since = t_next

        births = int(state.rng.poisson(expected_new_clusters(params, dt)))
        for _ in range(births):
            spawn_cluster(state, lifecycle=Lifecycle.FADING_IN)

    logger.debug(
        f"t={state.time:.6f}s clusters={alive_cluster_count(state)} "
        f"observable={state.visibility.cardinality()}"
    )
    return state


def alive_cluster_count(state: "ChannelState") -> int:
    """N(t): clusters that are active or fading in."""
    return sum(1 for cluster in state.clusters if cluster.is_alive)
