"""
Time-variant channel impulse response assembly.

A ChannelState carries one evolving realization. ``snapshot`` turns it into the
per antenna pair taps of the impulse response: an optional LOS tap and one tap
per ray of every observable cluster, with globally normalized ray powers.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from clusters import (
    Cluster,
    Lifecycle,
    VisibilitySet,
    cluster_delay,
    evolve_time_step,
    spawn_cluster,
    wavefront_phase,
)
from geometry import (
    SPEED_OF_LIGHT,
    AntennaArray,
    GeometryError,
    Vector3,
    field_components,
)
from scenarios import ScenarioConfig

logger = logging.getLogger(__name__)


@dataclass
class ChannelState:
    """One realization of the channel at time ``time``."""

    config: ScenarioConfig
    rx_array: AntennaArray
    tx_array: AntennaArray
    rng: np.random.Generator
    clusters: List[Cluster] = field(default_factory=list)
    visibility: VisibilitySet = field(default_factory=lambda: VisibilitySet([], []))
    time: float = 0.0
    los_phase: float = 2.0 * math.pi
    los_doppler_phase: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    los_wavefront_phase: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    next_cluster_id: int = 0

    @property
    def carrier_frequency(self) -> float:
        return self.config.carrier_frequency

    @property
    def wavelength(self) -> float:
        return self.config.wavelength

    @property
    def rician_factor(self) -> float:
        return self.config.rician_factor

    @property
    def cross_polarization_ratio(self) -> float:
        return self.config.cross_polarization_ratio

    def cluster_by_id(self, cluster_id: int) -> Cluster:
        for cluster in self.clusters:
            if cluster.id == cluster_id:
                return cluster
        raise KeyError(f"No cluster with id {cluster_id}")

    def observable_clusters(self) -> List[Cluster]:
        """Clusters in at least one S_qp, in id order."""
        seen = self.visibility.observable()
        return [cluster for cluster in self.clusters if cluster.id in seen]


@dataclass(frozen=True)
class Tap:
    delay: float
    gain: complex


@dataclass
class CirSnapshot:
    """
    Impulse response of every (q, p) antenna pair at one instant.

    NLOS taps share one delay axis ``ray_delays`` over all observable rays;
    ``gains[q, p, l]`` is exactly 0 when ray l's cluster is outside S_qp. The LOS
    arrays are None when K = 0.
    """

    time: float
    ray_delays: np.ndarray
    ray_powers: np.ndarray
    ray_cluster_ids: np.ndarray
    gains: np.ndarray
    los_delay: Optional[float] = None
    los_gains: Optional[np.ndarray] = None

    @property
    def num_rx(self) -> int:
        return int(self.gains.shape[0])

    @property
    def num_tx(self) -> int:
        return int(self.gains.shape[1])

    def taps(self, q: int, p: int) -> List[Tap]:
        """Tap list of one pair, LOS first when present, skipping unobservable rays."""
        taps = []
        if self.los_gains is not None and self.los_delay is not None:
            taps.append(Tap(self.los_delay, complex(self.los_gains[q, p])))
        for delay, gain in zip(self.ray_delays, self.gains[q, p]):
            if gain != 0:
                taps.append(Tap(float(delay), complex(gain)))
        return taps


@dataclass(frozen=True)
class ClusterVectors:
    """Distance vectors of one cluster; per-element arrays are (antenna, ray, 3)."""

    last_bounce: Vector3
    first_bounce: Vector3
    ray_last_bounce: np.ndarray
    ray_first_bounce: np.ndarray
    rx_element: np.ndarray
    tx_element: np.ndarray


def initialize_state(config: ScenarioConfig, seed: int) -> ChannelState:
    """Build arrays, draw the LOS phase and the initial Poisson cluster set."""
    rx_array, tx_array = config.build_arrays()
    state = ChannelState(
        config=config,
        rx_array=rx_array,
        tx_array=tx_array,
        rng=np.random.default_rng(seed),
        visibility=VisibilitySet.empty(rx_array.num_elements, tx_array.num_elements),
        los_doppler_phase=np.zeros((rx_array.num_elements, tx_array.num_elements)),
    )
    state.los_phase = 2.0 * math.pi * (1.0 - state.rng.random())
    state.los_wavefront_phase = wavefront_phase(
        tx_array.positions_at(0.0), rx_array.positions_at(0.0), config.wavelength
    )

    initial = int(state.rng.poisson(config.evolution.mean_cluster_count))
    for _ in range(initial):
        spawn_cluster(state, lifecycle=Lifecycle.ACTIVE)

    logger.debug(f"Initialized '{config.name}' seed={seed} with {initial} clusters")
    return state


def _check_pair(state: ChannelState, q: int, p: int) -> None:
    if not 0 <= q < state.rx_array.num_elements:
        raise IndexError(f"Receive antenna {q} out of range")
    if not 0 <= p < state.tx_array.num_elements:
        raise IndexError(f"Transmit antenna {p} out of range")


def los_distance(q: int, p: int, state: ChannelState) -> Vector3:
    """D_qp^LOS: from transmit antenna p to receive antenna q."""
    _check_pair(state, q, p)
    rx = state.rx_array.positions_at(state.time)[q]
    tx = state.tx_array.positions_at(state.time)[p]
    return Vector3.from_array(rx - tx)


def cluster_vectors(cluster: Cluster, state: ChannelState) -> ClusterVectors:
    """Bounce-point vectors of a cluster and their element-level differences."""
    rx_pos = state.rx_array.positions_at(state.time)
    tx_pos = state.tx_array.positions_at(state.time)
    return ClusterVectors(
        last_bounce=Vector3.from_array(cluster.last_bounce),
        first_bounce=Vector3.from_array(cluster.first_bounce),
        ray_last_bounce=cluster.ray_last_bounce.copy(),
        ray_first_bounce=cluster.ray_first_bounce.copy(),
        rx_element=cluster.ray_last_bounce[None, :, :] - rx_pos[:, None, :],
        tx_element=cluster.ray_first_bounce[None, :, :] - tx_pos[:, None, :],
    )


def doppler_shifts(
    vectors: np.ndarray, relative_velocity: np.ndarray, wavelength: float
) -> np.ndarray:
    """Projection of relative_velocity on each vector, divided by the wavelength."""
    if not np.any(relative_velocity):
        return np.zeros(vectors.shape[:-1])
    norms = np.linalg.norm(vectors, axis=-1)
    if np.any(norms == 0):
        raise GeometryError("Doppler frequency undefined for a zero-length distance vector")
    return (vectors @ relative_velocity) / (norms * wavelength)


def doppler_nlos(
    distance_vec: Vector3, v_array: Vector3, v_cluster: Vector3, wavelength: float
) -> float:
    """
    Doppler frequency of one ray at one antenna.

    Raises:
        GeometryError: If distance_vec has zero length
    """
    norm = distance_vec.norm()
    if norm == 0:
        raise GeometryError("Doppler frequency undefined for a zero-length distance vector")
    return distance_vec.dot(v_array - v_cluster) / (norm * wavelength)


def doppler_los(q: int, p: int, state: ChannelState) -> float:
    """LOS Doppler frequency between receive antenna q and transmit antenna p."""
    rx, tx = state.rx_array, state.tx_array
    return doppler_nlos(los_distance(q, p, state), rx.velocity, tx.velocity, state.wavelength)


def _los_gains(state: ChannelState) -> np.ndarray:
    """Unweighted LOS gains of all pairs, shape (M_R, M_T)."""
    rx_pos = state.rx_array.positions_at(state.time)
    tx_pos = state.tx_array.positions_at(state.time)
    towards_rx = rx_pos[:, None, :] - tx_pos[None, :, :]

    tx, rx = state.tx_array, state.rx_array
    tx_v, tx_h = field_components(tx.element_pattern, towards_rx, tx.rotation)
    rx_v, rx_h = field_components(rx.element_pattern, -towards_rx, rx.rotation)

    polarization = tx_v * rx_v - tx_h * rx_h
    phase = state.los_phase + state.los_wavefront_phase + state.los_doppler_phase
    return np.exp(1j * phase) * polarization


def los_gain(q: int, p: int, state: ChannelState) -> complex:
    """LOS gain of one pair before the Rician weighting."""
    _check_pair(state, q, p)
    return complex(_los_gains(state)[q, p])


def _ray_fields(cluster: Cluster, state: ChannelState) -> Tuple[np.ndarray, ...]:
    """(rx_v, rx_h) of shape (M_R, M) and (tx_v, tx_h) of shape (M_T, M)."""
    vectors = cluster_vectors(cluster, state)
    rx_v, rx_h = field_components(
        state.rx_array.element_pattern, vectors.rx_element, state.rx_array.rotation
    )
    tx_v, tx_h = field_components(
        state.tx_array.element_pattern, vectors.tx_element, state.tx_array.rotation
    )
    return rx_v, rx_h, tx_v, tx_h


def cluster_gain_matrix(
    cluster: Cluster, state: ChannelState, ray_powers: np.ndarray
) -> np.ndarray:
    """
    Complex gains of every ray of a cluster for every antenna pair.

    Args:
        cluster: The cluster
        state: Current channel state
        ray_powers: Normalized ray powers including fade ramps

    Returns:
        Array of shape (M_R, M_T, M_n); zero where the cluster is not in S_qp
    """
    rx_v, rx_h, tx_v, tx_h = _ray_fields(cluster, state)
    phases = np.exp(1j * cluster.ray_phases)
    root_kappa = math.sqrt(state.cross_polarization_ratio)

    inner_v = phases[:, 0] * rx_v + root_kappa * phases[:, 1] * rx_h
    inner_h = root_kappa * phases[:, 2] * rx_v + phases[:, 3] * rx_h
    gains = inner_v[:, None, :] * tx_v[None, :, :] + inner_h[:, None, :] * tx_h[None, :, :]

    gains = gains * np.sqrt(ray_powers)[None, None, :]
    rx_phase = cluster.rx_phase + cluster.rx_wavefront_phase
    tx_phase = cluster.tx_phase + cluster.tx_wavefront_phase
    gains = gains * np.exp(1j * rx_phase)[:, None, :]
    gains = gains * np.exp(1j * tx_phase)[None, :, :]

    visibility = state.visibility
    visible = visibility.rx_mask(cluster.id)[:, None] & visibility.tx_mask(cluster.id)[None, :]
    return np.where(visible[:, :, None], gains, 0.0)


def normalized_ray_powers(state: ChannelState) -> Dict[int, np.ndarray]:
    """Ray powers of observable clusters normalized to unit sum, times fade ramps."""
    observable = state.observable_clusters()
    total = sum(float(cluster.ray_powers.sum()) for cluster in observable)
    if total <= 0:
        return {cluster.id: np.zeros(cluster.num_rays) for cluster in observable}
    return {
        cluster.id: cluster.ray_powers / total * cluster.fade_weight(state.time)
        for cluster in observable
    }


def nlos_gain(q: int, p: int, cluster: Cluster, ray: int, state: ChannelState) -> complex:
    """Gain of one ray for one pair before the Rician weighting; 0 outside S_qp."""
    _check_pair(state, q, p)
    if cluster.id not in state.visibility.shared(q, p):
        return 0j
    powers = normalized_ray_powers(state)[cluster.id]
    return complex(cluster_gain_matrix(cluster, state, powers)[q, p, ray])


def nlos_delay(cluster: Cluster, state: ChannelState) -> float:
    return cluster_delay(
        cluster, state.rx_array.center_at(state.time), state.tx_array.center_at(state.time)
    )


def rician_weights(k_factor: float) -> Tuple[float, float]:
    """(LOS amplitude weight, NLOS amplitude weight)."""
    if math.isinf(k_factor):
        return 1.0, 0.0
    return math.sqrt(k_factor / (k_factor + 1.0)), math.sqrt(1.0 / (k_factor + 1.0))


def snapshot(state: ChannelState) -> CirSnapshot:
    """Assemble the impulse response of every antenna pair at the state's time."""
    num_rx, num_tx = state.rx_array.num_elements, state.tx_array.num_elements
    los_weight, nlos_weight = rician_weights(state.rician_factor)
    powers = normalized_ray_powers(state)

    delays, ray_powers, ids, gains = [], [], [], []
    for cluster in state.observable_clusters():
        cluster_powers = powers[cluster.id]
        delays.append(nlos_delay(cluster, state) + cluster.ray_delays)
        ray_powers.append(cluster_powers)
        ids.append(np.full(cluster.num_rays, cluster.id, dtype=np.int64))
        gains.append(nlos_weight * cluster_gain_matrix(cluster, state, cluster_powers))

    if gains:
        result = CirSnapshot(
            time=state.time,
            ray_delays=np.concatenate(delays),
            ray_powers=np.concatenate(ray_powers),
            ray_cluster_ids=np.concatenate(ids),
            gains=np.concatenate(gains, axis=2),
        )
    else:
        result = CirSnapshot(
            time=state.time,
            ray_delays=np.zeros(0),
            ray_powers=np.zeros(0),
            ray_cluster_ids=np.zeros(0, dtype=np.int64),
            gains=np.zeros((num_rx, num_tx, 0), dtype=complex),
        )

    if state.rician_factor > 0:
        separation = state.rx_array.center_at(state.time) - state.tx_array.center_at(state.time)
        result.los_delay = float(np.linalg.norm(separation) / SPEED_OF_LIGHT)
        result.los_gains = los_weight * _los_gains(state)
    return result


def accumulate_doppler_phases(state: ChannelState, dt: float) -> None:
    """Advance every Doppler phase by 2 pi f(t) dt using the Doppler at the current time."""
    wavelength = state.wavelength
    rx_pos = state.rx_array.positions_at(state.time)
    tx_pos = state.tx_array.positions_at(state.time)
    v_rx = state.rx_array.velocity_array()
    v_tx = state.tx_array.velocity_array()

    if state.rician_factor > 0:
        los = rx_pos[:, None, :] - tx_pos[None, :, :]
        f_los = doppler_shifts(los, v_rx - v_tx, wavelength)
        state.los_doppler_phase = state.los_doppler_phase + 2.0 * math.pi * dt * f_los

    for cluster in state.clusters:
        rx_vectors = cluster.ray_last_bounce[None, :, :] - rx_pos[:, None, :]
        tx_vectors = cluster.ray_first_bounce[None, :, :] - tx_pos[:, None, :]
        v_last = cluster.last_bounce_velocity.to_array()
        v_first = cluster.first_bounce_velocity.to_array()
        f_rx = doppler_shifts(rx_vectors, v_rx - v_last, wavelength)
        f_tx = doppler_shifts(tx_vectors, v_tx - v_first, wavelength)
        cluster.rx_phase = cluster.rx_phase + 2.0 * math.pi * dt * f_rx
        cluster.tx_phase = cluster.tx_phase + 2.0 * math.pi * dt * f_tx


def step(state: ChannelState, dt: float, rng: Optional[np.random.Generator] = None) -> ChannelState:
    """Accumulate Doppler phases over dt, then evolve the cluster set."""
    if dt <= 0:
        raise ValueError(f"Time step must be positive, got {dt}")
    accumulate_doppler_phases(state, dt)
    return evolve_time_step(state, dt, rng)


def iter_realization(
    config: ScenarioConfig,
    duration: Optional[float] = None,
    dt: Optional[float] = None,
    seed: Optional[int] = None,
) -> Iterator[CirSnapshot]:
    """
    Lazily generate the snapshots of one realization.

    Yields round(duration / dt) snapshots at t = 0, dt, 2 dt, ...
    """
    duration = config.duration if duration is None else duration
    dt = config.time_step if dt is None else dt
    seed = config.seed if seed is None else seed
    if duration <= 0 or dt <= 0:
        raise ValueError("Duration and time step must be positive")

    count = max(int(round(duration / dt)), 1)
    state = initialize_state(config, seed)
    for index in range(count):
        yield snapshot(state)
        if index < count - 1:
            step(state, dt)


def run_realization(
    config: ScenarioConfig,
    duration: Optional[float] = None,
    dt: Optional[float] = None,
    seed: Optional[int] = None,
) -> List[CirSnapshot]:
    """Run one realization; identical arguments give bit-identical snapshots."""
    snapshots = list(iter_realization(config, duration, dt, seed))
    logger.info(
        f"Realization '{config.name}' seed={config.seed if seed is None else seed}: "
        f"{len(snapshots)} snapshots"
    )
    return snapshots


def run_ensemble(
    config: ScenarioConfig,
    seeds: Sequence[int],
    duration: Optional[float] = None,
    dt: Optional[float] = None,
    workers: int = 1,
) -> List[List[CirSnapshot]]:
    """
    Run one realization per seed, in seed order.

    Args:
        config: Scenario configuration
        seeds: One seed per realization
        duration: Override of config.duration
        dt: Override of config.time_step
        workers: Process count; 1 runs in the calling process

    Returns:
        One snapshot list per seed, ordered like ``seeds``
    """
    if not seeds:
        raise ValueError("An ensemble needs at least one seed")
    if workers <= 1 or len(seeds) == 1:
        return [run_realization(config, duration, dt, seed) for seed in seeds]

    with ProcessPoolExecutor(max_workers=workers) as executor:
        futures = [
            executor.submit(run_realization, config, duration, dt, seed) for seed in seeds
        ]
        return [future.result() for future in futures]
