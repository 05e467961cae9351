"""
Statistical properties of simulated channels.

Everything here is a pure function of snapshots (or of a channel state for the
analytic ACF). Ensembles are sequences of realizations, each a time-ordered
sequence of CirSnapshot objects as returned by channel.run_ensemble.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.signal import find_peaks

from channel import ChannelState, CirSnapshot, doppler_shifts, normalized_ray_powers
from clusters import Cluster, power_evolution, survival_probability_between
from geometry import SPEED_OF_LIGHT, field_components
from scenarios import ScenarioConfig

logger = logging.getLogger(__name__)

Ensemble = Sequence[Sequence[CirSnapshot]]

_TINY = 1e-300


class StatisticKind(str, Enum):
    ACF = "acf"
    SPACE_CCF = "space-ccf"
    STATIONARY_INTERVAL_CCDF = "stationary-interval-ccdf"
    COHERENCE_BANDWIDTH_CDF = "coherence-bandwidth-cdf"
    RMS_DELAY_CCDF = "rms-delay-ccdf"


class DistributionMode(str, Enum):
    CDF = "cdf"
    CCDF = "ccdf"


class StatisticSettings(BaseModel):
    """Knobs of the statistic pipelines."""

    model_config = ConfigDict(frozen=True)

    delay_resolution: float = Field(5e-9, gt=0, description="PDP binning grid in seconds")
    stationarity_threshold: float = Field(0.8, gt=0, lt=1)
    interval_stride: int = Field(
        50, ge=1, description="Snapshots between stationary-interval start points"
    )
    snapshot_stride: int = Field(
        10, ge=1, description="Snapshots between samples of per-snapshot statistics"
    )
    frequency_span: float = Field(4e6, gt=0, description="Width of the frequency grid in Hz")
    frequency_points: int = Field(801, ge=2)
    coherence_threshold: float = Field(0.9, gt=0, lt=1)
    rx_antenna: int = Field(0, ge=0)
    tx_antenna: int = Field(0, ge=0)
    space_side: Literal["rx", "tx"] = "rx"
    frequency_offset: float = Field(0.0, description="Baseband frequency of ACF and CCF in Hz")

    @classmethod
    def for_scenario(cls, config: ScenarioConfig, **updates) -> "StatisticSettings":
        """Default settings on the scenario's PDP delay grid."""
        return cls(delay_resolution=config.delay_resolution, **updates)

    def frequency_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.frequency_span, self.frequency_points)


@dataclass(frozen=True)
class Pdp:
    """Delay-power pairs sorted by delay."""

    time: float
    delays: np.ndarray
    powers: np.ndarray

    @property
    def total_power(self) -> float:
        return float(self.powers.sum())

    def __len__(self) -> int:
        return len(self.delays)


@dataclass(frozen=True)
class StationaryInterval:
    value: float
    censored: bool


@dataclass(frozen=True)
class CoherenceBandwidth:
    value: float
    censored: bool


@dataclass(frozen=True)
class CorrelationResult:
    """
    A correlation curve over one lag axis.

    ``axis`` is "time" (seconds), "frequency" (Hz) or "antenna" (element index
    separation).
    """

    lags: np.ndarray
    values: np.ndarray
    normalized: bool
    axis: str = "time"

    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    def normalized_by(self, reference: complex) -> "CorrelationResult":
        if reference == 0:
            raise ValueError("Cannot normalize by a zero correlation")
        return CorrelationResult(self.lags, self.values / reference, True, self.axis)


@dataclass(frozen=True)
class AngularSpectrum:
    angles: np.ndarray
    power: np.ndarray

    def peak_angle(self) -> float:
        return float(self.angles[int(np.argmax(self.power))])


@dataclass(frozen=True)
class StatisticCurve:
    kind: StatisticKind
    x: np.ndarray
    y: np.ndarray
    censored_fraction: float = 0.0


@dataclass(frozen=True)
class EmpiricalDistribution:
    """
    Empirical distribution of a sample set, possibly right-censored.

    Censored samples enter at their censoring value; ``censored_fraction``
    reports how many there were.
    """

    values: np.ndarray
    mode: DistributionMode = DistributionMode.CDF
    censored: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.values)

    def cdf(self, x) -> np.ndarray:
        return np.searchsorted(self.values, np.asarray(x, dtype=float), side="right") / len(
            self.values
        )

    def ccdf(self, x) -> np.ndarray:
        return 1.0 - self.cdf(x)

    def __call__(self, x) -> np.ndarray:
        return self.cdf(x) if self.mode == DistributionMode.CDF else self.ccdf(x)

    def interpolate(self, x) -> np.ndarray:
        """Piecewise-linear version of the distribution through the sample points."""
        support = np.unique(self.values)
        x = np.asarray(x, dtype=float)
        cdf = np.interp(x, support, self.cdf(support), left=0.0, right=1.0)
        return cdf if self.mode == DistributionMode.CDF else 1.0 - cdf

    def median(self) -> float:
        return float(np.median(self.values))

    @property
    def censored_fraction(self) -> float:
        if self.censored is None:
            return 0.0
        return float(np.mean(self.censored))


def empirical_distribution(
    samples, mode: DistributionMode = DistributionMode.CDF, censored=None
) -> EmpiricalDistribution:
    """
    Raises:
        ValueError: If there are no samples
    """
    values = np.asarray(samples, dtype=float).ravel()
    if values.size == 0:
        raise ValueError("An empirical distribution needs at least one sample")
    order = np.argsort(values, kind="stable")
    flags = None
    if censored is not None:
        flags = np.asarray(censored, dtype=bool).ravel()
        if flags.shape != values.shape:
            raise ValueError("Censoring flags must match the samples")
        flags = flags[order]
    return EmpiricalDistribution(values[order], DistributionMode(mode), flags)


# ---------------------------------------------------------------------------
# Power delay profile
# ---------------------------------------------------------------------------


def pdp(snapshot: CirSnapshot) -> Pdp:
    """Delay-power pairs of every observable ray (the LOS tap is not included)."""
    order = np.argsort(snapshot.ray_delays, kind="stable")
    return Pdp(snapshot.time, snapshot.ray_delays[order], snapshot.ray_powers[order])


def _binned(profile: Pdp, resolution: float) -> Tuple[np.ndarray, np.ndarray]:
    bins = np.rint(profile.delays / resolution).astype(np.int64)
    unique, inverse = np.unique(bins, return_inverse=True)
    return unique, np.bincount(inverse, weights=profile.powers, minlength=len(unique))


def pdp_acf(first: Pdp, second: Pdp, resolution: float = 5e-9) -> float:
    """
    Normalized correlation of two PDPs on a shared delay grid.

    The inner product is divided by the larger of the two energies, so the
    result lies in [0, 1] and equals 1 for identical profiles.

    Raises:
        ValueError: If either PDP is empty or has zero energy
    """
    if len(first) == 0 or len(second) == 0:
        raise ValueError("PDP correlation needs non-empty profiles")
    first_bins, first_power = _binned(first, resolution)
    second_bins, second_power = _binned(second, resolution)

    grid = np.union1d(first_bins, second_bins)
    a = np.zeros(len(grid))
    b = np.zeros(len(grid))
    a[np.searchsorted(grid, first_bins)] = first_power
    b[np.searchsorted(grid, second_bins)] = second_power

    energy = max(float(a @ a), float(b @ b))
    if energy <= 0:
        raise ValueError("PDP correlation undefined for a zero-energy profile")
    return float(a @ b) / energy


def stationary_interval(
    pdps: Sequence[Pdp], t_index: int, threshold: float = 0.8, resolution: float = 5e-9
) -> StationaryInterval:
    """
    Time until the PDP correlation with pdps[t_index] first drops to the threshold.

    Returns the remaining window length flagged as censored when the correlation
    never drops that far.

    Raises:
        ValueError: If fewer than two PDPs are given or t_index is out of range
    """
    if len(pdps) < 2:
        raise ValueError("A stationary interval needs at least two PDPs")
    if not 0 <= t_index < len(pdps):
        raise ValueError(f"Start index {t_index} out of range")
    reference = pdps[t_index]
    for later in pdps[t_index + 1 :]:
        if pdp_acf(reference, later, resolution) <= threshold:
            return StationaryInterval(later.time - reference.time, False)
    return StationaryInterval(pdps[-1].time - reference.time, True)


def rms_delay_spread(profile: Pdp) -> float:
    """
    Raises:
        ValueError: If the PDP has no power
    """
    total = profile.total_power
    if total <= 0:
        raise ValueError("RMS delay spread undefined for a zero-power PDP")
    mean = float(profile.powers @ profile.delays) / total
    variance = float(profile.powers @ (profile.delays - mean) ** 2) / total
    return math.sqrt(max(variance, 0.0))


# ---------------------------------------------------------------------------
# Transfer function and correlation functions
# ---------------------------------------------------------------------------


def transfer_function(snapshot: CirSnapshot, freq_grid) -> np.ndarray:
    """
    Fourier transform of the impulse response over delay.

    Returns:
        Complex array of shape (M_R, M_T, len(freq_grid))
    """
    grid = np.atleast_1d(np.asarray(freq_grid, dtype=float))
    if grid.size == 0:
        raise ValueError("Frequency grid must not be empty")
    kernel = np.exp(-2j * np.pi * np.outer(snapshot.ray_delays, grid))
    response = snapshot.gains @ kernel
    if snapshot.los_gains is not None and snapshot.los_delay is not None:
        los_kernel = np.exp(-2j * np.pi * grid * snapshot.los_delay)
        response = response + snapshot.los_gains[:, :, None] * los_kernel[None, None, :]
    return response


def _pair_transfer(snapshot: CirSnapshot, q: int, p: int, xi: float) -> complex:
    if not 0 <= q < snapshot.num_rx or not 0 <= p < snapshot.num_tx:
        raise IndexError(f"Antenna pair ({q}, {p}) out of range")
    value = complex(np.sum(snapshot.gains[q, p] * np.exp(-2j * np.pi * xi * snapshot.ray_delays)))
    if snapshot.los_gains is not None and snapshot.los_delay is not None:
        value += complex(snapshot.los_gains[q, p] * np.exp(-2j * np.pi * xi * snapshot.los_delay))
    return value


def _snapshot_at(realization: Sequence[CirSnapshot], t: float) -> CirSnapshot:
    """Snapshot nearest to time t; t must fall within half a step of one."""
    if not realization:
        raise ValueError("Empty realization")
    times = np.array([snap.time for snap in realization])
    index = int(np.argmin(np.abs(times - t)))
    tolerance = 0.5 * (times[1] - times[0]) if len(times) > 1 else 0.0
    if abs(times[index] - t) > tolerance + 1e-12:
        raise ValueError(f"Time {t} lies outside the realization")
    return realization[index]


def _check_ensemble(ensemble: Ensemble) -> None:
    if len(ensemble) == 0:
        raise ValueError("Ensemble must contain at least one realization")
    if any(len(realization) == 0 for realization in ensemble):
        raise ValueError("Every realization needs at least one snapshot")


def stfcf(
    ensemble: Ensemble,
    q: int,
    p: int,
    q2: int,
    p2: int,
    delta_xi: float,
    delta_t: float,
    xi: float = 0.0,
    t: float = 0.0,
) -> complex:
    """
    Space-time-frequency correlation E[H*_qp(xi, t) H_q2p2(xi + delta_xi, t + delta_t)].

    The expectation is the mean over the realizations of the ensemble.

    Raises:
        ValueError: If the ensemble is empty or a time is outside a realization
    """
    _check_ensemble(ensemble)
    products = []
    for realization in ensemble:
        first = _pair_transfer(_snapshot_at(realization, t), q, p, xi)
        second = _pair_transfer(_snapshot_at(realization, t + delta_t), q2, p2, xi + delta_xi)
        products.append(first.conjugate() * second)
    return complex(np.mean(np.array(products)))


def time_acf(
    ensemble: Ensemble, q: int, p: int, delta_t: float, xi: float = 0.0, t: float = 0.0
) -> complex:
    return stfcf(ensemble, q, p, q, p, 0.0, delta_t, xi, t)


def rx_space_ccf(
    ensemble: Ensemble, q: int, q2: int, p: int = 0, xi: float = 0.0, t: float = 0.0
) -> complex:
    return stfcf(ensemble, q, p, q2, p, 0.0, 0.0, xi, t)


def tx_space_ccf(
    ensemble: Ensemble, p: int, p2: int, q: int = 0, xi: float = 0.0, t: float = 0.0
) -> complex:
    return stfcf(ensemble, q, p, q, p2, 0.0, 0.0, xi, t)


def frequency_cf(
    ensemble: Ensemble, q: int, p: int, delta_xi: float, xi: float = 0.0, t: float = 0.0
) -> complex:
    return stfcf(ensemble, q, p, q, p, delta_xi, 0.0, xi, t)


def acf_curve(
    ensemble: Ensemble,
    q: int,
    p: int,
    lags,
    xi: float = 0.0,
    t: float = 0.0,
    normalize: bool = True,
) -> CorrelationResult:
    """Time ACF over a lag grid, optionally normalized by its zero-lag value."""
    lags = np.asarray(lags, dtype=float)
    values = np.array([time_acf(ensemble, q, p, lag, xi, t) for lag in lags])
    result = CorrelationResult(lags, values, False, "time")
    if normalize:
        result = result.normalized_by(time_acf(ensemble, q, p, 0.0, xi, t))
    return result


def frequency_cf_curve(
    ensemble: Ensemble,
    q: int,
    p: int,
    delta_xis,
    xi: float = 0.0,
    t: float = 0.0,
    normalize: bool = True,
) -> CorrelationResult:
    delta_xis = np.asarray(delta_xis, dtype=float)
    values = np.array([frequency_cf(ensemble, q, p, d, xi, t) for d in delta_xis])
    result = CorrelationResult(delta_xis, values, False, "frequency")
    if normalize:
        result = result.normalized_by(frequency_cf(ensemble, q, p, 0.0, xi, t))
    return result


def space_ccf_curve(
    ensemble: Ensemble,
    side: Literal["rx", "tx"] = "rx",
    other: int = 0,
    xi: float = 0.0,
    t: float = 0.0,
) -> CorrelationResult:
    """
    Normalized space CCF magnitude against element separation.

    For each separation k the normalized |CCF| of every pair (a, a + k) along
    the chosen array is averaged over the reference elements a. ``other`` is
    the fixed antenna index on the opposite side.
    """
    _check_ensemble(ensemble)
    samples = []
    for realization in ensemble:
        response = transfer_function(_snapshot_at(realization, t), [xi])[:, :, 0]
        samples.append(response[:, other] if side == "rx" else response[other, :])
    h = np.array(samples)
    covariance = h.conj().T @ h / len(h)
    power = np.real(np.diag(covariance))

    count = h.shape[1]
    values = np.zeros(count)
    for separation in range(count):
        ratios = []
        for a in range(count - separation):
            b = a + separation
            scale = math.sqrt(power[a] * power[b])
            ratios.append(abs(covariance[a, b]) / scale if scale > 0 else 0.0)
        values[separation] = float(np.mean(ratios))
    return CorrelationResult(np.arange(count, dtype=float), values, True, "antenna")


# ---------------------------------------------------------------------------
# Per-cluster ACF along a deterministic trajectory
# ---------------------------------------------------------------------------


def _lag_grid(lags) -> Tuple[np.ndarray, bool]:
    lags = np.asarray(lags, dtype=float)
    if lags.size == 0 or np.any(lags < 0) or np.any(np.diff(lags) <= 0):
        raise ValueError("Lags must be non-negative and strictly increasing")
    if lags[0] == 0:
        return lags, False
    return np.concatenate([[0.0], lags]), True


def _trajectory_terms(
    state: ChannelState, cluster: Cluster, grid: np.ndarray, q: int, p: int, xi: float
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Phase-free ray coefficients along the trajectory and the survival envelope.

    Returns:
        (coefficients of shape (len(grid), M_n, 4), survival of shape (len(grid),))
        where the last axis follows the VV, VH, HV, HH polarization order.
    """
    config = state.config
    params = config.evolution
    rx, tx = state.rx_array, state.tx_array
    t0 = state.time
    wavelength = state.wavelength
    root_kappa = math.sqrt(state.cross_polarization_ratio)

    powers = normalized_ray_powers(state).get(cluster.id)
    if powers is None or cluster.id not in state.visibility.shared(q, p):
        powers = np.zeros(cluster.num_rays)

    v_last = cluster.last_bounce_velocity.to_array()
    v_first = cluster.first_bounce_velocity.to_array()
    mean_virtual = params.virtual_delay_scale * params.delay_scaling * cluster.delay_spread

    coefficients = np.zeros((len(grid), cluster.num_rays, 4), dtype=complex)
    phase = np.zeros(cluster.num_rays)
    previous_delay = 0.0
    previous_doppler = np.zeros(cluster.num_rays)
    for k, lag in enumerate(grid):
        t = t0 + lag
        rx_pos = rx.positions_at(t)[q]
        tx_pos = tx.positions_at(t)[p]
        ray_last = cluster.ray_last_bounce + v_last * lag
        ray_first = cluster.ray_first_bounce + v_first * lag

        if params.virtual_link_coherence is None:
            virtual = cluster.virtual_delay
        else:
            decay = math.exp(-lag / params.virtual_link_coherence)
            virtual = decay * cluster.virtual_delay + (1.0 - decay) * mean_virtual
        path = np.linalg.norm(cluster.last_bounce + v_last * lag - rx.center_at(t))
        path += np.linalg.norm(cluster.first_bounce + v_first * lag - tx.center_at(t))
        delay = float(path / SPEED_OF_LIGHT + virtual)

        if k > 0:
            phase = phase + 2.0 * math.pi * previous_doppler * (lag - grid[k - 1])
            if config.switches.power_evolution:
                exponent = config.switches.power_exponent
                powers = power_evolution(
                    powers, previous_delay, delay, cluster.ray_delays, exponent
                )

        rx_vectors = ray_last - rx_pos
        tx_vectors = ray_first - tx_pos
        rx_v, rx_h = field_components(rx.element_pattern, rx_vectors, rx.rotation)
        tx_v, tx_h = field_components(tx.element_pattern, tx_vectors, tx.rotation)
        polarization = np.stack(
            [tx_v * rx_v, root_kappa * tx_v * rx_h, root_kappa * tx_h * rx_v, tx_h * rx_h],
            axis=-1,
        )
        rotation = np.exp(1j * phase - 2j * np.pi * xi * (delay + cluster.ray_delays))
        coefficients[k] = (np.sqrt(powers) * rotation)[:, None] * polarization

        previous_delay = delay
        previous_doppler = doppler_shifts(
            rx_vectors, rx.velocity_array() - v_last, wavelength
        ) + doppler_shifts(tx_vectors, tx.velocity_array() - v_first, wavelength)

    if config.switches.time_evolution:
        survival = np.array([survival_probability_between(params, 0.0, 0.0, s) for s in grid])
    else:
        survival = np.ones(len(grid))
    return coefficients, survival


def analytical_acf_per_cluster(
    state: ChannelState, cluster: Cluster, lags, q: int = 0, p: int = 0, xi: float = 0.0
) -> CorrelationResult:
    """
    ACF of one cluster's contribution with the phase expectation taken in closed form.

    Geometry, delays and powers follow the cluster's deterministic trajectory
    from the state's time; the random ray phases cancel pairwise and the result
    is weighted by the probability that the cluster is still alive. The curve is
    not normalized.
    """
    grid, prepended = _lag_grid(lags)
    coefficients, survival = _trajectory_terms(state, cluster, grid, q, p, xi)
    values = survival * np.einsum("mi,kmi->k", coefficients[0].conj(), coefficients)
    if prepended:
        values = values[1:]
        grid = grid[1:]
    return CorrelationResult(grid, values, False, "time")


def simulated_acf_per_cluster(
    state: ChannelState,
    cluster: Cluster,
    lags,
    q: int = 0,
    p: int = 0,
    xi: float = 0.0,
    trials: int = 20_000,
    rng: Optional[np.random.Generator] = None,
    batch: int = 1_000,
) -> CorrelationResult:
    """
    Monte-Carlo counterpart of analytical_acf_per_cluster.

    Each trial redraws the four polarization phases of every ray and an
    exponential death time with the time-axis recombination rate, then averages
    the conjugate product of the cluster's gain along the same trajectory.
    """
    if trials < 1:
        raise ValueError("At least one trial is needed")
    rng = rng if rng is not None else np.random.default_rng(0)
    grid, prepended = _lag_grid(lags)
    coefficients, _ = _trajectory_terms(state, cluster, grid, q, p, xi)
    flat = coefficients.reshape(len(grid), -1)

    params = state.config.evolution
    rate = (
        params.recombination_rate
        * params.moving_fraction
        * (params.mean_speed_rx + params.mean_speed_tx)
        / params.space_coherence_distance
    )
    dies = state.config.switches.time_evolution and rate > 0

    total = np.zeros(len(grid), dtype=complex)
    done = 0
    while done < trials:
        size = min(batch, trials - done)
        phases = np.exp(2j * np.pi * rng.random((size, flat.shape[1])))
        gains = phases @ flat.T
        products = gains[:, :1].conj() * gains
        if dies:
            death = rng.exponential(1.0 / rate, size)
            products = products * (grid[None, :] < death[:, None])
        total += products.sum(axis=0)
        done += size

    values = total / trials
    if prepended:
        values = values[1:]
        grid = grid[1:]
    return CorrelationResult(grid, values, False, "time")


# ---------------------------------------------------------------------------
# Coherence bandwidth
# ---------------------------------------------------------------------------


def coherence_bandwidth_90(
    transfer: np.ndarray, freq_grid, threshold: float = 0.9
) -> CoherenceBandwidth:
    """
    Smallest frequency separation where the normalized |FCF| drops below threshold.

    The FCF at separation k steps is the average of H*(xi) H(xi + k) over the
    frequency grid and over every leading index of ``transfer`` (antenna pairs).
    The crossing is linearly interpolated between grid steps. Lags beyond half
    the grid are not searched; no crossing gives a censored result at that lag.

    This is the frequency reduction of stfcf for a single snapshot, averaged over
    the grid instead of the ensemble, and computed for all lags at once by FFT
    autocorrelation.

    Args:
        transfer: Complex samples whose last axis runs over freq_grid
        freq_grid: Uniform frequency grid in Hz
        threshold: Correlation level

    Raises:
        ValueError: If the grid is not uniform or the transfer function is zero
    """
    grid = np.asarray(freq_grid, dtype=float)
    samples = np.asarray(transfer).reshape(-1, grid.size)
    if grid.size < 2:
        raise ValueError("Coherence bandwidth needs at least two frequencies")
    steps = np.diff(grid)
    spacing = float(steps[0])
    if spacing <= 0 or not np.allclose(steps, spacing, rtol=1e-9, atol=0.0):
        raise ValueError("Frequency grid must be uniform and increasing")

    count = grid.size
    spectrum = np.fft.fft(samples, 2 * count, axis=1)
    correlation = np.fft.ifft(np.abs(spectrum) ** 2, axis=1)[:, :count].sum(axis=0)
    correlation = correlation / (len(samples) * (count - np.arange(count)))
    if abs(correlation[0]) <= 0:
        raise ValueError("Coherence bandwidth undefined for a zero transfer function")
    magnitude = np.abs(correlation) / abs(correlation[0])

    limit = count // 2
    below = np.nonzero(magnitude[1 : limit + 1] < threshold)[0]
    if below.size == 0:
        return CoherenceBandwidth(limit * spacing, True)
    k = int(below[0]) + 1
    fraction = (magnitude[k - 1] - threshold) / (magnitude[k - 1] - magnitude[k])
    return CoherenceBandwidth((k - 1 + fraction) * spacing, False)


# ---------------------------------------------------------------------------
# Smooth MUSIC
# ---------------------------------------------------------------------------


def smoothed_covariance(samples: np.ndarray, subarray_size: int = 3) -> np.ndarray:
    """
    Forward spatially smoothed covariance.

    Args:
        samples: Array snapshots of shape (M,) or (M, K)

    Raises:
        ValueError: If the array has fewer elements than the subarray
    """
    data = np.asarray(samples, dtype=complex)
    if data.ndim == 1:
        data = data[:, None]
    elements, count = data.shape
    if subarray_size < 1 or elements < subarray_size:
        raise ValueError(f"Need at least {subarray_size} antennas, got {elements}")
    windows = elements - subarray_size + 1
    covariance = np.zeros((subarray_size, subarray_size), dtype=complex)
    for start in range(windows):
        block = data[start : start + subarray_size]
        covariance += block @ block.conj().T
    return covariance / (windows * count)


def signal_subspace_dimension(covariance: np.ndarray) -> int:
    """Eigenvalues above ten times the smallest one, capped at size - 1."""
    eigenvalues = np.linalg.eigvalsh(covariance)
    floor = max(float(eigenvalues[0]), np.finfo(float).eps * float(eigenvalues[-1]), _TINY)
    return min(int(np.sum(eigenvalues > 10.0 * floor)), len(eigenvalues) - 1)


def steering_vectors(
    size: int, angles: np.ndarray, spacing_wavelengths: float = 0.5
) -> np.ndarray:
    """Linear-array steering vectors, shape (size, len(angles))."""
    k = np.arange(size)[:, None]
    return np.exp(2j * np.pi * spacing_wavelengths * k * np.sin(np.asarray(angles))[None, :])


def smooth_music_aps(
    samples: np.ndarray,
    subarray_size: int = 3,
    angles: Optional[np.ndarray] = None,
    num_sources: Optional[int] = None,
    spacing_wavelengths: float = 0.5,
) -> AngularSpectrum:
    """
    Smooth-MUSIC angular power spectrum normalized to a unit peak.

    Angles are measured from the array broadside in radians; the default grid
    spans [-pi/2, pi/2] in 0.1 degree steps.
    """
    covariance = smoothed_covariance(samples, subarray_size)
    if angles is None:
        angles = np.deg2rad(np.linspace(-90.0, 90.0, 1801))
    if num_sources is None:
        num_sources = signal_subspace_dimension(covariance)
    if not 0 <= num_sources < subarray_size:
        raise ValueError(f"Source count must be in [0, {subarray_size - 1}]")

    _, eigenvectors = np.linalg.eigh(covariance)
    noise = eigenvectors[:, : subarray_size - num_sources]
    projection = noise.conj().T @ steering_vectors(subarray_size, angles, spacing_wavelengths)
    denominator = np.sum(np.abs(projection) ** 2, axis=0)
    power = 1.0 / np.maximum(denominator, _TINY)
    return AngularSpectrum(np.asarray(angles), power / power.max())


def spectrum_peaks(spectrum: AngularSpectrum, prominence_db: float = 3.0) -> np.ndarray:
    """Angles of the spectrum peaks standing at least prominence_db above their base."""
    level = 10.0 * np.log10(np.maximum(spectrum.power, _TINY))
    indices, _ = find_peaks(level, prominence=prominence_db)
    return spectrum.angles[indices]


def window_spectra(
    snapshot: CirSnapshot,
    freq_grid,
    window: int,
    subarray_size: int = 3,
    angles: Optional[np.ndarray] = None,
) -> List[AngularSpectrum]:
    """
    APS of each sliding window of ``window`` receive antennas.

    Frequencies and transmit antennas serve as the snapshots of each window.
    """
    response = transfer_function(snapshot, freq_grid)
    samples = response.reshape(snapshot.num_rx, -1)
    if window > snapshot.num_rx:
        raise ValueError(f"Window of {window} exceeds {snapshot.num_rx} receive antennas")
    return [
        smooth_music_aps(samples[start : start + window], subarray_size, angles)
        for start in range(snapshot.num_rx - window + 1)
    ]


def aps_table(snapshot: CirSnapshot, freq_grid, window: int) -> Dict[str, np.ndarray]:
    """Window index, angle in degrees and power of every sliding-window APS, stacked."""
    spectra = window_spectra(snapshot, freq_grid, window)
    return {
        "window": np.repeat(np.arange(len(spectra)), len(spectra[0].angles)),
        "angle_deg": np.concatenate([np.rad2deg(spectrum.angles) for spectrum in spectra]),
        "power": np.concatenate([spectrum.power for spectrum in spectra]),
    }


# ---------------------------------------------------------------------------
# Pipelines
# ---------------------------------------------------------------------------


def stationary_interval_samples(
    ensemble: Ensemble, settings: Optional[StatisticSettings] = None
) -> EmpiricalDistribution:
    settings = settings or StatisticSettings()
    values, censored = [], []
    for realization in ensemble:
        profiles = [pdp(snap) for snap in realization]
        for start in range(0, len(profiles) - 1, settings.interval_stride):
            if profiles[start].total_power <= 0:
                continue
            try:
                interval = stationary_interval(
                    profiles,
                    start,
                    settings.stationarity_threshold,
                    settings.delay_resolution,
                )
            except ValueError:
                logger.debug(f"Skipped stationary interval at t={profiles[start].time}")
                continue
            values.append(interval.value)
            censored.append(interval.censored)
    distribution = empirical_distribution(values, DistributionMode.CCDF, censored)
    if distribution.censored_fraction > 0:
        logger.warning(
            f"{distribution.censored_fraction:.1%} of stationary intervals were censored"
        )
    return distribution


def coherence_bandwidth_samples(
    ensemble: Ensemble, settings: Optional[StatisticSettings] = None
) -> EmpiricalDistribution:
    settings = settings or StatisticSettings()
    grid = settings.frequency_grid()
    values, censored = [], []
    for realization in ensemble:
        for snap in realization[:: settings.snapshot_stride]:
            if not np.any(snap.gains) and snap.los_gains is None:
                continue
            bandwidth = coherence_bandwidth_90(
                transfer_function(snap, grid), grid, settings.coherence_threshold
            )
            values.append(bandwidth.value)
            censored.append(bandwidth.censored)
    distribution = empirical_distribution(values, DistributionMode.CDF, censored)
    if distribution.censored_fraction > 0:
        logger.warning(
            f"{distribution.censored_fraction:.1%} of coherence bandwidths were censored"
        )
    return distribution


def rms_delay_samples(
    ensemble: Ensemble, settings: Optional[StatisticSettings] = None
) -> EmpiricalDistribution:
    settings = settings or StatisticSettings()
    values = [
        rms_delay_spread(profile)
        for realization in ensemble
        for profile in (pdp(snap) for snap in realization[:: settings.snapshot_stride])
        if profile.total_power > 0
    ]
    return empirical_distribution(values, DistributionMode.CCDF)


def _ensemble_acf(ensemble: Ensemble, settings: StatisticSettings) -> CorrelationResult:
    """Normalized |ACF| at every snapshot lag from the first snapshot."""
    _check_ensemble(ensemble)
    length = min(len(realization) for realization in ensemble)
    q, p, xi = settings.rx_antenna, settings.tx_antenna, settings.frequency_offset
    series = np.array(
        [
            [_pair_transfer(snap, q, p, xi) for snap in realization[:length]]
            for realization in ensemble
        ]
    )
    values = np.mean(series[:, :1].conj() * series, axis=0)
    lags = np.array([snap.time for snap in ensemble[0][:length]]) - ensemble[0][0].time
    return CorrelationResult(lags, values, False, "time").normalized_by(values[0])


def statistic_curve(
    kind: StatisticKind,
    ensemble: Ensemble,
    x_points=None,
    settings: Optional[StatisticSettings] = None,
) -> StatisticCurve:
    """
    Evaluate one statistic curve over an ensemble.

    Without x_points the curve is given at its natural abscissae (lags,
    separations or the sorted samples). Explicit x_points are served by linear
    interpolation, which is what curve fitting uses.
    """
    settings = settings or StatisticSettings()
    kind = StatisticKind(kind)
    if kind in (StatisticKind.ACF, StatisticKind.SPACE_CCF):
        if kind == StatisticKind.ACF:
            result = _ensemble_acf(ensemble, settings)
        else:
            other = settings.tx_antenna if settings.space_side == "rx" else settings.rx_antenna
            result = space_ccf_curve(
                ensemble, settings.space_side, other, settings.frequency_offset
            )
        magnitude = result.magnitude()
        if x_points is None:
            return StatisticCurve(kind, result.lags, magnitude)
        x = np.asarray(x_points, dtype=float)
        return StatisticCurve(kind, x, np.interp(x, result.lags, magnitude))

    if kind == StatisticKind.STATIONARY_INTERVAL_CCDF:
        distribution = stationary_interval_samples(ensemble, settings)
    elif kind == StatisticKind.COHERENCE_BANDWIDTH_CDF:
        distribution = coherence_bandwidth_samples(ensemble, settings)
    else:
        distribution = rms_delay_samples(ensemble, settings)

    if x_points is None:
        x = np.unique(distribution.values)
        y = distribution(x)
    else:
        x = np.asarray(x_points, dtype=float)
        y = distribution.interpolate(x)
    return StatisticCurve(kind, x, y, distribution.censored_fraction)
