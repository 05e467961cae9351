import math
import unittest

import numpy as np
from numpy.testing import assert_allclose

from channel import CirSnapshot, initialize_state
from scenarios import preset
from stats import (
    DistributionMode,
    Pdp,
    StatisticKind,
    StatisticSettings,
    acf_curve,
    analytical_acf_per_cluster,
    coherence_bandwidth_90,
    empirical_distribution,
    frequency_cf,
    pdp,
    pdp_acf,
    rms_delay_spread,
    rx_space_ccf,
    signal_subspace_dimension,
    simulated_acf_per_cluster,
    smooth_music_aps,
    smoothed_covariance,
    space_ccf_curve,
    spectrum_peaks,
    statistic_curve,
    stationary_interval,
    stfcf,
    steering_vectors,
    time_acf,
    transfer_function,
    tx_space_ccf,
    window_spectra,
)


def make_snapshot(delays, gains, time=0.0, los_delay=None, los_gains=None) -> CirSnapshot:
    """Snapshot from per-ray delays and gains of shape (L,) or (M_R, M_T, L)."""
    gains = np.asarray(gains, dtype=complex)
    if gains.ndim == 1:
        gains = gains[None, None, :]
    delays = np.asarray(delays, dtype=float)
    return CirSnapshot(
        time=time,
        ray_delays=delays,
        ray_powers=np.abs(gains[0, 0]) ** 2,
        ray_cluster_ids=np.zeros(len(delays), dtype=np.int64),
        gains=gains,
        los_delay=los_delay,
        los_gains=los_gains,
    )


def random_ensemble(realizations=40, snapshots=4, num_rx=3, num_tx=2, seed=0):
    rng = np.random.default_rng(seed)
    ensemble = []
    for _ in range(realizations):
        delays = rng.uniform(0.0, 1e-6, 6)
        realization = []
        shape = (num_rx, num_tx, 6)
        for k in range(snapshots):
            gains = rng.normal(size=shape) + 1j * rng.normal(size=shape)
            realization.append(make_snapshot(delays, gains, time=k * 1e-3))
        ensemble.append(realization)
    return ensemble


class TestPowerDelayProfile(unittest.TestCase):
    def test_pdp_sorted_by_delay(self):
        """The PDP lists rays in delay order."""
        profile = pdp(make_snapshot([3e-7, 1e-7, 2e-7], [1.0, 2.0, 3.0]))
        assert_allclose(profile.delays, [1e-7, 2e-7, 3e-7])
        assert_allclose(profile.powers, [4.0, 9.0, 1.0])

    def test_pdp_acf_bounds(self):
        """A PDP correlates to 1 with itself and to 0 with a disjoint one."""
        first = Pdp(0.0, np.array([0.0, 100e-9]), np.array([0.5, 0.5]))
        second = Pdp(1e-3, np.array([300e-9, 400e-9]), np.array([0.5, 0.5]))
        self.assertAlmostEqual(pdp_acf(first, first), 1.0)
        self.assertEqual(pdp_acf(first, second), 0.0)

        partial = Pdp(1e-3, np.array([0.0, 400e-9]), np.array([0.5, 0.5]))
        self.assertAlmostEqual(pdp_acf(first, partial), 0.5)

    def test_pdp_acf_rejects_empty_profiles(self):
        """Empty or zero-energy PDPs have no correlation."""
        empty = Pdp(0.0, np.zeros(0), np.zeros(0))
        silent = Pdp(0.0, np.array([1e-7]), np.array([0.0]))
        with self.assertRaises(ValueError):
            pdp_acf(empty, empty)
        with self.assertRaises(ValueError):
            pdp_acf(silent, silent)

    def test_stationary_interval_first_crossing(self):
        """The interval ends at the first PDP whose correlation drops to the threshold."""
        a = Pdp(0.0, np.array([0.0]), np.array([1.0]))
        profiles = [
            Pdp(0.0, a.delays, a.powers),
            Pdp(1e-3, a.delays, a.powers),
            Pdp(2e-3, np.array([500e-9]), np.array([1.0])),
            Pdp(3e-3, a.delays, a.powers),
        ]
        interval = stationary_interval(profiles, 0)
        self.assertAlmostEqual(interval.value, 2e-3)
        self.assertFalse(interval.censored)

    def test_stationary_interval_censored(self):
        """A window that never decorrelates gives a censored interval."""
        profiles = [Pdp(k * 1e-3, np.array([0.0]), np.array([1.0])) for k in range(4)]
        interval = stationary_interval(profiles, 1)
        self.assertAlmostEqual(interval.value, 2e-3)
        self.assertTrue(interval.censored)
        with self.assertRaises(ValueError):
            stationary_interval(profiles[:1], 0)
        with self.assertRaises(ValueError):
            stationary_interval(profiles, 4)

    def test_rms_delay_spread(self):
        """Two equal taps 100 ns apart spread 50 ns; a single tap does not spread."""
        two = Pdp(0.0, np.array([0.0, 100e-9]), np.array([1.0, 1.0]))
        self.assertAlmostEqual(rms_delay_spread(two), 50e-9)
        one = Pdp(0.0, np.array([42e-9]), np.array([3.0]))
        self.assertEqual(rms_delay_spread(one), 0.0)
        with self.assertRaises(ValueError):
            rms_delay_spread(Pdp(0.0, np.array([1e-7]), np.array([0.0])))


class TestTransferFunction(unittest.TestCase):
    def test_single_tap(self):
        """One tap transforms to a pure phase ramp."""
        grid = np.linspace(0.0, 10e6, 11)
        response = transfer_function(make_snapshot([1e-7], [2.0]), grid)
        self.assertEqual(response.shape, (1, 1, 11))
        assert_allclose(response[0, 0], 2.0 * np.exp(-2j * np.pi * grid * 1e-7))

    def test_los_tap_included(self):
        """The LOS tap adds to the NLOS taps."""
        snap = make_snapshot([0.0], [1.0], los_delay=0.0, los_gains=np.array([[1.0 + 0j]]))
        assert_allclose(transfer_function(snap, [0.0, 1e6])[0, 0], [2.0, 2.0])

    def test_empty_grid_rejected(self):
        """A transfer function needs at least one frequency."""
        with self.assertRaises(ValueError):
            transfer_function(make_snapshot([0.0], [1.0]), [])


class TestCorrelations(unittest.TestCase):
    def test_reductions_match_stfcf(self):
        """ACF, CCFs and FCF are the STFCF with the other offsets at zero."""
        ensemble = random_ensemble()
        self.assertEqual(time_acf(ensemble, 1, 0, 2e-3), stfcf(ensemble, 1, 0, 1, 0, 0.0, 2e-3))
        self.assertEqual(rx_space_ccf(ensemble, 0, 2, p=1), stfcf(ensemble, 0, 1, 2, 1, 0.0, 0.0))
        self.assertEqual(tx_space_ccf(ensemble, 0, 1, q=2), stfcf(ensemble, 2, 0, 2, 1, 0.0, 0.0))
        self.assertEqual(
            frequency_cf(ensemble, 0, 0, 1e6, xi=2e6), stfcf(ensemble, 0, 0, 0, 0, 1e6, 0.0, 2e6)
        )

    def test_zero_lag_is_mean_power(self):
        """The zero-lag ACF is the real mean power of the transfer function."""
        ensemble = random_ensemble()
        value = time_acf(ensemble, 0, 0, 0.0)
        self.assertAlmostEqual(value.imag, 0.0)
        self.assertGreater(value.real, 0.0)
        curve = acf_curve(ensemble, 0, 0, [0.0, 1e-3])
        self.assertAlmostEqual(abs(curve.values[0]), 1.0)

    def test_independent_snapshots_decorrelate(self):
        """Independent gains per snapshot give a small normalized ACF at lag > 0."""
        curve = acf_curve(random_ensemble(realizations=400), 0, 0, [0.0, 1e-3, 2e-3])
        self.assertLess(curve.magnitude()[1], 0.2)

    def test_time_outside_realization(self):
        """Lags beyond the realization are rejected."""
        ensemble = random_ensemble(realizations=2)
        with self.assertRaises(ValueError):
            time_acf(ensemble, 0, 0, 1.0)
        with self.assertRaises(ValueError):
            stfcf([], 0, 0, 0, 0, 0.0, 0.0)

    def test_space_ccf_curve(self):
        """The space CCF is 1 at zero separation and covers every separation."""
        curve = space_ccf_curve(random_ensemble(), "rx", 0)
        self.assertEqual(curve.axis, "antenna")
        assert_allclose(curve.lags, [0.0, 1.0, 2.0])
        self.assertAlmostEqual(curve.values[0], 1.0)
        self.assertTrue(np.all(curve.values <= 1.0 + 1e-12))


class TestCoherenceBandwidth(unittest.TestCase):
    def test_two_equal_taps(self):
        """Two equal taps decorrelate like |cos(pi d tau)|."""
        spacing = 100e-9
        grid = np.linspace(0.0, 4e6, 801)
        phases = 2 * np.pi * np.arange(64) / 64
        transfer = 1.0 + np.exp(1j * phases)[:, None] * np.exp(-2j * np.pi * grid * spacing)
        bandwidth = coherence_bandwidth_90(transfer, grid)
        expected = math.acos(0.9) / (math.pi * spacing)
        self.assertFalse(bandwidth.censored)
        self.assertAlmostEqual(bandwidth.value / expected, 1.0, delta=0.01)

    def test_matches_direct_frequency_average(self):
        """The FFT correlation equals averaging H*(xi) H(xi + k) over the grid."""
        rng = np.random.default_rng(7)
        delays = rng.uniform(0.0, 1e-6, 6)
        gains = rng.normal(size=(2, 2, 6)) + 1j * rng.normal(size=(2, 2, 6))
        grid = np.linspace(0.0, 4e6, 401)
        transfer = transfer_function(make_snapshot(delays, gains), grid)
        samples = transfer.reshape(-1, grid.size)

        count, limit = grid.size, grid.size // 2
        direct = np.array(
            [np.mean(np.conj(samples[:, : count - k]) * samples[:, k:]) for k in range(limit + 1)]
        )
        magnitude = np.abs(direct) / abs(direct[0])
        below = np.nonzero(magnitude[1:] < 0.9)[0]
        bandwidth = coherence_bandwidth_90(transfer, grid)
        self.assertGreater(below.size, 0)
        k = int(below[0]) + 1
        fraction = (magnitude[k - 1] - 0.9) / (magnitude[k - 1] - magnitude[k])
        self.assertFalse(bandwidth.censored)
        self.assertAlmostEqual(bandwidth.value, (k - 1 + fraction) * (grid[1] - grid[0]), places=3)

    def test_flat_channel_censored(self):
        """A single tap never decorrelates; the result is censored at half the span."""
        grid = np.linspace(0.0, 4e6, 801)
        transfer = np.exp(-2j * np.pi * grid * 1e-7)
        bandwidth = coherence_bandwidth_90(transfer, grid)
        self.assertTrue(bandwidth.censored)
        self.assertAlmostEqual(bandwidth.value, 2e6, delta=1.0)

    def test_invalid_inputs(self):
        """Non-uniform grids and zero responses are rejected."""
        with self.assertRaises(ValueError):
            coherence_bandwidth_90(np.ones(3), [0.0, 1.0, 3.0])
        with self.assertRaises(ValueError):
            coherence_bandwidth_90(np.zeros(5), np.arange(5.0))
        with self.assertRaises(ValueError):
            coherence_bandwidth_90(np.ones(1), [0.0])


class TestSmoothMusic(unittest.TestCase):
    def test_single_source_direction(self):
        """A source at 30 degrees shows up within one degree."""
        rng = np.random.default_rng(0)
        steering = steering_vectors(8, np.array([np.deg2rad(30.0)]))
        amplitudes = rng.normal(size=(1, 200)) + 1j * rng.normal(size=(1, 200))
        noise = 0.01 * (rng.normal(size=(8, 200)) + 1j * rng.normal(size=(8, 200)))
        spectrum = smooth_music_aps(steering @ amplitudes + noise)
        self.assertAlmostEqual(np.rad2deg(spectrum.peak_angle()), 30.0, delta=1.0)
        self.assertAlmostEqual(float(spectrum.power.max()), 1.0)

        peaks = np.rad2deg(spectrum_peaks(spectrum))
        self.assertTrue(np.any(np.abs(peaks - 30.0) < 1.0))

    def test_smoothing_restores_coherent_rank(self):
        """Smoothing separates two coherent sources that a full covariance merges."""
        angles = np.deg2rad([10.0, -40.0])
        samples = steering_vectors(8, angles).sum(axis=1)
        floor = 1e-6 * np.eye(8)
        self.assertEqual(signal_subspace_dimension(smoothed_covariance(samples, 8) + floor), 1)
        smoothed = smoothed_covariance(samples, 3) + floor[:3, :3]
        self.assertEqual(signal_subspace_dimension(smoothed), 2)

    def test_white_noise_is_flat(self):
        """Spatially white noise has no preferred direction."""
        rng = np.random.default_rng(1)
        samples = rng.normal(size=(8, 4000)) + 1j * rng.normal(size=(8, 4000))
        spectrum = smooth_music_aps(samples)
        assert_allclose(spectrum.power, np.ones_like(spectrum.power), rtol=1e-9)

    def test_too_few_antennas(self):
        """The subarray cannot exceed the array."""
        with self.assertRaises(ValueError):
            smoothed_covariance(np.ones(2), 3)

    def test_window_spectra(self):
        """Each sliding window of receive antennas gets its own spectrum."""
        rng = np.random.default_rng(2)
        gains = rng.normal(size=(10, 2, 5)) + 1j * rng.normal(size=(10, 2, 5))
        snap = make_snapshot(rng.uniform(0.0, 1e-6, 5), gains)
        spectra = window_spectra(snap, np.linspace(0.0, 1e8, 16), 8)
        self.assertEqual(len(spectra), 3)
        with self.assertRaises(ValueError):
            window_spectra(snap, [0.0], 11)


class TestDistributions(unittest.TestCase):
    def test_empirical_cdf(self):
        """The empirical CDF counts samples at or below x."""
        distribution = empirical_distribution([3.0, 1.0, 2.0])
        self.assertAlmostEqual(float(distribution.cdf(2.0)), 2 / 3)
        self.assertAlmostEqual(float(distribution.ccdf(2.0)), 1 / 3)
        self.assertEqual(float(distribution.cdf(0.5)), 0.0)
        self.assertEqual(distribution.median(), 2.0)

    def test_ccdf_mode_and_censoring(self):
        """CCDF distributions evaluate the survival function and report censoring."""
        distribution = empirical_distribution(
            [1.0, 2.0, 3.0, 4.0], DistributionMode.CCDF, [False, True, False, True]
        )
        self.assertAlmostEqual(float(distribution(2.0)), 0.5)
        self.assertEqual(distribution.censored_fraction, 0.5)
        self.assertAlmostEqual(float(distribution.interpolate(2.5)), 0.375)

    def test_empty_samples_rejected(self):
        """A distribution needs samples."""
        with self.assertRaises(ValueError):
            empirical_distribution([])

    def test_rms_delay_curve(self):
        """The RMS delay CCDF of a fixed two-tap channel is a single step."""
        snap = make_snapshot([0.0, 100e-9], [1.0, 1.0])
        ensemble = [[snap] * 3]
        settings = StatisticSettings(snapshot_stride=1)
        curve = statistic_curve(StatisticKind.RMS_DELAY_CCDF, ensemble, None, settings)
        assert_allclose(curve.x, [50e-9])
        assert_allclose(curve.y, [0.0])

    def test_acf_curve_interpolated(self):
        """Explicit x points are served by interpolation of the natural curve."""
        ensemble = random_ensemble(realizations=10)
        natural = statistic_curve(StatisticKind.ACF, ensemble)
        assert_allclose(natural.x, [0.0, 1e-3, 2e-3, 3e-3], atol=1e-15)
        half = statistic_curve(StatisticKind.ACF, ensemble, [0.5e-3])
        self.assertAlmostEqual(float(half.y[0]), 0.5 * (natural.y[0] + natural.y[1]))


class TestStatisticSettings(unittest.TestCase):
    def test_scenario_delay_grid(self):
        """Scenario settings take the PDP delay grid of the scenario."""
        self.assertEqual(StatisticSettings.for_scenario(preset("hst_3d")).delay_resolution, 20e-9)
        settings = StatisticSettings.for_scenario(preset("mmwave_3d"), interval_stride=10)
        self.assertEqual(settings.delay_resolution, 5e-9)
        self.assertEqual(settings.interval_stride, 10)


class TestClusterAcf(unittest.TestCase):
    def test_analytical_matches_simulation(self):
        """The closed-form phase expectation matches a Monte-Carlo average."""
        state = initialize_state(preset("wideband_mimo_3d"), 1)
        visible = state.visibility.shared(0, 0)
        cluster = next(c for c in state.clusters if c.id in visible)
        lags = np.linspace(0.0, 0.05, 11)

        analytic = analytical_acf_per_cluster(state, cluster, lags)
        reference = analytic.values[0]
        simulated = simulated_acf_per_cluster(
            state, cluster, lags, trials=20_000, rng=np.random.default_rng(0)
        )
        difference = np.abs(
            analytic.normalized_by(reference).values - simulated.normalized_by(reference).values
        )
        self.assertLess(float(difference.max()), 0.05)

    def test_each_cluster_on_its_own_power(self):
        """Every visible cluster agrees with its simulation once scaled by its own power."""
        lags = np.linspace(0.0, 0.05, 21)
        compared = 0
        for seed in (1, 2, 3):
            state = initialize_state(preset("wideband_mimo_3d"), seed)
            visible = state.visibility.shared(0, 0)
            clusters = [c for c in state.clusters if c.id in visible][:2]
            rng = np.random.default_rng(seed)
            for cluster in clusters:
                analytic = analytical_acf_per_cluster(state, cluster, lags)
                reference = analytic.values[0]
                simulated = simulated_acf_per_cluster(state, cluster, lags, trials=4_000, rng=rng)
                difference = np.abs(
                    analytic.normalized_by(reference).magnitude()
                    - simulated.normalized_by(reference).magnitude()
                )
                self.assertLess(float(difference.max()), 0.1, f"seed {seed}, cluster {cluster.id}")
                compared += 1
        self.assertGreater(compared, 0)

    def test_lags_must_increase(self):
        """Lag grids must be non-negative and increasing."""
        state = initialize_state(preset("wideband_mimo_3d"), 1)
        with self.assertRaises(ValueError):
            analytical_acf_per_cluster(state, state.clusters[0], [0.02, 0.01])

    def test_missing_zero_lag(self):
        """Lags without zero are still referenced to the state's time."""
        state = initialize_state(preset("wideband_mimo_3d"), 1)
        cluster = state.clusters[0]
        full = analytical_acf_per_cluster(state, cluster, [0.0, 0.01, 0.02])
        partial = analytical_acf_per_cluster(state, cluster, [0.01, 0.02])
        assert_allclose(partial.values, full.values[1:])
        assert_allclose(partial.lags, [0.01, 0.02])


if __name__ == "__main__":
    unittest.main()
