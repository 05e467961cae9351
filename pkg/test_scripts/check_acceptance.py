#!/usr/bin/env python3
"""
Long-running acceptance checks of the channel simulator.

Each check runs a sizeable ensemble or a long realization and prints PASS or
FAIL with the measured value. The unit tests under tests/ cover the same
behavior at desk scale; these runs take minutes.

    python test_scripts/check_acceptance.py
    python test_scripts/check_acceptance.py --only hst-stationary-interval --workers 4
"""

import argparse
import math
import os
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Sequence

import numpy as np

# Add the repo root to the path to allow importing modules from the parent directory
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

# Local imports (must be after sys.path modification)
# ruff: noqa: E402
from channel import initialize_state, run_ensemble, snapshot, step
from clusters import EvolutionParams, Lifecycle, alive_cluster_count
from data_io import file_digest
from estimation import ParameterGrid, TargetCurve, apply_parameters, grid_search
from geometry import (
    DIPOLE_PEAK_GAIN,
    GeometryError,
    PatternKind,
    local_angles,
    pattern_gain,
    rotation_matrix,
)
from reproduce import ACF_LAGS, ACF_TRIALS, reproduce
from scenarios import (
    PRESETS,
    ArrayConfig,
    ModelSwitches,
    ScenarioConfig,
    Simplification,
    apply_simplification,
    baseline,
    preset,
)
from settings import configure_logging
from stats import (
    DistributionMode,
    StatisticKind,
    StatisticSettings,
    analytical_acf_per_cluster,
    empirical_distribution,
    frequency_cf,
    rms_delay_samples,
    rx_space_ccf,
    signal_subspace_dimension,
    simulated_acf_per_cluster,
    smooth_music_aps,
    space_ccf_curve,
    spectrum_peaks,
    stationary_interval_samples,
    statistic_curve,
    steering_vectors,
    stfcf,
    time_acf,
    tx_space_ccf,
)

SURVIVAL_PRESETS = ("massive_mimo_3d", "hst_3d", "v2v_2d", "mmwave_3d")
CHUNK = 10


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def churn_config(speed: float = 50.0) -> ScenarioConfig:
    """Static 2x2 link whose clusters move fast enough for frequent births and deaths."""
    return ScenarioConfig(
        name="churn",
        carrier_frequency=2e9,
        distance=100.0,
        rx=ArrayConfig(num_elements=2),
        tx=ArrayConfig(num_elements=2),
        evolution=EvolutionParams(
            mean_speed_rx=speed, mean_speed_tx=speed, mean_rays=5.0, fixed_ray_count=True
        ),
        switches=ModelSwitches(power_evolution=False),
    )


def _without_power_evolution(config: ScenarioConfig) -> ScenarioConfig:
    switches = {**config.switches.model_dump(), "power_evolution": False}
    return ScenarioConfig.model_validate({**config.model_dump(), "switches": switches})


def _chunks(seeds: Sequence[int]) -> List[List[int]]:
    return [list(seeds[i : i + CHUNK]) for i in range(0, len(seeds), CHUNK)]


def drifting_preset(name: str = "v2v_2d", speed: float = 5.0) -> ScenarioConfig:
    """Preset whose clusters drift fast enough to renew within a few hundred steps."""
    config = preset(name)
    evolution = config.evolution.model_copy(
        update={"mean_speed_rx": speed, "mean_speed_tx": speed}
    )
    return config.model_copy(update={"evolution": evolution})


def mean_alive_count(config: ScenarioConfig, steps: int, seed: int, dt: float = 0.05) -> float:
    state = initialize_state(config, seed)
    counts = []
    for _ in range(steps):
        step(state, dt)
        counts.append(alive_cluster_count(state))
    return float(np.mean(counts))


def check_cluster_equilibrium(steps: int = 10_000, seed: int = 1) -> CheckResult:
    """The time-averaged number of alive clusters settles at lambda_G / lambda_R."""
    lines, passed = [], True
    for config in (churn_config(), drifting_preset()):
        mean = mean_alive_count(config, steps, seed)
        expected = config.evolution.mean_cluster_count
        passed = passed and expected - 1.0 <= mean <= expected + 1.0
        power = "on" if config.switches.power_evolution else "off"
        lines.append(
            f"{config.name} (power evolution {power}): mean N(t) = {mean:.2f}, "
            f"expected {expected:.0f}"
        )
    return CheckResult("cluster-equilibrium", passed, f"{'; '.join(lines)} over {steps} steps")


def check_survival_fidelity(cluster_steps: int = 100_000, seed: int = 2) -> CheckResult:
    """Per-step survival frequency against the closed-form survival probability."""
    lines, passed = [], True
    for name in SURVIVAL_PRESETS:
        config = _without_power_evolution(
            apply_simplification(preset(name), Simplification.CONVENTIONAL_MIMO)
        )
        params = config.evolution
        rate = (
            params.recombination_rate
            * params.moving_fraction
            * (params.mean_speed_rx + params.mean_speed_tx)
            / params.space_coherence_distance
        )
        # About 5% deaths per step
        dt = -math.log(0.95) / rate if rate > 0 else config.time_step
        expected = math.exp(-rate * dt)

        state = initialize_state(config, seed)
        trials = survived = 0
        while trials < cluster_steps:
            before = {cluster.id for cluster in state.clusters if cluster.is_alive}
            step(state, dt)
            after = {cluster.id for cluster in state.clusters if cluster.is_alive}
            trials += len(before)
            survived += len(before & after)

        observed = survived / trials
        error = math.sqrt(expected * (1.0 - expected) / trials)
        ok = observed == expected if error == 0 else abs(observed - expected) <= 3.0 * error
        passed = passed and ok
        lines.append(f"{name}: {observed:.5f} vs {expected:.5f} (se {error:.5f})")
    return CheckResult("survival-fidelity", passed, "; ".join(lines))


def check_power_normalization(snapshots: int = 50, seed: int = 3) -> CheckResult:
    """Ray powers of every snapshot sum to 1, or to at most 1 while a ramp runs."""
    cases = [(preset(name), None) for name in PRESETS] + [(churn_config(100.0), 2e-4)]
    worst, checked = 0.0, 0
    passed = True
    for config, dt in cases:
        dt = dt or config.time_step
        count = snapshots if config.name != "churn" else 2_000
        state = initialize_state(config, seed)
        for _ in range(count):
            snap = snapshot(state)
            if snap.ray_powers.size:
                total = float(snap.ray_powers.sum())
                ramping = any(
                    cluster.lifecycle != Lifecycle.ACTIVE
                    for cluster in state.observable_clusters()
                )
                if ramping:
                    passed = passed and total <= 1.0 + 1e-9
                else:
                    worst = max(worst, abs(total - 1.0))
                checked += 1
            step(state, dt)
    passed = passed and worst <= 1e-9
    return CheckResult(
        "power-normalization", passed, f"{checked} snapshots, worst |sum - 1| = {worst:.2e}"
    )


def check_hst_stationary_interval(realizations: int = 200, workers: int = 1) -> CheckResult:
    """Median stationary interval of the high-speed-train preset lies in [25, 55] ms."""
    config = preset("hst_3d")
    settings = StatisticSettings.for_scenario(config)
    values, censored = [], []
    for seeds in _chunks(list(range(1, realizations + 1))):
        ensemble = run_ensemble(config, seeds, workers=workers)
        distribution = stationary_interval_samples(ensemble, settings)
        values.extend(distribution.values.tolist())
        flags = distribution.censored
        censored.extend(flags.tolist() if flags is not None else [False] * len(distribution))
    distribution = empirical_distribution(values, DistributionMode.CCDF, censored)
    median = distribution.median()
    return CheckResult(
        "hst-stationary-interval",
        0.025 <= median <= 0.055,
        f"median {median * 1e3:.1f} ms over {len(values)} intervals "
        f"({distribution.censored_fraction:.1%} censored)",
    )


def check_mmwave_rms_delay(realizations: int = 200, workers: int = 1) -> CheckResult:
    """At least 80% of mmWave RMS delay spreads fall in [15, 55] ns."""
    config = preset("mmwave_3d")
    spreads: List[float] = []
    for seeds in _chunks(list(range(1, realizations + 1))):
        spreads.extend(rms_delay_samples(run_ensemble(config, seeds, workers=workers)).values)
    spreads_ns = np.asarray(spreads) * 1e9
    share = float(np.mean((spreads_ns >= 15.0) & (spreads_ns <= 55.0)))
    return CheckResult(
        "mmwave-rms-delay",
        share >= 0.8,
        f"{share:.1%} of {len(spreads_ns)} spreads in [15, 55] ns, "
        f"median {np.median(spreads_ns):.1f} ns",
    )


def check_cluster_acf(seeds: Sequence[int] = (1, 2, 3)) -> CheckResult:
    """Analytic and Monte-Carlo per-cluster ACFs agree within 0.05."""
    config = preset("wideband_mimo_3d")
    worst, compared = 0.0, 0
    for seed in seeds:
        state = initialize_state(config, seed)
        visible = state.visibility.shared(0, 0)
        clusters = [cluster for cluster in state.clusters if cluster.id in visible][:2]
        if not clusters:
            continue
        rng = np.random.default_rng(seed)
        for cluster in clusters:
            reference = analytical_acf_per_cluster(state, cluster, [0.0]).values[0]
            analytic = analytical_acf_per_cluster(state, cluster, ACF_LAGS)
            simulated = simulated_acf_per_cluster(
                state, cluster, ACF_LAGS, trials=ACF_TRIALS, rng=rng
            )
            a = analytic.normalized_by(reference).magnitude()
            s = simulated.normalized_by(reference).magnitude()
            worst = max(worst, float(np.max(np.abs(a - s))))
            compared += 1
    return CheckResult(
        "cluster-acf",
        compared > 0 and worst <= 0.05,
        f"{compared} clusters, max deviation {worst:.4f}",
    )


def check_stfcf_reductions(realizations: int = 20) -> CheckResult:
    """ACF, CCF and FCF wrappers equal the full correlation bit for bit."""
    config = preset("wideband_mimo_3d")
    ensemble = run_ensemble(config, list(range(1, realizations + 1)), duration=0.01)
    pairs = [
        (time_acf(ensemble, 1, 0, 5e-3), stfcf(ensemble, 1, 0, 1, 0, 0.0, 5e-3)),
        (rx_space_ccf(ensemble, 0, 1, p=1), stfcf(ensemble, 0, 1, 1, 1, 0.0, 0.0)),
        (tx_space_ccf(ensemble, 0, 1, q=1), stfcf(ensemble, 1, 0, 1, 1, 0.0, 0.0)),
        (frequency_cf(ensemble, 0, 0, 1e6), stfcf(ensemble, 0, 0, 0, 0, 1e6, 0.0)),
    ]
    equal = sum(1 for wrapped, full in pairs if wrapped == full)
    return CheckResult("stfcf-reductions", equal == len(pairs), f"{equal}/{len(pairs)} equal")


def check_space_ccf(realizations: int = 400, workers: int = 1) -> CheckResult:
    """Array-axis evolution lowers the receive CCF at three or more half-wavelengths."""
    config = preset("massive_mimo_3d")
    batches: Dict[str, List[float]] = {"model": [], "baseline": []}
    for seeds in _chunks(list(range(1, realizations + 1))):
        for label, variant in (("model", config), ("baseline", baseline(config))):
            ensemble = run_ensemble(variant, seeds, duration=variant.time_step, workers=workers)
            curve = space_ccf_curve(ensemble, "rx")
            batches[label].append(float(np.mean(curve.values[3:])))

    model, base = np.array(batches["model"]), np.array(batches["baseline"])
    gap = float(base.mean() - model.mean())
    error = math.sqrt(model.var(ddof=1) / len(model) + base.var(ddof=1) / len(base))
    return CheckResult(
        "space-ccf",
        gap > 3.0 * error,
        f"mean |CCF| model {model.mean():.4f} vs baseline {base.mean():.4f} "
        f"(gap {gap:.4f}, se {error:.4f})",
    )


def _plane_waves(
    rng: np.random.Generator, angles: Sequence[float], size: int, count: int, coherent: bool
) -> np.ndarray:
    steering = steering_vectors(size, np.asarray(angles))
    if coherent:
        amplitude = rng.standard_normal(count) + 1j * rng.standard_normal(count)
        sources = np.outer(np.ones(len(angles)), amplitude)
    else:
        sources = rng.standard_normal((len(angles), count)) + 1j * rng.standard_normal(
            (len(angles), count)
        )
    noise = rng.standard_normal((size, count)) + 1j * rng.standard_normal((size, count))
    return steering @ sources + 1e-3 * noise


def check_smooth_music(trials: int = 100, seed: int = 4) -> CheckResult:
    """Single sources are found within 1 degree; coherent pairs need smoothing."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        truth = rng.uniform(-math.radians(60.0), math.radians(60.0))
        spectrum = smooth_music_aps(_plane_waves(rng, [truth], 8, 32, False), subarray_size=4)
        worst = max(worst, abs(math.degrees(spectrum.peak_angle() - truth)))

    truths = np.radians([-20.0, 25.0])
    samples = _plane_waves(rng, truths, 8, 32, True)
    unsmoothed_rank = signal_subspace_dimension(samples @ samples.conj().T / samples.shape[1])
    smoothed = smooth_music_aps(samples, subarray_size=5, num_sources=2)
    peaks = spectrum_peaks(smoothed)
    strongest = peaks[np.argsort(np.interp(peaks, smoothed.angles, smoothed.power))[-2:]]
    resolved = len(peaks) >= 2 and all(
        np.min(np.abs(strongest - truth)) <= math.radians(2.0) for truth in truths
    )
    return CheckResult(
        "smooth-music",
        worst <= 1.0 and unsmoothed_rank == 1 and resolved,
        f"max single-source error {worst:.3f} deg, unsmoothed rank {unsmoothed_rank}, "
        f"smoothed peaks {np.round(np.degrees(peaks), 1).tolist()}",
    )


def check_estimation_round_trip(seeds: Sequence[int] = (1, 2)) -> CheckResult:
    """A target simulated at a grid point is recovered there with zero error."""
    base = ScenarioConfig(
        name="round-trip",
        carrier_frequency=2e9,
        distance=100.0,
        rx=ArrayConfig(num_elements=4, velocity=(0.0, 5.0, 0.0)),
        tx=ArrayConfig(num_elements=2),
        evolution=EvolutionParams(
            mean_speed_rx=0.5, mean_speed_tx=0.5, mean_rays=5.0, fixed_ray_count=True
        ),
        duration=0.1,
    )
    truth = {"array_coherence_distance": 1.0, "space_coherence_distance": 0.05}
    generating = apply_parameters(base, truth)
    lines, passed = [], True
    for kind in StatisticKind:
        # Space CCF is taken at t = 0, where only the array coherence distance acts
        searched = (
            "array_coherence_distance"
            if kind == StatisticKind.SPACE_CCF
            else "space_coherence_distance"
        )
        fixed = {name: value for name, value in truth.items() if name != searched}
        options = [30.0, 1.0] if searched == "array_coherence_distance" else [5.0, 0.05]
        curve = statistic_curve(kind, run_ensemble(generating, list(seeds)))
        target = TargetCurve(kind=kind, x=curve.x.tolist(), y=curve.y.tolist(), source="model")
        grid = ParameterGrid(
            base=apply_parameters(base, fixed),
            candidates={searched: options},
            seeds=list(seeds),
            threshold=1e-30,
        )
        result = grid_search(grid, target)
        ok = result.best_params == {searched: truth[searched]} and result.best_error == 0.0
        passed = passed and ok
        lines.append(f"{kind.value}: {result.best_params} error {result.best_error:.3g}")
    return CheckResult("estimation-round-trip", passed, "; ".join(lines))


def check_determinism(seeds: Sequence[int] = (1, 2)) -> CheckResult:
    """Two stationary-interval reproductions with one seed list are byte-identical."""
    with tempfile.TemporaryDirectory() as tmp:
        runs = []
        for label in ("first", "second"):
            written = reproduce("stationary-interval", Path(tmp) / label, list(seeds))
            runs.append({path.name: file_digest(path) for path in written})
    return CheckResult(
        "determinism", runs[0] == runs[1] and bool(runs[0]), f"{len(runs[0])} files compared"
    )


def check_geometry(seed: int = 5) -> CheckResult:
    """Rotation, dipole gain, distance and degenerate-direction properties."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for angles in rng.uniform(-math.pi, math.pi, (100, 3)):
        rot = rotation_matrix(*angles)
        worst = max(worst, float(np.max(np.abs(rot @ rot.T - np.eye(3)))))
        worst = max(worst, abs(float(np.linalg.det(rot)) - 1.0))

    right = np.array(math.pi / 2)
    peak = float(pattern_gain(PatternKind.HALF_WAVE_DIPOLE, right, right))
    worst = max(worst, abs(peak - DIPOLE_PEAK_GAIN))

    state = initialize_state(preset("massive_mimo_3d"), seed)
    rx_center = state.rx_array.center_at(0.0)
    violations = 0
    for cluster in state.clusters:
        for position in state.rx_array.positions_at(0.0):
            direct = np.linalg.norm(cluster.last_bounce - position)
            detour = np.linalg.norm(cluster.last_bounce - rx_center) + np.linalg.norm(
                rx_center - position
            )
            violations += int(direct > detour + 1e-12)

    zenith_theta, zenith_phi = local_angles(np.array([0.0, 0.0, 1.0]), np.eye(3))
    try:
        local_angles(np.zeros(3), np.eye(3))
        degenerate_rejected = False
    except GeometryError:
        degenerate_rejected = True
    degenerate_ok = (
        degenerate_rejected
        and math.isfinite(float(zenith_theta))
        and abs(float(zenith_phi) - math.pi / 2) <= 1e-12
    )
    return CheckResult(
        "geometry",
        worst <= 1e-12 and violations == 0 and degenerate_ok,
        f"max deviation {worst:.1e}, {violations} triangle violations",
    )


def build_checks(realizations: int, workers: int) -> Dict[str, Callable[[], CheckResult]]:
    return {
        "cluster-equilibrium": check_cluster_equilibrium,
        "survival-fidelity": check_survival_fidelity,
        "power-normalization": check_power_normalization,
        "hst-stationary-interval": lambda: check_hst_stationary_interval(realizations, workers),
        "mmwave-rms-delay": lambda: check_mmwave_rms_delay(realizations, workers),
        "cluster-acf": check_cluster_acf,
        "stfcf-reductions": check_stfcf_reductions,
        "space-ccf": lambda: check_space_ccf(2 * realizations, workers),
        "smooth-music": check_smooth_music,
        "estimation-round-trip": check_estimation_round_trip,
        "determinism": check_determinism,
        "geometry": check_geometry,
    }


def main(argv: Sequence[str] = ()) -> int:
    parser = argparse.ArgumentParser(description="Run the long acceptance checks")
    parser.add_argument("--only", action="append", help="Run only the named check(s)")
    parser.add_argument("--realizations", type=int, default=200, help="Ensemble size")
    parser.add_argument("--workers", type=int, default=1, help="Worker processes")
    parser.add_argument("--debug", action="store_true", help="Enable debug logging")
    args = parser.parse_args(list(argv) or None)
    configure_logging(args.debug)

    checks = build_checks(args.realizations, args.workers)
    selected = args.only or list(checks)
    unknown = [name for name in selected if name not in checks]
    if unknown:
        parser.error(f"Unknown check(s) {', '.join(unknown)}, choose from {', '.join(checks)}")

    print("Acceptance checks")
    print("=================\n")
    failures = 0
    for name in selected:
        result = checks[name]()
        failures += int(not result.passed)
        print(f"[{'PASS' if result.passed else 'FAIL'}] {result.name}: {result.detail}")

    print(f"\n{len(selected) - failures}/{len(selected)} checks passed")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
