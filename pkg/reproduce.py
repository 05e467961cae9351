"""
Figure-data pipelines.

Each pipeline runs a preset (and, where a comparison makes sense, its baseline
with every evolution switch off), computes one statistic and writes plot-ready
curve files. Ensemble sizes are desk-scale defaults; pass seeds to override.
"""

import logging
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from channel import initialize_state, run_ensemble, snapshot
from data_io import write_curve, write_table
from scenarios import ConfigError, ScenarioConfig, baseline, preset
from stats import (
    StatisticCurve,
    StatisticKind,
    StatisticSettings,
    analytical_acf_per_cluster,
    aps_table,
    simulated_acf_per_cluster,
    statistic_curve,
)

logger = logging.getLogger(__name__)

# Default realizations per pipeline
ENSEMBLE_SIZES: Dict[str, int] = {
    "cluster-acf": 1,
    "space-ccf": 100,
    "stationary-interval": 20,
    "coherence-bandwidth": 10,
    "angular-spectrum": 1,
    "rms-delay": 50,
}

ACF_LAGS = np.linspace(0.0, 0.05, 101)
ACF_TRIALS = 20_000
APS_WINDOW = 8
APS_FREQUENCIES = np.linspace(0.0, 100e6, 64)


def _metadata(config: ScenarioConfig, seeds: Sequence[int], **extra) -> Dict[str, object]:
    meta: Dict[str, object] = {
        "scenario": config.name,
        "seeds": ",".join(str(seed) for seed in seeds),
    }
    meta.update(extra)
    return meta


def _model_and_baseline(
    name: str,
    config: ScenarioConfig,
    kind: StatisticKind,
    seeds: Sequence[int],
    out_dir: Path,
    workers: int,
    duration: Optional[float] = None,
) -> List[Path]:
    settings = StatisticSettings.for_scenario(config)
    written = []
    for label, variant in (("model", config), ("baseline", baseline(config))):
        ensemble = run_ensemble(variant, seeds, duration, None, workers)
        curve = statistic_curve(kind, ensemble, None, settings)
        written.append(
            write_curve(
                curve,
                out_dir / f"{name}-{label}.txt",
                _metadata(variant, seeds, realizations=len(seeds)),
            )
        )
    return written


def cluster_acf(out_dir: Path, seeds: Sequence[int], workers: int = 1) -> List[Path]:
    """
    Analytic and Monte-Carlo ACFs of the first two clusters seen by pair (0, 0).

    Each curve is normalized by the analytic zero-lag power of its own cluster.
    """
    config = preset("wideband_mimo_3d")
    written = []
    for seed in seeds:
        state = initialize_state(config, seed)
        visible = state.visibility.shared(0, 0)
        clusters = [cluster for cluster in state.clusters if cluster.id in visible][:2]
        if not clusters:
            logger.warning(f"Seed {seed} has no cluster visible to pair (0, 0)")
            continue

        rng = np.random.default_rng(seed)
        for number, cluster in enumerate(clusters, start=1):
            reference = analytical_acf_per_cluster(state, cluster, [0.0]).values[0]
            analytic = analytical_acf_per_cluster(state, cluster, ACF_LAGS).normalized_by(reference)
            simulated = simulated_acf_per_cluster(
                state, cluster, ACF_LAGS, trials=ACF_TRIALS, rng=rng
            ).normalized_by(reference)
            for label, result in (("analytical", analytic), ("simulated", simulated)):
                curve = StatisticCurve(StatisticKind.ACF, result.lags, result.magnitude())
                path = out_dir / f"cluster-acf-{seed}-{number}-{label}.txt"
                meta = _metadata(config, [seed], cluster=cluster.id, trials=ACF_TRIALS)
                written.append(write_curve(curve, path, meta))
    return written


def space_ccf(out_dir: Path, seeds: Sequence[int], workers: int = 1) -> List[Path]:
    config = preset("massive_mimo_3d")
    return _model_and_baseline(
        "space-ccf",
        config,
        StatisticKind.SPACE_CCF,
        seeds,
        out_dir,
        workers,
        duration=config.time_step,
    )


def stationary_interval(out_dir: Path, seeds: Sequence[int], workers: int = 1) -> List[Path]:
    return _model_and_baseline(
        "stationary-interval",
        preset("hst_3d"),
        StatisticKind.STATIONARY_INTERVAL_CCDF,
        seeds,
        out_dir,
        workers,
    )


def coherence_bandwidth(out_dir: Path, seeds: Sequence[int], workers: int = 1) -> List[Path]:
    return _model_and_baseline(
        "coherence-bandwidth",
        preset("v2v_2d"),
        StatisticKind.COHERENCE_BANDWIDTH_CDF,
        seeds,
        out_dir,
        workers,
    )


def rms_delay(out_dir: Path, seeds: Sequence[int], workers: int = 1) -> List[Path]:
    return _model_and_baseline(
        "rms-delay",
        preset("mmwave_3d"),
        StatisticKind.RMS_DELAY_CCDF,
        seeds,
        out_dir,
        workers,
    )


def angular_spectrum(out_dir: Path, seeds: Sequence[int], workers: int = 1) -> List[Path]:
    """Smooth-MUSIC APS of every sliding window of APS_WINDOW receive antennas at t = 0."""
    config = preset("mmwave_massive_2d")
    written = []
    for seed in seeds:
        first = snapshot(initialize_state(config, seed))
        meta = _metadata(config, [seed], statistic="aps", window=APS_WINDOW)
        written.append(
            write_table(
                aps_table(first, APS_FREQUENCIES, APS_WINDOW),
                out_dir / f"angular-spectrum-{seed}.txt",
                meta,
            )
        )
    return written


PIPELINES: Dict[str, Callable[[Path, Sequence[int], int], List[Path]]] = {
    "cluster-acf": cluster_acf,
    "space-ccf": space_ccf,
    "stationary-interval": stationary_interval,
    "coherence-bandwidth": coherence_bandwidth,
    "angular-spectrum": angular_spectrum,
    "rms-delay": rms_delay,
}


# Figure tokens accepted next to the pipeline names
FIGURE_TOKENS: Dict[str, str] = {
    "fig4": "cluster-acf",
    "fig5": "stationary-interval",
    "fig6": "coherence-bandwidth",
    "fig8": "rms-delay",
}


def resolve_figure(name: str) -> str:
    """
    Map a figure token or a pipeline name to the pipeline name.

    Raises:
        ConfigError: If the name is neither
    """
    name = FIGURE_TOKENS.get(name, name)
    if name not in PIPELINES:
        choices = ", ".join([*FIGURE_TOKENS, *PIPELINES])
        raise ConfigError(f"Unknown figure '{name}', choose from {choices}")
    return name


def reproduce(
    name: str, out_dir: Path, seeds: Optional[Sequence[int]] = None, workers: int = 1
) -> List[Path]:
    name = resolve_figure(name)
    if seeds is None:
        seeds = list(range(1, ENSEMBLE_SIZES[name] + 1))
    logger.info(f"Reproducing '{name}' with {len(seeds)} realization(s)")
    out_dir.mkdir(parents=True, exist_ok=True)
    return PIPELINES[name](out_dir, seeds, workers)
