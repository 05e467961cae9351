#!/usr/bin/env python3
"""
Command-line entry point of the channel simulator.

    gbsm simulate --preset hst_3d --seeds 0:8 --out runs/hst
    gbsm stats --run runs/hst --stats stationary-interval-ccdf,rms-delay-ccdf
    gbsm fit --preset v2v_2d --target measured.txt --grid grid.json
    gbsm reproduce stationary-interval
    gbsm presets

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 fit threshold not met.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from pydantic import ValidationError

from channel import iter_realization, run_ensemble
from data_io import (
    FitReport,
    FitRow,
    RunManifest,
    SnapshotFormatError,
    TargetFormatError,
    load_manifest,
    read_snapshots,
    read_target_curve,
    record_files,
    save_fit_report,
    save_manifest,
    write_curve,
    write_snapshots,
    write_snapshots_text,
    write_table,
)
from estimation import ParameterGrid, grid_search
from reproduce import APS_WINDOW, ENSEMBLE_SIZES, FIGURE_TOKENS, reproduce, resolve_figure
from scenarios import ConfigError, ScenarioConfig, list_presets, load_config, load_scenario
from scenarios import preset as build_preset
from settings import OUTPUT_DIR, configure_logging, default_workers
from stats import StatisticKind, StatisticSettings, aps_table, statistic_curve

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_THRESHOLD = 4

APS = "aps"
MANIFEST_NAME = "manifest.json"
CONFIG_NAME = "config.json"


def parse_seeds(text: str) -> List[int]:
    """
    Parse "3", "1,2,5" or a half-open range "0:8".

    Raises:
        ConfigError: If the text is not a seed list
    """
    try:
        if ":" in text:
            start, stop = (int(part) for part in text.split(":", 1))
            seeds = list(range(start, stop))
        else:
            seeds = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"Invalid seed list '{text}'") from None
    if not seeds:
        raise ConfigError(f"Seed list '{text}' is empty")
    return seeds


def parse_statistics(text: Optional[str]) -> List[str]:
    """
    Raises:
        ConfigError: On an unknown statistic name
    """
    names = [name.strip() for name in (text or "").split(",") if name.strip()]
    known = [kind.value for kind in StatisticKind] + [APS]
    for name in names:
        if name not in known:
            raise ConfigError(f"Unknown statistic '{name}', choose from {', '.join(known)}")
    return names


def resolve_config(
    config_path: Optional[str], preset_name: Optional[str]
) -> Tuple[ScenarioConfig, Optional[str]]:
    if config_path:
        return load_scenario(config_path), config_path
    if preset_name:
        return build_preset(preset_name), None
    raise ConfigError("Give a scenario with --config or --preset")


def _dump_path(out_dir: Path, seed: int, text: bool) -> Path:
    return out_dir / f"realization-{seed}.{'txt' if text else 'cir'}"


def _write_config(config: ScenarioConfig, out_dir: Path) -> Path:
    path = out_dir / CONFIG_NAME
    path.write_text(config.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return path


def cmd_simulate(
    config: ScenarioConfig,
    seeds: Sequence[int],
    out_dir: Path,
    duration: Optional[float] = None,
    dt: Optional[float] = None,
    workers: int = 1,
    text: bool = False,
    config_path: Optional[str] = None,
) -> RunManifest:
    """Run one realization per seed and dump its snapshots next to a manifest."""
    duration = config.duration if duration is None else duration
    dt = config.time_step if dt is None else dt
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [_write_config(config, out_dir)]

    write = write_snapshots_text if text else write_snapshots
    if workers > 1:
        ensemble = run_ensemble(config, seeds, duration, dt, workers)
        for seed, snapshots in zip(seeds, ensemble):
            written.append(write(snapshots, _dump_path(out_dir, seed, text)))
    else:
        for seed in seeds:
            snapshots = iter_realization(config, duration, dt, seed)
            path = write(snapshots, _dump_path(out_dir, seed, text))
            written.append(path)
            logger.info(f"Realization seed={seed} written to {path}")

    manifest = RunManifest(
        scenario=config.name,
        config_path=config_path,
        seeds=list(seeds),
        duration=duration,
        time_step=dt,
        output_dir=str(out_dir),
    )
    manifest = record_files(manifest, written)
    save_manifest(manifest, out_dir / MANIFEST_NAME)
    logger.info(f"Simulated {len(seeds)} realization(s) of '{config.name}' into {out_dir}")
    return manifest


def load_run(run_dir: Path) -> Tuple[ScenarioConfig, RunManifest, List[list]]:
    """
    Read back a simulate run.

    Raises:
        SnapshotFormatError: If the run was dumped as text
    """
    manifest = load_manifest(run_dir / MANIFEST_NAME)
    config = load_config(run_dir / CONFIG_NAME)
    ensemble = []
    for seed in manifest.seeds:
        path = _dump_path(run_dir, seed, text=False)
        if not path.exists() and _dump_path(run_dir, seed, text=True).exists():
            raise SnapshotFormatError(f"Run {run_dir} holds text dumps, which cannot be read back")
        ensemble.append(read_snapshots(path))
    return config, manifest, ensemble


def cmd_stats(
    statistics: Sequence[str],
    out_dir: Path,
    run_dir: Optional[Path] = None,
    config: Optional[ScenarioConfig] = None,
    seeds: Optional[Sequence[int]] = None,
    duration: Optional[float] = None,
    dt: Optional[float] = None,
    workers: int = 1,
    settings: Optional[StatisticSettings] = None,
) -> RunManifest:
    """
    Compute statistic curves from a simulate run or from a fresh ensemble.

    Raises:
        ConfigError: On an unknown statistic or a missing scenario
    """
    names = parse_statistics(",".join(statistics))
    if run_dir is not None:
        config, source, ensemble = load_run(run_dir)
        seeds, duration, dt = source.seeds, source.duration, source.time_step
    else:
        if config is None:
            raise ConfigError("cmd_stats needs a run directory or a scenario")
        seeds = list(seeds) if seeds else [config.seed]
        duration = config.duration if duration is None else duration
        dt = config.time_step if dt is None else dt
        ensemble = run_ensemble(config, seeds, duration, dt, workers) if names else []

    settings = settings or StatisticSettings.for_scenario(config)

    out_dir.mkdir(parents=True, exist_ok=True)
    written = [_write_config(config, out_dir)]
    meta: Dict[str, object] = {
        "scenario": config.name,
        "seeds": ",".join(str(seed) for seed in seeds),
        "duration": duration,
        "time_step": dt,
    }
    for name in names:
        if name == APS:
            first = ensemble[0][0]
            window = min(APS_WINDOW, first.num_rx)
            written.append(
                write_table(
                    aps_table(first, settings.frequency_grid(), window),
                    out_dir / f"{APS}.txt",
                    {"statistic": APS, "window": window, **meta},
                )
            )
            continue
        curve = statistic_curve(StatisticKind(name), ensemble, None, settings)
        written.append(write_curve(curve, out_dir / f"{name}.txt", meta))

    manifest = RunManifest(
        scenario=config.name,
        seeds=list(seeds),
        duration=duration,
        time_step=dt,
        statistics=names,
        output_dir=str(out_dir),
    )
    manifest = record_files(manifest, written)
    save_manifest(manifest, out_dir / MANIFEST_NAME)
    return manifest


def cmd_fit(
    target_path: Path, grid_path: Path, config: ScenarioConfig, out_dir: Path, workers: int = 1
) -> FitReport:
    """Grid-search the parameters in grid_path against the target curve file."""
    target = read_target_curve(target_path)
    grid_data = json.loads(grid_path.read_text(encoding="utf-8"))
    grid = ParameterGrid.model_validate({**grid_data, "base": config})
    logger.info(f"Fitting {len(grid.candidates)} parameter(s) over {grid.size} grid point(s)")

    result = grid_search(grid, target, workers)
    report = FitReport(
        target=str(target_path),
        statistic=target.kind.value,
        best_params=result.best_params,
        best_error=result.best_error,
        threshold=grid.threshold,
        threshold_met=result.threshold_met,
        table=[FitRow(params=params, error=error) for params, error in result.table],
    )
    save_fit_report(report, out_dir / "fit-report.json")
    return report


def cmd_reproduce(
    figure: str, out_dir: Path, seeds: Optional[Sequence[int]] = None, workers: int = 1
) -> RunManifest:
    name = resolve_figure(figure)
    seeds = list(seeds) if seeds else list(range(1, ENSEMBLE_SIZES[name] + 1))
    target_dir = out_dir / name
    written = reproduce(name, target_dir, seeds, workers)
    manifest = RunManifest(
        scenario=name,
        seeds=seeds,
        statistics=[name],
        output_dir=str(target_dir),
    )
    manifest = record_files(manifest, written)
    save_manifest(manifest, target_dir / MANIFEST_NAME)
    return manifest


def cmd_presets() -> Dict[str, str]:
    presets = list_presets()
    for name, description in presets.items():
        print(f"{name:20s} {description}")
    return presets


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="3D non-stationary geometry-based stochastic channel simulator"
    )
    parser.add_argument("--debug", action="store_true", help="Enable debug logging")
    commands = parser.add_subparsers(dest="command", required=True)

    def scenario_options(sub: argparse.ArgumentParser) -> None:
        group = sub.add_mutually_exclusive_group()
        group.add_argument("--config", help="Scenario JSON file")
        group.add_argument("--preset", help="Scenario preset name (see 'presets')")
        sub.add_argument("--seeds", help="Seeds as 3, 1,2,5 or 0:8")
        sub.add_argument("--duration", type=float, help="Seconds to simulate")
        sub.add_argument("--dt", type=float, help="Time step in seconds")

    def common_options(sub: argparse.ArgumentParser) -> None:
        sub.add_argument("--out", type=Path, default=OUTPUT_DIR, help="Output directory")
        sub.add_argument(
            "--workers", type=int, default=default_workers(), help="Worker processes"
        )

    simulate = commands.add_parser("simulate", help="Run realizations and dump snapshots")
    scenario_options(simulate)
    common_options(simulate)
    simulate.add_argument("--text", action="store_true", help="Dump snapshots as text")

    stats = commands.add_parser("stats", help="Compute statistic curves")
    scenario_options(stats)
    common_options(stats)
    stats.add_argument("--run", type=Path, help="Directory written by 'simulate'")
    stats.add_argument("--stats", default="", help="Comma-separated statistic names")

    fit = commands.add_parser("fit", help="Fit parameters to a target curve")
    scenario_options(fit)
    common_options(fit)
    fit.add_argument("--target", type=Path, required=True, help="Target curve file")
    fit.add_argument("--grid", type=Path, required=True, help="Parameter grid JSON file")

    figure = commands.add_parser("reproduce", help="Write the data of one figure pipeline")
    figure.add_argument(
        "figure", help=f"Pipeline name or figure token ({', '.join(FIGURE_TOKENS)})"
    )
    figure.add_argument("--seeds", help="Seeds as 3, 1,2,5 or 0:8")
    common_options(figure)

    commands.add_parser("presets", help="List scenario presets")
    return parser


def run(args: argparse.Namespace) -> int:
    seeds = parse_seeds(args.seeds) if getattr(args, "seeds", None) else None

    if args.command == "presets":
        cmd_presets()
        return EXIT_OK

    if args.command == "reproduce":
        cmd_reproduce(args.figure, args.out, seeds, args.workers)
        return EXIT_OK

    if args.command == "stats" and args.run is not None:
        cmd_stats(parse_statistics(args.stats), args.out, run_dir=args.run, workers=args.workers)
        return EXIT_OK

    config, config_path = resolve_config(args.config, args.preset)
    if args.command == "simulate":
        cmd_simulate(
            config,
            seeds or [config.seed],
            args.out,
            args.duration,
            args.dt,
            args.workers,
            args.text,
            config_path,
        )
    elif args.command == "stats":
        cmd_stats(
            parse_statistics(args.stats),
            args.out,
            config=config,
            seeds=seeds,
            duration=args.duration,
            dt=args.dt,
            workers=args.workers,
        )
    elif args.command == "fit":
        if args.duration is not None or args.dt is not None:
            overrides = {"duration": args.duration or config.duration}
            overrides["time_step"] = args.dt or config.time_step
            config = ScenarioConfig.model_validate({**config.model_dump(), **overrides})
        report = cmd_fit(args.target, args.grid, config, args.out, args.workers)
        if not report.threshold_met:
            return EXIT_THRESHOLD
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse command-line arguments and run the requested command."""
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.debug)

    try:
        return run(args)
    except (SnapshotFormatError, TargetFormatError) as e:
        logger.error(f"Unreadable input file: {e}")
        return EXIT_IO
    except (ConfigError, ValidationError, ValueError) as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
