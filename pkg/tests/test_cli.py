import io
import json
import tempfile
import unittest
from contextlib import redirect_stdout
from pathlib import Path

from cli import (
    EXIT_CONFIG,
    EXIT_IO,
    EXIT_OK,
    EXIT_THRESHOLD,
    main,
    parse_seeds,
    parse_statistics,
)
from clusters import EvolutionParams
from data_io import load_manifest, read_snapshots
from scenarios import PRESETS, ArrayConfig, ConfigError, ScenarioConfig, save_config


def write_small_config(root: Path) -> Path:
    config = ScenarioConfig(
        name="cli-small",
        carrier_frequency=2e9,
        distance=100.0,
        rx=ArrayConfig(num_elements=2, velocity=(0.0, 5.0, 0.0)),
        tx=ArrayConfig(num_elements=2),
        evolution=EvolutionParams(mean_rays=3.0, fixed_ray_count=True),
        duration=3e-3,
    )
    return save_config(config, root / "small.json")


class TestArgumentParsing(unittest.TestCase):
    def test_parse_seeds(self):
        """Seeds accept a single value, a list or a half-open range."""
        self.assertEqual(parse_seeds("3"), [3])
        self.assertEqual(parse_seeds("1,2,5"), [1, 2, 5])
        self.assertEqual(parse_seeds("0:4"), [0, 1, 2, 3])

    def test_bad_seeds(self):
        """Malformed and empty seed lists are configuration errors."""
        for text in ["x", "4:2", "1:b"]:
            with self.assertRaises(ConfigError):
                parse_seeds(text)

    def test_parse_statistics(self):
        """Statistic lists are split on commas and checked by name."""
        self.assertEqual(parse_statistics("acf, aps"), ["acf", "aps"])
        self.assertEqual(parse_statistics(""), [])
        self.assertEqual(parse_statistics(None), [])
        with self.assertRaises(ConfigError):
            parse_statistics("acf,delay-doppler")


class TestCommands(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)
        self.config = str(write_small_config(self.root))

    def tearDown(self):
        self.tmp.cleanup()

    def simulate(self, out: str, *extra: str) -> int:
        argv = ["simulate", "--config", self.config, "--dt", "1e-3", "--workers", "1"]
        return main([*argv, "--out", str(self.root / out), *extra])

    def test_simulate_writes_run(self):
        """Simulate dumps one file per seed and a manifest of digests."""
        self.assertEqual(self.simulate("run", "--seeds", "7,8"), EXIT_OK)
        run = self.root / "run"
        manifest = load_manifest(run / "manifest.json")

        self.assertEqual(manifest.seeds, [7, 8])
        self.assertEqual(manifest.config_path, self.config)
        self.assertEqual(
            set(manifest.files), {"config.json", "realization-7.cir", "realization-8.cir"}
        )
        self.assertEqual(len(read_snapshots(run / "realization-7.cir")), 3)

    def test_simulate_is_reproducible(self):
        """The same seed produces byte-identical dumps."""
        self.simulate("a", "--seeds", "5")
        self.simulate("b", "--seeds", "5")
        first = load_manifest(self.root / "a" / "manifest.json")
        second = load_manifest(self.root / "b" / "manifest.json")
        self.assertEqual(first.files["realization-5.cir"], second.files["realization-5.cir"])

    def test_duration_override(self):
        """--duration overrides the configured duration."""
        self.simulate("long", "--seeds", "1", "--duration", "5e-3")
        snapshots = read_snapshots(self.root / "long" / "realization-1.cir")
        self.assertEqual(len(snapshots), 5)

    def test_stats_from_run(self):
        """Stats over a simulate run write one curve per statistic."""
        self.simulate("run", "--seeds", "1,2")
        out = self.root / "stats"
        run = str(self.root / "run")
        code = main(["stats", "--run", run, "--stats", "rms-delay-ccdf", "--out", str(out)])
        self.assertEqual(code, EXIT_OK)
        text = (out / "rms-delay-ccdf.txt").read_text(encoding="utf-8")
        self.assertTrue(text.startswith("# statistic: rms-delay-ccdf\n# scenario: cli-small\n"))
        self.assertEqual(load_manifest(out / "manifest.json").statistics, ["rms-delay-ccdf"])

    def test_stats_without_selection(self):
        """An empty selection writes no curve files."""
        out = self.root / "none"
        code = main(["stats", "--config", self.config, "--out", str(out), "--workers", "1"])
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(set(load_manifest(out / "manifest.json").files), {"config.json"})

    def test_text_run_cannot_feed_stats(self):
        """Runs dumped as text are rejected by stats as unreadable input."""
        self.simulate("text", "--seeds", "1", "--text")
        self.assertTrue((self.root / "text" / "realization-1.txt").exists())
        run, out = str(self.root / "text"), str(self.root / "out")
        code = main(["stats", "--run", run, "--stats", "acf", "--out", out])
        self.assertEqual(code, EXIT_IO)

    def test_configuration_errors(self):
        """Unknown presets and statistics exit with the configuration code."""
        out = str(self.root / "out")
        self.assertEqual(main(["simulate", "--preset", "nope", "--out", out]), EXIT_CONFIG)
        self.assertEqual(
            main(["stats", "--config", self.config, "--stats", "bogus", "--out", out]),
            EXIT_CONFIG,
        )
        self.assertEqual(main(["simulate", "--out", out]), EXIT_CONFIG)

    def test_missing_inputs(self):
        """Missing run directories and config files exit with the I/O code."""
        out = str(self.root / "out")
        missing = str(self.root / "missing")
        self.assertEqual(main(["stats", "--run", missing, "--stats", "acf", "--out", out]), EXIT_IO)
        self.assertEqual(main(["simulate", "--config", missing + ".json", "--out", out]), EXIT_IO)

    def test_fit_threshold_not_met(self):
        """A target the model cannot reach ends with the threshold code and a report."""
        target = self.root / "target.txt"
        target.write_text("# statistic: acf\n0.0 0.0\n0.001 0.0\n", encoding="utf-8")
        grid = self.root / "grid.json"
        grid.write_text(
            json.dumps({"candidates": {"aoa_azimuth_std": [0.2]}, "seeds": [1], "threshold": 1e-6}),
            encoding="utf-8",
        )
        out = self.root / "fit"
        argv = ["fit", "--config", self.config, "--target", str(target), "--grid", str(grid)]
        code = main([*argv, "--out", str(out), "--workers", "1"])
        self.assertEqual(code, EXIT_THRESHOLD)
        report = json.loads((out / "fit-report.json").read_text(encoding="utf-8"))
        self.assertFalse(report["threshold_met"])
        self.assertEqual(report["best_params"], {"aoa_azimuth_std": 0.2})
        self.assertGreaterEqual(report["best_error"], 0.5)

    def test_malformed_target(self):
        """A target without a statistic header exits with the I/O code."""
        target = self.root / "target.txt"
        target.write_text("0.0 1.0\n", encoding="utf-8")
        grid = self.root / "grid.json"
        grid.write_text(
            json.dumps({"candidates": {"aoa_azimuth_std": [0.2]}, "seeds": [1], "threshold": 1}),
            encoding="utf-8",
        )
        argv = ["fit", "--config", self.config, "--target", str(target), "--grid", str(grid)]
        code = main([*argv, "--out", str(self.root / "fit")])
        self.assertEqual(code, EXIT_IO)

    def test_stats_aps_windows(self):
        """The aps statistic stacks the spectra of sliding antenna windows."""
        config = ScenarioConfig(
            name="cli-aps",
            carrier_frequency=2e9,
            distance=100.0,
            rx=ArrayConfig(num_elements=10),
            tx=ArrayConfig(num_elements=1),
            evolution=EvolutionParams(mean_rays=3.0, fixed_ray_count=True),
            duration=1e-3,
        )
        path = str(save_config(config, self.root / "aps.json"))
        out = self.root / "aps"
        code = main(["stats", "--config", path, "--stats", "aps", "--out", str(out)])
        self.assertEqual(code, EXIT_OK)
        lines = (out / "aps.txt").read_text(encoding="utf-8").splitlines()
        self.assertIn("# window: 8", lines)
        self.assertIn("# columns: window angle_deg power", lines)
        windows = {line.split()[0] for line in lines if not line.startswith("#")}
        self.assertEqual(windows, {"0", "1", "2"})

    def test_reproduce_figure_token(self):
        """Figure tokens run the pipeline they stand for."""
        out = self.root / "figures"
        code = main(["reproduce", "fig8", "--seeds", "1", "--out", str(out), "--workers", "1"])
        self.assertEqual(code, EXIT_OK)
        self.assertTrue((out / "rms-delay" / "rms-delay-model.txt").exists())
        self.assertEqual(main(["reproduce", "fig7", "--out", str(out)]), EXIT_CONFIG)

    def test_presets_listing(self):
        """The presets command prints every preset name."""
        buffer = io.StringIO()
        with redirect_stdout(buffer):
            self.assertEqual(main(["presets"]), EXIT_OK)
        listed = [line.split()[0] for line in buffer.getvalue().splitlines()]
        self.assertEqual(listed, list(PRESETS))


if __name__ == "__main__":
    unittest.main()
