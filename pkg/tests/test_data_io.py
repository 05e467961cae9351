import tempfile
import unittest
from pathlib import Path

import numpy as np
from numpy.testing import assert_array_equal

from channel import CirSnapshot, run_realization
from clusters import EvolutionParams
from data_io import (
    MAGIC,
    RunManifest,
    SnapshotFormatError,
    TargetFormatError,
    file_digest,
    load_manifest,
    read_snapshots,
    read_target_curve,
    record_files,
    save_manifest,
    write_curve,
    write_snapshots,
    write_snapshots_text,
    write_table,
)
from scenarios import ArrayConfig, ScenarioConfig
from stats import StatisticCurve, StatisticKind


def small_config(rician_factor: float = 0.0) -> ScenarioConfig:
    return ScenarioConfig(
        name="small",
        carrier_frequency=2e9,
        distance=100.0,
        rx=ArrayConfig(num_elements=2, velocity=(0.0, 5.0, 0.0)),
        tx=ArrayConfig(num_elements=2),
        evolution=EvolutionParams(mean_rays=3.0, fixed_ray_count=True),
        rician_factor=rician_factor,
        duration=3e-3,
    )


class TestSnapshotDumps(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_binary_dump_reads_back(self):
        """A binary dump reproduces every snapshot field bit for bit."""
        snapshots = run_realization(small_config(rician_factor=2.0), seed=4)
        path = write_snapshots(snapshots, self.root / "run.cir")
        loaded = read_snapshots(path)

        self.assertEqual(len(loaded), len(snapshots))
        for original, copy in zip(snapshots, loaded):
            self.assertEqual(copy.time, original.time)
            assert_array_equal(copy.ray_delays, original.ray_delays)
            assert_array_equal(copy.ray_powers, original.ray_powers)
            assert_array_equal(copy.ray_cluster_ids, original.ray_cluster_ids)
            assert_array_equal(copy.gains, original.gains)
            self.assertEqual(copy.los_delay, original.los_delay)
            assert_array_equal(copy.los_gains, original.los_gains)

    def test_empty_snapshot(self):
        """Snapshots without rays or LOS are stored too."""
        empty = CirSnapshot(
            time=0.5,
            ray_delays=np.zeros(0),
            ray_powers=np.zeros(0),
            ray_cluster_ids=np.zeros(0, dtype=np.int64),
            gains=np.zeros((2, 3, 0), dtype=complex),
        )
        (loaded,) = read_snapshots(write_snapshots([empty], self.root / "empty.cir"))
        self.assertEqual(loaded.gains.shape, (2, 3, 0))
        self.assertIsNone(loaded.los_gains)

    def test_truncated_dump(self):
        """A dump cut short raises SnapshotFormatError."""
        path = write_snapshots(run_realization(small_config(), seed=1), self.root / "run.cir")
        data = path.read_bytes()
        path.write_bytes(data[:-7])
        with self.assertRaises(SnapshotFormatError):
            read_snapshots(path)

    def test_wrong_header(self):
        """Files without the dump header are rejected."""
        path = self.root / "junk.cir"
        path.write_bytes(b"NOTADUMP" + bytes(40))
        with self.assertRaises(SnapshotFormatError):
            read_snapshots(path)
        self.assertEqual(len(MAGIC), 8)

    def test_text_dump(self):
        """The text export lists one line per nonzero tap with LOS marked -1."""
        snapshots = run_realization(small_config(rician_factor=1.0), seed=2)
        path = write_snapshots_text(snapshots, self.root / "run.txt")
        lines = path.read_text(encoding="utf-8").splitlines()
        self.assertEqual(lines[0], "# time_s q p delay_s re im cluster")
        rows = [line.split() for line in lines[1:]]
        self.assertTrue(all(len(row) == 7 for row in rows))
        self.assertEqual(sum(1 for row in rows if row[6] == "-1"), len(snapshots) * 4)
        expected = sum(int(np.count_nonzero(snap.gains)) for snap in snapshots)
        self.assertEqual(len(rows), expected + len(snapshots) * 4)


class TestCurveFiles(unittest.TestCase):
    def test_curve_reads_back_as_target(self):
        """A written curve is a valid target file for the same statistic."""
        curve = StatisticCurve(
            StatisticKind.RMS_DELAY_CCDF, np.array([1e-8, 2e-8, 3e-8]), np.array([1.0, 0.5, 0.0])
        )
        with tempfile.TemporaryDirectory() as tmp:
            path = write_curve(curve, Path(tmp) / "rms.txt", {"scenario": "mmwave_3d"})
            text = path.read_text(encoding="utf-8")
            target = read_target_curve(path)

        self.assertTrue(text.startswith("# statistic: rms-delay-ccdf\n# scenario: mmwave_3d\n"))
        self.assertEqual(target.kind, StatisticKind.RMS_DELAY_CCDF)
        self.assertEqual(target.x, [1e-8, 2e-8, 3e-8])
        self.assertEqual(target.y, [1.0, 0.5, 0.0])

    def test_censored_fraction_in_header(self):
        """Censored curves carry their censored fraction."""
        curve = StatisticCurve(
            StatisticKind.STATIONARY_INTERVAL_CCDF, np.array([0.1]), np.array([0.0]), 0.25
        )
        with tempfile.TemporaryDirectory() as tmp:
            text = write_curve(curve, Path(tmp) / "si.txt").read_text(encoding="utf-8")
        self.assertIn("# censored_fraction: 0.25\n", text)

    def test_table(self):
        """Tables list their column names in the header."""
        with tempfile.TemporaryDirectory() as tmp:
            path = write_table(
                {"angle_deg": np.array([0.0, 1.0]), "power": np.array([1.0, 0.5])},
                Path(tmp) / "aps.txt",
                {"statistic": "aps"},
            )
            lines = path.read_text(encoding="utf-8").splitlines()
        self.assertEqual(lines[:2], ["# statistic: aps", "# columns: angle_deg power"])
        self.assertEqual(lines[3], "1 0.5")

    def test_target_errors_name_the_line(self):
        """Malformed target files report the offending line number."""
        cases = {
            "0.0 1.0\n": ":1:",
            "# statistic: acf\n0.0 1.0\n0.1\n": ":3:",
            "# statistic: acf\n0.0 one\n": ":2:",
            "# statistic: bogus\n0.0 1.0\n": ":1:",
        }
        with tempfile.TemporaryDirectory() as tmp:
            for content, marker in cases.items():
                path = Path(tmp) / "target.txt"
                path.write_text(content, encoding="utf-8")
                with self.assertRaises(TargetFormatError) as ctx:
                    read_target_curve(path)
                self.assertIn(marker, str(ctx.exception))

    def test_target_source_and_validation(self):
        """The source line is kept and curve validation applies."""
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "target.txt"
            path.write_text(
                "# statistic: acf\n# source: drive test\n0.0 1.0\n0.01 0.7\n", encoding="utf-8"
            )
            self.assertEqual(read_target_curve(path).source, "drive test")

            path.write_text("# statistic: acf\n0.01 1.0\n0.0 0.7\n", encoding="utf-8")
            with self.assertRaises(TargetFormatError):
                read_target_curve(path)


class TestManifest(unittest.TestCase):
    def test_manifest_records_digests(self):
        """Manifests list output files relative to the run with their sha256."""
        with tempfile.TemporaryDirectory() as tmp:
            root = Path(tmp)
            (root / "b.txt").write_text("b", encoding="utf-8")
            (root / "a.txt").write_text("a", encoding="utf-8")
            manifest = RunManifest(scenario="x", seeds=[1, 2], output_dir=str(root))
            manifest = record_files(manifest, [root / "b.txt", root / "a.txt"])
            path = save_manifest(manifest, root / "manifest.json")
            loaded = load_manifest(path)
            digest = file_digest(root / "a.txt")

        self.assertEqual(list(loaded.files), ["a.txt", "b.txt"])
        self.assertEqual(loaded.files["a.txt"], digest)
        self.assertEqual(
            digest, "ca978112ca1bbdcafac231b39a23dc4da786eff8147c4e72b9807785afee48bb"
        )
        self.assertEqual(loaded, manifest)


if __name__ == "__main__":
    unittest.main()
