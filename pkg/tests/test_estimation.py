import unittest
from unittest.mock import patch

import numpy as np
from pydantic import ValidationError

from channel import run_ensemble
from clusters import EvolutionParams
from estimation import (
    ParameterGrid,
    TargetCurve,
    apply_parameters,
    grid_search,
    objective,
)
from scenarios import ArrayConfig, ConfigError, ScenarioConfig
from stats import StatisticCurve, StatisticKind, StatisticSettings, statistic_curve

SETTINGS = StatisticSettings()
SEEDS = [1, 2]


def tiny_config() -> ScenarioConfig:
    return ScenarioConfig(
        name="tiny",
        carrier_frequency=2e9,
        distance=100.0,
        rx=ArrayConfig(num_elements=2, velocity=(0.0, 5.0, 0.0)),
        tx=ArrayConfig(num_elements=2),
        evolution=EvolutionParams(mean_rays=3.0, fixed_ray_count=True),
        duration=10e-3,
    )


def self_target(config: ScenarioConfig) -> TargetCurve:
    """Normalized ACF of the model itself at the config's parameters."""
    ensemble = run_ensemble(config, SEEDS)
    curve = statistic_curve(StatisticKind.ACF, ensemble, None, SETTINGS)
    return TargetCurve(
        kind=StatisticKind.ACF, x=curve.x.tolist(), y=curve.y.tolist(), source="self"
    )


class TestTargetCurve(unittest.TestCase):
    def test_valid_curve(self):
        """A well-formed target keeps its points."""
        target = TargetCurve(kind=StatisticKind.ACF, x=[0.0, 0.01], y=[1.0, 0.5])
        self.assertEqual(target.x, [0.0, 0.01])

    def test_invalid_curves(self):
        """Unordered abscissae, ragged columns and out-of-range probabilities fail."""
        with self.assertRaises(ValidationError):
            TargetCurve(kind=StatisticKind.ACF, x=[0.01, 0.0], y=[1.0, 0.5])
        with self.assertRaises(ValidationError):
            TargetCurve(kind=StatisticKind.ACF, x=[0.0, 0.01], y=[1.0])
        with self.assertRaises(ValidationError):
            TargetCurve(kind=StatisticKind.RMS_DELAY_CCDF, x=[1e-8], y=[1.5])


class TestParameters(unittest.TestCase):
    def test_apply_parameters(self):
        """Named parameters land in their config section."""
        config = apply_parameters(
            tiny_config(), {"aoa_azimuth_std": 0.4, "array_coherence_distance": 12.0}
        )
        self.assertEqual(config.angles.aoa_azimuth_std, 0.4)
        self.assertEqual(config.evolution.array_coherence_distance, 12.0)
        self.assertEqual(config.evolution.mean_rays, 3.0)

    def test_unknown_and_invalid_parameters(self):
        """Unknown names raise ConfigError, invalid values fail validation."""
        with self.assertRaises(ConfigError):
            apply_parameters(tiny_config(), {"carrier_frequency": 1e9})
        with self.assertRaises(ValidationError):
            apply_parameters(tiny_config(), {"aoa_azimuth_std": -1.0})

    def test_grid_validation(self):
        """Grids need estimable parameters with at least one candidate each."""
        with self.assertRaises(ValidationError):
            ParameterGrid(base=tiny_config(), candidates={"speed": [1.0]}, seeds=[0], threshold=1)
        with self.assertRaises(ValidationError):
            ParameterGrid(
                base=tiny_config(), candidates={"aoa_azimuth_std": []}, seeds=[0], threshold=1
            )
        grid = ParameterGrid(
            base=tiny_config(),
            candidates={"aoa_azimuth_std": [0.1, 0.2], "aod_azimuth_std": [0.3, 0.4, 0.5]},
            seeds=[0],
            threshold=0.1,
        )
        self.assertEqual(grid.size, 6)
        self.assertEqual(grid.points()[0], {"aoa_azimuth_std": 0.1, "aod_azimuth_std": 0.3})


class TestGridSearch(unittest.TestCase):
    def test_self_generated_target_recovered(self):
        """A target produced by the model is matched exactly at its generating point."""
        base = tiny_config()
        target = self_target(apply_parameters(base, {"aoa_azimuth_std": 1.15}))
        self.assertEqual(
            objective({"aoa_azimuth_std": 1.15}, target, base, SEEDS, settings=SETTINGS), 0.0
        )

        grid = ParameterGrid(
            base=base,
            candidates={"aoa_azimuth_std": [0.3, 1.15]},
            seeds=SEEDS,
            threshold=1e-30,
            settings=SETTINGS,
        )
        result = grid_search(grid, target)
        self.assertEqual(result.best_params, {"aoa_azimuth_std": 1.15})
        self.assertEqual(result.best_error, 0.0)
        self.assertTrue(result.threshold_met)
        self.assertEqual(result.evaluated, 2)
        self.assertGreater(result.table[0][1], 0.0)

    def test_stops_at_threshold(self):
        """The search ends at the first point within the threshold."""
        grid = ParameterGrid(
            base=tiny_config(),
            candidates={"aoa_azimuth_std": [0.1, 0.2, 0.3]},
            seeds=[0],
            threshold=0.5,
        )
        target = TargetCurve(kind=StatisticKind.ACF, x=[0.0], y=[1.0])
        with patch("estimation.objective", side_effect=[0.9, 0.4, 0.0]) as mocked:
            result = grid_search(grid, target)
        self.assertEqual(mocked.call_count, 2)
        self.assertEqual(result.best_params, {"aoa_azimuth_std": 0.2})
        self.assertTrue(result.threshold_met)

    def test_settings_default_to_scenario_delay_grid(self):
        """Without explicit settings the objective bins on the scenario's delay grid."""
        base = tiny_config().model_copy(update={"delay_resolution": 20e-9})
        grid = ParameterGrid(
            base=base, candidates={"aoa_azimuth_std": [0.2]}, seeds=[0], threshold=1.0
        )
        self.assertIsNone(grid.settings)
        target = TargetCurve(kind=StatisticKind.ACF, x=[0.0], y=[1.0])
        curve = StatisticCurve(StatisticKind.ACF, np.array([0.0]), np.array([1.0]))
        with patch("estimation.run_ensemble", return_value=[]):
            with patch("estimation.statistic_curve", return_value=curve) as mocked:
                result = grid_search(grid, target)
        self.assertEqual(result.best_error, 0.0)
        self.assertEqual(mocked.call_args.args[3].delay_resolution, 20e-9)

    def test_ties_keep_first_point(self):
        """Equal errors keep the earlier grid point and a miss is reported."""
        grid = ParameterGrid(
            base=tiny_config(),
            candidates={"aoa_azimuth_std": [0.1, 0.2]},
            seeds=[0],
            threshold=0.01,
        )
        target = TargetCurve(kind=StatisticKind.ACF, x=[0.0], y=[1.0])
        with patch("estimation.objective", side_effect=[0.3, 0.3]):
            with self.assertLogs("estimation", level="WARNING"):
                result = grid_search(grid, target)
        self.assertEqual(result.best_params, {"aoa_azimuth_std": 0.1})
        self.assertFalse(result.threshold_met)
        self.assertEqual(result.evaluated, 2)


if __name__ == "__main__":
    unittest.main()
