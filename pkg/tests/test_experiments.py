import unittest
from unittest.mock import MagicMock, patch

import numpy as np

from dgieti.config import RunConfig
from dgieti.exceptions import ConfigurationError, DgIetiError, ExperimentError, OracleSizeError
from dgieti.experiments import KAPPA_COLUMNS, SOLVE_COLUMNS, ExperimentRunner


def make_config(geometry=None, **settings):
    config = RunConfig(geometry=geometry or {"generator": {"kind": "grid", "nx": 2, "ny": 2}}, **settings)
    assert config.validate() == []
    return config


class TestSolve(unittest.TestCase):
    def test_manufactured_solve(self):
        runner = ExperimentRunner(make_config(degree=2, levels=2, manufactured="sinsin"))
        columns, rows, summary = runner.run()
        self.assertEqual(columns, SOLVE_COLUMNS)
        row = rows[0]
        self.assertTrue(summary["converged"])
        self.assertNotIn("_solution", row)
        self.assertLess(row["dg_error"], 0.5)
        self.assertLess(row["l2_error"], 0.01)
        self.assertEqual(row["multipliers"], 32)
        self.assertEqual(row["primal"], 4)

    def test_matches_direct_solve(self):
        runner = ExperimentRunner(make_config(degree=2, levels=2, manufactured="sinsin", tol=1e-12))
        row = runner.run()[1][0]
        self.assertTrue(row["converged"])
        self.assertLessEqual(row["direct_diff"], 1e-8)

    def test_non_matching_matches_direct_solve(self):
        geometry = {"generator": {"kind": "split-square", "extra": 1}}
        runner = ExperimentRunner(make_config(geometry, degree=2, levels=1, tol=1e-12))
        row = runner.run()[1][0]
        self.assertLessEqual(row["direct_diff"], 1e-8 * max(row["u_max"], 1.0))

    def test_oracle_columns(self):
        runner = ExperimentRunner(make_config(degree=2, levels=1, oracle=True))
        row = runner.run()[1][0]
        self.assertGreaterEqual(row["oracle_lambda_min"], 1.0 - 1e-8)
        self.assertLessEqual(row["kappa"], row["oracle_kappa"] * (1 + 1e-6))

    @patch("dgieti.experiments.dense_spectrum_oracle", side_effect=OracleSizeError("too many multipliers"))
    def test_oracle_is_skipped_when_too_large(self, mock_oracle):
        runner = ExperimentRunner(make_config(degree=1, levels=1, oracle=True))
        with self.assertLogs("dgieti.experiments", level="WARNING"):
            row = runner.run()[1][0]
        mock_oracle.assert_called_once()
        self.assertNotIn("oracle_kappa", row)
        self.assertTrue(row["converged"])

    def test_zero_solution(self):
        runner = ExperimentRunner(make_config(degree=1, levels=1, manufactured="zero"))
        row = runner.run()[1][0]
        self.assertEqual(row["iterations"], 0)
        self.assertEqual(row["dg_error"], 0.0)
        self.assertEqual(row["l2_error"], 0.0)

    def test_non_matching_interface_is_rejected(self):
        geometry = {
            "patches": [
                {"degree": 1, "knots": [[0, 0, 1, 1], [0, 0, 1, 1]], "control_points": [[0, 0], [0, 1], [1, 0], [1, 1]]},
                {"degree": 1, "knots": [[0, 0, 1, 1], [0, 0, 1, 1]],
                 "control_points": [[1, 0.5], [1, 1.5], [2, 0.5], [2, 1.5]]},
            ],
            "interfaces": [{"first": [0, "east"], "second": [1, "west"]}],
            "dirichlet": [[0, "west"]],
        }
        with self.assertRaises(ConfigurationError):
            ExperimentRunner(make_config(geometry, degree=1)).build()
        with self.assertRaises(ExperimentError):
            ExperimentRunner(make_config(geometry, degree=1)).run()


class TestStudies(unittest.TestCase):
    def test_kappa_study(self):
        runner = ExperimentRunner(make_config(degree=2, levels=0, level_list=[1, 2, 3, 4], experiment="kappa-study"))
        columns, rows, summary = runner.run()
        self.assertEqual(columns, KAPPA_COLUMNS)
        self.assertEqual([r["level"] for r in rows], [1, 2, 3, 4])
        np.testing.assert_allclose([r["H_over_h"] for r in rows], [2.0, 4.0, 8.0, 16.0])
        self.assertTrue(all(r["lambda_min"] >= 1.0 - 1e-6 for r in rows))
        self.assertGreaterEqual(rows[-1]["kappa"], rows[0]["kappa"])
        self.assertTrue(summary["converged"])
        self.assertGreater(summary["slope"], 0.0)
        self.assertGreaterEqual(summary["r2"], 0.95)

        normalized = [r["kappa"] / (1.0 + np.log(r["H_over_h"])) ** 2 for r in rows]
        self.assertLessEqual(max(normalized) / min(normalized), 3.0)
        self.assertAlmostEqual(summary["normalized_spread"], max(normalized) / min(normalized))

    def test_kappa_study_needs_three_levels(self):
        runner = ExperimentRunner(make_config(level_list=[1, 2], experiment="kappa-study"))
        with self.assertRaises(ConfigurationError):
            runner.run()

    def test_partial_rows_on_failure(self):
        runner = ExperimentRunner(make_config(experiment="kappa-study"))
        first = {"_solution": [], "kappa": 2.0, "H_over_h": 2.0, "converged": True}
        with patch.object(runner, "build", return_value=MagicMock()), \
                patch.object(runner, "run_once", side_effect=[first, DgIetiError("singular")]):
            with self.assertRaises(ExperimentError) as ctx:
                runner.run()
        self.assertEqual(len(ctx.exception.partial), 1)
        self.assertEqual(ctx.exception.partial[0]["level"], 1)

    def test_ratio_study(self):
        geometry = {"generator": {"kind": "grid", "nx": 2, "ny": 1}}
        runner = ExperimentRunner(make_config(geometry, degree=2, levels=2, ratios=[1, 2, 4], experiment="ratio-study"))
        _, rows, summary = runner.run()
        self.assertEqual([r["ratio"] for r in rows], [1, 2, 4])
        np.testing.assert_allclose([r["q_h"] for r in rows], [2.0, 6.0, 20.0])
        self.assertTrue(summary["all_within_envelope"])
        self.assertTrue(summary["converged"])

    def test_ratio_beyond_base_level(self):
        geometry = {"generator": {"kind": "grid", "nx": 2, "ny": 1}}
        runner = ExperimentRunner(make_config(geometry, degree=1, levels=1, ratios=[1, 4], experiment="ratio-study"))
        with self.assertRaises(ExperimentError) as ctx:
            runner.run()
        self.assertEqual(len(ctx.exception.partial), 1)

    def test_convergence_needs_manufactured_solution(self):
        with self.assertRaises(ConfigurationError):
            ExperimentRunner(make_config(experiment="convergence")).run()

    def _non_matching_rates(self, degree):
        geometry = {"generator": {"kind": "split-square", "extra": 1}}
        runner = ExperimentRunner(make_config(
            geometry, degree=degree, levels=0, level_list=[2, 3, 4], manufactured="sinsin",
            experiment="convergence", tol=1e-10,
        ))
        _, rows, summary = runner.run()
        self.assertTrue(all(r["converged"] for r in rows))
        self.assertTrue(np.isnan(rows[0]["dg_rate"]))
        return summary

    def test_linear_convergence_non_matching(self):
        summary = self._non_matching_rates(1)
        self.assertLessEqual(abs(summary["dg_rate"] - 1.0), 0.2)
        self.assertLessEqual(abs(summary["l2_rate"] - 2.0), 0.2)

    def test_quadratic_convergence_non_matching(self):
        summary = self._non_matching_rates(2)
        self.assertLessEqual(abs(summary["dg_rate"] - 2.0), 0.2)
        self.assertLessEqual(abs(summary["l2_rate"] - 3.0), 0.2)


if __name__ == "__main__":
    unittest.main()
