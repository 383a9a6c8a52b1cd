import json
import os
import tempfile
import unittest
from unittest.mock import MagicMock, patch

from dgieti.cli import EXIT_ERROR, EXIT_NOT_CONVERGED, EXIT_OK, build_parser, main, run
from dgieti.config import RunConfig, build_geometry, load_config, offset_levels
from dgieti.exceptions import ConfigurationError, ExperimentError
from dgieti.experiments import KAPPA_COLUMNS

GRID = {"generator": {"kind": "grid", "nx": 2, "ny": 1}}

TWO_PATCHES = {
    "patches": [
        {"degree": 1, "knots": [[0, 0, 1, 1], [0, 0, 1, 1]], "control_points": [[0, 0], [0, 1], [1, 0], [1, 1]]},
        {"degree": 1, "knots": [[0, 0, 1, 1], [0, 0, 1, 1]], "control_points": [[1, 0], [1, 1], [2, 0], [2, 1]],
         "alpha": 2.0},
    ],
    "interfaces": [{"first": [0, "east"], "second": [1, "west"]}],
    "dirichlet": [[0, "west"]],
}


def write_document(directory, name, data):
    path = os.path.join(directory, name)
    with open(path, "w") as fh:
        json.dump(data, fh)
    return path


class TestRunConfig(unittest.TestCase):
    def test_defaults(self):
        config = RunConfig.from_dict({"geometry": GRID})
        self.assertEqual(config.degree, 2)
        self.assertEqual(config.tol, 1e-8)
        self.assertEqual(config.experiment, "solve")
        self.assertEqual(config.validate(), [])

    def test_nested_settings(self):
        config = RunConfig.from_dict({
            "geometry": GRID,
            "discretization": {"degree": 3, "levels": [1, 2], "delta": 20.0},
            "solver": {"tol": 1e-10, "scaling": "coefficient"},
            "experiment": {"kind": "ratio-study", "ratios": [1, 2]},
            "output": "results",
        })
        self.assertEqual(config.degree, 3)
        self.assertEqual(config.levels, [1, 2])
        self.assertEqual(config.delta, 20.0)
        self.assertEqual(config.scaling, "coefficient")
        self.assertEqual(config.experiment, "ratio-study")
        self.assertEqual(config.output, "results")

    def test_all_problems_are_reported(self):
        with self.assertRaises(ConfigurationError) as ctx:
            RunConfig.from_dict({"geometry": GRID, "solver": {"tol": 2.0}, "discretization": {"delta": -1.0}})
        self.assertIn("tol", str(ctx.exception))
        self.assertIn("delta", str(ctx.exception))

    def test_invalid_settings(self):
        for data in (
            {"geometry": GRID, "discretization": {"levels": -1}},
            {"geometry": GRID, "experiment": {"ratios": [3]}},
            {"geometry": GRID, "experiment": {"manufactured": "cosh"}},
            {"geometry": GRID, "discretization": {"alpha": [1.0, 2.0]}, "experiment": {"manufactured": "sinsin"}},
            {"geometry": GRID, "discretization": {"degree": "two"}},
            {"geometry": GRID, "solver": {"scaling": "stiffness"}},
            {"solver": {"tol": 1e-8}},
        ):
            with self.assertRaises(ConfigurationError):
                RunConfig.from_dict(data)

    def test_replace(self):
        config = RunConfig.from_dict({"geometry": GRID})
        changed = config.replace(tol=1e-6, output=None)
        self.assertEqual(changed.tol, 1e-6)
        self.assertEqual(changed.output, config.output)
        with self.assertRaises(ConfigurationError):
            config.replace(delta=0.0)

    def test_geometry_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            write_document(tmp, "geometry.json", TWO_PATCHES)
            path = write_document(tmp, "run.json", {"geometry": "geometry.json"})
            config = load_config(path)
        self.assertEqual(len(config.geometry["patches"]), 2)

    def test_unreadable_file(self):
        with self.assertRaises(ConfigurationError):
            load_config("/nonexistent/run.json")

    def test_offset_levels(self):
        self.assertEqual(offset_levels(1, 2), 3)
        self.assertEqual(offset_levels([1, 2], 1), [2, 3])


class TestBuildGeometry(unittest.TestCase):
    def test_generators(self):
        self.assertEqual(build_geometry({"generator": {"kind": "grid", "nx": 3, "ny": 1}}, 1).numpatches, 3)
        self.assertEqual(build_geometry({"generator": {"kind": "lshape"}}, 2).numpatches, 2)
        self.assertEqual(build_geometry({"generator": {"kind": "annulus"}}, 2).numpatches, 2)
        mp = build_geometry({"generator": {"kind": "split-square", "extra": 2}}, 1, levels=1)
        self.assertEqual([p.space.shape for p in mp.patches], [(3, 3), (9, 9)])

    def test_grid_with_dirichlet_list(self):
        mp = build_geometry({"generator": {"kind": "grid", "nx": 2, "ny": 1, "dirichlet": [[0, "west"]]}}, 1)
        self.assertEqual(len(mp.dirichlet_sides), 1)

    def test_explicit_patches(self):
        mp = build_geometry(TWO_PATCHES, 2, levels=[0, 1])
        self.assertEqual(mp.patches[0].space.shape, (3, 3))
        self.assertEqual(mp.patches[1].space.shape, (4, 4))
        self.assertEqual(mp.patches[1].alpha, 2.0)
        self.assertEqual(len(mp.neumann_sides), 5)

    def test_invalid_documents(self):
        reversed_patch = json.loads(json.dumps(TWO_PATCHES))
        reversed_patch["patches"][1]["control_points"] = [[2, 0], [2, 1], [1, 0], [1, 1]]
        bad_side = json.loads(json.dumps(TWO_PATCHES))
        bad_side["dirichlet"] = [[0, "left"]]
        for geometry in ({"generator": {"kind": "torus"}}, {"mesh": []}, reversed_patch, bad_side):
            with self.assertRaises(ConfigurationError):
                build_geometry(geometry, 1)
        with self.assertRaises(ConfigurationError):
            build_geometry({"generator": {"kind": "lshape"}}, 1, alpha=[1.0, 2.0])


class TestCli(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.out = os.path.join(self.tmp.name, "out")
        self.config = write_document(self.tmp.name, "run.json", {
            "geometry": GRID,
            "discretization": {"degree": 1, "levels": 1},
            "output": self.out,
        })

    def tearDown(self):
        self.tmp.cleanup()

    def read(self, name):
        with open(os.path.join(self.out, name)) as fh:
            return fh.read()

    def test_parser(self):
        args = build_parser().parse_args(["kappa-study", "--config", "run.json", "--tol", "1e-6", "--oracle"])
        self.assertEqual(args.command, "kappa-study")
        self.assertEqual(args.tol, 1e-6)
        self.assertTrue(args.oracle)
        with self.assertRaises(SystemExit):
            build_parser().parse_args(["plot", "--config", "run.json"])

    @patch("dgieti.cli.ExperimentRunner")
    def test_success(self, mock_runner_cls):
        mock_runner_cls.return_value.run.return_value = (["a", "b"], [{"a": 1, "b": 0.1}], {"converged": True})

        code = main(["solve", "--config", self.config, "--tol", "1e-6"])

        self.assertEqual(code, EXIT_OK)
        config = mock_runner_cls.call_args[0][0]
        self.assertEqual(config.tol, 1e-6)
        self.assertEqual(config.experiment, "solve")
        self.assertEqual(self.read("results.csv"), "a,b\n1,0.10000000000000001\n")
        report = json.loads(self.read("report.json"))
        self.assertEqual(report["status"], "ok")
        self.assertEqual(report["command"], "solve")

    @patch("dgieti.cli.ExperimentRunner")
    def test_not_converged(self, mock_runner_cls):
        mock_runner_cls.return_value.run.return_value = (["a"], [{"a": 1}], {"converged": False})
        self.assertEqual(main(["solve", "--config", self.config]), EXIT_NOT_CONVERGED)
        self.assertEqual(json.loads(self.read("report.json"))["status"], "not-converged")

    @patch("dgieti.cli.ExperimentRunner")
    def test_experiment_error_keeps_partial_rows(self, mock_runner_cls):
        mock_runner_cls.return_value.run.side_effect = ExperimentError("level 3 failed", partial=[{"level": 1, "kappa": 2.0}])
        self.assertEqual(main(["kappa-study", "--config", self.config]), EXIT_ERROR)
        self.assertEqual(self.read("results.csv"), ",".join(KAPPA_COLUMNS) + "\n1,,,,,,2\n")
        self.assertEqual(json.loads(self.read("report.json"))["status"], "error")

    def test_run_with_injected_runner(self):
        runner_cls = MagicMock()
        runner_cls.return_value.run.return_value = (["x"], [{"x": 2}], {})
        args = build_parser().parse_args(["convergence", "--config", self.config])

        self.assertEqual(run(args, runner_cls=runner_cls), EXIT_OK)
        runner_cls.assert_called_once()
        self.assertEqual(runner_cls.call_args[0][0].experiment, "convergence")
        self.assertEqual(self.read("results.csv"), "x\n2\n")

    def test_invalid_configuration(self):
        bad = write_document(self.tmp.name, "bad.json", {"geometry": GRID, "solver": {"maxit": 0}})
        self.assertEqual(main(["solve", "--config", bad]), EXIT_ERROR)
        self.assertEqual(main(["solve", "--config", self.config, "--delta", "-2"]), EXIT_ERROR)

    def test_end_to_end_is_deterministic(self):
        outputs = []
        for name in ("first", "second"):
            out = os.path.join(self.tmp.name, name)
            self.assertEqual(main(["solve", "--config", self.config, "--out", out]), EXIT_OK)
            with open(os.path.join(out, "results.csv")) as fh:
                outputs.append(fh.read())
        self.assertEqual(outputs[0], outputs[1])
        self.assertTrue(outputs[0].startswith("dofs,multipliers,primal,iterations,converged"))


if __name__ == "__main__":
    unittest.main()
