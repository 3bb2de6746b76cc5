import io
import json
import math
import os
import tempfile
import unittest
from unittest.mock import patch

import pandas as pd

from ranlase.cli import main
from ranlase.config import get_settings
from ranlase.errors import OutputError
from ranlase.output import provenance_header, render_csv, render_json, write_table
from ranlase.medium import Geometry

TWO_PI = repr(2.0 * math.pi)


def read_header(path):
    header = {}
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if not line.startswith("# "):
                break
            key, _, value = line[2:].rstrip("\n").partition(": ")
            header[key] = value
    return header


def read_frame(path):
    return pd.read_csv(path, comment="#", na_values=["divergent"])


class CliTestCase(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def path(self, name):
        return os.path.join(self.tmp.name, name)

    def run_cli(self, *argv, output="out.csv"):
        target = self.path(output)
        with patch("sys.stderr", new_callable=io.StringIO):
            code = main([*argv, "--log-file", "", "--log-level", "WARNING", "-o", target])
        return code, target


class TestDensityCommand(CliTestCase):

    def test_waveguide_support(self):
        code, target = self.run_cli("density", "--geometry", "waveguide", "--gamma", "4", "--N", "10")
        self.assertEqual(code, 0)
        self.assertEqual(read_header(target)["support"], "0,0.5")
        frame = read_frame(target)
        self.assertEqual(list(frame.columns), ["sigma", "rho"])
        self.assertLess(frame["sigma"].max(), 0.5)
        self.assertTrue((frame["rho"] >= 0.0).all())

    def test_amplifying_dual(self):
        code, target = self.run_cli("density", "--geometry", "cavity", "--gamma", "0.5", "--N", "40", "--dual")
        self.assertEqual(code, 0)
        frame = read_frame(target)
        self.assertTrue((frame["sigma"] >= 1.0).all())
        self.assertTrue(frame["sigma"].is_monotonic_increasing)

    def test_finite_waveguide_has_no_density(self):
        code, _ = self.run_cli("density", "--geometry", "finite-waveguide", "--gamma", "0.01",
                               "--length-ratio", "20")
        self.assertEqual(code, 2)


class TestStatsCommand(CliTestCase):

    def sweep(self, *extra, output="out.csv"):
        return self.run_cli("stats", "--geometry", "cavity", "--response", "amplifying", "--sweep", "gamma",
                            "--min", "0", "--max", "1.5", "--points", "4", "--t", "10",
                            "--delta-omega", TWO_PI, *extra, output=output)

    def test_threshold_rows_are_divergent(self):
        code, target = self.sweep()
        self.assertEqual(code, 0)
        with open(target, encoding="utf-8") as handle:
            self.assertEqual(handle.read().count("divergent"), 10)
        frame = read_frame(target)
        self.assertEqual(list(frame.columns), ["gamma", "mean", "variance", "nu", "nu_eff", "nu_ratio"])
        self.assertAlmostEqual(frame["nu_ratio"][0], 0.5)
        # gamma = 0.5: nu = 10, f = -1 and m1 = -1
        self.assertAlmostEqual(frame["mean"][1], 10.0)
        self.assertTrue(frame["mean"][2:].isna().all())

    def test_json_uses_null(self):
        code, target = self.sweep("--format", "json", output="out.json")
        self.assertEqual(code, 0)
        with open(target, encoding="utf-8") as handle:
            document = json.load(handle)
        self.assertEqual(document["columns"][0], "gamma")
        self.assertIsNone(document["rows"][3][1])
        self.assertEqual(document["header"]["command"], "stats")

    def test_single_point(self):
        code, target = self.run_cli("stats", "--geometry", "cavity", "--gamma", "0.25", "--t", "10",
                                    "--delta-omega", TWO_PI)
        self.assertEqual(code, 0)
        frame = read_frame(target)
        self.assertAlmostEqual(frame["mean"][0], 2.0)

    def test_missing_count_time(self):
        code, _ = self.run_cli("stats", "--geometry", "cavity", "--gamma", "0.25", "--delta-omega", TWO_PI)
        self.assertEqual(code, 2)

    def test_thread_count_does_not_change_output(self):
        texts = []
        for threads in (1, 4):
            with patch("ranlase.cli.get_settings", return_value=get_settings(threads=threads)):
                code, target = self.sweep(output=f"threads{threads}.csv")
            self.assertEqual(code, 0)
            with open(target, encoding="utf-8") as handle:
                texts.append(handle.read())
        self.assertEqual(texts[0], texts[1])


class TestPmfCommand(CliTestCase):

    def test_negative_binomial(self):
        code, target = self.run_cli("pmf", "--family", "negative-binomial", "--nu", "4", "--alpha", "0.5",
                                    "--n-max", "80")
        self.assertEqual(code, 0)
        frame = read_frame(target)
        self.assertAlmostEqual(frame["p"][0], 1.5 ** -4)
        self.assertEqual(read_header(target)["family"], "negative-binomial")

    def test_occupation_from_x(self):
        # x = ln 2 gives f = 1, so alpha f = 1 and p0 = 2^-4
        code, target = self.run_cli("pmf", "--family", "negative-binomial", "--nu", "4", "--gamma", "0.5",
                                    "--x", repr(math.log(2.0)), "--n-max", "120")
        self.assertEqual(code, 0)
        self.assertAlmostEqual(read_frame(target)["p"][0], 2.0 ** -4)
        self.assertAlmostEqual(float(read_header(target)["mean"]), 4.0, places=6)

    def test_f_overrides_x(self):
        code, target = self.run_cli("pmf", "--family", "negative-binomial", "--nu", "4", "--alpha", "0.5",
                                    "--f", "1", "--x", "0.1", "--n-max", "80")
        self.assertEqual(code, 0)
        self.assertAlmostEqual(read_frame(target)["p"][0], 1.5 ** -4)

    def test_x_needs_medium(self):
        code, _ = self.run_cli("pmf", "--family", "negative-binomial", "--nu", "4", "--x", "1")
        self.assertEqual(code, 2)

    def test_numeric_above_threshold(self):
        code, _ = self.run_cli("pmf", "--geometry", "cavity", "--response", "amplifying", "--gamma", "1.2",
                               "--t", "10", "--delta-omega", TWO_PI)
        self.assertEqual(code, 4)

    def test_numeric_cavity(self):
        code, target = self.run_cli("pmf", "--geometry", "cavity", "--gamma", "1", "--N", "20", "--t", "1",
                                    "--delta-omega", "62.83185307179586", "--alpha", "0.1", "--n-max", "120")
        self.assertEqual(code, 0)
        header = read_header(target)
        # nu = 20 * 1 * 10 and m1 = 1/2
        self.assertAlmostEqual(float(header["mean"]), 200.0 * 0.1 * 0.5, places=6)

    def test_missing_family_parameter(self):
        code, _ = self.run_cli("pmf", "--family", "poisson")
        self.assertEqual(code, 2)


class TestMonteCarloCommand(CliTestCase):

    def test_lossless_cavity(self):
        code, target = self.run_cli("montecarlo", "--ensemble", "cavity", "--N", "2", "--gamma", "0",
                                    "--samples", "1000")
        self.assertEqual(code, 0)
        header = read_header(target)
        self.assertEqual(header["passed"], "True")
        self.assertEqual(header["fictitious_modes"], "0")
        self.assertEqual(read_frame(target)["count"].sum(), 2000)

    def test_worker_count_does_not_change_output(self):
        texts = []
        for threads in (1, 4):
            settings = get_settings(threads=threads)
            with patch("ranlase.cli.get_settings", return_value=settings), \
                    patch("ranlase.rmt.get_settings", return_value=settings):
                code, target = self.run_cli("montecarlo", "--N", "2", "--gamma", "0", "--samples", "1000",
                                            "--seed", "3", output=f"mc{threads}.csv")
            self.assertEqual(code, 0)
            with open(target, encoding="utf-8") as handle:
                texts.append(handle.read())
        self.assertEqual(texts[0], texts[1])

    def test_absorption_coefficient_in_header(self):
        code, target = self.run_cli("montecarlo", "--ensemble", "waveguide", "--N", "2", "--gamma", "0.5",
                                    "--length-ratio", "1", "--samples", "1000", "--absorption-coefficient",
                                    "0.09375")
        self.assertEqual(code, 0)
        header = read_header(target)
        self.assertEqual(header["absorption_coefficient"], "0.09375")
        self.assertIn("a=0.09375", header["formulas"])

    def test_too_few_samples(self):
        code, _ = self.run_cli("montecarlo", "--samples", "999")
        self.assertEqual(code, 2)


class TestCommonOptions(CliTestCase):

    def test_unwritable_output(self):
        blocker = self.path("file.txt")
        with open(blocker, "w", encoding="utf-8") as handle:
            handle.write("x")
        code, _ = self.run_cli("stats", "--geometry", "cavity", "--gamma", "0.25", "--t", "10",
                               "--delta-omega", TWO_PI, output=os.path.join("file.txt", "out.csv"))
        self.assertEqual(code, 3)

    def test_config_file_defaults(self):
        config = self.path("run.env")
        with open(config, "w", encoding="utf-8") as handle:
            handle.write(f"geometry=cavity\ngamma=0.5\ncount_time=10\ndelta_omega={TWO_PI}\n")
        code, target = self.run_cli("stats", "--config", config, "--gamma", "0.25")
        self.assertEqual(code, 0)
        header = read_header(target)
        self.assertEqual(header["gamma"], "0.25")
        self.assertEqual(header["count_time"], "10.0")
        self.assertAlmostEqual(read_frame(target)["mean"][0], 2.0)

    def test_unknown_config_key(self):
        config = self.path("bad.env")
        with open(config, "w", encoding="utf-8") as handle:
            handle.write("colour=blue\n")
        code, _ = self.run_cli("stats", "--config", config)
        self.assertEqual(code, 2)

    def test_version(self):
        with patch("sys.stdout", new_callable=io.StringIO):
            with self.assertRaises(SystemExit):
                main(["--version"])


class TestOutput(unittest.TestCase):

    def test_header_hash_tracks_parameters(self):
        first = provenance_header("stats", {"gamma": 0.5, "geometry": Geometry.CAVITY_HOLE, "x": None}, seed=1)
        again = provenance_header("stats", {"geometry": Geometry.CAVITY_HOLE, "gamma": 0.5}, seed=1)
        other = provenance_header("stats", {"gamma": 0.6, "geometry": Geometry.CAVITY_HOLE}, seed=1)
        self.assertEqual(first["config_hash"], again["config_hash"])
        self.assertNotEqual(first["config_hash"], other["config_hash"])
        self.assertEqual(first["geometry"], "cavity")
        self.assertNotIn("x", first)

    def test_render_csv(self):
        frame = pd.DataFrame({"gamma": [0.5, 1.0], "mean": [1.0 / 3.0, math.nan]})
        text = render_csv(frame, {"command": "stats"})
        lines = text.splitlines()
        self.assertEqual(lines[0], "# command: stats")
        self.assertEqual(lines[1], "gamma,mean")
        self.assertEqual(lines[2], "0.5,0.333333333333")
        self.assertEqual(lines[3], "1,divergent")

    def test_render_json(self):
        frame = pd.DataFrame({"n": [0, 1], "p": [0.75, math.nan]})
        document = json.loads(render_json(frame, {"command": "pmf"}))
        self.assertEqual(document["rows"], [[0, 0.75], [1, None]])

    def test_unknown_format(self):
        with self.assertRaises(OutputError):
            write_table(pd.DataFrame({"a": [1]}), {}, None, "xml")


if __name__ == "__main__":
    unittest.main()
