"""
Tests for the srmaser command line.
"""

import contextlib
import io
import json
import os
import tempfile
import unittest
from unittest import mock

from srmaser.cli import EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, EXIT_SWEEP, build_parser, main
from srmaser.config import get_settings

LASING_CFG = """
units = angular
omega_c = 1
kappa_c = 1
n_spins = 1000
g = 0.05
gamma = 0.01
eta_over_gamma = 100
"""


class CliTestCase(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        patcher = mock.patch.dict(os.environ, {"SRMASER_LOG_DIR": "none", "SRMASER_LOG_LEVEL": "WARNING"})
        patcher.start()
        self.addCleanup(patcher.stop)
        get_settings.cache_clear()
        self.addCleanup(get_settings.cache_clear)

    def path(self, name):
        return os.path.join(self.tmp.name, name)

    def write(self, name, text):
        with open(self.path(name), "w", encoding="utf-8") as f:
            f.write(text)
        return self.path(name)

    def run_cli(self, *argv):
        out = io.StringIO()
        with contextlib.redirect_stdout(out), contextlib.redirect_stderr(io.StringIO()):
            with self.assertRaises(SystemExit) as ctx:
                main(list(argv))
        return ctx.exception.code, out.getvalue()


class TestParser(unittest.TestCase):
    """Argument parsing."""

    def test_subcommand_options(self):
        """Run options and shared options parse after the subcommand."""
        args = build_parser().parse_args(
            ["sweep", "--config", "a.cfg", "--override", "g=1", "--override", "n_spins=2", "--workers", "4"])
        self.assertEqual(args.command, "sweep")
        self.assertEqual(args.override, ["g=1", "n_spins=2"])
        self.assertEqual(args.workers, 4)
        self.assertEqual(args.out, "out")

    def test_missing_subcommand(self):
        """A subcommand is required."""
        with contextlib.redirect_stderr(io.StringIO()):
            with self.assertRaises(SystemExit) as ctx:
                build_parser().parse_args([])
        self.assertEqual(ctx.exception.code, 2)


class TestPresetsCommand(CliTestCase):
    """srmaser presets."""

    def test_json_listing(self):
        """--json prints every preset with derived rates."""
        code, out = self.run_cli("presets", "--json")
        self.assertEqual(code, EXIT_OK)
        rows = json.loads(out)
        names = [row["name"] for row in rows]
        self.assertIn("breeze2018", names)
        breeze = rows[names.index("breeze2018")]
        self.assertEqual(breeze["coupling_regime"], "strong")
        self.assertGreater(breeze["collective_coupling"], 4e6)

    def test_text_listing(self):
        """The plain listing has one line per preset."""
        code, out = self.run_cli("presets")
        self.assertEqual(code, EXIT_OK)
        self.assertIn("breeze2018", out)


class TestRunCommands(CliTestCase):
    """single, sweep and error exits."""

    def test_single(self):
        """single writes the steady state, spectrum and summary."""
        config = self.write("run.cfg", LASING_CFG)
        out_dir = self.path("single")
        code, out = self.run_cli("single", "--config", config, "--out", out_dir)
        self.assertEqual(code, EXIT_OK)
        self.assertIn("superradiant_maser", out)
        for name in ("steady_state.csv", "spectrum.csv", "summary.json"):
            self.assertTrue(os.path.exists(os.path.join(out_dir, name)), name)
        with open(os.path.join(out_dir, "summary.json"), encoding="utf-8") as f:
            summary = json.load(f)
        self.assertEqual(summary["regime"], "superradiant_maser")
        self.assertGreater(summary["steady_state"]["photon_number"], 100.0)

    def test_unknown_key(self):
        """Config errors exit with code 2."""
        config = self.write("bad.cfg", LASING_CFG + "colour = red\n")
        code, _out = self.run_cli("single", "--config", config, "--out", self.path("x"))
        self.assertEqual(code, EXIT_CONFIG)

    def test_unknown_preset(self):
        """Unknown presets exit with code 2."""
        code, _out = self.run_cli("single", "--preset", "nowhere", "--out", self.path("x"))
        self.assertEqual(code, EXIT_CONFIG)

    def test_sweep_needs_axis(self):
        """sweep without sweep keys is a config error."""
        config = self.write("run.cfg", LASING_CFG)
        code, _out = self.run_cli("sweep", "--config", config, "--out", self.path("x"))
        self.assertEqual(code, EXIT_CONFIG)

    def test_sweep_failure_exit(self):
        """Too many failed points exit with code 4."""
        text = LASING_CFG + ("sweep.axis1.name = n_spins\nsweep.axis1.min = 0.1\n"
                             "sweep.axis1.max = 10\nsweep.axis1.points = 3\n")
        config = self.write("sweep.cfg", text)
        out_dir = self.path("sweep")
        code, _out = self.run_cli("sweep", "--config", config, "--out", out_dir)
        self.assertEqual(code, EXIT_SWEEP)
        self.assertTrue(os.path.exists(os.path.join(out_dir, "sweep.csv")))


class TestOracleCommand(CliTestCase):
    """srmaser oracle-check."""

    def test_builtin_decoupled_fixture(self):
        """A passing fixture file exits 0 and writes the report."""
        fixtures = [{
            "name": "decoupled",
            "params": {"omega_c": 1.0, "kappa_c": 1.0, "g": 0.0, "gamma": 0.1},
            "n_spins": 1, "fock_cutoff": 3, "photon_occupation": 0.4, "inversion": 0.5,
            "max_photon_relative": 1e-5,
        }]
        path = self.write("fixtures.json", json.dumps(fixtures))
        out_dir = self.path("oracle")
        code, out = self.run_cli("oracle-check", "--fixtures", path, "--out", out_dir)
        self.assertEqual(code, EXIT_OK)
        self.assertIn("PASS", out)
        self.assertTrue(os.path.exists(os.path.join(out_dir, "oracle_report.json")))

    def test_failing_fixture(self):
        """A fixture outside its bound exits with code 3."""
        fixtures = [{
            "name": "coupled",
            "params": {"omega_c": 1.0, "kappa_c": 1.0, "g": 0.5, "gamma": 0.1},
            "n_spins": 1, "fock_cutoff": 3, "horizon": 2.0, "inversion": 1.0,
            "max_photon_relative": 1e-12,
        }]
        path = self.write("fixtures.json", json.dumps(fixtures))
        code, out = self.run_cli("oracle-check", "--fixtures", path)
        self.assertEqual(code, EXIT_SOLVER)
        self.assertIn("FAIL", out)

    def test_invalid_fixture_file(self):
        """Malformed fixtures are config errors."""
        path = self.write("fixtures.json", json.dumps([{"name": "x", "n_spins": 9, "params": {}}]))
        code, _out = self.run_cli("oracle-check", "--fixtures", path)
        self.assertEqual(code, EXIT_CONFIG)


if __name__ == '__main__':
    unittest.main()
