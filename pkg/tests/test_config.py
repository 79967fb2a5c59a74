"""
Tests for run configs and environment settings.
"""

import math
import os
import tempfile
import unittest
from unittest import mock

from srmaser.config import (
    Settings,
    SweepAxis,
    build_config,
    config_hash,
    load_config,
    parse_config_text,
)
from srmaser.errors import ConfigError
from srmaser.model import TWO_PI, load_preset

BASIC = """
# identical spins
units = hertz
omega_c = 9.22e9
kappa_c = 0.3e6
n_spins = 4e13
g = 0.11
chi = 0.64e6
temperature = 0.025
"""


def config_from(text, overrides=()):
    return build_config(parse_config_text(text, overrides))


class TestParsing(unittest.TestCase):
    """Key-value grammar."""

    def test_hertz_conversion(self):
        """units = hertz multiplies frequencies and rates by 2 pi."""
        config = config_from(BASIC)
        self.assertAlmostEqual(config.params.kappa_c, TWO_PI * 0.3e6, places=6)
        self.assertEqual(config.params.n_spins, 4e13)
        self.assertEqual(config.params.temperature, 0.025)
        self.assertEqual(config.params.omega_s, config.params.omega_c)
        self.assertEqual(config.units, "hertz")

    def test_angular_values_unchanged(self):
        """units = angular keeps values as written."""
        config = config_from(BASIC.replace("units = hertz", "units = angular"))
        self.assertEqual(config.params.kappa_c, 0.3e6)

    def test_missing_units(self):
        """Frequency keys without a units line are rejected."""
        with self.assertRaises(ConfigError) as ctx:
            config_from(BASIC.replace("units = hertz", ""))
        self.assertIn("units", str(ctx.exception))

    def test_unknown_key_names_line(self):
        """Unknown keys report their line number."""
        with self.assertRaises(ConfigError) as ctx:
            config_from("units = angular\nomega_c = 1\nbogus = 3\n")
        self.assertIn("line 3", str(ctx.exception))

    def test_malformed_line(self):
        """Lines without '=' are rejected."""
        with self.assertRaises(ConfigError):
            config_from("units = angular\nomega_c 1\n")

    def test_override_applies_last(self):
        """Overrides replace file values."""
        config = config_from(BASIC, overrides=["n_spins = 1e12"])
        self.assertEqual(config.params.n_spins, 1e12)

    def test_eta_over_gamma(self):
        """eta_over_gamma scales the resolved gamma."""
        config = config_from(BASIC + "gamma = 1.0\neta_over_gamma = 1000\n")
        self.assertAlmostEqual(config.params.eta, 1000.0 * TWO_PI, places=6)

    def test_detuning(self):
        """detuning sets omega_s relative to omega_c."""
        config = config_from(BASIC + "detuning = 1e6\n")
        self.assertAlmostEqual(config.params.detuning, TWO_PI * 1e6, delta=1e-3)

    def test_preset_seed(self):
        """A preset supplies every parameter; explicit keys win."""
        config = config_from("preset = breeze2018\nunits = angular\ntemperature = 293\n")
        preset = load_preset("breeze2018")
        self.assertEqual(config.params.g, preset.params.g)
        self.assertEqual(config.params.temperature, 293.0)

    def test_missing_parameters(self):
        """Without a preset the core parameters are required."""
        with self.assertRaises(ConfigError):
            config_from("units = angular\nomega_c = 1\n")

    def test_invalid_parameter_value(self):
        """Values violating parameter invariants become ConfigError."""
        with self.assertRaises(ConfigError):
            config_from(BASIC + "eta = -1\n")


class TestSweepSection(unittest.TestCase):
    """sweep.* keys."""

    SWEEP = BASIC + """
sweep.axis1.name = eta_over_gamma
sweep.axis1.scale = log
sweep.axis1.min = 1e-3
sweep.axis1.max = 1e5
sweep.axis1.points = 17
sweep.axis2.name = n_spins
sweep.axis2.scale = log
sweep.axis2.min = 1e11
sweep.axis2.max = 1e17
sweep.axis2.points = 13
sweep.outputs = photon_number, regime
sweep.bidirectional = yes
"""

    def test_two_axis_sweep(self):
        """Two log axes with outputs and the bidirectional flag."""
        sweep = config_from(self.SWEEP).sweep
        self.assertEqual(sweep.axis1.name, "eta_over_gamma")
        self.assertEqual(len(sweep.axis1.raw_values()), 17)
        self.assertAlmostEqual(sweep.axis2.raw_values()[-1], 1e17, delta=1e5)
        self.assertEqual(sweep.outputs, ("photon_number", "regime"))
        self.assertTrue(sweep.bidirectional)

    def test_too_few_points(self):
        """Axes need at least two points."""
        with self.assertRaises(ConfigError):
            config_from(self.SWEEP.replace("sweep.axis1.points = 17", "sweep.axis1.points = 1"))

    def test_log_axis_needs_positive_bounds(self):
        """Log axes reject non-positive bounds."""
        with self.assertRaises(ConfigError):
            config_from(self.SWEEP.replace("sweep.axis1.min = 1e-3", "sweep.axis1.min = 0"))

    def test_unknown_output(self):
        """Outputs outside the known set are rejected."""
        with self.assertRaises(ConfigError):
            config_from(self.SWEEP.replace("photon_number, regime", "photon_number, colour"))

    def test_axis_units(self):
        """Axis unit multipliers use the base parameters."""
        params = config_from(BASIC).params
        axis = SweepAxis(name="detuning", min=0.0, max=2.0, points=3, unit="chi")
        self.assertAlmostEqual(axis.values(params)[-1], 2.0 * params.chi, places=6)


class TestConfigHash(unittest.TestCase):
    """Canonical hashing."""

    def test_hash_is_stable(self):
        """Equal configs hash equally; any change alters the hash."""
        a = config_from(BASIC)
        b = config_from("\n".join(reversed(BASIC.strip().splitlines())))
        c = config_from(BASIC, overrides=["g = 0.12"])
        self.assertEqual(config_hash(a), config_hash(b))
        self.assertNotEqual(config_hash(a), config_hash(c))
        self.assertEqual(len(config_hash(a)), 32)

    def test_load_from_file(self):
        """load_config reads a file and applies overrides."""
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "run.cfg")
            with open(path, "w", encoding="utf-8") as f:
                f.write(BASIC)
            config = load_config(path, overrides=["eta_over_gamma = 10"])
        self.assertAlmostEqual(config.params.eta, 10.0 * config.params.gamma, places=12)

    def test_missing_file(self):
        """Unreadable files raise ConfigError."""
        with self.assertRaises(ConfigError):
            load_config("/nonexistent/run.cfg")


class TestSettings(unittest.TestCase):
    """SRMASER_* environment variables."""

    def test_defaults(self):
        """Unset variables fall back to defaults."""
        with mock.patch.dict(os.environ, {}, clear=True):
            settings = Settings.from_env()
        self.assertEqual(settings.workers, 1)
        self.assertEqual(settings.newton_tol, 1e-10)

    def test_environment_values(self):
        """Variables are parsed and validated."""
        env = {"SRMASER_WORKERS": "4", "SRMASER_LOG_DIR": "none", "SRMASER_ODE_RTOL": "1e-6"}
        with mock.patch.dict(os.environ, env, clear=True):
            settings = Settings.from_env()
        self.assertEqual(settings.workers, 4)
        self.assertIsNone(settings.log_dir)
        self.assertTrue(math.isclose(settings.ode_rtol, 1e-6))

    def test_invalid_environment(self):
        """Out-of-range values raise ConfigError."""
        with mock.patch.dict(os.environ, {"SRMASER_WORKERS": "0"}, clear=True):
            with self.assertRaises(ConfigError):
                Settings.from_env()


if __name__ == '__main__':
    unittest.main()
