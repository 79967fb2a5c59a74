"""
Tests for the identical-spin moment equations.
"""

import math
import unittest

from srmaser.errors import ParameterError
from srmaser.meanfield import (
    MeanFieldState,
    evolve,
    rhs_identical,
    state_row,
    steady_state,
    thermal_fixed_point,
)
from srmaser.model import TWO_PI, make_params

# Dimensionless masing point: N C ~ 10
LASING = dict(omega_c=1.0, omega_s=1.0, kappa_c=1.0, n_spins=1000.0, g=0.05, gamma=0.01, eta=1.0)


class TestThermalFixedPoint(unittest.TestCase):
    """Uncoupled steady states."""

    def test_uncoupled_pumped_spins(self):
        """g = 0 gives sz = (eta - gamma)/(gamma(2n+1) + eta) and no correlations."""
        params = make_params(omega_c=1.0, omega_s=1.0, kappa_c=1.0, n_spins=100.0, g=0.0,
                             gamma=0.01, eta=0.02)
        state = steady_state(params)
        self.assertAlmostEqual(state.inversion, 1.0 / 3.0, places=9)
        self.assertAlmostEqual(state.photon_number, 0.0, places=12)
        fixed = thermal_fixed_point(params)
        self.assertAlmostEqual(state.inversion, fixed.inversion, places=12)
        self.assertAlmostEqual(abs(state.spin_spin), 0.0, places=12)

    def test_thermal_resonator(self):
        """Without coupling the resonator holds its thermal occupation."""
        params = make_params(omega_c=TWO_PI * 1e9, omega_s=TWO_PI * 1e9, kappa_c=1e5, n_spins=1e6,
                             g=0.0, gamma=1.0, temperature=0.05)
        state = steady_state(params)
        expected = 1.0 / math.expm1(1.054571817e-34 * TWO_PI * 1e9 / (1.380649e-23 * 0.05))
        self.assertAlmostEqual(state.photon_number / expected, 1.0, places=6)
        self.assertLess(state.inversion, 0.0)

    def test_thermal_point_is_stationary(self):
        """The derivative vanishes at the g = 0 fixed point."""
        params = make_params(**{**LASING, "g": 0.0})
        d = rhs_identical(thermal_fixed_point(params), params)
        self.assertAlmostEqual(d.photon_number, 0.0, places=12)
        self.assertAlmostEqual(d.inversion, 0.0, places=12)
        self.assertAlmostEqual(abs(d.spin_photon), 0.0, places=12)


class TestSteadyState(unittest.TestCase):
    """Coupled steady states."""

    def setUp(self):
        self.params = make_params(**LASING)

    def test_masing_steady_state(self):
        """Above threshold the photon number is large and correlations positive."""
        state = steady_state(self.params)
        self.assertGreater(state.photon_number, 100.0)
        self.assertGreater(state.inversion, -1.0)
        self.assertLess(state.inversion, 1.0)
        self.assertGreater(state.spin_spin.real, 0.0)
        self.assertEqual(state.violations(), [])

    def test_residual_is_small(self):
        """Every derivative is negligible against its own scale."""
        state = steady_state(self.params)
        d = rhs_identical(state, self.params)
        self.assertLess(abs(d.photon_number), 1e-7 * self.params.kappa_c * state.photon_number)
        self.assertLess(abs(d.inversion), 1e-7)
        self.assertLess(abs(d.spin_photon), 1e-7 * (1.0 + abs(state.spin_photon)))

    def test_strategies_agree(self):
        """Newton and long-time integration reach the same fixed point."""
        newton = steady_state(self.params, strategy="auto")
        relaxed = steady_state(self.params, strategy="integrate", tol=1e-8)
        self.assertAlmostEqual(relaxed.photon_number / newton.photon_number, 1.0, places=5)
        self.assertAlmostEqual(relaxed.inversion, newton.inversion, places=6)

    def test_below_threshold_at_zero_temperature(self):
        """Without pump at T = 0 the system sits in its ground state."""
        state = steady_state(self.params.with_updates(eta=0.0))
        self.assertAlmostEqual(state.photon_number, 0.0, places=10)
        self.assertAlmostEqual(state.inversion, -1.0, places=10)

    def test_warm_start(self):
        """A nearby guess converges to the same state."""
        state = steady_state(self.params)
        nearby = steady_state(self.params.with_updates(eta=1.01), guess=state)
        self.assertAlmostEqual(nearby.photon_number / state.photon_number, 1.0, places=1)

    def test_unknown_strategy(self):
        """Unknown strategies are rejected."""
        with self.assertRaises(ParameterError):
            steady_state(self.params, strategy="guess")


class TestEvolve(unittest.TestCase):
    """Time integration."""

    def test_relaxes_to_steady_state(self):
        """Starting near the ground state the moments settle on the fixed point."""
        params = make_params(**LASING)
        start = MeanFieldState(0.0, 0j, -1.0, 0j)
        trajectory = evolve(start, params, t_end=500.0, n_samples=11)
        target = steady_state(params)
        self.assertEqual(len(trajectory), 11)
        self.assertAlmostEqual(trajectory.final.photon_number / target.photon_number, 1.0, places=3)

    def test_free_decay(self):
        """With g = 0 and no pump the inversion decays as 2 exp(-gamma t) - 1."""
        params = make_params(omega_c=1.0, omega_s=1.0, kappa_c=1.0, n_spins=10.0, g=0.0, gamma=0.5)
        trajectory = evolve(MeanFieldState(0.0, 0j, 1.0, 0j), params, t_end=2.0, tol=1e-10, n_samples=5)
        for t, state in zip(trajectory.times, trajectory.states):
            self.assertAlmostEqual(state.inversion, 2.0 * math.exp(-0.5 * t) - 1.0, places=7)

    def test_invalid_tolerance(self):
        """Tolerances outside (0, 1e-2] are rejected."""
        params = make_params(**LASING)
        with self.assertRaises(ParameterError):
            evolve(MeanFieldState.ground(), params, t_end=1.0, tol=0.1)
        with self.assertRaises(ParameterError):
            evolve(MeanFieldState.ground(), params, t_end=0.0)


class TestStateHelpers(unittest.TestCase):
    """State vectors and invariants."""

    def test_vector_layout(self):
        """CSV rows list n, Re c, Im c, sz, Re ss, Im ss after the key."""
        state = MeanFieldState(2.0, 0.5 - 0.25j, 0.1, 0.01 + 0j)
        self.assertEqual(state_row(7.0, state), [7.0, 2.0, 0.5, -0.25, 0.1, 0.01, 0.0])
        self.assertEqual(MeanFieldState.from_vector(state.to_vector()), state)

    def test_violations(self):
        """Unphysical moments are named."""
        state = MeanFieldState(-1.0, 0j, 1.5, 0j)
        self.assertEqual(state.violations(), ["photon_number<0", "|inversion|>1"])


if __name__ == '__main__':
    unittest.main()
