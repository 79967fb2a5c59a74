"""
Tests for thresholds, peak frequencies, Dicke numbers and regime labels.
"""

import math
import unittest

import numpy as np

from srmaser.analytics import (
    UNREACHABLE,
    RegimeLabel,
    classify_regime,
    dicke_numbers,
    dressed_frequencies,
    identical_poles,
    masing_threshold,
    narrow_pole,
    peak_frequencies,
    pulling_factor,
    resonant_R,
    threshold_photon_estimate,
)
from srmaser.errors import InvariantViolation, ParameterError
from srmaser.meanfield import steady_state
from srmaser.model import derive_rates, load_preset, make_params

LASING = dict(omega_c=1.0, omega_s=1.0, kappa_c=1.0, n_spins=1000.0, g=0.05, gamma=0.01, eta=1.0)


class TestMasingThreshold(unittest.TestCase):
    """Threshold pump rate."""

    def setUp(self):
        self.breeze = load_preset("breeze2018").params

    def test_breeze_room_temperature(self):
        """At 293 K the default threshold is about 160 gamma."""
        params = self.breeze.with_updates(temperature=293.0)
        ratio = masing_threshold(params) / params.gamma
        self.assertGreater(ratio, 144.0)
        self.assertLess(ratio, 176.0)
        self.assertEqual(masing_threshold(params), masing_threshold(params, form="large_cooperativity"))

    def test_full_form_at_room_temperature(self):
        """The full form keeps the 1 + N C terms and lands near 186 gamma at 293 K."""
        params = self.breeze.with_updates(temperature=293.0)
        ratio = masing_threshold(params, form="full") / params.gamma
        self.assertAlmostEqual(ratio, 186.0, delta=2.0)
        self.assertGreater(masing_threshold(params, form="full"), masing_threshold(params))

    def test_breeze_millikelvin(self):
        """At 25 mK the threshold drops to about gamma."""
        params = self.breeze.with_updates(temperature=0.025)
        ratio = masing_threshold(params) / params.gamma
        self.assertAlmostEqual(ratio, 1.0, delta=0.1)

    def test_unreachable(self):
        """N C <= 1 means no finite threshold."""
        params = make_params(**{**LASING, "n_spins": 10.0})
        self.assertLessEqual(params.n_spins * derive_rates(params.with_updates(eta=0.0)).cooperativity, 1.0)
        self.assertEqual(masing_threshold(params), UNREACHABLE)

    def test_ignores_pump(self):
        """The default threshold is evaluated without pump broadening."""
        a = make_params(**LASING)
        b = a.with_updates(eta=5.0)
        self.assertEqual(masing_threshold(a), masing_threshold(b))

    def test_self_consistent(self):
        """The self-consistent threshold is a fixed point of eta -> threshold(eta)."""
        params = make_params(**LASING)
        eta = masing_threshold(params, form="full", self_consistent=True)
        rates = derive_rates(params.with_updates(eta=eta))
        nc = params.n_spins * rates.cooperativity
        expected = params.gamma * (2.0 * rates.n_k_th + 1.0 + nc) / (nc - 1.0)
        self.assertAlmostEqual(eta / expected, 1.0, places=9)
        self.assertGreaterEqual(eta, masing_threshold(params, form="full"))

    def test_unknown_form(self):
        """Unknown forms are rejected."""
        with self.assertRaises(ParameterError):
            masing_threshold(make_params(**LASING), form="exact")


class TestPhotonEstimate(unittest.TestCase):
    """Near-threshold quadratic."""

    def test_uncoupled_root(self):
        """Without coupling the quadratic root is the thermal occupation."""
        params = load_preset("breeze2018").params.with_updates(g=0.0, temperature=293.0)
        estimate = threshold_photon_estimate(params)
        self.assertEqual(estimate.a, 0.0)
        self.assertAlmostEqual(estimate.quadratic_root / derive_rates(params).n_c_th, 1.0, places=12)

    def test_tracks_steady_state(self):
        """Far above threshold -B/A is close to the steady photon number."""
        params = make_params(**LASING)
        estimate = threshold_photon_estimate(params)
        steady = steady_state(params)
        self.assertAlmostEqual(estimate.photon_number / steady.photon_number, 1.0, delta=0.25)
        self.assertGreater(estimate.quadratic_root, 0.0)


class TestPeakFrequencies(unittest.TestCase):
    """Complex peak frequencies and poles."""

    def test_uncoupled_peaks(self):
        """With g = 0 the peaks sit at the bare resonator and spin lines."""
        params = make_params(**{**LASING, "g": 0.0})
        lam = derive_rates(params).lambda_s
        plus, minus = peak_frequencies(params, 0.5, relative=True)
        self.assertAlmostEqual(plus.imag, max(lam, 0.5), places=12)
        self.assertAlmostEqual(minus.imag, min(lam, 0.5), places=12)
        self.assertAlmostEqual(plus.real, 0.0, places=12)

    def test_absolute_frequencies(self):
        """Without ``relative`` the resonator frequency is added."""
        params = make_params(**LASING)
        plus_rel, _ = peak_frequencies(params, 0.1, relative=True)
        plus_abs, _ = peak_frequencies(params, 0.1)
        self.assertAlmostEqual(plus_abs - plus_rel, params.omega_c)

    def test_poles_match_peak_frequencies(self):
        """The pole matrix eigenvalues are the two peak frequencies."""
        params = make_params(**{**LASING, "omega_s": 1.3})
        peaks = sorted(peak_frequencies(params, 0.2, relative=True), key=lambda z: z.real)
        poles = identical_poles(params, 0.2)
        np.testing.assert_allclose(poles, peaks, atol=1e-12)

    def test_narrow_pole(self):
        """The narrowest pole has the smallest imaginary part."""
        poles = np.array([1.0 + 0.5j, -1.0 + 0.01j, 0.0 + 2.0j])
        self.assertEqual(narrow_pole(poles), -1.0 + 0.01j)

    def test_inversion_bound(self):
        """|inversion| > 1 is rejected."""
        with self.assertRaises(ParameterError):
            peak_frequencies(make_params(**LASING), 1.5)

    def test_resonant_r(self):
        """The inversion and M forms agree when 2M = N sz."""
        params = make_params(**LASING)
        sz = 0.3
        self.assertAlmostEqual(resonant_R(params, inversion=sz),
                               resonant_R(params, m=0.5 * params.n_spins * sz), places=12)
        with self.assertRaises(ParameterError):
            resonant_R(params)


class TestDicke(unittest.TestCase):
    """Cooperation number and excitation."""

    def test_fully_inverted(self):
        """Uncorrelated fully inverted spins have J^2 = N(N+2)/4, M = N/2."""
        n = 100.0
        coordinates = dicke_numbers(1.0, 0j, n)
        self.assertAlmostEqual(coordinates.j ** 2, n * (n + 2.0) / 4.0, places=9)
        self.assertEqual(coordinates.m, 50.0)
        self.assertTrue(coordinates.within_bounds())

    def test_superradiant_state(self):
        """Maximal correlations at sz = 0 give J close to N/2."""
        coordinates = dicke_numbers(0.0, 0.25 + 0j, 1e6)
        self.assertAlmostEqual(coordinates.j_over_n, 0.5, places=5)
        self.assertEqual(coordinates.m_over_n, 0.0)

    def test_negative_radicand(self):
        """Strongly negative correlations are an invariant violation."""
        with self.assertRaises(InvariantViolation):
            dicke_numbers(0.0, -0.5 + 0j, 100.0)

    def test_clipping(self):
        """A tiny negative radicand is clipped to zero and flagged."""
        n = 1e6
        s = -(0.75 * n) / (n * (n - 1.0)) - 1e-15
        coordinates = dicke_numbers(0.0, complex(s, 0.0), n)
        self.assertTrue(coordinates.clipped)
        self.assertEqual(coordinates.j, 0.0)

    def test_dressed_frequencies(self):
        """At J = 0 on resonance both dressed lines coincide."""
        plus, minus = dressed_frequencies(0.0, 1.0, 5.0, 5.0)
        self.assertEqual((plus, minus), (5.0, 5.0))
        plus, minus = dressed_frequencies(2.0, 0.5, 5.0, 5.0)
        self.assertAlmostEqual(plus - minus, 2.0, places=12)


class TestRegimes(unittest.TestCase):
    """Regime labels and frequency pulling."""

    def test_masing_label(self):
        """A pumped point above threshold is a superradiant maser."""
        params = make_params(**LASING)
        self.assertIs(classify_regime(params, steady_state(params)), RegimeLabel.SUPERRADIANT_MASER)

    def test_unpumped_cold_label(self):
        """A cold unpumped ensemble is not masing."""
        params = make_params(**{**LASING, "eta": 0.0})
        self.assertIs(classify_regime(params, steady_state(params)), RegimeLabel.SUPERRADIANCE)

    def test_thermal_label(self):
        """The room-temperature unpumped maser holds a thermal field."""
        params = load_preset("breeze2018").params.with_updates(temperature=293.0, eta=0.0)
        self.assertIs(classify_regime(params, steady_state(params)), RegimeLabel.THERMAL)

    def test_pulling_factor(self):
        """The masing line follows the spins only partially."""
        params = make_params(**LASING)
        slope = pulling_factor(params, [-0.2, -0.1, 0.0, 0.1, 0.2], solver=steady_state)
        self.assertGreater(slope, 0.0)
        self.assertLess(slope, 1.0)

    def test_breeze_pulling_factor(self):
        """Breeze at 25 mK and eta = 10 gamma pulls the masing line by about a quarter of the detuning."""
        base = load_preset("breeze2018").params
        params = base.with_updates(temperature=0.025, eta=10.0 * base.gamma)
        slope = pulling_factor(params, np.linspace(0.0, 2.0 * params.chi, 5))
        self.assertAlmostEqual(slope, 0.25, delta=0.1)

    def test_pulling_factor_needs_masing_points(self):
        """Below threshold no grid point qualifies."""
        params = make_params(**{**LASING, "eta": 0.0})
        with self.assertRaises(ParameterError):
            pulling_factor(params, [-0.1, 0.1], solver=steady_state)


if __name__ == '__main__':
    unittest.main()
