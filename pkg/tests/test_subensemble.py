"""
Tests for the frequency-class ensemble model.
"""

import unittest

import numpy as np

from srmaser.errors import ParameterError
from srmaser.meanfield import steady_state
from srmaser.model import load_preset, make_params
from srmaser.spectrum import FilterSystem
from srmaser.subensemble import (
    FrequencyClass,
    SubEnsembleModel,
    SubEnsembleState,
    dicke_per_class,
    discretize_gaussian,
    evolve_subensembles,
    homogeneous_model,
    model_rows,
    split_class,
    state_document,
    steady_state_subensembles,
)

LASING = dict(omega_c=1.0, omega_s=1.0, kappa_c=1.0, n_spins=1000.0, g=0.05, gamma=0.01, eta=1.0)


def two_class_model(eta=0.0, temperature=0.0):
    classes = [
        FrequencyClass(count=500, detuning=-0.1, g=0.05, gamma=0.01, chi=0.0, eta=eta),
        FrequencyClass(count=500, detuning=0.1, g=0.05, gamma=0.01, chi=0.0, eta=eta),
    ]
    return SubEnsembleModel(classes=tuple(classes), omega_c=1.0, kappa_c=1.0, temperature=temperature)


class TestDiscretization(unittest.TestCase):
    """Gaussian class grids."""

    def setUp(self):
        self.params = load_preset("breeze2018").params

    def test_breeze_grid(self):
        """50 classes keep the exact spin total and a per-class dephasing 2 chi/M."""
        model = discretize_gaussian(4e13, 4e6, 50, self.params.omega_s, params=self.params)
        counts = [c.count for c in model.classes]
        self.assertEqual(model.size, 50)
        self.assertEqual(sum(counts), 40_000_000_000_000)
        self.assertTrue(all(isinstance(c, int) and c >= 1 for c in counts))
        self.assertAlmostEqual(model.classes[0].chi, 0.16e6, places=6)

    def test_symmetric_counts(self):
        """Mirror classes hold equal counts and the central classes the most."""
        model = discretize_gaussian(4e13, 4e6, 50, self.params.omega_s, params=self.params)
        counts = [c.count for c in model.classes]
        self.assertEqual(counts, counts[::-1])
        self.assertEqual(max(counts), counts[24])
        detunings = model.column("detuning")
        np.testing.assert_allclose(detunings, -detunings[::-1], atol=1e-6)

    def test_single_class(self):
        """One class holds every spin at the line center."""
        model = discretize_gaussian(1000, 1.0, 1, self.params.omega_s, params=self.params)
        self.assertEqual(model.classes[0].count, 1000)
        self.assertAlmostEqual(model.classes[0].detuning, self.params.detuning, places=6)

    def test_invalid_inputs(self):
        """Non-integral totals and too few spins are rejected."""
        with self.assertRaises(ParameterError):
            discretize_gaussian(1000.5, 1.0, 10, 0.0, params=self.params)
        with self.assertRaises(ParameterError):
            discretize_gaussian(5, 1.0, 10, 0.0, params=self.params)
        with self.assertRaises(ParameterError):
            discretize_gaussian(1000, 0.0, 10, 0.0, params=self.params)

    def test_split_class(self):
        """Splitting one class preserves the spin total and ordering."""
        model = discretize_gaussian(10_000, 1e6, 11, self.params.omega_s, params=self.params)
        split = split_class(model, 5, 4, 1e-2)
        self.assertEqual(split.size, 14)
        self.assertEqual(sum(c.count for c in split.classes), 10_000)
        self.assertEqual(split.n_total, 10_000)
        self.assertEqual(split_class(model, 5, 1, 1e-2), model)

    def test_split_needs_spread(self):
        """More than one sub-class at zero spread would break the frequency ordering."""
        model = discretize_gaussian(10_000, 1e6, 11, self.params.omega_s, params=self.params)
        with self.assertRaises(ParameterError):
            split_class(model, 5, 5, 0.0)
        with self.assertRaises(ParameterError):
            split_class(model, 5, 5, -1e-3)
        self.assertEqual(split_class(model, 5, 1, 0.0), model)


class TestModelValidation(unittest.TestCase):
    """SubEnsembleModel invariants."""

    def test_unsorted_classes(self):
        """Class frequencies must increase."""
        classes = (FrequencyClass(1, 0.1, 0.1, 0.1), FrequencyClass(1, -0.1, 0.1, 0.1))
        with self.assertRaises(ParameterError):
            SubEnsembleModel(classes=classes, omega_c=1.0, kappa_c=1.0)

    def test_count_mismatch(self):
        """A stated total must match the class counts."""
        classes = (FrequencyClass(1, 0.0, 0.1, 0.1),)
        with self.assertRaises(ParameterError):
            SubEnsembleModel(classes=classes, omega_c=1.0, kappa_c=1.0, n_total=2.0)

    def test_too_many_classes(self):
        """More than 100 classes are rejected."""
        classes = tuple(FrequencyClass(1, float(i), 0.1, 0.1) for i in range(101))
        with self.assertRaises(ParameterError):
            SubEnsembleModel(classes=classes, omega_c=1.0, kappa_c=1.0)

    def test_mirrored(self):
        """Mirroring reverses the class order and flips detunings."""
        model = two_class_model()
        self.assertEqual(model.mirrored().column("detuning").tolist(), [-0.1, 0.1])


class TestSteadyState(unittest.TestCase):
    """Class-resolved steady states."""

    def test_single_class_matches_identical_model(self):
        """One class reproduces the identical-spin steady state."""
        params = make_params(**LASING)
        reference = steady_state(params)
        state = steady_state_subensembles(homogeneous_model(params))
        self.assertAlmostEqual(state.photon_number / reference.photon_number, 1.0, places=6)
        self.assertAlmostEqual(state.inversion[0], reference.inversion, places=7)
        self.assertAlmostEqual(state.spin_spin[0, 0].real, reference.spin_spin.real, places=7)

    def test_unpumped_ground_state(self):
        """Without pump at T = 0 every class stays in its ground state."""
        state = steady_state_subensembles(two_class_model())
        self.assertAlmostEqual(state.photon_number, 0.0, places=10)
        np.testing.assert_allclose(state.inversion, [-1.0, -1.0], atol=1e-10)

    def test_symmetric_pumped_pair(self):
        """A mirror-symmetric pumped pair gives a Hermitian, symmetric solution."""
        model = two_class_model(eta=1.0)
        state = steady_state_subensembles(model)
        self.assertGreater(state.photon_number, 1.0)
        self.assertLess(state.hermiticity_error(), 1e-9)
        self.assertAlmostEqual(state.inversion[0], state.inversion[1], places=6)
        self.assertEqual(state.violations(), [])

    def test_matches_integration(self):
        """The steady state agrees with long-time integration."""
        model = two_class_model(eta=1.0)
        state = steady_state_subensembles(model)
        trajectory = evolve_subensembles(model, None, t_end=2000.0, n_samples=3)
        self.assertAlmostEqual(trajectory.final.photon_number / state.photon_number, 1.0, places=3)

    def test_needs_dissipation(self):
        """A lossless resonator has no steady state."""
        model = SubEnsembleModel(classes=two_class_model().classes, omega_c=1.0, kappa_c=0.0)
        with self.assertRaises(ParameterError):
            steady_state_subensembles(model)

    def test_pumped_state_is_stable(self):
        """No spectral pole of the pumped pair amplifies."""
        model = two_class_model(eta=1.0)
        state = steady_state_subensembles(model)
        poles = FilterSystem.subensemble(state, model).poles()
        self.assertGreater(float(np.min(poles.imag)), -1e-9)

    def test_sharp_threshold_reaches_masing_branch(self):
        """Far above a sharp threshold the classes settle on the masing branch."""
        params = make_params(omega_c=1.0, omega_s=1.0, kappa_c=1.0, n_spins=9e7, g=1e-3, gamma=1e-3, eta=0.1)
        classes = [FrequencyClass(count=3e7, detuning=d, g=1e-3, gamma=1e-3, eta=0.1) for d in (-1e-3, 0.0, 1e-3)]
        model = SubEnsembleModel.from_params(params, classes)
        state = steady_state_subensembles(model)
        reference = steady_state(params)
        self.assertEqual(state.violations(), [])
        self.assertGreater(state.photon_number, 1e6)
        self.assertAlmostEqual(state.photon_number / reference.photon_number, 1.0, places=2)
        poles = FilterSystem.subensemble(state, model).poles()
        self.assertGreater(float(np.min(poles.imag)), -1e-6)

    def test_warm_start_from_other_pump(self):
        """A below-threshold guess still leads to the pumped state."""
        weak = steady_state_subensembles(two_class_model(eta=0.005))
        strong = steady_state_subensembles(two_class_model(eta=1.0), guess=weak)
        reference = steady_state_subensembles(two_class_model(eta=1.0))
        self.assertAlmostEqual(strong.photon_number / reference.photon_number, 1.0, places=6)


class TestReporting(unittest.TestCase):
    """Rows, documents and Dicke numbers."""

    def test_thermal_state(self):
        """The uncorrelated state has thermal inversion and no correlations."""
        model = two_class_model(eta=0.02)
        state = SubEnsembleState.thermal(model)
        np.testing.assert_allclose(state.inversion, [1.0 / 3.0, 1.0 / 3.0])
        self.assertEqual(state.hermiticity_error(), 0.0)
        coordinates = dicke_per_class(state, model)
        self.assertAlmostEqual(coordinates[0].m, 500 / 6.0)
        self.assertTrue(all(c.within_bounds() for c in coordinates))

    def test_document_and_rows(self):
        """Model rows and state documents carry every class."""
        model = two_class_model(eta=0.02)
        state = SubEnsembleState.thermal(model)
        document = state_document(state, model)
        self.assertEqual(document["counts"], [500, 500])
        self.assertEqual(len(document["spin_spin"]), 2)
        self.assertEqual(model_rows(model)[1][:3], [1, 500, 0.1])


if __name__ == '__main__':
    unittest.main()
