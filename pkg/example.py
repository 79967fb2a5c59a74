"""
Example usage of srmaser as a Python library.
"""

from srmaser import (
    discretize_gaussian,
    load_preset,
    masing_threshold,
    scan_spectrum,
    steady_state,
    steady_state_subensembles,
)
from srmaser.analytics import classify_regime, dicke_numbers

# Example 1: Threshold of a reference experiment
print("=" * 60)
print("Example 1: Masing Threshold")
print("=" * 60)
preset = load_preset("breeze2018")
params = preset.params
print(f"Preset: {preset.name} ({preset.coupling_regime.value} coupling)")
for form in ("full", "large_cooperativity"):
    eta_th = masing_threshold(params, form=form)
    print(f"  {form:<20} eta_th = {eta_th / params.gamma:.1f} gamma")
print()

# Example 2: Steady state and linewidth at strong pumping, millikelvin bath
print("=" * 60)
print("Example 2: Steady State and Spectrum")
print("=" * 60)
cold = params.with_updates(temperature=0.025, eta=1e3 * params.gamma)
steady = steady_state(cold)
print(f"Photon number: {steady.photon_number:.4g}")
print(f"Inversion:     {steady.inversion:.4g}")
print(f"Regime:        {classify_regime(cold, steady).value}")
dicke = dicke_numbers(steady.inversion, steady.spin_spin, cold.n_spins)
print(f"Dicke j/N = {dicke.j_over_n:.4g}, m/N = {dicke.m_over_n:.4g}")

spectrum = scan_spectrum(steady, cold)
line = spectrum.narrowest_peak()
if line is not None:
    print(f"Line offset: {line.offset:.4g} rad/s, FWHM: {line.fwhm:.4g} rad/s")
print()

# Example 3: Inhomogeneous line as 50 frequency classes
print("=" * 60)
print("Example 3: Sub-Ensemble Model")
print("=" * 60)
model = discretize_gaussian(4e13, chi_inh=2 * 3.141592653589793 * 4e6, n_classes=50,
                            center=cold.omega_s, params=cold)
print(f"Classes: {model.size}, spins: {sum(c.count for c in model.classes)}")
state = steady_state_subensembles(model)
print(f"Photon number: {state.photon_number:.4g}")
for peak in scan_spectrum(state, model).peaks:
    print(f"  peak at {peak.offset:+.4g} rad/s  FWHM {peak.fwhm:.4g} rad/s  height {peak.height:.4g}")
