"""
srmaser - superradiant spin-ensemble maser simulator

Second-order mean-field model of an incoherently pumped spin ensemble in a
lossy microwave resonator: steady states, emission spectra and linewidths,
masing thresholds, Dicke-state diagnostics, and an exact small-N check of
the mean-field closure.
"""

from srmaser.analytics import dicke_numbers, masing_threshold, peak_frequencies, pulling_factor
from srmaser.config import load_config
from srmaser.meanfield import MeanFieldState, evolve, steady_state
from srmaser.model import SystemParams, derive_rates, load_preset, make_params, thermal_occupation
from srmaser.spectrum import extract_linewidth, scan_spectrum
from srmaser.subensemble import discretize_gaussian, steady_state_subensembles

__version__ = "0.1.0"
__all__ = [
    "MeanFieldState",
    "SystemParams",
    "derive_rates",
    "dicke_numbers",
    "discretize_gaussian",
    "evolve",
    "extract_linewidth",
    "load_config",
    "load_preset",
    "make_params",
    "masing_threshold",
    "peak_frequencies",
    "pulling_factor",
    "scan_spectrum",
    "steady_state",
    "steady_state_subensembles",
    "thermal_occupation",
]
