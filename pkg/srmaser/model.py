"""
Physical parameters, derived rates, experiment presets and the NV level helper.

Every frequency and rate is stored as an angular quantity (rad/s). Catalog
values and ``units = hertz`` config files are converted on load.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, ValidationError, field_validator, model_validator
from scipy.constants import hbar, k as k_boltzmann, physical_constants

from srmaser.catalog import get_backend
from srmaser.errors import ParameterError
from srmaser.logger_config import get_logger

logger = get_logger(__name__)

TWO_PI = 2.0 * math.pi

RATE_FIELDS = ("kappa_c", "g", "gamma", "chi", "eta", "filter_G", "filter_kappa")
FREQUENCY_FIELDS = ("omega_c", "omega_s")

DEFAULT_GAMMA = 0.157


class SystemParams(BaseModel):
    """Resonator, spin, pump, bath and filter parameters (angular units)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    omega_c: float
    kappa_c: float
    n_spins: float
    omega_s: float
    g: float
    gamma: float = DEFAULT_GAMMA
    chi: float = 0.0
    eta: float = 0.0
    temperature: float = 0.0
    filter_G: float = 1.0
    filter_kappa: float = 100.0

    @field_validator("*")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("must be finite")
        return float(value)

    @model_validator(mode="after")
    def _check_ranges(self) -> "SystemParams":
        for name in RATE_FIELDS:
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.omega_c <= 0:
            raise ValueError("omega_c must be > 0")
        if self.omega_s < 0:
            raise ValueError("omega_s must be >= 0")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.n_spins < 1:
            raise ValueError("n_spins must be >= 1")
        return self

    @property
    def detuning(self) -> float:
        """Spin-resonator detuning omega_s - omega_c."""
        return self.omega_s - self.omega_c

    def with_updates(self, **changes: float) -> "SystemParams":
        """Return a validated copy with some fields replaced."""
        return make_params(**{**self.model_dump(), **changes})


def make_params(**values: float) -> SystemParams:
    """Build SystemParams, reporting invariant violations as ParameterError."""
    try:
        return SystemParams(**values)
    except ValidationError as exc:
        raise ParameterError(str(exc)) from exc


@dataclass(frozen=True)
class DerivedRates:
    n_c_th: float
    n_k_th: float
    lambda_s: float
    gamma_purcell: float
    k_eet: float
    cooperativity: float
    total_relaxation: float
    collective_coupling: float
    resonant_k_eet: float


class CouplingRegime(str, Enum):
    STRONG = "strong"
    WEAK = "weak"


@dataclass(frozen=True)
class ExperimentPreset:
    name: str
    params: SystemParams
    coupling_regime: CouplingRegime
    reference: str = ""
    assumed: Tuple[str, ...] = ()
    reported: Dict[str, float] = field(default_factory=dict)
    table_inconsistent: Tuple[str, ...] = ()
    notes: str = ""


def thermal_occupation(omega: float, temperature: float) -> float:
    """
    Bose-Einstein occupation 1/(exp(hbar*omega/k_B T) - 1).

    Args:
        omega: Angular frequency (rad/s), > 0
        temperature: Bath temperature (K), >= 0

    Returns:
        Mean thermal excitation number; 0 at zero temperature.
    """
    if not (math.isfinite(omega) and math.isfinite(temperature)):
        raise ParameterError(f"non-finite input omega={omega} temperature={temperature}")
    if omega <= 0:
        raise ParameterError(f"omega must be > 0, got {omega}")
    if temperature < 0:
        raise ParameterError(f"temperature must be >= 0, got {temperature}")
    if temperature == 0:
        return 0.0
    x = hbar * omega / (k_boltzmann * temperature)
    if x > 700.0:
        return math.exp(-x)
    return 1.0 / math.expm1(x)


def energy_transfer_rate(g: float, lambda_s: float, kappa_c: float, detuning: float) -> float:
    """Spin-to-resonator energy transfer rate 2g^2(l+k/2)/(d^2+(l+k/2)^2)."""
    width = lambda_s + 0.5 * kappa_c
    denominator = detuning * detuning + width * width
    if g == 0.0:
        return 0.0
    if denominator == 0.0:
        return math.inf
    return 2.0 * g * g * width / denominator


def derive_rates(params: SystemParams) -> DerivedRates:
    """
    Compute thermal occupations and the composite rates used throughout.

    Args:
        params: System parameters

    Returns:
        DerivedRates with n_th, lambda_s, Purcell rate, k_EET and cooperativity.
    """
    n_c_th = thermal_occupation(params.omega_c, params.temperature)
    n_k_th = thermal_occupation(params.omega_s, params.temperature) if params.omega_s > 0 else 0.0
    total_relaxation = params.gamma * (2.0 * n_k_th + 1.0) + params.eta
    lambda_s = 0.5 * total_relaxation + params.chi

    if params.kappa_c > 0:
        gamma_purcell = 4.0 * params.g ** 2 / params.kappa_c
    else:
        gamma_purcell = math.inf if params.g > 0 else 0.0

    k_eet = energy_transfer_rate(params.g, lambda_s, params.kappa_c, params.detuning)
    resonant_k_eet = energy_transfer_rate(params.g, lambda_s, params.kappa_c, 0.0)
    if params.kappa_c > 0:
        cooperativity = 2.0 * k_eet / params.kappa_c
    else:
        cooperativity = math.inf if k_eet > 0 else 0.0

    return DerivedRates(
        n_c_th=n_c_th,
        n_k_th=n_k_th,
        lambda_s=lambda_s,
        gamma_purcell=gamma_purcell,
        k_eet=k_eet,
        cooperativity=cooperativity,
        total_relaxation=total_relaxation,
        collective_coupling=collective_coupling(params),
        resonant_k_eet=resonant_k_eet,
    )


def collective_coupling(params: SystemParams) -> float:
    """Collective coupling sqrt(N) g in rad/s."""
    return math.sqrt(params.n_spins) * params.g


def coupling_regime(params: SystemParams) -> CouplingRegime:
    """Strong iff sqrt(N) g exceeds both kappa_c and chi."""
    omega = collective_coupling(params)
    if omega > params.kappa_c and omega > params.chi:
        return CouplingRegime.STRONG
    return CouplingRegime.WEAK


# NV- ground state constants
ZERO_FIELD_SPLITTING = TWO_PI * 2.87e9
ELECTRON_G = 2.0
BOHR_MAGNETON = physical_constants["Bohr magneton"][0]
NUCLEAR_MAGNETON = physical_constants["nuclear magneton"][0]
NITROGEN14_G = 0.403761
HYPERFINE_PERPENDICULAR_HZ = -2.7e6
HYPERFINE_PARALLEL_HZ = -2.1e6


@dataclass(frozen=True)
class LevelStructure:
    """
    NV- ground-state levels for a field along the N-V axis.

    ``electron`` maps "0", "+1", "-1" to angular frequencies; ``hyperfine`` maps
    "m_s,m_I" labels (e.g. "-1,+1") to angular frequencies.
    """

    field_tesla: float
    electron: Dict[str, float]
    hyperfine: Dict[str, float]
    transitions: List[Tuple[str, float]]
    inverted_ordering: bool
    a_parallel_hz: float = HYPERFINE_PARALLEL_HZ
    a_perpendicular_hz: float = HYPERFINE_PERPENDICULAR_HZ

    def transition_hz(self, label: str) -> float:
        for name, omega in self.transitions:
            if name == label:
                return omega / TWO_PI
        raise KeyError(label)


def nv_level_structure(field_tesla: float) -> LevelStructure:
    """
    Electron and electron-nuclear level frequencies of the NV- ground state.

    Zeeman terms are converted with E/hbar; the hyperfine constant A_par is a
    frequency and enters as 2*pi*A_par.
    """
    if not math.isfinite(field_tesla) or field_tesla < 0:
        raise ParameterError(f"field must be finite and >= 0, got {field_tesla}")

    zeeman = ELECTRON_G * BOHR_MAGNETON * field_tesla / hbar
    nuclear = NITROGEN14_G * NUCLEAR_MAGNETON * field_tesla / hbar
    a_parallel = TWO_PI * HYPERFINE_PARALLEL_HZ

    omega_0 = -2.0 * ZERO_FIELD_SPLITTING / 3.0
    omega_plus = ZERO_FIELD_SPLITTING / 3.0 + zeeman
    omega_minus = ZERO_FIELD_SPLITTING / 3.0 - zeeman

    hyperfine = {
        "0,0": omega_0,
        "0,+1": omega_0 - nuclear,
        "0,-1": omega_0 + nuclear,
        "-1,0": omega_minus,
        "-1,+1": omega_minus + (nuclear - a_parallel),
        "-1,-1": omega_minus - (nuclear - a_parallel),
    }
    transitions = [
        (f"0,{m} <-> -1,{m}", abs(hyperfine[f"0,{m}"] - hyperfine[f"-1,{m}"]))
        for m in ("-1", "0", "+1")
    ]
    inverted = omega_minus < omega_0
    if inverted:
        logger.debug(f"NV levels inverted | B={field_tesla:.4g} T")
    return LevelStructure(
        field_tesla=field_tesla,
        electron={"0": omega_0, "+1": omega_plus, "-1": omega_minus},
        hyperfine=hyperfine,
        transitions=transitions,
        inverted_ordering=inverted,
    )


def _angular(value: float, units: str) -> float:
    return value * TWO_PI if units == "hertz" else value


def preset_from_record(record: Dict, defaults: Dict, units: str = "hertz") -> ExperimentPreset:
    """Convert one catalog record into an ExperimentPreset."""
    filter_units = defaults.get("filter_units", "angular")
    values = {
        "omega_c": _angular(record["omega_c"], units),
        "kappa_c": _angular(record["kappa_c"], units),
        "n_spins": float(record["n_spins"]),
        "chi": _angular(record["chi"], units),
        "g": _angular(record["g"], units),
        "gamma": _angular(record.get("gamma", defaults.get("gamma", DEFAULT_GAMMA)),
                          units if "gamma" in record else defaults.get("gamma_units", "angular")),
        "eta": float(defaults.get("eta", 0.0)),
        "temperature": float(record.get("temperature", defaults.get("temperature", 0.0))),
        "filter_G": _angular(defaults.get("filter_G", 1.0), filter_units),
        "filter_kappa": _angular(defaults.get("filter_kappa", 100.0), filter_units),
    }
    values["omega_s"] = values["omega_c"]
    params = make_params(**values)

    assumed = list(record.get("assumed", []))
    if "gamma" not in record:
        assumed.append("gamma")
    return ExperimentPreset(
        name=record["name"],
        params=params,
        coupling_regime=coupling_regime(params),
        reference=record.get("reference", ""),
        assumed=tuple(assumed),
        reported=dict(record.get("reported", {})),
        table_inconsistent=tuple(record.get("table_inconsistent", [])),
        notes=record.get("notes", ""),
    )


def load_preset(name: str) -> ExperimentPreset:
    """
    Load a reference experiment from the embedded catalog.

    Args:
        name: Preset identifier, e.g. "breeze2018"

    Returns:
        ExperimentPreset; spins resonant with the resonator, eta = 0.

    Raises:
        UnknownPresetError: name not in the catalog
    """
    backend = get_backend()
    record = backend.get_preset(name)
    return preset_from_record(record, backend.get_defaults(), backend.units)


def list_presets() -> List[ExperimentPreset]:
    """All catalog presets in catalog order."""
    backend = get_backend()
    return [preset_from_record(r, backend.get_defaults(), backend.units) for r in backend.get_presets()]
